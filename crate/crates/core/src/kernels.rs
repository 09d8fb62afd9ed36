//! Low-level numeric kernels shared by the forward and backward passes.
//!
//! All spatial arrays are channel-major (`C×H×W`).

/// `c = alpha * op(a) * op(b) + beta * c` for row-major operands.
///
/// `a` is `m×k` (or `k×m` when `trans_a`), `b` is `k×n` (or `n×k` when
/// `trans_b`), `c` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the slices; `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Returns `None` when the kernel does not fit the padded input.
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        let out = |n: usize| {
            let padded = n + 2 * pad;
            if padded < kernel || stride == 0 {
                None
            } else {
                Some((padded - kernel) / stride + 1)
            }
        };
        Some(ConvGeom {
            in_c,
            in_h,
            in_w,
            out_c,
            kernel,
            stride,
            pad,
            out_h: out(in_h)?,
            out_w: out(in_w)?,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

pub fn im2col(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let n = g.col_cols();
    let mut cols = vec![0.0; g.col_rows() * n];
    for c in 0..g.in_c {
        let plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let dst_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates column gradients into `grad_input`.
pub fn col2im_add(cols: &[f64], g: &ConvGeom, grad_input: &mut [f64]) {
    let n = g.col_cols();
    for c in 0..g.in_c {
        let plane = &mut grad_input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst_row[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution. Returns the output and the column buffer.
pub fn conv2d(input: &[f64], weight: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(input, g);
    let n = g.col_cols();
    let mut out = vec![0.0; g.out_c * n];
    if let Some(b) = bias {
        for (o, chunk) in out.chunks_mut(n).enumerate() {
            chunk.fill(b[o]);
        }
    }
    gemm(
        g.out_c,
        g.col_rows(),
        n,
        1.0,
        weight,
        false,
        &cols,
        false,
        1.0,
        &mut out,
    );
    (out, cols)
}

/// One axis of a bilinear resampling plan (half-pixel centres, edge clamp).
#[derive(Clone, Debug)]
pub struct AxisPlan {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    pub frac: Vec<f64>,
}

impl AxisPlan {
    pub fn new(input: usize, output: usize) -> Self {
        let scale = input as f64 / output as f64;
        let mut plan = AxisPlan {
            lo: Vec::with_capacity(output),
            hi: Vec::with_capacity(output),
            frac: Vec::with_capacity(output),
        };
        for i in 0..output {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            plan.lo.push(lo);
            plan.hi.push(hi);
            plan.frac.push(src - lo as f64);
        }
        plan
    }
}

#[derive(Clone, Debug)]
pub struct ResizePlan {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    rows: AxisPlan,
    cols: AxisPlan,
}

impl ResizePlan {
    pub fn new(channels: usize, in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Self {
        ResizePlan {
            channels,
            in_h,
            in_w,
            out_h,
            out_w,
            rows: AxisPlan::new(in_h, out_h),
            cols: AxisPlan::new(in_w, out_w),
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.channels * self.out_h * self.out_w];
        for c in 0..self.channels {
            let src = &input[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            let dst = &mut out[c * self.out_h * self.out_w..(c + 1) * self.out_h * self.out_w];
            for y in 0..self.out_h {
                let (y0, y1, fy) = (self.rows.lo[y], self.rows.hi[y], self.rows.frac[y]);
                for x in 0..self.out_w {
                    let (x0, x1, fx) = (self.cols.lo[x], self.cols.hi[x], self.cols.frac[x]);
                    let top = src[y0 * self.in_w + x0] * (1.0 - fx) + src[y0 * self.in_w + x1] * fx;
                    let bot = src[y1 * self.in_w + x0] * (1.0 - fx) + src[y1 * self.in_w + x1] * fx;
                    dst[y * self.out_w + x] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
        out
    }

    pub fn backward_add(&self, grad_out: &[f64], grad_in: &mut [f64]) {
        for c in 0..self.channels {
            let g = &grad_out[c * self.out_h * self.out_w..(c + 1) * self.out_h * self.out_w];
            let dst = &mut grad_in[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for y in 0..self.out_h {
                let (y0, y1, fy) = (self.rows.lo[y], self.rows.hi[y], self.rows.frac[y]);
                for x in 0..self.out_w {
                    let (x0, x1, fx) = (self.cols.lo[x], self.cols.hi[x], self.cols.frac[x]);
                    let v = g[y * self.out_w + x];
                    dst[y0 * self.in_w + x0] += v * (1.0 - fy) * (1.0 - fx);
                    dst[y0 * self.in_w + x1] += v * (1.0 - fy) * fx;
                    dst[y1 * self.in_w + x0] += v * fy * (1.0 - fx);
                    dst[y1 * self.in_w + x1] += v * fy * fx;
                }
            }
        }
    }
}
