//! Quadrant-level source / labeled-target mixing.
//!
//! Images are cut into four equal quadrants (top-left, top-right,
//! bottom-left, bottom-right) and recombined in one of four configurations
//! chosen by the training iteration modulo 4. Both mixed images are treated
//! downstream as source samples.

use crate::data::{ImageTensor, LabelMap};
use crate::error::{Error, Result};
use crate::kernels::ResizePlan;

/// Which parent a quadrant is taken from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parent {
    Source,
    Target,
}

use Parent::{Source as S, Target as T};

/// Quadrant provenance of `(first, second)` mixed outputs for configurations
/// 1..=3. Configuration 0 passes the parents through untouched.
pub const LAYOUTS: [[[Parent; 4]; 2]; 3] = [
    [[S, T, S, T], [T, S, T, S]],
    [[S, T, T, S], [T, S, S, T]],
    [[S, S, T, T], [T, T, S, S]],
];

/// Provenance of the two outputs for `iter`.
pub fn layout(iter: u64) -> [[Parent; 4]; 2] {
    match iter % 4 {
        0 => [[S; 4], [T; 4]],
        k => LAYOUTS[k as usize - 1],
    }
}

/// A raster whose pixels can be cut into quadrants and reassembled.
pub trait Quadrants: Sized {
    fn split_patch(&self) -> Result<[Self; 4]>;
    fn mix_patch(parts: [&Self; 4]) -> Result<Self>;
}

fn split_raw<E: Copy>(h: usize, w: usize, stride: usize, data: &[E]) -> Result<[Vec<E>; 4]> {
    if !h.is_multiple_of(2) || !w.is_multiple_of(2) || h == 0 || w == 0 {
        return Err(Error::Dimension(format!("cannot split {h}×{w} into equal quadrants")));
    }
    let (ph, pw) = (h / 2, w / 2);
    let quadrant = |r0: usize, c0: usize| {
        let mut out = Vec::with_capacity(ph * pw * stride);
        for r in r0..r0 + ph {
            let start = (r * w + c0) * stride;
            out.extend_from_slice(&data[start..start + pw * stride]);
        }
        out
    };
    Ok([quadrant(0, 0), quadrant(0, pw), quadrant(ph, 0), quadrant(ph, pw)])
}

fn mix_raw<E: Copy>(ph: usize, pw: usize, stride: usize, parts: [&[E]; 4]) -> Vec<E> {
    let w = 2 * pw;
    let mut out = Vec::with_capacity(4 * ph * pw * stride);
    for r in 0..2 * ph {
        let (top, row) = (r < ph, r % ph);
        let (left, right) = if top {
            (parts[0], parts[1])
        } else {
            (parts[2], parts[3])
        };
        let span = pw * stride;
        out.extend_from_slice(&left[row * span..(row + 1) * span]);
        out.extend_from_slice(&right[row * span..(row + 1) * span]);
    }
    debug_assert_eq!(out.len(), 2 * ph * w * stride);
    out
}

impl Quadrants for ImageTensor {
    fn split_patch(&self) -> Result<[Self; 4]> {
        let parts = split_raw(self.height(), self.width(), self.channels(), self.data())?;
        let (ph, pw, d) = (self.height() / 2, self.width() / 2, self.channels());
        let [a, b, c, e] = parts;
        Ok([
            ImageTensor::new(ph, pw, d, a)?,
            ImageTensor::new(ph, pw, d, b)?,
            ImageTensor::new(ph, pw, d, c)?,
            ImageTensor::new(ph, pw, d, e)?,
        ])
    }

    fn mix_patch(parts: [&Self; 4]) -> Result<Self> {
        let (ph, pw, d) = (parts[0].height(), parts[0].width(), parts[0].channels());
        if parts
            .iter()
            .any(|p| (p.height(), p.width(), p.channels()) != (ph, pw, d))
        {
            return Err(Error::Dimension("patches differ in shape".into()));
        }
        let data = mix_raw(ph, pw, d, parts.map(|p| p.data()));
        ImageTensor::new(2 * ph, 2 * pw, d, data)
    }
}

impl Quadrants for LabelMap {
    fn split_patch(&self) -> Result<[Self; 4]> {
        let parts = split_raw(self.height(), self.width(), 1, self.data())?;
        let (ph, pw, c) = (self.height() / 2, self.width() / 2, self.n_classes());
        let [a, b, d, e] = parts;
        Ok([
            LabelMap::new(ph, pw, c, a)?,
            LabelMap::new(ph, pw, c, b)?,
            LabelMap::new(ph, pw, c, d)?,
            LabelMap::new(ph, pw, c, e)?,
        ])
    }

    fn mix_patch(parts: [&Self; 4]) -> Result<Self> {
        let (ph, pw, c) = (parts[0].height(), parts[0].width(), parts[0].n_classes());
        if parts
            .iter()
            .any(|p| (p.height(), p.width(), p.n_classes()) != (ph, pw, c))
        {
            return Err(Error::Dimension("label patches differ in shape or class count".into()));
        }
        LabelMap::new(2 * ph, 2 * pw, c, mix_raw(ph, pw, 1, parts.map(|p| p.data())))
    }
}

pub fn split_patch<Q: Quadrants>(x: &Q) -> Result<[Q; 4]> {
    x.split_patch()
}

pub fn mix_patch<Q: Quadrants>(p1: &Q, p2: &Q, p3: &Q, p4: &Q) -> Result<Q> {
    Q::mix_patch([p1, p2, p3, p4])
}

/// Bilinear resize of an image to `(H, W)`.
pub fn resize_to_target(x: &ImageTensor, target: (usize, usize)) -> Result<ImageTensor> {
    let (h, w) = target;
    if h == 0 || w == 0 {
        return Err(Error::Dimension(format!("non-positive target size {h}×{w}")));
    }
    if (h, w) == (x.height(), x.width()) {
        return Ok(x.clone());
    }
    let plan = ResizePlan::new(x.channels(), x.height(), x.width(), h, w);
    let out = plan.forward(x.to_chw().data());
    let hw = h * w;
    let d = x.channels();
    let mut hwc = vec![0.0; out.len()];
    for p in 0..hw {
        for c in 0..d {
            hwc[p * d + c] = out[c * hw + p].clamp(0.0, 1.0);
        }
    }
    ImageTensor::new(h, w, d, hwc)
}

/// Nearest-neighbour resize of a label map (class ids stay valid).
pub fn resize_labels_to_target(y: &LabelMap, target: (usize, usize)) -> Result<LabelMap> {
    let (h, w) = target;
    if h == 0 || w == 0 {
        return Err(Error::Dimension(format!("non-positive target size {h}×{w}")));
    }
    let src =
        |dst: usize, out: usize, inp: usize| (((dst as f64 + 0.5) * inp as f64 / out as f64) as usize).min(inp - 1);
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            data.push(y.get(src(r, h, y.height()), src(c, w, y.width())));
        }
    }
    LabelMap::new(h, w, y.n_classes(), data)
}

/// Two images with their labels, both to be used as source samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedPair {
    pub images: [ImageTensor; 2],
    pub labels: [LabelMap; 2],
    pub config_id: u8,
}

fn compose<Q: Quadrants>(source: &[Q; 4], target: &[Q; 4], parents: [Parent; 4]) -> Result<Q> {
    let pick = |i: usize| match parents[i] {
        Parent::Source => &source[i],
        Parent::Target => &target[i],
    };
    Q::mix_patch([pick(0), pick(1), pick(2), pick(3)])
}

/// The four-configuration mixing cycle. `x_s` must already have the target
/// size; configuration `iter % 4 == 0` passes both parents through.
pub fn mixed_source_batch(
    x_s: &ImageTensor,
    y_s: &LabelMap,
    x_t: &ImageTensor,
    y_t: &LabelMap,
    iter: u64,
) -> Result<MixedPair> {
    let dims = |i: &ImageTensor| (i.height(), i.width(), i.channels());
    if dims(x_s) != dims(x_t)
        || (y_s.height(), y_s.width()) != (x_s.height(), x_s.width())
        || (y_t.height(), y_t.width()) != (x_t.height(), x_t.width())
    {
        return Err(Error::Dimension(
            "source and labeled-target inputs differ in shape".into(),
        ));
    }
    let config_id = (iter % 4) as u8;
    if config_id == 0 {
        return Ok(MixedPair {
            images: [x_s.clone(), x_t.clone()],
            labels: [y_s.clone(), y_t.clone()],
            config_id,
        });
    }
    let (xs, ys) = (x_s.split_patch()?, y_s.split_patch()?);
    let (xt, yt) = (x_t.split_patch()?, y_t.split_patch()?);
    let [first, second] = layout(iter);
    Ok(MixedPair {
        images: [compose(&xs, &xt, first)?, compose(&xs, &xt, second)?],
        labels: [compose(&ys, &yt, first)?, compose(&ys, &yt, second)?],
        config_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> ImageTensor {
        let n = (h * w) as f64;
        ImageTensor::new(h, w, 1, (0..h * w).map(|i| i as f64 / n).collect()).unwrap()
    }

    #[test]
    fn quadrants_hold_their_corner() {
        let x = ramp(4, 4);
        let [a, b, c, d] = split_patch(&x).unwrap();
        assert_eq!(a.data(), &[0.0, 1.0, 4.0, 5.0].map(|v| v / 16.0));
        assert_eq!(b.data(), &[2.0, 3.0, 6.0, 7.0].map(|v| v / 16.0));
        assert_eq!(c.data(), &[8.0, 9.0, 12.0, 13.0].map(|v| v / 16.0));
        assert_eq!(d.data(), &[10.0, 11.0, 14.0, 15.0].map(|v| v / 16.0));
        assert_eq!(mix_patch(&a, &b, &c, &d).unwrap(), x);
    }

    #[test]
    fn odd_sizes_and_mismatched_patches_fail() {
        let odd = ImageTensor::filled(3, 4, 1, 0.0).unwrap();
        assert!(matches!(split_patch(&odd), Err(Error::Dimension(_))));
        let a = ImageTensor::filled(2, 2, 1, 0.0).unwrap();
        let b = ImageTensor::filled(2, 3, 1, 0.0).unwrap();
        assert!(matches!(mix_patch(&a, &a, &a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn constant_and_zero_images() {
        let x = ImageTensor::filled(4, 6, 3, 0.3).unwrap();
        let parts = split_patch(&x).unwrap();
        assert!(parts.iter().all(|p| p == &parts[0]));
        let z = ImageTensor::filled(2, 2, 2, 0.0).unwrap();
        assert!(mix_patch(&z, &z, &z, &z).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn resize_cases() {
        let x = ramp(4, 4);
        assert_eq!(resize_to_target(&x, (4, 4)).unwrap(), x);
        let c = ImageTensor::filled(2, 2, 3, 0.4).unwrap();
        let up = resize_to_target(&c, (4, 4)).unwrap();
        assert!(up.data().iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert!(resize_to_target(&x, (0, 4)).is_err());
        let y = LabelMap::new(2, 2, 3, vec![0, 1, 2, 255]).unwrap();
        let yu = resize_labels_to_target(&y, (4, 4)).unwrap();
        assert_eq!(yu.data(), &[0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 255, 255, 2, 2, 255, 255]);
    }

    #[test]
    fn iteration_zero_passes_through() {
        let xs = ramp(4, 4);
        let xt = ImageTensor::filled(4, 4, 1, 0.9).unwrap();
        let ys = LabelMap::new(4, 4, 2, vec![0; 16]).unwrap();
        let yt = LabelMap::new(4, 4, 2, vec![1; 16]).unwrap();
        let m = mixed_source_batch(&xs, &ys, &xt, &yt, 8).unwrap();
        assert_eq!(m.images, [xs.clone(), xt.clone()]);
        assert_eq!(m.labels, [ys.clone(), yt.clone()]);
        let m = mixed_source_batch(&xs, &ys, &xt, &yt, 5).unwrap();
        assert_eq!(m.config_id, 1);
        // top-left from source, top-right from target
        assert_eq!(m.images[0].get(0, 0, 0), xs.get(0, 0, 0));
        assert_eq!(m.images[0].get(0, 3, 0), 0.9);
        assert_eq!(m.labels[0].get(0, 3), 1);
    }
}
