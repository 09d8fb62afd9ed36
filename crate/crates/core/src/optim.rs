//! Learning-rate schedule and the two optimizers: SGD with classical
//! momentum and coupled weight decay for G, Adam for the discriminators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamStore};
use crate::error::{Error, Result};

pub const POLY_POWER: f64 = 0.9;

/// `base · (1 - iter / max_iter)^0.9`.
pub fn poly_lr(base: f64, iter: usize, max_iter: usize) -> Result<f64> {
    if iter > max_iter {
        return Err(Error::Schedule {
            iter: iter as u64,
            max_iter: max_iter as u64,
        });
    }
    if max_iter == 0 {
        return Ok(base);
    }
    Ok(base * (1.0 - iter as f64 / max_iter as f64).powf(POLY_POWER))
}

fn check_finite(params: &ParamStore, grads: &Gradients) -> Result<()> {
    for (name, g) in grads {
        if params.get(name).is_none() {
            continue;
        }
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient for `{name}` at element {i}"
            )));
        }
    }
    Ok(())
}

fn check_shape(name: &str, param: &[f64], grad: Option<&[f64]>) -> Result<()> {
    match grad {
        Some(g) if g.len() != param.len() => Err(Error::Dimension(format!(
            "gradient for `{name}` has {} elements, parameter {}",
            g.len(),
            param.len()
        ))),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub velocity: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

/// `v ← μ·v + (g + λ·θ)`, `θ ← θ − lr·v` for every parameter in `params`.
/// Parameters without a gradient are treated as having a zero gradient.
pub fn sgd_update(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut SgdState,
    lr: f64,
    cfg: SgdConfig,
) -> Result<()> {
    check_finite(params, grads)?;
    for (name, theta) in params.iter_mut() {
        let grad = grads.get(name).map(|g| g.data());
        check_shape(name, theta.data(), grad)?;
        let v = state
            .velocity
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; theta.len()]);
        for (i, (p, vi)) in theta.data_mut().iter_mut().zip(v.iter_mut()).enumerate() {
            let g = grad.map_or(0.0, |g| g[i]);
            *vi = cfg.momentum * *vi + (g + cfg.weight_decay * *p);
            *p -= lr * *vi;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One bias-corrected Adam step over every parameter in each store. The
/// step counter advances once per call, shared by all stores.
pub fn adam_update(
    stores: &mut [&mut ParamStore],
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) -> Result<()> {
    for store in stores.iter() {
        check_finite(store, grads)?;
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for store in stores.iter_mut() {
        for (name, theta) in store.iter_mut() {
            let grad = grads.get(name).map(|g| g.data());
            check_shape(name, theta.data(), grad)?;
            let n = theta.len();
            let m = state.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = state.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            for (i, p) in theta.data_mut().iter_mut().enumerate() {
                let g = grad.map_or(0.0, |g| g[i]);
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::new(vec![values.len()], values.to_vec()).unwrap());
        s
    }

    fn grads(values: &[f64]) -> Gradients {
        let mut g = Gradients::new();
        g.insert("w".into(), Tensor::new(vec![values.len()], values.to_vec()).unwrap());
        g
    }

    #[test]
    fn poly_endpoints() {
        assert_eq!(poly_lr(0.1, 0, 100).unwrap(), 0.1);
        assert_eq!(poly_lr(0.1, 100, 100).unwrap(), 0.0);
        assert!(matches!(poly_lr(0.1, 101, 100), Err(Error::Schedule { .. })));
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = store(&[1.0, -2.0]);
        let cfg = SgdConfig {
            momentum: 0.0,
            weight_decay: 0.0,
        };
        sgd_update(&mut p, &grads(&[0.5, 1.0]), &mut SgdState::default(), 0.1, cfg).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.0 - 0.05, -2.0 - 0.1]);
    }

    #[test]
    fn nan_gradient_is_rejected_before_any_update() {
        let mut p = store(&[1.0]);
        let before = p.clone();
        let cfg = SgdConfig {
            momentum: 0.9,
            weight_decay: 0.0,
        };
        let r = sgd_update(&mut p, &grads(&[f64::NAN]), &mut SgdState::default(), 0.1, cfg);
        assert!(matches!(r, Err(Error::Numeric(_))));
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = store(&[0.0, 0.0]);
        let cfg = AdamConfig {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        };
        adam_update(
            &mut [&mut p],
            &grads(&[3.0, -0.01]),
            &mut AdamState::default(),
            1e-4,
            cfg,
        )
        .unwrap();
        let d = p.get("w").unwrap().data();
        assert!((d[0] + 1e-4).abs() < 1e-9 && (d[1] - 1e-4).abs() < 1e-9);
    }
}
