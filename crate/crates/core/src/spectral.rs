//! Tensor spectral norm via the higher-order power method.
//!
//! The estimate is the best rank-1 value found over several random restarts,
//! so it never exceeds the true spectral norm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TeraError};
use crate::tensor::{strides, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralNormConfig {
    pub restarts: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SpectralNormConfig {
    fn default() -> Self {
        Self {
            restarts: 16,
            tol: 1e-10,
            max_iters: 500,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralNormEstimate {
    pub value: f64,
    /// True when the best restart met `tol` before `max_iters`.
    pub converged: bool,
    pub iterations: usize,
}

/// Contracts every mode except `skip` against the unit vectors in `vecs`.
fn contract_except(t: &Tensor, vecs: &[Vec<f64>], skip: usize) -> Vec<f64> {
    let shape = t.shape();
    let st = strides(shape);
    let mut out = vec![0.0; shape[skip]];
    let mut idx = vec![0usize; shape.len()];
    for (flat, &v) in t.data().iter().enumerate() {
        let mut rem = flat;
        let mut w = v;
        for m in 0..shape.len() {
            idx[m] = rem / st[m];
            rem %= st[m];
            if m != skip {
                w *= vecs[m][idx[m]];
            }
        }
        out[idx[skip]] += w;
    }
    out
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Lower-bound estimate of `max_{‖u_i‖=1} |T ×_1 u_1 … ×_N u_N|`.
pub fn tensor_spectral_norm(t: &Tensor, cfg: &SpectralNormConfig) -> Result<SpectralNormEstimate> {
    if cfg.restarts == 0 {
        return Err(TeraError::InvalidArgument("restarts must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = SpectralNormEstimate {
        value: 0.0,
        converged: true,
        iterations: 0,
    };
    if t.data().iter().all(|&v| v == 0.0) {
        return Ok(best);
    }
    let order = t.order();
    for _ in 0..cfg.restarts {
        let mut vecs: Vec<Vec<f64>> = t
            .shape()
            .iter()
            .map(|&s| {
                let mut v: Vec<f64> = (0..s).map(|_| StandardNormal.sample(&mut rng)).collect();
                normalize(&mut v);
                v
            })
            .collect();
        let mut value = 0.0;
        let mut converged = false;
        let mut iters = 0;
        while iters < cfg.max_iters {
            iters += 1;
            let mut last = 0.0;
            for m in 0..order {
                let mut g = contract_except(t, &vecs, m);
                last = normalize(&mut g);
                if last > 0.0 {
                    vecs[m] = g;
                }
            }
            // After updating the last mode, its norm is the current rank-1 value.
            let done = (last - value).abs() <= cfg.tol * last.max(f64::MIN_POSITIVE);
            value = last;
            if done {
                converged = true;
                break;
            }
        }
        if value > best.value {
            best = SpectralNormEstimate {
                value,
                converged,
                iterations: iters,
            };
        }
    }
    Ok(best)
}
