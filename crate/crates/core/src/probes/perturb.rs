use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::net::{GradientSet, NetworkParams};
use crate::rng::{self, Stream};

/// How a point of `𝓑_R(W(0))` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// Per-layer Gaussian direction scaled to Frobenius norm `R`.
    #[default]
    Gaussian,
    /// Per-layer budget `R` spent on flipping the smallest pre-activations of one input.
    FlipSeeking,
}

/// `W(0) + Δ` with every `Δˡ` Gaussian and `‖Δˡ‖_F = R`.
///
/// Row `r` of layer `l` in repeat `k` has its own stream, so the result is
/// independent of thread count.
pub fn gaussian_perturbation(init: &NetworkParams, radius: f64, seed: u64, repeat: u64) -> Result<NetworkParams> {
    if !(radius >= 0.0) {
        return Err(Error::Config(format!("radius must be nonnegative, got {radius}")));
    }
    let cfg = init.config();
    let mut layers = Vec::with_capacity(cfg.depth);
    for l in 1..=cfg.depth {
        let (rows, cols) = cfg.layer_shape(l);
        let mut d = Matrix::zeros(rows, cols);
        d.as_mut_slice().par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
            let mut s = rng::stream(seed, Stream::Perturbation, repeat << 8 | l as u64, r as u64);
            rng::fill_gaussian(&mut s, row);
        });
        let norm = d.frobenius_norm();
        if norm > 0.0 {
            d.scale(radius / norm);
        }
        layers.push(d);
    }
    init.add_scaled(&GradientSet { layers }, 1.0)
}

/// Worst-case style perturbation aimed at the activation pattern of `x`.
///
/// Layer by layer, with `h = hˡ⁻¹(x)` taken from the already perturbed network, the
/// rows with the smallest `|⟨w_r, h⟩|` are moved along `h` just across zero. Moving
/// row `r` costs `(|z_r| + ε)² / ‖h‖²` of squared Frobenius norm; rows are flipped
/// in order until the per-layer budget `R²` is spent. The last partially affordable
/// row absorbs the rest of the budget without crossing.
pub fn flip_seeking_perturbation(init: &NetworkParams, radius: f64, x: &[f64]) -> Result<NetworkParams> {
    if !(radius >= 0.0) {
        return Err(Error::Config(format!("radius must be nonnegative, got {radius}")));
    }
    if x.len() != init.input_dim() {
        return Err(Error::Shape(format!("input has length {}, expected {}", x.len(), init.input_dim())));
    }
    const CROSS: f64 = 1e-9;
    let c = init.config().scale();
    let mut params = init.clone();
    let mut h = x.to_vec();
    for l in 0..init.depth() {
        let hn2 = linalg::sum_sq(&h);
        let w = &mut params.layers_mut()[l];
        let z = w.matvec(&h);
        if hn2 > 0.0 && radius > 0.0 {
            let mut order: Vec<usize> = (0..z.len()).collect();
            order.sort_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs()).then(a.cmp(&b)));
            let mut budget = radius * radius;
            for r in order {
                let need = (z[r].abs() + CROSS).powi(2) / hn2;
                let (shift, last) = if need <= budget { (z[r].abs() + CROSS, false) } else { ((budget * hn2).sqrt(), true) };
                // Move toward the other side of zero.
                let dir = if z[r] >= 0.0 { -1.0 } else { 1.0 };
                let coef = dir * shift / hn2;
                for (wv, &hv) in w.row_mut(r).iter_mut().zip(&h) {
                    *wv += coef * hv;
                }
                budget -= shift * shift / hn2;
                if last || budget <= 0.0 {
                    break;
                }
            }
        }
        let z = params.layer(l + 1).matvec(&h);
        h = z.iter().map(|&v| if v >= 0.0 { c * v } else { 0.0 }).collect();
    }
    Ok(params)
}
