use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ProbeMeta, ProbeReport};
use crate::error::{Error, Result};
use crate::linalg::{self, Compensated, Matrix};
use crate::net::{backprop_vectors, forward, forward_with_trace, NetworkParams};
use crate::rng::{self, Stream};

/// Largest sample size for exhaustive sign enumeration.
pub const MAX_EXHAUSTIVE_N: usize = 24;

/// How Rademacher sign vectors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignDraws {
    Random { draws: usize, seed: u64 },
    /// All `2^n` sign vectors.
    Exhaustive,
}

impl SignDraws {
    fn vectors(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        match *self {
            SignDraws::Random { draws, seed } => {
                if draws == 0 {
                    return Err(Error::Config("at least one sign draw is required".into()));
                }
                Ok((0..draws)
                    .map(|k| {
                        let mut s = rng::stream(seed, Stream::Signs, k as u64, n as u64);
                        (0..n).map(|_| rng::sign(&mut s)).collect()
                    })
                    .collect())
            }
            SignDraws::Exhaustive => {
                if n > MAX_EXHAUSTIVE_N {
                    return Err(Error::Config(format!("exhaustive signs need n <= {MAX_EXHAUSTIVE_N}, got {n}")));
                }
                Ok((0u64..1 << n)
                    .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
                    .collect())
            }
        }
    }
}

/// `K_ij = ⟨∂f_W(x_i)/∂W, ∂f_W(x_j)/∂W⟩` from the rank-one layer factors.
pub fn gradient_gram(params: &NetworkParams, xs: &[Vec<f64>]) -> Result<Matrix> {
    let factors: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = xs
        .par_iter()
        .map(|x| {
            let (_, t) = forward_with_trace(params, x)?;
            let g = backprop_vectors(params, &t)?;
            Ok((g, t.hidden))
        })
        .collect::<Result<_>>()?;
    let n = xs.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = linalg::compensated_sum((0..params.depth()).map(|l| {
                linalg::dot(&factors[i].0[l], &factors[j].0[l]) * linalg::dot(&factors[i].1[l], &factors[j].1[l])
            }));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    Ok(k)
}

/// `sup_{‖ΔW‖_F ≤ B} (1/n) Σ ε_i ⟨∂f(x_i), ΔW⟩ = (B/n) ‖Σ ε_i ∂f(x_i)‖_F = (B/n) (εᵀKε)^{1/2}`.
pub fn rademacher_linearized_value(gram: &Matrix, radius: f64, eps: &[f64]) -> f64 {
    let n = eps.len() as f64;
    let q = linalg::dot(eps, &gram.matvec(eps)).max(0.0);
    radius / n * q.sqrt()
}

/// Rademacher complexity of the linearised class `{⟨∂f_{W(0)}, ΔW⟩ : ‖ΔW‖_F ≤ B}`.
pub fn rademacher_linearized(
    init: &NetworkParams,
    xs: &[Vec<f64>],
    radius: f64,
    draws: SignDraws,
) -> Result<ProbeReport> {
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(radius >= 0.0) {
        return Err(Error::Config(format!("radius must be nonnegative, got {radius}")));
    }
    let cfg = init.config();
    let n = xs.len();
    let mut r = ProbeReport::new(
        "rademacher-linearized",
        ProbeMeta { seed: cfg.seed, m: cfg.width, depth: cfg.depth, d: cfg.input_dim, n, ..ProbeMeta::default() },
    );
    r.set("radius", radius);
    let signs = draws.vectors(n)?;
    let estimate = if radius == 0.0 {
        0.0
    } else {
        let gram = gradient_gram(init, xs)?;
        let mut acc = Compensated::default();
        for e in &signs {
            acc.add(rademacher_linearized_value(&gram, radius, e));
        }
        acc.value() / signs.len() as f64
    };
    let shape = radius * (cfg.depth as f64).powi(2) * ((cfg.width as f64).ln() / n as f64).sqrt();
    r.set("estimate", estimate);
    r.set("sign_vectors", signs.len() as f64);
    r.set("bound_shape", shape);
    r.set("ratio_to_shape", if shape > 0.0 { estimate / shape } else { 0.0 });
    r.validate()?;
    Ok(r)
}

/// Lower estimate of the Rademacher complexity of the class realised by a set of
/// iterates: `E_ε max_t (1/n) Σ ε_i f_{W(t)}(x_i)`. With `|S̃| = |S|` the worst case
/// over subsamples is the sample itself.
pub fn rademacher_iterates(iterates: &[NetworkParams], xs: &[Vec<f64>], draws: SignDraws) -> Result<ProbeReport> {
    if iterates.is_empty() {
        return Err(Error::Config("rademacher_iterates needs at least one iterate".into()));
    }
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = xs.len();
    let outputs: Vec<Vec<f64>> = iterates
        .par_iter()
        .map(|p| xs.iter().map(|x| forward(p, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let signs = draws.vectors(n)?;
    let mut acc = Compensated::default();
    for e in &signs {
        let best = outputs.iter().map(|f| linalg::dot(e, f) / n as f64).fold(f64::NEG_INFINITY, f64::max);
        acc.add(best);
    }
    let c = iterates[0].config();
    let mut r = ProbeReport::new(
        "rademacher-iterates",
        ProbeMeta { seed: c.seed, m: c.width, depth: c.depth, d: c.input_dim, n, ..ProbeMeta::default() },
    );
    r.meta.notes.push("lower estimate: supremum over recorded iterates only; full-size subsample is the sample".into());
    r.set("estimate", acc.value() / signs.len() as f64);
    r.set("iterates", iterates.len() as f64);
    r.set("sign_vectors", signs.len() as f64);
    r.validate()?;
    Ok(r)
}
