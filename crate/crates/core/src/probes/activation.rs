use rayon::prelude::*;

use super::init::batched_hidden;
use super::perturb::gaussian_perturbation;
use super::{median, ProbeMeta, ProbeReport, Series, DEFAULT_DRIFT_C};
use crate::data;
use crate::error::{Error, Result};
use crate::linalg;
use crate::net::{self, backprop_vectors, forward_with_trace, frobenius_distance, NetworkParams};

/// Per-input comparison of two networks' activation patterns and hidden outputs.
#[derive(Debug, Clone)]
pub struct ActivationComparison {
    /// `‖Σˡ(x_i) − Σˡ₀(x_i)‖₀`, indexed `[i][l]`.
    pub flips: Vec<Vec<usize>>,
    /// `‖hˡ(x_i) − hˡ₀(x_i)‖₂` for `l = 1 … L`, indexed `[i][l]`.
    pub drift: Vec<Vec<f64>>,
    pub f_init: Vec<f64>,
    pub f_perturbed: Vec<f64>,
}

impl ActivationComparison {
    pub fn new(init: &NetworkParams, perturbed: &NetworkParams, xs: &[Vec<f64>]) -> Result<Self> {
        if init.config().width != perturbed.config().width || init.depth() != perturbed.depth() {
            return Err(Error::Shape("networks have different shapes".into()));
        }
        let rows: Vec<(Vec<usize>, Vec<f64>, f64, f64)> = xs
            .par_iter()
            .map(|x| {
                let (f0, t0) = forward_with_trace(init, x)?;
                let (f1, t1) = forward_with_trace(perturbed, x)?;
                let flips = t0.sigma.iter().zip(&t1.sigma).map(|(a, b)| a.hamming(b)).collect();
                let drift = (1..t0.hidden.len())
                    .map(|l| {
                        let d: Vec<f64> = t0.hidden[l].iter().zip(&t1.hidden[l]).map(|(a, b)| a - b).collect();
                        linalg::norm2(&d)
                    })
                    .collect();
                Ok((flips, drift, f0, f1))
            })
            .collect::<Result<_>>()?;
        let mut out = Self { flips: vec![], drift: vec![], f_init: vec![], f_perturbed: vec![] };
        for (fl, dr, f0, f1) in rows {
            out.flips.push(fl);
            out.drift.push(dr);
            out.f_init.push(f0);
            out.f_perturbed.push(f1);
        }
        Ok(out)
    }

    pub fn max_flips(&self) -> usize {
        self.flips.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn max_drift(&self) -> f64 {
        self.drift.iter().flatten().copied().fold(0.0, f64::max)
    }
}

fn meta_for(p: &NetworkParams, n: usize) -> ProbeMeta {
    let c = p.config();
    ProbeMeta { seed: c.seed, m: c.width, depth: c.depth, d: c.input_dim, n, ..ProbeMeta::default() }
}

fn per_layer_series(values: impl Fn(usize) -> f64, depth: usize) -> Series {
    Series::new((1..=depth).map(|l| l as f64).collect(), (1..=depth).map(values).collect())
}

/// Activation-pattern flips between `init` and `perturbed` over the given inputs.
pub fn flip_probe(init: &NetworkParams, perturbed: &NetworkParams, xs: &[Vec<f64>]) -> Result<ProbeReport> {
    let dist = frobenius_distance(init, perturbed)?;
    let cmp = ActivationComparison::new(init, perturbed, xs)?;
    let m = init.width();
    let mut r = ProbeReport::new("flip", meta_for(init, xs.len()));
    let max = cmp.max_flips();
    r.set("radius", dist.max_layer());
    r.set("max_flips", max as f64);
    let total: usize = cmp.flips.iter().flatten().sum();
    r.set("mean_flips", total as f64 / (xs.len() * init.depth()).max(1) as f64);
    r.add_series(
        "max_flips_by_layer",
        per_layer_series(|l| cmp.flips.iter().map(|f| f[l - 1]).max().unwrap_or(0) as f64, init.depth()),
    );
    r.check("flips_at_most_width", max as f64, format!("<= m = {m}"), max <= m);
    r.validate()?;
    Ok(r)
}

/// Hidden-output drift `max_{i,l} ‖hˡ(x_i) − hˡ₀(x_i)‖₂`.
pub fn drift_probe(init: &NetworkParams, perturbed: &NetworkParams, xs: &[Vec<f64>]) -> Result<ProbeReport> {
    let dist = frobenius_distance(init, perturbed)?;
    let cmp = ActivationComparison::new(init, perturbed, xs)?;
    let depth = init.depth();
    let sqrt_m = (init.width() as f64).sqrt();
    let mut r = ProbeReport::new("drift", meta_for(init, xs.len()));
    r.set("radius", dist.max_layer());
    r.set("max_drift", cmp.max_drift());
    r.add_series(
        "max_drift_by_layer",
        per_layer_series(|l| cmp.drift.iter().map(|d| d[l - 1]).fold(0.0, f64::max), depth),
    );
    // ‖hᴸ − hᴸ₀‖₂ · ‖a‖₂ ≥ |f − f₀| with ‖a‖₂ = √m.
    let worst = cmp
        .drift
        .iter()
        .zip(cmp.f_init.iter().zip(&cmp.f_perturbed))
        .map(|(d, (f0, f1))| d[depth - 1] - (f1 - f0).abs() / sqrt_m)
        .fold(f64::INFINITY, f64::min);
    r.set("cauchy_schwarz_slack", worst);
    r.check(
        "output_change_within_last_layer_drift",
        worst,
        ">= -1e-12 (|f - f0| / sqrt(m) <= |h^L - h0^L|)",
        worst >= -1e-12,
    );
    r.validate()?;
    Ok(r)
}

/// `‖hˡ(x) − hˡ₀(x)‖₂` for every sample and layer.
pub fn hidden_drift(init: &NetworkParams, perturbed: &NetworkParams, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Ok(ActivationComparison::new(init, perturbed, xs)?.drift)
}

/// Sampling proxy for the uniform drift over the sphere.
///
/// Draws `n_sphere` uniform points and `k` Gaussian perturbations with per-layer
/// norm `R`, and reports `max ‖hˡ(x) − hˡ₀(x)‖₂ · √m / (L² R √(log m))`. This is a
/// lower estimate of the supremum over the sphere.
pub fn lipschitz_probe(
    init: &NetworkParams,
    radius: f64,
    n_sphere: usize,
    k: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let cfg = init.config();
    let mut r = ProbeReport::new("lipschitz", meta_for(init, n_sphere));
    r.meta.slack = Some(DEFAULT_DRIFT_C);
    r.meta.notes.push("sampled lower estimate of the supremum over the sphere".into());
    r.set("radius", radius);
    if radius == 0.0 || n_sphere == 0 || k == 0 {
        r.set("empirical_constant", 0.0);
        r.set("max_drift", 0.0);
        return Ok(r);
    }
    let xs = data::sphere_sample(cfg.input_dim, n_sphere, seed)?;
    let h0 = batched_hidden(init, &xs)?;
    let mut max_drift: f64 = 0.0;
    let mut running = Vec::with_capacity(n_sphere);
    let mut per_point = vec![0.0f64; n_sphere];
    for rep in 0..k {
        let w = gaussian_perturbation(init, radius, seed, rep as u64)?;
        let h = batched_hidden(&w, &xs)?;
        for l in 1..=cfg.depth {
            let (a, b) = (&h0[l], &h[l]);
            let cols = n_sphere;
            for (i, best) in per_point.iter_mut().enumerate() {
                let mut s = 0.0;
                for row in 0..a.rows() {
                    let d = a.as_slice()[row * cols + i] - b.as_slice()[row * cols + i];
                    s += d * d;
                }
                *best = best.max(s.sqrt());
            }
        }
    }
    for &v in &per_point {
        max_drift = max_drift.max(v);
        running.push(max_drift);
    }
    let m = cfg.width as f64;
    let depth = cfg.depth as f64;
    let scale = m.sqrt() / (depth * depth * radius * m.ln().sqrt());
    r.set("max_drift", max_drift);
    r.set("empirical_constant", max_drift * scale);
    r.add_series(
        "running_max_constant",
        Series::new((1..=n_sphere).map(|v| v as f64).collect(), running.iter().map(|v| v * scale).collect()),
    );
    r.check(
        "empirical_constant",
        max_drift * scale,
        format!("<= C = {DEFAULT_DRIFT_C}"),
        max_drift * scale <= DEFAULT_DRIFT_C,
    );
    r.validate()?;
    Ok(r)
}

/// `f_W(x) − f_W̄(x) − ⟨∂f_W(x)/∂W, W − W̄⟩` for each input.
pub fn semi_smooth_residuals(w: &NetworkParams, wbar: &NetworkParams, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let diff = w.difference(wbar)?;
    xs.par_iter()
        .map(|x| {
            let (fw, trace) = forward_with_trace(w, x)?;
            let fbar = net::forward(wbar, x)?;
            let back = backprop_vectors(w, &trace)?;
            let lin = linalg::compensated_sum(
                back.iter().enumerate().map(|(l, g)| linalg::dot(g, &diff.layers[l].matvec(&trace.hidden[l]))),
            );
            Ok(fw - fbar - lin)
        })
        .collect()
}

pub fn semi_smooth_probe(w: &NetworkParams, wbar: &NetworkParams, xs: &[Vec<f64>]) -> Result<ProbeReport> {
    let res: Vec<f64> = semi_smooth_residuals(w, wbar, xs)?.into_iter().map(f64::abs).collect();
    let mut r = ProbeReport::new("semi-smooth", meta_for(w, xs.len()));
    r.set("max_residual", res.iter().copied().fold(0.0, f64::max));
    r.set("median_residual", median(&res));
    r.validate()?;
    Ok(r)
}

/// `max_{i,l} ‖∂f_W(x_i)/∂Wˡ − ∂f_{W(0)}(x_i)/∂Wˡ‖_F`, using the rank-one form of both gradients.
pub fn grad_drift_probe(init: &NetworkParams, perturbed: &NetworkParams, xs: &[Vec<f64>]) -> Result<ProbeReport> {
    let rows: Vec<(f64, f64)> = xs
        .par_iter()
        .map(|x| {
            let (_, t0) = forward_with_trace(init, x)?;
            let (_, t1) = forward_with_trace(perturbed, x)?;
            let g0 = backprop_vectors(init, &t0)?;
            let g1 = backprop_vectors(perturbed, &t1)?;
            let mut worst: f64 = 0.0;
            let mut worst_triangle = f64::INFINITY;
            for l in 0..g0.len() {
                let (a, b, h0, h1) = (&g1[l], &g0[l], &t1.hidden[l], &t0.hidden[l]);
                let na = linalg::sum_sq(a) * linalg::sum_sq(h0);
                let nb = linalg::sum_sq(b) * linalg::sum_sq(h1);
                let cross = linalg::dot(a, b) * linalg::dot(h0, h1);
                let d = (na + nb - 2.0 * cross).max(0.0).sqrt();
                worst = worst.max(d);
                worst_triangle = worst_triangle.min(na.sqrt() + nb.sqrt() - d);
            }
            Ok((worst, worst_triangle))
        })
        .collect::<Result<_>>()?;
    let mut r = ProbeReport::new("grad-drift", meta_for(init, xs.len()));
    let drifts: Vec<f64> = rows.iter().map(|v| v.0).collect();
    let slack = rows.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    r.set("radius", frobenius_distance(init, perturbed)?.max_layer());
    r.set("max_drift", drifts.iter().copied().fold(0.0, f64::max));
    r.set("median_drift", median(&drifts));
    r.check("triangle_inequality", slack, ">= -1e-12", slack >= -1e-12);
    r.validate()?;
    Ok(r)
}
