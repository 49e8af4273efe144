use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::activation::{semi_smooth_residuals, ActivationComparison};
use super::perturb::{flip_seeking_perturbation, gaussian_perturbation, PerturbationKind};
use super::{grad_drift_probe, median, power_fit, ProbeMeta, ProbeReport, Series};
use crate::data::sphere_sample;
use crate::error::{Error, Result};
use crate::net::{init_symmetric, NetworkConfig, NetworkParams};
use crate::rng::derive_seed;

/// Widths at or above which sweep cells run one at a time to bound memory.
const SEQUENTIAL_WIDTH: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSweep {
    pub widths: Vec<usize>,
    pub repeats: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub d: usize,
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perturbation: PerturbationKind,
}

impl ScalingSweep {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sweep widths must be increasing with at least two values".into()));
        }
        if self.repeats == 0 || self.n == 0 {
            return Err(Error::Config("sweep needs repeats >= 1 and n >= 1".into()));
        }
        for &m in &self.widths {
            NetworkConfig::new(self.depth, m, self.d, 0).validate()?;
        }
        if !(self.radius >= 0.0) {
            return Err(Error::Config(format!("radius must be nonnegative, got {}", self.radius)));
        }
        Ok(())
    }

    fn meta(&self) -> ProbeMeta {
        ProbeMeta {
            seed: self.seed,
            m: *self.widths.last().unwrap_or(&0),
            depth: self.depth,
            d: self.d,
            n: self.n,
            ..ProbeMeta::default()
        }
    }

    fn cell_setup(&self, m: usize, repeat: usize) -> Result<(NetworkParams, Vec<Vec<f64>>)> {
        let s = derive_seed(self.seed, repeat as u64);
        let init = init_symmetric(&NetworkConfig::new(self.depth, m, self.d, s))?;
        let xs = sphere_sample(self.d, self.n, derive_seed(s, 0xda7a))?;
        Ok((init, xs))
    }

    fn perturb(&self, init: &NetworkParams, xs: &[Vec<f64>], repeat: usize, which: u64) -> Result<NetworkParams> {
        match self.perturbation {
            PerturbationKind::Gaussian => {
                gaussian_perturbation(init, self.radius, derive_seed(self.seed, repeat as u64), which)
            }
            PerturbationKind::FlipSeeking => flip_seeking_perturbation(init, self.radius, &xs[0]),
        }
    }

    /// Evaluates `cell` for every `(width, repeat)`, returning values indexed `[width][repeat]`.
    fn run<F>(&self, cell: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        self.validate()?;
        self.widths
            .iter()
            .map(|&m| {
                if m >= SEQUENTIAL_WIDTH {
                    (0..self.repeats).map(|r| cell(m, r)).collect()
                } else {
                    (0..self.repeats).into_par_iter().map(|r| cell(m, r)).collect()
                }
            })
            .collect()
    }
}

/// One `(width, repeat)` measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub m: usize,
    pub repeat: usize,
    pub value: f64,
}

fn medians_report(name: &str, sweep: &ScalingSweep, values: &[Vec<f64>], fit: bool) -> Result<ProbeReport> {
    let mut r = ProbeReport::new(name, sweep.meta());
    r.meta.notes.push(format!("perturbation: {:?}, R = {}", sweep.perturbation, sweep.radius));
    let xs: Vec<f64> = sweep.widths.iter().map(|&m| m as f64).collect();
    let med: Vec<f64> = values.iter().map(|v| median(v)).collect();
    for (m, v) in sweep.widths.iter().zip(values) {
        r.set(&format!("median_m{m}"), median(v));
    }
    let series = Series::new(xs.clone(), med.clone());
    r.set("strictly_decreasing", if series.strictly_decreasing() { 1.0 } else { 0.0 });
    r.add_series("median", series);
    if fit && med.iter().all(|&v| v > 0.0) {
        r.fit = Some(power_fit(&xs, &med)?);
    }
    Ok(r)
}

/// Median over repeats of `max_{i,l}` flips, and the exponent of its growth in `m`.
pub fn flip_sweep(sweep: &ScalingSweep) -> Result<ProbeReport> {
    let values = sweep.run(|m, rep| {
        let (init, xs) = sweep.cell_setup(m, rep)?;
        let w = sweep.perturb(&init, &xs, rep, 0)?;
        Ok(ActivationComparison::new(&init, &w, &xs)?.max_flips() as f64)
    })?;
    let mut r = medians_report("flip-sweep", sweep, &values, true)?;
    for (m, v) in sweep.widths.iter().zip(&values) {
        if v.iter().any(|&f| f > *m as f64) {
            return Err(Error::Config(format!("flip count exceeds width {m}")));
        }
    }
    r.meta.notes.push("theory: flips grow like (mR)^(2/3) up to log factors".into());
    r.validate()?;
    Ok(r)
}

/// Median over repeats of `max_{i,l} ‖hˡ − hˡ₀‖₂`, with consecutive median ratios.
pub fn drift_sweep(sweep: &ScalingSweep) -> Result<ProbeReport> {
    let values = sweep.run(|m, rep| {
        let (init, xs) = sweep.cell_setup(m, rep)?;
        let w = sweep.perturb(&init, &xs, rep, 0)?;
        Ok(ActivationComparison::new(&init, &w, &xs)?.max_drift())
    })?;
    let mut r = medians_report("drift-sweep", sweep, &values, true)?;
    let med: Vec<f64> = values.iter().map(|v| median(v)).collect();
    let ratios: Vec<f64> = med.windows(2).map(|w| w[1] / w[0]).collect();
    r.set("min_ratio", ratios.iter().copied().fold(f64::INFINITY, f64::min));
    r.set("max_ratio", ratios.iter().copied().fold(0.0, f64::max));
    r.meta.notes.push("theory: drift scales like m^(-1/2), ratio 1/sqrt(2) per doubling".into());
    r.validate()?;
    Ok(r)
}

/// Median over repeats of `max_i` semi-smoothness residual for random pairs `W, W̄ ∈ 𝓑_R(W(0))`.
pub fn semi_smooth_sweep(sweep: &ScalingSweep) -> Result<ProbeReport> {
    let values = sweep.run(|m, rep| {
        let (init, xs) = sweep.cell_setup(m, rep)?;
        let w = sweep.perturb(&init, &xs, rep, 0)?;
        let wbar = gaussian_perturbation(&init, sweep.radius, derive_seed(sweep.seed, rep as u64), 1 << 20 | rep as u64)?;
        drop(init);
        let res = semi_smooth_residuals(&w, &wbar, &xs)?;
        Ok(res.iter().map(|v| v.abs()).fold(0.0, f64::max))
    })?;
    let mut r = medians_report("semi-smooth-sweep", sweep, &values, true)?;
    r.meta.notes.push("theory: residual decays like m^(-1/6); only monotone decrease is asserted".into());
    r.validate()?;
    Ok(r)
}

/// Median over repeats of `max_{i,l}` gradient drift.
pub fn grad_drift_sweep(sweep: &ScalingSweep) -> Result<ProbeReport> {
    let values = sweep.run(|m, rep| {
        let (init, xs) = sweep.cell_setup(m, rep)?;
        let w = sweep.perturb(&init, &xs, rep, 0)?;
        Ok(grad_drift_probe(&init, &w, &xs)?.scalar("max_drift").unwrap_or(f64::NAN))
    })?;
    let mut r = medians_report("grad-drift-sweep", sweep, &values, true)?;
    r.meta.notes.push("theory: gradient drift decays like m^(-1/6); only monotone decrease is asserted".into());
    r.validate()?;
    Ok(r)
}
