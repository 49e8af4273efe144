//! Measurements of the quantities the lazy-regime analysis bounds.
//!
//! Every probe returns a [`ProbeReport`]: named scalars, `(x, y)` series, an
//! optional log-log fit, pass/fail checks against stated slack constants, and
//! the metadata needed to reproduce the measurement.

mod activation;
mod bound;
mod descent;
mod init;
mod perturb;
pub mod plot;
mod rademacher;
mod sweep;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::fmt17;

pub use activation::{
    drift_probe, flip_probe, grad_drift_probe, hidden_drift, lipschitz_probe, semi_smooth_probe, semi_smooth_residuals,
    ActivationComparison,
};
pub use bound::{eval_generalization_bound, f_population, uniform_gap_bound, BoundInputs, BoundPoint};
pub use descent::{descent_probe, descent_slacks};
pub use init::{batched_traces, gaussian_indicator_check, init_norm_probe, IndicatorCase, InitNormOptions};
pub use perturb::{flip_seeking_perturbation, gaussian_perturbation, PerturbationKind};
pub use rademacher::{
    gradient_gram, rademacher_iterates, rademacher_linearized, rademacher_linearized_value, SignDraws,
};
pub use sweep::{drift_sweep, flip_sweep, grad_drift_sweep, semi_smooth_sweep, ScalingSweep, SweepCell};

/// Fits with `r²` below this are flagged and never asserted.
pub const MIN_FIT_R2: f64 = 0.7;

/// Default slack for the operator-norm constant `c₀`.
pub const DEFAULT_C0: f64 = 3.0;

/// Default slack for drift-type constants.
pub const DEFAULT_DRIFT_C: f64 = 10.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Whether `y` strictly decreases along the series.
    pub fn strictly_decreasing(&self) -> bool {
        self.y.windows(2).all(|w| w[1] < w[0])
    }
}

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Shape(format!("linear fit needs two equal-length series of length >= 2, got {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("linear fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - sse / sst).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Power law `y ≈ e^{intercept} · x^{exponent}` fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `r² < MIN_FIT_R2`.
    pub flagged: bool,
}

pub fn power_fit(x: &[f64], y: &[f64]) -> Result<PowerFit> {
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::Config("log-log fit needs strictly positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let f = linear_fit(&lx, &ly)?;
    Ok(PowerFit { exponent: f.slope, intercept: f.intercept, r2: f.r2, flagged: f.r2 < MIN_FIT_R2 })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub seed: u64,
    pub m: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub d: usize,
    pub n: usize,
    pub step: Option<usize>,
    /// Confidence parameter `δ`.
    pub delta: Option<f64>,
    /// Slack constant applied to the bound's shape.
    pub slack: Option<f64>,
    pub notes: Vec<String>,
}

/// A named comparison against a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub name: String,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Series>,
    pub fit: Option<PowerFit>,
    pub checks: Vec<Check>,
    pub meta: ProbeMeta,
}

impl ProbeReport {
    pub fn new(name: impl Into<String>, meta: ProbeMeta) -> Self {
        Self { name: name.into(), meta, ..Self::default() }
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.scalars.insert(key.to_string(), value);
    }

    pub fn add_series(&mut self, key: &str, series: Series) {
        self.series.insert(key.to_string(), series);
    }

    pub fn check(&mut self, name: &str, value: f64, bound: impl Into<String>, passed: bool) {
        self.checks.push(Check { name: name.into(), value, bound: bound.into(), passed });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Structural invariants: increasing series abscissae, `r² ∈ [0, 1]`,
    /// finite scalars, nonnegative counts and norms.
    pub fn validate(&self) -> Result<()> {
        for (k, s) in &self.series {
            if s.x.len() != s.y.len() {
                return Err(Error::Shape(format!("series {k} has mismatched lengths")));
            }
            if s.x.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config(format!("series {k} abscissae are not strictly increasing")));
            }
        }
        if let Some(f) = &self.fit {
            if !(0.0..=1.0).contains(&f.r2) {
                return Err(Error::Config(format!("fit r² = {} outside [0, 1]", f.r2)));
            }
        }
        for (k, v) in &self.scalars {
            if v.is_nan() {
                return Err(Error::NonFinite(format!("scalar {k}")));
            }
            let nonneg = ["flips", "norm", "drift", "error", "residual", "count"].iter().any(|t| k.contains(t));
            if nonneg && *v < 0.0 {
                return Err(Error::Config(format!("scalar {k} = {v} must be nonnegative")));
            }
        }
        if let (Some(flips), m) = (self.scalar("max_flips"), self.meta.m) {
            if m > 0 && flips > m as f64 {
                return Err(Error::Config(format!("flip count {flips} exceeds width {m}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Long-format CSV of all series: `series,x,y`.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("series,x,y\n");
        for (k, s) in &self.series {
            for (x, y) in s.x.iter().zip(&s.y) {
                let _ = writeln!(out, "{k},{},{}", fmt17(*x), fmt17(*y));
            }
        }
        out
    }

    /// `<dir>/<name>.json`, `<dir>/<name>.csv`, and one SVG per series when `plot` is set.
    pub fn write(&self, dir: &Path, plot: bool) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let json = dir.join(format!("{}.json", self.name));
        std::fs::write(&json, self.to_json()?)?;
        paths.push(json);
        if !self.series.is_empty() {
            let csv = dir.join(format!("{}.csv", self.name));
            std::fs::write(&csv, self.series_csv())?;
            paths.push(csv);
            if plot {
                for (k, s) in &self.series {
                    let svg = dir.join(format!("{}_{}.svg", self.name, k));
                    std::fs::write(&svg, plot::svg_scatter(&format!("{} / {}", self.name, k), s, plot::loglog_ok(s)))?;
                    paths.push(svg);
                }
            }
        }
        Ok(paths)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn check_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}::{} value={} bound={}",
                    if c.passed { "PASS" } else { "FAIL" },
                    self.name,
                    c.name,
                    fmt17(c.value),
                    c.bound
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_fit_recovers_exponent() {
        let x = [256.0, 1024.0, 4096.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.66)).collect();
        let f = power_fit(&x, &y).unwrap();
        assert!((f.exponent - 0.66).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(power_fit(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn linear_fit_and_median() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn validate_rejects_bad_series() {
        let mut r = ProbeReport::new("t", ProbeMeta::default());
        r.add_series("s", Series::new(vec![2.0, 1.0], vec![0.0, 0.0]));
        assert!(r.validate().is_err());
        let mut r = ProbeReport::new("t", ProbeMeta { m: 4, ..ProbeMeta::default() });
        r.set("max_flips", 5.0);
        assert!(r.validate().is_err());
    }
}
