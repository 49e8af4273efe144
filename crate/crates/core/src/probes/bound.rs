use serde::{Deserialize, Serialize};

use super::{ProbeMeta, ProbeReport, Series};
use crate::error::{Error, Result};

/// `F(W̄) = 3ηT (2𝓛(W̄) + 7G log(2/δ)/(6n)) + ‖W(0) − W̄‖_F²`.
pub fn f_population(eta: f64, steps: f64, pop_risk: f64, g: f64, delta: f64, n: usize, dist_sq: f64) -> f64 {
    3.0 * eta * steps * (2.0 * pop_risk + 7.0 * g * (2.0 / delta).ln() / (6.0 * n as f64)) + dist_sq
}

/// Right side of the smooth-loss generalisation bound with unit constant:
/// `𝓛_S^{1/2} (½(log n)^{3/2} 𝕽 + (G′ log(2/δ)/n)^{1/2}) + ¼(log n)³ 𝕽² + G′ log(2/δ)/n`.
pub fn uniform_gap_bound(empirical_risk: f64, rademacher: f64, g_prime: f64, n: usize, delta: f64) -> f64 {
    let ln_n = (n as f64).ln();
    let conf = g_prime * (2.0 / delta).ln() / n as f64;
    empirical_risk.max(0.0).sqrt() * (0.5 * ln_n.powf(1.5) * rademacher + conf.sqrt())
        + 0.25 * ln_n.powi(3) * rademacher * rademacher
        + conf
}

/// Quantities fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub eta: f64,
    pub steps: f64,
    pub delta: f64,
    pub n: usize,
    pub depth: usize,
    pub width: usize,
    /// `𝓛(W̄)`, exact when the population is enumerable.
    pub reference_population_risk: f64,
    /// `G = sup_z ℓ(y f_W̄(x))`.
    pub g_sup: f64,
    /// `‖W(0) − W̄‖_F²`.
    pub dist_sq: f64,
}

impl BoundInputs {
    pub fn f_population(&self) -> f64 {
        f_population(self.eta, self.steps, self.reference_population_risk, self.g_sup, self.delta, self.n, self.dist_sq)
    }

    /// `G′ = 2G + L⁴ log m F(W̄)` with unit constant.
    pub fn g_prime(&self) -> f64 {
        2.0 * self.g_sup + (self.depth as f64).powi(4) * (self.width as f64).ln() * self.f_population()
    }
}

/// One snapshot to compare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub step: usize,
    pub empirical_risk: f64,
    pub population_risk: f64,
    pub rademacher: f64,
}

/// Evaluates the bound at every snapshot and checks `|𝓛 − 𝓛_S| ≤ rhs`.
/// This is a one-sided sanity check, not a statement about tightness.
pub fn eval_generalization_bound(inputs: &BoundInputs, points: &[BoundPoint]) -> Result<ProbeReport> {
    if !(inputs.delta > 0.0 && inputs.delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {}", inputs.delta)));
    }
    if inputs.n == 0 {
        return Err(Error::EmptyDataset);
    }
    let f = inputs.f_population();
    let gp = inputs.g_prime();
    let mut r = ProbeReport::new(
        "generalization-bound",
        ProbeMeta {
            m: inputs.width,
            depth: inputs.depth,
            n: inputs.n,
            delta: Some(inputs.delta),
            slack: Some(1.0),
            ..ProbeMeta::default()
        },
    );
    r.meta.notes.push("constant C = 1; log n factors evaluated explicitly with natural logarithms".into());
    r.set("f_population", f);
    r.set("g_prime", gp);
    r.set("g_sup", inputs.g_sup);
    let mut steps = Vec::new();
    let mut gaps = Vec::new();
    let mut rhs = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for p in points {
        let gap = (p.population_risk - p.empirical_risk).abs();
        let b = uniform_gap_bound(p.empirical_risk, p.rademacher, gp, inputs.n, inputs.delta);
        worst = worst.max(gap - b);
        steps.push(p.step as f64);
        gaps.push(gap);
        rhs.push(b);
    }
    r.set("max_gap_minus_bound", if points.is_empty() { 0.0 } else { worst });
    r.check("gap_within_bound", worst, "<= 0 at every snapshot", points.is_empty() || worst <= 0.0);
    r.add_series("gap", Series::new(steps.clone(), gaps));
    r.add_series("bound", Series::new(steps, rhs));
    r.validate()?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_reduces_to_confidence_term() {
        let v = uniform_gap_bound(0.0, 0.0, 5.0, 64, 0.1);
        assert!((v - 5.0 * 20f64.ln() / 64.0).abs() < 1e-15);
    }

    #[test]
    fn f_population_arithmetic() {
        let v = f_population(0.1, 500.0, 0.002, 5.0, 0.1, 64, 9.0);
        let expected = 150.0 * (0.004 + 35.0 * 20f64.ln() / 384.0) + 9.0;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 50.57).abs() < 0.05);
    }
}
