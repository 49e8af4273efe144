use super::{ProbeMeta, ProbeReport, Series};
use crate::error::{Error, Result};
use crate::linalg::Compensated;
use crate::objective::Trajectory;

/// Required fraction of steps satisfying the descent inequality.
pub const DESCENT_FRACTION: f64 = 0.95;

/// Slack on the telescoped trajectory bound.
pub const TRAJECTORY_SLACK: f64 = 1.2;

/// `s_t = ‖W(t)−W̄‖² − ‖W(t+1)−W̄‖² − η𝓛_S(W(t)) + 3η𝓛_S(W̄)` for consecutive recorded steps.
pub fn descent_slacks(traj: &Trajectory, reference_risk: f64, eta: f64) -> Result<Vec<f64>> {
    let d = traj
        .dist_from_ref_sq
        .as_ref()
        .ok_or_else(|| Error::Config("descent slacks need a trajectory recorded against a reference".into()))?;
    if traj.steps.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Config("descent slacks need a dense trajectory".into()));
    }
    Ok((0..d.len().saturating_sub(1))
        .map(|t| d[t] - d[t + 1] - eta * traj.train_loss[t] + 3.0 * eta * reference_risk)
        .collect())
}

/// Per-step descent inequality and the telescoped trajectory bound
/// `‖W(t)−W̄‖² + η Σ_{k<t} 𝓛_S(W(k)) ≤ 1.2 F_S(W̄)`.
pub fn descent_probe(traj: &Trajectory, reference_risk: f64, eta: f64, f_s: f64) -> Result<ProbeReport> {
    let slacks = descent_slacks(traj, reference_risk, eta)?;
    let d = traj.dist_from_ref_sq.as_ref().expect("checked by descent_slacks");
    let p = &traj.final_params;
    let c = p.config();
    let mut r = ProbeReport::new(
        "descent",
        ProbeMeta {
            seed: c.seed,
            m: c.width,
            depth: c.depth,
            d: c.input_dim,
            step: traj.steps.last().copied(),
            slack: Some(TRAJECTORY_SLACK),
            ..ProbeMeta::default()
        },
    );
    let eps = 0.01 * eta * traj.train_loss[0];
    let ok = slacks.iter().filter(|&&s| s >= -eps).count();
    let frac = if slacks.is_empty() { 1.0 } else { ok as f64 / slacks.len() as f64 };
    r.set("epsilon", eps);
    r.set("fraction_satisfied", frac);
    r.set("min_slack", slacks.iter().copied().fold(f64::INFINITY, f64::min));
    r.check("descent_fraction", frac, format!(">= {DESCENT_FRACTION}"), frac >= DESCENT_FRACTION);

    let mut acc = Compensated::default();
    let mut ratios = Vec::with_capacity(d.len());
    for (t, &dt) in d.iter().enumerate() {
        ratios.push((dt + eta * acc.value()) / f_s);
        acc.add(traj.train_loss[t]);
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    r.set("f_s", f_s);
    r.set("max_trajectory_ratio", worst);
    r.check("trajectory_bound", worst, format!("<= {TRAJECTORY_SLACK}"), worst <= TRAJECTORY_SLACK);
    if !slacks.is_empty() {
        r.add_series("slack", Series::new(traj.steps[..slacks.len()].iter().map(|&s| s as f64).collect(), slacks));
    }
    r.add_series("trajectory_ratio", Series::new(traj.steps.iter().map(|&s| s as f64).collect(), ratios));
    r.validate()?;
    Ok(r)
}
