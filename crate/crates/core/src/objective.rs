//! Logistic empirical risk, full-batch gradient descent and trajectory bookkeeping.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::lab::fmt17;
use crate::linalg::{Compensated, Matrix};
use crate::net::{self, backprop_vectors, forward, forward_with_trace, GradientSet, NetworkParams};

/// Risk above which training is declared divergent.
pub const DIVERGENCE_RISK: f64 = 1e6;

/// Width above which snapshots go to checkpoint files when a directory is configured.
pub const FILE_SNAPSHOT_WIDTH: usize = 1024;

/// `ℓ(z) = log(1 + e^{−z})`, evaluated as a softplus so it neither overflows nor underflows to 0 early.
pub fn logistic_loss(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `ℓ′(z) = −1/(1 + e^z)`.
pub fn logistic_loss_grad(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + z.exp())
    }
}

/// Mean logistic risk and the per-sample margins `y_i f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEval {
    pub risk: f64,
    pub margins: Vec<f64>,
}

pub fn margins(params: &NetworkParams, data: &LabeledDataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.inputs
        .par_iter()
        .zip(data.labels.par_iter())
        .map(|(x, &y)| Ok(y * forward(params, x)?))
        .collect()
}

fn mean_of(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    let mut acc = Compensated::default();
    for v in values {
        acc.add(v);
    }
    acc.value() / n as f64
}

/// `𝓛_S(W) = (1/n) Σ ℓ(y_i f_W(x_i))`.
pub fn empirical_risk(params: &NetworkParams, data: &LabeledDataset) -> Result<RiskEval> {
    let margins = margins(params, data)?;
    let risk = mean_of(margins.iter().map(|&z| logistic_loss(z)), margins.len());
    Ok(RiskEval { risk, margins })
}

/// How per-sample gradients are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientScale {
    /// Gradient of the mean risk `𝓛_S`.
    #[default]
    Mean,
    /// Gradient of the summed loss `n·𝓛_S`.
    Sum,
}

/// Risk, margins and risk gradient from a single pass over the data.
#[derive(Debug, Clone)]
pub struct RiskGradient {
    pub risk: f64,
    pub margins: Vec<f64>,
    pub gradient: GradientSet,
}

/// `∂𝓛_S/∂Wˡ = (1/n) Σ_i y_i ℓ′(y_i f(x_i)) ∂f(x_i)/∂Wˡ`.
///
/// Each entry is accumulated over samples in index order, so the result does
/// not depend on how rows are split across threads.
pub fn risk_gradient(params: &NetworkParams, data: &LabeledDataset) -> Result<GradientSet> {
    Ok(risk_and_gradient(params, data, GradientScale::Mean)?.gradient)
}

pub fn risk_and_gradient(params: &NetworkParams, data: &LabeledDataset, scale: GradientScale) -> Result<RiskGradient> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len();
    let per_sample: Vec<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> = data
        .inputs
        .par_iter()
        .zip(data.labels.par_iter())
        .map(|(x, &y)| {
            let (f, trace) = forward_with_trace(params, x)?;
            let back = backprop_vectors(params, &trace)?;
            Ok((y * f, back, trace.hidden))
        })
        .collect::<Result<_>>()?;
    let margins: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
    let risk = mean_of(margins.iter().map(|&z| logistic_loss(z)), n);
    let coef: Vec<f64> = data
        .labels
        .iter()
        .zip(&margins)
        .map(|(&y, &z)| match scale {
            GradientScale::Mean => y * logistic_loss_grad(z) / n as f64,
            GradientScale::Sum => y * logistic_loss_grad(z),
        })
        .collect();

    let cfg = params.config();
    let mut layers = Vec::with_capacity(cfg.depth);
    for l in 0..cfg.depth {
        let (rows, cols) = cfg.layer_shape(l + 1);
        let mut g = Matrix::zeros(rows, cols);
        g.as_mut_slice().par_chunks_mut(cols).enumerate().for_each(|(r, out)| {
            for (i, (_, back, hidden)) in per_sample.iter().enumerate() {
                let gr = back[l][r];
                if gr == 0.0 || coef[i] == 0.0 {
                    continue;
                }
                for (o, &h) in out.iter_mut().zip(&hidden[l]) {
                    *o += coef[i] * (gr * h);
                }
            }
        });
        layers.push(g);
    }
    let gradient = GradientSet { layers };
    if !gradient.is_finite() {
        return Err(Error::NonFinite("risk gradient".into()));
    }
    Ok(RiskGradient { risk, margins, gradient })
}

/// One step `Wˡ ← Wˡ − η ∂𝓛_S/∂Wˡ`; the output layer is untouched.
pub fn gd_step(params: &NetworkParams, data: &LabeledDataset, eta: f64) -> Result<NetworkParams> {
    if !(eta > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {eta}")));
    }
    params.add_scaled(&risk_gradient(params, data)?, -eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub snapshot_every: usize,
    #[serde(default = "yes")]
    pub step_size_guard: bool,
    #[serde(default)]
    pub gradient_scale: GradientScale,
    #[serde(default)]
    pub snapshot_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl TrainConfig {
    pub fn new(eta: f64, steps: usize) -> Self {
        Self {
            eta,
            steps,
            snapshot_every: 1,
            step_size_guard: true,
            gradient_scale: GradientScale::Mean,
            snapshot_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be positive and finite, got {}", self.eta)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Step actually applied to the mean-risk gradient.
    pub fn effective_eta(&self, n: usize) -> f64 {
        match self.gradient_scale {
            GradientScale::Mean => self.eta,
            GradientScale::Sum => self.eta * n as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub enum SnapshotStore {
    Memory(Box<NetworkParams>),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub store: SnapshotStore,
}

impl Snapshot {
    pub fn load(&self) -> Result<NetworkParams> {
        match &self.store {
            SnapshotStore::Memory(p) => Ok((**p).clone()),
            SnapshotStore::File(path) => Ok(checkpoint::load(path)?.0),
        }
    }
}

/// Per-step series of a training run plus its snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub dist_from_init: Vec<f64>,
    pub dist_from_init_sq: Vec<f64>,
    pub dist_from_ref: Option<Vec<f64>>,
    pub dist_from_ref_sq: Option<Vec<f64>>,
    pub grad_norm: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub final_params: NetworkParams,
    /// `(step, risk)` where training was aborted, if it was.
    pub diverged: Option<(usize, f64)>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Turns an aborted run into an error.
    pub fn into_result(self) -> Result<Self> {
        match self.diverged {
            Some((step, risk)) => Err(Error::Diverged { step, risk }),
            None => Ok(self),
        }
    }

    /// Columns `step, train_loss, dist_from_init, dist_from_ref, grad_norm`;
    /// `dist_from_ref` is empty when no reference was given.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,train_loss,dist_from_init,dist_from_ref,grad_norm\n");
        for k in 0..self.steps.len() {
            let dref = self.dist_from_ref.as_ref().map(|d| fmt17(d[k])).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.steps[k],
                fmt17(self.train_loss[k]),
                fmt17(self.dist_from_init[k]),
                dref,
                fmt17(self.grad_norm[k])
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn train(params0: &NetworkParams, data: &LabeledDataset, cfg: &TrainConfig) -> Result<Trajectory> {
    train_with_reference(params0, data, cfg, None)
}

/// Runs `T` full-batch steps, recording every step's risk, distances and gradient norm.
///
/// A run whose risk exceeds [`DIVERGENCE_RISK`] (or becomes non-finite) stops early
/// and returns the partial trajectory with `diverged` set.
pub fn train_with_reference(
    params0: &NetworkParams,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    reference: Option<&NetworkParams>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let depth = params0.depth() as f64;
    if cfg.step_size_guard && cfg.eta > 4.0 / (5.0 * depth) {
        let msg = format!(
            "step size {} exceeds 4/(5L) = {:.6}; the trajectory bound of the lazy-regime analysis assumes eta <= 4/(5L)",
            cfg.eta,
            4.0 / (5.0 * depth)
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let file_snapshots = params0.width() > FILE_SNAPSHOT_WIDTH && cfg.snapshot_dir.is_some();
    let snap = |step: usize, p: &NetworkParams| -> Result<Snapshot> {
        let store = match (&cfg.snapshot_dir, file_snapshots) {
            (Some(dir), true) => {
                let path = dir.join(format!("step_{step:06}.ckpt"));
                checkpoint::save(&path, p, step as u64)?;
                SnapshotStore::File(path)
            }
            _ => SnapshotStore::Memory(Box::new(p.clone())),
        };
        Ok(Snapshot { step, store })
    };

    let mut traj = Trajectory {
        steps: Vec::with_capacity(cfg.steps + 1),
        train_loss: Vec::with_capacity(cfg.steps + 1),
        dist_from_init: Vec::with_capacity(cfg.steps + 1),
        dist_from_init_sq: Vec::with_capacity(cfg.steps + 1),
        dist_from_ref: reference.map(|_| Vec::with_capacity(cfg.steps + 1)),
        dist_from_ref_sq: reference.map(|_| Vec::with_capacity(cfg.steps + 1)),
        grad_norm: Vec::with_capacity(cfg.steps + 1),
        snapshots: Vec::new(),
        final_params: params0.clone(),
        diverged: None,
        warnings,
    };
    let eta = cfg.effective_eta(data.len());
    let mut w = params0.clone();
    for k in 0..=cfg.steps {
        let rg = risk_and_gradient(&w, data, GradientScale::Mean)?;
        let d0 = net::squared_distance(&w, params0)?;
        traj.steps.push(k);
        traj.train_loss.push(rg.risk);
        traj.dist_from_init_sq.push(d0);
        traj.dist_from_init.push(d0.sqrt());
        if let Some(r) = reference {
            let dr = net::squared_distance(&w, r)?;
            traj.dist_from_ref_sq.as_mut().expect("reference series").push(dr);
            traj.dist_from_ref.as_mut().expect("reference series").push(dr.sqrt());
        }
        traj.grad_norm.push(rg.gradient.frobenius_norm());
        if k % cfg.snapshot_every == 0 || k == cfg.steps {
            traj.snapshots.push(snap(k, &w)?);
        }
        if !rg.risk.is_finite() || rg.risk > DIVERGENCE_RISK {
            log::error!("training diverged at step {k}: risk {}", rg.risk);
            traj.diverged = Some((k, rg.risk));
            break;
        }
        if k == cfg.steps {
            break;
        }
        w = w.add_scaled(&rg.gradient, -eta)?;
        if !w.is_finite() {
            traj.diverged = Some((k + 1, f64::NAN));
            break;
        }
    }
    traj.final_params = w;
    Ok(traj)
}

/// `F_S(W̄) = 3ηT 𝓛_S(W̄) + ‖W(0) − W̄‖_F²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsValue {
    pub value: f64,
    pub reference_risk: f64,
    pub dist_sq: f64,
    /// Whether the normalisation `F_S(W̄) ≥ 1` holds.
    pub at_least_one: bool,
}

pub fn eval_f_s(
    reference: &NetworkParams,
    init: &NetworkParams,
    data: &LabeledDataset,
    eta: f64,
    steps: usize,
) -> Result<FsValue> {
    let reference_risk = empirical_risk(reference, data)?.risk;
    let dist_sq = net::squared_distance(init, reference)?;
    Ok(f_s_formula(reference_risk, dist_sq, eta, steps))
}

pub fn f_s_formula(reference_risk: f64, dist_sq: f64, eta: f64, steps: usize) -> FsValue {
    let value = 3.0 * eta * steps as f64 * reference_risk + dist_sq;
    FsValue { value, reference_risk, dist_sq, at_least_one: value >= 1.0 }
}

/// `F̃_S(W̄) = (1/n) Σ |ℓ′(y_i f_W̄(x_i))|`.
pub fn eval_ftilde_s(reference: &NetworkParams, data: &LabeledDataset) -> Result<f64> {
    let m = margins(reference, data)?;
    Ok(mean_of(m.iter().map(|&z| logistic_loss_grad(z).abs()), m.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{xor_sample, XorSpec};
    use crate::net::{init_symmetric, NetworkConfig};

    #[test]
    fn loss_values() {
        assert_eq!(logistic_loss(0.0), std::f64::consts::LN_2);
        let big = logistic_loss(50.0);
        assert!(big > 0.0 && big <= 2e-22);
        assert!(logistic_loss(700.0) > 0.0);
        assert!((logistic_loss(-3.0) - 3.048_587_351_573_742).abs() < 1e-14);
        assert_eq!(logistic_loss_grad(0.0), -0.5);
        let g = logistic_loss_grad(50.0);
        assert!(g < 0.0 && g > -2e-22);
        assert!((logistic_loss_grad(-2.0) + 0.880_797_077_977_882_4).abs() < 1e-15);
        assert!(logistic_loss_grad(1000.0) <= 0.0);
        assert_eq!(logistic_loss_grad(-1000.0), -1.0);
    }

    #[test]
    fn init_risk_is_ln2_and_lower_layers_are_flat() {
        let p = init_symmetric(&NetworkConfig::new(3, 8, 4, 1)).unwrap();
        let data = xor_sample(&XorSpec::new(4, 2).unwrap(), 5).unwrap();
        let r = empirical_risk(&p, &data).unwrap();
        assert_eq!(r.risk, std::f64::consts::LN_2);
        let g = risk_gradient(&p, &data).unwrap();
        for l in 0..2 {
            assert!(g.layers[l].as_slice().iter().all(|&v| v == 0.0));
        }
        assert_eq!(eval_ftilde_s(&p, &data).unwrap(), 0.5);
    }

    #[test]
    fn f_s_arithmetic() {
        let v = f_s_formula(std::f64::consts::LN_2, 0.0, 0.1, 500);
        assert!((v.value - 103.972_077_083_991_8).abs() < 1e-9);
        assert!((f_s_formula(0.01, 4.0, 0.1, 500).value - 5.5).abs() < 1e-12);
        assert!(!f_s_formula(0.0, 0.5, 0.1, 1).at_least_one);
    }

    #[test]
    fn zero_steps_records_init_only() {
        let p = init_symmetric(&NetworkConfig::new(1, 8, 4, 0)).unwrap();
        let data = xor_sample(&XorSpec::new(4, 0).unwrap(), 4).unwrap();
        let t = train(&p, &data, &TrainConfig::new(0.1, 0)).unwrap();
        assert_eq!(t.steps, vec![0]);
        assert_eq!(t.snapshots.len(), 1);
        assert_eq!(t.final_params, p);
    }

    #[test]
    fn one_step_moves_by_eta_times_gradient() {
        let p = init_symmetric(&NetworkConfig::new(2, 8, 4, 3)).unwrap();
        let data = xor_sample(&XorSpec::new(4, 3).unwrap(), 4).unwrap();
        let g = risk_gradient(&p, &data).unwrap().frobenius_norm();
        let q = gd_step(&p, &data, 0.1).unwrap();
        let d = net::frobenius_distance(&p, &q).unwrap().total;
        assert!((d - 0.1 * g).abs() <= 1e-12 * d.max(1.0));
        assert_eq!(q.output(), p.output());
    }

    #[test]
    fn sum_scale_equals_scaled_step() {
        let p = init_symmetric(&NetworkConfig::new(1, 8, 4, 3)).unwrap();
        let data = xor_sample(&XorSpec::new(4, 3).unwrap(), 4).unwrap();
        let mean = risk_and_gradient(&p, &data, GradientScale::Mean).unwrap().gradient;
        let sum = risk_and_gradient(&p, &data, GradientScale::Sum).unwrap().gradient;
        for (a, b) in mean.layers.iter().zip(&sum.layers) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((4.0 * x - y).abs() <= 1e-15 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn trajectory_csv_shape() {
        let p = init_symmetric(&NetworkConfig::new(1, 8, 4, 0)).unwrap();
        let data = xor_sample(&XorSpec::new(4, 0).unwrap(), 4).unwrap();
        let mut cfg = TrainConfig::new(0.1, 3);
        cfg.snapshot_every = 2;
        let t = train_with_reference(&p, &data, &cfg, Some(&p)).unwrap();
        assert_eq!(t.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(), vec![0, 2, 3]);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().all(|l| l.split(',').count() == 5));
    }
}
