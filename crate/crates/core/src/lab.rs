//! Experiment commands, JSON configs and run manifests.
//!
//! Every command writes its artifacts into an output directory and finishes by
//! writing `manifest.json`, whether or not the command succeeded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::checkpoint;
use crate::data::{population_metrics, sphere_sample, xor_population, xor_sample, LabeledDataset, XorSpec};
use crate::error::{Error, Result};
use crate::margin::{build_reference, solve_margin, tangent_features, MarginCertificate, ReferenceModel};
use crate::net::{self, init_symmetric, NetworkConfig, NetworkParams};
use crate::objective::{
    eval_f_s, logistic_loss, train, train_with_reference, FsValue, GradientScale, TrainConfig, Trajectory,
};
use crate::probes::{
    self, descent_probe, eval_generalization_bound, gradient_gram, linear_fit, power_fit, rademacher_linearized_value,
    BoundInputs, BoundPoint, Check, IndicatorCase, InitNormOptions, LinearFit, PerturbationKind, PowerFit,
    ProbeReport, ScalingSweep, SignDraws,
};
use crate::rng::{self, derive_seed, Stream};

pub const CODE_VERSION: &str = concat!("ntklab ", env!("CARGO_PKG_VERSION"));

pub const MANIFEST_FILE: &str = "manifest.json";

/// Salt separating the data stream of a run from its weight stream.
pub const DATA_SALT: u64 = 0xda7a;

/// Seeds used when a config names none.
pub const DEFAULT_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Tolerance on each mean test error against the reference tables.
pub const TABLE_TOLERANCE: f64 = 0.10;

/// Accepted range of the fitted slope of test error against `d²/n`.
pub const SLOPE_RANGE: (f64, f64) = (0.10, 0.20);

pub const MIN_SLOPE_R2: f64 = 0.8;

/// Reference test errors for `d = 6`, `m = 128`, `T = 500`, `η = 0.1`, by `n`.
pub const REFERENCE_VARY_N: [(usize, f64); 8] = [
    (10, 0.4625),
    (12, 0.4500),
    (14, 0.3625),
    (16, 0.3438),
    (18, 0.3219),
    (20, 0.3063),
    (24, 0.2469),
    (28, 0.2062),
];

/// Reference test errors for `n = 64`, same settings, by `d`.
pub const REFERENCE_VARY_D: [(usize, f64); 6] =
    [(7, 0.0125), (8, 0.1313), (9, 0.2484), (10, 0.3080), (11, 0.3365), (12, 0.4190)];

/// Accepted log-log exponent of `1/γ` against `d` on 2-XOR.
pub const MARGIN_TREND_RANGE: (f64, f64) = (0.7, 1.4);

pub const ETA_T_NOTE: &str = "the analysis takes eta*T of order n, while this experiment fixes T and eta across n";

pub const SUM_SCALE_NOTE: &str =
    "gradient_scale = sum: each step uses the summed (not averaged) per-sample loss gradient, i.e. step eta*n on the mean risk";

/// Fixed-width scientific formatting with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Keys a flat JSON config may contain.
pub trait ConfigKeys {
    const KEYS: &'static [&'static str];
}

/// Parses a JSON object, rejecting every key outside `T::KEYS` in one error.
pub fn parse_config<T: DeserializeOwned + ConfigKeys>(text: &str) -> Result<T> {
    let value: Value = serde_json::from_str(text)?;
    config_from_value(value)
}

pub fn config_from_value<T: DeserializeOwned + ConfigKeys>(value: Value) -> Result<T> {
    let obj = value.as_object().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    let unknown: Vec<String> = obj.keys().filter(|k| !T::KEYS.contains(&k.as_str())).cloned().collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownKeys(unknown));
    }
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config<T: DeserializeOwned + ConfigKeys>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => parse_config(&std::fs::read_to_string(p)?),
        None => parse_config("{}"),
    }
}

/// Parses `"0,1,2"` or `"0..10"` (half-open).
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    let seeds = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect::<Result<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<PathBuf>,
    /// Wall-clock seconds by phase.
    pub timings: BTreeMap<String, f64>,
    pub version: String,
    pub notes: Vec<String>,
    pub results: Value,
    pub checks: Vec<Check>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.into(),
            status: RunStatus::Running,
            error: None,
            config,
            seeds,
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
            version: CODE_VERSION.into(),
            notes: Vec::new(),
            results: Value::Null,
            checks: Vec::new(),
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        let s = s.into();
        if !self.notes.contains(&s) {
            self.notes.push(s);
        }
    }

    pub fn artifact(&mut self, p: PathBuf) {
        self.artifacts.push(p);
    }

    pub fn add_checks(&mut self, report: &ProbeReport) {
        for c in &report.checks {
            self.checks.push(Check { name: format!("{}::{}", report.name, c.name), ..c.clone() });
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!("{} {} value={} bound={}", if c.passed { "PASS" } else { "FAIL" }, c.name, fmt17(c.value), c.bound)
            })
            .collect()
    }

    /// Drops artifact paths that do not exist (with a note) and writes the
    /// manifest as the last file of the run.
    pub fn write(&mut self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let (present, missing): (Vec<PathBuf>, Vec<PathBuf>) = self.artifacts.drain(..).partition(|p| p.exists());
        for p in missing {
            self.note(format!("artifact {} was not written", p.display()));
        }
        self.artifacts = present;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Runs `body`, then records status and timing and writes the manifest.
/// Returns the manifest together with the command's own result.
pub fn run_with_manifest<F>(command: &str, config: Value, seeds: Vec<u64>, out: &Path, body: F) -> (RunManifest, Result<()>)
where
    F: FnOnce(&mut RunManifest) -> Result<()>,
{
    let mut manifest = RunManifest::new(command, config, seeds);
    let start = Instant::now();
    let res = std::fs::create_dir_all(out).map_err(Error::from).and_then(|_| body(&mut manifest));
    manifest.timings.insert("total".into(), start.elapsed().as_secs_f64());
    match &res {
        Ok(()) => manifest.status = RunStatus::Ok,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
        }
    }
    match manifest.write(out) {
        Ok(_) => (manifest, res),
        Err(e) => (manifest, res.and(Err(e))),
    }
}

fn one_layer() -> usize {
    1
}

fn default_eta() -> f64 {
    0.1
}

fn default_steps() -> usize {
    500
}

fn default_width() -> usize {
    128
}

fn default_delta() -> f64 {
    0.1
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iters() -> usize {
    100_000
}

/// A 2-XOR training run: weights seeded by `seed`, sample by `derive_seed(seed, DATA_SALT)`.
#[derive(Debug, Clone)]
pub struct XorRun {
    pub init: NetworkParams,
    pub spec: XorSpec,
    pub data: LabeledDataset,
}

impl XorRun {
    pub fn new(depth: usize, width: usize, d: usize, n: usize, seed: u64) -> Result<Self> {
        let init = init_symmetric(&NetworkConfig::new(depth, width, d, seed))?;
        let spec = XorSpec::new(d, derive_seed(seed, DATA_SALT))?;
        let data = xor_sample(&spec, n)?;
        Ok(Self { init, spec, data })
    }

    pub fn population(&self) -> Result<LabeledDataset> {
        xor_population(&self.spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Noisy 2-XOR sample of size `n`; `flip_duplicate` appends a copy of the
    /// first point with the opposite label.
    Xor {
        n: usize,
        #[serde(default)]
        flip_duplicate: bool,
    },
}

impl DatasetSpec {
    fn n(&self) -> usize {
        match self {
            DatasetSpec::Xor { n, .. } => *n,
        }
    }

    fn build(&self, spec: &XorSpec) -> Result<LabeledDataset> {
        match *self {
            DatasetSpec::Xor { n, flip_duplicate } => {
                let mut data = xor_sample(spec, n)?;
                if flip_duplicate {
                    let mut inputs = data.inputs.clone();
                    let mut labels = data.labels.clone();
                    inputs.push(data.inputs[0].clone());
                    labels.push(-data.labels[0]);
                    data = LabeledDataset::new(inputs, labels, format!("{} + flipped copy of point 0", data.provenance))?;
                }
                Ok(data)
            }
        }
    }
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Xor { n: 20, flip_duplicate: false }
    }
}

/// Outcome of the margin-built reference chain on one training run.
#[derive(Debug, Clone)]
pub struct ReferenceChain {
    pub certificate: MarginCertificate,
    pub reference: ReferenceModel,
    pub f_s: FsValue,
    pub trajectory: Trajectory,
    pub descent: ProbeReport,
}

/// Certifies the tangent margin at `init`, builds `W̄ = W(0) + (2 log T/γ) W_*`
/// with `T = cfg.steps`, and trains while tracking `‖W(t) − W̄‖`.
pub fn reference_chain(init: &NetworkParams, data: &LabeledDataset, cfg: &TrainConfig, tol: f64) -> Result<ReferenceChain> {
    let feats = tangent_features(init, data)?;
    let certificate = solve_margin(&feats, tol, default_max_iters())?;
    drop(feats);
    let reference = build_reference(init, &certificate, cfg.steps as f64, data)?;
    let eta = cfg.effective_eta(data.len());
    let f_s = eval_f_s(&reference.params, init, data, eta, cfg.steps)?;
    let trajectory = train_with_reference(init, data, cfg, Some(&reference.params))?.into_result()?;
    let descent = descent_probe(&trajectory, reference.risk, eta, f_s.value)?;
    Ok(ReferenceChain { certificate, reference, f_s, trajectory, descent })
}

/// Comparison of `|𝓛 − 𝓛_S|` with the evaluated bound at every snapshot.
///
/// The Rademacher term at step `t` is the closed-form linearised value at radius
/// `‖W(t) − W(0)‖_F`, averaged over `draws` random sign vectors.
pub fn bound_report(
    init: &NetworkParams,
    chain: &ReferenceChain,
    data: &LabeledDataset,
    population: &LabeledDataset,
    cfg: &TrainConfig,
    delta: f64,
    draws: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let n = data.len();
    let gram = gradient_gram(init, &data.inputs)?;
    let unit = (0..draws)
        .map(|k| {
            let mut s = rng::stream(seed, Stream::Signs, k as u64, n as u64);
            let e: Vec<f64> = (0..n).map(|_| rng::sign(&mut s)).collect();
            rademacher_linearized_value(&gram, 1.0, &e)
        })
        .sum::<f64>()
        / draws.max(1) as f64;
    let ref_pop = crate::objective::margins(&chain.reference.params, population)?;
    let ref_pop_risk = ref_pop.iter().map(|&z| logistic_loss(z)).sum::<f64>() / ref_pop.len() as f64;
    let g_sup = ref_pop.iter().map(|&z| logistic_loss(z)).fold(0.0, f64::max);
    let inputs = BoundInputs {
        eta: cfg.effective_eta(n),
        steps: cfg.steps as f64,
        delta,
        n,
        depth: init.depth(),
        width: init.width(),
        reference_population_risk: ref_pop_risk,
        g_sup,
        dist_sq: net::squared_distance(&chain.reference.params, init)?,
    };
    let traj = &chain.trajectory;
    let mut points = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let p = snap.load()?;
        let idx = traj.steps.iter().position(|&s| s == snap.step).expect("snapshot step is recorded");
        let pop = population_metrics(&p, population)?;
        points.push(BoundPoint {
            step: snap.step,
            empirical_risk: traj.train_loss[idx],
            population_risk: pop.logistic_loss,
            rademacher: traj.dist_from_init[idx] * unit,
        });
    }
    let mut r = eval_generalization_bound(&inputs, &points)?;
    r.meta.seed = init.config().seed;
    r.meta.d = init.input_dim();
    r.meta.notes.push(format!("Rademacher term: linearised closed form at the current radius, {draws} sign draws"));
    Ok(r)
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommand {
    #[serde(rename = "L", default = "one_layer")]
    pub depth: usize,
    #[serde(default = "default_width")]
    pub m: usize,
    #[serde(default = "six")]
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(rename = "T", default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub probes: Vec<String>,
    #[serde(default)]
    pub gradient_scale: GradientScale,
    #[serde(default = "yes")]
    pub step_size_guard: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn six() -> usize {
    6
}

fn yes() -> bool {
    true
}

fn default_snapshot_every() -> usize {
    1
}

impl ConfigKeys for TrainCommand {
    const KEYS: &'static [&'static str] = &[
        "L",
        "m",
        "d",
        "seed",
        "seeds",
        "eta",
        "T",
        "dataset",
        "snapshot_every",
        "probes",
        "gradient_scale",
        "step_size_guard",
        "delta",
    ];
}

/// Probes `train` can run on its own trajectory.
pub const TRAIN_PROBES: [&str; 4] = ["descent", "bound", "rademacher-iterates", "margin"];

impl TrainCommand {
    pub fn seed_list(&self, cli: Option<&[u64]>) -> Vec<u64> {
        cli.map(<[u64]>::to_vec).or_else(|| self.seeds.clone()).unwrap_or_else(|| vec![self.seed])
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eta: self.eta,
            steps: self.steps,
            snapshot_every: self.snapshot_every,
            step_size_guard: self.step_size_guard,
            gradient_scale: self.gradient_scale,
            snapshot_dir: None,
        }
    }

    fn validate(&self) -> Result<()> {
        NetworkConfig::new(self.depth, self.m, self.d, 0).validate()?;
        self.train_config().validate()?;
        for p in &self.probes {
            if !TRAIN_PROBES.contains(&p.as_str()) {
                return Err(Error::UnknownProbe {
                    name: p.clone(),
                    catalog: TRAIN_PROBES.iter().map(|s| s.to_string()).collect(),
                });
            }
        }
        if self.dataset.n() == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub steps_run: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub population_zero_one_error: Option<f64>,
    pub population_logistic_loss: Option<f64>,
    pub diverged: bool,
    pub gamma: Option<f64>,
    pub f_s: Option<f64>,
}

pub fn cmd_train(cmd: &TrainCommand, seeds: &[u64], out: &Path, plot: bool, manifest: &mut RunManifest) -> Result<()> {
    cmd.validate()?;
    if cmd.gradient_scale == GradientScale::Sum {
        manifest.note(SUM_SCALE_NOTE);
    }
    manifest.note(ETA_T_NOTE);
    let wants = |p: &str| cmd.probes.iter().any(|q| q == p);
    let needs_reference = wants("descent") || wants("bound") || wants("margin");
    if needs_reference && cmd.snapshot_every != 1 && wants("descent") {
        return Err(Error::Config("the descent probe needs snapshot_every = 1".into()));
    }
    let mut outcomes = Vec::new();
    for &seed in seeds {
        let t0 = Instant::now();
        let dir = out.join(format!("seed_{seed}"));
        std::fs::create_dir_all(&dir)?;
        let init = init_symmetric(&NetworkConfig::new(cmd.depth, cmd.m, cmd.d, seed))?;
        let spec = XorSpec::new(cmd.d, derive_seed(seed, DATA_SALT))?;
        let data = cmd.dataset.build(&spec)?;
        let population = if cmd.d <= crate::data::MAX_POPULATION_DIM { Some(xor_population(&spec)?) } else { None };
        let mut cfg = cmd.train_config();
        cfg.snapshot_dir = Some(dir.join("snapshots"));
        if cmd.m > crate::objective::FILE_SNAPSHOT_WIDTH {
            std::fs::create_dir_all(dir.join("snapshots"))?;
        }

        let data_csv = dir.join("train.csv");
        data.write_csv(&data_csv)?;
        manifest.artifact(data_csv);
        let init_path = dir.join("init.ckpt");
        checkpoint::save(&init_path, &init, 0)?;
        manifest.artifact(init_path);

        let mut gamma = None;
        let mut f_s = None;
        let (traj, chain) = if needs_reference {
            let feats = tangent_features(&init, &data)?;
            let cert = solve_margin(&feats, default_tol(), default_max_iters())?;
            drop(feats);
            gamma = Some(cert.gamma);
            let cert_path = dir.join("certificate.json");
            std::fs::write(&cert_path, serde_json::to_string_pretty(&cert)?)?;
            manifest.artifact(cert_path);
            if cert.gamma > 0.0 && cmd.steps >= 2 && (wants("descent") || wants("bound")) {
                let chain = reference_chain(&init, &data, &cfg, default_tol())?;
                f_s = Some(chain.f_s.value);
                if wants("descent") {
                    manifest.add_checks(&chain.descent);
                    manifest.artifacts.extend(chain.descent.write(&dir, plot)?);
                }
                (chain.trajectory.clone(), Some(chain))
            } else {
                if wants("descent") || wants("bound") {
                    manifest.note(format!("seed {seed}: no reference model (gamma = {}, T = {})", cert.gamma, cmd.steps));
                }
                (train(&init, &data, &cfg)?.into_result()?, None)
            }
        } else {
            (train(&init, &data, &cfg)?.into_result()?, None)
        };
        for w in &traj.warnings {
            manifest.note(w.clone());
        }

        if let (Some(chain), Some(pop), true) = (&chain, &population, wants("bound")) {
            let r = bound_report(&init, chain, &data, pop, &cfg, cmd.delta, 64, seed)?;
            manifest.add_checks(&r);
            manifest.artifacts.extend(r.write(&dir, plot)?);
        }
        if wants("rademacher-iterates") {
            let iterates = traj.snapshots.iter().map(|s| s.load()).collect::<Result<Vec<_>>>()?;
            let r = probes::rademacher_iterates(&iterates, &data.inputs, SignDraws::Random { draws: 256, seed })?;
            manifest.artifacts.extend(r.write(&dir, plot)?);
        }

        let traj_csv = dir.join("trajectory.csv");
        traj.write_csv(&traj_csv)?;
        manifest.artifact(traj_csv);
        if cmd.steps > 0 {
            let final_path = dir.join("final.ckpt");
            checkpoint::save(&final_path, &traj.final_params, *traj.steps.last().unwrap_or(&0) as u64)?;
            manifest.artifact(final_path);
        }
        for s in &traj.snapshots {
            if let crate::objective::SnapshotStore::File(p) = &s.store {
                manifest.artifact(p.clone());
            }
        }
        let pop = population.as_ref().map(|p| population_metrics(&traj.final_params, p)).transpose()?;
        outcomes.push(SeedOutcome {
            seed,
            steps_run: *traj.steps.last().unwrap_or(&0),
            initial_train_loss: traj.train_loss[0],
            final_train_loss: *traj.train_loss.last().unwrap_or(&f64::NAN),
            population_zero_one_error: pop.map(|p| p.zero_one_error),
            population_logistic_loss: pop.map(|p| p.logistic_loss),
            diverged: traj.diverged.is_some(),
            gamma,
            f_s,
        });
        manifest.timings.insert(format!("seed_{seed}"), t0.elapsed().as_secs_f64());
        if let Some((step, risk)) = traj.diverged {
            manifest.results = serde_json::json!({ "runs": outcomes });
            return Err(Error::Diverged { step, risk });
        }
    }
    let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.population_zero_one_error).collect();
    let (mean, std) = mean_std(&errors);
    manifest.results = serde_json::json!({
        "runs": outcomes,
        "mean_population_zero_one_error": if errors.is_empty() { Value::Null } else { mean.into() },
        "std_population_zero_one_error": if errors.is_empty() { Value::Null } else { std.into() },
    });
    Ok(())
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

// ---------------------------------------------------------------------------
// xor-sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vary {
    N,
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XorSweepCommand {
    #[serde(default = "vary_n")]
    pub vary: Vary,
    /// Values of the varied parameter; defaults to the reference table's.
    #[serde(default)]
    pub values: Option<Vec<usize>>,
    /// Fixed dimension when varying `n`.
    #[serde(default = "six")]
    pub d: usize,
    /// Fixed sample size when varying `d`.
    #[serde(default = "sixty_four")]
    pub n: usize,
    #[serde(default = "default_width")]
    pub m: usize,
    #[serde(rename = "L", default = "one_layer")]
    pub depth: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(rename = "T", default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "sum_scale")]
    pub gradient_scale: GradientScale,
}

fn vary_n() -> Vary {
    Vary::N
}

fn sixty_four() -> usize {
    64
}

fn sum_scale() -> GradientScale {
    GradientScale::Sum
}

impl ConfigKeys for XorSweepCommand {
    const KEYS: &'static [&'static str] = &["vary", "values", "d", "n", "m", "L", "eta", "T", "seeds", "gradient_scale"];
}

impl Default for XorSweepCommand {
    fn default() -> Self {
        parse_config("{}").expect("defaults parse")
    }
}

impl XorSweepCommand {
    pub fn values(&self) -> Vec<usize> {
        self.values.clone().unwrap_or_else(|| match self.vary {
            Vary::N => REFERENCE_VARY_N.iter().map(|r| r.0).collect(),
            Vary::D => REFERENCE_VARY_D.iter().map(|r| r.0).collect(),
        })
    }

    pub fn seed_list(&self, cli: Option<&[u64]>) -> Vec<u64> {
        cli.map(<[u64]>::to_vec).or_else(|| self.seeds.clone()).unwrap_or_else(|| DEFAULT_SEEDS.to_vec())
    }

    /// `(n, d)` of each cell.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.values()
            .into_iter()
            .map(|v| match self.vary {
                Vary::N => (v, self.d),
                Vary::D => (self.n, v),
            })
            .collect()
    }

    fn reference_errors(&self) -> Option<Vec<f64>> {
        let defaults = self.m == 128 && self.depth == 1 && self.eta == 0.1 && self.steps == 500;
        if !defaults {
            return None;
        }
        let table: &[(usize, f64)] = match (self.vary, self.d, self.n) {
            (Vary::N, 6, _) => &REFERENCE_VARY_N,
            (Vary::D, _, 64) => &REFERENCE_VARY_D,
            _ => return None,
        };
        self.values().iter().map(|v| table.iter().find(|r| r.0 == *v).map(|r| r.1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub d: usize,
    pub d2_over_n: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub seeds: Vec<u64>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Least-squares line of mean error against `d²/n` with a free intercept.
    pub fit: Option<LinearFit>,
}

pub const SWEEP_CSV_HEADER: &str = "n,d,d2_over_n,test_error,std,seeds";

impl SweepResult {
    /// Aggregates per-seed errors, one row per cell, sorted by `d²/n` (stable).
    pub fn from_cells(cells: &[(usize, usize)], seeds: &[u64], errors: &[Vec<f64>]) -> Result<Self> {
        if cells.len() != errors.len() || errors.iter().any(|e| e.len() != seeds.len()) {
            return Err(Error::Shape("sweep errors do not match cells x seeds".into()));
        }
        let mut rows: Vec<SweepRow> = cells
            .iter()
            .zip(errors)
            .map(|(&(n, d), e)| {
                let (mean, std) = mean_std(e);
                SweepRow {
                    n,
                    d,
                    d2_over_n: (d * d) as f64 / n as f64,
                    mean_error: mean,
                    std_error: std,
                    seeds: seeds.to_vec(),
                    errors: e.clone(),
                }
            })
            .collect();
        rows.sort_by(|a, b| a.d2_over_n.total_cmp(&b.d2_over_n));
        let xs: Vec<f64> = rows.iter().map(|r| r.d2_over_n).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.mean_error).collect();
        let fit = linear_fit(&xs, &ys).ok();
        Ok(Self { rows, fit })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for r in &self.rows {
            let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                r.d,
                fmt17(r.d2_over_n),
                fmt17(r.mean_error),
                fmt17(r.std_error),
                seeds.join(";")
            );
        }
        out
    }

    /// Plain-text table in the layout of the reference tables, plus std.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let row = |label: &str, f: &dyn Fn(&SweepRow) -> String| {
            let cells: Vec<String> = self.rows.iter().map(f).collect();
            format!("{label:<12}| {}\n", cells.join(" | "))
        };
        out += &row("n", &|r| format!("{:>7}", r.n));
        out += &row("d", &|r| format!("{:>7}", r.d));
        out += &row("d^2/n", &|r| format!("{:>7.2}", r.d2_over_n));
        out += &row("test error", &|r| format!("{:>7.4}", r.mean_error));
        out += &row("std", &|r| format!("{:>7.4}", r.std_error));
        if let Some(f) = &self.fit {
            let _ = writeln!(out, "fit: error = {:.4} + {:.4} * d^2/n (r^2 = {:.3})", f.intercept, f.slope, f.r2);
        }
        out
    }
}

/// Population 0-1 error of one trained 2-XOR run.
pub fn xor_cell_error(depth: usize, width: usize, d: usize, n: usize, seed: u64, cfg: &TrainConfig) -> Result<(f64, Trajectory)> {
    let run = XorRun::new(depth, width, d, n, seed)?;
    let traj = train(&run.init, &run.data, cfg)?.into_result()?;
    let err = population_metrics(&traj.final_params, &run.population()?)?.zero_one_error;
    Ok((err, traj))
}

pub fn run_xor_sweep(cmd: &XorSweepCommand, seeds: &[u64], cell_dir: Option<&Path>) -> Result<SweepResult> {
    let cells = cmd.cells();
    if cells.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one value and one seed".into()));
    }
    let cfg = TrainConfig {
        eta: cmd.eta,
        steps: cmd.steps,
        snapshot_every: cmd.steps.max(1),
        step_size_guard: false,
        gradient_scale: cmd.gradient_scale,
        snapshot_dir: None,
    };
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..seeds.len()).map(move |s| (c, s))).collect();
    let flat = jobs
        .par_iter()
        .map(|&(c, s)| {
            let (n, d) = cells[c];
            let (err, traj) = xor_cell_error(cmd.depth, cmd.m, d, n, seeds[s], &cfg)?;
            if let Some(dir) = cell_dir {
                traj.write_csv(&dir.join(format!("n{n}_d{d}_seed{}.csv", seeds[s])))?;
            }
            Ok(err)
        })
        .collect::<Result<Vec<f64>>>()?;
    let errors: Vec<Vec<f64>> = flat.chunks(seeds.len()).map(<[f64]>::to_vec).collect();
    SweepResult::from_cells(&cells, seeds, &errors)
}

/// Checks of a sweep against the reference table: one per row, then the slope.
pub fn sweep_checks(cmd: &XorSweepCommand, result: &SweepResult) -> Vec<Check> {
    let mut checks = Vec::new();
    if let Some(reference) = cmd.reference_errors() {
        let by_value: BTreeMap<usize, f64> = cmd.values().into_iter().zip(reference).collect();
        for r in &result.rows {
            let v = match cmd.vary {
                Vary::N => r.n,
                Vary::D => r.d,
            };
            if let Some(&target) = by_value.get(&v) {
                let dev = (r.mean_error - target).abs();
                checks.push(Check {
                    name: format!("xor-sweep::n{}_d{}_error", r.n, r.d),
                    value: r.mean_error,
                    bound: format!("within {TABLE_TOLERANCE} of {target}"),
                    passed: dev <= TABLE_TOLERANCE,
                });
            }
        }
    }
    if let Some(f) = &result.fit {
        checks.push(Check {
            name: "xor-sweep::slope".into(),
            value: f.slope,
            bound: format!("in [{}, {}]", SLOPE_RANGE.0, SLOPE_RANGE.1),
            passed: f.slope >= SLOPE_RANGE.0 && f.slope <= SLOPE_RANGE.1,
        });
        checks.push(Check {
            name: "xor-sweep::slope_r2".into(),
            value: f.r2,
            bound: format!(">= {MIN_SLOPE_R2}"),
            passed: f.r2 >= MIN_SLOPE_R2,
        });
    }
    checks
}

pub fn cmd_xor_sweep(cmd: &XorSweepCommand, seeds: &[u64], out: &Path, plot: bool, manifest: &mut RunManifest) -> Result<SweepResult> {
    let values = cmd.values();
    let distinct: BTreeSet<usize> = values.iter().copied().collect();
    if distinct.len() < 3 || seeds.len() < 3 {
        return Err(Error::Config(format!(
            "xor-sweep needs at least 3 distinct values and 3 seeds, got {} and {}",
            distinct.len(),
            seeds.len()
        )));
    }
    manifest.note(ETA_T_NOTE);
    if cmd.gradient_scale == GradientScale::Sum {
        manifest.note(SUM_SCALE_NOTE);
    }
    let cell_dir = out.join("cells");
    std::fs::create_dir_all(&cell_dir)?;
    let t0 = Instant::now();
    let result = run_xor_sweep(cmd, seeds, Some(&cell_dir))?;
    manifest.timings.insert("sweep".into(), t0.elapsed().as_secs_f64());
    for (n, d) in cmd.cells() {
        for s in seeds {
            manifest.artifact(cell_dir.join(format!("n{n}_d{d}_seed{s}.csv")));
        }
    }
    let csv = out.join("sweep.csv");
    std::fs::write(&csv, result.to_csv())?;
    manifest.artifact(csv);
    if plot {
        let s = probes::Series::new(
            result.rows.iter().map(|r| r.d2_over_n).collect(),
            result.rows.iter().map(|r| r.mean_error).collect(),
        );
        if s.x.windows(2).all(|w| w[1] > w[0]) {
            let svg = out.join("sweep.svg");
            std::fs::write(&svg, probes::plot::svg_scatter("test error vs d^2/n", &s, false))?;
            manifest.artifact(svg);
        }
    }
    manifest.checks.extend(sweep_checks(cmd, &result));
    manifest.results = serde_json::to_value(&result)?;
    Ok(result)
}

// ---------------------------------------------------------------------------
// margin

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginCommand {
    #[serde(rename = "L", default = "one_layer")]
    pub depth: usize,
    #[serde(default = "default_width")]
    pub m: usize,
    #[serde(default = "six")]
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Horizon `T` used for the reference model.
    #[serde(rename = "T", default = "default_steps")]
    pub steps: usize,
    /// Dimensions for the `1/γ` trend; empty disables it.
    #[serde(default = "trend_dims")]
    pub trend_dims: Vec<usize>,
    #[serde(default = "sixty_four")]
    pub trend_n: usize,
}

fn trend_dims() -> Vec<usize> {
    (4..=10).collect()
}

impl ConfigKeys for MarginCommand {
    const KEYS: &'static [&'static str] =
        &["L", "m", "d", "seed", "dataset", "tol", "max_iters", "T", "trend_dims", "trend_n"];
}

/// `1/γ` against `d` on 2-XOR samples, with a log-log fit.
pub fn margin_trend(depth: usize, m: usize, n: usize, dims: &[usize], seed: u64, tol: f64) -> Result<(Vec<f64>, Option<PowerFit>)> {
    let inv: Vec<f64> = dims
        .par_iter()
        .map(|&d| {
            let run = XorRun::new(depth, m, d, n, seed)?;
            let cert = solve_margin(&tangent_features(&run.init, &run.data)?, tol, default_max_iters())?;
            Ok(if cert.gamma > 0.0 { 1.0 / cert.gamma } else { f64::INFINITY })
        })
        .collect::<Result<_>>()?;
    let fit = if dims.len() >= 2 && inv.iter().all(|v| v.is_finite()) {
        Some(power_fit(&dims.iter().map(|&d| d as f64).collect::<Vec<_>>(), &inv)?)
    } else {
        None
    };
    Ok((inv, fit))
}

pub fn cmd_margin(cmd: &MarginCommand, out: &Path, manifest: &mut RunManifest) -> Result<MarginCertificate> {
    let init = init_symmetric(&NetworkConfig::new(cmd.depth, cmd.m, cmd.d, cmd.seed))?;
    let spec = XorSpec::new(cmd.d, derive_seed(cmd.seed, DATA_SALT))?;
    let data = cmd.dataset.build(&spec)?;
    let t0 = Instant::now();
    let cert = solve_margin(&tangent_features(&init, &data)?, cmd.tol, cmd.max_iters)?;
    manifest.timings.insert("solve".into(), t0.elapsed().as_secs_f64());
    let cert_path = out.join("certificate.json");
    std::fs::write(&cert_path, serde_json::to_string_pretty(&cert)?)?;
    manifest.artifact(cert_path);
    manifest.note(cert.note.clone());
    let mut results = serde_json::json!({
        "gamma": cert.gamma,
        "dual_gap": cert.dual_gap,
        "fw_gap": cert.fw_gap,
        "min_margin": cert.min_margin,
        "iterations": cert.iterations,
        "converged": cert.converged,
    });
    if let Some(w) = &cert.w_star {
        let layers: Vec<_> = w.blocks.iter().map(|b| b.to_matrix()).collect();
        let params = NetworkParams::new(*init.config(), layers, init.output().to_vec())?;
        let path = out.join("w_star.ckpt");
        checkpoint::save(&path, &params, 0)?;
        manifest.artifact(path);
        manifest.note("w_star.ckpt stores the unit direction W_* in the layer slots; its output signs are those of W(0)");
        match build_reference(&init, &cert, cmd.steps as f64, &data) {
            Ok(r) => {
                results["reference"] = serde_json::json!({
                    "lambda": r.lambda,
                    "shift_norm": r.shift_norm,
                    "min_margin": r.min_margin,
                    "risk": r.risk,
                });
            }
            Err(e) => manifest.note(format!("reference model not built: {e}")),
        }
    } else {
        manifest.note("gamma = 0: the sample is not separable by tangent features; reference model refused");
    }
    if !cmd.trend_dims.is_empty() {
        let t1 = Instant::now();
        let (inv, fit) = margin_trend(cmd.depth, cmd.m, cmd.trend_n, &cmd.trend_dims, cmd.seed, cmd.tol)?;
        manifest.timings.insert("trend".into(), t1.elapsed().as_secs_f64());
        let mut csv = String::from("d,inv_gamma\n");
        for (d, v) in cmd.trend_dims.iter().zip(&inv) {
            let _ = writeln!(csv, "{d},{}", fmt17(*v));
        }
        let path = out.join("margin_trend.csv");
        std::fs::write(&path, csv)?;
        manifest.artifact(path);
        if let Some(f) = &fit {
            manifest.checks.push(Check {
                name: "margin::inv_gamma_exponent".into(),
                value: f.exponent,
                bound: format!("in [{}, {}]", MARGIN_TREND_RANGE.0, MARGIN_TREND_RANGE.1),
                passed: f.exponent >= MARGIN_TREND_RANGE.0 && f.exponent <= MARGIN_TREND_RANGE.1,
            });
        }
        results["trend"] = serde_json::json!({ "d": cmd.trend_dims, "inv_gamma": inv, "fit": fit, "n": cmd.trend_n });
    }
    manifest.results = results;
    Ok(cert)
}

// ---------------------------------------------------------------------------
// probe

/// Probes reachable from `ntklab probe`.
pub const PROBE_CATALOG: [&str; 13] = [
    "flip",
    "drift",
    "grad-drift",
    "semi-smooth",
    "lipschitz",
    "init-norm",
    "gaussian-indicator",
    "rademacher-linearized",
    "rademacher-iterates",
    "flip-sweep",
    "drift-sweep",
    "semi-smooth-sweep",
    "grad-drift-sweep",
];

/// Union of the parameters every probe accepts; each probe reads the ones it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeCommand {
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(rename = "L", default)]
    pub depth: Option<usize>,
    #[serde(default = "eight")]
    pub d: usize,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "R", default)]
    pub radius: Option<f64>,
    /// Defaults to flip-seeking for `flip-sweep` and Gaussian elsewhere.
    #[serde(default)]
    pub perturbation: Option<PerturbationKind>,
    #[serde(default)]
    pub widths: Option<Vec<usize>>,
    #[serde(default)]
    pub repeats: Option<usize>,
    #[serde(default = "two_hundred")]
    pub n_sphere: usize,
    #[serde(default = "five")]
    pub k: usize,
    #[serde(default = "million")]
    pub trials: usize,
    #[serde(default = "indicator_case")]
    pub case: IndicatorCase,
    #[serde(rename = "B", default = "one_f")]
    pub ball: f64,
    #[serde(default = "two_fifty_six")]
    pub draws: usize,
    #[serde(default)]
    pub exhaustive: bool,
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(rename = "T", default = "fifty")]
    pub steps: usize,
}

fn eight() -> usize {
    8
}

fn two_hundred() -> usize {
    200
}

fn five() -> usize {
    5
}

fn million() -> usize {
    1_000_000
}

fn indicator_case() -> IndicatorCase {
    IndicatorCase::Parallel
}

fn one_f() -> f64 {
    1.0
}

fn two_fifty_six() -> usize {
    256
}

fn fifty() -> usize {
    50
}

impl ConfigKeys for ProbeCommand {
    const KEYS: &'static [&'static str] = &[
        "m",
        "L",
        "d",
        "n",
        "seed",
        "R",
        "perturbation",
        "widths",
        "repeats",
        "n_sphere",
        "k",
        "trials",
        "case",
        "B",
        "draws",
        "exhaustive",
        "c0",
        "eta",
        "T",
    ];
}

impl ProbeCommand {
    fn sweep(&self, widths: &[usize], depth: usize, repeats: usize, kind: PerturbationKind) -> ScalingSweep {
        ScalingSweep {
            widths: self.widths.clone().unwrap_or_else(|| widths.to_vec()),
            repeats: self.repeats.unwrap_or(repeats),
            depth: self.depth.unwrap_or(depth),
            d: self.d,
            n: self.n.unwrap_or(8),
            radius: self.radius.unwrap_or(2.0),
            seed: self.seed,
            perturbation: self.perturbation.unwrap_or(kind),
        }
    }

    fn init(&self, m: usize, depth: usize) -> Result<NetworkParams> {
        init_symmetric(&NetworkConfig::new(self.depth.unwrap_or(depth), self.m.unwrap_or(m), self.d, self.seed))
    }

    fn points(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        sphere_sample(self.d, self.n.unwrap_or(n), derive_seed(self.seed, DATA_SALT))
    }

    fn perturbed(&self, init: &NetworkParams, xs: &[Vec<f64>], which: u64) -> Result<NetworkParams> {
        let r = self.radius.unwrap_or(1.0);
        match self.perturbation.unwrap_or_default() {
            PerturbationKind::Gaussian => probes::gaussian_perturbation(init, r, self.seed, which),
            PerturbationKind::FlipSeeking => probes::flip_seeking_perturbation(init, r, &xs[0]),
        }
    }
}

pub fn run_probe(name: &str, cmd: &ProbeCommand) -> Result<ProbeReport> {
    match name {
        "flip" | "drift" | "grad-drift" => {
            let init = cmd.init(1024, 2)?;
            let xs = cmd.points(16)?;
            let w = cmd.perturbed(&init, &xs, 0)?;
            match name {
                "flip" => probes::flip_probe(&init, &w, &xs),
                "drift" => probes::drift_probe(&init, &w, &xs),
                _ => probes::grad_drift_probe(&init, &w, &xs),
            }
        }
        "semi-smooth" => {
            let init = cmd.init(1024, 2)?;
            let xs = cmd.points(16)?;
            let w = cmd.perturbed(&init, &xs, 0)?;
            let wbar = probes::gaussian_perturbation(&init, cmd.radius.unwrap_or(1.0), cmd.seed, 1)?;
            probes::semi_smooth_probe(&w, &wbar, &xs)
        }
        "lipschitz" => {
            let init = cmd.init(1024, 2)?;
            probes::lipschitz_probe(&init, cmd.radius.unwrap_or(2.0), cmd.n_sphere, cmd.k, cmd.seed)
        }
        "init-norm" => {
            let init = cmd.init(4096, 4)?;
            let xs = cmd.points(64)?;
            let mut opts = InitNormOptions::default();
            if let Some(c0) = cmd.c0 {
                opts.c0 = c0;
            }
            probes::init_norm_probe(&init, &xs, &opts)
        }
        "gaussian-indicator" => probes::gaussian_indicator_check(cmd.d, cmd.trials, cmd.seed, cmd.case),
        "rademacher-linearized" => {
            let init = cmd.init(64, 2)?;
            let xs = cmd.points(8)?;
            let draws = if cmd.exhaustive { SignDraws::Exhaustive } else { SignDraws::Random { draws: cmd.draws, seed: cmd.seed } };
            probes::rademacher_linearized(&init, &xs, cmd.ball, draws)
        }
        "rademacher-iterates" => {
            let run = XorRun::new(cmd.depth.unwrap_or(1), cmd.m.unwrap_or(128), cmd.d.max(3), cmd.n.unwrap_or(8), cmd.seed)?;
            let cfg = TrainConfig { step_size_guard: false, ..TrainConfig::new(cmd.eta, cmd.steps) };
            let traj = train(&run.init, &run.data, &cfg)?.into_result()?;
            let iterates = traj.snapshots.iter().map(|s| s.load()).collect::<Result<Vec<_>>>()?;
            let draws = if cmd.exhaustive { SignDraws::Exhaustive } else { SignDraws::Random { draws: cmd.draws, seed: cmd.seed } };
            probes::rademacher_iterates(&iterates, &run.data.inputs, draws)
        }
        "flip-sweep" => probes::flip_sweep(&cmd.sweep(&[256, 1024, 4096], 2, 10, PerturbationKind::FlipSeeking)),
        "drift-sweep" => probes::drift_sweep(&cmd.sweep(&[256, 512, 1024, 2048], 2, 10, PerturbationKind::Gaussian)),
        "semi-smooth-sweep" => probes::semi_smooth_sweep(&cmd.sweep(&[256, 1024, 4096], 2, 20, PerturbationKind::Gaussian)),
        "grad-drift-sweep" => probes::grad_drift_sweep(&cmd.sweep(&[256, 1024, 4096], 2, 10, PerturbationKind::Gaussian)),
        other => Err(Error::UnknownProbe {
            name: other.into(),
            catalog: PROBE_CATALOG.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

pub fn cmd_probe(name: &str, cmd: &ProbeCommand, out: &Path, plot: bool, manifest: &mut RunManifest) -> Result<ProbeReport> {
    let t0 = Instant::now();
    let report = run_probe(name, cmd)?;
    manifest.timings.insert("probe".into(), t0.elapsed().as_secs_f64());
    manifest.artifacts.extend(report.write(out, plot)?);
    manifest.add_checks(&report);
    manifest.notes.extend(report.meta.notes.iter().cloned());
    manifest.results = serde_json::to_value(&report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportSummary {
    pub manifests: Vec<PathBuf>,
    pub commands: Vec<String>,
    pub statuses: Vec<RunStatus>,
    pub missing_artifacts: Vec<PathBuf>,
    /// Pairs of manifest indices with the same command and different configs.
    pub clashes: Vec<(usize, usize)>,
    pub checks: Vec<Check>,
    pub sweeps: Vec<SweepResult>,
    pub unreadable: Vec<(PathBuf, String)>,
}

impl ReportSummary {
    pub fn is_empty(&self) -> bool {
        self.manifests.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.is_empty() {
            out.push_str("no manifests given\n");
            return out;
        }
        for (i, p) in self.manifests.iter().enumerate() {
            let _ = writeln!(out, "[{i}] {} {:?} {}", self.commands[i], self.statuses[i], p.display());
        }
        for (path, e) in &self.unreadable {
            let _ = writeln!(out, "unreadable manifest {}: {e}", path.display());
        }
        for (a, b) in &self.clashes {
            let _ = writeln!(out, "CLASH: manifests [{a}] and [{b}] ran `{}` with different configs", self.commands[*a]);
        }
        for s in &self.sweeps {
            out.push('\n');
            out.push_str(&s.render());
        }
        if !self.checks.is_empty() {
            out.push('\n');
        }
        for c in &self.checks {
            let _ = writeln!(out, "{} {} value={} bound={}", if c.passed { "PASS" } else { "FAIL" }, c.name, fmt17(c.value), c.bound);
        }
        for p in &self.missing_artifacts {
            let _ = writeln!(out, "missing artifact: {}", p.display());
        }
        out
    }
}

/// Merges manifests. Unreadable manifests and missing artifacts are listed, not fatal.
pub fn cmd_report(paths: &[PathBuf]) -> ReportSummary {
    let mut s = ReportSummary::default();
    let mut configs: Vec<Value> = Vec::new();
    for p in paths {
        let path = if p.is_dir() { p.join(MANIFEST_FILE) } else { p.clone() };
        let m = match RunManifest::load(&path) {
            Ok(m) => m,
            Err(e) => {
                s.unreadable.push((path, e.to_string()));
                continue;
            }
        };
        for a in &m.artifacts {
            if !a.exists() {
                s.missing_artifacts.push(a.clone());
            }
        }
        let idx = s.manifests.len();
        for (j, cfg) in configs.iter().enumerate() {
            if s.commands[j] == m.command && *cfg != m.config {
                s.clashes.push((j, idx));
            }
        }
        if m.command == "xor-sweep" {
            if let Ok(r) = serde_json::from_value::<SweepResult>(m.results.clone()) {
                s.sweeps.push(r);
            }
        }
        s.checks.extend(m.checks.iter().cloned());
        configs.push(m.config.clone());
        s.manifests.push(path);
        s.commands.push(m.command);
        s.statuses.push(m.status);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_all_named() {
        let e = parse_config::<TrainCommand>(r#"{"m": 8, "momentum": 0.9, "nesterov": true}"#).unwrap_err();
        match e {
            Error::UnknownKeys(k) => assert_eq!(k, vec!["momentum".to_string(), "nesterov".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seed_list("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seed_list("x").is_err());
        assert!(parse_seed_list("3..3").is_err());
    }

    #[test]
    fn sweep_rows_sorted_with_zero_std_for_single_seed() {
        let cells = [(10, 6), (20, 6), (10, 6)];
        let r = SweepResult::from_cells(&cells, &[3], &[vec![0.4], vec![0.3], vec![0.4]]).unwrap();
        assert!(r.rows.windows(2).all(|w| w[0].d2_over_n <= w[1].d2_over_n));
        assert!(r.rows.iter().all(|row| row.std_error == 0.0));
        assert!(r.to_csv().starts_with(SWEEP_CSV_HEADER));
    }

    #[test]
    fn fmt17_has_seventeen_significant_digits() {
        let s = fmt17(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn default_sweep_uses_reference_values() {
        let c = XorSweepCommand::default();
        assert_eq!(c.values(), vec![10, 12, 14, 16, 18, 20, 24, 28]);
        assert_eq!(c.gradient_scale, GradientScale::Sum);
        assert!(c.reference_errors().is_some());
    }
}
