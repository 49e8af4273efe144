//! Datasets on the unit sphere: the noisy 2-XOR distribution (with its full
//! `2^d`-point support for exact population metrics) and uniform sphere samples.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::fmt17;
use crate::linalg::{self, Compensated};
use crate::net::{forward, NetworkParams, UNIT_TOL};
use crate::objective::logistic_loss;
use crate::rng::{self, Stream};

/// Largest dimension for which the population is enumerated.
pub const MAX_POPULATION_DIM: usize = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub inputs: Vec<Vec<f64>>,
    /// Labels in `{-1, +1}`.
    pub labels: Vec<f64>,
    pub provenance: String,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Shape(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        let d = inputs.first().map_or(0, Vec::len);
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != d {
                return Err(Error::Shape(format!("input {i} has dimension {}, expected {d}", x.len())));
            }
            let norm = linalg::norm2(x);
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NonUnitInput { norm });
            }
        }
        if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::Config(format!("label {y} is not in {{-1, +1}}")));
        }
        Ok(Self { inputs, labels, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.inputs.iter().map(Vec::as_slice).zip(self.labels.iter().copied())
    }

    /// `d + 1` columns: coordinates then label, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (x, y) in self.iter() {
            for v in x {
                let _ = write!(out, "{},", fmt17(*v));
            }
            let _ = writeln!(out, "{}", y as i32);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// A dataset made of the first `n` samples.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            inputs: self.inputs[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            provenance: format!("{} [first {n}]", self.provenance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct XorSpec {
    pub dim: usize,
    pub seed: u64,
}

impl XorSpec {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::Config(format!("2-XOR needs d >= 3, got {dim}")));
        }
        Ok(Self { dim, seed })
    }

    fn coordinate(&self) -> f64 {
        1.0 / ((self.dim - 1) as f64).sqrt()
    }
}

/// The four `(x₁, x₂, y)` blocks, in units of `1/√(d−1)`.
const XOR_BLOCKS: [(f64, f64, f64); 4] = [(1.0, 0.0, 1.0), (0.0, 1.0, -1.0), (-1.0, 0.0, 1.0), (0.0, -1.0, -1.0)];

fn xor_point(spec: &XorSpec, block: usize, noise: impl Iterator<Item = bool>) -> (Vec<f64>, f64) {
    let s = spec.coordinate();
    let (b1, b2, y) = XOR_BLOCKS[block];
    let mut x = Vec::with_capacity(spec.dim);
    x.push(b1 * s);
    x.push(b2 * s);
    x.extend(noise.take(spec.dim - 2).map(|pos| if pos { s } else { -s }));
    (x, y)
}

/// `n` i.i.d. draws; sample `i` uses its own stream, so prefixes are stable in `n`.
pub fn xor_sample(spec: &XorSpec, n: usize) -> Result<LabeledDataset> {
    XorSpec::new(spec.dim, spec.seed)?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(spec.seed, Stream::Data, i as u64, spec.dim as u64);
        let block = r.random_range(0..4);
        let noise: Vec<bool> = (0..spec.dim - 2).map(|_| r.random()).collect();
        let (x, y) = xor_point(spec, block, noise.into_iter());
        inputs.push(x);
        labels.push(y);
    }
    LabeledDataset::new(inputs, labels, format!("xor_sample(d={}, n={n}, seed={})", spec.dim, spec.seed))
}

/// All `4·2^{d−2} = 2^d` support points, each with probability `2^{−d}`.
pub fn xor_population(spec: &XorSpec) -> Result<LabeledDataset> {
    XorSpec::new(spec.dim, spec.seed)?;
    if spec.dim > MAX_POPULATION_DIM {
        return Err(Error::Config(format!(
            "population enumeration is capped at d = {MAX_POPULATION_DIM}, got {}",
            spec.dim
        )));
    }
    let free = spec.dim - 2;
    let mut inputs = Vec::with_capacity(1 << spec.dim);
    let mut labels = Vec::with_capacity(1 << spec.dim);
    for block in 0..4 {
        for mask in 0u64..(1u64 << free) {
            let (x, y) = xor_point(spec, block, (0..free).map(|j| mask >> j & 1 == 1));
            inputs.push(x);
            labels.push(y);
        }
    }
    LabeledDataset::new(inputs, labels, format!("xor_population(d={})", spec.dim))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationMetrics {
    /// Uniform average of `1{y f(x) < 0} + ½·1{f(x) = 0}`.
    pub zero_one_error: f64,
    pub logistic_loss: f64,
}

/// Exact population risk over an enumerated support. Ties `f(x) = 0` count as half an error.
pub fn population_metrics(params: &NetworkParams, population: &LabeledDataset) -> Result<PopulationMetrics> {
    if population.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut err = Compensated::default();
    let mut loss = Compensated::default();
    for (x, y) in population.iter() {
        let f = forward(params, x)?;
        let margin = y * f;
        err.add(if margin < 0.0 {
            1.0
        } else if margin == 0.0 {
            0.5
        } else {
            0.0
        });
        loss.add(logistic_loss(margin));
    }
    let n = population.len() as f64;
    Ok(PopulationMetrics { zero_one_error: err.value() / n, logistic_loss: loss.value() / n })
}

/// `n` points uniform on `S^{d−1}` by normalising standard Gaussians.
pub fn sphere_sample(d: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d == 0 {
        return Err(Error::Config("sphere dimension must be at least 1".into()));
    }
    Ok((0..n)
        .map(|i| {
            let mut r = rng::stream(seed, Stream::Sphere, i as u64, d as u64);
            loop {
                let mut x = vec![0.0; d];
                rng::fill_gaussian(&mut r, &mut x);
                if linalg::normalize(&mut x) > 0.0 {
                    break x;
                }
            }
        })
        .collect())
}
