//! Tangent features at initialisation, the hard margin over them, and the
//! reference model built from the max-margin direction.
//!
//! The margin is the norm of the minimum-norm point `p` of the convex hull of the
//! features `φ_i = y_i ∂f_{W(0)}(x_i)/∂W`, found by Frank–Wolfe with away steps on
//! `min_{λ∈Δ} λᵀKλ`, where `K_ij = ⟨φ_i, φ_j⟩`. Features never get flattened:
//! each layer block is either zero, rank one (`u vᵀ`), or dense, and inner
//! products are taken block by block.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::net::{self, backprop_vectors, forward_with_trace, GradientSet, NetworkParams};
use crate::objective::{empirical_risk, logistic_loss};

/// One layer of a feature.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureBlock {
    Zero { rows: usize, cols: usize },
    /// `u vᵀ`.
    RankOne { u: Vec<f64>, v: Vec<f64> },
    Dense(Matrix),
}

impl FeatureBlock {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            FeatureBlock::Zero { rows, cols } => (*rows, *cols),
            FeatureBlock::RankOne { u, v } => (u.len(), v.len()),
            FeatureBlock::Dense(m) => m.shape(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FeatureBlock::Zero { .. } => true,
            FeatureBlock::RankOne { u, v } => u.iter().all(|&x| x == 0.0) || v.iter().all(|&x| x == 0.0),
            FeatureBlock::Dense(m) => m.as_slice().iter().all(|&x| x == 0.0),
        }
    }

    pub fn inner(&self, other: &FeatureBlock) -> f64 {
        use FeatureBlock::*;
        match (self, other) {
            (Zero { .. }, _) | (_, Zero { .. }) => 0.0,
            (RankOne { u, v }, RankOne { u: u2, v: v2 }) => linalg::dot(u, u2) * linalg::dot(v, v2),
            (RankOne { u, v }, Dense(m)) | (Dense(m), RankOne { u, v }) => linalg::dot(u, &m.matvec(v)),
            (Dense(a), Dense(b)) => linalg::dot(a.as_slice(), b.as_slice()),
        }
    }

    /// `out += c · self`.
    fn accumulate_into(&self, c: f64, out: &mut Matrix) {
        match self {
            FeatureBlock::Zero { .. } => {}
            FeatureBlock::RankOne { u, v } => {
                let cols = v.len();
                out.as_mut_slice().par_chunks_mut(cols).zip(u.par_iter()).for_each(|(row, &ur)| {
                    if ur != 0.0 {
                        for (o, &vc) in row.iter_mut().zip(v) {
                            *o += c * (ur * vc);
                        }
                    }
                });
            }
            FeatureBlock::Dense(m) => {
                for (o, &x) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *o += c * x;
                }
            }
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        let (r, c) = self.shape();
        let mut m = Matrix::zeros(r, c);
        self.accumulate_into(1.0, &mut m);
        m
    }
}

/// A per-layer feature, `y_i ∂f_{W(0)}(x_i)/∂W` for tangent features.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFeature {
    pub blocks: Vec<FeatureBlock>,
}

impl TangentFeature {
    /// A single dense block holding a flat vector; convenient for toy instances.
    pub fn from_flat(values: Vec<f64>) -> Self {
        let n = values.len();
        let m = Matrix::from_vec(1, n, values).expect("1 x n block");
        Self { blocks: vec![FeatureBlock::Dense(m)] }
    }

    pub fn inner(&self, other: &TangentFeature) -> f64 {
        linalg::compensated_sum(self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.inner(b)))
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    pub fn to_gradient_set(&self) -> GradientSet {
        GradientSet { layers: self.blocks.iter().map(FeatureBlock::to_matrix).collect() }
    }

    /// `⟨self, G⟩` against a dense set.
    pub fn inner_dense(&self, g: &GradientSet) -> f64 {
        linalg::compensated_sum(
            self.blocks.iter().zip(&g.layers).map(|(b, m)| b.inner(&FeatureBlock::Dense(m.clone()))),
        )
    }

    fn same_shape(&self, other: &TangentFeature) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| a.shape() == b.shape())
    }
}

/// `φ_i = y_i ∂f_{W(0)}(x_i)/∂W`, with the lower layers checked to vanish.
pub fn tangent_features(init: &NetworkParams, data: &LabeledDataset) -> Result<Vec<TangentFeature>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let depth = init.depth();
    let cfg = *init.config();
    data.inputs
        .par_iter()
        .zip(data.labels.par_iter())
        .map(|(x, &y)| {
            let (_, trace) = forward_with_trace(init, x)?;
            let back = backprop_vectors(init, &trace)?;
            let mut blocks = Vec::with_capacity(depth);
            for (l, g) in back.into_iter().enumerate() {
                let (rows, cols) = cfg.layer_shape(l + 1);
                if l + 1 < depth {
                    if g.iter().any(|&v| v != 0.0) {
                        return Err(Error::Config(format!(
                            "layer {} gradient is nonzero; tangent features expect a symmetric initialisation",
                            l + 1
                        )));
                    }
                    blocks.push(FeatureBlock::Zero { rows, cols });
                } else {
                    let u = g.into_iter().map(|v| y * v).collect();
                    blocks.push(FeatureBlock::RankOne { u, v: trace.hidden[l].clone() });
                }
            }
            Ok(TangentFeature { blocks })
        })
        .collect()
}

/// `K_ij = ⟨φ_i, φ_j⟩`.
pub fn gram_matrix(features: &[TangentFeature]) -> Matrix {
    let n = features.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if j < i { 0.0 } else { features[i].inner(&features[j]) }).collect())
        .collect();
    let mut k = Matrix::from_rows(&rows).expect("square gram");
    for i in 0..n {
        for j in 0..i {
            let v = k.get(j, i);
            k.set(i, j, v);
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 100_000 }
    }
}

/// Solution of `min_{λ∈Δ} λᵀKλ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSolution {
    pub weights: Vec<f64>,
    /// `‖p‖ = (λᵀKλ)^{1/2}`.
    pub norm: f64,
    /// `(Kλ)_i = ⟨p, φ_i⟩`.
    pub projections: Vec<f64>,
    /// Frank–Wolfe gap `2(λᵀKλ − min_i (Kλ)_i)`.
    pub fw_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Frank–Wolfe with away steps and exact line search on the simplex QP.
pub fn min_norm_point(gram: &Matrix, opts: &SolverOptions) -> Result<SimplexSolution> {
    let n = gram.rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if gram.cols() != n || !gram.is_finite() {
        return Err(Error::Shape("gram matrix must be square and finite".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("solver tol must be positive, got {}", opts.tol)));
    }
    // Start at the vertex of smallest norm.
    let start = (0..n).min_by(|&a, &b| gram.get(a, a).total_cmp(&gram.get(b, b))).expect("n > 0");
    let mut lambda = vec![0.0; n];
    lambda[start] = 1.0;
    let mut klam: Vec<f64> = gram.row(start).to_vec();

    let recompute = |lambda: &[f64]| -> Vec<f64> { gram.matvec(lambda) };
    let quad = |lambda: &[f64], klam: &[f64]| -> f64 { linalg::dot(lambda, klam).max(0.0) };

    let mut iterations = 0;
    let mut converged = false;
    loop {
        if iterations % 64 == 0 {
            klam = recompute(&lambda);
        }
        let q = quad(&lambda, &klam);
        let (s, ks) = argmin(&klam);
        let fw_gap = 2.0 * (q - ks);
        let norm = q.sqrt();
        if norm <= opts.tol {
            converged = true;
            break;
        }
        let margin_gap = (q - ks) / norm;
        if fw_gap <= opts.tol * q.max(1.0) && margin_gap <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        let away = (0..n)
            .filter(|&i| lambda[i] > 0.0)
            .max_by(|&a, &b| klam[a].total_cmp(&klam[b]))
            .expect("support is nonempty");
        let kv = klam[away];
        let fw_dir = q - ks;
        let away_dir = kv - q;
        if fw_dir >= away_dir {
            // d = e_s − λ
            let curv = gram.get(s, s) - 2.0 * ks + q;
            let t = if curv > 0.0 { (fw_dir / curv).clamp(0.0, 1.0) } else { 1.0 };
            for (i, l) in lambda.iter_mut().enumerate() {
                *l *= 1.0 - t;
                if i == s {
                    *l += t;
                }
            }
            let col = gram.row(s);
            for (k, &c) in klam.iter_mut().zip(col) {
                *k = (1.0 - t) * *k + t * c;
            }
        } else {
            // d = λ − e_v
            let lv = lambda[away];
            let t_max = if lv < 1.0 { lv / (1.0 - lv) } else { f64::INFINITY };
            let curv = q - 2.0 * kv + gram.get(away, away);
            let t = if curv > 0.0 { (away_dir / curv).min(t_max) } else { t_max };
            if !t.is_finite() {
                break;
            }
            for (i, l) in lambda.iter_mut().enumerate() {
                *l *= 1.0 + t;
                if i == away {
                    *l -= t;
                }
            }
            if t == t_max {
                lambda[away] = 0.0;
            }
            let col = gram.row(away);
            for (k, &c) in klam.iter_mut().zip(col) {
                *k = (1.0 + t) * *k - t * c;
            }
        }
        for l in lambda.iter_mut() {
            if *l < 0.0 {
                *l = 0.0;
            }
        }
        let total: f64 = linalg::compensated_sum(lambda.iter().copied());
        for l in lambda.iter_mut() {
            *l /= total;
        }
    }
    klam = recompute(&lambda);
    let q = quad(&lambda, &klam);
    let (_, ks) = argmin(&klam);
    Ok(SimplexSolution {
        weights: lambda,
        norm: q.sqrt(),
        fw_gap: (2.0 * (q - ks)).max(0.0),
        projections: klam,
        iterations,
        converged,
    })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc })
}

/// Certified hard margin over a set of features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginCertificate {
    /// `‖p‖`, or 0 when the hull contains the origin at the solver tolerance.
    pub gamma: f64,
    /// Unit-norm direction `p/‖p‖`; `None` when `gamma = 0`.
    #[serde(skip)]
    pub w_star: Option<TangentFeature>,
    pub dual_weights: Vec<f64>,
    /// `gamma − min_i ⟨W_*, φ_i⟩`, so `min_i ⟨W_*, φ_i⟩ ≥ gamma − dual_gap` holds by construction.
    pub dual_gap: f64,
    /// Frank–Wolfe gap of the simplex problem.
    pub fw_gap: f64,
    /// `min_i ⟨W_*, φ_i⟩`.
    pub min_margin: f64,
    pub iterations: usize,
    pub converged: bool,
    pub note: String,
}

pub const SAMPLE_ONLY_NOTE: &str =
    "margin certified on the realized training sample only, not on the distribution it was drawn from";

pub fn solve_margin(features: &[TangentFeature], tol: f64, max_iters: usize) -> Result<MarginCertificate> {
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if features.iter().any(|f| !f.same_shape(&features[0])) {
        return Err(Error::Shape("features have different shapes".into()));
    }
    let gram = gram_matrix(features);
    let sol = min_norm_point(&gram, &SolverOptions { tol, max_iters })?;
    if sol.norm <= tol {
        return Ok(MarginCertificate {
            gamma: 0.0,
            w_star: None,
            dual_weights: sol.weights,
            dual_gap: 0.0,
            fw_gap: sol.fw_gap,
            min_margin: 0.0,
            iterations: sol.iterations,
            converged: sol.converged,
            note: SAMPLE_ONLY_NOTE.into(),
        });
    }
    let gamma = sol.norm;
    let shapes: Vec<(usize, usize)> = features[0].blocks.iter().map(FeatureBlock::shape).collect();
    let mut blocks = Vec::with_capacity(shapes.len());
    for (l, &(rows, cols)) in shapes.iter().enumerate() {
        if features.iter().all(|f| matches!(f.blocks[l], FeatureBlock::Zero { .. })) {
            blocks.push(FeatureBlock::Zero { rows, cols });
            continue;
        }
        let mut m = Matrix::zeros(rows, cols);
        for (f, &w) in features.iter().zip(&sol.weights) {
            if w != 0.0 {
                f.blocks[l].accumulate_into(w / gamma, &mut m);
            }
        }
        blocks.push(FeatureBlock::Dense(m));
    }
    let w_star = TangentFeature { blocks };
    let min_margin = features
        .par_iter()
        .map(|f| w_star.inner(f))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(MarginCertificate {
        gamma,
        w_star: Some(w_star),
        dual_weights: sol.weights,
        dual_gap: (gamma - min_margin).max(0.0),
        fw_gap: sol.fw_gap,
        min_margin,
        iterations: sol.iterations,
        converged: sol.converged,
        note: SAMPLE_ONLY_NOTE.into(),
    })
}

/// `W̄ = W(0) + λ W_*` with `λ = 2 log T / γ`.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    pub params: NetworkParams,
    pub lambda: f64,
    /// `‖W̄ − W(0)‖_F`, measured.
    pub shift_norm: f64,
    /// `y_i f_W̄(x_i)`.
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub risk: f64,
}

pub fn build_reference(
    init: &NetworkParams,
    cert: &MarginCertificate,
    horizon: f64,
    data: &LabeledDataset,
) -> Result<ReferenceModel> {
    let w_star = match (&cert.w_star, cert.gamma > 0.0) {
        (Some(w), true) => w,
        _ => return Err(Error::NotSeparable),
    };
    if !(horizon >= 2.0) {
        return Err(Error::Config(format!("reference horizon T must be at least 2, got {horizon}")));
    }
    let lambda = 2.0 * horizon.ln() / cert.gamma;
    let direction = w_star.to_gradient_set();
    let params = init.add_scaled(&direction, lambda)?;
    let shift_norm = net::frobenius_distance(&params, init)?.total;
    let eval = empirical_risk(&params, data)?;
    let min_margin = eval.margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ReferenceModel { params, lambda, shift_norm, margins: eval.margins, min_margin, risk: eval.risk })
}

/// `log(1 + 1/T)`: the risk implied by every reference margin reaching `log T`.
pub fn implied_risk_bound(horizon: f64) -> f64 {
    logistic_loss(horizon.ln())
}

/// Lower estimate of the margin by searching random unit directions in the span
/// of the features; used as an independent cross-check of the solver.
pub fn random_direction_margin(features: &[TangentFeature], directions: usize, seed: u64) -> f64 {
    let gram = gram_matrix(features);
    let n = features.len();
    let mut best = f64::NEG_INFINITY;
    for k in 0..directions {
        let mut r = crate::rng::stream(seed, crate::rng::Stream::Probe, k as u64, n as u64);
        let mut c = vec![0.0; n];
        crate::rng::fill_gaussian(&mut r, &mut c);
        let kc = gram.matvec(&c);
        let norm = linalg::dot(&c, &kc).max(0.0).sqrt();
        if norm == 0.0 {
            continue;
        }
        let worst = kc.iter().fold(f64::INFINITY, |a, &v| a.min(v / norm));
        best = best.max(worst);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: &[f64]) -> TangentFeature {
        TangentFeature::from_flat(v.to_vec())
    }

    #[test]
    fn identical_unit_features() {
        let c = solve_margin(&[flat(&[0.6, 0.8]), flat(&[0.6, 0.8])], 1e-8, 1000).unwrap();
        assert!((c.gamma - 1.0).abs() < 1e-12);
        let w = c.w_star.unwrap().to_gradient_set();
        assert!((w.layers[0].get(0, 0) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_pair() {
        let c = solve_margin(&[flat(&[1.0, 0.0]), flat(&[0.0, 1.0])], 1e-8, 1000).unwrap();
        assert!((c.gamma - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-10);
        assert!(c.converged);
        assert!(c.dual_gap <= 1e-8);
        let w = c.w_star.unwrap().to_gradient_set();
        assert!((w.layers[0].get(0, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn opposite_pair_is_not_separable() {
        let c = solve_margin(&[flat(&[1.0, 0.0]), flat(&[-1.0, 0.0])], 1e-8, 1000).unwrap();
        assert_eq!(c.gamma, 0.0);
        assert!(c.w_star.is_none());
    }

    #[test]
    fn dual_weights_on_simplex() {
        let feats: Vec<_> = [[1.0, 0.2, 0.0], [0.3, 1.0, 0.1], [0.5, 0.5, 0.9], [0.9, -0.1, 0.4]]
            .iter()
            .map(|v| flat(v))
            .collect();
        let c = solve_margin(&feats, 1e-10, 100_000).unwrap();
        assert!(c.dual_weights.iter().all(|&w| w >= 0.0));
        assert!((c.dual_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c.min_margin >= c.gamma - c.dual_gap);
        assert!(c.gamma <= feats.iter().map(TangentFeature::norm).fold(f64::INFINITY, f64::min) + 1e-12);
    }

    #[test]
    fn rank_one_inner_matches_dense() {
        let a = FeatureBlock::RankOne { u: vec![1.0, 2.0], v: vec![3.0, -1.0, 0.5] };
        let b = FeatureBlock::RankOne { u: vec![-0.5, 1.0], v: vec![1.0, 1.0, 2.0] };
        let dense = a.inner(&FeatureBlock::Dense(b.to_matrix()));
        assert!((a.inner(&b) - dense).abs() < 1e-14);
        assert_eq!(a.to_matrix().get(1, 0), 6.0);
    }
}
