//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use ntklab::linalg::Matrix;
use ntklab::net::{NetworkConfig, NetworkParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn unit_vector(r: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Gaussian weights with no row duplication; output signs antisymmetric.
pub fn random_params(depth: usize, width: usize, d: usize, seed: u64) -> NetworkParams {
    let cfg = NetworkConfig::new(depth, width, d, seed);
    let mut r = rng(seed ^ 0x5eed);
    let layers = (1..=depth)
        .map(|l| {
            let (rows, cols) = cfg.layer_shape(l);
            let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut r)).collect();
            Matrix::from_vec(rows, cols, data).unwrap()
        })
        .collect();
    let half: Vec<f64> = (0..width / 2).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let output = half.iter().copied().chain(half.iter().map(|s| -s)).collect();
    NetworkParams::new(cfg, layers, output).unwrap()
}

/// Straight-line evaluation of `aᵀ hᴸ` with `hˡ = √(2/m) σ(Wˡ hˡ⁻¹)`, left-to-right sums.
pub fn scalar_forward(p: &NetworkParams, x: &[f64]) -> f64 {
    let m = p.width();
    let c = (2.0 / m as f64).sqrt();
    let mut h = x.to_vec();
    for l in 1..=p.depth() {
        let w = p.layer(l);
        let mut next = vec![0.0; m];
        for r in 0..m {
            let mut s = 0.0;
            for j in 0..h.len() {
                s += w.get(r, j) * h[j];
            }
            next[r] = if s >= 0.0 { c * s } else { 0.0 };
        }
        h = next;
    }
    let mut out = 0.0;
    for r in 0..m {
        out += p.output()[r] * h[r];
    }
    out
}

/// Smallest `|⟨wˡ_r, hˡ⁻¹⟩|` over all units, evaluated with the scalar oracle's loops.
pub fn scalar_min_abs_preactivation(p: &NetworkParams, x: &[f64]) -> f64 {
    let m = p.width();
    let c = (2.0 / m as f64).sqrt();
    let mut h = x.to_vec();
    let mut best = f64::INFINITY;
    for l in 1..=p.depth() {
        let w = p.layer(l);
        let mut next = vec![0.0; m];
        for r in 0..m {
            let s: f64 = (0..h.len()).map(|j| w.get(r, j) * h[j]).sum();
            best = best.min(s.abs());
            next[r] = if s >= 0.0 { c * s } else { 0.0 };
        }
        h = next;
    }
    best
}

/// `p` with entry `(r, c)` of layer `l` (1-based) shifted by `delta`.
pub fn shifted(p: &NetworkParams, l: usize, r: usize, c: usize, delta: f64) -> NetworkParams {
    let mut layers: Vec<Matrix> = p.layers().to_vec();
    let v = layers[l - 1].get(r, c);
    layers[l - 1].set(r, c, v + delta);
    NetworkParams::new(*p.config(), layers, p.output().to_vec()).unwrap()
}

/// Central finite difference of `g` in entry `(l, r, c)`.
pub fn central_difference(p: &NetworkParams, l: usize, r: usize, c: usize, h: f64, g: impl Fn(&NetworkParams) -> f64) -> f64 {
    (g(&shifted(p, l, r, c, h)) - g(&shifted(p, l, r, c, -h))) / (2.0 * h)
}

/// All singular values by one-sided Jacobi rotations, descending.
pub fn jacobi_singular_values(m: &Matrix) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m.get(i, j)).collect()).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a[p].iter().map(|v| v * v).sum();
                let beta: f64 = a[q].iter().map(|v| v * v).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..rows {
                    let (x, y) = (a[p][i], a[q][i]);
                    a[p][i] = cs * x - sn * y;
                    a[q][i] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = a.iter().map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// `max_θ min_i ⟨(cos θ, sin θ), φ_i⟩` over an even grid of `k` angles, floored at 0.
pub fn grid_margin_2d(points: &[[f64; 2]], k: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for t in 0..k {
        let th = 2.0 * std::f64::consts::PI * t as f64 / k as f64;
        let (s, c) = th.sin_cos();
        let worst = points.iter().map(|p| c * p[0] + s * p[1]).fold(f64::INFINITY, f64::min);
        best = best.max(worst);
    }
    best.max(0.0)
}
