use serde::{Deserialize, Serialize};

use super::{ProbeMeta, ProbeReport, Series, DEFAULT_C0};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::net::{NetworkParams, UNIT_TOL};
use crate::rng::{self, Stream};

/// Hidden outputs and activation masks for a batch of inputs, one column per input.
#[derive(Debug, Clone)]
pub struct BatchedTrace {
    /// `h⁰ … hᴸ`, each stored row-major as `(width × N)`; `h⁰` is `d × N`.
    pub hidden: Vec<Matrix>,
    /// `Σ¹ … Σᴸ` as `m × N` boolean grids, row-major.
    pub active: Vec<Vec<bool>>,
}

/// Forward pass for many inputs at once through GEMM. Values agree with the
/// per-input forward pass up to rounding (summation order differs).
pub fn batched_traces(params: &NetworkParams, xs: &[Vec<f64>]) -> Result<BatchedTrace> {
    let d = params.input_dim();
    let n = xs.len();
    let mut h0 = Matrix::zeros(d, n);
    for (i, x) in xs.iter().enumerate() {
        if x.len() != d {
            return Err(Error::Shape(format!("input {i} has length {}, expected {d}", x.len())));
        }
        let norm = linalg::norm2(x);
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NonUnitInput { norm });
        }
        for (j, &v) in x.iter().enumerate() {
            h0.set(j, i, v);
        }
    }
    let c = params.config().scale();
    let mut hidden = vec![h0];
    let mut active = Vec::with_capacity(params.depth());
    for w in params.layers() {
        let mut z = w.matmul_rowmajor(hidden.last().expect("h0").as_slice(), n);
        let mask: Vec<bool> = z.iter().map(|&v| v >= 0.0).collect();
        for v in &mut z {
            *v = if *v >= 0.0 { c * *v } else { 0.0 };
        }
        hidden.push(Matrix::from_vec(w.rows(), n, z)?);
        active.push(mask);
    }
    Ok(BatchedTrace { hidden, active })
}

pub(crate) fn batched_hidden(params: &NetworkParams, xs: &[Vec<f64>]) -> Result<Vec<Matrix>> {
    Ok(batched_traces(params, xs)?.hidden)
}

fn column_norms_sq(m: &Matrix) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v * v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitNormOptions {
    /// Relative tolerance for the per-layer spectral norms.
    pub layer_tol: f64,
    /// Block size of the subspace iteration for the per-layer norms.
    pub layer_block: usize,
    /// Relative tolerance for the product norms `‖Hᵃ_b‖₂`.
    pub product_tol: f64,
    pub max_iters: usize,
    pub products: bool,
    pub c0: f64,
    /// Slack on `L √(log m)` for the product norms.
    pub product_slack: f64,
    /// Slack factor on `√2` for the last-layer gradient.
    pub gradient_slack: f64,
}

impl Default for InitNormOptions {
    fn default() -> Self {
        Self {
            layer_tol: 1e-4,
            layer_block: 8,
            product_tol: 1e-2,
            max_iters: 10_000,
            products: true,
            c0: DEFAULT_C0,
            product_slack: 10.0,
            gradient_slack: 1.05,
        }
    }
}

/// Norms at initialisation: `‖Wˡ(0)‖₂/√m`, the band of `‖hˡ₀(x)‖₂²`, the last-layer
/// gradient norm, and `max_{2≤a≤b≤L} ‖Hᵃ_{b,0}(x)‖₂`.
pub fn init_norm_probe(init: &NetworkParams, xs: &[Vec<f64>], opts: &InitNormOptions) -> Result<ProbeReport> {
    let cfg = *init.config();
    let m = cfg.width as f64;
    let depth = cfg.depth;
    let mut r = ProbeReport::new(
        "init-norm",
        ProbeMeta { seed: cfg.seed, m: cfg.width, depth, d: cfg.input_dim, n: xs.len(), slack: Some(opts.c0), ..ProbeMeta::default() },
    );
    r.meta.notes.push(format!(
        "spectral norms by block power iteration (tol {}), product norms by batched power iteration (tol {})",
        opts.layer_tol, opts.product_tol
    ));

    let mut ratios = Vec::with_capacity(depth);
    for (l, w) in init.layers().iter().enumerate() {
        let s = linalg::block_spectral_norm(w, opts.layer_block, opts.layer_tol, opts.max_iters, cfg.seed ^ l as u64)?;
        ratios.push(s / m.sqrt());
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    r.set("max_op_norm_over_sqrt_m", max_ratio);
    r.add_series("op_norm_over_sqrt_m", Series::new((1..=depth).map(|l| l as f64).collect(), ratios));
    r.check("op_norm", max_ratio, format!("<= c0 = {}", opts.c0), max_ratio <= opts.c0);

    if xs.is_empty() {
        r.validate()?;
        return Ok(r);
    }
    let bt = batched_traces(init, xs)?;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut band_lo = Vec::with_capacity(depth);
    for l in 1..=depth {
        let norms = column_norms_sq(&bt.hidden[l]);
        let (a, b) = norms.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        band_lo.push(a);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    r.set("min_hidden_norm_sq", lo);
    r.set("max_hidden_norm_sq", hi);
    r.add_series("min_hidden_norm_sq_by_layer", Series::new((1..=depth).map(|l| l as f64).collect(), band_lo));
    r.check("hidden_norm_band_low", lo, ">= 2/3", lo >= 2.0 / 3.0);
    r.check("hidden_norm_band_high", hi, "<= 4/3", hi <= 4.0 / 3.0);

    // ‖∂f/∂Wᴸ‖_F = ‖√(2/m) Σᴸ a‖₂ ‖hᴸ⁻¹‖₂ = √(2/m) √(#active) ‖hᴸ⁻¹‖₂ since |a_r| = 1.
    let n = xs.len();
    let prev = column_norms_sq(&bt.hidden[depth - 1]);
    let mut grad_max: f64 = 0.0;
    for i in 0..n {
        let active = (0..cfg.width).filter(|&row| bt.active[depth - 1][row * n + i]).count() as f64;
        grad_max = grad_max.max(cfg.scale() * active.sqrt() * prev[i].sqrt());
    }
    let gbound = 2f64.sqrt() * opts.gradient_slack;
    r.set("max_last_layer_grad_norm", grad_max);
    r.check("last_layer_grad_norm", grad_max, format!("<= sqrt(2) * {}", opts.gradient_slack), grad_max <= gbound);

    if opts.products && depth >= 2 {
        let (hmax, iters) = max_product_norm(init, &bt, opts)?;
        let shape = depth as f64 * m.ln().sqrt();
        r.set("max_product_norm", hmax);
        r.set("product_norm_constant", hmax / shape);
        r.set("product_power_iterations", iters as f64);
        r.check(
            "product_norm",
            hmax,
            format!("<= {} * L * sqrt(log m) = {:.6}", opts.product_slack, opts.product_slack * shape),
            hmax <= opts.product_slack * shape,
        );
    }
    r.validate()?;
    Ok(r)
}

/// `max_i max_{2≤a≤b≤L} ‖Hᵃ_b(x_i)‖₂`, running power iteration for every input
/// at once: the block `V` holds one column per input, and each layer of the
/// product is one GEMM followed by that input's mask. The start block for
/// `(a, b)` is the converged block for `(a, b − 1)`.
fn max_product_norm(params: &NetworkParams, bt: &BatchedTrace, opts: &InitNormOptions) -> Result<(f64, usize)> {
    let m = params.width();
    let n = bt.hidden[0].cols();
    let c = params.config().scale();
    let depth = params.depth();
    let mask = |v: &mut [f64], l: usize| {
        for (val, &on) in v.iter_mut().zip(&bt.active[l - 1]) {
            *val = if on { c * *val } else { 0.0 };
        }
    };
    let apply = |v: &[f64], a: usize, b: usize| -> Vec<f64> {
        let mut cur = v.to_vec();
        for l in a..=b {
            cur = params.layer(l).matmul_rowmajor(&cur, n);
            mask(&mut cur, l);
        }
        cur
    };
    let apply_t = |v: &[f64], a: usize, b: usize| -> Vec<f64> {
        let mut cur = v.to_vec();
        for l in (a..=b).rev() {
            mask(&mut cur, l);
            cur = params.layer(l).matmul_t_rowmajor(&cur, n);
        }
        cur
    };
    let col_norms = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for row in v.chunks_exact(n) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x * x;
            }
        }
        out.into_iter().map(f64::sqrt).collect()
    };
    let normalize_cols = |v: &mut [f64]| {
        let norms = col_norms(v);
        for row in v.chunks_exact_mut(n) {
            for (x, &s) in row.iter_mut().zip(&norms) {
                if s > 0.0 {
                    *x /= s;
                }
            }
        }
    };

    let mut best: f64 = 0.0;
    let mut total_iters = 0;
    for a in 2..=depth {
        let mut start = rng::stream(params.config().seed, Stream::PowerStart, a as u64, (m * n) as u64);
        let mut v = vec![0.0; m * n];
        rng::fill_gaussian(&mut start, &mut v);
        normalize_cols(&mut v);
        for b in a..=depth {
            let mut est = vec![0.0; n];
            let mut converged = false;
            for _ in 0..opts.max_iters {
                total_iters += 1;
                let av = apply(&v, a, b);
                let sig = col_norms(&av);
                if sig.iter().any(|s| !s.is_finite()) {
                    return Err(Error::NonFinite("product power iteration".into()));
                }
                let done = sig.iter().zip(&est).all(|(s, e)| (s - e).abs() <= opts.product_tol * s);
                est = sig;
                if done {
                    converged = true;
                    break;
                }
                v = apply_t(&av, a, b);
                normalize_cols(&mut v);
            }
            let top = est.iter().copied().fold(0.0, f64::max);
            if !converged {
                return Err(Error::NoConvergence { iterations: opts.max_iters, estimate: top });
            }
            best = best.max(top);
        }
    }
    Ok((best, total_iters))
}

/// Which `(b, c)` pair the indicator identity is tested on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorCase {
    Zero,
    Parallel,
    Orthogonal,
    Random,
}

/// Monte-Carlo check of `E[1{⟨w,c⟩ ≥ 0} ⟨w,b⟩²] = ‖b‖²/2` for `w ~ N(0, I)`.
pub fn gaussian_indicator_check(dim: usize, trials: usize, seed: u64, case: IndicatorCase) -> Result<ProbeReport> {
    if trials < 10_000 {
        return Err(Error::Config(format!("indicator check needs at least 10^4 trials, got {trials}")));
    }
    if dim < 2 {
        return Err(Error::Config("indicator check needs dim >= 2".into()));
    }
    let mut setup = rng::stream(seed, Stream::Probe, dim as u64, 0);
    let mut c = vec![0.0; dim];
    rng::fill_gaussian(&mut setup, &mut c);
    linalg::normalize(&mut c);
    let b: Vec<f64> = match case {
        IndicatorCase::Zero => vec![0.0; dim],
        IndicatorCase::Parallel => c.clone(),
        IndicatorCase::Orthogonal => {
            let mut b = vec![0.0; dim];
            rng::fill_gaussian(&mut setup, &mut b);
            let proj = linalg::dot(&b, &c);
            for (x, &y) in b.iter_mut().zip(&c) {
                *x -= proj * y;
            }
            linalg::normalize(&mut b);
            b
        }
        IndicatorCase::Random => {
            let mut b = vec![0.0; dim];
            rng::fill_gaussian(&mut setup, &mut b);
            b
        }
    };
    let mut draws = rng::stream(seed, Stream::Probe, dim as u64, 1);
    let mut w = vec![0.0; dim];
    let mut sum = linalg::Compensated::default();
    let mut sum_sq = linalg::Compensated::default();
    for _ in 0..trials {
        rng::fill_gaussian(&mut draws, &mut w);
        let v = if linalg::dot(&w, &c) >= 0.0 { linalg::dot(&w, &b).powi(2) } else { 0.0 };
        sum.add(v);
        sum_sq.add(v * v);
    }
    let t = trials as f64;
    let mean = sum.value() / t;
    let var = (sum_sq.value() / t - mean * mean).max(0.0);
    let expected = linalg::sum_sq(&b) / 2.0;
    let mut r = ProbeReport::new("gaussian-indicator", ProbeMeta { seed, d: dim, n: trials, ..ProbeMeta::default() });
    r.set("estimate", mean);
    r.set("expected", expected);
    r.set("deviation", mean - expected);
    r.set("standard_error", (var / t).sqrt());
    // 0.01 absolute for ‖b‖ = 1, scaled with ‖b‖² beyond that.
    let tol = if expected == 0.0 { 0.0 } else { 0.01 * (2.0 * expected).max(1.0) };
    r.check("identity", (mean - expected).abs(), format!("<= {tol}"), (mean - expected).abs() <= tol);
    r.validate()?;
    Ok(r)
}
