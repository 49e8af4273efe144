//! Fully-connected ReLU network `f(x) = aᵀ hᴸ(x)` with
//! `hˡ = √(2/m) σ(Wˡ hˡ⁻¹)`, `h⁰ = x`, and a fixed ±1 output layer.
//!
//! Layers are indexed from 1 in the public API (`W¹ … Wᴸ`) and stored 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LinearOperator, Matrix, PowerIteration};
use crate::rng::{self, Stream};

/// Unit-norm tolerance for network inputs.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of hidden weight layers `L`.
    pub depth: usize,
    /// Hidden width `m`; must be even.
    pub width: usize,
    pub input_dim: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(depth: usize, width: usize, input_dim: usize, seed: u64) -> Self {
        Self { depth, width, input_dim, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth L must be at least 1".into()));
        }
        if self.width == 0 || self.width % 2 == 1 {
            return Err(Error::Config(format!(
                "width m must be a positive even integer, got {}",
                self.width
            )));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input dimension d must be at least 1".into()));
        }
        Ok(())
    }

    /// `√(2/m)`.
    pub fn scale(&self) -> f64 {
        (2.0 / self.width as f64).sqrt()
    }

    /// `(rows, cols)` of layer `l` (1-based).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        if l == 1 {
            (self.width, self.input_dim)
        } else {
            (self.width, self.width)
        }
    }
}

/// Weights `W¹ … Wᴸ` and the fixed output signs `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    layers: Vec<Matrix>,
    output: Vec<f64>,
}

impl NetworkParams {
    pub fn new(config: NetworkConfig, layers: Vec<Matrix>, output: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.depth {
            return Err(Error::Shape(format!(
                "expected {} layers, got {}",
                config.depth,
                layers.len()
            )));
        }
        for (i, w) in layers.iter().enumerate() {
            if w.shape() != config.layer_shape(i + 1) {
                return Err(Error::Shape(format!(
                    "layer {} has shape {:?}, expected {:?}",
                    i + 1,
                    w.shape(),
                    config.layer_shape(i + 1)
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("layer {} weights", i + 1)));
            }
        }
        if output.len() != config.width {
            return Err(Error::Shape(format!("output layer has {} entries, expected {}", output.len(), config.width)));
        }
        let half = config.width / 2;
        for r in 0..half {
            let (a, b) = (output[r], output[r + half]);
            if a.abs() != 1.0 || b != -a {
                return Err(Error::Config(format!(
                    "output signs must satisfy a[r + m/2] = -a[r] in {{-1, +1}}; violated at r = {r}"
                )));
            }
        }
        Ok(Self { config, layers, output })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Matrix] {
        &mut self.layers
    }

    /// Layer `l`, 1-based.
    pub fn layer(&self, l: usize) -> &Matrix {
        &self.layers[l - 1]
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|w| w.rows() * w.cols()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }

    /// `W + c·D` for a direction with matching shapes.
    pub fn add_scaled(&self, direction: &GradientSet, c: f64) -> Result<Self> {
        direction.check_shapes(&self.config)?;
        let mut out = self.clone();
        for (w, d) in out.layers.iter_mut().zip(&direction.layers) {
            for (x, y) in w.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *x += c * y;
            }
        }
        Ok(out)
    }

    /// `W − W̃` as a per-layer set.
    pub fn difference(&self, other: &NetworkParams) -> Result<GradientSet> {
        check_same_shapes(self, other)?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
                Matrix::from_vec(a.rows(), a.cols(), data)
            })
            .collect::<Result<_>>()?;
        Ok(GradientSet { layers })
    }
}

/// Symmetric initialisation.
///
/// Rows of `W¹ … Wᴸ⁻¹` are i.i.d. standard Gaussian; the first `m/2` rows of `Wᴸ`
/// are standard Gaussian and row `r + m/2` copies row `r`; `a_r` is a uniform sign
/// for `r < m/2` and `a_{r+m/2} = −a_r`. Row `r` of layer `l` is drawn from its own
/// stream, so the result depends only on the config.
pub fn init_symmetric(cfg: &NetworkConfig) -> Result<NetworkParams> {
    cfg.validate()?;
    let m = cfg.width;
    let half = m / 2;
    let mut layers = Vec::with_capacity(cfg.depth);
    for l in 1..=cfg.depth {
        let (rows, cols) = cfg.layer_shape(l);
        let mut w = Matrix::zeros(rows, cols);
        let drawn = if l == cfg.depth { half } else { rows };
        for r in 0..drawn {
            let mut s = rng::stream(cfg.seed, Stream::Weights, l as u64, r as u64);
            rng::fill_gaussian(&mut s, w.row_mut(r));
        }
        if l == cfg.depth {
            for r in 0..half {
                let src = w.row(r).to_vec();
                w.row_mut(r + half).copy_from_slice(&src);
            }
        }
        layers.push(w);
    }
    let mut output = vec![0.0; m];
    for r in 0..half {
        let mut s = rng::stream(cfg.seed, Stream::OutputSigns, r as u64, 0);
        output[r] = rng::sign(&mut s);
        output[r + half] = -output[r];
    }
    NetworkParams::new(*cfg, layers, output)
}

/// Packed 0/1 diagonal `Σˡ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignPattern {
    len: usize,
    bits: Vec<u64>,
}

impl SignPattern {
    pub fn from_preactivations(pre: &[f64]) -> Self {
        let mut bits = vec![0u64; pre.len().div_ceil(64)];
        for (r, &p) in pre.iter().enumerate() {
            if p >= 0.0 {
                bits[r / 64] |= 1 << (r % 64);
            }
        }
        Self { len: pre.len(), bits }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, r: usize) -> bool {
        self.bits[r / 64] >> (r % 64) & 1 == 1
    }

    pub fn count_active(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// `‖Σ − Σ'‖₀`.
    pub fn hamming(&self, other: &SignPattern) -> usize {
        self.bits.iter().zip(&other.bits).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }
}

/// Per-input record of hidden outputs and activation patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    /// `h⁰ … hᴸ`.
    pub hidden: Vec<Vec<f64>>,
    /// Pre-activations `Wˡ hˡ⁻¹` for `l = 1 … L`.
    pub pre: Vec<Vec<f64>>,
    /// `Σ¹ … Σᴸ`.
    pub sigma: Vec<SignPattern>,
}

impl ActivationTrace {
    /// Recomputes `hˡ = √(2/m) Σˡ Wˡ hˡ⁻¹` from the stored patterns and checks bit equality.
    pub fn reconstructs(&self, params: &NetworkParams) -> bool {
        let c = params.config.scale();
        if self.hidden.len() != params.depth() + 1 || self.sigma.len() != params.depth() {
            return false;
        }
        for l in 1..=params.depth() {
            let z = params.layer(l).matvec(&self.hidden[l - 1]);
            let sigma = &self.sigma[l - 1];
            let rebuilt: Vec<f64> =
                z.iter().enumerate().map(|(r, &p)| if sigma.get(r) { c * p } else { 0.0 }).collect();
            if rebuilt.iter().zip(&self.hidden[l]).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return false;
            }
        }
        true
    }

    /// Smallest `|⟨wˡ_r, hˡ⁻¹⟩|` over all layers and units.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.pre.iter().flatten().fold(f64::INFINITY, |acc, p| acc.min(p.abs()))
    }
}

/// How strictly `forward` enforces `‖x‖₂ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputPolicy {
    #[default]
    Strict,
    Warn,
    Unchecked,
}

fn check_input(params: &NetworkParams, x: &[f64], policy: InputPolicy) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(Error::Shape(format!("input has length {}, expected {}", x.len(), params.input_dim())));
    }
    if policy == InputPolicy::Unchecked {
        return Ok(());
    }
    let norm = linalg::norm2(x);
    if (norm - 1.0).abs() > UNIT_TOL {
        match policy {
            InputPolicy::Strict => return Err(Error::NonUnitInput { norm }),
            InputPolicy::Warn => log::warn!("input off the unit sphere: |x| = {norm}"),
            InputPolicy::Unchecked => {}
        }
    }
    Ok(())
}

/// `aᵀ h` summed in pairs `(r, r + m/2)`.
pub fn paired_output(a: &[f64], h: &[f64]) -> f64 {
    let half = a.len() / 2;
    let mut s = 0.0;
    for r in 0..half {
        s += a[r] * h[r] + a[r + half] * h[r + half];
    }
    s
}

/// `f_W(x)`.
pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<f64> {
    forward_with(params, x, InputPolicy::Strict)
}

pub fn forward_with(params: &NetworkParams, x: &[f64], policy: InputPolicy) -> Result<f64> {
    check_input(params, x, policy)?;
    let c = params.config.scale();
    let mut h = x.to_vec();
    for w in &params.layers {
        let mut z = w.matvec(&h);
        for v in &mut z {
            *v = if *v >= 0.0 { c * *v } else { 0.0 };
        }
        h = z;
    }
    Ok(paired_output(&params.output, &h))
}

pub fn forward_with_trace(params: &NetworkParams, x: &[f64]) -> Result<(f64, ActivationTrace)> {
    forward_with_trace_policy(params, x, InputPolicy::Strict)
}

pub fn forward_with_trace_policy(
    params: &NetworkParams,
    x: &[f64],
    policy: InputPolicy,
) -> Result<(f64, ActivationTrace)> {
    check_input(params, x, policy)?;
    let c = params.config.scale();
    let depth = params.depth();
    let mut hidden = Vec::with_capacity(depth + 1);
    let mut pre = Vec::with_capacity(depth);
    let mut sigma = Vec::with_capacity(depth);
    hidden.push(x.to_vec());
    for w in &params.layers {
        let z = w.matvec(hidden.last().expect("h0 present"));
        let pattern = SignPattern::from_preactivations(&z);
        let h: Vec<f64> = z.iter().map(|&v| if v >= 0.0 { c * v } else { 0.0 }).collect();
        hidden.push(h);
        pre.push(z);
        sigma.push(pattern);
    }
    let f = paired_output(&params.output, &hidden[depth]);
    Ok((f, ActivationTrace { hidden, pre, sigma }))
}

fn check_trace(params: &NetworkParams, trace: &ActivationTrace) -> Result<()> {
    let depth = params.depth();
    if trace.hidden.len() != depth + 1 || trace.sigma.len() != depth {
        return Err(Error::Shape(format!(
            "trace has {} hidden vectors and {} patterns for a depth-{depth} network",
            trace.hidden.len(),
            trace.sigma.len()
        )));
    }
    if trace.hidden[0].len() != params.input_dim()
        || trace.sigma.iter().any(|s| s.len() != params.width())
        || trace.hidden[1..].iter().any(|h| h.len() != params.width())
    {
        return Err(Error::Shape("trace dimensions do not match the network".into()));
    }
    Ok(())
}

/// Backward vectors `gˡ = (Gˡ_L)ᵀ a` for `l = 1 … L`, so that `∂f/∂Wˡ = gˡ (hˡ⁻¹)ᵀ`.
///
/// `gᴸ = √(2/m) Σᴸ a`, `gˡ⁻¹ = √(2/m) Σˡ⁻¹ (Wˡ)ᵀ gˡ`.
pub fn backprop_vectors(params: &NetworkParams, trace: &ActivationTrace) -> Result<Vec<Vec<f64>>> {
    check_trace(params, trace)?;
    let c = params.config.scale();
    let depth = params.depth();
    let mut out = vec![Vec::new(); depth];
    let sig = &trace.sigma[depth - 1];
    let mut g: Vec<f64> =
        params.output.iter().enumerate().map(|(r, &a)| if sig.get(r) { c * a } else { 0.0 }).collect();
    for l in (1..=depth).rev() {
        if l > 1 {
            let back = params.layer(l).matvec_t(&g);
            let sig = &trace.sigma[l - 2];
            let next = back.iter().enumerate().map(|(r, &v)| if sig.get(r) { c * v } else { 0.0 }).collect();
            out[l - 1] = std::mem::replace(&mut g, next);
        } else {
            out[0] = std::mem::take(&mut g);
        }
    }
    Ok(out)
}

/// `∂f_W(x)/∂Wˡ = (Gˡ_L)ᵀ a (hˡ⁻¹)ᵀ` for every layer.
pub fn layer_gradients(params: &NetworkParams, trace: &ActivationTrace) -> Result<GradientSet> {
    let back = backprop_vectors(params, trace)?;
    let layers = back
        .iter()
        .enumerate()
        .map(|(i, g)| outer(g, &trace.hidden[i]))
        .collect();
    Ok(GradientSet { layers })
}

pub(crate) fn outer(u: &[f64], v: &[f64]) -> Matrix {
    let mut data = Vec::with_capacity(u.len() * v.len());
    for &a in u {
        data.extend(v.iter().map(|&b| a * b));
    }
    Matrix::from_vec(u.len(), v.len(), data).expect("outer product shape")
}

/// Per-layer matrices shaped like a network's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Matrix>,
}

impl GradientSet {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let layers = (1..=cfg.depth)
            .map(|l| {
                let (r, c) = cfg.layer_shape(l);
                Matrix::zeros(r, c)
            })
            .collect();
        Self { layers }
    }

    pub fn check_shapes(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.layers.len() != cfg.depth
            || self.layers.iter().enumerate().any(|(i, m)| m.shape() != cfg.layer_shape(i + 1))
        {
            return Err(Error::Shape("gradient set does not match network shape".into()));
        }
        Ok(())
    }

    /// Squared Frobenius norm per layer.
    pub fn layer_norms_sq(&self) -> Vec<f64> {
        self.layers.iter().map(Matrix::frobenius_norm_sq).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::compensated_sum(self.layer_norms_sq()).sqrt()
    }

    /// `⟨A, B⟩ = Σ_l tr(AˡᵀBˡ)`.
    pub fn inner(&self, other: &GradientSet) -> f64 {
        linalg::compensated_sum(
            self.layers.iter().zip(&other.layers).map(|(a, b)| linalg::dot(a.as_slice(), b.as_slice())),
        )
    }

    pub fn axpy(&mut self, c: f64, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += c * y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for m in &mut self.layers {
            m.scale(c);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }
}

/// Frobenius distance between two parameter sets, in total and per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDistances {
    pub total: f64,
    pub per_layer: Vec<f64>,
}

impl LayerDistances {
    /// Whether `B` lies in `𝓑_R(A)`, i.e. every layer is within `R`.
    pub fn within_ball(&self, radius: f64) -> bool {
        self.per_layer.iter().all(|&d| d <= radius)
    }

    pub fn max_layer(&self) -> f64 {
        self.per_layer.iter().cloned().fold(0.0, f64::max)
    }
}

fn check_same_shapes(a: &NetworkParams, b: &NetworkParams) -> Result<()> {
    if a.depth() != b.depth()
        || a.layers.iter().zip(&b.layers).any(|(x, y)| x.shape() != y.shape())
    {
        return Err(Error::Shape("parameter sets have different shapes".into()));
    }
    Ok(())
}

pub fn frobenius_distance(a: &NetworkParams, b: &NetworkParams) -> Result<LayerDistances> {
    let sq = squared_layer_distances(a, b)?;
    let total = linalg::compensated_sum(sq.iter().copied()).sqrt();
    Ok(LayerDistances { total, per_layer: sq.into_iter().map(f64::sqrt).collect() })
}

/// `‖Aˡ − Bˡ‖_F²` per layer with compensated accumulation.
pub fn squared_layer_distances(a: &NetworkParams, b: &NetworkParams) -> Result<Vec<f64>> {
    check_same_shapes(a, b)?;
    Ok(a.layers
        .iter()
        .zip(&b.layers)
        .map(|(x, y)| {
            let mut acc = linalg::Compensated::default();
            for (p, q) in x.as_slice().iter().zip(y.as_slice()) {
                let d = p - q;
                acc.add(d * d);
            }
            acc.value()
        })
        .collect())
}

/// `‖W − W̃‖_F²` summed over layers.
pub fn squared_distance(a: &NetworkParams, b: &NetworkParams) -> Result<f64> {
    Ok(linalg::compensated_sum(squared_layer_distances(a, b)?))
}

/// The implicit product `Hᵃ_b = √(2/m)ΣᵇWᵇ ⋯ √(2/m)ΣᵃWᵃ`.
pub struct ProductOperator<'a> {
    params: &'a NetworkParams,
    trace: &'a ActivationTrace,
    from: usize,
    to: usize,
}

impl<'a> ProductOperator<'a> {
    pub fn new(params: &'a NetworkParams, trace: &'a ActivationTrace, from: usize, to: usize) -> Result<Self> {
        check_trace(params, trace)?;
        if from < 2 || from > to || to > params.depth() {
            return Err(Error::Index(format!(
                "product indices must satisfy 2 <= a <= b <= L = {}; got a = {from}, b = {to}",
                params.depth()
            )));
        }
        Ok(Self { params, trace, from, to })
    }
}

impl LinearOperator for ProductOperator<'_> {
    fn nrows(&self) -> usize {
        self.params.width()
    }

    fn ncols(&self) -> usize {
        self.params.width()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let c = self.params.config.scale();
        let mut v = x.to_vec();
        for l in self.from..=self.to {
            let sig = &self.trace.sigma[l - 1];
            v = self.params.layer(l).matvec(&v);
            for (r, x) in v.iter_mut().enumerate() {
                *x = if sig.get(r) { c * *x } else { 0.0 };
            }
        }
        v
    }

    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let c = self.params.config.scale();
        let mut v = y.to_vec();
        for l in (self.from..=self.to).rev() {
            let sig = &self.trace.sigma[l - 1];
            for (r, x) in v.iter_mut().enumerate() {
                *x = if sig.get(r) { c * *x } else { 0.0 };
            }
            v = self.params.layer(l).matvec_t(&v);
        }
        v
    }
}

/// `‖Hᵃ_b(x)‖₂` by power iteration on the implicit product.
pub fn product_operator_norm(
    params: &NetworkParams,
    trace: &ActivationTrace,
    a_idx: usize,
    b_idx: usize,
    power: &PowerIteration,
) -> Result<f64> {
    let op = ProductOperator::new(params, trace, a_idx, b_idx)?;
    power.spectral_norm(&op)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; d];
        x[i] = 1.0;
        x
    }

    #[test]
    fn symmetric_init_duplicates_last_layer() {
        let p = init_symmetric(&NetworkConfig::new(2, 4, 2, 7)).unwrap();
        let w2 = p.layer(2);
        assert_eq!(w2.row(2), w2.row(0));
        assert_eq!(w2.row(3), w2.row(1));
        let a = p.output();
        assert_eq!(a[2], -a[0]);
        assert_eq!(a[3], -a[1]);
        assert!(a.iter().all(|v| v.abs() == 1.0));
        assert_eq!(forward(&p, &unit(2, 0)).unwrap(), 0.0);
    }

    #[test]
    fn single_layer_init() {
        let p = init_symmetric(&NetworkConfig::new(1, 2, 3, 1)).unwrap();
        assert_eq!(p.layer(1).shape(), (2, 3));
        assert_eq!(p.layer(1).row(0), p.layer(1).row(1));
        assert_eq!(p.output()[1], -p.output()[0]);
    }

    #[test]
    fn odd_width_is_rejected() {
        assert!(matches!(init_symmetric(&NetworkConfig::new(2, 5, 3, 0)), Err(Error::Config(_))));
        assert!(init_symmetric(&NetworkConfig::new(0, 4, 3, 0)).is_err());
        assert!(init_symmetric(&NetworkConfig::new(1, 4, 0, 0)).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = NetworkConfig::new(3, 16, 5, 99);
        assert_eq!(init_symmetric(&cfg).unwrap(), init_symmetric(&cfg).unwrap());
        let other = init_symmetric(&NetworkConfig::new(3, 16, 5, 100)).unwrap();
        assert_ne!(init_symmetric(&cfg).unwrap(), other);
    }

    #[test]
    fn zero_weights_give_zero_output_and_active_patterns() {
        let cfg = NetworkConfig::new(3, 4, 2, 0);
        let layers = (1..=3).map(|l| {
            let (r, c) = cfg.layer_shape(l);
            Matrix::zeros(r, c)
        });
        let p = NetworkParams::new(cfg, layers.collect(), vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let (f, tr) = forward_with_trace(&p, &unit(2, 1)).unwrap();
        assert_eq!(f, 0.0);
        assert!(tr.hidden[1..].iter().flatten().all(|&h| h == 0.0));
        assert!(tr.sigma.iter().all(|s| s.count_active() == 4));
        let op = ProductOperator::new(&p, &tr, 2, 2).unwrap();
        assert_eq!(PowerIteration::default().spectral_norm(&op).unwrap(), 0.0);
    }

    #[test]
    fn non_unit_input_policy() {
        let p = init_symmetric(&NetworkConfig::new(1, 4, 2, 0)).unwrap();
        assert!(matches!(forward(&p, &[1.0, 1.0]), Err(Error::NonUnitInput { .. })));
        assert!(forward_with(&p, &[1.0, 1.0], InputPolicy::Warn).is_ok());
        assert!(forward(&p, &[1.0]).is_err());
    }

    #[test]
    fn trace_reconstructs_and_pairs_last_layer() {
        let p = init_symmetric(&NetworkConfig::new(3, 8, 3, 5)).unwrap();
        let x = [0.6, 0.0, 0.8];
        let (f, tr) = forward_with_trace(&p, &x).unwrap();
        assert_eq!(f, forward(&p, &x).unwrap());
        assert!(tr.reconstructs(&p));
        let sl = &tr.sigma[2];
        for r in 0..4 {
            assert_eq!(sl.get(r), sl.get(r + 4));
        }
    }

    #[test]
    fn gradients_at_init_vanish_below_last_layer() {
        let p = init_symmetric(&NetworkConfig::new(3, 8, 3, 11)).unwrap();
        let x = [0.0, 0.6, -0.8];
        let (_, tr) = forward_with_trace(&p, &x).unwrap();
        let g = layer_gradients(&p, &tr).unwrap();
        assert!(g.layers[0].as_slice().iter().all(|&v| v == 0.0));
        assert!(g.layers[1].as_slice().iter().all(|&v| v == 0.0));
        assert!(g.layers[2].frobenius_norm() > 0.0);
    }

    #[test]
    fn zero_input_gives_zero_gradients() {
        let p = init_symmetric(&NetworkConfig::new(2, 6, 3, 2)).unwrap();
        let (f, tr) = forward_with_trace_policy(&p, &[0.0; 3], InputPolicy::Unchecked).unwrap();
        assert_eq!(f, 0.0);
        let g = layer_gradients(&p, &tr).unwrap();
        assert_eq!(g.frobenius_norm(), 0.0);
    }

    #[test]
    fn trace_shape_mismatch_is_reported() {
        let p = init_symmetric(&NetworkConfig::new(2, 6, 3, 2)).unwrap();
        let q = init_symmetric(&NetworkConfig::new(3, 6, 3, 2)).unwrap();
        let (_, tr) = forward_with_trace(&q, &[1.0, 0.0, 0.0]).unwrap();
        assert!(layer_gradients(&p, &tr).is_err());
        assert!(product_operator_norm(&q, &tr, 1, 2, &PowerIteration::default()).is_err());
        assert!(product_operator_norm(&q, &tr, 3, 2, &PowerIteration::default()).is_err());
        assert!(product_operator_norm(&q, &tr, 2, 4, &PowerIteration::default()).is_err());
    }

    #[test]
    fn frobenius_distance_basics() {
        let a = init_symmetric(&NetworkConfig::new(2, 4, 3, 1)).unwrap();
        assert_eq!(frobenius_distance(&a, &a).unwrap().total, 0.0);
        let mut b = a.clone();
        let v = b.layers_mut()[1].get(1, 2);
        b.layers_mut()[1].set(1, 2, v + 3.0);
        let d = frobenius_distance(&a, &b).unwrap();
        assert!((d.total - 3.0).abs() < 1e-12);
        assert_eq!(d.per_layer[0], 0.0);
        assert!(d.within_ball(3.0 + 1e-12) && !d.within_ball(2.9));
        let c = init_symmetric(&NetworkConfig::new(1, 4, 3, 1)).unwrap();
        assert!(frobenius_distance(&a, &c).is_err());
    }

    #[test]
    fn rejects_non_antisymmetric_output() {
        let cfg = NetworkConfig::new(1, 2, 1, 0);
        let w = Matrix::zeros(2, 1);
        assert!(NetworkParams::new(cfg, vec![w.clone()], vec![1.0, 1.0]).is_err());
        assert!(NetworkParams::new(cfg, vec![w], vec![0.5, -0.5]).is_err());
    }
}
