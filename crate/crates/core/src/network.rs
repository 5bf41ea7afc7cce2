//! MLP definition, initialisation and forward evaluation under the four
//! dropout regimes, including the feature-dependent rate network.
//!
//! Forward passes are recorded on an autodiff tape. Inputs are laid out
//! with samples as columns (`d x n`), so bias and per-point rate rows are
//! broadcast with a ones-vector matmul rather than implicit broadcasting.

use crate::array::Array;
use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Prediction task. Classification outputs pass through a sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    BinaryClassification,
}

/// Architecture of a multilayer perceptron with tanh hidden activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub task: Task,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, task: Task) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims,
            output_dim,
            task,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "input and output dimensions must be positive".into(),
            ));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(
                "hidden_dims must be nonempty with positive widths".into(),
            ));
        }
        Ok(())
    }

    /// Dimensions of consecutive layers: input, hidden..., output.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims
    }
}

/// One dense layer: weight `out x in`, bias `out x 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array,
    pub bias: Array,
}

/// Per-layer weights and biases with a flattened view for the optimiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<Layer>,
}

impl Parameters {
    /// Weights ~ Normal(0, sd), biases zero.
    fn init(dims: &[usize], sd: f64, rng: &mut ChaCha8Rng) -> Parameters {
        let normal = Normal::new(0.0, sd).expect("valid normal");
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let (d_in, d_out) = (w[0], w[1]);
            let data: Vec<f64> = (0..d_out * d_in).map(|_| normal.sample(rng)).collect();
            layers.push(Layer {
                weight: Array::from_vec(d_out, d_in, data),
                bias: Array::zeros(d_out, 1),
            });
        }
        Parameters { layers }
    }

    pub fn count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
    }

    pub fn assign_from(&mut self, flat: &[f64], cursor: &mut usize) {
        for l in &mut self.layers {
            for v in l.weight.as_mut_slice() {
                *v = flat[*cursor];
                *cursor += 1;
            }
            for v in l.bias.as_mut_slice() {
                *v = flat[*cursor];
                *cursor += 1;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.all_finite() && l.bias.all_finite())
    }
}

/// Which dropout scheme a model uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DropoutVariant {
    /// No dropout anywhere.
    None,
    /// Same fixed rate on every hidden layer.
    FixedRate(f64),
    /// One trainable logit-rate per hidden layer.
    ConcreteLayerwise(Vec<f64>),
    /// Fixed rate on the last hidden layer only.
    LastLayerOnly(f64),
    /// Rate network mapping features to a shared per-input rate.
    FeatureDependent {
        spec: MlpSpec,
        params: Parameters,
    },
}

/// Dropout policy: variant plus the relaxation temperature and the clamp
/// keeping realised rates inside `[eps, 1 - eps]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutPolicy {
    pub variant: DropoutVariant,
    pub temperature: f64,
    pub rate_clamp: f64,
}

impl DropoutPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument(
                "dropout temperature must be positive".into(),
            ));
        }
        if !(self.rate_clamp > 0.0 && self.rate_clamp < 0.5) {
            return Err(Error::InvalidArgument(
                "rate_clamp must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }

    pub fn is_feature_dependent(&self) -> bool {
        matches!(self.variant, DropoutVariant::FeatureDependent { .. })
    }
}

/// Construction-time description of the policy; `init` turns this into a
/// [`DropoutPolicy`] with freshly initialised trainable pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub kind: DropoutKind,
    pub temperature: f64,
    pub rate_clamp: f64,
    /// Rate used by FixedRate and LastLayerOnly.
    pub fixed_rate: f64,
    /// Initial rate for trainable variants (concrete logits, rate-net bias).
    pub initial_rate: f64,
    /// Hidden widths of the rate network.
    pub rate_net_hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropoutKind {
    None,
    FixedRate,
    ConcreteLayerwise,
    LastLayerOnly,
    FeatureDependent,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        DropoutConfig {
            kind: DropoutKind::None,
            temperature: 0.1,
            rate_clamp: 0.01,
            fixed_rate: 0.5,
            initial_rate: 0.1,
            rate_net_hidden: vec![16],
        }
    }
}

impl DropoutConfig {
    pub fn with_kind(kind: DropoutKind) -> Self {
        DropoutConfig {
            kind,
            ..Default::default()
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A network together with its dropout policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub params: Parameters,
    pub dropout: DropoutPolicy,
}

/// How hidden-unit masks are formed during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// No sampling; hidden units scaled by their keep probability.
    Deterministic,
    /// Hard Bernoulli masks; no gradient reaches the rates.
    Sampled,
    /// Concrete relaxation; differentiable with respect to the rates.
    Relaxed,
}

/// Initialise a model: weights are Normal(0, 0.1), biases zero. The rate
/// network is initialised the same way except for its output bias, which
/// starts the rate at `initial_rate`.
pub fn init(spec: &MlpSpec, dropout: &DropoutConfig, seed: u64) -> Result<MlpModel> {
    spec.validate()?;
    if !(dropout.initial_rate > 0.0 && dropout.initial_rate < 1.0) {
        return Err(Error::InvalidArgument(
            "initial_rate must lie in (0, 1)".into(),
        ));
    }
    let mut rng = rng::stream(seed, tag::INIT);
    let params = Parameters::init(&spec.layer_dims(), 0.1, &mut rng);

    let variant = match dropout.kind {
        DropoutKind::None => DropoutVariant::None,
        DropoutKind::FixedRate => DropoutVariant::FixedRate(dropout.fixed_rate),
        DropoutKind::LastLayerOnly => DropoutVariant::LastLayerOnly(dropout.fixed_rate),
        DropoutKind::ConcreteLayerwise => DropoutVariant::ConcreteLayerwise(vec![
            logit(dropout.initial_rate);
            spec.hidden_dims.len()
        ]),
        DropoutKind::FeatureDependent => {
            let rate_spec = MlpSpec::new(
                spec.input_dim,
                dropout.rate_net_hidden.clone(),
                1,
                Task::BinaryClassification,
            );
            rate_spec.validate()?;
            let mut rate_params = Parameters::init(&rate_spec.layer_dims(), 0.1, &mut rng);
            let last = rate_params.layers.len() - 1;
            rate_params.layers[last]
                .bias
                .set(0, 0, logit(dropout.initial_rate));
            DropoutVariant::FeatureDependent {
                spec: rate_spec,
                params: rate_params,
            }
        }
    };

    let policy = DropoutPolicy {
        variant,
        temperature: dropout.temperature,
        rate_clamp: dropout.rate_clamp,
    };
    policy.validate()?;
    Ok(MlpModel {
        spec: spec.clone(),
        params,
        dropout: policy,
    })
}

impl MlpModel {
    /// All trainable values (main layers, then policy) as one vector.
    pub fn flatten_trainable(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.params.flatten_into(&mut out);
        match &self.dropout.variant {
            DropoutVariant::ConcreteLayerwise(logits) => out.extend_from_slice(logits),
            DropoutVariant::FeatureDependent { params, .. } => params.flatten_into(&mut out),
            _ => {}
        }
        out
    }

    pub fn assign_trainable(&mut self, flat: &[f64]) {
        let mut cursor = 0;
        self.params.assign_from(flat, &mut cursor);
        match &mut self.dropout.variant {
            DropoutVariant::ConcreteLayerwise(logits) => {
                for l in logits.iter_mut() {
                    *l = flat[cursor];
                    cursor += 1;
                }
            }
            DropoutVariant::FeatureDependent { params, .. } => {
                params.assign_from(flat, &mut cursor);
            }
            _ => {}
        }
        debug_assert_eq!(cursor, flat.len());
    }

    /// Dropout rate for a single (standardised) input. Only valid for the
    /// feature-dependent policy.
    pub fn rate_for(&self, x: &[f64]) -> Result<f64> {
        match &self.dropout.variant {
            DropoutVariant::FeatureDependent { spec, params } => {
                if x.len() != spec.input_dim {
                    return Err(Error::InvalidArgument(format!(
                        "rate_for expects {} features, got {}",
                        spec.input_dim,
                        x.len()
                    )));
                }
                let out = eval_mlp_plain(params, x);
                let eps = self.dropout.rate_clamp;
                Ok(sigmoid(out[0]).clamp(eps, 1.0 - eps))
            }
            _ => Err(Error::PolicyMismatch(
                "rate_for requires a feature-dependent dropout policy".into(),
            )),
        }
    }
}

/// Plain (tape-free) forward pass used by `rate_for`. Hidden layers tanh;
/// the output head stays linear (no sigmoid).
fn eval_mlp_plain(params: &Parameters, x: &[f64]) -> Vec<f64> {
    let mut h: Vec<f64> = x.to_vec();
    let n_layers = params.layers.len();
    for (li, layer) in params.layers.iter().enumerate() {
        let rows = layer.weight.rows();
        let cols = layer.weight.cols();
        let mut z = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = layer.bias.get(r, 0);
            let wrow = layer.weight.row_slice(r);
            for c in 0..cols {
                acc += wrow[c] * h[c];
            }
            z[r] = acc;
        }
        if li + 1 < n_layers {
            for v in z.iter_mut() {
                *v = v.tanh();
            }
        }
        h = z;
    }
    h
}

/// Tape handles for a staged model: parameter leaves in canonical order.
pub struct ModelNodes {
    pub layers: Vec<(NodeId, NodeId)>,
    pub policy: PolicyNodes,
}

pub enum PolicyNodes {
    /// Nothing trainable in the policy.
    Static,
    Concrete(Vec<NodeId>),
    RateNet(Vec<(NodeId, NodeId)>),
}

impl ModelNodes {
    /// Push every trainable array onto the tape as a leaf. The order matches
    /// `MlpModel::flatten_trainable`.
    pub fn stage(tape: &mut Tape, model: &MlpModel) -> ModelNodes {
        let layers = model
            .params
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .collect();
        let policy = match &model.dropout.variant {
            DropoutVariant::ConcreteLayerwise(logits) => {
                PolicyNodes::Concrete(logits.iter().map(|&l| tape.scalar(l)).collect())
            }
            DropoutVariant::FeatureDependent { params, .. } => PolicyNodes::RateNet(
                params
                    .layers
                    .iter()
                    .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                    .collect(),
            ),
            _ => PolicyNodes::Static,
        };
        ModelNodes { layers, policy }
    }

    /// Trainable node ids in canonical flatten order.
    pub fn trainable_ids(&self) -> Vec<NodeId> {
        let mut ids = Vec::new();
        for &(w, b) in &self.layers {
            ids.push(w);
            ids.push(b);
        }
        match &self.policy {
            PolicyNodes::Static => {}
            PolicyNodes::Concrete(ls) => ids.extend_from_slice(ls),
            PolicyNodes::RateNet(ls) => {
                for &(w, b) in ls {
                    ids.push(w);
                    ids.push(b);
                }
            }
        }
        ids
    }
}

/// Output of a forward pass: the output node (`output_dim x n`) and the
/// masks applied per dropped hidden layer (empty in deterministic mode).
pub struct ForwardTrace {
    pub output: NodeId,
    pub masks: Vec<Array>,
}

/// Per-forward cache of rate nodes so each is built once per tape pass.
enum RateSource {
    NoDropout,
    /// (constant rate, applies only to last hidden layer?)
    Constant { rate: f64, last_only: bool },
    /// Clamped per-layer scalar rate nodes.
    PerLayer(Vec<NodeId>),
    /// Clamped `1 x n` per-point rate row shared by all hidden layers.
    Shared(NodeId),
}

/// Forward pass over a staged model. `x` is a `d x n` leaf already on the
/// tape (columns are samples).
pub fn forward_staged(
    tape: &mut Tape,
    nodes: &ModelNodes,
    model: &MlpModel,
    x: NodeId,
    mode: MaskMode,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardTrace> {
    let (d, n) = tape.value(x).shape();
    if d != model.spec.input_dim {
        return Err(Error::InvalidArgument(format!(
            "forward expects {} input features, got {}",
            model.spec.input_dim, d
        )));
    }
    let ones_row = tape.leaf(Array::filled(1, n, 1.0));
    let eps = model.dropout.rate_clamp;
    let n_hidden = model.spec.hidden_dims.len();

    // Build rate handles once per pass.
    let rates = match (&model.dropout.variant, &nodes.policy) {
        (DropoutVariant::None, _) => RateSource::NoDropout,
        (DropoutVariant::FixedRate(p), _) => RateSource::Constant {
            rate: p.clamp(eps, 1.0 - eps),
            last_only: false,
        },
        (DropoutVariant::LastLayerOnly(p), _) => RateSource::Constant {
            rate: p.clamp(eps, 1.0 - eps),
            last_only: true,
        },
        (DropoutVariant::ConcreteLayerwise(_), PolicyNodes::Concrete(logits)) => {
            let mut rs = Vec::with_capacity(logits.len());
            for &l in logits {
                let s = tape.sigmoid(l);
                rs.push(tape.clamp(s, eps, 1.0 - eps));
            }
            RateSource::PerLayer(rs)
        }
        (DropoutVariant::FeatureDependent { .. }, PolicyNodes::RateNet(rn)) => {
            let raw = mlp_on_tape(tape, rn, x, ones_row)?;
            let s = tape.sigmoid(raw);
            RateSource::Shared(tape.clamp(s, eps, 1.0 - eps))
        }
        _ => {
            return Err(Error::PolicyMismatch(
                "staged policy nodes do not match the model's dropout variant".into(),
            ))
        }
    };

    let mut masks = Vec::new();
    let mut h = x;
    for (li, &(w, b)) in nodes.layers.iter().enumerate() {
        let wh = tape.matmul(w, h)?;
        let bmat = tape.matmul(b, ones_row)?;
        let z = tape.add(wh, bmat)?;
        let is_output = li == nodes.layers.len() - 1;
        if is_output {
            h = match model.spec.task {
                Task::Regression => z,
                Task::BinaryClassification => tape.sigmoid(z),
            };
            break;
        }
        h = tape.tanh(z);
        h = apply_dropout(
            tape, &rates, model, li, n_hidden, h, n, mode, rng, &mut masks,
        )?;
    }
    Ok(ForwardTrace { output: h, masks })
}

/// Convenience: stage the model and run one forward pass. `features` is
/// `n x d` (rows are samples), as stored by the data pipeline.
pub fn forward(
    tape: &mut Tape,
    model: &MlpModel,
    features: &Array,
    mode: MaskMode,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardTrace> {
    let nodes = ModelNodes::stage(tape, model);
    let x = tape.leaf(features.transpose());
    forward_staged(tape, &nodes, model, x, mode, rng)
}

/// Run an MLP (no dropout) on the tape; returns the raw `out x n` head.
fn mlp_on_tape(
    tape: &mut Tape,
    layers: &[(NodeId, NodeId)],
    x: NodeId,
    ones_row: NodeId,
) -> Result<NodeId> {
    let mut h = x;
    for (li, &(w, b)) in layers.iter().enumerate() {
        let wh = tape.matmul(w, h)?;
        let bmat = tape.matmul(b, ones_row)?;
        let z = tape.add(wh, bmat)?;
        h = if li + 1 < layers.len() { tape.tanh(z) } else { z };
    }
    Ok(h)
}

#[allow(clippy::too_many_arguments)]
fn apply_dropout(
    tape: &mut Tape,
    rates: &RateSource,
    model: &MlpModel,
    layer_index: usize,
    n_hidden: usize,
    h: NodeId,
    n: usize,
    mode: MaskMode,
    rng: &mut ChaCha8Rng,
    masks: &mut Vec<Array>,
) -> Result<NodeId> {
    let width = tape.value(h).rows();
    let temperature = model.dropout.temperature;

    enum LayerRate {
        Skip,
        Constant(f64),
        Node(NodeId),
        Row(NodeId),
    }

    let rate = match rates {
        RateSource::NoDropout => LayerRate::Skip,
        RateSource::Constant { rate, last_only } => {
            if *last_only && layer_index + 1 != n_hidden {
                LayerRate::Skip
            } else {
                LayerRate::Constant(*rate)
            }
        }
        RateSource::PerLayer(rs) => LayerRate::Node(rs[layer_index]),
        RateSource::Shared(row) => LayerRate::Row(*row),
    };
    if matches!(rate, LayerRate::Skip) {
        return Ok(h);
    }

    match mode {
        MaskMode::Deterministic => {
            // Scale by the keep probability (the mask's expected value).
            // Rates are detached here: the deterministic pass is a
            // prediction path, not a training path for the rates.
            match rate {
                LayerRate::Skip => unreachable!(),
                LayerRate::Constant(r) => Ok(tape.scale(h, 1.0 - r)),
                LayerRate::Node(r) => {
                    let keep = 1.0 - tape.value(r).scalar_value();
                    Ok(tape.scale(h, keep))
                }
                LayerRate::Row(row) => {
                    let vals = tape.value(row).as_slice().to_vec();
                    let mut keep_mat = Array::zeros(width, n);
                    for r in 0..width {
                        for c in 0..n {
                            keep_mat.set(r, c, 1.0 - vals[c]);
                        }
                    }
                    let keep_node = tape.leaf(keep_mat);
                    tape.mul(h, keep_node)
                }
            }
        }
        MaskMode::Sampled => {
            // Hard Bernoulli(keep) masks as constants: rates receive no
            // gradient through sampled masks.
            let keep_of_col: Box<dyn Fn(usize) -> f64> = match &rate {
                LayerRate::Skip => unreachable!(),
                LayerRate::Constant(r) => {
                    let keep = 1.0 - *r;
                    Box::new(move |_| keep)
                }
                LayerRate::Node(r) => {
                    let keep = 1.0 - tape.value(*r).scalar_value();
                    Box::new(move |_| keep)
                }
                LayerRate::Row(row) => {
                    let vals = tape.value(*row).as_slice().to_vec();
                    Box::new(move |c| 1.0 - vals[c])
                }
            };
            let mut mask = Array::zeros(width, n);
            for r in 0..width {
                for c in 0..n {
                    let u: f64 = rng.gen();
                    mask.set(r, c, if u < keep_of_col(c) { 1.0 } else { 0.0 });
                }
            }
            masks.push(mask.clone());
            let mask_node = tape.leaf(mask);
            tape.mul(h, mask_node)
        }
        MaskMode::Relaxed => {
            // Concrete masks: sigmoid((logistic noise + logit(keep)) / T).
            let mut noise = Array::zeros(width, n);
            for r in 0..width {
                for c in 0..n {
                    let u: f64 = rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12);
                    noise.set(r, c, u.ln() - (1.0 - u).ln());
                }
            }
            let mask_node = match rate {
                LayerRate::Skip => unreachable!(),
                LayerRate::Constant(r) => {
                    // Rate is not trainable: compute the mask directly.
                    let lk = logit(1.0 - r);
                    let mask = noise.map(|c| sigmoid((c + lk) / temperature));
                    tape.leaf(mask)
                }
                LayerRate::Node(r) => {
                    let neg = tape.scale(r, -1.0);
                    let keep = tape.offset(neg, 1.0);
                    let ln_keep = tape.ln(keep)?;
                    let ln_rate = tape.ln(r)?;
                    let lk = tape.sub(ln_keep, ln_rate)?;
                    let noise_node = tape.leaf(noise);
                    let pre = tape.add(noise_node, lk)?;
                    let scaled = tape.scale(pre, 1.0 / temperature);
                    tape.sigmoid(scaled)
                }
                LayerRate::Row(row) => {
                    let neg = tape.scale(row, -1.0);
                    let keep_row = tape.offset(neg, 1.0);
                    let ln_keep = tape.ln(keep_row)?;
                    let ln_rate = tape.ln(row)?;
                    let lk_row = tape.sub(ln_keep, ln_rate)?;
                    let ones_col = tape.leaf(Array::filled(width, 1, 1.0));
                    let lk_mat = tape.matmul(ones_col, lk_row)?;
                    let noise_node = tape.leaf(noise);
                    let pre = tape.add(noise_node, lk_mat)?;
                    let scaled = tape.scale(pre, 1.0 / temperature);
                    tape.sigmoid(scaled)
                }
            };
            masks.push(tape.value(mask_node).clone());
            tape.mul(h, mask_node)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn toy_spec() -> MlpSpec {
        MlpSpec::new(1, vec![32, 64], 1, Task::Regression)
    }

    #[test]
    fn same_seed_gives_bit_identical_parameters() {
        let spec = toy_spec();
        let cfg = DropoutConfig::with_kind(DropoutKind::FeatureDependent);
        let a = init(&spec, &cfg, 9).unwrap();
        let b = init(&spec, &cfg, 9).unwrap();
        assert_eq!(a.flatten_trainable(), b.flatten_trainable());
    }

    #[test]
    fn weight_shapes_follow_spec() {
        let model = init(&toy_spec(), &DropoutConfig::default(), 1).unwrap();
        let shapes: Vec<_> = model
            .params
            .layers
            .iter()
            .map(|l| l.weight.shape())
            .collect();
        assert_eq!(shapes, vec![(32, 1), (64, 32), (1, 64)]);
    }

    #[test]
    fn initial_weight_sd_near_tenth() {
        let spec = MlpSpec::new(100, vec![100], 1, Task::Regression);
        let model = init(&spec, &DropoutConfig::default(), 123).unwrap();
        let w = &model.params.layers[0].weight; // 100x100 = 10,000 draws
        let n = w.len() as f64;
        let mean: f64 = w.as_slice().iter().sum::<f64>() / n;
        let var: f64 = w.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        assert!((sd - 0.1).abs() < 0.01, "sample sd {sd}");
    }

    #[test]
    fn rate_net_starts_near_initial_rate() {
        // Zero rate-net weights leave only the output bias: rate = initial.
        let spec = toy_spec();
        let cfg = DropoutConfig::with_kind(DropoutKind::FeatureDependent);
        let mut model = init(&spec, &cfg, 5).unwrap();
        if let DropoutVariant::FeatureDependent { params, .. } = &mut model.dropout.variant {
            for l in params.layers.iter_mut() {
                for v in l.weight.as_mut_slice() {
                    *v = 0.0;
                }
            }
        }
        let r = model.rate_for(&[3.0]).unwrap();
        assert!((r - 0.1).abs() < 1e-12, "rate {r}");
    }

    #[test]
    fn rate_for_zero_net_is_half() {
        let spec = toy_spec();
        let cfg = DropoutConfig::with_kind(DropoutKind::FeatureDependent);
        let mut model = init(&spec, &cfg, 5).unwrap();
        if let DropoutVariant::FeatureDependent { params, .. } = &mut model.dropout.variant {
            for l in params.layers.iter_mut() {
                for v in l.weight.as_mut_slice() {
                    *v = 0.0;
                }
                for v in l.bias.as_mut_slice() {
                    *v = 0.0;
                }
            }
        }
        let r = model.rate_for(&[7.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12, "rate {r}");
    }

    #[test]
    fn rate_for_rejects_other_policies() {
        let model = init(&toy_spec(), &DropoutConfig::default(), 1).unwrap();
        assert!(model.rate_for(&[0.0]).is_err());
    }

    #[test]
    fn rate_stays_clamped() {
        let spec = toy_spec();
        let cfg = DropoutConfig::with_kind(DropoutKind::FeatureDependent);
        let mut model = init(&spec, &cfg, 5).unwrap();
        // Force an extreme output bias; the clamp must hold.
        if let DropoutVariant::FeatureDependent { params, .. } = &mut model.dropout.variant {
            let last = params.layers.len() - 1;
            params.layers[last].bias.set(0, 0, 50.0);
        }
        let r = model.rate_for(&[0.0]).unwrap();
        assert!(r <= 1.0 - 0.01 && r >= 0.01);
    }

    #[test]
    fn deterministic_forward_ignores_rng() {
        let model = init(&toy_spec(), &DropoutConfig::with_kind(DropoutKind::FixedRate), 3).unwrap();
        let x = Array::from_vec(4, 1, vec![0.1, 0.5, -0.3, 2.0]);
        let run = |seed: u64| {
            let mut tape = Tape::new();
            let mut rng = stream(seed, 99);
            let tr = forward(&mut tape, &model, &x, MaskMode::Deterministic, &mut rng).unwrap();
            tape.value(tr.output).as_slice().to_vec()
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn sampled_masks_reproducible_under_fixed_seed() {
        let model = init(&toy_spec(), &DropoutConfig::with_kind(DropoutKind::FixedRate), 3).unwrap();
        let x = Array::from_vec(3, 1, vec![0.1, 0.5, -0.3]);
        let run = || {
            let mut tape = Tape::new();
            let mut rng = stream(7, 99);
            let tr = forward(&mut tape, &model, &x, MaskMode::Sampled, &mut rng).unwrap();
            tr.masks
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_rate_keep_fraction_near_half() {
        let spec = MlpSpec::new(1, vec![64], 1, Task::Regression);
        let model = init(&spec, &DropoutConfig::with_kind(DropoutKind::FixedRate), 3).unwrap();
        // 64 units x 200 columns per pass; a few passes give >10,000 draws.
        let x = Array::zeros(200, 1);
        let mut rng = stream(11, 99);
        let mut kept = 0usize;
        let mut total = 0usize;
        for _ in 0..4 {
            let mut tape = Tape::new();
            let tr = forward(&mut tape, &model, &x, MaskMode::Sampled, &mut rng).unwrap();
            for m in &tr.masks {
                kept += m.as_slice().iter().filter(|&&v| v == 1.0).count();
                total += m.len();
            }
        }
        let frac = kept as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.02, "keep fraction {frac}");
    }

    #[test]
    fn relaxed_near_deterministic_at_tiny_rate() {
        // Rate clamped to a small eps: relaxed masks are ~1, so the
        // stochastic pass tracks the deterministic one within 1%.
        let spec = toy_spec();
        let mut cfg = DropoutConfig::with_kind(DropoutKind::FixedRate);
        cfg.fixed_rate = 0.0; // clamps to eps
        cfg.rate_clamp = 1e-6;
        cfg.temperature = 0.1;
        let model = init(&spec, &cfg, 3).unwrap();
        let x = Array::from_vec(5, 1, vec![0.3, 1.0, -0.7, 2.0, 0.05]);

        let mut tape = Tape::new();
        let mut rng = stream(5, 99);
        let det = forward(&mut tape, &model, &x, MaskMode::Deterministic, &mut rng).unwrap();
        let det_out = tape.value(det.output).as_slice().to_vec();

        let mut tape2 = Tape::new();
        let mut rng2 = stream(5, 99);
        let rel = forward(&mut tape2, &model, &x, MaskMode::Relaxed, &mut rng2).unwrap();
        let rel_out = tape2.value(rel.output).as_slice().to_vec();

        for (d, r) in det_out.iter().zip(&rel_out) {
            let denom = d.abs().max(1e-3);
            assert!(
                ((d - r) / denom).abs() < 0.01,
                "deterministic {d} vs relaxed {r}"
            );
        }
    }

    #[test]
    fn relaxed_masks_harden_as_temperature_drops() {
        // At light rates the logistic noise rarely lands within the 0.05
        // band of the mask midpoint, so 99% of draws are near-binary.
        let spec = MlpSpec::new(2, vec![50], 1, Task::Regression);
        let mut cfg = DropoutConfig::with_kind(DropoutKind::FixedRate);
        cfg.fixed_rate = 0.1;
        cfg.temperature = 0.01;
        let model = init(&spec, &cfg, 3).unwrap();
        let x = Array::from_vec(200, 2, (0..400).map(|i| i as f64 * 0.01).collect());
        let mut tape = Tape::new();
        let mut rng = stream(13, 99);
        let tr = forward(&mut tape, &model, &x, MaskMode::Relaxed, &mut rng).unwrap();
        let mut near_binary = 0usize;
        let mut total = 0usize;
        for m in &tr.masks {
            for &v in m.as_slice() {
                if (v - v.round()).abs() < 0.05 {
                    near_binary += 1;
                }
                total += 1;
            }
        }
        let frac = near_binary as f64 / total as f64;
        assert!(frac >= 0.99, "near-binary fraction {frac}");
    }

    #[test]
    fn rate_gradients_zero_in_sampled_nonzero_in_relaxed() {
        let spec = MlpSpec::new(2, vec![8], 1, Task::Regression);
        let cfg = DropoutConfig::with_kind(DropoutKind::FeatureDependent);
        let model = init(&spec, &cfg, 21).unwrap();
        let x = Array::from_vec(6, 2, (0..12).map(|i| (i as f64) * 0.3 - 1.0).collect());

        let grad_norm = |mode: MaskMode| -> f64 {
            let mut tape = Tape::new();
            let nodes = ModelNodes::stage(&mut tape, &model);
            let xn = tape.leaf(x.transpose());
            let mut rng = stream(3, 99);
            let tr = forward_staged(&mut tape, &nodes, &model, xn, mode, &mut rng).unwrap();
            let sq = tape.square(tr.output);
            let loss = tape.mean(sq);
            let grads = tape.backward(loss).unwrap();
            let mut norm = 0.0;
            if let PolicyNodes::RateNet(rn) = &nodes.policy {
                for &(w, b) in rn {
                    norm += grads.get(w).as_slice().iter().map(|v| v * v).sum::<f64>();
                    norm += grads.get(b).as_slice().iter().map(|v| v * v).sum::<f64>();
                }
            }
            norm.sqrt()
        };

        assert_eq!(grad_norm(MaskMode::Sampled), 0.0);
        assert!(grad_norm(MaskMode::Relaxed) > 1e-8);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let model = init(&toy_spec(), &DropoutConfig::default(), 1).unwrap();
        let x = Array::from_vec(3, 2, vec![0.0; 6]); // 2 features, spec wants 1
        let mut tape = Tape::new();
        let mut rng = stream(0, 0);
        assert!(forward(&mut tape, &model, &x, MaskMode::Deterministic, &mut rng).is_err());
    }
}
