//! Adam-based training over the augmented dataset for every model variant,
//! with full seed control: (seed, config, dataset) fixes the final
//! parameters bit for bit.

use crate::array::Array;
use crate::autodiff::Tape;
use crate::data::{AugmentedDataset, LabelledSet};
use crate::error::{Error, Result};
use crate::inference::mc_predict;
use crate::network::{
    forward, init, DropoutConfig, DropoutKind, MaskMode, MlpModel, MlpSpec, ModelNodes,
};
use crate::objective::{
    data_loss, total_objective_scaled, AugmentedBatch, LabelledBatch, ObjectiveConfig,
};
use crate::rng::{self, tag};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

/// The training methods of the benchmark roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Plain feed-forward network, no dropout.
    Mlp,
    /// Monte Carlo dropout with a fixed rate.
    McDropout,
    /// Dropout rates trained as variational parameters (one per layer).
    ConcreteDropout,
    /// K independently seeded plain MLPs.
    Ensemble,
    /// Dropout on the last hidden layer only.
    LastLayer,
    /// Transductive architecture without the variance regulariser.
    Tdnr,
    /// Feature-dependent rates trained with the variance regulariser.
    TransductiveDropout,
    /// MC dropout base model with one round of label guessing and mixup.
    MixMatch,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Mlp,
        Method::McDropout,
        Method::ConcreteDropout,
        Method::Ensemble,
        Method::LastLayer,
        Method::Tdnr,
        Method::TransductiveDropout,
        Method::MixMatch,
    ];

    /// Dropout variant each method trains with.
    pub fn required_kind(&self) -> DropoutKind {
        match self {
            Method::Mlp | Method::Ensemble => DropoutKind::None,
            Method::McDropout | Method::MixMatch => DropoutKind::FixedRate,
            Method::ConcreteDropout => DropoutKind::ConcreteLayerwise,
            Method::LastLayer => DropoutKind::LastLayerOnly,
            Method::Tdnr | Method::TransductiveDropout => DropoutKind::FeatureDependent,
        }
    }

    /// Only the transductive method trains with the regulariser.
    pub fn uses_omega(&self) -> bool {
        matches!(self, Method::TransductiveDropout)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Mlp => "mlp",
            Method::McDropout => "mc-dropout",
            Method::ConcreteDropout => "concrete-dropout",
            Method::Ensemble => "ensemble",
            Method::LastLayer => "last-layer",
            Method::Tdnr => "tdnr",
            Method::TransductiveDropout => "transductive-dropout",
            Method::MixMatch => "mixmatch",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method '{s}' (expected one of: {})",
                    Method::ALL.map(|m| m.name()).join(", ")
                ))
            })
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_labelled: usize,
    pub batch_unlabelled: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub objective: ObjectiveConfig,
    pub ensemble_k: usize,
    /// Fraction of source rows held out for the per-epoch validation curve
    /// (0 disables it).
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::TransductiveDropout,
            epochs: 500,
            batch_labelled: 32,
            batch_unlabelled: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            objective: ObjectiveConfig::default(),
            ensemble_k: 10,
            validation_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if self.batch_labelled == 0 || self.batch_unlabelled == 0 {
            return Err(Error::InvalidArgument("batch sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "learning_rate must be positive".into(),
            ));
        }
        if self.method == Method::Ensemble && self.ensemble_k == 0 {
            return Err(Error::InvalidArgument("ensemble_k must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument(
                "validation_fraction must lie in [0, 1)".into(),
            ));
        }
        self.objective.validate()
    }
}

/// Per-epoch curves and run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub data_loss: Vec<f64>,
    pub omega: Option<Vec<f64>>,
    pub val_metric: Option<Vec<f64>>,
    pub wall_time_s: f64,
    pub checkpoint: Option<String>,
}

/// Either one model or an ensemble of independently trained members.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Single(MlpModel),
    Ensemble(Vec<MlpModel>),
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Single(m) => m.spec.input_dim,
            TrainedModel::Ensemble(ms) => ms[0].spec.input_dim,
        }
    }

    pub fn primary(&self) -> &MlpModel {
        match self {
            TrainedModel::Single(m) => m,
            TrainedModel::Ensemble(ms) => &ms[0],
        }
    }

    /// Predictive samples at every row of `features` (`n x d`, already
    /// standardised). Single models draw `m_samples` hard-mask passes;
    /// ensembles return one deterministic pass per member.
    pub fn predictive_samples(
        &self,
        features: &Array,
        m_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainedModel::Single(m) => mc_predict(m, features, m_samples, rng, MaskMode::Sampled),
            TrainedModel::Ensemble(ms) => {
                let mut out = Vec::with_capacity(ms.len());
                for m in ms {
                    let mut tape = Tape::new();
                    let trace = forward(&mut tape, m, features, MaskMode::Deterministic, rng)?;
                    out.push(tape.value(trace.output).as_slice().to_vec());
                }
                Ok(out)
            }
        }
    }
}

/// Adam with bias correction. A zero gradient leaves parameters unchanged.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, dim: usize) -> Adam {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Disjoint, exhaustive, seeded split of a labelled set.
pub fn validation_split(
    set: &LabelledSet,
    fraction: f64,
    seed: u64,
) -> Result<(LabelledSet, LabelledSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(
            "validation fraction must lie in (0, 1)".into(),
        ));
    }
    let n = set.len();
    let n_val = ((n as f64) * fraction).round() as usize;
    let n_val = n_val.clamp(1, n.saturating_sub(1).max(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, tag::VALIDATION));
    let mut val_idx: Vec<usize> = order[..n_val].to_vec();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((set.select(&train_idx), set.select(&val_idx)))
}

/// Pick the grid value maximising `score_of`, ties resolved toward the
/// smallest value. Returns the winner and all (value, score) pairs.
pub fn grid_select<F>(grid: &[f64], mut score_of: F) -> Result<(f64, Vec<(f64, f64)>)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let mut best = f64::NEG_INFINITY;
    let mut best_value = sorted[0];
    let mut scores = Vec::with_capacity(sorted.len());
    for &v in &sorted {
        let s = score_of(v)?;
        scores.push((v, s));
        // strict improvement: equal scores keep the smaller value
        if s > best {
            best = s;
            best_value = v;
        }
    }
    Ok((best_value, scores))
}

struct EpochStats {
    data_sum: f64,
    omega_sum: f64,
    steps: usize,
}

/// Cycling, reshuffled iterator over target row indices.
struct TargetCycler {
    indices: Vec<usize>,
    cursor: usize,
}

impl TargetCycler {
    fn new(indices: Vec<usize>, rng: &mut ChaCha8Rng) -> TargetCycler {
        let mut indices = indices;
        indices.shuffle(rng);
        TargetCycler { indices, cursor: 0 }
    }

    fn next_batch(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            if self.cursor >= self.indices.len() {
                self.indices.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.indices[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Train one model (or an ensemble) on the augmented dataset.
///
/// The regulariser weight is forced to zero for every method except
/// `TransductiveDropout`; `Tdnr` therefore runs the identical code path as
/// a transductive model with lambda 0 and matches it bit for bit under a
/// shared seed.
pub fn train(
    spec: &MlpSpec,
    dropout: &DropoutConfig,
    data: &AugmentedDataset,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    config.validate()?;
    if dropout.kind != config.method.required_kind() {
        return Err(Error::PolicyMismatch(format!(
            "method {} requires dropout kind {:?}, got {:?}",
            config.method.name(),
            config.method.required_kind(),
            dropout.kind
        )));
    }
    let started = std::time::Instant::now();

    let result = match config.method {
        Method::Ensemble => {
            let mut members = Vec::with_capacity(config.ensemble_k);
            let mut report: Option<TrainReport> = None;
            for i in 0..config.ensemble_k {
                let mut member_cfg = config.clone();
                member_cfg.method = Method::Mlp;
                member_cfg.seed = config.seed + i as u64;
                let (model, r) = train_single(spec, dropout, data, &member_cfg)?;
                members.push(model);
                if report.is_none() {
                    report = Some(r);
                }
            }
            let mut report = report.expect("ensemble_k >= 1");
            report.omega = None;
            (TrainedModel::Ensemble(members), report)
        }
        _ => {
            let (model, report) = train_single(spec, dropout, data, config)?;
            (TrainedModel::Single(model), report)
        }
    };

    let (model, mut report) = result;
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((model, report))
}

fn train_single(
    spec: &MlpSpec,
    dropout: &DropoutConfig,
    data: &AugmentedDataset,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    let source_all = data.source_indices();
    let target_all = data.target_indices();
    if source_all.is_empty() {
        return Err(Error::Data("training needs labelled source rows".into()));
    }

    let mut objective = config.objective.clone();
    if !config.method.uses_omega() {
        objective.lambda = 0.0;
    }
    let needs_targets = objective.lambda > 0.0 || config.method == Method::MixMatch;
    if needs_targets && target_all.is_empty() {
        return Err(Error::Data(format!(
            "method {} needs unlabelled target rows",
            config.method.name()
        )));
    }

    // Hold out the validation curve rows from the training batches.
    let mut source_rows = source_all.clone();
    let mut val_rows: Vec<usize> = Vec::new();
    if config.validation_fraction > 0.0 {
        let n_val = ((source_all.len() as f64) * config.validation_fraction).round() as usize;
        let n_val = n_val.clamp(1, source_all.len() - 1);
        let mut order = source_all.clone();
        order.shuffle(&mut rng::stream(config.seed, tag::VALIDATION));
        val_rows = order[..n_val].to_vec();
        val_rows.sort_unstable();
        source_rows = order[n_val..].to_vec();
        source_rows.sort_unstable();
    }

    if config.batch_labelled > source_rows.len() {
        return Err(Error::InvalidArgument(format!(
            "batch_labelled {} exceeds the {} available source rows",
            config.batch_labelled,
            source_rows.len()
        )));
    }
    if needs_targets && config.batch_unlabelled > target_all.len() {
        return Err(Error::InvalidArgument(format!(
            "batch_unlabelled {} exceeds the {} available target rows",
            config.batch_unlabelled,
            target_all.len()
        )));
    }

    let mut model = init(spec, dropout, config.seed)?;
    let mut flat = model.flatten_trainable();
    let mut adam = Adam::new(
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
        flat.len(),
    );

    let mut train_rng = rng::stream(config.seed, tag::TRAIN);
    let mut data_curve = Vec::with_capacity(config.epochs);
    let mut omega_curve = Vec::with_capacity(config.epochs);
    let mut val_curve = Vec::with_capacity(config.epochs);
    let track_omega = objective.lambda > 0.0;

    let labels_of = |rows: &[usize]| -> Result<Vec<f64>> {
        rows.iter()
            .map(|&i| {
                data.label_of(i).ok_or_else(|| {
                    Error::Data("labelled batch drew an unlabelled row".into())
                })
            })
            .collect()
    };

    let steps_per_epoch = source_rows.len().div_ceil(config.batch_labelled);
    let mut cycler = TargetCycler::new(target_all.clone(), &mut train_rng);

    for _epoch in 0..config.epochs {
        let mut order = source_rows.clone();
        order.shuffle(&mut train_rng);
        let mut stats = EpochStats {
            data_sum: 0.0,
            omega_sum: 0.0,
            steps: 0,
        };

        for step in 0..steps_per_epoch {
            let lo = step * config.batch_labelled;
            let hi = (lo + config.batch_labelled).min(order.len());
            let src_batch: Vec<usize> = order[lo..hi].to_vec();

            let (d, om) = if config.method == Method::MixMatch {
                let tgt_batch = cycler.next_batch(config.batch_unlabelled, &mut train_rng);
                mixmatch_step(
                    &mut model,
                    &mut flat,
                    &mut adam,
                    data,
                    &src_batch,
                    &tgt_batch,
                    &objective,
                    &mut train_rng,
                    &labels_of,
                )?
            } else {
                let labelled = LabelledBatch {
                    x: data.rows(&src_batch),
                    y: labels_of(&src_batch)?,
                };
                let (aug_batch, omega_scale) = if track_omega {
                    let tgt_batch = cycler.next_batch(config.batch_unlabelled, &mut train_rng);
                    let mut rows = src_batch.clone();
                    rows.extend_from_slice(&tgt_batch);
                    let z: Vec<bool> = rows.iter().map(|&i| data.z[i]).collect();
                    let scale = data.len() as f64 / rows.len() as f64;
                    (
                        AugmentedBatch {
                            x: data.rows(&rows),
                            z,
                        },
                        scale,
                    )
                } else {
                    // Placeholder; the regulariser is skipped at lambda 0.
                    (
                        AugmentedBatch {
                            x: labelled.x.clone(),
                            z: vec![false; src_batch.len()],
                        },
                        1.0,
                    )
                };

                let mut tape = Tape::new();
                let nodes = ModelNodes::stage(&mut tape, &model);
                let parts = total_objective_scaled(
                    &mut tape,
                    &nodes,
                    &model,
                    &labelled,
                    &aug_batch,
                    &objective,
                    omega_scale,
                    &mut train_rng,
                )?;
                let grads = tape.backward(parts.total)?;
                let mut flat_grads = Vec::with_capacity(flat.len());
                for id in nodes.trainable_ids() {
                    flat_grads.extend_from_slice(grads.get(id).as_slice());
                }
                adam.step(&mut flat, &flat_grads);
                model.assign_trainable(&flat);
                (
                    tape.value(parts.data).scalar_value(),
                    parts.omega.map(|o| tape.value(o).scalar_value()),
                )
            };

            stats.data_sum += d;
            stats.omega_sum += om.unwrap_or(0.0);
            stats.steps += 1;
        }

        data_curve.push(stats.data_sum / stats.steps as f64);
        if track_omega {
            omega_curve.push(stats.omega_sum / stats.steps as f64);
        }
        if !val_rows.is_empty() {
            val_curve.push(deterministic_loss(&model, data, &val_rows, &objective)?);
        }
    }

    Ok((
        model,
        TrainReport {
            data_loss: data_curve,
            omega: if track_omega { Some(omega_curve) } else { None },
            val_metric: if val_rows.is_empty() {
                None
            } else {
                Some(val_curve)
            },
            wall_time_s: 0.0,
            checkpoint: None,
        },
    ))
}

/// Deterministic-pass data loss on a fixed set of rows.
fn deterministic_loss(
    model: &MlpModel,
    data: &AugmentedDataset,
    rows: &[usize],
    objective: &ObjectiveConfig,
) -> Result<f64> {
    let batch = LabelledBatch {
        x: data.rows(rows),
        y: rows
            .iter()
            .map(|&i| data.label_of(i).expect("validation rows are labelled"))
            .collect(),
    };
    let mut tape = Tape::new();
    let nodes = ModelNodes::stage(&mut tape, model);
    // Deterministic mode never touches the generator.
    let mut rng = rng::stream(0, tag::EVAL);
    let loss = data_loss(
        &mut tape,
        &nodes,
        model,
        &batch,
        MaskMode::Deterministic,
        &mut rng,
        objective.prob_clamp,
    )?;
    Ok(tape.value(loss).scalar_value())
}

/// One MixMatch step: guess labels on the target batch with the mean of
/// m_train hard-mask passes, mix each labelled row with a guessed row using
/// `max(u, 1-u)`, `u ~ Beta(0.75, 0.75)`, and fit the mixed batch.
#[allow(clippy::too_many_arguments)]
fn mixmatch_step(
    model: &mut MlpModel,
    flat: &mut Vec<f64>,
    adam: &mut Adam,
    data: &AugmentedDataset,
    src_batch: &[usize],
    tgt_batch: &[usize],
    objective: &ObjectiveConfig,
    rng: &mut ChaCha8Rng,
    labels_of: &impl Fn(&[usize]) -> Result<Vec<f64>>,
) -> Result<(f64, Option<f64>)> {
    let tgt_x = data.rows(tgt_batch);
    let samples = mc_predict(model, &tgt_x, objective.m_train, rng, MaskMode::Sampled)?;
    let m = samples.len() as f64;
    let guessed: Vec<f64> = (0..tgt_batch.len())
        .map(|j| samples.iter().map(|row| row[j]).sum::<f64>() / m)
        .collect();

    let beta = Beta::new(0.75, 0.75).expect("valid beta");
    let d = data.features.cols();
    let y_src = labels_of(src_batch)?;
    let mut mixed = Vec::with_capacity(src_batch.len() * d);
    let mut mixed_y = Vec::with_capacity(src_batch.len());
    for (i, &si) in src_batch.iter().enumerate() {
        let j = i % tgt_batch.len();
        let u: f64 = beta.sample(rng);
        let lm = u.max(1.0 - u);
        let srow = data.features.row_slice(si);
        let trow = tgt_x.row_slice(j);
        for c in 0..d {
            mixed.push(lm * srow[c] + (1.0 - lm) * trow[c]);
        }
        mixed_y.push(lm * y_src[i] + (1.0 - lm) * guessed[j]);
    }
    let batch = LabelledBatch {
        x: Array::from_vec(src_batch.len(), d, mixed),
        y: mixed_y,
    };

    let mut tape = Tape::new();
    let nodes = ModelNodes::stage(&mut tape, model);
    let aug = AugmentedBatch {
        x: batch.x.clone(),
        z: vec![false; src_batch.len()],
    };
    let mut cfg = objective.clone();
    cfg.lambda = 0.0;
    let parts = total_objective_scaled(&mut tape, &nodes, model, &batch, &aug, &cfg, 1.0, rng)?;
    let grads = tape.backward(parts.total)?;
    let mut flat_grads = Vec::with_capacity(flat.len());
    for id in nodes.trainable_ids() {
        flat_grads.extend_from_slice(grads.get(id).as_slice());
    }
    adam.step(flat, &flat_grads);
    model.assign_trainable(flat);
    Ok((tape.value(parts.data).scalar_value(), None))
}
