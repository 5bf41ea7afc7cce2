//! Data-fit losses, the transductive regulariser over the augmented batch,
//! and the total training objective.
//!
//! Everything here is tape-resident so one backward pass yields gradients
//! for the network weights and the dropout-rate parameters alike.

use crate::array::Array;
use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::network::{forward_staged, MaskMode, MlpModel, ModelNodes, Task};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Weights and sampling budget of the training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Weight of the transductive regulariser.
    pub lambda: f64,
    /// Weight-decay coefficient over all trainable parameters.
    pub l2: f64,
    /// MC samples per regulariser evaluation.
    pub m_train: usize,
    /// Clamp for probabilities entering logs.
    pub prob_clamp: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            lambda: 1.0,
            l2: 1e-4,
            m_train: 32,
            prob_clamp: 1e-6,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.l2 < 0.0 {
            return Err(Error::InvalidArgument(
                "lambda and l2 must be nonnegative".into(),
            ));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp <= 0.01) {
            return Err(Error::InvalidArgument(
                "prob_clamp must lie in (0, 0.01]".into(),
            ));
        }
        if self.m_train < 2 {
            return Err(Error::InvalidArgument(
                "m_train must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// A batch with labels. `x` is `n x d` (rows are samples).
#[derive(Debug, Clone)]
pub struct LabelledBatch {
    pub x: Array,
    pub y: Vec<f64>,
}

/// A mixed source/target batch. `z[i]` is true for target rows.
#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    pub x: Array,
    pub z: Vec<bool>,
}

/// Mean data-fit loss over one stochastic forward pass: squared error for
/// regression, binary cross-entropy on clamped probabilities otherwise.
pub fn data_loss(
    tape: &mut Tape,
    nodes: &ModelNodes,
    model: &MlpModel,
    batch: &LabelledBatch,
    mode: MaskMode,
    rng: &mut ChaCha8Rng,
    prob_clamp: f64,
) -> Result<NodeId> {
    if batch.x.rows() == 0 {
        return Err(Error::InvalidArgument("empty labelled batch".into()));
    }
    if batch.y.len() != batch.x.rows() {
        return Err(Error::InvalidArgument(format!(
            "batch has {} rows but {} labels",
            batch.x.rows(),
            batch.y.len()
        )));
    }
    if batch.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "labelled batch contains missing labels".into(),
        ));
    }
    let x = tape.leaf(batch.x.transpose());
    let trace = forward_staged(tape, nodes, model, x, mode, rng)?;
    let y_row = tape.leaf(Array::row(&batch.y));
    match model.spec.task {
        Task::Regression => {
            let d = tape.sub(trace.output, y_row)?;
            let sq = tape.square(d);
            Ok(tape.mean(sq))
        }
        Task::BinaryClassification => {
            let p = tape.clamp(trace.output, prob_clamp, 1.0 - prob_clamp);
            let ln_p = tape.ln(p)?;
            let neg_p = tape.scale(p, -1.0);
            let one_minus_p = tape.offset(neg_p, 1.0);
            let ln_q = tape.ln(one_minus_p)?;
            let one_minus_y = tape.leaf(Array::row(
                &batch.y.iter().map(|v| 1.0 - v).collect::<Vec<_>>(),
            ));
            let pos = tape.mul(y_row, ln_p)?;
            let neg = tape.mul(one_minus_y, ln_q)?;
            let ll = tape.add(pos, neg)?;
            let mean_ll = tape.mean(ll);
            Ok(tape.scale(mean_ll, -1.0))
        }
    }
}

/// Differentiable per-point source/target score for a batch already on the
/// tape: M relaxed-mask passes, population variance, `g`, then a hard clamp
/// to `[prob_clamp, 1 - prob_clamp]`. Returns a `1 x n` node.
pub fn zhat_row(
    tape: &mut Tape,
    nodes: &ModelNodes,
    model: &MlpModel,
    x: NodeId,
    m_train: usize,
    rng: &mut ChaCha8Rng,
    prob_clamp: f64,
) -> Result<NodeId> {
    if m_train < 2 {
        return Err(Error::InvalidArgument(
            "m_train must be at least 2 (variance undefined)".into(),
        ));
    }
    let mut passes = Vec::with_capacity(m_train);
    for _ in 0..m_train {
        let trace = forward_staged(tape, nodes, model, x, MaskMode::Relaxed, rng)?;
        passes.push(trace.output);
    }
    let mut acc = passes[0];
    for &p in &passes[1..] {
        acc = tape.add(acc, p)?;
    }
    let mean = tape.scale(acc, 1.0 / m_train as f64);
    let mut var_acc: Option<NodeId> = None;
    for &p in &passes {
        let d = tape.sub(p, mean)?;
        let sq = tape.square(d);
        var_acc = Some(match var_acc {
            None => sq,
            Some(a) => tape.add(a, sq)?,
        });
    }
    let variance = tape.scale(var_acc.expect("m_train >= 2"), 1.0 / m_train as f64);
    // g(v) = 1 - 1/(1+v), with 1/(1+v) computed as exp(-ln(1+v)).
    let one_plus = tape.offset(variance, 1.0);
    let ln1p = tape.ln(one_plus)?;
    let neg = tape.scale(ln1p, -1.0);
    let inv = tape.exp(neg);
    let neg_inv = tape.scale(inv, -1.0);
    let z_raw = tape.offset(neg_inv, 1.0);
    Ok(tape.clamp(z_raw, prob_clamp, 1.0 - prob_clamp))
}

/// Cross-entropy between a clamped score row and the source/target flags:
/// `-(sum_source ln(1 - z) + sum_target ln(z))`. Either side may be empty,
/// in which case the remaining partial sum is returned.
pub fn omega_from_zrow(
    tape: &mut Tape,
    zrow: NodeId,
    flags: &[bool],
) -> Result<NodeId> {
    let n = tape.value(zrow).cols();
    if flags.len() != n {
        return Err(Error::InvalidArgument(format!(
            "zrow has {n} points but {} flags",
            flags.len()
        )));
    }
    let ln_z = tape.ln(zrow)?;
    let neg_z = tape.scale(zrow, -1.0);
    let one_minus_z = tape.offset(neg_z, 1.0);
    let ln_1mz = tape.ln(one_minus_z)?;
    let src_sel = tape.leaf(Array::row(
        &flags.iter().map(|&t| if t { 0.0 } else { 1.0 }).collect::<Vec<_>>(),
    ));
    let tgt_sel = tape.leaf(Array::row(
        &flags.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
    ));
    let src_terms = tape.mul(src_sel, ln_1mz)?;
    let tgt_terms = tape.mul(tgt_sel, ln_z)?;
    let s_src = tape.sum(src_terms);
    let s_tgt = tape.sum(tgt_terms);
    let total = tape.add(s_src, s_tgt)?;
    Ok(tape.scale(total, -1.0))
}

/// The transductive regulariser over a mixed batch: the variance-derived
/// scores are driven toward the source/target flags.
pub fn transductive_omega(
    tape: &mut Tape,
    nodes: &ModelNodes,
    model: &MlpModel,
    batch: &AugmentedBatch,
    m_train: usize,
    rng: &mut ChaCha8Rng,
    prob_clamp: f64,
) -> Result<NodeId> {
    if batch.x.rows() == 0 {
        return Err(Error::InvalidArgument("empty augmented batch".into()));
    }
    if batch.z.len() != batch.x.rows() {
        return Err(Error::InvalidArgument(
            "flag count does not match batch rows".into(),
        ));
    }
    let x = tape.leaf(batch.x.transpose());
    let z = zhat_row(tape, nodes, model, x, m_train, rng, prob_clamp)?;
    omega_from_zrow(tape, z, &batch.z)
}

/// Sum of squares of every trainable parameter node.
pub fn l2_penalty(tape: &mut Tape, nodes: &ModelNodes) -> Result<NodeId> {
    let ids = nodes.trainable_ids();
    let mut acc: Option<NodeId> = None;
    for id in ids {
        let sq = tape.square(id);
        let s = tape.sum(sq);
        acc = Some(match acc {
            None => s,
            Some(a) => tape.add(a, s)?,
        });
    }
    acc.ok_or_else(|| Error::InvalidArgument("model has no parameters".into()))
}

/// Handles to the assembled objective.
pub struct ObjectiveParts {
    pub total: NodeId,
    pub data: NodeId,
    pub omega: Option<NodeId>,
}

/// `data_loss + lambda * omega + l2 * ||params||^2`.
///
/// Consumes randomness in a fixed order: the data pass first, then the
/// regulariser passes. With `lambda == 0` the regulariser is skipped
/// entirely, so runs differing only in a zero lambda draw identical masks.
pub fn total_objective(
    tape: &mut Tape,
    nodes: &ModelNodes,
    model: &MlpModel,
    labelled: &LabelledBatch,
    augmented: &AugmentedBatch,
    config: &ObjectiveConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ObjectiveParts> {
    total_objective_scaled(tape, nodes, model, labelled, augmented, config, 1.0, rng)
}

/// As [`total_objective`], with the regulariser multiplied by
/// `omega_scale` (the training loop passes `|D~| / batch` so each step
/// estimates the full-dataset regulariser).
#[allow(clippy::too_many_arguments)]
pub fn total_objective_scaled(
    tape: &mut Tape,
    nodes: &ModelNodes,
    model: &MlpModel,
    labelled: &LabelledBatch,
    augmented: &AugmentedBatch,
    config: &ObjectiveConfig,
    omega_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ObjectiveParts> {
    config.validate()?;
    let data = data_loss(
        tape,
        nodes,
        model,
        labelled,
        MaskMode::Relaxed,
        rng,
        config.prob_clamp,
    )?;
    let mut total = data;
    let mut omega = None;
    if config.lambda > 0.0 {
        let om = transductive_omega(
            tape,
            nodes,
            model,
            augmented,
            config.m_train,
            rng,
            config.prob_clamp,
        )?;
        let weighted = tape.scale(om, config.lambda * omega_scale);
        total = tape.add(total, weighted)?;
        omega = Some(om);
    }
    if config.l2 > 0.0 {
        let pen = l2_penalty(tape, nodes)?;
        let weighted = tape.scale(pen, config.l2);
        total = tape.add(total, weighted)?;
    }
    Ok(ObjectiveParts { total, data, omega })
}
