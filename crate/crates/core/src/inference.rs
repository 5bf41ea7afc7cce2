//! Monte Carlo predictive sampling and the variance-to-confidence map
//! `z = g(V[predictive])` with `g(x) = 1 - 1/(1+x)`.

use crate::array::Array;
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::network::{forward, MaskMode, MlpModel};
use serde::{Deserialize, Serialize};

/// Sample statistics of a predictive distribution at one input point.
/// Variance uses the population (1/M) convention; the interval is the
/// central 95% empirical percentile band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub variance: f64,
    pub sd: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub m_samples: usize,
}

/// Empirical percentile with linear interpolation between closest ranks.
/// `q` in [0, 100]; `sorted` ascending.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Summarise M predictive samples.
pub fn summarize(samples: &[f64]) -> Result<PredictiveSummary> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(
            "summarize needs at least 2 samples (variance undefined)".into(),
        ));
    }
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let variance = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / m;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    Ok(PredictiveSummary {
        mean,
        variance,
        sd: variance.sqrt(),
        interval_lo: percentile(&sorted, 2.5),
        interval_hi: percentile(&sorted, 97.5),
        m_samples: samples.len(),
    })
}

/// `g(x) = 1 - 1/(1+x)`: monotone map from variance to [0, 1).
pub fn g_map(variance: f64) -> Result<f64> {
    if variance < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "g_map expects a nonnegative variance, got {variance}"
        )));
    }
    Ok(1.0 - 1.0 / (1.0 + variance))
}

/// M stochastic forward passes over a batch. `features` is `n x d`; the
/// result holds M rows of n per-point outputs (probabilities for
/// classification heads).
pub fn mc_predict(
    model: &MlpModel,
    features: &Array,
    m_samples: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
    mode: MaskMode,
) -> Result<Vec<Vec<f64>>> {
    if m_samples < 2 {
        return Err(Error::InvalidArgument(
            "mc_predict needs M >= 2 (variance undefined)".into(),
        ));
    }
    let mut out = Vec::with_capacity(m_samples);
    for _ in 0..m_samples {
        let mut tape = Tape::new();
        let trace = forward(&mut tape, model, features, mode, rng)?;
        let val = tape.value(trace.output);
        if val.rows() != 1 {
            return Err(Error::InvalidArgument(
                "mc_predict expects a scalar-output model".into(),
            ));
        }
        out.push(val.as_slice().to_vec());
    }
    Ok(out)
}

/// Per-point summaries across the M samples of `mc_predict`.
pub fn summarize_columns(samples: &[Vec<f64>]) -> Result<Vec<PredictiveSummary>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let n = samples[0].len();
    let mut col = vec![0.0; samples.len()];
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        for (m, row) in samples.iter().enumerate() {
            col[m] = row[j];
        }
        out.push(summarize(&col)?);
    }
    Ok(out)
}

/// Evaluation-time source/target score for one point: the g-mapped
/// predictive variance of M sampled-mask passes. The differentiable
/// counterpart used in training lives in the objective module.
pub fn z_hat(
    model: &MlpModel,
    point: &[f64],
    m_samples: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    let features = Array::from_vec(1, point.len(), point.to_vec());
    let samples = mc_predict(model, &features, m_samples, rng, MaskMode::Sampled)?;
    let flat: Vec<f64> = samples.iter().map(|row| row[0]).collect();
    g_map(summarize(&flat)?.variance)
}
