//! Evaluation metrics, rate-density estimates, the benchmark harness and
//! plot-data computation.

use crate::array::Array;
use crate::data::{build_augmented, shift_split, LabelledSet, ShiftSplitSpec, Standardizer, UnlabelledSet};
use crate::error::{Error, Result};
use crate::inference::summarize_columns;
use crate::network::{DropoutConfig, MlpModel, MlpSpec, Task};
use crate::rng::{self, tag};
use crate::training::{grid_select, train, validation_split, TrainConfig, TrainedModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// AUROC
// ---------------------------------------------------------------------------

/// Mann-Whitney AUROC with half-credit ties: the probability that a random
/// positive outranks a random negative. Ranks are averaged over groups of
/// exactly equal scores, which reproduces brute-force pair enumeration
/// exactly.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "auroc needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie group [i, j)
        let avg_rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// O(n^2) pair enumeration; the independent oracle for `auroc`.
pub fn auroc_brute_force(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument(
            "auroc needs both classes present".into(),
        ));
    }
    let mut credit = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                credit += 1.0;
            } else if p == q {
                credit += 0.5;
            }
        }
    }
    Ok(credit / (pos.len() as f64 * neg.len() as f64))
}

// ---------------------------------------------------------------------------
// Per-point detail and the report
// ---------------------------------------------------------------------------

/// One test point's predictive summary and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDetail {
    pub mean: f64,
    pub sd: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub label: f64,
    pub error: bool,
}

/// The five benchmark quantities for one method on one dataset, plus the
/// per-point detail they were computed from. Undefined cells (degenerate
/// inputs) are `None` with a note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub test_auroc: Option<f64>,
    pub error_pred_auroc: Option<f64>,
    pub ci_width: f64,
    pub misclassified_sd: Option<f64>,
    pub inpt: Option<usize>,
    pub detail: Vec<PointDetail>,
    pub notes: Vec<String>,
}

/// SD-ranks-errors AUROC; `None` when every point (or no point) is an error.
pub fn error_prediction_auroc(detail: &[PointDetail]) -> Option<f64> {
    let sds: Vec<f64> = detail.iter().map(|p| p.sd).collect();
    let errs: Vec<bool> = detail.iter().map(|p| p.error).collect();
    auroc(&sds, &errs).ok()
}

/// Mean width of the 95% predictive interval.
pub fn ci_width_mean(detail: &[PointDetail]) -> f64 {
    if detail.is_empty() {
        return 0.0;
    }
    detail
        .iter()
        .map(|p| p.interval_hi - p.interval_lo)
        .sum::<f64>()
        / detail.len() as f64
}

/// Mean predictive SD over misclassified points; `None` without any.
pub fn misclassified_sd(detail: &[PointDetail]) -> Option<f64> {
    let errs: Vec<f64> = detail.iter().filter(|p| p.error).map(|p| p.sd).collect();
    if errs.is_empty() {
        None
    } else {
        Some(errs.iter().sum::<f64>() / errs.len() as f64)
    }
}

/// Count of true-positive points denied by the point prediction
/// (mean < threshold) whose 95% interval still reaches the threshold, so
/// they are flagged for expert review. With `assume_expert_correct` the
/// count is restricted to truly positive points (the expert resolves them
/// correctly); otherwise every flagged denial is counted.
pub fn inpt(detail: &[PointDetail], risk_threshold: f64, assume_expert_correct: bool) -> usize {
    detail
        .iter()
        .filter(|p| p.mean < risk_threshold && p.interval_hi >= risk_threshold)
        .filter(|p| !assume_expert_correct || p.label > 0.5)
        .count()
}

/// Flagged-denial counts as a function of a symmetric interval width placed
/// around each mean. Monotone nondecreasing in the width.
pub fn inpt_curve(
    detail: &[PointDetail],
    risk_threshold: f64,
    widths: &[f64],
) -> Vec<(f64, usize)> {
    widths
        .iter()
        .map(|&w| {
            let count = detail
                .iter()
                .filter(|p| {
                    p.label > 0.5 && p.mean < risk_threshold && p.mean + w / 2.0 >= risk_threshold
                })
                .count();
            (w, count)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Model evaluation
// ---------------------------------------------------------------------------

/// Evaluation-time settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// MC samples per test point.
    pub m_eval: usize,
    /// Risk threshold for the treatment-referral count.
    pub risk_threshold: f64,
    /// Regression error indicator: |mean - y| above this is an error.
    pub regression_error_threshold: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            m_eval: 200,
            risk_threshold: 0.15,
            regression_error_threshold: 0.2,
            seed: 0,
        }
    }
}

/// Evaluate a trained model on raw (unstandardised) test rows.
pub fn evaluate(
    model: &TrainedModel,
    standardizer: &Standardizer,
    test: &LabelledSet,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    let features = standardizer.apply(&test.features);
    let mut rng = rng::stream(cfg.seed, tag::EVAL);
    let samples = model.predictive_samples(&features, cfg.m_eval, &mut rng)?;
    let summaries = summarize_columns(&samples)?;
    let task = model.primary().spec.task;

    let detail: Vec<PointDetail> = summaries
        .iter()
        .zip(&test.labels)
        .map(|(s, &label)| {
            let error = match task {
                Task::BinaryClassification => (s.mean >= 0.5) != (label > 0.5),
                Task::Regression => (s.mean - label).abs() > cfg.regression_error_threshold,
            };
            PointDetail {
                mean: s.mean,
                sd: s.sd,
                interval_lo: s.interval_lo,
                interval_hi: s.interval_hi,
                label,
                error,
            }
        })
        .collect();

    let mut notes = Vec::new();
    let test_auroc = match task {
        Task::BinaryClassification => {
            let scores: Vec<f64> = detail.iter().map(|p| p.mean).collect();
            let labels: Vec<bool> = detail.iter().map(|p| p.label > 0.5).collect();
            match auroc(&scores, &labels) {
                Ok(v) => Some(v),
                Err(_) => {
                    notes.push("test AUROC undefined: single-class test labels".into());
                    None
                }
            }
        }
        Task::Regression => {
            notes.push("test AUROC not defined for regression".into());
            None
        }
    };
    let error_pred = error_prediction_auroc(&detail);
    if error_pred.is_none() {
        notes.push("error-prediction AUROC undefined: all-correct or all-wrong".into());
    }
    let miscl = misclassified_sd(&detail);
    if miscl.is_none() {
        notes.push("misclassified SD undefined: no errors".into());
    }
    let inpt_count = match task {
        Task::BinaryClassification => Some(inpt(&detail, cfg.risk_threshold, true)),
        Task::Regression => None,
    };

    Ok(MetricsReport {
        test_auroc,
        error_pred_auroc: error_pred,
        ci_width: ci_width_mean(&detail),
        misclassified_sd: miscl,
        inpt: inpt_count,
        detail,
        notes,
    })
}

// ---------------------------------------------------------------------------
// Rate densities (Figure-4 style)
// ---------------------------------------------------------------------------

/// Abramowitz-Stegun 7.1.26 approximation, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Smoothed source/target dropout-rate densities over [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateDensity {
    pub grid: Vec<f64>,
    pub source_density: Vec<f64>,
    pub target_density: Vec<f64>,
    pub source_rates: Vec<f64>,
    pub target_rates: Vec<f64>,
    pub bandwidth: f64,
}

/// Silverman's rule on the pooled sample, floored so the kernel spans a few
/// grid steps.
fn silverman_bandwidth(pooled: &[f64]) -> f64 {
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    let sd = (pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = pooled.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    let iqr = crate::inference::percentile(&sorted, 75.0) - crate::inference::percentile(&sorted, 25.0);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    h.max(0.02)
}

/// Gaussian KDE with per-kernel truncation to [0, 1], so each density
/// integrates to one over the unit interval.
fn kde_unit_interval(rates: &[f64], grid: &[f64], h: f64) -> Vec<f64> {
    let n = rates.len() as f64;
    grid.iter()
        .map(|&g| {
            rates
                .iter()
                .map(|&r| {
                    let mass = normal_cdf((1.0 - r) / h) - normal_cdf(-r / h);
                    let u = (g - r) / h;
                    let kernel = (-0.5 * u * u).exp() / (h * (2.0 * std::f64::consts::PI).sqrt());
                    kernel / mass.max(1e-12)
                })
                .sum::<f64>()
                / n
        })
        .collect()
}

/// Dropout-rate densities of a feature-dependent model on standardised
/// source and target rows. 200-point grid over [0, 1].
pub fn rate_density(
    model: &MlpModel,
    source_std: &Array,
    target_std: &Array,
    bandwidth: Option<f64>,
) -> Result<RateDensity> {
    let rate_of = |features: &Array| -> Result<Vec<f64>> {
        (0..features.rows())
            .map(|r| model.rate_for(features.row_slice(r)))
            .collect()
    };
    let source_rates = rate_of(source_std)?;
    let target_rates = rate_of(target_std)?;
    if source_rates.is_empty() || target_rates.is_empty() {
        return Err(Error::Data("rate density needs rows on both sides".into()));
    }
    let mut pooled = source_rates.clone();
    pooled.extend_from_slice(&target_rates);
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(&pooled));
    let grid: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
    Ok(RateDensity {
        source_density: kde_unit_interval(&source_rates, &grid, h),
        target_density: kde_unit_interval(&target_rates, &grid, h),
        grid,
        source_rates,
        target_rates,
        bandwidth: h,
    })
}

// ---------------------------------------------------------------------------
// Prediction curves (Figure-3 style)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Predictive mean and 95% band over a raw-unit grid for 1-d input models.
pub fn prediction_curve(
    model: &TrainedModel,
    standardizer: &Standardizer,
    grid: &[f64],
    m_eval: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if model.input_dim() != 1 {
        return Err(Error::InvalidArgument(
            "prediction curves need a 1-d input model".into(),
        ));
    }
    let features = Array::from_vec(grid.len(), 1, grid.to_vec());
    let std_features = standardizer.apply(&features);
    let mut rng = rng::stream(seed, tag::EVAL);
    let samples = model.predictive_samples(&std_features, m_eval, &mut rng)?;
    let summaries = summarize_columns(&samples)?;
    Ok(grid
        .iter()
        .zip(summaries)
        .map(|(&x, s)| CurvePoint {
            x,
            mean: s.mean,
            lo: s.interval_lo,
            hi: s.interval_hi,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Grid search wiring
// ---------------------------------------------------------------------------

/// Grid-search the regulariser weight: each candidate trains on a 90% split
/// and is scored on the held-out 10% by the mean of classification AUROC
/// and error-prediction AUROC. Ties prefer the smaller weight.
pub fn grid_search_lambda(
    spec: &MlpSpec,
    dropout: &DropoutConfig,
    labelled: &LabelledSet,
    target: &UnlabelledSet,
    template: &TrainConfig,
    grid: &[f64],
    eval: &EvalConfig,
    val_fraction: f64,
) -> Result<(TrainConfig, Vec<(f64, f64)>)> {
    let (train_part, val_part) = validation_split(labelled, val_fraction, template.seed)?;
    let aug = build_augmented(&train_part, target)?;
    let (best_lambda, scores) = grid_select(grid, |lambda| {
        let mut cfg = template.clone();
        cfg.objective.lambda = lambda;
        cfg.seed = rng::derive(template.seed, tag::GRID);
        let (model, _) = train(spec, dropout, &aug, &cfg)?;
        let mut ecfg = eval.clone();
        ecfg.seed = rng::derive(cfg.seed, tag::EVAL);
        let report = evaluate(&model, &aug.standardizer, &val_part, &ecfg)?;
        let mut parts = Vec::new();
        if let Some(v) = report.test_auroc {
            parts.push(v);
        }
        if let Some(v) = report.error_pred_auroc {
            parts.push(v);
        }
        Ok(if parts.is_empty() {
            0.5
        } else {
            parts.iter().sum::<f64>() / parts.len() as f64
        })
    })?;
    let mut best = template.clone();
    best.objective.lambda = best_lambda;
    Ok((best, scores))
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

use crate::training::Method;

/// One dataset entered into the benchmark (labels already binarised).
#[derive(Debug, Clone)]
pub struct DatasetJob {
    pub name: String,
    pub data: LabelledSet,
}

/// The full benchmark request.
#[derive(Debug, Clone)]
pub struct BenchmarkPlan {
    pub methods: Vec<Method>,
    pub datasets: Vec<DatasetJob>,
    pub seeds: Vec<u64>,
    pub hidden_dims: Vec<usize>,
    pub split: ShiftSplitSpec,
    pub train: TrainConfig,
    pub dropout: DropoutConfig,
    pub eval: EvalConfig,
    /// Worker threads (0 uses all available cores).
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub test_auroc: Option<f64>,
    pub error_pred_auroc: Option<f64>,
    pub ci_width: f64,
    pub misclassified_sd: Option<f64>,
    pub inpt: Option<usize>,
}

/// Outcome of one (method, dataset, seed) cellmate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub metrics: Option<RunMetrics>,
    pub failure: Option<String>,
}

/// mean +- standard error over the seeds where the quantity was defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

fn mean_se(values: &[f64]) -> Option<MeanSe> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Some(MeanSe {
        mean,
        se,
        n: values.len(),
    })
}

/// Aggregated cell of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub dataset: String,
    pub n_runs: usize,
    pub n_failed: usize,
    pub test_auroc: Option<MeanSe>,
    pub error_pred_auroc: Option<MeanSe>,
    pub ci_width: Option<MeanSe>,
    pub misclassified_sd: Option<MeanSe>,
    pub inpt: Option<MeanSe>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub cells: Vec<CellSummary>,
    pub seeds: Vec<u64>,
}

impl BenchmarkTable {
    pub fn cell(&self, method: &str, dataset: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.dataset == dataset)
    }
}

/// Run the full matrix. Cells run in parallel; per-run seeds depend only on
/// (seed, method, dataset), so the table is reproducible regardless of
/// scheduling. Individual failures are recorded and the table is still
/// produced.
pub fn benchmark(plan: &BenchmarkPlan) -> Result<(BenchmarkTable, Vec<RunRecord>)> {
    if plan.methods.is_empty() || plan.datasets.is_empty() || plan.seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "benchmark needs methods, datasets and seeds".into(),
        ));
    }
    let mut jobs = Vec::new();
    for (di, dataset) in plan.datasets.iter().enumerate() {
        for &seed in &plan.seeds {
            for (mi, &method) in plan.methods.iter().enumerate() {
                jobs.push((di, seed, mi, method));
            }
        }
    }

    let run_one = |&(di, seed, mi, method): &(usize, u64, usize, Method)| -> RunRecord {
        let dataset = &plan.datasets[di];
        match run_cell(plan, dataset, seed, mi as u64, method) {
            Ok(metrics) => RunRecord {
                method: method.name().to_string(),
                dataset: dataset.name.clone(),
                seed,
                metrics: Some(metrics),
                failure: None,
            },
            Err(e) => RunRecord {
                method: method.name().to_string(),
                dataset: dataset.name.clone(),
                seed,
                metrics: None,
                failure: Some(e.to_string()),
            },
        }
    };

    let mut records: Vec<RunRecord> = if plan.threads == 1 {
        jobs.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run_one).collect())
    };
    records.sort_by(|a, b| {
        (&a.dataset, &a.method, a.seed).cmp(&(&b.dataset, &b.method, b.seed))
    });

    let mut cells = Vec::new();
    for dataset in &plan.datasets {
        for &method in &plan.methods {
            let runs: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.dataset == dataset.name && r.method == method.name())
                .collect();
            let metric =
                |f: &dyn Fn(&RunMetrics) -> Option<f64>| -> Option<MeanSe> {
                    let vals: Vec<f64> = runs
                        .iter()
                        .filter_map(|r| r.metrics.as_ref().and_then(f))
                        .collect();
                    mean_se(&vals)
                };
            let n_failed = runs.iter().filter(|r| r.failure.is_some()).count();
            cells.push(CellSummary {
                method: method.name().to_string(),
                dataset: dataset.name.clone(),
                n_runs: runs.len(),
                n_failed,
                test_auroc: metric(&|m| m.test_auroc),
                error_pred_auroc: metric(&|m| m.error_pred_auroc),
                ci_width: metric(&|m| Some(m.ci_width)),
                misclassified_sd: metric(&|m| m.misclassified_sd),
                inpt: metric(&|m| m.inpt.map(|v| v as f64)),
                failure: runs.iter().find_map(|r| r.failure.clone()),
            });
        }
    }

    Ok((
        BenchmarkTable {
            cells,
            seeds: plan.seeds.clone(),
        },
        records,
    ))
}

fn run_cell(
    plan: &BenchmarkPlan,
    dataset: &DatasetJob,
    seed: u64,
    method_index: u64,
    method: Method,
) -> Result<RunMetrics> {
    let split_spec = ShiftSplitSpec {
        seed,
        ..plan.split.clone()
    };
    let split = shift_split(&dataset.data, &split_spec)?;
    let target = UnlabelledSet::new(split.test.features.clone());
    let aug = build_augmented(&split.train, &target)?;

    let spec = MlpSpec::new(
        dataset.data.dim(),
        plan.hidden_dims.clone(),
        1,
        Task::BinaryClassification,
    );
    let mut dropout = plan.dropout.clone();
    dropout.kind = method.required_kind();
    let mut cfg = plan.train.clone();
    cfg.method = method;
    cfg.seed = rng::derive_indexed(seed, tag::BENCH_RUN, method_index);
    cfg.batch_labelled = cfg.batch_labelled.min(aug.n_source());
    cfg.batch_unlabelled = cfg.batch_unlabelled.min(aug.n_target().max(1));

    let (model, _report) = train(&spec, &dropout, &aug, &cfg)?;
    let mut eval_cfg = plan.eval.clone();
    eval_cfg.seed = rng::derive(cfg.seed, tag::EVAL);
    let report = evaluate(&model, &aug.standardizer, &split.test, &eval_cfg)?;
    Ok(RunMetrics {
        test_auroc: report.test_auroc,
        error_pred_auroc: report.error_pred_auroc,
        ci_width: report.ci_width,
        misclassified_sd: report.misclassified_sd,
        inpt: report.inpt,
    })
}

/// Aligned plain-text table: one row per method, Test Perf. and Error
/// Pred. columns per dataset.
pub fn render_table(table: &BenchmarkTable) -> String {
    let mut datasets: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for c in &table.cells {
        if !datasets.contains(&c.dataset) {
            datasets.push(c.dataset.clone());
        }
        if !methods.contains(&c.method) {
            methods.push(c.method.clone());
        }
    }
    let fmt = |m: &Option<MeanSe>| -> String {
        match m {
            Some(v) => format!("{:.3} ± {:.3}", v.mean, v.se),
            None => "n/a".to_string(),
        }
    };

    let method_w = methods.iter().map(|m| m.len()).max().unwrap_or(6).max(6);
    let col_w = 15usize;
    let mut out = String::new();
    out.push_str(&format!("{:method_w$}", "method"));
    for d in &datasets {
        out.push_str(&format!(" | {:^w$}", d, w = col_w * 2 + 1));
    }
    out.push('\n');
    out.push_str(&format!("{:method_w$}", ""));
    for _ in &datasets {
        out.push_str(&format!(
            " | {:^col_w$} {:^col_w$}",
            "test perf.", "error pred."
        ));
    }
    out.push('\n');
    let total_w = method_w + datasets.len() * (3 + col_w * 2 + 1);
    out.push_str(&"-".repeat(total_w));
    out.push('\n');
    for m in &methods {
        out.push_str(&format!("{:method_w$}", m));
        for d in &datasets {
            let cell = table.cell(m, d);
            let (t, e) = match cell {
                Some(c) if c.n_failed == c.n_runs => {
                    ("failed".to_string(), "failed".to_string())
                }
                Some(c) => (fmt(&c.test_auroc), fmt(&c.error_pred_auroc)),
                None => ("n/a".to_string(), "n/a".to_string()),
            };
            out.push_str(&format!(" | {:^col_w$} {:^col_w$}", t, e));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn auroc_perfect_separation() {
        let v = auroc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn auroc_all_ties_is_half() {
        let v = auroc(&[0.5, 0.5, 0.5, 0.5], &[true, false, true, false]).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn auroc_hand_case() {
        let v = auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(v, 0.75);
    }

    #[test]
    fn auroc_rejects_single_class() {
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn auroc_matches_brute_force_on_random_instances() {
        let mut rng = rng::stream(3, 90);
        for trial in 0..300 {
            let n = rng.gen_range(2..=50);
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.gen_range(0..8) as f64) / 7.0) // ties likely
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[n - 1] = false;
            let fast = auroc(&scores, &labels).unwrap();
            let slow = auroc_brute_force(&scores, &labels).unwrap();
            assert_eq!(fast, slow, "trial {trial}: {fast} vs {slow}");
        }
    }

    #[test]
    fn auroc_invariant_under_monotone_transform() {
        let mut rng = rng::stream(4, 91);
        for _ in 0..100 {
            let n = rng.gen_range(3..=30);
            let sds: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let mut errors: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            errors[0] = true;
            errors[n - 1] = false;
            let direct = auroc(&sds, &errors).unwrap();
            let mapped: Vec<f64> = sds
                .iter()
                .map(|&s| crate::inference::g_map(s * s).unwrap())
                .collect();
            let transformed = auroc(&mapped, &errors).unwrap();
            assert_eq!(direct, transformed);
        }
    }

    fn det(mean: f64, sd: f64, hi: f64, label: f64, error: bool) -> PointDetail {
        PointDetail {
            mean,
            sd,
            interval_lo: mean - (hi - mean),
            interval_hi: hi,
            label,
            error,
        }
    }

    #[test]
    fn error_prediction_auroc_cases() {
        // SDs perfectly rank errors above non-errors
        let detail = vec![
            det(0.9, 0.5, 0.9, 1.0, true),
            det(0.1, 0.4, 0.1, 0.0, true),
            det(0.9, 0.1, 0.9, 1.0, false),
            det(0.1, 0.2, 0.1, 0.0, false),
        ];
        assert_eq!(error_prediction_auroc(&detail), Some(1.0));

        // constant SD -> 0.5
        let detail = vec![
            det(0.9, 0.3, 0.9, 1.0, true),
            det(0.1, 0.3, 0.1, 0.0, false),
        ];
        assert_eq!(error_prediction_auroc(&detail), Some(0.5));

        // degenerate: all correct
        let detail = vec![det(0.9, 0.3, 0.9, 1.0, false)];
        assert_eq!(error_prediction_auroc(&detail), None);
    }

    #[test]
    fn ci_width_cases() {
        assert_eq!(ci_width_mean(&[]), 0.0);
        let detail = vec![
            PointDetail {
                mean: 0.5,
                sd: 0.0,
                interval_lo: 0.45,
                interval_hi: 0.55,
                label: 1.0,
                error: false,
            },
            PointDetail {
                mean: 0.5,
                sd: 0.0,
                interval_lo: 0.35,
                interval_hi: 0.65,
                label: 1.0,
                error: false,
            },
        ];
        assert!((ci_width_mean(&detail) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn misclassified_sd_cases() {
        let detail = vec![
            det(0.9, 0.11, 0.9, 1.0, true),
            det(0.1, 0.99, 0.1, 0.0, false),
        ];
        assert_eq!(misclassified_sd(&detail), Some(0.11));
        let detail = vec![det(0.9, 0.11, 0.9, 1.0, false)];
        assert_eq!(misclassified_sd(&detail), None);
    }

    #[test]
    fn inpt_rule_application() {
        // one true-positive denied with interval crossing the threshold
        let detail = vec![
            det(0.10, 0.1, 0.40, 1.0, true),  // counted
            det(0.10, 0.1, 0.12, 1.0, true),  // interval below threshold
            det(0.10, 0.1, 0.40, 0.0, false), // true negative, never counted
            det(0.20, 0.1, 0.60, 1.0, false), // mean above threshold
        ];
        assert_eq!(inpt(&detail, 0.15, true), 1);
        // without the expert assumption, the true negative is also flagged
        assert_eq!(inpt(&detail, 0.15, false), 2);
        // deterministic model: zero-width intervals never cross
        let detail = vec![det(0.10, 0.0, 0.10, 1.0, true)];
        assert_eq!(inpt(&detail, 0.15, true), 0);
    }

    #[test]
    fn inpt_curve_endpoints_and_monotonicity() {
        let detail = vec![
            det(0.40, 0.1, 0.40, 1.0, true),
            det(0.30, 0.1, 0.30, 1.0, true),
            det(0.45, 0.1, 0.45, 1.0, true),
            det(0.60, 0.1, 0.60, 0.0, false),
        ];
        let widths: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let curve = inpt_curve(&detail, 0.5, &widths);
        assert_eq!(curve[0].1, 0); // width 0 flags nothing
        assert_eq!(curve.last().unwrap().1, 3); // width 2 flags every denied true positive
        for w in curve.windows(2) {
            assert!(w[1].1 >= w[0].1, "curve not monotone at {:?}", w[1].0);
        }
    }

    #[test]
    fn inpt_curve_midpoint_hand_check() {
        // mean 0.4, threshold 0.5: flagged exactly when w/2 >= 0.1
        let detail = vec![det(0.40, 0.1, 0.40, 1.0, true)];
        let curve = inpt_curve(&detail, 0.5, &[0.19, 0.2, 0.21]);
        assert_eq!(curve[0].1, 0);
        assert_eq!(curve[1].1, 1);
        assert_eq!(curve[2].1, 1);
    }

    #[test]
    fn kde_constant_rates_peak_at_rate() {
        let rates = vec![0.3; 20];
        let grid: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let dens = kde_unit_interval(&rates, &grid, 0.02);
        let argmax = dens
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let peak = grid[argmax];
        assert!((peak - 0.3).abs() <= 1.0 / 199.0 + 1e-12, "peak at {peak}");
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = rng::stream(5, 92);
        let rates: Vec<f64> = (0..40).map(|_| rng.gen_range(0.05..0.95)).collect();
        let grid: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        for h in [0.02, 0.05, 0.15] {
            let dens = kde_unit_interval(&rates, &grid, h);
            let mut integral = 0.0;
            for i in 1..grid.len() {
                integral += 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]);
            }
            assert!(
                (integral - 1.0).abs() < 0.01,
                "h={h}: integral {integral}"
            );
        }
    }

    #[test]
    fn erf_reference_values() {
        // the approximation carries ~1.5e-7 absolute error
        assert!((erf(0.0)).abs() < 2e-7);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 2e-7);
        assert!((erf(-1.0) + 0.8427007929497149).abs() < 2e-7);
    }

    #[test]
    fn mean_se_deterministic_runs_have_zero_se() {
        let m = mean_se(&[0.7, 0.7, 0.7]).unwrap();
        assert!((m.mean - 0.7).abs() < 1e-15);
        assert_eq!(m.se, 0.0);
        assert!(mean_se(&[]).is_none());
    }
}
