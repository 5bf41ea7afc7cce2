//! Data handling: the 1-d toy problem, CSV ingestion, the principal-component
//! covariate-shift split, and construction of the augmented source/target
//! dataset used by the transductive objective.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Feature matrix (`n x d`, rows are samples) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSet {
    pub features: Array,
    pub labels: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl LabelledSet {
    pub fn new(features: Array, labels: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.all_finite() || labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in labelled set".into()));
        }
        Ok(LabelledSet {
            features,
            labels,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Subset by row indices, preserving order.
    pub fn select(&self, indices: &[usize]) -> LabelledSet {
        let d = self.features.cols();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row_slice(i));
            labels.push(self.labels[i]);
        }
        LabelledSet {
            features: Array::from_vec(indices.len(), d, data),
            labels,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Features only (`m x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabelledSet {
    pub features: Array,
}

impl UnlabelledSet {
    pub fn new(features: Array) -> Self {
        UnlabelledSet { features }
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Per-feature affine transform fitted on source rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fit on the given rows (population standard deviation). Columns with
    /// zero variance keep sd = 1 so they map to a constant zero.
    pub fn fit(features: &Array, rows: &[usize]) -> Standardizer {
        let d = features.cols();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += features.get(r, c);
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut sd = vec![0.0; d];
        for &r in rows {
            for (c, s) in sd.iter_mut().enumerate() {
                let dlt = features.get(r, c) - mean[c];
                *s += dlt * dlt;
            }
        }
        for s in sd.iter_mut() {
            *s = (*s / n).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Standardizer { mean, sd }
    }

    pub fn apply(&self, features: &Array) -> Array {
        let (n, d) = features.shape();
        debug_assert_eq!(d, self.mean.len());
        let mut out = Array::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                out.set(r, c, (features.get(r, c) - self.mean[c]) / self.sd[c]);
            }
        }
        out
    }

    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, v)| (v - self.mean[c]) / self.sd[c])
            .collect()
    }
}

/// Source rows (labelled, z = 0) followed by target rows (unlabelled,
/// z = 1), standardised with statistics fitted on the source rows only.
#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    pub features: Array,
    pub labels: Vec<Option<f64>>,
    /// true marks a target row.
    pub z: Vec<bool>,
    pub standardizer: Standardizer,
    pub feature_names: Vec<String>,
}

impl AugmentedDataset {
    pub fn n_source(&self) -> usize {
        self.z.iter().filter(|&&t| !t).count()
    }

    pub fn n_target(&self) -> usize {
        self.z.iter().filter(|&&t| t).count()
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn source_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.z[i]).collect()
    }

    pub fn target_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.z[i]).collect()
    }

    /// Rows by index as an `k x d` matrix.
    pub fn rows(&self, indices: &[usize]) -> Array {
        let d = self.features.cols();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.features.row_slice(i));
        }
        Array::from_vec(indices.len(), d, data)
    }

    pub fn label_of(&self, index: usize) -> Option<f64> {
        self.labels[index]
    }
}

/// Controls the principal-component shift split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub weighting_temperature: f64,
}

impl Default for ShiftSplitSpec {
    fn default() -> Self {
        ShiftSplitSpec {
            test_fraction: 0.2,
            seed: 0,
            weighting_temperature: 1.0,
        }
    }
}

/// The toy regression target.
pub fn toy_f(x: f64) -> f64 {
    (x).sin() / 2.0 + x / 4.0 + x * x / 100.0
}

/// 1-d toy data: source x ~ Normal(7, var 4), target x ~ Normal(11, var 4),
/// y = toy_f(x) + Normal(0, noise_sd). Target labels are returned separately
/// and are for evaluation only.
pub fn gen_toy(
    seed: u64,
    n_src: usize,
    n_tgt: usize,
    noise_sd: f64,
) -> Result<(LabelledSet, UnlabelledSet, Vec<f64>)> {
    if n_src == 0 || n_tgt == 0 {
        return Err(Error::InvalidArgument(
            "toy generation needs at least one point per set".into(),
        ));
    }
    let mut rng = rng::stream(seed, tag::TOY);
    let src_x = Normal::new(7.0, 2.0).expect("valid normal");
    let tgt_x = Normal::new(11.0, 2.0).expect("valid normal");
    let noise = Normal::new(0.0, noise_sd).expect("valid normal");

    let mut xs = Vec::with_capacity(n_src);
    let mut ys = Vec::with_capacity(n_src);
    for _ in 0..n_src {
        let x = src_x.sample(&mut rng);
        xs.push(x);
        ys.push(toy_f(x) + noise.sample(&mut rng));
    }
    let mut xt = Vec::with_capacity(n_tgt);
    let mut yt = Vec::with_capacity(n_tgt);
    for _ in 0..n_tgt {
        let x = tgt_x.sample(&mut rng);
        xt.push(x);
        yt.push(toy_f(x) + noise.sample(&mut rng));
    }

    let source = LabelledSet::new(
        Array::from_vec(n_src, 1, xs),
        ys,
        vec!["x".to_string()],
    )?;
    let target = UnlabelledSet::new(Array::from_vec(n_tgt, 1, xt));
    Ok((source, target, yt))
}

/// Modal class becomes 1, everything else 0. Ties break toward the smallest
/// class identifier.
pub fn binarize_largest_class(labels: &[String]) -> Result<Vec<f64>> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_str()).or_insert(0) += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Data(
            "binarize needs at least two distinct classes".into(),
        ));
    }
    let max = counts.values().copied().max().unwrap_or(0);
    // BTreeMap iterates in ascending key order: first hit is the smallest
    // identifier among the modal classes.
    let positive = counts
        .iter()
        .find(|(_, &c)| c == max)
        .map(|(&k, _)| k.to_string())
        .expect("nonempty counts");
    Ok(labels
        .iter()
        .map(|l| if *l == positive { 1.0 } else { 0.0 })
        .collect())
}

/// First principal component of the standardised feature matrix by power
/// iteration, oriented so its first nonzero loading is positive.
fn first_principal_component(standardised: &Array) -> Result<Vec<f64>> {
    let (n, d) = standardised.shape();
    // Correlation-style covariance of the standardised columns.
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for r in 0..n {
                acc += standardised.get(r, i) * standardised.get(r, j);
            }
            let v = acc / (n as f64 - 1.0);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    if cov.iter().all(|&v| v.abs() < 1e-12) {
        return Err(Error::Data(
            "degenerate covariance: no feature varies".into(),
        ));
    }

    // Deterministic start: the covariance row with the largest norm.
    let start = (0..d)
        .max_by(|&a, &b| {
            let na: f64 = cov[a * d..(a + 1) * d].iter().map(|v| v * v).sum();
            let nb: f64 = cov[b * d..(b + 1) * d].iter().map(|v| v * v).sum();
            na.partial_cmp(&nb).expect("finite norms")
        })
        .expect("d >= 1");
    let mut v: Vec<f64> = cov[start * d..(start + 1) * d].to_vec();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }

    let mut next = vec![0.0; d];
    for _ in 0..1000 {
        for i in 0..d {
            next[i] = (0..d).map(|j| cov[i * d + j] * v[j]).sum();
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::Data("degenerate covariance in power iteration".into()));
        }
        let mut delta = 0.0f64;
        for i in 0..d {
            let nv = next[i] / norm;
            delta = delta.max((nv - v[i]).abs().min((nv + v[i]).abs()));
            v[i] = nv;
        }
        if delta < 1e-13 {
            break;
        }
    }

    // Fix the sign so the component's direction is deterministic.
    if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-9) {
        if lead < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    Ok(v)
}

/// Result of a shift split: the partition, the sampled test row indices
/// (ascending) and the per-row principal-component scores.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train: LabelledSet,
    pub test: LabelledSet,
    pub test_indices: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Partition a labelled set into train and covariate-shifted test rows.
/// Rows are standardised, scored by the first principal component, and the
/// test set is drawn without replacement with probabilities proportional to
/// `softmax(score / temperature)`.
pub fn shift_split(set: &LabelledSet, spec: &ShiftSplitSpec) -> Result<SplitOutcome> {
    let n = set.len();
    if n < 5 {
        return Err(Error::InvalidArgument(
            "shift_split needs at least 5 rows".into(),
        ));
    }
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(
            "test_fraction must lie in (0, 1)".into(),
        ));
    }
    if !(spec.weighting_temperature > 0.0) {
        return Err(Error::InvalidArgument(
            "weighting_temperature must be positive".into(),
        ));
    }

    let all_rows: Vec<usize> = (0..n).collect();
    let standardizer = Standardizer::fit(&set.features, &all_rows);
    let standardised = standardizer.apply(&set.features);
    let component = first_principal_component(&standardised)?;

    let scores: Vec<f64> = (0..n)
        .map(|r| {
            standardised
                .row_slice(r)
                .iter()
                .zip(&component)
                .map(|(x, c)| x * c)
                .sum()
        })
        .collect();

    // softmax(score / T), stabilised by the max.
    let t = spec.weighting_temperature;
    let max_s = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores.iter().map(|s| ((s - max_s) / t).exp()).collect();

    let n_test = ((n as f64) * spec.test_fraction).round() as usize;
    let n_test = n_test.clamp(1, n - 1);

    let mut rng = rng::stream(spec.seed, tag::SPLIT);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut test_indices = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = remaining.len() - 1;
        for (pos, &i) in remaining.iter().enumerate() {
            u -= weights[i];
            if u <= 0.0 {
                chosen = pos;
                break;
            }
        }
        test_indices.push(remaining.swap_remove(chosen));
    }
    test_indices.sort_unstable();
    for &i in &test_indices {
        weights[i] = 0.0; // consumed
    }
    let train_indices: Vec<usize> = (0..n).filter(|i| !test_indices.contains(i)).collect();

    Ok(SplitOutcome {
        train: set.select(&train_indices),
        test: set.select(&test_indices),
        test_indices,
        scores,
    })
}

/// Assemble the augmented dataset: source rows first (z = 0, labelled),
/// target rows appended (z = 1, labels missing). Standardisation is fitted
/// on the source rows only and applied to every row.
pub fn build_augmented(train: &LabelledSet, target: &UnlabelledSet) -> Result<AugmentedDataset> {
    if train.dim() != target.dim() {
        return Err(Error::Data(format!(
            "source has {} features, target {}",
            train.dim(),
            target.dim()
        )));
    }
    if train.is_empty() {
        return Err(Error::Data("no labelled source rows".into()));
    }
    let n = train.len();
    let m = target.len();
    let d = train.dim();
    let source_rows: Vec<usize> = (0..n).collect();
    let standardizer = Standardizer::fit(&train.features, &source_rows);

    let mut data = Vec::with_capacity((n + m) * d);
    data.extend_from_slice(standardizer.apply(&train.features).as_slice());
    data.extend_from_slice(standardizer.apply(&target.features).as_slice());

    let mut labels: Vec<Option<f64>> = train.labels.iter().map(|&y| Some(y)).collect();
    labels.extend(std::iter::repeat(None).take(m));
    let mut z = vec![false; n];
    z.extend(std::iter::repeat(true).take(m));

    Ok(AugmentedDataset {
        features: Array::from_vec(n + m, d, data),
        labels,
        z,
        standardizer,
        feature_names: train.feature_names.clone(),
    })
}

// ---------------------------------------------------------------------------
// CSV input/output
// ---------------------------------------------------------------------------

/// Raw CSV contents: numeric features plus the label column as strings.
pub struct RawCsv {
    pub features: Array,
    pub raw_labels: Vec<String>,
    pub feature_names: Vec<String>,
}

/// Read a header-first CSV, keeping the label column as raw strings.
pub fn load_csv_raw(path: &Path, label_column: &str) -> Result<RawCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read headers: {e}")))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    for (row_num, record) in reader.records().enumerate() {
        let row = row_num + 2; // 1-based, after the header line
        let record = record.map_err(|e| Error::CsvRow {
            row,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::CsvRow {
                row,
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        for (i, field) in record.iter().enumerate() {
            if i == label_idx {
                raw_labels.push(field.to_string());
            } else {
                let v: f64 = field.trim().parse().map_err(|_| Error::NonNumericColumn {
                    column: headers[i].to_string(),
                    row,
                })?;
                data.push(v);
            }
        }
    }
    let n = raw_labels.len();
    let d = feature_names.len();
    Ok(RawCsv {
        features: Array::from_vec(n, d, data),
        raw_labels,
        feature_names,
    })
}

/// Load a labelled CSV. With `positive_class` given, labels become the
/// indicator of that class; otherwise the label column must be numeric.
pub fn load_csv(
    path: &Path,
    label_column: &str,
    positive_class: Option<&str>,
) -> Result<LabelledSet> {
    let raw = load_csv_raw(path, label_column)?;
    let labels: Vec<f64> = match positive_class {
        Some(p) => raw
            .raw_labels
            .iter()
            .map(|l| if l == p { 1.0 } else { 0.0 })
            .collect(),
        None => raw
            .raw_labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.trim().parse::<f64>().map_err(|_| Error::CsvRow {
                    row: i + 2,
                    message: format!("non-numeric label '{l}'"),
                })
            })
            .collect::<Result<_>>()?,
    };
    LabelledSet::new(raw.features, labels, raw.feature_names)
}

/// Load a features-only CSV; `skip_column` drops one column (e.g. a label
/// column present in a held-out test file).
pub fn load_features_csv(path: &Path, skip_column: Option<&str>) -> Result<UnlabelledSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read headers: {e}")))?
        .clone();
    let skip_idx = match skip_column {
        Some(c) => headers.iter().position(|h| h == c),
        None => None,
    };
    let d = headers.len() - usize::from(skip_idx.is_some());
    let mut data = Vec::new();
    let mut n = 0;
    for (row_num, record) in reader.records().enumerate() {
        let row = row_num + 2;
        let record = record.map_err(|e| Error::CsvRow {
            row,
            message: e.to_string(),
        })?;
        for (i, field) in record.iter().enumerate() {
            if Some(i) == skip_idx {
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::NonNumericColumn {
                column: headers[i].to_string(),
                row,
            })?;
            data.push(v);
        }
        n += 1;
    }
    Ok(UnlabelledSet::new(Array::from_vec(n, d, data)))
}

/// Write a labelled set: feature columns then the label column.
pub fn write_labelled_csv(path: &Path, set: &LabelledSet, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = set.feature_names.iter().map(|s| s.as_str()).collect();
    header.push(label_column);
    w.write_record(&header)?;
    for r in 0..set.len() {
        let mut rec: Vec<String> = set
            .features
            .row_slice(r)
            .iter()
            .map(|v| format_float(*v))
            .collect();
        rec.push(format_float(set.labels[r]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a features-only CSV.
pub fn write_features_csv(path: &Path, features: &Array, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for r in 0..features.rows() {
        let rec: Vec<String> = features.row_slice(r).iter().map(|v| format_float(*v)).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that round-trips exactly.
pub fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_f_reference_values() {
        assert_eq!(toy_f(0.0), 0.0);
        let v = toy_f(10.0);
        assert!((v - 3.2279894445553151).abs() < 1e-12, "f(10) = {v}");
    }

    #[test]
    fn gen_toy_default_sizes_and_determinism() {
        let (src, tgt, hidden) = gen_toy(7, 50, 50, 0.1).unwrap();
        assert_eq!(src.len(), 50);
        assert_eq!(tgt.len(), 50);
        assert_eq!(hidden.len(), 50);

        let (src2, tgt2, hidden2) = gen_toy(7, 50, 50, 0.1).unwrap();
        assert_eq!(src, src2);
        assert_eq!(tgt, tgt2);
        assert_eq!(hidden, hidden2);
    }

    #[test]
    fn gen_toy_hidden_labels_track_the_curve() {
        let (_, tgt, hidden) = gen_toy(3, 10, 200, 0.1).unwrap();
        for (i, &y) in hidden.iter().enumerate() {
            let x = tgt.features.get(i, 0);
            assert!((y - toy_f(x)).abs() < 0.6, "noise too large at x={x}");
        }
        // and they are genuinely noisy
        let exact = (0..tgt.len()).all(|i| hidden[i] == toy_f(tgt.features.get(i, 0)));
        assert!(!exact);
    }

    #[test]
    fn gen_toy_rejects_empty_sets() {
        assert!(gen_toy(1, 0, 5, 0.1).is_err());
    }

    #[test]
    fn binarize_modal_class_wins() {
        let labels: Vec<String> = ["a", "a", "b"].iter().map(|s| s.to_string()).collect();
        assert_eq!(binarize_largest_class(&labels).unwrap(), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn binarize_tie_breaks_to_smallest_identifier() {
        let labels: Vec<String> = ["b", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(binarize_largest_class(&labels).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn binarize_rejects_single_class() {
        let labels: Vec<String> = ["a", "a"].iter().map(|s| s.to_string()).collect();
        assert!(binarize_largest_class(&labels).is_err());
    }

    fn synthetic_set(n: usize, seed: u64) -> LabelledSet {
        // Two correlated features plus noise, so the first component is
        // well-defined.
        let mut rng = rng::stream(seed, 77);
        let mut data = Vec::with_capacity(n * 3);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let t: f64 = rng.gen_range(-2.0..2.0);
            let e1: f64 = rng.gen_range(-0.1..0.1);
            let e2: f64 = rng.gen_range(-0.1..0.1);
            data.extend_from_slice(&[t + e1, 2.0 * t + e2, rng.gen_range(-0.5..0.5)]);
            labels.push(if t > 0.0 { 1.0 } else { 0.0 });
        }
        LabelledSet::new(
            Array::from_vec(n, 3, data),
            labels,
            vec!["f1".into(), "f2".into(), "f3".into()],
        )
        .unwrap()
    }

    #[test]
    fn shift_split_partitions_the_rows() {
        let set = synthetic_set(40, 5);
        let out = shift_split(&set, &ShiftSplitSpec::default()).unwrap();
        assert_eq!(out.train.len() + out.test.len(), set.len());
        assert_eq!(out.test.len(), 8); // 20% of 40
        // train and test together restore the multiset of labels
        let mut all: Vec<f64> = out.train.labels.clone();
        all.extend_from_slice(&out.test.labels);
        let mut orig = set.labels.clone();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        orig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, orig);
    }

    #[test]
    fn shift_split_fraction_size_contract() {
        let set = synthetic_set(150, 6);
        let out = shift_split(&set, &ShiftSplitSpec::default()).unwrap();
        assert_eq!(out.test.len(), 30);
    }

    #[test]
    fn shift_split_is_seeded() {
        let set = synthetic_set(30, 7);
        let spec = ShiftSplitSpec {
            seed: 11,
            ..Default::default()
        };
        let a = shift_split(&set, &spec).unwrap();
        let b = shift_split(&set, &spec).unwrap();
        assert_eq!(a.test_indices, b.test_indices);
    }

    #[test]
    fn shift_split_shifts_test_scores_upward() {
        let set = synthetic_set(120, 8);
        let out = shift_split(&set, &ShiftSplitSpec::default()).unwrap();
        let mean = |idx: &[usize]| -> f64 {
            idx.iter().map(|&i| out.scores[i]).sum::<f64>() / idx.len() as f64
        };
        let test_mean = mean(&out.test_indices);
        let train_idx: Vec<usize> = (0..set.len())
            .filter(|i| !out.test_indices.contains(i))
            .collect();
        let train_mean = mean(&train_idx);
        assert!(
            test_mean > train_mean,
            "test mean {test_mean} <= train mean {train_mean}"
        );
    }

    #[test]
    fn shift_split_huge_temperature_approaches_uniform() {
        // 1,000 seeded resamples of 4 of 20 rows: inclusion frequencies stay
        // within 3 binomial standard deviations of uniform.
        let set = synthetic_set(20, 9);
        let mut counts = vec![0usize; 20];
        for seed in 0..1000 {
            let spec = ShiftSplitSpec {
                test_fraction: 0.2,
                seed,
                weighting_temperature: 1e9,
            };
            let out = shift_split(&set, &spec).unwrap();
            for &i in &out.test_indices {
                counts[i] += 1;
            }
        }
        let expected = 1000.0_f64 * 0.2;
        let sd = (1000.0_f64 * 0.2 * 0.8).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sd,
                "row {i}: {c} inclusions vs expected {expected} +- {sd}"
            );
        }
    }

    #[test]
    fn shift_split_rejects_degenerate_covariance() {
        let set = LabelledSet::new(
            Array::from_vec(6, 2, vec![1.0; 12]),
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(shift_split(&set, &ShiftSplitSpec::default()).is_err());
    }

    #[test]
    fn shift_split_rejects_tiny_sets_and_bad_fractions() {
        let set = synthetic_set(4, 10);
        assert!(shift_split(&set, &ShiftSplitSpec::default()).is_err());
        let set = synthetic_set(10, 10);
        let spec = ShiftSplitSpec {
            test_fraction: 1.0,
            ..Default::default()
        };
        assert!(shift_split(&set, &spec).is_err());
    }

    #[test]
    fn build_augmented_layout_and_standardisation() {
        let train = LabelledSet::new(
            Array::from_vec(2, 2, vec![1.0, 10.0, 3.0, 30.0]),
            vec![0.0, 1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let target = UnlabelledSet::new(Array::from_vec(3, 2, vec![5.0, 50.0, 7.0, 70.0, 9.0, 90.0]));
        let aug = build_augmented(&train, &target).unwrap();

        assert_eq!(aug.len(), 5);
        assert_eq!(aug.z, vec![false, false, true, true, true]);
        for (i, l) in aug.labels.iter().enumerate() {
            assert_eq!(l.is_some(), !aug.z[i]);
        }

        // source columns: mean 0, sd 1 (population convention)
        for c in 0..2 {
            let vals: Vec<f64> = (0..2).map(|r| aug.features.get(r, c)).collect();
            let mean = (vals[0] + vals[1]) / 2.0;
            let sd = ((vals[0] - mean).powi(2) + (vals[1] - mean).powi(2)) / 2.0;
            assert!(mean.abs() < 1e-9);
            assert!((sd.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn build_augmented_rejects_dim_mismatch() {
        let train = LabelledSet::new(
            Array::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]),
            vec![0.0, 1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let target = UnlabelledSet::new(Array::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
        assert!(build_augmented(&train, &target).is_err());
    }

    #[test]
    fn standardizer_never_uses_target_rows() {
        let train = LabelledSet::new(
            Array::from_vec(2, 1, vec![0.0, 2.0]),
            vec![0.0, 1.0],
            vec!["x".into()],
        )
        .unwrap();
        let far_target = UnlabelledSet::new(Array::from_vec(1, 1, vec![1000.0]));
        let near_target = UnlabelledSet::new(Array::from_vec(1, 1, vec![1.5]));
        let a = build_augmented(&train, &far_target).unwrap();
        let b = build_augmented(&train, &near_target).unwrap();
        assert_eq!(a.standardizer, b.standardizer);
    }

    #[test]
    fn csv_roundtrip_hand_written() {
        let dir = std::env::temp_dir().join("transdrop_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.csv");
        std::fs::write(&path, "a,b,label\n1.0,2.0,0\n3.5,-1.0,1\n0.25,4.0,1\n").unwrap();

        let set = load_csv(&path, "label", None).unwrap();
        assert_eq!(set.features.shape(), (3, 2));
        assert_eq!(set.features.as_slice(), &[1.0, 2.0, 3.5, -1.0, 0.25, 4.0]);
        assert_eq!(set.labels, vec![0.0, 1.0, 1.0]);
        assert_eq!(set.feature_names, vec!["a", "b"]);

        let out = dir.join("echo.csv");
        write_labelled_csv(&out, &set, "label").unwrap();
        let echoed = load_csv(&out, "label", None).unwrap();
        assert_eq!(echoed, set);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_missing_label_column_is_named() {
        let dir = std::env::temp_dir().join("transdrop_csv_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n").unwrap();
        let err = load_csv(&path, "label", None).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_non_numeric_feature_is_located() {
        let dir = std::env::temp_dir().join("transdrop_csv_test3");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.csv");
        std::fs::write(&path, "a,b,label\n1.0,oops,0\n").unwrap();
        let err = load_csv(&path, "label", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('b') && msg.contains('2'), "{msg}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_positive_class_mapping() {
        let dir = std::env::temp_dir().join("transdrop_csv_test4");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.csv");
        std::fs::write(&path, "a,label\n1.0,cat\n2.0,dog\n3.0,cat\n").unwrap();
        let set = load_csv(&path, "label", Some("cat")).unwrap();
        assert_eq!(set.labels, vec![1.0, 0.0, 1.0]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
