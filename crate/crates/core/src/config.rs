//! Flat `key = value` run configuration with sections, documented defaults
//! and strict key checking. Command-line flags override file keys.
//!
//! ```text
//! seed = 42
//!
//! [train]
//! method = transductive-dropout
//! epochs = 500
//! ```

use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::network::{DropoutConfig, DropoutKind};
use crate::objective::ObjectiveConfig;
use crate::rng;
use crate::training::{Method, TrainConfig};
use std::path::Path;

/// Union of every command's knobs, as a flat document.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,

    pub data_source_csv: String,
    pub data_target_csv: String,
    pub data_label_column: String,
    pub data_positive_class: String,
    pub data_task: String,

    pub split_input_csv: String,
    pub split_test_fraction: f64,
    pub split_weighting_temperature: f64,

    pub model_hidden_dims: String,
    pub model_rate_net_hidden: String,

    pub dropout_temperature: f64,
    pub dropout_rate_clamp: f64,
    pub dropout_fixed_rate: f64,
    pub dropout_initial_rate: f64,

    pub objective_lambda: f64,
    pub objective_l2: f64,
    pub objective_m_train: usize,
    pub objective_prob_clamp: f64,

    pub train_method: String,
    pub train_epochs: usize,
    pub train_batch_labelled: usize,
    pub train_batch_unlabelled: usize,
    pub train_learning_rate: f64,
    pub train_adam_beta1: f64,
    pub train_adam_beta2: f64,
    pub train_adam_eps: f64,
    pub train_ensemble_k: usize,
    pub train_validation_fraction: f64,

    pub eval_m_eval: usize,
    pub eval_risk_threshold: f64,
    pub eval_regression_error_threshold: f64,

    pub toy_n_src: usize,
    pub toy_n_tgt: usize,
    pub toy_noise_sd: f64,

    pub benchmark_methods: String,
    pub benchmark_datasets: String,
    pub benchmark_seeds: usize,
    pub benchmark_base_seed: u64,
    pub benchmark_threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: ".".into(),

            data_source_csv: String::new(),
            data_target_csv: String::new(),
            data_label_column: "label".into(),
            data_positive_class: String::new(),
            data_task: "classification".into(),

            split_input_csv: String::new(),
            split_test_fraction: 0.2,
            split_weighting_temperature: 1.0,

            model_hidden_dims: "32,64".into(),
            model_rate_net_hidden: "16".into(),

            dropout_temperature: 0.1,
            dropout_rate_clamp: 0.01,
            dropout_fixed_rate: 0.5,
            dropout_initial_rate: 0.1,

            objective_lambda: 1.0,
            objective_l2: 1e-4,
            objective_m_train: 32,
            objective_prob_clamp: 1e-6,

            train_method: "transductive-dropout".into(),
            train_epochs: 500,
            train_batch_labelled: 32,
            train_batch_unlabelled: 32,
            train_learning_rate: 1e-3,
            train_adam_beta1: 0.9,
            train_adam_beta2: 0.999,
            train_adam_eps: 1e-8,
            train_ensemble_k: 10,
            train_validation_fraction: 0.0,

            eval_m_eval: 200,
            eval_risk_threshold: 0.15,
            eval_regression_error_threshold: 0.2,

            toy_n_src: 50,
            toy_n_tgt: 50,
            toy_noise_sd: 0.1,

            benchmark_methods: "mc-dropout,concrete-dropout,ensemble,mixmatch,last-layer,tdnr,transductive-dropout".into(),
            benchmark_datasets: String::new(),
            benchmark_seeds: 10,
            benchmark_base_seed: 42,
            benchmark_threads: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
}

impl RunConfig {
    /// Set one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "out_dir" => self.out_dir = v.to_string(),

            "data.source_csv" => self.data_source_csv = v.to_string(),
            "data.target_csv" => self.data_target_csv = v.to_string(),
            "data.label_column" => self.data_label_column = v.to_string(),
            "data.positive_class" => self.data_positive_class = v.to_string(),
            "data.task" => {
                if v != "classification" && v != "regression" {
                    return Err(Error::Config(format!(
                        "data.task must be 'classification' or 'regression', got '{v}'"
                    )));
                }
                self.data_task = v.to_string();
            }

            "split.input_csv" => self.split_input_csv = v.to_string(),
            "split.test_fraction" => self.split_test_fraction = parse_num(key, v)?,
            "split.weighting_temperature" => {
                self.split_weighting_temperature = parse_num(key, v)?
            }

            "model.hidden_dims" => self.model_hidden_dims = v.to_string(),
            "model.rate_net_hidden" => self.model_rate_net_hidden = v.to_string(),

            "dropout.temperature" => self.dropout_temperature = parse_num(key, v)?,
            "dropout.rate_clamp" => self.dropout_rate_clamp = parse_num(key, v)?,
            "dropout.fixed_rate" => self.dropout_fixed_rate = parse_num(key, v)?,
            "dropout.initial_rate" => self.dropout_initial_rate = parse_num(key, v)?,

            "objective.lambda" => self.objective_lambda = parse_num(key, v)?,
            "objective.l2" => self.objective_l2 = parse_num(key, v)?,
            "objective.m_train" => self.objective_m_train = parse_num(key, v)?,
            "objective.prob_clamp" => self.objective_prob_clamp = parse_num(key, v)?,

            "train.method" => {
                Method::parse(v)?;
                self.train_method = v.to_string();
            }
            "train.epochs" => self.train_epochs = parse_num(key, v)?,
            "train.batch_labelled" => self.train_batch_labelled = parse_num(key, v)?,
            "train.batch_unlabelled" => self.train_batch_unlabelled = parse_num(key, v)?,
            "train.learning_rate" => self.train_learning_rate = parse_num(key, v)?,
            "train.adam_beta1" => self.train_adam_beta1 = parse_num(key, v)?,
            "train.adam_beta2" => self.train_adam_beta2 = parse_num(key, v)?,
            "train.adam_eps" => self.train_adam_eps = parse_num(key, v)?,
            "train.ensemble_k" => self.train_ensemble_k = parse_num(key, v)?,
            "train.validation_fraction" => {
                self.train_validation_fraction = parse_num(key, v)?
            }

            "eval.m_eval" => self.eval_m_eval = parse_num(key, v)?,
            "eval.risk_threshold" => self.eval_risk_threshold = parse_num(key, v)?,
            "eval.regression_error_threshold" => {
                self.eval_regression_error_threshold = parse_num(key, v)?
            }

            "toy.n_src" => self.toy_n_src = parse_num(key, v)?,
            "toy.n_tgt" => self.toy_n_tgt = parse_num(key, v)?,
            "toy.noise_sd" => self.toy_noise_sd = parse_num(key, v)?,

            "benchmark.methods" => self.benchmark_methods = v.to_string(),
            "benchmark.datasets" => self.benchmark_datasets = v.to_string(),
            "benchmark.seeds" => self.benchmark_seeds = parse_num(key, v)?,
            "benchmark.base_seed" => self.benchmark_base_seed = parse_num(key, v)?,
            "benchmark.threads" => self.benchmark_threads = parse_num(key, v)?,

            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parse a config document: `#` comments, `[section]` headers prefixing
    /// the keys that follow, `key = value` lines.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            self.set(&full, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Apply `key=value` override pairs (command-line `--set`).
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for pair in pairs {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("override '{pair}': expected key=value"))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Every key with its current value, in document order. Used for
    /// manifests.
    pub fn entries(&self) -> Vec<(String, String)> {
        let f = |v: f64| crate::data::format_float(v);
        vec![
            ("seed".into(), self.seed.to_string()),
            ("out_dir".into(), self.out_dir.clone()),
            ("data.source_csv".into(), self.data_source_csv.clone()),
            ("data.target_csv".into(), self.data_target_csv.clone()),
            ("data.label_column".into(), self.data_label_column.clone()),
            ("data.positive_class".into(), self.data_positive_class.clone()),
            ("data.task".into(), self.data_task.clone()),
            ("split.input_csv".into(), self.split_input_csv.clone()),
            ("split.test_fraction".into(), f(self.split_test_fraction)),
            (
                "split.weighting_temperature".into(),
                f(self.split_weighting_temperature),
            ),
            ("model.hidden_dims".into(), self.model_hidden_dims.clone()),
            (
                "model.rate_net_hidden".into(),
                self.model_rate_net_hidden.clone(),
            ),
            ("dropout.temperature".into(), f(self.dropout_temperature)),
            ("dropout.rate_clamp".into(), f(self.dropout_rate_clamp)),
            ("dropout.fixed_rate".into(), f(self.dropout_fixed_rate)),
            ("dropout.initial_rate".into(), f(self.dropout_initial_rate)),
            ("objective.lambda".into(), f(self.objective_lambda)),
            ("objective.l2".into(), f(self.objective_l2)),
            ("objective.m_train".into(), self.objective_m_train.to_string()),
            ("objective.prob_clamp".into(), f(self.objective_prob_clamp)),
            ("train.method".into(), self.train_method.clone()),
            ("train.epochs".into(), self.train_epochs.to_string()),
            (
                "train.batch_labelled".into(),
                self.train_batch_labelled.to_string(),
            ),
            (
                "train.batch_unlabelled".into(),
                self.train_batch_unlabelled.to_string(),
            ),
            ("train.learning_rate".into(), f(self.train_learning_rate)),
            ("train.adam_beta1".into(), f(self.train_adam_beta1)),
            ("train.adam_beta2".into(), f(self.train_adam_beta2)),
            ("train.adam_eps".into(), f(self.train_adam_eps)),
            ("train.ensemble_k".into(), self.train_ensemble_k.to_string()),
            (
                "train.validation_fraction".into(),
                f(self.train_validation_fraction),
            ),
            ("eval.m_eval".into(), self.eval_m_eval.to_string()),
            ("eval.risk_threshold".into(), f(self.eval_risk_threshold)),
            (
                "eval.regression_error_threshold".into(),
                f(self.eval_regression_error_threshold),
            ),
            ("toy.n_src".into(), self.toy_n_src.to_string()),
            ("toy.n_tgt".into(), self.toy_n_tgt.to_string()),
            ("toy.noise_sd".into(), f(self.toy_noise_sd)),
            ("benchmark.methods".into(), self.benchmark_methods.clone()),
            ("benchmark.datasets".into(), self.benchmark_datasets.clone()),
            ("benchmark.seeds".into(), self.benchmark_seeds.to_string()),
            (
                "benchmark.base_seed".into(),
                self.benchmark_base_seed.to_string(),
            ),
            ("benchmark.threads".into(), self.benchmark_threads.to_string()),
        ]
    }

    pub fn parse_dims(text: &str) -> Result<Vec<usize>> {
        let dims: Vec<usize> = text
            .split(',')
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::Config(format!("bad layer width '{p}'")))
            })
            .collect::<Result<_>>()?;
        if dims.is_empty() {
            return Err(Error::Config("empty layer list".into()));
        }
        Ok(dims)
    }

    pub fn hidden_dims(&self) -> Result<Vec<usize>> {
        Self::parse_dims(&self.model_hidden_dims)
    }

    pub fn method(&self) -> Result<Method> {
        Method::parse(&self.train_method)
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            lambda: self.objective_lambda,
            l2: self.objective_l2,
            m_train: self.objective_m_train,
            prob_clamp: self.objective_prob_clamp,
        }
    }

    pub fn dropout(&self, kind: DropoutKind) -> Result<DropoutConfig> {
        Ok(DropoutConfig {
            kind,
            temperature: self.dropout_temperature,
            rate_clamp: self.dropout_rate_clamp,
            fixed_rate: self.dropout_fixed_rate,
            initial_rate: self.dropout_initial_rate,
            rate_net_hidden: Self::parse_dims(&self.model_rate_net_hidden)?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            method: self.method()?,
            epochs: self.train_epochs,
            batch_labelled: self.train_batch_labelled,
            batch_unlabelled: self.train_batch_unlabelled,
            learning_rate: self.train_learning_rate,
            adam_beta1: self.train_adam_beta1,
            adam_beta2: self.train_adam_beta2,
            adam_eps: self.train_adam_eps,
            seed: self.seed,
            objective: self.objective(),
            ensemble_k: self.train_ensemble_k,
            validation_fraction: self.train_validation_fraction,
        })
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            m_eval: self.eval_m_eval,
            risk_threshold: self.eval_risk_threshold,
            regression_error_threshold: self.eval_regression_error_threshold,
            seed: rng::derive(self.seed, rng::tag::EVAL),
        }
    }

    pub fn benchmark_method_list(&self) -> Result<Vec<Method>> {
        self.benchmark_methods
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(Method::parse)
            .collect()
    }

    /// Parse "name=path;name=path" dataset descriptors.
    pub fn benchmark_dataset_list(&self) -> Result<Vec<(String, String)>> {
        if self.benchmark_datasets.trim().is_empty() {
            return Err(Error::Config(
                "benchmark.datasets is empty (expected name=path;name=path)".into(),
            ));
        }
        self.benchmark_datasets
            .split(';')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|pair| {
                pair.split_once('=')
                    .map(|(n, p)| (n.trim().to_string(), p.trim().to_string()))
                    .ok_or_else(|| {
                        Error::Config(format!("bad dataset descriptor '{pair}'"))
                    })
            })
            .collect()
    }
}
