//! Model persistence: a versioned JSON container holding the architecture,
//! the dropout policy (with its trainable pieces), the flattened layer
//! parameters and, when available, the standardiser fitted at training time.

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::network::MlpModel;
use crate::training::TrainedModel;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

pub const FORMAT: &str = "transdrop-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// "single" or "ensemble".
    pub kind: String,
    pub models: Vec<MlpModel>,
    pub standardizer: Option<Standardizer>,
}

pub fn save(path: &Path, model: &TrainedModel, standardizer: Option<&Standardizer>) -> Result<()> {
    let (kind, models) = match model {
        TrainedModel::Single(m) => ("single", vec![m.clone()]),
        TrainedModel::Ensemble(ms) => ("ensemble", ms.clone()),
    };
    let checkpoint = Checkpoint {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: kind.to_string(),
        models,
        standardizer: standardizer.cloned(),
    };
    let file = File::create(path)?;
    serde_json::to_writer(BufWriter::new(file), &checkpoint)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(TrainedModel, Option<Standardizer>)> {
    let file = File::open(path)?;
    let checkpoint: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
    if checkpoint.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unexpected format '{}'",
            checkpoint.format
        )));
    }
    if checkpoint.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (expected {VERSION})",
            checkpoint.version
        )));
    }
    if checkpoint.models.is_empty() {
        return Err(Error::Checkpoint("checkpoint holds no models".into()));
    }
    for m in &checkpoint.models {
        m.spec.validate()?;
        m.dropout.validate()?;
        if !m.params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
    }
    let model = match checkpoint.kind.as_str() {
        "single" => {
            if checkpoint.models.len() != 1 {
                return Err(Error::Checkpoint(
                    "single checkpoint with multiple models".into(),
                ));
            }
            TrainedModel::Single(checkpoint.models.into_iter().next().expect("one model"))
        }
        "ensemble" => TrainedModel::Ensemble(checkpoint.models),
        other => {
            return Err(Error::Checkpoint(format!("unknown kind '{other}'")));
        }
    };
    Ok((model, checkpoint.standardizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init, DropoutConfig, DropoutKind, MlpSpec, Task};

    #[test]
    fn roundtrip_single_with_standardizer() {
        let spec = MlpSpec::new(3, vec![4, 5], 1, Task::BinaryClassification);
        let cfg = DropoutConfig::with_kind(DropoutKind::FeatureDependent);
        let model = init(&spec, &cfg, 11).unwrap();
        let std = Standardizer {
            mean: vec![1.0, -0.5, 2.0],
            sd: vec![0.1, 1.0, 3.0],
        };
        let dir = std::env::temp_dir().join("transdrop_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");

        save(&path, &TrainedModel::Single(model.clone()), Some(&std)).unwrap();
        let (loaded, loaded_std) = load(&path).unwrap();
        match loaded {
            TrainedModel::Single(m) => assert_eq!(m, model),
            _ => panic!("expected single"),
        }
        assert_eq!(loaded_std, Some(std));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn roundtrip_ensemble() {
        let spec = MlpSpec::new(2, vec![3], 1, Task::Regression);
        let members: Vec<_> = (0..3)
            .map(|i| init(&spec, &DropoutConfig::default(), i).unwrap())
            .collect();
        let dir = std::env::temp_dir().join("transdrop_ckpt_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ensemble.json");

        save(&path, &TrainedModel::Ensemble(members.clone()), None).unwrap();
        let (loaded, std) = load(&path).unwrap();
        match loaded {
            TrainedModel::Ensemble(ms) => assert_eq!(ms, members),
            _ => panic!("expected ensemble"),
        }
        assert!(std.is_none());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = std::env::temp_dir().join("transdrop_ckpt_test3");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("other.json");
        std::fs::write(&path, "{\"format\":\"something-else\"}").unwrap();
        assert!(load(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
