//! Run configuration documents and the built-in presets.
//!
//! A config argument is either a path to a JSON document or the name of a
//! preset. File data paths are resolved against the document's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusBundle;
use crate::error::{Error, Result};
use crate::experiment::{LoopConfig, OracleSpec};
use crate::learner::StepsPerEpoch;
use crate::oracle::{NoiseModel, OracleKind};
use crate::policy::{BudgetSchedule, StrategyKind};
use crate::pools::{read_dataset, InstanceRecord};
use crate::synth::{generate_synthetic, GenConfig};

pub const OUTPUT_DIR_ENV: &str = "AQUA_OUTPUT_DIR";

pub const PRESETS: &[&str] = &["standard", "ratios", "scanqa-sim", "vista-sim", "remote-demo"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Generate(GenConfig),
    Files {
        corpus: PathBuf,
        rules: PathBuf,
        dataset: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDocument {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataSource,
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Loaded corpus and instances ready for a run.
pub struct RunData {
    pub bundle: CorpusBundle,
    pub records: Vec<InstanceRecord>,
}

impl RunConfigDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RunConfigDocument = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    /// Reads a file, or falls back to a preset when no such file exists.
    pub fn load(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if !path.exists() {
            if let Some(doc) = preset(arg) {
                return Ok(doc);
            }
            return Err(Error::Config(format!(
                "{arg}: no such file and not a preset (known: {})",
                PRESETS.join(", ")
            )));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut doc = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DataSource::Files { corpus, rules, dataset } = &mut doc.data {
            for p in [corpus, rules, dataset] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Generate(gen) = &self.data {
            gen.validate()?;
        }
        self.loop_config.validate()
    }

    /// Replaces the master seed; a generated dataset follows it unless its
    /// own seed was pinned.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.master_seed = s;
            if let DataSource::Generate(gen) = &mut self.data {
                gen.seed = None;
            }
        }
        self
    }

    /// `AQUA_OUTPUT_DIR` wins over the document's `output_dir`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Loop config with the master seed applied.
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            master_seed: self.master_seed,
            ..self.loop_config.clone()
        }
    }

    pub fn gen_config(&self) -> Option<GenConfig> {
        match &self.data {
            DataSource::Generate(gen) => Some(GenConfig {
                seed: Some(gen.seed.unwrap_or(self.master_seed)),
                ..gen.clone()
            }),
            DataSource::Files { .. } => None,
        }
    }

    pub fn load_data(&self) -> Result<RunData> {
        match &self.data {
            DataSource::Generate(_) => {
                let gen = self.gen_config().expect("generated source");
                let data = generate_synthetic(&gen)?;
                Ok(RunData {
                    bundle: data.bundle,
                    records: data.records,
                })
            }
            DataSource::Files { corpus, rules, dataset } => Ok(RunData {
                bundle: CorpusBundle::load(corpus, rules)?,
                records: read_dataset(dataset)?,
            }),
        }
    }

    /// The document with fields that may differ between compared runs blanked.
    pub fn comparison_key(&self) -> serde_json::Value {
        let mut doc = self.clone();
        doc.name = None;
        doc.output_dir = PathBuf::new();
        doc.loop_config.strategy = StrategyKind::Random;
        doc.loop_config.oracle = OracleSpec::default();
        serde_json::to_value(&doc).expect("config serializes")
    }

    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!(
                "{}-{}",
                self.loop_config.strategy.as_str(),
                self.loop_config.oracle.kind.as_str()
            ),
        }
    }
}

fn standard_data() -> GenConfig {
    GenConfig {
        num_instances: 2000,
        num_terms: 20,
        embedding_dim: 8,
        feature_dim: 16,
        spread: 1.3,
        prototype_scale: 1.0,
        class_skew: 1.0,
        noise: NoiseModel::with_rates(0.05, 0.10, 0.05),
        ..GenConfig::default()
    }
}

fn standard_loop() -> LoopConfig {
    let mut cfg = LoopConfig {
        num_epochs: 50,
        reannotation_epochs: (1..10).map(|i| 5 * i).collect(),
        strategy: StrategyKind::WeightedVariance,
        schedule: BudgetSchedule::Fixed {
            initial_batch: 20,
            per_round: 50,
        },
        score_thresholds: vec![40.0, 50.0, 60.0, 70.0],
        ..LoopConfig::default()
    };
    cfg.train.learning_rate = 0.1;
    cfg.train.batch_size = 16;
    cfg.train.steps_per_epoch = StepsPerEpoch::Steps(400);
    cfg.train.l2 = 0.003;
    cfg
}

/// Built-in configurations, all on generated data.
///
/// * `standard`: weighted-variance selection with hierarchical reannotation.
/// * `ratios`: heavier non-canonical and irrelevant noise, for outcome ratios.
/// * `scanqa-sim`: the ScanQA-style budget schedule, scaled to the pool.
/// * `vista-sim`: the 3D-VisTA-style schedule on a pool large enough to run it
///   unscaled.
/// * `remote-demo`: a small run that waits for a human through the HTTP API.
pub fn preset(name: &str) -> Option<RunConfigDocument> {
    let doc = |name: &str, data: GenConfig, loop_config: LoopConfig| RunConfigDocument {
        name: Some(name.to_string()),
        master_seed: 0,
        output_dir: PathBuf::from("out").join(name),
        data: DataSource::Generate(data),
        loop_config,
    };
    Some(match name {
        "standard" => doc(name, standard_data(), standard_loop()),
        "ratios" => doc(
            name,
            GenConfig {
                noise: NoiseModel::with_rates(0.0, 0.3, 0.1),
                ..standard_data()
            },
            standard_loop(),
        ),
        "scanqa-sim" => doc(
            name,
            standard_data(),
            LoopConfig {
                num_epochs: 30,
                reannotation_epochs: vec![5, 10, 15, 20, 25],
                schedule: BudgetSchedule::Scanqa {
                    initial_batch: 128,
                    per_round: 64,
                    stop_below: 100,
                },
                ..standard_loop()
            },
        ),
        "vista-sim" => doc(
            name,
            GenConfig {
                num_instances: 7500,
                ..standard_data()
            },
            LoopConfig {
                num_epochs: 25,
                reannotation_epochs: vec![5, 10, 15, 20],
                schedule: BudgetSchedule::vista(),
                ..standard_loop()
            },
        ),
        "remote-demo" => doc(
            name,
            GenConfig {
                num_instances: 1500,
                ..standard_data()
            },
            LoopConfig {
                num_epochs: 12,
                reannotation_epochs: vec![4, 8],
                schedule: BudgetSchedule::Fixed {
                    initial_batch: 300,
                    per_round: 100,
                },
                oracle: OracleSpec {
                    kind: OracleKind::RemoteHuman,
                    ..OracleSpec::default()
                },
                ..standard_loop()
            },
        ),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            let doc = preset(name).unwrap();
            doc.validate().unwrap();
            let text = serde_json::to_string(&doc).unwrap();
            assert_eq!(RunConfigDocument::from_json(&text).unwrap(), doc);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn unknown_fields_and_bad_values_rejected() {
        let ok = r#"{"data": {"generate": {}}}"#;
        RunConfigDocument::from_json(ok).unwrap();
        for bad in [
            r#"{"data": {"generate": {}}, "extra": 1}"#,
            r#"{"data": {"generate": {"num_terms": 2}}}"#,
            r#"{"data": {"generate": {}}, "loop": {"strategy": "magic"}}"#,
            r#"{"data": {"generate": {}}, "loop": {"num_epochs": 3, "reannotation_epochs": [3]}}"#,
            r#"{"data": {"generate": {}}, "loop": {"schedule": {"kind": "weekly"}}}"#,
            r#"{"data": {"stream": {}}}"#,
            r#"{}"#,
        ] {
            assert!(matches!(RunConfigDocument::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn seed_override_reaches_generator() {
        let doc = preset("standard").unwrap().with_seed(Some(9));
        assert_eq!(doc.gen_config().unwrap().seed, Some(9));
        assert_eq!(doc.loop_config().master_seed, 9);
    }

    #[test]
    fn comparison_key_ignores_strategy_and_oracle() {
        let a = preset("standard").unwrap();
        let mut b = a.clone();
        b.name = Some("other".into());
        b.loop_config.strategy = StrategyKind::Entropy;
        b.loop_config.oracle.kind = OracleKind::Lazy;
        assert_eq!(a.comparison_key(), b.comparison_key());
        b.loop_config.num_epochs += 1;
        assert_ne!(a.comparison_key(), b.comparison_key());
    }
}
