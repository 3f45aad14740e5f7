//! Run configuration read from a TOML or JSON document.

use std::path::{Path, PathBuf};

use distill_core::corpus::SummaryField;
use distill_core::model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::pipeline::{ModelSpec, PipelineError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub teacher: TeacherConfig,
    pub tiers: Vec<usize>,
    pub seeds: Vec<u64>,
    pub models: Vec<ModelEntry>,
    /// Token embedding table for the USE score; hashed vectors otherwise.
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            teacher: TeacherConfig::default(),
            tiers: vec![1_000, 4_000],
            seeds: vec![1],
            models: vec![ModelEntry::preset("d64", "desk"), ModelEntry::preset("d128", "desk-large")],
            embeddings: None,
            out: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// JSONL corpus; a synthetic Java corpus is generated when absent.
    pub corpus: Option<PathBuf>,
    pub synthetic_samples: usize,
    pub test_size: usize,
    pub field: SummaryField,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            synthetic_samples: 4_300,
            test_size: 200,
            field: SummaryField::Teacher,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub max_parallel: usize,
    pub cache: Option<PathBuf>,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            kind: TeacherKind::Mock,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_parallel: 4,
            cache: None,
        }
    }
}

/// A named preset with optional overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    /// desk, desk-large, jam-38m, jam-110m, jam-350m or transformer.
    pub preset: String,
    pub d: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub lr: Option<f32>,
    pub epochs: Option<usize>,
    pub dropout: Option<f32>,
    pub batch_size: Option<usize>,
    pub context_length: Option<usize>,
    pub bpe_vocab: Option<usize>,
}

impl ModelEntry {
    pub fn preset(name: &str, preset: &str) -> Self {
        Self {
            name: name.into(),
            preset: preset.into(),
            ..Default::default()
        }
    }

    pub fn resolve(&self) -> Result<ModelSpec, PipelineError> {
        let mut spec = match self.preset.as_str() {
            "desk" => ModelSpec::desk_small(),
            "desk-large" => ModelSpec::desk_large(),
            "transformer" => ModelSpec::transformer(),
            "jam-38m" | "jam-110m" | "jam-350m" => {
                let config = match self.preset.as_str() {
                    "jam-38m" => ModelConfig::jam_38m(),
                    "jam-110m" => ModelConfig::jam_110m(),
                    _ => ModelConfig::jam_350m(),
                };
                ModelSpec {
                    name: String::new(),
                    bpe_vocab: config.vocab_size,
                    config,
                }
            }
            other => return Err(PipelineError::Invalid(format!("unknown preset {other:?}"))),
        };
        spec.name = if self.name.is_empty() { self.preset.clone() } else { self.name.clone() };
        let c = &mut spec.config;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(d, layers, heads, lr, epochs, dropout, batch_size, context_length);
        if let Some(v) = self.bpe_vocab {
            spec.bpe_vocab = v;
        }
        Ok(spec)
    }
}

impl RunConfig {
    /// Parses JSON for `.json` files and TOML otherwise.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text).map_err(|e| PipelineError::Invalid(format!("{}: {e}", path.display())))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>, PipelineError> {
        self.models.iter().map(ModelEntry::resolve).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides() {
        let text = r#"
seed = 4
tiers = [100, 200]
out = "x"

[data]
synthetic_samples = 500
test_size = 20

[[models]]
name = "tiny"
preset = "desk"
d = 32
epochs = 2
bpe_vocab = 300
"#;
        let c: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(c.tiers, [100, 200]);
        assert_eq!(c.data.test_size, 20);
        assert_eq!(c.teacher.kind, TeacherKind::Mock);
        let spec = &c.model_specs().unwrap()[0];
        assert_eq!((spec.name.as_str(), spec.config.d, spec.config.epochs, spec.bpe_vocab), ("tiny", 32, 2, 300));
        assert_eq!(spec.config.layers, 2);
    }

    #[test]
    fn unknown_keys_and_presets_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!(ModelEntry::preset("a", "gpt-9").resolve().is_err());
    }

    #[test]
    fn default_grid_is_two_desk_models() {
        let specs = RunConfig::default().model_specs().unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!((specs[1].config.d, specs[1].config.layers, specs[1].config.heads), (128, 4, 4));
    }

    #[test]
    fn json_config_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 9, "tiers": [10]}"#).unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!((c.seed, c.tiers.as_slice()), (9, &[10][..]));
    }
}
