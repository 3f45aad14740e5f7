use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecoderOnly,
    EncoderDecoder,
}

/// Student hyperparameters. For the encoder-decoder kind, `vocab_size` and
/// `context_length` describe the summary side and the `src_*` fields the
/// code side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub lr: f32,
    pub epochs: usize,
    pub dropout: f32,
    pub vocab_size: usize,
    pub context_length: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub src_vocab_size: usize,
    #[serde(default)]
    pub src_context_length: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f32>,
}

fn default_clip() -> Option<f32> {
    Some(1.0)
}

/// Vocabulary and context of the GPT-2-style tokenizer the jam presets are
/// sized against.
pub const FULL_VOCAB: usize = 50_257;
pub const FULL_CONTEXT: usize = 1024;
pub const DESK_CONTEXT: usize = 256;
pub const DESK_BATCH: usize = 8;

impl ModelConfig {
    fn jam(d: usize, layers: usize, heads: usize) -> Self {
        Self {
            kind: ModelKind::DecoderOnly,
            d,
            layers,
            heads,
            lr: 3e-5,
            epochs: 3,
            dropout: 0.2,
            vocab_size: FULL_VOCAB,
            context_length: FULL_CONTEXT,
            batch_size: DESK_BATCH,
            src_vocab_size: 0,
            src_context_length: 0,
            clip_norm: default_clip(),
        }
    }

    pub fn jam_38m() -> Self {
        Self::jam(512, 4, 4)
    }

    pub fn jam_110m() -> Self {
        Self::jam(768, 10, 8)
    }

    pub fn jam_350m() -> Self {
        Self::jam(1024, 24, 16)
    }

    /// Small decoder-only student for CPU runs. Starting from random weights
    /// needs a far larger step size than fine-tuning a pretrained model.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            kind: ModelKind::DecoderOnly,
            d: 64,
            layers: 2,
            heads: 2,
            lr: 1e-3,
            epochs: 3,
            dropout: 0.2,
            vocab_size,
            context_length: DESK_CONTEXT,
            batch_size: DESK_BATCH,
            src_vocab_size: 0,
            src_context_length: 0,
            clip_norm: default_clip(),
        }
    }

    /// The encoder-decoder transformer baseline: d=100, batch 50, lr 0.001,
    /// code limit 50 tokens, summary limit 13 tokens plus start/end.
    pub fn transformer_baseline(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        Self {
            kind: ModelKind::EncoderDecoder,
            d: 100,
            layers: 2,
            heads: 4,
            lr: 1e-3,
            epochs: 10,
            dropout: 0.1,
            vocab_size: tgt_vocab_size,
            context_length: 14,
            batch_size: 50,
            src_vocab_size,
            src_context_length: 50,
            clip_norm: default_clip(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.d == 0 || self.heads == 0 {
            return bad("d and h must be positive".into());
        }
        if self.d % self.heads != 0 {
            return bad(format!("d={} is not divisible by h={}", self.d, self.heads));
        }
        if self.layers == 0 {
            return bad("L must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if self.vocab_size == 0 || self.context_length == 0 || self.batch_size == 0 {
            return bad("vocabulary, context length and batch size must be positive".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip norm {c} must be positive"));
            }
        }
        if self.kind == ModelKind::EncoderDecoder
            && (self.src_vocab_size == 0 || self.src_context_length == 0)
        {
            return bad("encoder-decoder needs source vocabulary and context length".into());
        }
        Ok(())
    }

    /// Closed-form parameter count.
    ///
    /// A pre-LN block holds four `d×d` attention projections with biases,
    /// a `d→4d→d` feed-forward pair with biases and two layer norms:
    /// `12d² + 13d`. The output projection shares the token embedding.
    pub fn parameter_count(&self) -> usize {
        let d = self.d;
        let block = 12 * d * d + 13 * d;
        match self.kind {
            ModelKind::DecoderOnly => {
                self.vocab_size * d + self.context_length * d + self.layers * block + 2 * d
            }
            ModelKind::EncoderDecoder => {
                // decoder blocks add cross-attention and a third layer norm
                let dec_block = block + 4 * d * d + 4 * d + 2 * d;
                (self.src_vocab_size + self.src_context_length) * d
                    + self.layers * block
                    + 2 * d
                    + (self.vocab_size + self.context_length) * d
                    + self.layers * dec_block
                    + 2 * d
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jam_configs_land_on_reported_sizes() {
        let m = |c: ModelConfig| c.parameter_count() as f64 / 1e6;
        assert_eq!(m(ModelConfig::jam_38m()).floor(), 38.0);
        assert_eq!(m(ModelConfig::jam_110m()).floor(), 110.0);
        let big = m(ModelConfig::jam_350m());
        assert!((350.0..360.0).contains(&big), "{big}");
    }

    #[test]
    fn jam_configs_validate() {
        for c in [ModelConfig::jam_38m(), ModelConfig::jam_110m(), ModelConfig::jam_350m()] {
            c.validate().unwrap();
        }
        ModelConfig::transformer_baseline(100, 50).validate().unwrap();
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut c = ModelConfig::desk(512);
        c.d = 65;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("not divisible"), "{err}");
    }

    #[test]
    fn dropout_of_one_rejected() {
        let mut c = ModelConfig::desk(512);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_layers_and_epochs_rejected() {
        let mut c = ModelConfig::desk(512);
        c.layers = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(512);
        c.epochs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = ModelConfig::transformer_baseline(70, 30);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
