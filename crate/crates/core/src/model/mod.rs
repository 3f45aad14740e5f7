//! Decoder-only and encoder-decoder transformer students.

mod checkpoint;
mod config;
mod network;
mod train;

use thiserror::Error;

use crate::tensor::{AttnMask, Graph, Scalar, Tensor, TensorError, Var};
use crate::tokenizer::{SubwordTokenizer, WordVocab, BOS_WORD, COM_ID, EOS_ID, EOS_WORD, NUM_SPECIALS, TDAT_ID, UNK_WORD};
use network::{Forward, Layout, ParamSpec, Shape};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, FORMAT_VERSION};
pub use config::{ModelConfig, ModelKind, DESK_BATCH, DESK_CONTEXT, FULL_CONTEXT, FULL_VOCAB};
pub use train::{train, train_seq2seq, DecoderLoss, EpochStats, Seq2SeqExample, TrainOptions, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} tokens exceeds context length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("operation needs a {expected:?} model")]
    WrongKind { expected: ModelKind },
    #[error("training data is empty")]
    EmptyDataset,
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("summary of {summary} tokens cannot fit a context of {context}")]
    SummaryTooLong { summary: usize, context: usize },
    #[error("prompt cannot fit a context of {context}")]
    PromptTooLong { context: usize },
    #[error("max new tokens must be at least 1")]
    InvalidDecodeConfig,
    #[error("checkpoint truncated: expected {expected} bytes of tensor data, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A student network: config plus its ordered parameter tensors.
#[derive(Debug, Clone)]
pub struct StudentModel {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    layout: Layout,
    params: Vec<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeConfig {
    pub max_new_tokens: usize,
    pub eos_id: u32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 64,
            eos_id: EOS_ID,
        }
    }
}

impl StudentModel {
    /// Fresh weights: normal(0, 0.02) matrices and embeddings, zero biases,
    /// unit layer-norm gains. Deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (specs, layout) = network::layout(&config);
        let params = network::init_params(&specs, seed);
        Ok(Self {
            config,
            specs,
            layout,
            params,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let (specs, layout) = network::layout(&config);
        if specs.len() != params.len() {
            return Err(ModelError::MalformedCheckpoint(format!(
                "config needs {} tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if s.shape != p.shape() {
                return Err(ModelError::MalformedCheckpoint(format!(
                    "tensor {} has shape {:?}, config needs {:?}",
                    s.name,
                    p.shape(),
                    s.shape
                )));
            }
        }
        Ok(Self {
            config,
            specs,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    /// Number of scalars across all parameter tensors.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn expect(&self, kind: ModelKind) -> Result<(), ModelError> {
        if self.config.kind == kind {
            Ok(())
        } else {
            Err(ModelError::WrongKind { expected: kind })
        }
    }

    fn check_ids(ids: &[u32], vocab: usize, max: usize) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if ids.len() > max {
            return Err(ModelError::SequenceTooLong { len: ids.len(), max });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= vocab) {
            return Err(ModelError::TokenOutOfRange { id, vocab });
        }
        Ok(())
    }

    fn forward<'a>(&self, vars: &'a [Var], training: bool) -> Forward<'a> {
        Forward {
            p: vars,
            heads: self.config.heads,
            dropout: if training { self.config.dropout } else { 0.0 },
        }
    }

    /// Decoder-only logits `[T, V]` in evaluation mode.
    pub fn forward_logits(&self, ids: &[u32]) -> Result<Tensor, ModelError> {
        self.expect(ModelKind::DecoderOnly)?;
        Self::check_ids(ids, self.config.vocab_size, self.config.context_length)?;
        let mut g = Graph::new();
        let vars: Vec<Var> = self.params.iter().map(|p| g.input(p)).collect();
        let hidden = self.decoder_hidden(&mut g, &vars, false, &[ids])?;
        let f = self.forward(&vars, false);
        let logits = f.logits(&mut g, &self.layout.decoder, hidden)?;
        Ok(Tensor::new(g.shape(logits).to_vec(), g.value(logits).to_vec())?)
    }

    /// Encoder-decoder logits `[T_tgt, V]` in evaluation mode.
    pub fn forward_logits_seq2seq(&self, src: &[u32], tgt: &[u32]) -> Result<Tensor, ModelError> {
        self.expect(ModelKind::EncoderDecoder)?;
        Self::check_ids(src, self.config.src_vocab_size, self.config.src_context_length)?;
        Self::check_ids(tgt, self.config.vocab_size, self.config.context_length)?;
        let mut g = Graph::new();
        let vars: Vec<Var> = self.params.iter().map(|p| g.input(p)).collect();
        let hidden = self.seq2seq_hidden(&mut g, &vars, false, &[src], &[tgt])?;
        let f = self.forward(&vars, false);
        let logits = f.logits(&mut g, &self.layout.decoder, hidden)?;
        Ok(Tensor::new(g.shape(logits).to_vec(), g.value(logits).to_vec())?)
    }

    /// Final hidden states of a right-padded decoder-only batch.
    pub(crate) fn decoder_hidden<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        vars: &[Var],
        training: bool,
        batch: &[&[u32]],
    ) -> Result<Var, ModelError> {
        let (ids, shape) = pad(batch);
        let f = self.forward(vars, training);
        Ok(f.stack(g, &self.layout.decoder, &ids, &shape, AttnMask::Causal, None)?)
    }

    pub(crate) fn seq2seq_hidden<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        vars: &[Var],
        training: bool,
        src: &[&[u32]],
        tgt: &[&[u32]],
    ) -> Result<Var, ModelError> {
        let encoder = self.layout.encoder.as_ref().ok_or(ModelError::WrongKind {
            expected: ModelKind::EncoderDecoder,
        })?;
        let f = self.forward(vars, training);
        let (src_ids, src_shape) = pad(src);
        let src_lens: Vec<usize> = src.iter().map(|s| s.len()).collect();
        let enc_mask = AttnMask::KeyLength {
            lens: src_lens.clone(),
            heads: self.config.heads,
        };
        let memory = f.stack(g, encoder, &src_ids, &src_shape, enc_mask, None)?;
        let (tgt_ids, tgt_shape) = pad(tgt);
        Ok(f.stack(
            g,
            &self.layout.decoder,
            &tgt_ids,
            &tgt_shape,
            AttnMask::Causal,
            Some((memory, src_shape.len, &src_lens)),
        )?)
    }

    /// Logits of the last position only, computed off the tape.
    fn last_logits(&self, g: &Graph, hidden: Var) -> Vec<f32> {
        let d = self.config.d;
        let h = g.value(hidden);
        let last = &h[h.len() - d..];
        let wte = self.params[self.layout_decoder_tok()].data();
        wte.chunks_exact(d)
            .map(|row| row.iter().zip(last).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn layout_decoder_tok(&self) -> usize {
        network::token_table(&self.layout.decoder)
    }

    /// Greedy continuation of `prompt` until `dc.eos_id`, any other special
    /// id, `dc.max_new_tokens` or the context limit. The stop token is not
    /// returned.
    pub fn generate_ids(&self, prompt: &[u32], dc: &DecodeConfig) -> Result<Vec<u32>, ModelError> {
        self.expect(ModelKind::DecoderOnly)?;
        if dc.max_new_tokens == 0 {
            return Err(ModelError::InvalidDecodeConfig);
        }
        Self::check_ids(prompt, self.config.vocab_size, self.config.context_length)?;
        let mut ids = prompt.to_vec();
        let mut out = Vec::new();
        while out.len() < dc.max_new_tokens && ids.len() < self.config.context_length {
            let mut g = Graph::new();
            let vars: Vec<Var> = self.params.iter().map(|p| g.input(p)).collect();
            let hidden = self.decoder_hidden(&mut g, &vars, false, &[&ids])?;
            let next = argmax(&self.last_logits(&g, hidden));
            if next == dc.eos_id || next < NUM_SPECIALS {
                break;
            }
            ids.push(next);
            out.push(next);
        }
        Ok(out)
    }

    /// Greedy summary for `code`: prompts with the code marker, the code and
    /// the comment marker, then decodes until end of sequence.
    pub fn generate_summary(
        &self,
        tok: &SubwordTokenizer,
        code: &str,
        dc: &DecodeConfig,
    ) -> Result<String, ModelError> {
        let prompt = encode_prompt(tok, code, self.config.context_length)?;
        let ids = self.generate_ids(&prompt, dc)?;
        Ok(tok.decode(&ids).trim().to_string())
    }

    /// Greedy summary from the encoder-decoder baseline.
    pub fn generate_seq2seq(
        &self,
        src_vocab: &WordVocab,
        tgt_vocab: &WordVocab,
        code: &str,
    ) -> Result<String, ModelError> {
        self.expect(ModelKind::EncoderDecoder)?;
        let src = encode_source(src_vocab, code, self.config.src_context_length);
        let mut tgt = vec![BOS_WORD];
        let mut out = Vec::new();
        while tgt.len() < self.config.context_length {
            let mut g = Graph::new();
            let vars: Vec<Var> = self.params.iter().map(|p| g.input(p)).collect();
            let hidden = self.seq2seq_hidden(&mut g, &vars, false, &[&src], &[&tgt])?;
            let next = argmax(&self.last_logits(&g, hidden));
            if next == EOS_WORD || next < NUM_SPECIALS {
                break;
            }
            tgt.push(next);
            out.push(next);
        }
        Ok(tgt_vocab.decode(&out))
    }
}

fn argmax(xs: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best as u32
}

/// Flattens a batch, right-padding with id 0 to the longest row.
fn pad(batch: &[&[u32]]) -> (Vec<usize>, Shape) {
    let len = batch.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(batch.len() * len);
    for s in batch {
        ids.extend(s.iter().map(|&i| i as usize));
        ids.extend(std::iter::repeat_n(0, len - s.len()));
    }
    (
        ids,
        Shape {
            rows: batch.len(),
            len,
        },
    )
}

/// Token ids of a training record that fit `context`: code tokens are
/// dropped from the left when needed, the summary never is.
pub fn encode_training_record(
    tok: &SubwordTokenizer,
    code: &str,
    summary: &str,
    context: usize,
) -> Result<Vec<u32>, ModelError> {
    let code_ids = tok.encode(&format!(" {code}\n"));
    let summary_ids = tok.encode(&format!(" {summary}"));
    let fixed = summary_ids.len() + 3;
    if fixed > context {
        return Err(ModelError::SummaryTooLong {
            summary: summary_ids.len(),
            context,
        });
    }
    let keep = code_ids.len().min(context - fixed);
    let mut ids = Vec::with_capacity(fixed + keep);
    ids.push(TDAT_ID);
    ids.extend_from_slice(&code_ids[code_ids.len() - keep..]);
    ids.push(COM_ID);
    ids.extend(summary_ids);
    ids.push(EOS_ID);
    Ok(ids)
}

/// Generation prompt, left-truncating code so one new token still fits.
pub fn encode_prompt(tok: &SubwordTokenizer, code: &str, context: usize) -> Result<Vec<u32>, ModelError> {
    if context < 3 {
        return Err(ModelError::PromptTooLong { context });
    }
    let code_ids = tok.encode(&format!(" {code}\n"));
    let keep = code_ids.len().min(context - 3);
    let mut ids = vec![TDAT_ID];
    ids.extend_from_slice(&code_ids[code_ids.len() - keep..]);
    ids.push(COM_ID);
    Ok(ids)
}

/// Code-side word ids for the encoder; never empty.
pub fn encode_source(vocab: &WordVocab, code: &str, context: usize) -> Vec<u32> {
    let mut ids = vocab.encode_unpadded(code);
    ids.truncate(context);
    if ids.is_empty() {
        ids.push(UNK_WORD);
    }
    ids
}

/// Summary-side ids for teacher forcing: `(decoder input, decoder target)`,
/// start-prefixed and end-suffixed respectively.
pub fn encode_target(vocab: &WordVocab, summary: &str, context: usize) -> (Vec<u32>, Vec<u32>) {
    let mut ids = vocab.encode_unpadded(summary);
    ids.truncate(context.saturating_sub(1));
    let mut input = vec![BOS_WORD];
    input.extend_from_slice(&ids);
    ids.push(EOS_WORD);
    (input, ids)
}
