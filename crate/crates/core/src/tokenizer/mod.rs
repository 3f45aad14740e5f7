//! Subword tokenization for decoder-only students and bounded word
//! vocabularies for the encoder-decoder baseline.

mod bpe;
mod words;

pub use bpe::{
    SubwordTokenizer, COM_ID, EOS_ID, NUM_SPECIALS, PAD_ID, SPECIAL_TOKENS, TDAT_ID,
};
pub use words::{word_tokens, Side, WordVocab, BOS_WORD, EOS_WORD, PAD_WORD, UNK_WORD};

/// Desk-scale default subword vocabulary size.
pub const DEFAULT_VOCAB_SIZE: usize = 8192;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("vocabulary size {requested} is below the minimum {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("tokenizer file version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("malformed tokenizer file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
