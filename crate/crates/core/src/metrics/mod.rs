//! Summary scoring: METEOR (exact and stem stages) and embedding cosine.

mod embed;
mod meteor;
mod porter;
mod report;

use thiserror::Error;

pub use embed::{cosine, use_similarity, Embedder, Oov, MAX_EMBEDDING_DIM};
pub use meteor::{align_unigrams, meteor, meteor_with, metric_tokens, Alignment, MeteorParams, MeteorScore, EXACT_SEARCH_LIMIT};
pub use porter::porter_stem;
pub use report::{
    corpus_scores, load_texts, standard_grid, read_texts, tier_label, write_texts, ColumnGroup, GridReport, MetricReport,
    PairScore, TextLine,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid METEOR parameters: {0}")]
    InvalidParams(String),
    #[error("embedding: {0}")]
    Embedding(String),
    #[error("similarity undefined for a zero-norm vector")]
    UndefinedSimilarity,
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("nothing to score")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no grid cell {0}")]
    UnknownCell(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
