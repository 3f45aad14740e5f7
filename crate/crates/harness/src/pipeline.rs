//! Dataset splitting and the train / summarize / persist cycle shared by
//! the CLI and the experiment grid.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use distill_core::corpus::{filter_samples, subsample_tiers, CodeSample, DropReport, SummaryField, TierSpec};
use distill_core::model::{
    encode_source, encode_target, encode_training_record, load_checkpoint, save_checkpoint, train, train_seq2seq,
    DecodeConfig, EpochStats, ModelConfig, ModelKind, Seq2SeqExample, StudentModel, TrainOptions, TrainReport,
};
use distill_core::tokenizer::{Side, SubwordTokenizer, WordVocab};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] distill_core::corpus::CorpusError),
    #[error(transparent)]
    Model(#[from] distill_core::model::ModelError),
    #[error(transparent)]
    Tokenizer(#[from] distill_core::tokenizer::TokenizerError),
    #[error(transparent)]
    Metrics(#[from] distill_core::metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

/// A student architecture plus the tokenizer size it is trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Vocabulary sizes in `config` are filled in from the trained
    /// tokenizers.
    pub config: ModelConfig,
    /// Subword vocabulary for decoder-only students.
    pub bpe_vocab: usize,
}

impl ModelSpec {
    /// d=64, L=2, h=2 decoder.
    pub fn desk_small() -> Self {
        Self {
            name: "d64".into(),
            config: ModelConfig::desk(0),
            bpe_vocab: 512,
        }
    }

    /// d=128, L=4, h=4 decoder.
    pub fn desk_large() -> Self {
        let mut config = ModelConfig::desk(0);
        config.d = 128;
        config.layers = 4;
        config.heads = 4;
        Self {
            name: "d128".into(),
            config,
            bpe_vocab: 512,
        }
    }

    pub fn transformer() -> Self {
        Self {
            name: "transformer".into(),
            config: ModelConfig::transformer_baseline(0, 0),
            bpe_vocab: 0,
        }
    }
}

/// Held-out test samples and nested training tiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedData {
    pub field: SummaryField,
    pub tier_sizes: Vec<usize>,
    pub tiers: Vec<Vec<CodeSample>>,
    pub test: Vec<CodeSample>,
    pub dropped: DropReport,
}

/// Drops samples without a valid summary in `field`, holds out `test_size`
/// of the rest by seeded shuffle, and draws nested tiers from the remainder.
pub fn prepare_data(
    corpus: Vec<CodeSample>,
    field: SummaryField,
    tier_sizes: &[usize],
    test_size: usize,
    seed: u64,
) -> Result<PreparedData, PipelineError> {
    let (kept, dropped) = filter_samples(corpus, field);
    if test_size == 0 || test_size >= kept.len() {
        return Err(PipelineError::Invalid(format!(
            "test size {test_size} must be positive and below the {} usable samples",
            kept.len()
        )));
    }
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; kept.len()];
    for &i in &order[..test_size] {
        is_test[i] = true;
    }
    let (mut test, mut pool) = (Vec::new(), Vec::new());
    for (s, t) in kept.into_iter().zip(is_test) {
        if t {
            test.push(s);
        } else {
            pool.push(s);
        }
    }
    let tiers = subsample_tiers(
        &pool,
        &TierSpec {
            sizes: tier_sizes.to_vec(),
            seed,
        },
    )?;
    Ok(PreparedData {
        field,
        tier_sizes: tier_sizes.to_vec(),
        tiers,
        test,
        dropped,
    })
}

/// `(code, summary)` pairs of the samples that have the field.
pub fn pairs(samples: &[CodeSample], field: SummaryField) -> Vec<(String, String)> {
    samples
        .iter()
        .filter_map(|s| s.summary(field).map(|t| (s.code.clone(), t.to_string())))
        .collect()
}

pub enum Student {
    Decoder {
        model: StudentModel,
        tok: SubwordTokenizer,
    },
    Seq2Seq {
        model: StudentModel,
        src: WordVocab,
        tgt: WordVocab,
    },
}

pub struct Fitted {
    pub student: Student,
    pub report: TrainReport,
    /// Training pairs left out because the summary alone overflows the
    /// context.
    pub skipped: usize,
}

impl Student {
    /// Trains tokenizers on `data`, then a freshly initialized model.
    pub fn fit(
        spec: &ModelSpec,
        data: &[(String, String)],
        seed: u64,
        on_epoch: Option<&mut dyn FnMut(&EpochStats)>,
    ) -> Result<Fitted, PipelineError> {
        if data.is_empty() {
            return Err(PipelineError::Invalid("no training pairs".into()));
        }
        let mut config = spec.config.clone();
        let opts = TrainOptions {
            seed,
            on_epoch,
            ..Default::default()
        };
        match config.kind {
            ModelKind::DecoderOnly => {
                let texts: Vec<String> = data.iter().map(|(c, s)| format!(" {c}\n {s}")).collect();
                let tok = SubwordTokenizer::train(texts.iter().map(String::as_str), spec.bpe_vocab)?;
                config.vocab_size = tok.vocab_size();
                let mut records = Vec::with_capacity(data.len());
                let mut skipped = 0;
                for (c, s) in data {
                    match encode_training_record(&tok, c, s, config.context_length) {
                        Ok(r) => records.push(r),
                        Err(distill_core::model::ModelError::SummaryTooLong { .. }) => skipped += 1,
                        Err(e) => return Err(e.into()),
                    }
                }
                let mut model = StudentModel::init(config, seed)?;
                let report = train(&mut model, &records, opts)?;
                Ok(Fitted {
                    student: Student::Decoder { model, tok },
                    report,
                    skipped,
                })
            }
            ModelKind::EncoderDecoder => {
                let src = WordVocab::build(data.iter().map(|(c, _)| c.as_str()), Side::Code, Side::Code.full_bound())?;
                let tgt = WordVocab::build(
                    data.iter().map(|(_, s)| s.as_str()),
                    Side::Summary,
                    Side::Summary.full_bound(),
                )?;
                config.src_vocab_size = src.len();
                config.vocab_size = tgt.len();
                let examples: Vec<Seq2SeqExample> = data
                    .iter()
                    .map(|(c, s)| {
                        let (input, target) = encode_target(&tgt, s, config.context_length);
                        (encode_source(&src, c, config.src_context_length), input, target)
                    })
                    .collect();
                // last tenth validates epoch selection
                let n_val = if examples.len() >= 10 { examples.len() / 10 } else { 0 };
                let (tr, val) = examples.split_at(examples.len() - n_val);
                let mut model = StudentModel::init(config, seed)?;
                let report = train_seq2seq(&mut model, tr, val, opts)?;
                Ok(Fitted {
                    student: Student::Seq2Seq { model, src, tgt },
                    report,
                    skipped: 0,
                })
            }
        }
    }

    pub fn model(&self) -> &StudentModel {
        match self {
            Student::Decoder { model, .. } | Student::Seq2Seq { model, .. } => model,
        }
    }

    pub fn summarize(&self, code: &str) -> Result<String, PipelineError> {
        Ok(match self {
            Student::Decoder { model, tok } => model.generate_summary(tok, code, &DecodeConfig::default())?,
            Student::Seq2Seq { model, src, tgt } => model.generate_seq2seq(src, tgt, code)?,
        })
    }

    /// Writes `model.ckpt` and the tokenizer file(s) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir)?;
        save_checkpoint(self.model(), dir.join("model.ckpt"))?;
        match self {
            Student::Decoder { tok, .. } => tok.save(BufWriter::new(File::create(dir.join("tokenizer.bpe"))?))?,
            Student::Seq2Seq { src, tgt, .. } => {
                src.save(BufWriter::new(File::create(dir.join("source.vocab"))?))?;
                tgt.save(BufWriter::new(File::create(dir.join("target.vocab"))?))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let model = load_checkpoint(dir.join("model.ckpt"))?;
        let open = |name: &str| -> Result<BufReader<File>, PipelineError> { Ok(BufReader::new(File::open(dir.join(name))?)) };
        Ok(match model.config().kind {
            ModelKind::DecoderOnly => Student::Decoder {
                tok: SubwordTokenizer::load(open("tokenizer.bpe")?)?,
                model,
            },
            ModelKind::EncoderDecoder => Student::Seq2Seq {
                src: WordVocab::load(open("source.vocab")?)?,
                tgt: WordVocab::load(open("target.vocab")?)?,
                model,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use distill_core::corpus::synthetic_java_corpus;
    use distill_core::teacher::mock_summary;

    fn harvested(n: usize) -> Vec<CodeSample> {
        synthetic_java_corpus(n, 2)
            .into_iter()
            .map(|mut s| {
                s.teacher = Some(mock_summary(&s.code));
                s
            })
            .collect()
    }

    #[test]
    fn split_is_disjoint_and_nested() {
        let d = prepare_data(harvested(300), SummaryField::Teacher, &[50, 120], 40, 9).unwrap();
        assert_eq!(d.test.len(), 40);
        assert_eq!((d.tiers[0].len(), d.tiers[1].len()), (50, 120));
        let test_ids: std::collections::HashSet<_> = d.test.iter().map(|s| &s.id).collect();
        assert!(d.tiers[1].iter().all(|s| !test_ids.contains(&s.id)));
        assert!(d.tiers[0].iter().all(|s| d.tiers[1].contains(s)));
        assert!(prepare_data(harvested(30), SummaryField::Teacher, &[5], 30, 9).is_err());
    }

    #[test]
    fn students_round_trip_through_disk() {
        let data = pairs(&harvested(40), SummaryField::Teacher);
        let dir = tempfile::tempdir().unwrap();
        for mut spec in [ModelSpec::desk_small(), ModelSpec::transformer()] {
            spec.config.epochs = 1;
            spec.config.d = 16;
            spec.config.heads = 2;
            spec.bpe_vocab = 300;
            let fitted = Student::fit(&spec, &data, 3, None).unwrap();
            let path = dir.path().join(&spec.name);
            fitted.student.save(&path).unwrap();
            let back = Student::load(&path).unwrap();
            let code = &data[0].0;
            assert_eq!(back.summarize(code).unwrap(), fitted.student.summarize(code).unwrap());
        }
    }
}
