//! Code/summary corpora: loading, filtering, tiering and training records.

mod record;
mod synthetic;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use record::{format_training_record, parse_training_record, PromptRecord, CODE_MARKER, COMMENT_MARKER, END_MARKER};
pub use synthetic::synthetic_java_corpus;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSample {
    pub id: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<String>,
    #[serde(default)]
    pub base: bool,
}

impl CodeSample {
    pub fn new(id: impl Into<String>, code: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            code: code.into(),
            reference: None,
            teacher: None,
            project: None,
            base: false,
        }
    }

    pub fn summary(&self, field: SummaryField) -> Option<&str> {
        match field {
            SummaryField::Reference => self.reference.as_deref(),
            SummaryField::Teacher => self.teacher.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryField {
    Reference,
    Teacher,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("tier sizes must be nonempty, positive and strictly ascending: {0:?}")]
    InvalidTiers(Vec<usize>),
    #[error("tier size {size} exceeds corpus of {available}")]
    TierTooLarge { size: usize, available: usize },
    #[error("{base} base samples do not fit the smallest tier of {smallest}")]
    BaseTooLarge { base: usize, smallest: usize },
    #[error("sample {id:?} has no {field:?} summary")]
    MissingSummary { id: String, field: SummaryField },
    #[error("code of sample {id:?} contains a line starting with the comment marker")]
    AmbiguousCode { id: String },
    #[error("record lacks the code marker")]
    MissingCodeMarker,
    #[error("record lacks a line-initial comment marker")]
    MissingCommentMarker,
    #[error("comment marker precedes the code marker")]
    MarkersOutOfOrder,
}

/// Parses line-delimited sample records; blank lines are skipped.
pub fn read_corpus(r: impl BufRead) -> Result<Vec<CodeSample>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: CodeSample = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if sample.id.is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: "empty id".into(),
            });
        }
        if sample.code.is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: format!("sample {:?} has empty code", sample.id),
            });
        }
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: sample.id,
            });
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CodeSample>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(BufReader::new(file))
}

pub fn write_corpus(mut w: impl Write, samples: &[CodeSample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Minimum share of basic-Latin letters, digits and ASCII punctuation among
/// non-whitespace characters for a summary to count as English.
pub const ENGLISH_THRESHOLD: f64 = 0.9;

/// Empty, whitespace-only, or not English by the character heuristic.
pub fn is_valid_summary(text: &str) -> bool {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if chars.is_empty() {
        return false;
    }
    english_like(text, &chars)
}

fn english_like(text: &str, chars: &[char]) -> bool {
    let latin = chars
        .iter()
        .filter(|c| c.is_ascii_alphanumeric() || c.is_ascii_punctuation())
        .count();
    let has_word = text
        .split(|c: char| !c.is_ascii_alphabetic())
        .any(|w| !w.is_empty());
    latin as f64 >= ENGLISH_THRESHOLD * chars.len() as f64 && has_word
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub empty: usize,
    pub non_english: usize,
    pub missing: usize,
}

impl DropReport {
    pub fn total(&self) -> usize {
        self.empty + self.non_english + self.missing
    }
}

/// Keeps samples whose selected summary is valid, tallying the rest.
pub fn filter_samples(corpus: Vec<CodeSample>, field: SummaryField) -> (Vec<CodeSample>, DropReport) {
    let mut report = DropReport::default();
    let kept = corpus
        .into_iter()
        .filter(|s| match s.summary(field) {
            None => {
                report.missing += 1;
                false
            }
            Some(t) if t.trim().is_empty() => {
                report.empty += 1;
                false
            }
            Some(t) if !is_valid_summary(t) => {
                report.non_english += 1;
                false
            }
            Some(_) => true,
        })
        .collect();
    (kept, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierSpec {
    pub sizes: Vec<usize>,
    pub seed: u64,
}

impl TierSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let ok = !self.sizes.is_empty()
            && self.sizes[0] >= 1
            && self.sizes.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(CorpusError::InvalidTiers(self.sizes.clone()))
        }
    }
}

/// Nested tiers: every tier holds all base-flagged samples plus a prefix of
/// the remaining samples in seeded shuffle order. The shuffle runs over
/// ids in sorted order, so the selection does not depend on file order.
/// Samples keep corpus order inside each tier.
pub fn subsample_tiers(corpus: &[CodeSample], spec: &TierSpec) -> Result<Vec<Vec<CodeSample>>, CorpusError> {
    spec.validate()?;
    let largest = *spec.sizes.last().expect("validated nonempty");
    if largest > corpus.len() {
        return Err(CorpusError::TierTooLarge {
            size: largest,
            available: corpus.len(),
        });
    }
    let base = corpus.iter().filter(|s| s.base).count();
    if base > spec.sizes[0] {
        return Err(CorpusError::BaseTooLarge {
            base,
            smallest: spec.sizes[0],
        });
    }
    let mut rest: Vec<usize> = (0..corpus.len()).filter(|&i| !corpus[i].base).collect();
    rest.sort_by(|&a, &b| corpus[a].id.cmp(&corpus[b].id));
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    Ok(spec
        .sizes
        .iter()
        .map(|&size| {
            let mut chosen = vec![false; corpus.len()];
            for (i, s) in corpus.iter().enumerate() {
                chosen[i] = s.base;
            }
            for &i in &rest[..size - base] {
                chosen[i] = true;
            }
            corpus
                .iter()
                .zip(&chosen)
                .filter(|(_, &c)| c)
                .map(|(s, _)| s.clone())
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> Vec<CodeSample> {
        (0..n).map(|i| CodeSample::new(format!("m{i}"), format!("void f{i}() {{}}"))).collect()
    }

    #[test]
    fn three_lines_parse() {
        let text = r#"{"id":"a","code":"int f(){return 1;}","teacher":"returns one","base":true}
{"id":"b","code":"void g(){}","reference":"does nothing","project":"p1","base":false}
{"id":"c","code":"int h(){return 2;}"}
"#;
        let c = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c[0].base);
        assert_eq!(c[1].project.as_deref(), Some("p1"));
        assert_eq!(c[2].teacher, None);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(read_corpus("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_names_line() {
        let text = "{\"id\":\"a\",\"code\":\"x\"}\n{\"id\":\"a\",\"code\":\"y\"}\n";
        let err = read_corpus(text.as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }));
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = "{\"id\":\"a\",\"code\":\"x\"}\nnot json\n";
        assert!(matches!(
            read_corpus(text.as_bytes()),
            Err(CorpusError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            read_corpus("{\"id\":\"a\",\"code\":\"\"}".as_bytes()),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_corpus("/nonexistent/corpus.jsonl"),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn write_then_read() {
        let mut c = corpus(3);
        c[1].teacher = Some("line\nbreak \"quoted\"".into());
        let mut buf = Vec::new();
        write_corpus(&mut buf, &c).unwrap();
        assert_eq!(read_corpus(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn validity_heuristic() {
        assert!(!is_valid_summary(""));
        assert!(!is_valid_summary("   \n"));
        assert!(is_valid_summary("gets the current user id"));
        assert!(is_valid_summary("returns the sum of two integers"));
        // 7 katakana/kanji characters, 0 Latin
        assert!(!is_valid_summary("メソッドの説明"));
        assert!(!is_valid_summary("1234 ..."));
        // 9 Latin of 10 non-whitespace characters sits exactly on the threshold
        assert!(is_valid_summary("abcdefghi é"));
        assert!(!is_valid_summary("abcdefgh éé"));
    }

    #[test]
    fn filter_tallies_reasons() {
        let mut c = corpus(5);
        c[0].teacher = Some(String::new());
        c[1].teacher = Some("returns the sum of two integers".into());
        c[2].teacher = Some("ソースコードの要約です".into());
        c[3].teacher = None;
        c[4].teacher = Some("sets the name".into());
        let (kept, report) = filter_samples(c, SummaryField::Teacher);
        assert_eq!(kept.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["m1", "m4"]);
        assert_eq!(
            report,
            DropReport {
                empty: 1,
                non_english: 1,
                missing: 1
            }
        );
    }

    #[test]
    fn tiers_nest() {
        let c = corpus(16);
        let spec = TierSpec {
            sizes: vec![4, 8, 16],
            seed: 3,
        };
        let tiers = subsample_tiers(&c, &spec).unwrap();
        assert_eq!(tiers.iter().map(Vec::len).collect::<Vec<_>>(), [4, 8, 16]);
        for w in tiers.windows(2) {
            let big: HashSet<&str> = w[1].iter().map(|s| s.id.as_str()).collect();
            assert!(w[0].iter().all(|s| big.contains(s.id.as_str())));
        }
        assert_eq!(tiers[2], c);
    }

    #[test]
    fn base_samples_are_in_every_tier() {
        let mut c = corpus(20);
        for i in [3, 11, 17] {
            c[i].base = true;
        }
        let tiers = subsample_tiers(&c, &TierSpec { sizes: vec![3, 10], seed: 1 }).unwrap();
        assert_eq!(
            tiers[0].iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
            ["m3", "m11", "m17"]
        );
        assert!(tiers[1].iter().filter(|s| s.base).count() == 3);
        assert!(matches!(
            subsample_tiers(&c, &TierSpec { sizes: vec![2, 10], seed: 1 }),
            Err(CorpusError::BaseTooLarge { base: 3, smallest: 2 })
        ));
    }

    #[test]
    fn tier_errors() {
        let c = corpus(4);
        assert!(matches!(
            subsample_tiers(&c, &TierSpec { sizes: vec![2, 5], seed: 0 }),
            Err(CorpusError::TierTooLarge { size: 5, available: 4 })
        ));
        for sizes in [vec![], vec![0, 2], vec![3, 3], vec![3, 2]] {
            assert!(matches!(
                subsample_tiers(&c, &TierSpec { sizes, seed: 0 }),
                Err(CorpusError::InvalidTiers(_))
            ));
        }
    }

    #[test]
    fn tiers_depend_on_seed_only() {
        let c = corpus(50);
        let spec = TierSpec { sizes: vec![10, 20], seed: 42 };
        assert_eq!(subsample_tiers(&c, &spec).unwrap(), subsample_tiers(&c, &spec).unwrap());
        let other = TierSpec { sizes: vec![10, 20], seed: 43 };
        assert_ne!(subsample_tiers(&c, &spec).unwrap(), subsample_tiers(&c, &other).unwrap());
    }
}
