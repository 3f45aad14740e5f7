use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::meteor::metric_tokens;
use super::MetricsError;

/// What to do with tokens missing from a token table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oov {
    Skip,
    /// Deterministic pseudo-random vector derived from the token and seed.
    Hashed(u64),
}

#[derive(Debug, Clone)]
enum Provider {
    /// Precomputed sentence vectors keyed by exact text.
    Sentences(HashMap<String, Vec<f32>>),
    /// Averages of per-token vectors.
    Tokens { table: HashMap<String, Vec<f32>>, oov: Oov },
}

#[derive(Debug, Clone)]
pub struct Embedder {
    dim: usize,
    provider: Provider,
}

#[derive(Serialize, Deserialize)]
struct SentenceLine {
    text: String,
    vector: Vec<f32>,
}

/// Largest vector dimension a table or sentence file may declare.
pub const MAX_EMBEDDING_DIM: usize = 1 << 16;

fn check_dim(dim: usize) -> Result<(), MetricsError> {
    if dim == 0 || dim > MAX_EMBEDDING_DIM {
        return Err(MetricsError::Embedding(format!("dimension {dim} outside 1..={MAX_EMBEDDING_DIM}")));
    }
    Ok(())
}

fn check_vector(v: &[f32], dim: usize, what: &str) -> Result<(), MetricsError> {
    if v.len() != dim {
        return Err(MetricsError::Embedding(format!("{what}: {} values, expected {dim}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::Embedding(format!("{what}: non-finite value")));
    }
    Ok(())
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Embedder {
    pub fn from_token_table(dim: usize, table: HashMap<String, Vec<f32>>, oov: Oov) -> Result<Self, MetricsError> {
        check_dim(dim)?;
        for (tok, v) in &table {
            check_vector(v, dim, tok)?;
        }
        Ok(Self {
            dim,
            provider: Provider::Tokens { table, oov },
        })
    }

    /// Every token gets a hashed vector; no table needed.
    pub fn hashed(dim: usize, seed: u64) -> Self {
        Self {
            dim: dim.max(1),
            provider: Provider::Tokens {
                table: HashMap::new(),
                oov: Oov::Hashed(seed),
            },
        }
    }

    pub fn from_sentences(dim: usize, sentences: HashMap<String, Vec<f32>>) -> Result<Self, MetricsError> {
        check_dim(dim)?;
        for (s, v) in &sentences {
            check_vector(v, dim, s)?;
        }
        Ok(Self {
            dim,
            provider: Provider::Sentences(sentences),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Reads a token table: a `dim count` header line, then `count` lines of
    /// `token v1 … vdim`.
    pub fn read_token_table(r: impl BufRead, oov: Oov) -> Result<Self, MetricsError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| MetricsError::Embedding("missing header".into()))??;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| MetricsError::Embedding(format!("header: {e}")))?;
        let [dim, count] = nums[..] else {
            return Err(MetricsError::Embedding("header must be `dim count`".into()));
        };
        let mut table = HashMap::with_capacity(count.min(1 << 16));
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tok = parts.next().unwrap_or_default().to_string();
            let v: Vec<f32> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| MetricsError::Embedding(format!("line {}: {e}", i + 2)))?;
            check_vector(&v, dim, &format!("line {}", i + 2))?;
            if table.insert(tok.clone(), v).is_some() {
                return Err(MetricsError::Embedding(format!("line {}: repeated token {tok:?}", i + 2)));
            }
        }
        if table.len() != count {
            return Err(MetricsError::Embedding(format!("header says {count} tokens, found {}", table.len())));
        }
        Self::from_token_table(dim, table, oov)
    }

    pub fn load_token_table(path: impl AsRef<Path>, oov: Oov) -> Result<Self, MetricsError> {
        Self::read_token_table(std::io::BufReader::new(std::fs::File::open(path)?), oov)
    }

    pub fn write_token_table(&self, mut w: impl Write) -> Result<(), MetricsError> {
        let Provider::Tokens { table, .. } = &self.provider else {
            return Err(MetricsError::Embedding("not a token table".into()));
        };
        writeln!(w, "{} {}", self.dim, table.len())?;
        let mut keys: Vec<&String> = table.keys().collect();
        keys.sort();
        for k in keys {
            write!(w, "{k}")?;
            for x in &table[k] {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads sentence vectors: one `{"text", "vector"}` object per line.
    pub fn read_sentences(r: impl BufRead) -> Result<Self, MetricsError> {
        let mut map = HashMap::new();
        let mut dim = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: SentenceLine =
                serde_json::from_str(&line).map_err(|e| MetricsError::Embedding(format!("line {}: {e}", i + 1)))?;
            let d = *dim.get_or_insert(s.vector.len());
            check_vector(&s.vector, d, &format!("line {}", i + 1))?;
            map.insert(s.text, s.vector);
        }
        let dim = dim.ok_or_else(|| MetricsError::Embedding("no sentence vectors".into()))?;
        Self::from_sentences(dim, map)
    }

    fn hashed_vector(&self, token: &str, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token) ^ seed);
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Sentence vector for `text`.
    pub fn embed(&self, text: &str) -> Result<Vec<f32>, MetricsError> {
        match &self.provider {
            Provider::Sentences(map) => map
                .get(text)
                .cloned()
                .ok_or_else(|| MetricsError::Embedding(format!("no vector for {text:?}"))),
            Provider::Tokens { table, oov } => {
                let mut sum = vec![0.0f64; self.dim];
                let mut n = 0usize;
                for tok in metric_tokens(text) {
                    let owned;
                    let v = match (table.get(&tok), oov) {
                        (Some(v), _) => v,
                        (None, Oov::Hashed(seed)) => {
                            owned = self.hashed_vector(&tok, *seed);
                            &owned
                        }
                        (None, Oov::Skip) => continue,
                    };
                    for (s, x) in sum.iter_mut().zip(v) {
                        *s += f64::from(*x);
                    }
                    n += 1;
                }
                let n = n.max(1) as f64;
                Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
            }
        }
    }
}

/// Cosine similarity of two vectors, computed in f64 and clamped to [-1, 1].
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Embedding(format!("dimension mismatch {} vs {}", a.len(), b.len())));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::UndefinedSimilarity);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn use_similarity(candidate: &str, reference: &str, emb: &Embedder) -> Result<f64, MetricsError> {
    cosine(&emb.embed(candidate)?, &emb.embed(reference)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Embedder {
        let text = "3 4\nreturns 1 0 0\nvalue 0 1 0\nname 0 0 1\nsum 0 2 0\n";
        Embedder::read_token_table(text.as_bytes(), Oov::Skip).unwrap()
    }

    #[test]
    fn identical_sentences() {
        let e = fixture();
        let s = use_similarity("returns value", "returns value", &e).unwrap();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_sentences() {
        let e = fixture();
        assert_eq!(use_similarity("value", "name", &e).unwrap(), 0.0);
    }

    #[test]
    fn scale_invariant() {
        let e = fixture();
        // "sum" is "value" scaled by 2
        let a = use_similarity("value", "returns", &e).unwrap();
        let b = use_similarity("sum", "returns", &e).unwrap();
        assert_eq!(a, b);
        let v = [1.0f32, 2.0, 0.5];
        let w = [0.3f32, -1.0, 4.0];
        let tripled: Vec<f32> = v.iter().map(|x| x * 3.0).collect();
        assert!((cosine(&v, &w).unwrap() - cosine(&tripled, &w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_is_an_error() {
        let e = fixture();
        assert!(matches!(use_similarity("unknown words", "value", &e), Err(MetricsError::UndefinedSimilarity)));
    }

    #[test]
    fn hashed_fallback_is_deterministic() {
        let e = Embedder::hashed(16, 7);
        assert_eq!(e.embed("foo bar").unwrap(), e.embed("Foo, bar").unwrap());
        assert_ne!(e.embed("foo").unwrap(), e.embed("bar").unwrap());
    }

    #[test]
    fn token_table_round_trip() {
        let e = fixture();
        let mut buf = Vec::new();
        e.write_token_table(&mut buf).unwrap();
        let back = Embedder::read_token_table(buf.as_slice(), Oov::Skip).unwrap();
        assert_eq!(back.embed("returns sum").unwrap(), e.embed("returns sum").unwrap());
    }

    #[test]
    fn bad_tables_rejected() {
        assert!(Embedder::read_token_table("3 1\na 1 2\n".as_bytes(), Oov::Skip).is_err());
        assert!(Embedder::read_token_table("2 2\na 1 2\n".as_bytes(), Oov::Skip).is_err());
        assert!(Embedder::read_token_table("2 1\na 1 NaN\n".as_bytes(), Oov::Skip).is_err());
        assert!(Embedder::read_token_table("".as_bytes(), Oov::Skip).is_err());
        // an empty table must not smuggle in a huge dimension
        assert!(Embedder::read_token_table("16000000055555\r\r0".as_bytes(), Oov::Skip).is_err());
        assert!(Embedder::read_token_table("0 0\n".as_bytes(), Oov::Skip).is_err());
    }

    #[test]
    fn sentence_vectors() {
        let text = "{\"text\":\"a b\",\"vector\":[1,0]}\n{\"text\":\"c\",\"vector\":[1,1]}\n";
        let e = Embedder::read_sentences(text.as_bytes()).unwrap();
        let s = use_similarity("a b", "c", &e).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(use_similarity("a b", "missing", &e).is_err());
    }
}
