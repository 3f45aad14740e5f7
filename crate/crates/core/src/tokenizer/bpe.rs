use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::TokenizerError;

pub const TDAT_ID: u32 = 0;
pub const COM_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const PAD_ID: u32 = 3;
pub const NUM_SPECIALS: u32 = 4;
const BYTE_BASE: u32 = NUM_SPECIALS;
const FIRST_MERGE_ID: u32 = BYTE_BASE + 256;

pub const SPECIAL_TOKENS: [&str; 4] = ["TDAT:", "COM:", "<|endoftext|>", "<|pad|>"];
const FORMAT: &str = "bpe";
const VERSION: u32 = 1;

fn pretokenizer() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r" ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+").expect("static pattern")
    })
}

/// Byte-level BPE with four fixed special tokens at ids 0..4, raw bytes at
/// 4..260 and learned merges from 260 upwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordTokenizer {
    merges: Vec<(u32, u32)>,
    ranks: HashMap<(u32, u32), u32>,
    pieces: Vec<Vec<u8>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    specials: Vec<String>,
    vocab_size: usize,
    merges: usize,
}

impl SubwordTokenizer {
    /// Smallest vocabulary: specials plus the 256 byte tokens.
    pub const MIN_VOCAB: usize = FIRST_MERGE_ID as usize;

    fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self, TokenizerError> {
        let mut pieces: Vec<Vec<u8>> = SPECIAL_TOKENS.iter().map(|s| s.as_bytes().to_vec()).collect();
        pieces.extend((0..=255u8).map(|b| vec![b]));
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let next = pieces.len() as u32;
            if a < BYTE_BASE || b < BYTE_BASE || a >= next || b >= next {
                return Err(TokenizerError::Malformed(format!(
                    "merge {rank} refers to unknown ids ({a}, {b})"
                )));
            }
            let mut piece = pieces[a as usize].clone();
            piece.extend_from_slice(&pieces[b as usize]);
            pieces.push(piece);
            ranks.insert((a, b), rank as u32);
        }
        Ok(Self {
            merges,
            ranks,
            pieces,
        })
    }

    /// Learns merges from `corpus` until the vocabulary reaches `vocab_size`
    /// or no pair occurs at least twice. Ties go to the lexicographically
    /// smallest pair of byte strings.
    pub fn train<'a>(
        corpus: impl IntoIterator<Item = &'a str>,
        vocab_size: usize,
    ) -> Result<Self, TokenizerError> {
        if vocab_size < Self::MIN_VOCAB {
            return Err(TokenizerError::VocabTooSmall {
                requested: vocab_size,
                minimum: Self::MIN_VOCAB,
            });
        }
        let mut chunk_counts: HashMap<&'a str, u64> = HashMap::new();
        for text in corpus {
            for m in pretokenizer().find_iter(text) {
                *chunk_counts.entry(m.as_str()).or_default() += 1;
            }
        }
        // sort for a corpus-order-free, deterministic working set
        let mut words: Vec<(Vec<u32>, u64)> = chunk_counts
            .into_iter()
            .map(|(w, c)| (w.bytes().map(|b| BYTE_BASE + b as u32).collect(), c))
            .collect();
        words.sort();

        let mut tok = Self::from_merges(Vec::new())?;
        while tok.pieces.len() < vocab_size {
            let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
            for (w, c) in &words {
                for p in w.windows(2) {
                    *pair_counts.entry((p[0], p[1])).or_default() += c;
                }
            }
            let best = pair_counts
                .into_iter()
                .filter(|&(_, c)| c >= 2)
                .max_by(|(pa, ca), (pb, cb)| {
                    ca.cmp(cb).then_with(|| {
                        let ka = (&tok.pieces[pa.0 as usize], &tok.pieces[pa.1 as usize]);
                        let kb = (&tok.pieces[pb.0 as usize], &tok.pieces[pb.1 as usize]);
                        kb.cmp(&ka)
                    })
                });
            let Some(((a, b), _)) = best else { break };
            let new_id = tok.pieces.len() as u32;
            let mut piece = tok.pieces[a as usize].clone();
            piece.extend_from_slice(&tok.pieces[b as usize]);
            tok.pieces.push(piece);
            tok.ranks.insert((a, b), tok.merges.len() as u32);
            tok.merges.push((a, b));
            for (w, _) in &mut words {
                merge_in_place(w, a, b, new_id);
            }
        }
        Ok(tok)
    }

    pub fn vocab_size(&self) -> usize {
        self.pieces.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Encodes text through byte fallback only; special-token spellings in
    /// the text come out as ordinary bytes, never as special ids.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for m in pretokenizer().find_iter(text) {
            let mut ids: Vec<u32> = m.as_str().bytes().map(|b| BYTE_BASE + b as u32).collect();
            self.apply_merges(&mut ids);
            out.extend(ids);
        }
        out
    }

    fn apply_merges(&self, ids: &mut Vec<u32>) {
        while ids.len() >= 2 {
            let best = ids
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0], p[1])).map(|&r| (r, p[0], p[1])))
                .min();
            let Some((rank, a, b)) = best else { break };
            merge_in_place(ids, a, b, FIRST_MERGE_ID + rank);
        }
    }

    /// Concatenates token spellings; special ids render as their literals.
    pub fn decode(&self, ids: &[u32]) -> String {
        String::from_utf8_lossy(&self.decode_bytes(ids)).into_owned()
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Vec<u8> {
        let mut bytes = Vec::new();
        for &id in ids {
            if let Some(p) = self.pieces.get(id as usize) {
                bytes.extend_from_slice(p);
            }
        }
        bytes
    }

    /// Token ids of a training record: code marker, ` code\n`, comment
    /// marker, ` summary`, end of sequence. Decodes to the record text.
    pub fn encode_record(&self, code: &str, summary: &str) -> Vec<u32> {
        let mut ids = self.encode_prompt(code);
        ids.extend(self.encode(&format!(" {summary}")));
        ids.push(EOS_ID);
        ids
    }

    /// Record prefix up to and including the comment marker.
    pub fn encode_prompt(&self, code: &str) -> Vec<u32> {
        let mut ids = vec![TDAT_ID];
        ids.extend(self.encode(&format!(" {code}\n")));
        ids.push(COM_ID);
        ids
    }

    pub fn save(&self, mut w: impl Write) -> Result<(), TokenizerError> {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            specials: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
            vocab_size: self.vocab_size(),
            merges: self.merges.len(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (a, b) in &self.merges {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn load(r: impl BufRead) -> Result<Self, TokenizerError> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| TokenizerError::Malformed("missing header".into()))??;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| TokenizerError::Malformed(format!("header: {e}")))?;
        if header.format != FORMAT {
            return Err(TokenizerError::Malformed(format!("format {:?}", header.format)));
        }
        if header.version != VERSION {
            return Err(TokenizerError::Version {
                found: header.version,
                expected: VERSION,
            });
        }
        if header.specials != SPECIAL_TOKENS {
            return Err(TokenizerError::Malformed("special tokens differ".into()));
        }
        let mut merges = Vec::with_capacity(header.merges.min(1 << 20));
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let parse = |s: Option<&str>| -> Result<u32, TokenizerError> {
                s.and_then(|s| s.parse().ok())
                    .ok_or_else(|| TokenizerError::Malformed(format!("merge line {}", i + 2)))
            };
            let (a, b) = (parse(parts.next())?, parse(parts.next())?);
            if parts.next().is_some() {
                return Err(TokenizerError::Malformed(format!("merge line {}", i + 2)));
            }
            merges.push((a, b));
        }
        if merges.len() != header.merges {
            return Err(TokenizerError::Malformed(format!(
                "header announces {} merges, found {}",
                header.merges,
                merges.len()
            )));
        }
        let tok = Self::from_merges(merges)?;
        if tok.vocab_size() != header.vocab_size {
            return Err(TokenizerError::Malformed("vocabulary size disagrees with merges".into()));
        }
        Ok(tok)
    }
}

fn merge_in_place(ids: &mut Vec<u32>, a: u32, b: u32, new_id: u32) {
    let mut out = 0;
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == a && ids[i + 1] == b {
            ids[out] = new_id;
            i += 2;
        } else {
            ids[out] = ids[i];
            i += 1;
        }
        out += 1;
    }
    ids.truncate(out);
}
