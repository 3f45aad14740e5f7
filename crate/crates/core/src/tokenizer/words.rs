use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::TokenizerError;

pub const PAD_WORD: u32 = 0;
pub const UNK_WORD: u32 = 1;
pub const BOS_WORD: u32 = 2;
pub const EOS_WORD: u32 = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];
const FORMAT: &str = "words";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Code,
    Summary,
}

impl Side {
    /// Token limit per sequence: 50 for functions, 13 for summaries.
    pub fn token_limit(self) -> usize {
        match self {
            Side::Code => 50,
            Side::Summary => 13,
        }
    }

    /// Vocabulary size used at full scale.
    pub fn full_bound(self) -> usize {
        match self {
            Side::Code => 70_000,
            Side::Summary => 10_908,
        }
    }
}

/// Lowercases and splits on whitespace; each punctuation character becomes
/// its own token.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_alphanumeric() || ch == '_' {
            cur.extend(ch.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Word-level vocabulary. The size bound counts learned words; the four
/// reserved ids (pad, unknown, start, end) come on top.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVocab {
    side: Side,
    bound: usize,
    limit: usize,
    words: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    side: Side,
    bound: usize,
    limit: usize,
    specials: Vec<String>,
    words: usize,
}

impl WordVocab {
    /// Keeps the `bound` most frequent words; ties go to the
    /// lexicographically smaller word.
    pub fn build<'a>(
        corpus: impl IntoIterator<Item = &'a str>,
        side: Side,
        bound: usize,
    ) -> Result<Self, TokenizerError> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut seen_any = false;
        for text in corpus {
            seen_any = true;
            for w in word_tokens(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        if !seen_any {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));
        ranked.truncate(bound);
        Ok(Self::from_words(
            side,
            bound,
            side.token_limit(),
            ranked.into_iter().map(|(w, _)| w).collect(),
        ))
    }

    fn from_words(side: Side, bound: usize, limit: usize, words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + SPECIALS.len() as u32))
            .collect();
        Self {
            side,
            bound,
            limit,
            words,
            index,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// Learned words, excluding reserved ids.
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Number of ids, including reserved ones.
    pub fn len(&self) -> usize {
        self.words.len() + SPECIALS.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK_WORD)
    }

    pub fn word(&self, id: u32) -> &str {
        match SPECIALS.get(id as usize) {
            Some(s) => s,
            None => self
                .words
                .get(id as usize - SPECIALS.len())
                .map_or(SPECIALS[UNK_WORD as usize], String::as_str),
        }
    }

    /// Ids of the first `limit` tokens, without padding.
    pub fn encode_unpadded(&self, text: &str) -> Vec<u32> {
        word_tokens(text)
            .iter()
            .take(self.limit)
            .map(|w| self.id(w))
            .collect()
    }

    /// Ids truncated or padded to exactly `limit`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = self.encode_unpadded(text);
        ids.resize(self.limit, PAD_WORD);
        ids
    }

    /// Joins words up to the first end or pad id, skipping the start id.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .skip_while(|&&id| id == BOS_WORD)
            .take_while(|&&id| id != EOS_WORD && id != PAD_WORD)
            .map(|&id| self.word(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, mut w: impl Write) -> Result<(), TokenizerError> {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            side: self.side,
            bound: self.bound,
            limit: self.limit,
            specials: SPECIALS.iter().map(|s| s.to_string()).collect(),
            words: self.words.len(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for word in &self.words {
            writeln!(w, "{word}")?;
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
        if header.specials != SPECIALS {
            return Err(TokenizerError::Malformed("reserved tokens differ".into()));
        }
        let words = lines.collect::<Result<Vec<String>, _>>()?;
        if words.len() != header.words || words.len() > header.bound {
            return Err(TokenizerError::Malformed(format!(
                "header announces {} words (bound {}), found {}",
                header.words,
                header.bound,
                words.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for w in &words {
            if w.is_empty() || w.chars().any(char::is_whitespace) || !seen.insert(w.as_str()) {
                return Err(TokenizerError::Malformed(format!("bad word entry {w:?}")));
            }
        }
        Ok(Self::from_words(header.side, header.bound, header.limit, words))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_cut_keeps_most_frequent() {
        let corpus = ["a a a a b b b c c d e"];
        let v = WordVocab::build(corpus, Side::Summary, 3).unwrap();
        assert_eq!(v.word_count(), 3);
        assert_ne!(v.id("a"), UNK_WORD);
        assert_ne!(v.id("b"), UNK_WORD);
        assert_ne!(v.id("c"), UNK_WORD);
        assert_eq!(v.id("d"), UNK_WORD);
        assert_eq!(v.id("e"), UNK_WORD);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = WordVocab::build(["zeta alpha mid"], Side::Summary, 2).unwrap();
        assert_ne!(v.id("alpha"), UNK_WORD);
        assert_ne!(v.id("mid"), UNK_WORD);
        assert_eq!(v.id("zeta"), UNK_WORD);
    }

    #[test]
    fn long_summary_is_cut_to_thirteen() {
        let v = WordVocab::build(["one two"], Side::Summary, 10).unwrap();
        let twenty = vec!["one"; 20].join(" ");
        assert_eq!(v.encode(&twenty).len(), 13);
        assert_eq!(v.encode("two").len(), 13);
    }

    #[test]
    fn code_side_limit_is_fifty() {
        let v = WordVocab::build(["x"], Side::Code, 10).unwrap();
        assert_eq!(v.encode(&"x ".repeat(80)).len(), 50);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            WordVocab::build(empty, Side::Code, 10),
            Err(TokenizerError::EmptyCorpus)
        ));
    }

    #[test]
    fn ids_are_stable_across_builds() {
        let corpus = ["returns the user name", "sets the user id"];
        let a = WordVocab::build(corpus, Side::Summary, 100).unwrap();
        let b = WordVocab::build(corpus, Side::Summary, 100).unwrap();
        assert_eq!(a.id("user"), b.id("user"));
        assert_eq!(a, b);
    }

    #[test]
    fn splitting_lowercases_and_separates_punctuation() {
        assert_eq!(
            word_tokens("getName(int x){ return X; }"),
            ["getname", "(", "int", "x", ")", "{", "return", "x", ";", "}"]
        );
    }

    #[test]
    fn decode_stops_at_end() {
        let v = WordVocab::build(["returns the sum"], Side::Summary, 10).unwrap();
        let mut ids = vec![BOS_WORD];
        ids.extend(v.encode_unpadded("returns the sum"));
        ids.push(EOS_WORD);
        ids.push(v.id("sum"));
        assert_eq!(v.decode(&ids), "returns the sum");
    }

    #[test]
    fn save_load_round_trip() {
        let v = WordVocab::build(["a b c ( )"], Side::Code, 4).unwrap();
        let mut buf = Vec::new();
        v.save(&mut buf).unwrap();
        assert_eq!(WordVocab::load(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn load_rejects_duplicates() {
        let text = "{\"format\":\"words\",\"version\":1,\"side\":\"code\",\"bound\":5,\"limit\":50,\"specials\":[\"<pad>\",\"<unk>\",\"<s>\",\"</s>\"],\"words\":2}\na\na\n";
        assert!(WordVocab::load(text.as_bytes()).is_err());
    }
}
