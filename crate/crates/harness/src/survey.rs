//! Blind two-page rating study: session assignment, response validation,
//! the append-only response log and its export format.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use distill_core::stats::{Choice, PreferenceAnswer, Question, QuestionRatings};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ITEMS_PER_SESSION: usize = 30;
/// Mean seconds per item below which a session is treated as low effort.
pub const LOW_EFFORT_SECONDS: f64 = 30.0;

pub const QUESTIONS: [&str; 3] = [
    "Independent of other factors, I feel that the summary is accurate.",
    "The summary is missing important information, and that can hinder the understanding of the method.",
    "The summary contains a lot of unnecessary information.",
];
/// Display order; the stored value is `4 - index`.
pub const LIKERT_OPTIONS: [&str; 4] = ["Strongly Agree", "Agree", "Disagree", "Strongly Disagree"];
pub const PREFERENCE_QUESTION: &str = "Overall, which summary is better in your opinion?";
pub const PREFERENCE_OPTIONS: [&str; 3] = ["Summary 1", "Summary 2", "I really cannot decide."];

const EXPORT_FORMAT: &str = "distill-survey-export";
const EXPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("pool has {have} methods, a session needs {need}")]
    PoolTooSmall { have: usize, need: usize },
    #[error("unknown session")]
    UnknownSession,
    #[error("item {0} is not part of this session")]
    UnknownItem(usize),
    #[error("Likert answers must lie in 1..=4, got {0}")]
    InvalidLikert(u8),
    #[error("a rationale is required")]
    MissingRationale,
    #[error("elapsed seconds must be finite and non-negative")]
    InvalidTiming,
    #[error("item {0} was already answered")]
    Duplicate(usize),
    #[error("page one of item {0} has not been answered")]
    PageOrder(usize),
    #[error("session {0:?} already exists")]
    DuplicateSession(String),
    #[error("threshold must be positive")]
    InvalidThreshold,
    #[error("pool item {0:?} lacks a summary from {1:?}")]
    MissingSummary(String, String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A method with one summary per source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolItem {
    pub method_id: String,
    pub code: String,
    pub summaries: BTreeMap<String, String>,
}

/// Methods to rate and the two sources compared in this study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyPool {
    pub sources: [String; 2],
    pub items: Vec<PoolItem>,
}

impl StudyPool {
    pub fn new(sources: [String; 2], items: Vec<PoolItem>) -> Result<Self, SurveyError> {
        for it in &items {
            for s in &sources {
                if !it.summaries.contains_key(s) {
                    return Err(SurveyError::MissingSummary(it.method_id.clone(), s.clone()));
                }
            }
        }
        Ok(Self { sources, items })
    }

    pub fn method_ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.method_id.clone()).collect()
    }

    pub fn get(&self, method_id: &str) -> Option<&PoolItem> {
        self.items.iter().find(|i| i.method_id == method_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub method_id: String,
    /// Source of the summary shown on page one and as summary 1.
    pub first_source: String,
    pub second_source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySession {
    pub session_id: String,
    pub participant: String,
    pub items: Vec<Assignment>,
}

impl SurveySession {
    /// Assignment for 1-based item `n`.
    pub fn item(&self, n: usize) -> Result<&Assignment, SurveyError> {
        n.checked_sub(1).and_then(|i| self.items.get(i)).ok_or(SurveyError::UnknownItem(n))
    }
}

/// Samples [`ITEMS_PER_SESSION`] distinct methods and flips a fair coin per
/// item for which source is shown first.
pub fn create_session(
    participant: &str,
    pool: &[String],
    sources: &[String; 2],
    seed: u64,
) -> Result<SurveySession, SurveyError> {
    let mut distinct = pool.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < ITEMS_PER_SESSION {
        return Err(SurveyError::PoolTooSmall {
            have: distinct.len(),
            need: ITEMS_PER_SESSION,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let session_id = format!("{:016x}{:016x}", rng.random::<u64>(), rng.random::<u64>());
    let picked: Vec<&String> = distinct.choose_multiple(&mut rng, ITEMS_PER_SESSION).collect();
    let items = picked
        .into_iter()
        .map(|m| {
            let swap = rng.random_bool(0.5);
            let (a, b) = if swap { (&sources[1], &sources[0]) } else { (&sources[0], &sources[1]) };
            Assignment {
                method_id: m.clone(),
                first_source: a.clone(),
                second_source: b.clone(),
            }
        })
        .collect();
    Ok(SurveySession {
        session_id,
        participant: participant.to_string(),
        items,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub session_id: String,
    /// 1-based position in the session.
    pub item: usize,
    pub method_id: String,
    pub first_source: String,
    pub second_source: String,
    /// Accurate, complete, concise; 4 = Strongly Agree.
    pub likert: [u8; 3],
    pub preference: Choice,
    pub rationale: String,
    pub page1_seconds: f64,
    pub page2_seconds: f64,
}

impl SurveyResponse {
    pub fn validate(&self) -> Result<(), SurveyError> {
        validate_likert(&self.likert)?;
        validate_seconds(self.page1_seconds)?;
        validate_seconds(self.page2_seconds)?;
        if self.rationale.trim().is_empty() {
            return Err(SurveyError::MissingRationale);
        }
        Ok(())
    }

    pub fn seconds(&self) -> f64 {
        self.page1_seconds + self.page2_seconds
    }

    pub fn preferred_source(&self) -> Option<&str> {
        match self.preference {
            Choice::First => Some(&self.first_source),
            Choice::Second => Some(&self.second_source),
            Choice::Undecided => None,
        }
    }
}

fn validate_likert(l: &[u8; 3]) -> Result<(), SurveyError> {
    match l.iter().find(|v| !(1..=4).contains(*v)) {
        Some(&v) => Err(SurveyError::InvalidLikert(v)),
        None => Ok(()),
    }
}

fn validate_seconds(s: f64) -> Result<(), SurveyError> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(SurveyError::InvalidTiming)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageOne {
    pub likert: [u8; 3],
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Session(SurveySession),
    PageOne {
        session_id: String,
        item: usize,
        #[serde(flatten)]
        answer: PageOne,
    },
    Response(SurveyResponse),
}

/// Progress of one item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemState {
    Fresh,
    PageOneDone,
    Done,
}

/// Sessions and responses backed by an append-only JSONL event log. Each
/// event is flushed and synced before the call returns.
#[derive(Debug, Default)]
pub struct SurveyStore {
    path: Option<PathBuf>,
    file: Option<File>,
    sessions: BTreeMap<String, SurveySession>,
    page_one: HashMap<(String, usize), PageOne>,
    responses: BTreeMap<(String, usize), SurveyResponse>,
}

impl SurveyStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Replays the log at `path` (created if missing). A torn final line is
    /// dropped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SurveyError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self::default();
        if path.exists() {
            let bytes = std::fs::read(&path)?;
            let keep = match bytes.last() {
                Some(b'\n') | None => bytes.len(),
                Some(_) => bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1),
            };
            for (i, line) in bytes[..keep].split(|&b| b == b'\n').enumerate() {
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                let ev: Event = serde_json::from_slice(line).map_err(|e| SurveyError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                store.apply(ev)?;
            }
            if keep < bytes.len() {
                OpenOptions::new().write(true).open(&path)?.set_len(keep as u64)?;
            }
        }
        store.file = Some(OpenOptions::new().create(true).append(true).open(&path)?);
        store.path = Some(path);
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn persist(&mut self, ev: &Event) -> Result<(), SurveyError> {
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_vec(ev).map_err(std::io::Error::from)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.flush()?;
            f.sync_data()?;
        }
        Ok(())
    }

    fn check(&self, ev: &Event) -> Result<(), SurveyError> {
        match ev {
            Event::Session(s) => {
                if self.sessions.contains_key(&s.session_id) {
                    return Err(SurveyError::DuplicateSession(s.session_id.clone()));
                }
            }
            Event::PageOne { session_id, item, answer } => {
                self.session(session_id)?.item(*item)?;
                validate_likert(&answer.likert)?;
                validate_seconds(answer.seconds)?;
                if self.page_one.contains_key(&(session_id.clone(), *item)) {
                    return Err(SurveyError::Duplicate(*item));
                }
            }
            Event::Response(r) => {
                let a = self.session(&r.session_id)?.item(r.item)?;
                if a.method_id != r.method_id || a.first_source != r.first_source || a.second_source != r.second_source {
                    return Err(SurveyError::UnknownItem(r.item));
                }
                r.validate()?;
                if self.responses.contains_key(&(r.session_id.clone(), r.item)) {
                    return Err(SurveyError::Duplicate(r.item));
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, ev: Event) -> Result<(), SurveyError> {
        self.check(&ev)?;
        match ev {
            Event::Session(s) => {
                self.sessions.insert(s.session_id.clone(), s);
            }
            Event::PageOne { session_id, item, answer } => {
                self.page_one.insert((session_id, item), answer);
            }
            Event::Response(r) => {
                self.page_one.entry((r.session_id.clone(), r.item)).or_insert(PageOne {
                    likert: r.likert,
                    seconds: r.page1_seconds,
                });
                self.responses.insert((r.session_id.clone(), r.item), r);
            }
        }
        Ok(())
    }

    fn commit(&mut self, ev: Event) -> Result<(), SurveyError> {
        self.check(&ev)?;
        self.persist(&ev)?;
        self.apply(ev)
    }

    pub fn add_session(&mut self, s: SurveySession) -> Result<(), SurveyError> {
        self.commit(Event::Session(s))
    }

    pub fn session(&self, id: &str) -> Result<&SurveySession, SurveyError> {
        self.sessions.get(id).ok_or(SurveyError::UnknownSession)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SurveySession> {
        self.sessions.values()
    }

    pub fn item_state(&self, id: &str, item: usize) -> Result<ItemState, SurveyError> {
        self.session(id)?.item(item)?;
        let key = (id.to_string(), item);
        Ok(if self.responses.contains_key(&key) {
            ItemState::Done
        } else if self.page_one.contains_key(&key) {
            ItemState::PageOneDone
        } else {
            ItemState::Fresh
        })
    }

    pub fn record_page_one(&mut self, id: &str, item: usize, likert: [u8; 3], seconds: f64) -> Result<(), SurveyError> {
        self.commit(Event::PageOne {
            session_id: id.to_string(),
            item,
            answer: PageOne { likert, seconds },
        })
    }

    /// Completes an item whose first page is stored.
    pub fn record_page_two(
        &mut self,
        id: &str,
        item: usize,
        preference: Choice,
        rationale: &str,
        seconds: f64,
    ) -> Result<SurveyResponse, SurveyError> {
        let a = self.session(id)?.item(item)?.clone();
        let p1 = *self
            .page_one
            .get(&(id.to_string(), item))
            .ok_or(SurveyError::PageOrder(item))?;
        let r = SurveyResponse {
            session_id: id.to_string(),
            item,
            method_id: a.method_id,
            first_source: a.first_source,
            second_source: a.second_source,
            likert: p1.likert,
            preference,
            rationale: rationale.to_string(),
            page1_seconds: p1.seconds,
            page2_seconds: seconds,
        };
        self.record_response(r.clone())?;
        Ok(r)
    }

    /// Stores a complete response for an assigned, unanswered item.
    pub fn record_response(&mut self, r: SurveyResponse) -> Result<(), SurveyError> {
        self.commit(Event::Response(r))
    }

    /// Responses ordered by (session, item).
    pub fn responses(&self) -> Vec<SurveyResponse> {
        self.responses.values().cloned().collect()
    }

    /// Rewrites the log with only the live events, replacing the old file
    /// by rename.
    pub fn compact(&mut self) -> Result<(), SurveyError> {
        let Some(path) = self.path.clone() else {
            return Ok(());
        };
        let tmp = path.with_extension("compact.tmp");
        {
            let mut f = File::create(&tmp)?;
            let mut events: Vec<Event> = self.sessions.values().cloned().map(Event::Session).collect();
            let mut pending: Vec<_> = self
                .page_one
                .iter()
                .filter(|(k, _)| !self.responses.contains_key(*k))
                .map(|((s, i), a)| Event::PageOne {
                    session_id: s.clone(),
                    item: *i,
                    answer: *a,
                })
                .collect();
            pending.sort_by(|a, b| match (a, b) {
                (Event::PageOne { session_id: s1, item: i1, .. }, Event::PageOne { session_id: s2, item: i2, .. }) => {
                    (s1, i1).cmp(&(s2, i2))
                }
                _ => std::cmp::Ordering::Equal,
            });
            events.extend(pending);
            events.extend(self.responses.values().cloned().map(Event::Response));
            for ev in &events {
                serde_json::to_writer(&mut f, ev).map_err(std::io::Error::from)?;
                f.write_all(b"\n")?;
            }
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
        self.file = Some(OpenOptions::new().append(true).open(&path)?);
        Ok(())
    }

    /// Header line, then one response per line in (session, item) order.
    pub fn export(&self, w: impl Write) -> Result<(), SurveyError> {
        export_responses(&self.responses(), w)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportHeader {
    format: String,
    version: u32,
    count: usize,
}

pub fn export_responses(responses: &[SurveyResponse], mut w: impl Write) -> Result<(), SurveyError> {
    let mut sorted: Vec<&SurveyResponse> = responses.iter().collect();
    sorted.sort_by(|a, b| (&a.session_id, a.item).cmp(&(&b.session_id, b.item)));
    let header = ExportHeader {
        format: EXPORT_FORMAT.into(),
        version: EXPORT_VERSION,
        count: sorted.len(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).map_err(std::io::Error::from)?)?;
    for r in sorted {
        writeln!(w, "{}", serde_json::to_string(r).map_err(std::io::Error::from)?)?;
    }
    Ok(())
}

/// Parses an export file, checking the header count.
pub fn import_responses(r: impl BufRead) -> Result<Vec<SurveyResponse>, SurveyError> {
    let mut lines = r.lines();
    let first = lines.next().ok_or(SurveyError::Parse {
        line: 1,
        message: "missing header".into(),
    })??;
    let header: ExportHeader = serde_json::from_str(&first).map_err(|e| SurveyError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.format != EXPORT_FORMAT || header.version != EXPORT_VERSION {
        return Err(SurveyError::Parse {
            line: 1,
            message: format!("unsupported export {} v{}", header.format, header.version),
        });
    }
    let mut out = Vec::with_capacity(header.count.min(1 << 20));
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: SurveyResponse = serde_json::from_str(&line).map_err(|e| SurveyError::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        r.validate().map_err(|e| SurveyError::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    if out.len() != header.count {
        return Err(SurveyError::Parse {
            line: 1,
            message: format!("header lists {} responses, found {}", header.count, out.len()),
        });
    }
    Ok(out)
}

pub fn load_export(path: impl AsRef<Path>) -> Result<Vec<SurveyResponse>, SurveyError> {
    import_responses(BufReader::new(File::open(path)?))
}

/// Sessions whose mean time per answered item is below `threshold` seconds.
pub fn flag_low_effort(responses: &[SurveyResponse], threshold: f64) -> Result<Vec<String>, SurveyError> {
    if !(threshold > 0.0) {
        return Err(SurveyError::InvalidThreshold);
    }
    let mut per: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in responses {
        let e = per.entry(&r.session_id).or_default();
        e.0 += r.seconds();
        e.1 += 1;
    }
    Ok(per
        .into_iter()
        .filter(|(_, (t, n))| t / (*n as f64) < threshold)
        .map(|(s, _)| s.to_string())
        .collect())
}

/// Page-one ratings grouped by the source whose summary was rated.
pub fn ratings_by_source(responses: &[SurveyResponse], first: &str, second: &str) -> Vec<QuestionRatings> {
    Question::ALL
        .iter()
        .enumerate()
        .map(|(q, &question)| {
            let pick = |src: &str| -> Vec<i64> {
                responses
                    .iter()
                    .filter(|r| r.first_source == src)
                    .map(|r| i64::from(r.likert[q]))
                    .collect()
            };
            QuestionRatings {
                question,
                first: pick(first),
                second: pick(second),
            }
        })
        .collect()
}

pub fn preference_answers(responses: &[SurveyResponse]) -> Vec<PreferenceAnswer> {
    responses
        .iter()
        .map(|r| PreferenceAnswer {
            choice: r.preference,
            first_source: r.first_source.clone(),
            second_source: r.second_source.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    fn sources() -> [String; 2] {
        ["reference".to_string(), "teacher".to_string()]
    }

    fn session(seed: u64) -> SurveySession {
        create_session("p1", &pool(100), &sources(), seed).unwrap()
    }

    fn response(s: &SurveySession, item: usize, secs: f64) -> SurveyResponse {
        let a = s.item(item).unwrap();
        SurveyResponse {
            session_id: s.session_id.clone(),
            item,
            method_id: a.method_id.clone(),
            first_source: a.first_source.clone(),
            second_source: a.second_source.clone(),
            likert: [3, 2, 1],
            preference: Choice::First,
            rationale: "clearer".into(),
            page1_seconds: secs / 2.0,
            page2_seconds: secs / 2.0,
        }
    }

    #[test]
    fn sessions_hold_thirty_distinct_methods() {
        let s = session(1);
        assert_eq!(s.items.len(), 30);
        let ids: std::collections::HashSet<_> = s.items.iter().map(|a| &a.method_id).collect();
        assert_eq!(ids.len(), 30);
        assert_eq!(s, session(1));
        assert_ne!(s.session_id, session(2).session_id);
    }

    #[test]
    fn small_pool_rejected() {
        assert!(matches!(
            create_session("p", &pool(10), &sources(), 0),
            Err(SurveyError::PoolTooSmall { have: 10, need: 30 })
        ));
    }

    #[test]
    fn validation() {
        let s = session(3);
        let mut store = SurveyStore::in_memory();
        store.add_session(s.clone()).unwrap();
        let mut bad = response(&s, 1, 60.0);
        bad.likert[1] = 0;
        assert!(matches!(store.record_response(bad), Err(SurveyError::InvalidLikert(0))));
        let mut bad = response(&s, 1, 60.0);
        bad.rationale = "  ".into();
        assert!(matches!(store.record_response(bad), Err(SurveyError::MissingRationale)));
        store.record_response(response(&s, 1, 60.0)).unwrap();
        assert!(matches!(store.record_response(response(&s, 1, 60.0)), Err(SurveyError::Duplicate(1))));
        let mut out_of_range = response(&s, 2, 60.0);
        out_of_range.item = 31;
        assert!(matches!(store.record_response(out_of_range), Err(SurveyError::UnknownItem(31))));
    }

    #[test]
    fn two_page_flow() {
        let s = session(4);
        let mut store = SurveyStore::in_memory();
        store.add_session(s.clone()).unwrap();
        let id = &s.session_id;
        assert!(matches!(store.record_page_two(id, 2, Choice::Second, "x", 1.0), Err(SurveyError::PageOrder(2))));
        store.record_page_one(id, 2, [4, 1, 1], 20.0).unwrap();
        assert_eq!(store.item_state(id, 2).unwrap(), ItemState::PageOneDone);
        assert!(matches!(store.record_page_one(id, 2, [4, 1, 1], 20.0), Err(SurveyError::Duplicate(2))));
        let r = store.record_page_two(id, 2, Choice::Undecided, "both fine", 15.0).unwrap();
        assert_eq!(r.seconds(), 35.0);
        assert_eq!(store.item_state(id, 2).unwrap(), ItemState::Done);
        assert!(matches!(store.record_page_one("nope", 1, [1, 1, 1], 1.0), Err(SurveyError::UnknownSession)));
    }

    #[test]
    fn log_survives_restart_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let s = session(5);
        {
            let mut store = SurveyStore::open(&path).unwrap();
            store.add_session(s.clone()).unwrap();
            store.record_response(response(&s, 1, 80.0)).unwrap();
            store.record_page_one(&s.session_id, 2, [2, 2, 2], 10.0).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event\":\"respo").unwrap();
        drop(f);
        let mut store = SurveyStore::open(&path).unwrap();
        assert_eq!(store.responses(), vec![response(&s, 1, 80.0)]);
        assert_eq!(store.item_state(&s.session_id, 2).unwrap(), ItemState::PageOneDone);
        store.record_page_two(&s.session_id, 2, Choice::Second, "more complete", 5.0).unwrap();
        store.compact().unwrap();
        let again = SurveyStore::open(&path).unwrap();
        assert_eq!(again.responses(), store.responses());
        assert_eq!(again.sessions().count(), 1);
    }

    #[test]
    fn export_import_identity() {
        let mut store = SurveyStore::in_memory();
        let mut buf = Vec::new();
        store.export(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1);
        assert!(import_responses(buf.as_slice()).unwrap().is_empty());

        for seed in [7, 8] {
            let s = session(seed);
            store.add_session(s.clone()).unwrap();
            for item in [3, 1, 2] {
                store.record_response(response(&s, item, 40.0 + item as f64)).unwrap();
            }
        }
        let mut buf = Vec::new();
        store.export(&mut buf).unwrap();
        let back = import_responses(buf.as_slice()).unwrap();
        assert_eq!(back, store.responses());
        let keys: Vec<_> = back.iter().map(|r| (r.session_id.clone(), r.item)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn import_rejects_bad_files() {
        assert!(import_responses("".as_bytes()).is_err());
        assert!(import_responses("{\"format\":\"other\",\"version\":1,\"count\":0}\n".as_bytes()).is_err());
        assert!(import_responses("{\"format\":\"distill-survey-export\",\"version\":1,\"count\":2}\n".as_bytes()).is_err());
    }

    #[test]
    fn low_effort() {
        let a = session(10);
        let b = session(11);
        let mut rs: Vec<SurveyResponse> = (1..=30).map(|i| response(&a, i, 25.0)).collect();
        rs.extend((1..=30).map(|i| response(&b, i, 120.0)));
        assert_eq!(flag_low_effort(&rs, LOW_EFFORT_SECONDS).unwrap(), vec![a.session_id.clone()]);
        assert!(flag_low_effort(&[], 30.0).unwrap().is_empty());
        assert!(flag_low_effort(&rs, 0.0).is_err());
    }

    #[test]
    fn pool_requires_both_sources() {
        let item = PoolItem {
            method_id: "m".into(),
            code: "int f();".into(),
            summaries: [("reference".to_string(), "r".to_string())].into(),
        };
        assert!(StudyPool::new(sources(), vec![item]).is_err());
    }
}
