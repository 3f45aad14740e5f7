//! Human-study arithmetic: rank tests, Likert descriptives, preference
//! tallies, agreement between repeated studies and survey sizing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("rating {0} outside 1..=4")]
    OutOfRange(i64),
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("precision must lie in [0, 1), got {0}")]
    InvalidPrecision(f64),
    #[error("population must be at least 1")]
    InvalidPopulation,
}

/// One-tailed 5% critical value of the standard normal.
pub const Z_CRIT: f64 = 1.645;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    Accurate,
    Complete,
    Concise,
}

impl Question {
    pub const ALL: [Question; 3] = [Question::Accurate, Question::Complete, Question::Concise];

    /// Survey wording makes low scores favourable for these.
    pub fn lower_is_better(self) -> bool {
        !matches!(self, Question::Accurate)
    }

    pub fn label(self) -> &'static str {
        match self {
            Question::Accurate => "accurate",
            Question::Complete => "complete",
            Question::Concise => "concise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MwResult {
    /// U of the first sample.
    pub u: f64,
    pub z: f64,
    /// Normal-approximation tail probability beyond |z|.
    pub p: f64,
    pub n1: usize,
    pub n2: usize,
    /// Tie-corrected standard deviation of U.
    pub sigma: f64,
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney U with midranks and the tie-corrected normal approximation.
/// `z < 0` means `a` tends to rank below `b`. When every value is tied the
/// variance is zero and the result is `z = 0`, `p = 0.5`.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MwResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let (f1, f2) = (n1 as f64, n2 as f64);
    let u = r1 - f1 * (f1 + 1.0) / 2.0;
    let n = f1 + f2;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let sigma = var.max(0.0).sqrt();
    let z = if sigma > 0.0 { (u - f1 * f2 / 2.0) / sigma } else { 0.0 };
    let normal = Normal::standard();
    let p = normal.cdf(-z.abs());
    Ok(MwResult { u, z, p, n1, n2, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LikertSummary {
    pub median: f64,
    pub mean: f64,
    pub n: usize,
}

pub fn likert_summary(ratings: &[i64]) -> Result<LikertSummary, StatsError> {
    if ratings.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&r) = ratings.iter().find(|r| !(1..=4).contains(*r)) {
        return Err(StatsError::OutOfRange(r));
    }
    let mut s = ratings.to_vec();
    s.sort_unstable();
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
    };
    let mean = s.iter().sum::<i64>() as f64 / n as f64;
    Ok(LikertSummary { median, mean, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
    Undecided,
}

/// A comparison answer with the sources shown in each position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceAnswer {
    pub choice: Choice,
    pub first_source: String,
    pub second_source: String,
}

impl PreferenceAnswer {
    pub fn preferred_source(&self) -> Option<&str> {
        match self.choice {
            Choice::First => Some(&self.first_source),
            Choice::Second => Some(&self.second_source),
            Choice::Undecided => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreferenceTally {
    /// Source label → wins.
    pub counts: BTreeMap<String, usize>,
    pub undecided: usize,
    pub total: usize,
}

impl PreferenceTally {
    pub fn percent(&self, source: &str) -> f64 {
        100.0 * self.counts.get(source).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn undecided_percent(&self) -> f64 {
        100.0 * self.undecided as f64 / self.total as f64
    }
}

pub fn preference_tally(answers: &[PreferenceAnswer]) -> Result<PreferenceTally, StatsError> {
    if answers.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut counts = BTreeMap::new();
    let mut undecided = 0;
    for a in answers {
        counts.entry(a.first_source.clone()).or_insert(0);
        counts.entry(a.second_source.clone()).or_insert(0);
        match a.preferred_source() {
            Some(s) => *counts.get_mut(s).expect("inserted above") += 1,
            None => undecided += 1,
        }
    }
    Ok(PreferenceTally {
        counts,
        undecided,
        total: answers.len(),
    })
}

/// Fraction of ids whose preferred source agrees across two studies.
/// `None` stands for undecided and agrees only with `None`.
pub fn convergence_rate(
    study1: &BTreeMap<String, Option<String>>,
    study2: &BTreeMap<String, Option<String>>,
) -> Result<f64, StatsError> {
    if let Some(id) = study1.keys().chain(study2.keys()).find(|k| !(study1.contains_key(*k) && study2.contains_key(*k))) {
        return Err(StatsError::IdMismatch(id.clone()));
    }
    if study1.is_empty() {
        return Err(StatsError::Empty);
    }
    let same = study1.iter().filter(|(k, v)| study2[*k] == **v).count();
    Ok(same as f64 / study1.len() as f64)
}

/// Minimum sample `ceil(N / (1 + N·e²))` for population `N` at precision `e`.
pub fn sample_size(population: u64, precision: f64) -> Result<u64, StatsError> {
    if population == 0 {
        return Err(StatsError::InvalidPopulation);
    }
    if !(0.0..1.0).contains(&precision) {
        return Err(StatsError::InvalidPrecision(precision));
    }
    let n = population as f64;
    let raw = n / (1.0 + n * precision * precision);
    // guard against 285.99999 style rounding at exact integers
    let r = raw.round();
    Ok(if (raw - r).abs() < 1e-9 { r as u64 } else { raw.ceil() as u64 })
}

/// Ratings of one question from two sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRatings {
    pub question: Question,
    pub first: Vec<i64>,
    pub second: Vec<i64>,
}

/// Text table of medians, means and Mann-Whitney results per question,
/// first source vs second.
pub fn render_stats_table(first: &str, second: &str, rows: &[QuestionRatings]) -> Result<String, StatsError> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} | {:>5} {:>6} | {:>5} {:>6} | {:>7} {:>6} {:>6}",
        "", first, "", second, "", "", "", ""
    );
    let _ = writeln!(
        out,
        "{:<10} | {:>5} {:>6} | {:>5} {:>6} | {:>7} {:>6} {:>6}",
        "question", "med", "mean", "med", "mean", "Zobs", "Zcrit", "p"
    );
    for r in rows {
        let a = likert_summary(&r.first)?;
        let b = likert_summary(&r.second)?;
        let fa: Vec<f64> = r.first.iter().map(|&x| x as f64).collect();
        let fb: Vec<f64> = r.second.iter().map(|&x| x as f64).collect();
        let mw = mann_whitney(&fa, &fb)?;
        let crit = if mw.z < 0.0 { -Z_CRIT } else { Z_CRIT };
        let p = if mw.p < 0.01 { "<0.01".to_string() } else { format!("{:.3}", mw.p) };
        let note = if r.question.lower_is_better() { "  (lower is better)" } else { "" };
        let _ = writeln!(
            out,
            "{:<10} | {:>5} {:>6.3} | {:>5} {:>6.3} | {:>7.3} {:>6.3} {:>6}{}",
            r.question.label(),
            a.median,
            a.mean,
            b.median,
            b.mean,
            mw.z,
            crit,
            p,
            note
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_samples() {
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.z + 1.964).abs() < 1e-3, "{}", r.z);
        assert!((r.p - 0.0248).abs() < 1e-4, "{}", r.p);
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 3.0, 2.0, 4.0];
        let r = mann_whitney(&a, &a).unwrap();
        assert_eq!(r.z, 0.0);
        assert_eq!(r.p, 0.5);
    }

    #[test]
    fn antisymmetric() {
        let a = [1.0, 2.0, 2.0, 4.0, 3.0];
        let b = [3.0, 3.0, 4.0, 4.0];
        assert!((mann_whitney(&a, &b).unwrap().z + mann_whitney(&b, &a).unwrap().z).abs() < 1e-12);
    }

    #[test]
    fn all_tied() {
        let r = mann_whitney(&[2.0, 2.0], &[2.0]).unwrap();
        assert_eq!((r.z, r.p), (0.0, 0.5));
        assert_eq!(mann_whitney(&[], &[1.0]), Err(StatsError::Empty));
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), [1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn likert() {
        let s = likert_summary(&[3, 3, 4]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(format!("{:.2}", s.mean), "3.33");
        let s = likert_summary(&[4, 4, 4, 4]).unwrap();
        assert_eq!((s.median, format!("{:.2}", s.mean).as_str()), (4.0, "4.00"));
        assert_eq!(likert_summary(&[1, 2]).unwrap().median, 1.5);
        assert_eq!(likert_summary(&[3, 5]), Err(StatsError::OutOfRange(5)));
        assert_eq!(likert_summary(&[]), Err(StatsError::Empty));
    }

    fn answers(gpt: usize, reference: usize, undecided: usize) -> Vec<PreferenceAnswer> {
        let mut v = Vec::new();
        let mk = |i: usize, choice_gpt: Option<bool>| {
            // alternate display order
            let (f, s) = if i % 2 == 0 { ("gpt", "reference") } else { ("reference", "gpt") };
            let choice = match choice_gpt {
                None => Choice::Undecided,
                Some(g) => {
                    if (f == "gpt") == g {
                        Choice::First
                    } else {
                        Choice::Second
                    }
                }
            };
            PreferenceAnswer {
                choice,
                first_source: f.into(),
                second_source: s.into(),
            }
        };
        for i in 0..gpt {
            v.push(mk(i, Some(true)));
        }
        for i in 0..reference {
            v.push(mk(i, Some(false)));
        }
        for i in 0..undecided {
            v.push(mk(i, None));
        }
        v
    }

    #[test]
    fn preference_percentages() {
        let t = preference_tally(&answers(360, 81, 9)).unwrap();
        assert!((t.percent("gpt") - 80.0).abs() < 1e-9);
        assert!((t.percent("reference") - 18.0).abs() < 1e-9);
        assert!((t.undecided_percent() - 2.0).abs() < 1e-9);
        let t = preference_tally(&answers(0, 0, 5)).unwrap();
        assert_eq!((t.percent("gpt"), t.percent("reference"), t.undecided_percent()), (0.0, 0.0, 100.0));
    }

    #[test]
    fn flipping_display_order_is_invisible() {
        let a = answers(7, 3, 1);
        let flipped: Vec<PreferenceAnswer> = a
            .iter()
            .map(|x| PreferenceAnswer {
                choice: match x.choice {
                    Choice::First => Choice::Second,
                    Choice::Second => Choice::First,
                    Choice::Undecided => Choice::Undecided,
                },
                first_source: x.second_source.clone(),
                second_source: x.first_source.clone(),
            })
            .collect();
        assert_eq!(preference_tally(&a).unwrap(), preference_tally(&flipped).unwrap());
    }

    fn study(v: &[Option<&str>]) -> BTreeMap<String, Option<String>> {
        v.iter().enumerate().map(|(i, s)| (format!("f{i}"), s.map(String::from))).collect()
    }

    #[test]
    fn convergence() {
        let a = study(&[Some("gpt"); 10]);
        assert_eq!(convergence_rate(&a, &a).unwrap(), 1.0);
        let b = study(&[Some("reference"); 10]);
        assert_eq!(convergence_rate(&a, &b).unwrap(), 0.0);
        let mut c = a.clone();
        for k in ["f0", "f1", "f2"] {
            c.insert(k.into(), Some("reference".into()));
        }
        assert!((convergence_rate(&a, &c).unwrap() - 0.7).abs() < 1e-12);
        let mut d = a.clone();
        d.remove("f3");
        assert_eq!(convergence_rate(&a, &d), Err(StatsError::IdMismatch("f3".into())));
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(sample_size(8000, 0.05).unwrap(), 381);
        assert_eq!(sample_size(1000, 0.05).unwrap(), 286);
        assert_eq!(sample_size(123, 0.0).unwrap(), 123);
        assert!(sample_size(10, 1.0).is_err());
        assert!(sample_size(10, -0.1).is_err());
        assert!(sample_size(0, 0.05).is_err());
    }

    #[test]
    fn stats_table_renders() {
        let rows = vec![QuestionRatings {
            question: Question::Complete,
            first: vec![1, 2, 2, 1],
            second: vec![3, 3, 2, 4],
        }];
        let t = render_stats_table("gpt", "ref", &rows).unwrap();
        assert!(t.contains("complete"));
        assert!(t.contains("lower is better"));
        assert!(t.contains("-1.645"));
    }
}
