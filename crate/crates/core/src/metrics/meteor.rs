use std::collections::HashMap;

use serde::Serialize;

use super::porter::porter_stem;
use super::MetricsError;

/// Lowercased maximal runs of alphanumeric characters; punctuation and
/// whitespace separate tokens and are dropped.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Fragmentation penalty `gamma·(chunks/matches)^beta`; the harmonic mean
/// weights are fixed at `F = 10PR/(R+9P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeteorParams {
    pub gamma: f64,
    pub beta: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self { gamma: 0.5, beta: 3.0 }
    }
}

impl MeteorParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if (0.0..=1.0).contains(&self.gamma) && self.beta > 0.0 && self.beta.is_finite() {
            Ok(())
        } else {
            Err(MetricsError::InvalidParams(format!("gamma {} beta {}", self.gamma, self.beta)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Longest sentence aligned by exhaustive search; longer inputs use the
/// greedy aligner.
pub const EXACT_SEARCH_LIMIT: usize = 20;
const NODE_BUDGET: u64 = 2_000_000;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Exact,
    Stem,
}

struct Problem {
    /// Per candidate position: `(reference position, kind)` options.
    options: Vec<Vec<(usize, Kind)>>,
    exact_target: usize,
    stem_target: usize,
    n_ref: usize,
}

fn max_matches(cand: &[&str], refs: &[&str]) -> usize {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for w in cand {
        counts.entry(w).or_default().0 += 1;
    }
    for w in refs {
        counts.entry(w).or_default().1 += 1;
    }
    counts.values().map(|(a, b)| a.min(b)).sum()
}

/// Words left after removing exact matches, as multisets.
fn leftovers<'a>(cand: &[&'a str], refs: &[&'a str]) -> (Vec<&'a str>, Vec<&'a str>) {
    let mut rc: HashMap<&str, usize> = HashMap::new();
    for w in refs {
        *rc.entry(w).or_default() += 1;
    }
    let mut cc: HashMap<&str, usize> = HashMap::new();
    for w in cand {
        *cc.entry(w).or_default() += 1;
    }
    let mut left_c = Vec::new();
    let mut used: HashMap<&str, usize> = HashMap::new();
    for w in cand {
        let u = used.entry(w).or_default();
        if *u < rc.get(w).copied().unwrap_or(0) {
            *u += 1;
        } else {
            left_c.push(*w);
        }
    }
    let mut used: HashMap<&str, usize> = HashMap::new();
    let mut left_r = Vec::new();
    for w in refs {
        let u = used.entry(w).or_default();
        if *u < cc.get(w).copied().unwrap_or(0) {
            *u += 1;
        } else {
            left_r.push(*w);
        }
    }
    (left_c, left_r)
}

fn chunks_of(pairs: &[Option<usize>]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for p in pairs {
        match (*p, prev) {
            (Some(j), Some(pj)) if j == pj + 1 => {}
            (Some(_), _) => chunks += 1,
            _ => {}
        }
        prev = *p;
    }
    chunks
}

struct Search<'p> {
    p: &'p Problem,
    used: Vec<bool>,
    pairs: Vec<Option<usize>>,
    best: Option<(usize, Vec<Option<usize>>)>,
    nodes: u64,
    /// Suffix sums of positions that have any exact / any option.
    exact_avail: Vec<usize>,
    any_avail: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, i: usize, exact: usize, stem: usize, chunks: usize) {
        self.nodes += 1;
        if self.nodes > NODE_BUDGET && self.best.is_some() {
            return;
        }
        if let Some((b, _)) = &self.best {
            if chunks >= *b {
                return;
            }
        }
        let p = self.p;
        if exact + self.exact_avail[i] < p.exact_target
            || exact + stem + self.any_avail[i] < p.exact_target + p.stem_target
        {
            return;
        }
        if i == p.options.len() {
            if exact == p.exact_target && stem == p.stem_target {
                self.best = Some((chunks, self.pairs.clone()));
            }
            return;
        }
        let prev = if i > 0 { self.pairs[i - 1] } else { None };
        // try continuing the current chunk first
        let mut order: Vec<(usize, Kind)> = p.options[i].clone();
        order.sort_by_key(|&(j, _)| (Some(j) != prev.map(|x| x + 1), j));
        for (j, kind) in order {
            if self.used[j] {
                continue;
            }
            let (e, s) = match kind {
                Kind::Exact => (exact + 1, stem),
                Kind::Stem => (exact, stem + 1),
            };
            if e > p.exact_target || s > p.stem_target {
                continue;
            }
            let new_chunk = usize::from(prev.map(|x| x + 1) != Some(j));
            self.used[j] = true;
            self.pairs[i] = Some(j);
            self.run(i + 1, e, s, chunks + new_chunk);
            self.used[j] = false;
            self.pairs[i] = None;
        }
        self.run(i + 1, exact, stem, chunks);
    }
}

fn greedy(p: &Problem) -> Vec<Option<usize>> {
    let mut used = vec![false; p.n_ref];
    let mut pairs: Vec<Option<usize>> = vec![None; p.options.len()];
    for stage in [Kind::Exact, Kind::Stem] {
        let mut budget = match stage {
            Kind::Exact => p.exact_target,
            Kind::Stem => p.stem_target,
        };
        for i in 0..p.options.len() {
            if budget == 0 || pairs[i].is_some() {
                continue;
            }
            let prev = if i > 0 { pairs[i - 1] } else { None };
            let pick = p.options[i]
                .iter()
                .filter(|&&(j, k)| k == stage && !used[j])
                .min_by_key(|&&(j, _)| (Some(j) != prev.map(|x| x + 1), j));
            if let Some(&(j, _)) = pick {
                used[j] = true;
                pairs[i] = Some(j);
                budget -= 1;
            }
        }
    }
    pairs
}

/// Exact-then-stem unigram alignment with the fewest chunks among those
/// with the most matches.
pub fn align_unigrams(candidate: &[String], reference: &[String]) -> Alignment {
    let c: Vec<&str> = candidate.iter().map(String::as_str).collect();
    let r: Vec<&str> = reference.iter().map(String::as_str).collect();
    let exact_target = max_matches(&c, &r);
    let (lc, lr) = leftovers(&c, &r);
    let lc_stems: Vec<String> = lc.iter().map(|w| porter_stem(w)).collect();
    let lr_stems: Vec<String> = lr.iter().map(|w| porter_stem(w)).collect();
    let stem_target = max_matches(
        &lc_stems.iter().map(String::as_str).collect::<Vec<_>>(),
        &lr_stems.iter().map(String::as_str).collect::<Vec<_>>(),
    );

    let c_stems: Vec<String> = c.iter().map(|w| porter_stem(w)).collect();
    let r_stems: Vec<String> = r.iter().map(|w| porter_stem(w)).collect();
    let options: Vec<Vec<(usize, Kind)>> = (0..c.len())
        .map(|i| {
            (0..r.len())
                .filter_map(|j| {
                    if c[i] == r[j] {
                        Some((j, Kind::Exact))
                    } else if c_stems[i] == r_stems[j] {
                        Some((j, Kind::Stem))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let problem = Problem {
        options,
        exact_target,
        stem_target,
        n_ref: r.len(),
    };

    let matches = exact_target + stem_target;
    let pairs = if matches == 0 {
        vec![None; c.len()]
    } else if c.len().max(r.len()) <= EXACT_SEARCH_LIMIT {
        let suffix = |f: &dyn Fn(&Vec<(usize, Kind)>) -> bool| {
            let mut v = vec![0; problem.options.len() + 1];
            for i in (0..problem.options.len()).rev() {
                v[i] = v[i + 1] + usize::from(f(&problem.options[i]));
            }
            v
        };
        let exact_avail = suffix(&|o| o.iter().any(|&(_, k)| k == Kind::Exact));
        let any_avail = suffix(&|o| !o.is_empty());
        let mut s = Search {
            p: &problem,
            used: vec![false; r.len()],
            pairs: vec![None; c.len()],
            best: None,
            nodes: 0,
            exact_avail,
            any_avail,
        };
        s.run(0, 0, 0, 0);
        s.best.map(|(_, p)| p).unwrap_or_else(|| greedy(&problem))
    } else {
        greedy(&problem)
    };

    let chunks = chunks_of(&pairs);
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Alignment {
        matches,
        chunks,
        precision: ratio(matches, c.len()),
        recall: ratio(matches, r.len()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeteorScore {
    pub score: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub alignment: Alignment,
}

pub fn meteor_with(candidate: &str, reference: &str, params: MeteorParams) -> MeteorScore {
    let a = align_unigrams(&metric_tokens(candidate), &metric_tokens(reference));
    if a.matches == 0 {
        return MeteorScore {
            score: 0.0,
            fmean: 0.0,
            penalty: 0.0,
            alignment: a,
        };
    }
    let (p, r) = (a.precision, a.recall);
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = params.gamma * (a.chunks as f64 / a.matches as f64).powf(params.beta);
    MeteorScore {
        score: fmean * (1.0 - penalty),
        fmean,
        penalty,
        alignment: a,
    }
}

/// METEOR of `candidate` against a single `reference`, in `[0, 1]`.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    meteor_with(candidate, reference, MeteorParams::default()).score
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        metric_tokens(s)
    }

    #[test]
    fn identical_pair_is_one_chunk() {
        let a = align_unigrams(&toks("returns one"), &toks("returns one"));
        assert_eq!((a.matches, a.chunks), (2, 1));
        assert_eq!((a.precision, a.recall), (1.0, 1.0));
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let a = align_unigrams(&toks("running"), &toks("runs"));
        assert_eq!(a.matches, 1);
    }

    #[test]
    fn disjoint_has_no_matches() {
        let a = align_unigrams(&toks("alpha beta"), &toks("gamma delta"));
        assert_eq!(a.matches, 0);
        assert_eq!(meteor("alpha beta", "gamma delta"), 0.0);
    }

    #[test]
    fn hand_evaluated_scores() {
        assert!((meteor("word", "word") - 0.5).abs() < 1e-12);
        assert!((meteor("two words", "two words") - 0.9375).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_score_zero() {
        assert_eq!(meteor("", ""), 0.0);
        assert_eq!(meteor("a", ""), 0.0);
    }

    #[test]
    fn case_and_punctuation_are_ignored() {
        assert_eq!(meteor("Returns the User.", "returns the user"), meteor("returns the user", "returns the user"));
    }

    #[test]
    fn alignment_prefers_fewer_chunks() {
        // "the" occurs twice in the reference; pairing with the second keeps one chunk
        let a = align_unigrams(&toks("the cat sat"), &toks("the dog saw the cat sat"));
        assert_eq!((a.matches, a.chunks), (3, 1));
    }

    #[test]
    fn swapped_order_costs_chunks() {
        // 4 matches in 2 chunks: P = R = 1, penalty 0.5·(2/4)³
        let s = meteor_with("c d a b", "a b c d", MeteorParams::default());
        assert_eq!(s.alignment.chunks, 2);
        assert!((s.score - (1.0 - 0.5 * 0.125)).abs() < 1e-12);
    }

    #[test]
    fn hand_worked_partial_match() {
        // candidate "gets the user name", reference "returns the name of the user"
        // exact: the, user, name → m=3; P=3/4, R=3/6
        // best alignment: the→the(0|4) user→user(5) name→name(2): "the user" can
        // chunk with reference positions 4,5, so ch=2
        let s = meteor_with("gets the user name", "returns the name of the user", MeteorParams::default());
        assert_eq!((s.alignment.matches, s.alignment.chunks), (3, 2));
        let (p, r) = (0.75, 0.5);
        let f = 10.0 * p * r / (r + 9.0 * p);
        let expect = f * (1.0 - 0.5 * (2.0f64 / 3.0).powi(3));
        assert!((s.score - expect).abs() < 1e-12);
    }

    #[test]
    fn long_sentences_use_greedy_path() {
        let long = (0..30).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let s = meteor_with(&long, &long, MeteorParams::default());
        assert_eq!(s.alignment.chunks, 1);
    }

    #[test]
    fn params_validate() {
        assert!(MeteorParams::default().validate().is_ok());
        assert!(MeteorParams { gamma: 1.5, beta: 3.0 }.validate().is_err());
        assert!(MeteorParams { gamma: 0.5, beta: 0.0 }.validate().is_err());
    }
}
