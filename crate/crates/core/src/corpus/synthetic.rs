//! Seeded generator of small Java methods for desk-scale runs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CodeSample;

const NOUNS: &[&str] = &[
    "user", "name", "count", "order", "item", "price", "total", "index", "value", "file", "path",
    "size", "node", "child", "parent", "buffer", "message", "event", "color", "width", "height",
    "status", "level", "score", "account", "balance", "date", "number", "text", "config", "cache",
    "record", "entry", "page", "query", "result", "token", "session", "port", "host", "rate",
    "limit", "line", "column", "row", "field", "owner", "group",
];

const VERBS: &[&str] = &[
    "compute", "find", "load", "update", "remove", "check", "build", "parse", "format", "create",
    "reset", "count", "merge", "apply", "validate", "convert",
];

const TYPES: &[&str] = &["int", "long", "double", "boolean", "String", "float"];

fn cap(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("nonempty word list")
}

fn two_nouns(rng: &mut ChaCha8Rng) -> (&'static str, &'static str) {
    let a = pick(rng, NOUNS);
    loop {
        let b = pick(rng, NOUNS);
        if b != a {
            return (a, b);
        }
    }
}

fn method(rng: &mut ChaCha8Rng) -> String {
    let t = pick(rng, TYPES);
    match rng.random_range(0..6) {
        0 => {
            let (a, b) = two_nouns(rng);
            format!(
                "public {t} get{A}{B}() {{\n    return this.{a}{B};\n}}",
                A = cap(a),
                B = cap(b)
            )
        }
        1 => {
            let (a, b) = two_nouns(rng);
            format!(
                "public void set{A}{B}({t} {b}) {{\n    this.{a}{B} = {b};\n}}",
                A = cap(a),
                B = cap(b)
            )
        }
        2 => {
            let v = pick(rng, VERBS);
            let (a, b) = two_nouns(rng);
            let c = pick(rng, NOUNS);
            format!(
                "public {t} {v}{A}({t} {b}, {t} {c}) {{\n    return {b} + {c};\n}}",
                A = cap(a)
            )
        }
        3 => {
            let v = pick(rng, VERBS);
            let (a, b) = two_nouns(rng);
            format!(
                "public boolean {v}{A}(String {b}) {{\n    if ({b} == null) {{\n        return false;\n    }}\n    return {a}s.contains({b});\n}}",
                A = cap(a)
            )
        }
        4 => {
            let v = pick(rng, VERBS);
            let (a, b) = two_nouns(rng);
            format!(
                "private int {v}{A}{B}(int[] {a}s) {{\n    int {b} = 0;\n    for (int i = 0; i < {a}s.length; i++) {{\n        {b} += {a}s[i];\n    }}\n    return {b};\n}}",
                A = cap(a),
                B = cap(b)
            )
        }
        _ => {
            let v = pick(rng, VERBS);
            let (a, b) = two_nouns(rng);
            format!(
                "public void {v}{A}() {{\n    {b}.clear();\n    {a}Count = 0;\n}}",
                A = cap(a)
            )
        }
    }
}

/// `n` distinct Java methods with ids `syn-0..n`, spread over eight
/// project ids. No summaries are attached.
pub fn synthetic_java_corpus(n: usize, seed: u64) -> Vec<CodeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let code = method(&mut rng);
        if !seen.insert(code.clone()) {
            continue;
        }
        let mut s = CodeSample::new(format!("syn-{}", out.len()), code);
        s.project = Some(format!("proj{}", out.len() % 8));
        out.push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        let a = synthetic_java_corpus(300, 5);
        assert_eq!(a, synthetic_java_corpus(300, 5));
        let codes: std::collections::HashSet<&str> = a.iter().map(|s| s.code.as_str()).collect();
        assert_eq!(codes.len(), 300);
        assert_ne!(a, synthetic_java_corpus(300, 6));
    }
}
