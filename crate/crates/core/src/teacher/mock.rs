use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;

use super::{Teacher, TeacherError, TEACHER_INSTRUCTION};

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long", "native",
    "new", "package", "private", "protected", "public", "return", "short", "static", "strictfp",
    "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try", "void",
    "volatile", "while", "true", "false", "null", "var",
];

const MAX_WORDS: usize = 8;

fn identifier_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z_$][A-Za-z0-9_$]*").expect("static pattern"))
}

fn literal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?s)"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*'|//[^\n]*|/\*.*?\*/"#).expect("static pattern")
    })
}

/// Lowercased camelCase / snake_case / digit-boundary pieces.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let chars: Vec<char> = ident.chars().collect();
    let mut words = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_alphanumeric() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        let boundary = match prev {
            Some(p) if p.is_ascii_alphanumeric() => {
                (c.is_ascii_uppercase() && p.is_ascii_lowercase())
                    || (c.is_ascii_uppercase()
                        && p.is_ascii_uppercase()
                        && next.is_some_and(|n| n.is_ascii_lowercase()))
                    || (c.is_ascii_digit() != p.is_ascii_digit())
            }
            _ => false,
        };
        if boundary && !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
        cur.push(c.to_ascii_lowercase());
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Template summary over the method's identifiers: a verb chosen by the
/// first word of the method name (`get` → "gets", `set` → "sets", otherwise
/// "returns"), then up to eight distinct identifier words in order of
/// appearance. Literals, comments and Java keywords are ignored.
pub fn mock_summary(code: &str) -> String {
    let stripped = literal_re().replace_all(code, " ");
    let paren = stripped.find('(').unwrap_or(stripped.len());
    let method = identifier_re().find_iter(&stripped[..paren]).last().map(|m| m.as_str());
    let lead = method.and_then(|m| split_identifier(m).into_iter().next());
    let verb = match lead.as_deref() {
        Some("get") => "gets",
        Some("set") => "sets",
        _ => "returns",
    };
    let mut seen = HashSet::new();
    let mut words = Vec::new();
    let mut skip_lead = matches!(verb, "gets" | "sets");
    for m in identifier_re().find_iter(&stripped) {
        if JAVA_KEYWORDS.contains(&m.as_str()) {
            continue;
        }
        let is_method = Some(m.as_str()) == method;
        for (i, w) in split_identifier(m.as_str()).into_iter().enumerate() {
            if is_method && i == 0 && skip_lead {
                skip_lead = false;
                continue;
            }
            if words.len() < MAX_WORDS && seen.insert(w.clone()) {
                words.push(w);
            }
        }
    }
    let mut out = verb.to_string();
    for w in words {
        out.push(' ');
        out.push_str(&w);
    }
    out
}

/// In-process teacher computing [`mock_summary`] of the prompt's code.
/// Optional fault injection and instrumentation support harvest tests.
#[derive(Default)]
pub struct MockTeacher {
    name: String,
    fail_codes: HashSet<String>,
    transient: Mutex<std::collections::HashMap<String, usize>>,
    latency: Option<Duration>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl MockTeacher {
    pub fn new() -> Self {
        Self {
            name: "mock-teacher".into(),
            ..Default::default()
        }
    }

    /// Every call for these codes fails with a retryable error.
    pub fn failing_on(mut self, codes: impl IntoIterator<Item = String>) -> Self {
        self.fail_codes = codes.into_iter().collect();
        self
    }

    /// The first `times` calls for `code` are rate limited.
    pub fn rate_limited(self, code: &str, times: usize) -> Self {
        self.transient.lock().expect("fresh mutex").insert(code.to_string(), times);
        self
    }

    pub fn with_latency(mut self, d: Duration) -> Self {
        self.latency = Some(d);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Teacher for MockTeacher {
    fn model_name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, TeacherError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if let Some(d) = self.latency {
            std::thread::sleep(d);
        }
        let code = prompt
            .strip_prefix(TEACHER_INSTRUCTION)
            .and_then(|r| r.strip_prefix('\n'))
            .unwrap_or(prompt);
        let result = if self.fail_codes.contains(code) {
            Err(TeacherError::Transport("injected failure".into()))
        } else {
            let mut transient = self.transient.lock().expect("mock mutex");
            match transient.get_mut(code) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    Err(TeacherError::RateLimited)
                }
                _ => Ok(mock_summary(code)),
            }
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_identifiers() {
        assert_eq!(split_identifier("getUserCount"), ["get", "user", "count"]);
        assert_eq!(split_identifier("HTTPServer2go"), ["http", "server", "2", "go"]);
        assert_eq!(split_identifier("max_value"), ["max", "value"]);
    }

    #[test]
    fn getter_summary() {
        let code = "public int getUserCount() {\n    return this.userCount;\n}";
        assert_eq!(mock_summary(code), "gets user count");
    }

    #[test]
    fn setter_summary() {
        let code = "public void setName(String name) { this.name = name; }";
        assert_eq!(mock_summary(code), "sets name string");
    }

    #[test]
    fn other_verbs_return() {
        let code = "int f(){return 1;}";
        assert_eq!(mock_summary(code), "returns f");
        let code = "public double computeTotalPrice(double unitPrice, int quantity) { return unitPrice * quantity; }";
        assert_eq!(mock_summary(code), "returns compute total price unit quantity");
    }

    #[test]
    fn caps_at_eight_words_and_skips_literals() {
        let code = "void run() { alpha(); beta(); gamma(); delta(); epsilon(); zeta(); eta(); theta(); iota(); log(\"kappa\"); }";
        let s = mock_summary(code);
        assert_eq!(s, "returns run alpha beta gamma delta epsilon zeta eta");
        assert!(!s.contains("kappa"));
    }

    #[test]
    fn deterministic() {
        let code = "private int countLines(String text) { return text.split(\"\\n\").length; }";
        assert_eq!(mock_summary(code), mock_summary(code));
    }

    #[test]
    fn teacher_answers_from_prompt() {
        let t = MockTeacher::new();
        let p = super::super::build_teacher_prompt("public int getUserCount() { return n; }").unwrap();
        assert_eq!(t.complete(&p).unwrap(), "gets user count n");
        assert_eq!(t.calls(), 1);
    }

    #[test]
    fn injected_faults() {
        let t = MockTeacher::new().failing_on(["bad()".to_string()]).rate_limited("slow()", 1);
        assert!(t.complete("bad()").is_err());
        assert_eq!(t.complete("slow()"), Err(TeacherError::RateLimited));
        assert_eq!(t.complete("slow()").unwrap(), "returns slow");
    }
}
