use std::ops::Range;

use super::{CodeSample, CorpusError, SummaryField};

pub const CODE_MARKER: &str = "TDAT: ";
pub const COMMENT_MARKER: &str = "COM: ";
pub const END_MARKER: &str = "<|endoftext|>";

/// One fine-tuning record in the code-marker/comment-marker layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRecord {
    pub text: String,
    pub code_span: Range<usize>,
    pub summary_span: Range<usize>,
}

impl PromptRecord {
    pub fn code(&self) -> &str {
        &self.text[self.code_span.clone()]
    }

    pub fn summary(&self) -> &str {
        &self.text[self.summary_span.clone()]
    }
}

/// `TDAT: <code>\nCOM: <summary><|endoftext|>`, with newlines in the
/// summary flattened to spaces.
pub fn format_training_record(sample: &CodeSample, field: SummaryField) -> Result<PromptRecord, CorpusError> {
    let summary = sample.summary(field).ok_or_else(|| CorpusError::MissingSummary {
        id: sample.id.clone(),
        field,
    })?;
    if sample.code.contains(&format!("\n{COMMENT_MARKER}")) {
        return Err(CorpusError::AmbiguousCode { id: sample.id.clone() });
    }
    let summary = summary.replace("\r\n", " ").replace(['\n', '\r'], " ");
    let mut text = String::with_capacity(sample.code.len() + summary.len() + 32);
    text.push_str(CODE_MARKER);
    let code_start = text.len();
    text.push_str(&sample.code);
    let code_end = text.len();
    text.push('\n');
    text.push_str(COMMENT_MARKER);
    let summary_start = text.len();
    text.push_str(&summary);
    let summary_end = text.len();
    text.push_str(END_MARKER);
    Ok(PromptRecord {
        text,
        code_span: code_start..code_end,
        summary_span: summary_start..summary_end,
    })
}

/// Splits a record at its first line-initial comment marker. A trailing
/// end marker is removed from the summary.
pub fn parse_training_record(text: &str) -> Result<(String, String), CorpusError> {
    let Some(rest) = text.strip_prefix(CODE_MARKER) else {
        return Err(if text.starts_with(COMMENT_MARKER) {
            CorpusError::MissingCodeMarker
        } else if let Some(i) = text.find(CODE_MARKER.trim_end()) {
            if text[..i].contains(COMMENT_MARKER.trim_end()) {
                CorpusError::MarkersOutOfOrder
            } else {
                CorpusError::MissingCodeMarker
            }
        } else {
            CorpusError::MissingCodeMarker
        });
    };
    let sep = format!("\n{COMMENT_MARKER}");
    let i = rest.find(&sep).ok_or(CorpusError::MissingCommentMarker)?;
    let code = &rest[..i];
    let tail = &rest[i + sep.len()..];
    let summary = tail.strip_suffix(END_MARKER).unwrap_or(tail);
    Ok((code.to_string(), summary.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(code: &str, teacher: Option<&str>) -> CodeSample {
        let mut s = CodeSample::new("x", code);
        s.teacher = teacher.map(str::to_string);
        s
    }

    #[test]
    fn prompt_layout() {
        let r = format_training_record(&sample("int f(){return 1;}", Some("returns one")), SummaryField::Teacher)
            .unwrap();
        assert_eq!(r.text, "TDAT: int f(){return 1;}\nCOM: returns one<|endoftext|>");
        assert_eq!(r.code(), "int f(){return 1;}");
        assert_eq!(r.summary(), "returns one");
    }

    #[test]
    fn missing_summary_is_an_error() {
        assert!(matches!(
            format_training_record(&sample("x", None), SummaryField::Teacher),
            Err(CorpusError::MissingSummary { .. })
        ));
    }

    #[test]
    fn summary_newlines_are_flattened() {
        let r = format_training_record(&sample("x", Some("a\nb\r\nc")), SummaryField::Teacher).unwrap();
        assert_eq!(r.summary(), "a b c");
    }

    #[test]
    fn parse_minimal() {
        assert_eq!(
            parse_training_record("TDAT: x\nCOM: y<|endoftext|>").unwrap(),
            ("x".to_string(), "y".to_string())
        );
    }

    #[test]
    fn parse_without_code_marker() {
        assert!(matches!(parse_training_record("COM: y"), Err(CorpusError::MissingCodeMarker)));
        assert!(matches!(parse_training_record("TDAT: y"), Err(CorpusError::MissingCommentMarker)));
        assert!(matches!(
            parse_training_record("x\nCOM: y\nTDAT: z"),
            Err(CorpusError::MarkersOutOfOrder)
        ));
    }

    #[test]
    fn marker_inside_string_literal_stays_in_code() {
        let code = "String s = \"COM: not a marker\";\nreturn s;";
        let r = format_training_record(&sample(code, Some("returns s")), SummaryField::Teacher).unwrap();
        assert_eq!(
            parse_training_record(&r.text).unwrap(),
            (code.to_string(), "returns s".to_string())
        );
    }

    #[test]
    fn line_initial_marker_in_code_is_refused() {
        assert!(matches!(
            format_training_record(&sample("a\nCOM: b", Some("s")), SummaryField::Teacher),
            Err(CorpusError::AmbiguousCode { .. })
        ));
    }
}
