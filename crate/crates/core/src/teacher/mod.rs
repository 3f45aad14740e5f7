//! Teacher summaries: prompt, clients, cache and the bounded harvest loop.

mod cache;
mod harvest;
mod http;
mod mock;

use thiserror::Error;

pub use crate::corpus::is_valid_summary;
pub use cache::{CacheEntry, HarvestCache};
pub use harvest::{harvest, HarvestOptions, HarvestReport, RetryPolicy};
pub use http::{HttpTeacher, TeacherClient};
pub use mock::{mock_summary, split_identifier, MockTeacher};

pub const TEACHER_INSTRUCTION: &str = "Write a one sentence description of this Java method:";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TeacherError {
    #[error("cannot build a prompt for empty code")]
    EmptyCode,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited,
    #[error("teacher rejected the request: {0}")]
    Rejected(String),
    #[error("unexpected teacher response: {0}")]
    BadResponse(String),
}

impl TeacherError {
    /// Transport failures and rate limits are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        matches!(self, TeacherError::Transport(_) | TeacherError::RateLimited)
    }
}

/// The instruction line, a newline, then the code byte-for-byte.
pub fn build_teacher_prompt(code: &str) -> Result<String, TeacherError> {
    if code.is_empty() {
        return Err(TeacherError::EmptyCode);
    }
    Ok(format!("{TEACHER_INSTRUCTION}\n{code}"))
}

/// A source of summaries. Implementations must tolerate concurrent calls.
pub trait Teacher: Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, TeacherError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_is_verbatim() {
        assert_eq!(
            build_teacher_prompt("int f(){return 1;}").unwrap(),
            "Write a one sentence description of this Java method:\nint f(){return 1;}"
        );
    }

    #[test]
    fn trailing_newline_survives() {
        let p = build_teacher_prompt("void g() {}\n").unwrap();
        assert!(p.ends_with("void g() {}\n"));
    }

    #[test]
    fn empty_code_rejected() {
        assert_eq!(build_teacher_prompt(""), Err(TeacherError::EmptyCode));
    }
}
