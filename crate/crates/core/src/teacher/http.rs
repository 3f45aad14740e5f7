use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Teacher, TeacherError};

/// Connection settings for a chat-completion style endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherClient {
    pub endpoint: String,
    pub model: String,
    /// Bearer token; omitted from the request when empty.
    #[serde(default, skip_serializing)]
    pub api_key: String,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    /// JSON pointer to the summary text in the response body.
    #[serde(default = "default_pointer")]
    pub response_pointer: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_parallel() -> usize {
    4
}

fn default_pointer() -> String {
    "/choices/0/message/content".into()
}

fn default_timeout() -> u64 {
    60
}

impl TeacherClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: String::new(),
            max_parallel: default_parallel(),
            response_pointer: default_pointer(),
            timeout_secs: default_timeout(),
        }
    }
}

/// Sends the prompt as a single user message. Sampling settings are left
/// to the provider's defaults.
pub struct HttpTeacher {
    client: TeacherClient,
    agent: ureq::Agent,
}

impl HttpTeacher {
    pub fn new(client: TeacherClient) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(client.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { client, agent }
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.client.model,
            "messages": [{"role": "user", "content": prompt}],
        })
    }
}

impl Teacher for HttpTeacher {
    fn model_name(&self) -> &str {
        &self.client.model
    }

    fn complete(&self, prompt: &str) -> Result<String, TeacherError> {
        let mut req = self.agent.post(&self.client.endpoint);
        if !self.client.api_key.is_empty() {
            req = req.header("Authorization", &format!("Bearer {}", self.client.api_key));
        }
        let mut resp = req
            .send_json(self.request_body(prompt))
            .map_err(|e| TeacherError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 {
            return Err(TeacherError::RateLimited);
        }
        if status >= 500 {
            return Err(TeacherError::Transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(TeacherError::Rejected(format!("HTTP {status}: {body}")));
        }
        let body: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| TeacherError::BadResponse(e.to_string()))?;
        body.pointer(&self.client.response_pointer)
            .and_then(serde_json::Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| TeacherError::BadResponse(format!("no string at {}", self.client.response_pointer)))
    }
}
