//! Answer-producing engines behind one blocking interface.
//!
//! Synthetic backends ([`ScriptedBackend`], [`OracleBackend`],
//! [`RandomValidBackend`]) never touch the network; [`HttpBackend`] talks to
//! a chat/completions-compatible server. [`CachedBackend`] and
//! [`AuditedBackend`] wrap any of them.

mod cache;
mod http;
mod oracle;
mod scripted;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{DistributionError, TokenDistribution, MAX_TOP_K};
use crate::prompting::RenderedPrompt;

pub use cache::{request_key, AuditedBackend, CachedBackend};
pub use http::{ApiStyle, HttpBackend, HttpConfig};
pub use oracle::{
    oracle_answer, random_valid_answer, OracleBackend, OracleMode, RandomValidBackend, TieBreak,
    NO_ANSWER,
};
pub use scripted::{Fixture, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: RenderedPrompt,
    pub temperature: f64,
    pub max_tokens: u32,
    /// 0 means no logprobs.
    pub want_top_logprobs: usize,
}

impl CompletionRequest {
    pub fn new(prompt: RenderedPrompt) -> Self {
        CompletionRequest {
            prompt,
            temperature: 0.0,
            max_tokens: 64,
            want_top_logprobs: 0,
        }
    }

    pub fn with_logprobs(mut self, k: usize) -> Self {
        self.want_top_logprobs = k;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.want_top_logprobs > MAX_TOP_K {
            return Err(BackendError::InvalidRequest(format!(
                "at most {MAX_TOP_K} logprobs, {} requested",
                self.want_top_logprobs
            )));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} out of range",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_position_top_logprobs: Option<TokenDistribution>,
    pub backend_id: String,
    #[serde(default)]
    pub cached: bool,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed (HTTP {0})")]
    Auth(u16),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("backend returned no logprobs although they were requested")]
    LogprobsUnsupported,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no fixture for query {0:?}")]
    NoFixture(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }
}

/// Run `requests` with at most `max_in_flight` concurrent calls. Results
/// come back in request order.
pub fn complete_all<B: Backend + ?Sized>(
    backend: &B,
    requests: &[CompletionRequest],
    max_in_flight: usize,
) -> Vec<Result<CompletionResponse, BackendError>> {
    let workers = max_in_flight.clamp(1, requests.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<CompletionResponse, BackendError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let r = backend.complete(req);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot poisoned")
                .expect("every request ran")
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::prompting::{Task, Variant};
    use crate::sequence::SequenceRecord;

    pub(crate) fn bare_prompt(query: &str) -> RenderedPrompt {
        RenderedPrompt {
            task: Task::Completion,
            variant: Variant::Plain,
            system: String::new(),
            demonstrations: Vec::new(),
            test_query: query.to_string(),
            target: SequenceRecord::decimal([1]),
            judged: None,
            choices: Vec::new(),
        }
    }

    struct Echo;

    impl Backend for Echo {
        fn id(&self) -> &str {
            "echo"
        }

        fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
            Ok(CompletionResponse {
                text: req.prompt.test_query.clone(),
                first_position_top_logprobs: None,
                backend_id: "echo".into(),
                cached: false,
            })
        }
    }

    #[test]
    fn bounded_runner_preserves_order() {
        let reqs: Vec<_> = (0..50)
            .map(|i| CompletionRequest::new(bare_prompt(&i.to_string())))
            .collect();
        let out = complete_all(&Echo, &reqs, 4);
        let texts: Vec<String> = out.into_iter().map(|r| r.unwrap().text).collect();
        let want: Vec<String> = (0..50).map(|i| i.to_string()).collect();
        assert_eq!(texts, want);
        assert!(complete_all(&Echo, &[], 4).is_empty());
    }

    #[test]
    fn logprob_cap_enforced() {
        let r = CompletionRequest::new(bare_prompt("q")).with_logprobs(6);
        assert!(matches!(r.validate(), Err(BackendError::InvalidRequest(_))));
    }
}
