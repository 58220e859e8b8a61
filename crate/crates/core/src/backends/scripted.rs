use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse};
use crate::distribution::{TokenDistribution, TokenLogprob};

/// One canned answer, keyed by the prompt's test query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub query: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<TokenLogprob>>,
}

/// Plays back fixtures. Lookup is by exact test query.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    id: String,
    answers: HashMap<String, (String, Option<TokenDistribution>)>,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>) -> Self {
        ScriptedBackend {
            id: id.into(),
            answers: HashMap::new(),
        }
    }

    pub fn with(mut self, query: impl Into<String>, response: impl Into<String>) -> Self {
        self.answers.insert(query.into(), (response.into(), None));
        self
    }

    pub fn insert(&mut self, fixture: Fixture) -> Result<(), BackendError> {
        let dist = fixture.logprobs.map(TokenDistribution::try_from).transpose()?;
        self.answers.insert(fixture.query, (fixture.response, dist));
        Ok(())
    }

    /// One JSON fixture per line; blank lines skipped.
    pub fn from_jsonl<R: BufRead>(id: impl Into<String>, r: R) -> Result<Self, BackendError> {
        let mut b = ScriptedBackend::new(id);
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            b.insert(serde_json::from_str(&line)?)?;
        }
        Ok(b)
    }

    pub fn load(id: impl Into<String>, path: &Path) -> Result<Self, BackendError> {
        let f = std::fs::File::open(path)?;
        Self::from_jsonl(id, std::io::BufReader::new(f))
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let (text, dist) = self
            .answers
            .get(&req.prompt.test_query)
            .ok_or_else(|| BackendError::NoFixture(req.prompt.test_query.clone()))?;
        let logprobs = if req.want_top_logprobs > 0 {
            let d = dist.as_ref().ok_or(BackendError::LogprobsUnsupported)?;
            let top: Vec<_> = d
                .entries()
                .iter()
                .take(req.want_top_logprobs)
                .map(|e| (e.token.clone(), e.logprob))
                .collect();
            Some(TokenDistribution::new(top)?)
        } else {
            None
        };
        Ok(CompletionResponse {
            text: text.clone(),
            first_position_top_logprobs: logprobs,
            backend_id: self.id.clone(),
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::tests::bare_prompt;

    #[test]
    fn plays_back_fixture() {
        let b = ScriptedBackend::from_jsonl(
            "script",
            &br#"{"query":"q1","response":"19","logprobs":[{"token":"19","logprob":-0.1},{"token":"15","logprob":-2.0}]}

{"query":"q2","response":"consistent"}"#[..],
        )
        .unwrap();
        assert_eq!(b.len(), 2);
        let r = b.complete(&CompletionRequest::new(bare_prompt("q1"))).unwrap();
        assert_eq!(r.text, "19");
        assert!(!r.cached);
        let r = b
            .complete(&CompletionRequest::new(bare_prompt("q1")).with_logprobs(1))
            .unwrap();
        assert_eq!(r.first_position_top_logprobs.unwrap().len(), 1);
        assert!(matches!(
            b.complete(&CompletionRequest::new(bare_prompt("q2")).with_logprobs(5)),
            Err(BackendError::LogprobsUnsupported)
        ));
        assert!(matches!(
            b.complete(&CompletionRequest::new(bare_prompt("q3"))),
            Err(BackendError::NoFixture(_))
        ));
    }
}
