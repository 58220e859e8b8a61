use std::thread::sleep;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse};
use crate::distribution::TokenDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `POST {base_url}/chat/completions` with a message list.
    #[default]
    Chat,
    /// `POST {base_url}/completions` with the flattened prompt text.
    Completions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub style: ApiStyle,
    /// Environment variable holding the bearer token; unset variable with a
    /// non-empty name is an error, an empty name sends no auth header.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: String::new(),
            style: ApiStyle::Chat,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

pub struct HttpBackend {
    id: String,
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            Some(
                std::env::var(&config.api_key_env)
                    .map_err(|_| BackendError::MissingApiKey(config.api_key_env.clone()))?,
            )
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(HttpBackend {
            id: format!("http:{}", config.model),
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.style {
            ApiStyle::Chat => format!("{base}/chat/completions"),
            ApiStyle::Completions => format!("{base}/completions"),
        }
    }

    pub fn request_body(&self, req: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        match self.config.style {
            ApiStyle::Chat => {
                body["messages"] = serde_json::to_value(req.prompt.messages()).expect("messages serialize");
                if req.want_top_logprobs > 0 {
                    body["logprobs"] = json!(true);
                    body["top_logprobs"] = json!(req.want_top_logprobs);
                }
            }
            ApiStyle::Completions => {
                body["prompt"] = json!(req.prompt.full_text());
                if req.want_top_logprobs > 0 {
                    body["logprobs"] = json!(req.want_top_logprobs);
                }
            }
        }
        body
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.config.max_backoff_ms);
        Duration::from_millis(ms)
    }

    fn send(&self, body: &Value) -> Result<Value, BackendError> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                sleep(self.backoff(attempt - 1));
            }
            let mut rb = self.client.post(self.endpoint()).json(body);
            if let Some(key) = &self.api_key {
                rb = rb.bearer_auth(key);
            }
            match rb.send() {
                Err(e) => {
                    log::warn!("request attempt {} failed: {e}", attempt + 1);
                    last = e.to_string();
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.text().unwrap_or_default();
                    match status {
                        200..=299 => {
                            return serde_json::from_str(&text)
                                .map_err(|e| BackendError::Malformed(e.to_string()))
                        }
                        401 | 403 => return Err(BackendError::Auth(status)),
                        429 | 500..=599 => {
                            log::warn!("HTTP {status} on attempt {}", attempt + 1);
                            last = format!("HTTP {status}: {text}");
                        }
                        _ => return Err(BackendError::Http { status, body: text }),
                    }
                }
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last,
        })
    }
}

fn malformed(what: &str) -> BackendError {
    BackendError::Malformed(format!("missing {what}"))
}

/// Text and first-answer-position logprobs of a response. Leading
/// whitespace-only tokens are skipped when locating the first position.
pub(crate) fn parse_response(
    style: ApiStyle,
    v: &Value,
    want: usize,
) -> Result<(String, Option<TokenDistribution>), BackendError> {
    let choice = v.pointer("/choices/0").ok_or_else(|| malformed("choices[0]"))?;
    let text = match style {
        ApiStyle::Chat => choice.pointer("/message/content"),
        ApiStyle::Completions => choice.get("text"),
    }
    .and_then(Value::as_str)
    .ok_or_else(|| malformed("response text"))?
    .to_string();
    if want == 0 {
        return Ok((text, None));
    }
    let entries: Vec<(String, f64)> = match style {
        ApiStyle::Chat => {
            let positions = choice
                .pointer("/logprobs/content")
                .and_then(Value::as_array)
                .ok_or(BackendError::LogprobsUnsupported)?;
            let pos = positions
                .iter()
                .find(|p| p.get("token").and_then(Value::as_str).is_some_and(|t| !t.trim().is_empty()))
                .or(positions.first())
                .ok_or(BackendError::LogprobsUnsupported)?;
            pos.get("top_logprobs")
                .and_then(Value::as_array)
                .ok_or(BackendError::LogprobsUnsupported)?
                .iter()
                .filter_map(|e| Some((e.get("token")?.as_str()?.to_string(), e.get("logprob")?.as_f64()?)))
                .collect()
        }
        ApiStyle::Completions => {
            let lp = choice.get("logprobs").filter(|l| !l.is_null()).ok_or(BackendError::LogprobsUnsupported)?;
            let tops = lp
                .get("top_logprobs")
                .and_then(Value::as_array)
                .ok_or(BackendError::LogprobsUnsupported)?;
            let tokens: Vec<&str> = lp
                .get("tokens")
                .and_then(Value::as_array)
                .map(|t| t.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            let idx = tokens.iter().position(|t| !t.trim().is_empty()).unwrap_or(0);
            tops.get(idx)
                .and_then(Value::as_object)
                .ok_or(BackendError::LogprobsUnsupported)?
                .iter()
                .filter_map(|(t, l)| Some((t.clone(), l.as_f64()?)))
                .collect()
        }
    };
    if entries.is_empty() {
        return Err(BackendError::LogprobsUnsupported);
    }
    let mut entries = entries;
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    entries.truncate(want);
    // servers occasionally report tiny positive values for certain tokens
    let entries = entries.into_iter().map(|(t, l)| (t, l.min(0.0)));
    Ok((text, Some(TokenDistribution::new(entries)?)))
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let v = self.send(&self.request_body(req))?;
        let (text, logprobs) = parse_response(self.config.style, &v, req.want_top_logprobs)?;
        Ok(CompletionResponse {
            text,
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
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves the canned (status, body) replies in order, one per connection.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let h = hits.clone();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in replies {
                let (mut stream, _) = listener.accept().unwrap();
                h.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
            bodies
        });
        (url, hits, handle)
    }

    fn backend(url: &str, style: ApiStyle) -> HttpBackend {
        HttpBackend::new(HttpConfig {
            base_url: url.into(),
            model: "m".into(),
            style,
            api_key_env: String::new(),
            timeout_secs: 5,
            max_retries: 2,
            initial_backoff_ms: 1,
            max_backoff_ms: 5,
        })
        .unwrap()
    }

    const CHAT_OK: &str = r#"{"choices":[{"message":{"content":"19"},"logprobs":{"content":[{"token":"19","logprob":-0.1,"top_logprobs":[{"token":"19","logprob":-0.1},{"token":"15","logprob":-2.5}]}]}}]}"#;

    #[test]
    fn retries_transient_then_succeeds() {
        let (url, hits, h) = serve(vec![
            (503, "{}".into()),
            (429, "{}".into()),
            (200, CHAT_OK.into()),
        ]);
        let b = backend(&url, ApiStyle::Chat);
        let r = b
            .complete(&CompletionRequest::new(bare_prompt("q")).with_logprobs(2))
            .unwrap();
        assert_eq!(r.text, "19");
        assert_eq!(r.first_position_top_logprobs.unwrap().entries()[1].token, "15");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        let bodies = h.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[2]).unwrap();
        assert_eq!(sent["top_logprobs"], 2);
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["messages"][0]["role"], "user");
    }

    #[test]
    fn auth_failure_not_retried() {
        let (url, hits, h) = serve(vec![(401, "{}".into())]);
        let b = backend(&url, ApiStyle::Chat);
        let e = b.complete(&CompletionRequest::new(bare_prompt("q"))).unwrap_err();
        assert!(matches!(e, BackendError::Auth(401)));
        h.join().unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn gives_up_after_retries() {
        let (url, _, h) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let b = backend(&url, ApiStyle::Completions);
        let e = b.complete(&CompletionRequest::new(bare_prompt("q"))).unwrap_err();
        assert!(matches!(e, BackendError::Transport { attempts: 3, .. }));
        h.join().unwrap();
    }

    #[test]
    fn missing_logprobs_signalled() {
        let v: Value = serde_json::from_str(r#"{"choices":[{"message":{"content":"19"}}]}"#).unwrap();
        assert!(matches!(
            parse_response(ApiStyle::Chat, &v, 5),
            Err(BackendError::LogprobsUnsupported)
        ));
        assert_eq!(parse_response(ApiStyle::Chat, &v, 0).unwrap().0, "19");
    }

    #[test]
    fn legacy_completion_logprobs_skip_whitespace() {
        let v: Value = serde_json::from_str(
            r#"{"choices":[{"text":" 19","logprobs":{"tokens":[" ","19"],"top_logprobs":[{" ":-0.01},{"19":-0.2,"15":-1.9,"21":-4.0}]}}]}"#,
        )
        .unwrap();
        let (text, d) = parse_response(ApiStyle::Completions, &v, 5).unwrap();
        assert_eq!(text, " 19");
        let toks: Vec<&str> = d.as_ref().unwrap().entries().iter().map(|e| e.token.as_str()).collect();
        assert_eq!(toks, ["19", "15", "21"]);
    }

    #[test]
    fn missing_key_variable_is_error() {
        let e = HttpBackend::new(HttpConfig {
            api_key_env: "SEQCON_TEST_SURELY_UNSET_VAR".into(),
            ..HttpConfig::default()
        });
        assert!(matches!(e, Err(BackendError::MissingApiKey(_))));
    }
}
