use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, CompletionRequest, CompletionResponse};

/// Hex SHA-256 over backend id, flattened prompt text, temperature,
/// max_tokens and the logprob count.
pub fn request_key(backend_id: &str, req: &CompletionRequest) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        backend: &'a str,
        prompt: String,
        temperature: f64,
        max_tokens: u32,
        top_logprobs: usize,
    }
    let key = Key {
        backend: backend_id,
        prompt: req.prompt.full_text(),
        temperature: req.temperature,
        max_tokens: req.max_tokens,
        top_logprobs: req.want_top_logprobs,
    };
    let bytes = serde_json::to_vec(&key).expect("key serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// On-disk response cache, one JSON file per request key. Writes go to a
/// temporary file first and are renamed into place.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CachedBackend { inner, dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let key = request_key(self.inner.id(), req);
        let path = self.path(&key);
        if let Ok(bytes) = fs::read(&path) {
            match serde_json::from_slice::<CompletionResponse>(&bytes) {
                Ok(mut r) => {
                    r.cached = true;
                    return Ok(r);
                }
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
            }
        }
        let resp = self.inner.complete(req)?;
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer(&mut f, &resp)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(resp)
    }
}

#[derive(Serialize)]
struct AuditLine<'a> {
    backend: &'a str,
    key: String,
    query: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<&'a CompletionResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Appends one JSON line per request/response to an audit log.
pub struct AuditedBackend<B> {
    inner: B,
    log: Mutex<File>,
}

impl<B: Backend> AuditedBackend<B> {
    pub fn new(inner: B, path: &Path) -> Result<Self, BackendError> {
        let log = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditedBackend {
            inner,
            log: Mutex::new(log),
        })
    }
}

impl<B: Backend> Backend for AuditedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let result = self.inner.complete(req);
        let line = AuditLine {
            backend: self.inner.id(),
            key: request_key(self.inner.id(), req),
            query: &req.prompt.test_query,
            response: result.as_ref().ok(),
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        let mut text = serde_json::to_string(&line)?;
        text.push('\n');
        self.log
            .lock()
            .expect("audit log poisoned")
            .write_all(text.as_bytes())?;
        result
    }
}
