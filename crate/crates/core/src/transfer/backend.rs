use std::time::Duration;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: network trouble, timeouts, 5xx, rate limiting.
    #[error("transient backend failure: {0}")]
    Transient(String),
    /// Retrying will not help: bad credentials, rejected request.
    #[error("backend rejected request: {0}")]
    Fatal(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

/// A text-generation service: one prompt in, raw text out.
pub trait Backend: Sync {
    fn send(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn send(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).send(prompt)
    }
}

pub(crate) fn keyed_hash(seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub(crate) fn unit_from(bytes: &[u8]) -> f64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&bytes[..8]);
    (u64::from_le_bytes(b) >> 11) as f64 / (1u64 << 53) as f64
}

const OPENERS: [&str; 5] = ["look, ", "see the ", "oh, ", "there's ", "wow, "];
const MOCK_MAX_WORDS: usize = 5;

/// Deterministic offline stand-in for a generation service.
///
/// The caption is taken from the last non-empty prompt line, after its first
/// `": "` if present. Output is a function of `(seed, prompt)` only.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub seed: u64,
    /// Fraction of prompts answered with an infeasibility flag.
    pub infeasible_rate: f64,
    /// Fraction of answers wrapped in a code fence.
    pub fence_rate: f64,
    pub caption_field: String,
    pub infeasible_field: String,
}

impl MockBackend {
    pub fn new(seed: u64, infeasible_rate: f64) -> Self {
        MockBackend {
            seed,
            infeasible_rate,
            fence_rate: 0.25,
            caption_field: "caption".into(),
            infeasible_field: "infeasible".into(),
        }
    }

    fn source_caption(prompt: &str) -> &str {
        let line = prompt.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        match line.find(": ") {
            Some(i) => &line[i + 2..],
            None => line,
        }
    }

    fn simplify(caption: &str, opener: &str) -> Option<String> {
        let words: Vec<String> = caption
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|w| !w.is_empty() && !matches!(w.as_str(), "a" | "an" | "the"))
            .take(MOCK_MAX_WORDS)
            .collect();
        if words.is_empty() {
            return None;
        }
        Some(format!("{opener}{}!", words.join(" ")))
    }
}

impl Backend for MockBackend {
    fn send(&self, prompt: &str) -> Result<String, BackendError> {
        let h = keyed_hash(self.seed, &[prompt.as_bytes()]);
        let opener = OPENERS[h[16] as usize % OPENERS.len()];
        let simplified = if unit_from(&h[0..8]) < self.infeasible_rate {
            None
        } else {
            Self::simplify(Self::source_caption(prompt), opener)
        };
        let mut obj = serde_json::Map::new();
        obj.insert(self.caption_field.clone(), simplified.clone().unwrap_or_default().into());
        obj.insert(self.infeasible_field.clone(), simplified.is_none().into());
        let body = serde_json::Value::Object(obj).to_string();
        if unit_from(&h[8..16]) < self.fence_rate {
            Ok(format!("```json\n{body}\n```"))
        } else {
            Ok(body)
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    /// Request body is `{ <prompt_field>: prompt }`.
    pub prompt_field: String,
    /// JSON pointer to the generated text in the response body; the whole
    /// body is used when absent.
    pub response_pointer: Option<String>,
    pub timeout: Duration,
    pub token: Option<String>,
}

pub const TOKEN_ENV: &str = "TRANSFER_BACKEND_TOKEN";

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            prompt_field: "prompt".into(),
            response_pointer: None,
            timeout,
            token: None,
        }
    }

    /// Picks up the bearer token from `TRANSFER_BACKEND_TOKEN`.
    pub fn with_env_token(mut self) -> Self {
        self.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        self
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { cfg, agent }
    }
}

impl Backend for HttpBackend {
    fn send(&self, prompt: &str) -> Result<String, BackendError> {
        let mut body = serde_json::Map::new();
        body.insert(self.cfg.prompt_field.clone(), prompt.into());
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(t) = &self.cfg.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(serde_json::Value::Object(body))
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => return Err(BackendError::Transient(format!("HTTP {status}"))),
            _ => return Err(BackendError::Fatal(format!("HTTP {status}"))),
        }
        let Some(ptr) = &self.cfg.response_pointer else {
            return Ok(text);
        };
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Fatal(format!("response is not JSON: {e}")))?;
        match v.pointer(ptr) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(other) => Ok(other.to_string()),
            None => Err(BackendError::Fatal(format!("response has nothing at {ptr}"))),
        }
    }
}
