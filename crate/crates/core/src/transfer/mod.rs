//! Caption rewriting through a text-generation backend.
//!
//! Each record's caption is rendered into a prompt, sent to a [`Backend`],
//! and the structured answer is parsed into a simplified caption or an
//! infeasibility flag. Failed sends are retried with jittered exponential
//! backoff; records that still fail are logged, not fatal.

pub mod backend;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use backend::{Backend, BackendError, HttpBackend, HttpConfig, MockBackend, TOKEN_ENV};
use backend::{keyed_hash, unit_from};

use crate::manifest::{Manifest, PairRecord, Source};

#[derive(Debug, thiserror::Error)]
pub enum TransferError {
    #[error("caption is empty")]
    EmptyCaption,
    #[error("template must contain exactly one {{}} placeholder, found {0}")]
    InvalidTemplate(usize),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("response lacks field {0:?}")]
    MissingField(String),
    #[error("backend unavailable: all {attempted} records failed; last error: {last}")]
    BackendUnavailable { attempted: usize, last: BackendError },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub const PLACEHOLDER: &str = "{}";

pub const DEFAULT_TEMPLATE: &str = "\
Turn the picture caption below into one or two short spoken sentences that an adult might say \
to a small child looking at the same picture. Use simple, concrete words. If that cannot be done \
naturally, mark it infeasible and leave the caption empty.
Answer with one JSON object: {\"caption\": string, \"infeasible\": boolean}.

Caption: {}";

/// Names of the two fields in a structured answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseFields {
    pub caption: String,
    pub infeasible: String,
}

impl Default for ResponseFields {
    fn default() -> Self {
        ResponseFields {
            caption: "caption".into(),
            infeasible: "infeasible".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
    pub few_shot: String,
    pub fields: ResponseFields,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, TransferError> {
        let text = text.into();
        let n = text.matches(PLACEHOLDER).count();
        if n != 1 {
            return Err(TransferError::InvalidTemplate(n));
        }
        Ok(PromptTemplate {
            text,
            few_shot: String::new(),
            fields: ResponseFields::default(),
        })
    }

    pub fn with_few_shot(mut self, few_shot: impl Into<String>) -> Self {
        self.few_shot = few_shot.into();
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new(DEFAULT_TEMPLATE).expect("default template has one placeholder")
    }
}

/// Substitutes `caption` for the placeholder; the caption is inserted verbatim.
pub fn render_prompt(t: &PromptTemplate, caption: &str) -> Result<String, TransferError> {
    if caption.trim().is_empty() {
        return Err(TransferError::EmptyCaption);
    }
    let (head, tail) = t.text.split_once(PLACEHOLDER).expect("validated placeholder");
    let mut out = String::with_capacity(t.few_shot.len() + t.text.len() + caption.len() + 2);
    if !t.few_shot.is_empty() {
        out.push_str(&t.few_shot);
        out.push_str("\n\n");
    }
    out.push_str(head);
    out.push_str(caption);
    out.push_str(tail);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub simplified: String,
    pub feasible: bool,
}

fn strip_fence(s: &str) -> &str {
    let s = s.trim();
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return s;
    };
    // drop an info string such as `json`
    match body.find('\n') {
        Some(i) if !body[..i].trim_start().starts_with('{') => body[i + 1..].trim(),
        _ => body.trim(),
    }
}

pub fn parse_response(raw: &str, fields: &ResponseFields) -> Result<Parsed, TransferError> {
    let v: serde_json::Value =
        serde_json::from_str(strip_fence(raw)).map_err(|e| TransferError::MalformedResponse(e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| TransferError::MalformedResponse("not a JSON object".into()))?;
    let infeasible = match obj.get(&fields.infeasible) {
        None => return Err(TransferError::MissingField(fields.infeasible.clone())),
        Some(serde_json::Value::Bool(b)) => *b,
        Some(other) => {
            return Err(TransferError::MalformedResponse(format!(
                "{} is {other}, expected a boolean",
                fields.infeasible
            )))
        }
    };
    if infeasible {
        return Ok(Parsed {
            simplified: String::new(),
            feasible: false,
        });
    }
    let caption = match obj.get(&fields.caption) {
        None => return Err(TransferError::MissingField(fields.caption.clone())),
        Some(serde_json::Value::String(s)) => s.trim(),
        Some(other) => {
            return Err(TransferError::MalformedResponse(format!(
                "{} is {other}, expected a string",
                fields.caption
            )))
        }
    };
    if caption.is_empty() {
        return Err(TransferError::MalformedResponse("feasible answer with empty caption".into()));
    }
    Ok(Parsed {
        simplified: caption.to_owned(),
        feasible: true,
    })
}

/// Serializes a parse result in the shape [`parse_response`] accepts.
pub fn format_response(p: &Parsed, fields: &ResponseFields) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert(fields.caption.clone(), p.simplified.clone().into());
    obj.insert(fields.infeasible.clone(), (!p.feasible).into());
    serde_json::Value::Object(obj).to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendPolicy {
    pub max_in_flight: usize,
    /// Additional attempts after the first.
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
    /// Seeds the backoff jitter.
    pub seed: u64,
}

impl Default for BackendPolicy {
    fn default() -> Self {
        BackendPolicy {
            max_in_flight: 8,
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            seed: 0,
        }
    }
}

impl BackendPolicy {
    pub fn validate(&self) -> Result<(), TransferError> {
        if self.max_in_flight == 0 {
            return Err(TransferError::InvalidPolicy("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    /// Delay before retry number `attempt` (0 for the first retry):
    /// `base * 2^attempt`, scaled by a jitter factor in [0.5, 1).
    pub fn backoff(&self, pair_id: &str, attempt: u32) -> Duration {
        let h = keyed_hash(self.seed, &[pair_id.as_bytes(), &attempt.to_le_bytes()]);
        let factor = 0.5 + 0.5 * unit_from(&h);
        self.backoff_base
            .saturating_mul(1u32.checked_shl(attempt.min(20)).unwrap_or(u32::MAX))
            .mul_f64(factor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferResult {
    pub pair_id: String,
    pub simplified: String,
    pub feasible: bool,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rejection {
    pub pair_id: String,
    pub reason: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutput {
    /// Feasible records with `source = transferred`, sorted by pair_id.
    pub manifest: Manifest,
    /// One entry per record that produced an answer, sorted by pair_id.
    pub results: Vec<TransferResult>,
    /// Infeasible and failed records, sorted by pair_id.
    pub rejections: Vec<Rejection>,
}

enum Outcome {
    Answered(TransferResult),
    Failed { reason: String, attempts: u32, error: Option<BackendError> },
}

fn transfer_one<B: Backend + ?Sized>(
    rec: &PairRecord,
    backend: &B,
    t: &PromptTemplate,
    p: &BackendPolicy,
) -> Outcome {
    let prompt = match render_prompt(t, &rec.caption) {
        Ok(s) => s,
        Err(e) => {
            return Outcome::Failed {
                reason: e.to_string(),
                attempts: 0,
                error: None,
            }
        }
    };
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        let (reason, retryable, error) = match backend.send(&prompt) {
            Ok(raw) => match parse_response(&raw, &t.fields) {
                Ok(parsed) => {
                    return Outcome::Answered(TransferResult {
                        pair_id: rec.pair_id.clone(),
                        simplified: parsed.simplified,
                        feasible: parsed.feasible,
                        attempts: attempt,
                    })
                }
                Err(e) => (e.to_string(), true, None),
            },
            Err(e) => (e.to_string(), e.is_transient(), Some(e)),
        };
        if !retryable || attempt > p.max_retries {
            return Outcome::Failed {
                reason,
                attempts: attempt,
                error,
            };
        }
        log::debug!("{}: attempt {attempt} failed: {reason}", rec.pair_id);
        std::thread::sleep(p.backoff(&rec.pair_id, attempt - 1));
    }
}

/// Rewrites every caption in `m`.
///
/// Every input record ends up either in the output manifest or in the
/// rejection log. The run fails only if no record got any answer from the
/// backend.
pub fn run_transfer<B: Backend + ?Sized>(
    m: &Manifest,
    backend: &B,
    t: &PromptTemplate,
    p: &BackendPolicy,
) -> Result<TransferOutput, TransferError> {
    p.validate()?;
    let n = m.records.len();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..n).map(|_| None).collect());
    let workers = p.max_in_flight.min(n.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = transfer_one(&m.records[i], backend, t, p);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(out);
                let d = done.fetch_add(1, Ordering::Relaxed) + 1;
                if d.is_multiple_of(1000) || d == n {
                    log::info!("transfer: {d}/{n}");
                }
            });
        }
    });

    let mut records = Vec::new();
    let mut results = Vec::new();
    let mut rejections = Vec::new();
    let mut backend_failures = 0usize;
    let mut last_error = None;
    for (rec, out) in m.records.iter().zip(slots.into_inner().expect("workers joined")) {
        match out.expect("every index visited") {
            Outcome::Answered(r) => {
                if r.feasible {
                    let nr = PairRecord::new(&rec.pair_id, &rec.image_ref, &r.simplified, Source::Transferred);
                    records.push(nr);
                } else {
                    rejections.push(Rejection {
                        pair_id: r.pair_id.clone(),
                        reason: "infeasible".into(),
                        attempts: r.attempts,
                    });
                }
                results.push(r);
            }
            Outcome::Failed { reason, attempts, error } => {
                if let Some(e) = error {
                    backend_failures += 1;
                    last_error = Some(e);
                }
                rejections.push(Rejection {
                    pair_id: rec.pair_id.clone(),
                    reason,
                    attempts,
                });
            }
        }
    }
    if n > 0 && backend_failures == n {
        return Err(TransferError::BackendUnavailable {
            attempted: n,
            last: last_error.expect("at least one failure"),
        });
    }
    records.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    results.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    rejections.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let manifest = Manifest::new(records)
        .expect("input ids are unique")
        .with_provenance(format!(
            "transfer: {} in, {} feasible, {} rejected",
            n,
            results.iter().filter(|r| r.feasible).count(),
            rejections.len()
        ));
    Ok(TransferOutput {
        manifest,
        results,
        rejections,
    })
}

pub fn write_rejections(log: &[Rejection], path: impl AsRef<Path>) -> Result<(), TransferError> {
    let path = path.as_ref();
    let io = |source| TransferError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in log {
        serde_json::to_writer(&mut w, r).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_rejections(path: impl AsRef<Path>) -> Result<Vec<Rejection>, TransferError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TransferError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| TransferError::MalformedResponse(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    fn manifest(captions: &[(&str, &str)]) -> Manifest {
        Manifest::new(
            captions
                .iter()
                .map(|(id, c)| PairRecord::new(*id, format!("img/{id}.jpg"), *c, Source::General))
                .collect(),
        )
        .unwrap()
    }

    fn fast() -> BackendPolicy {
        BackendPolicy {
            backoff_base: Duration::from_millis(1),
            ..Default::default()
        }
    }

    #[test]
    fn render_examples() {
        let t = PromptTemplate::new("Rewrite: {}").unwrap();
        assert_eq!(render_prompt(&t, "a dog runs").unwrap(), "Rewrite: a dog runs");
        assert_eq!(render_prompt(&t, "a {} b {x}").unwrap(), "Rewrite: a {} b {x}");
        assert!(matches!(render_prompt(&t, ""), Err(TransferError::EmptyCaption)));
        let t = t.with_few_shot("Example: x -> y");
        assert_eq!(render_prompt(&t, "z").unwrap(), "Example: x -> y\n\nRewrite: z");
    }

    #[test]
    fn template_needs_one_placeholder() {
        assert!(matches!(PromptTemplate::new("none"), Err(TransferError::InvalidTemplate(0))));
        assert!(matches!(PromptTemplate::new("{} {}"), Err(TransferError::InvalidTemplate(2))));
        let _ = PromptTemplate::default();
    }

    #[test]
    fn parse_examples() {
        let f = ResponseFields::default();
        let p = parse_response(r#"{"caption": "look, a doggy!", "infeasible": false}"#, &f).unwrap();
        assert_eq!((p.simplified.as_str(), p.feasible), ("look, a doggy!", true));
        let p = parse_response(r#"{"caption": "", "infeasible": true}"#, &f).unwrap();
        assert_eq!((p.simplified.as_str(), p.feasible), ("", false));
        assert!(matches!(parse_response("sure, here it is", &f), Err(TransferError::MalformedResponse(_))));
        assert!(matches!(
            parse_response(r#"{"caption": "x"}"#, &f),
            Err(TransferError::MissingField(name)) if name == "infeasible"
        ));
        assert!(matches!(
            parse_response(r#"{"caption": "", "infeasible": false}"#, &f),
            Err(TransferError::MalformedResponse(_))
        ));
    }

    #[test]
    fn parse_strips_fences() {
        let f = ResponseFields::default();
        for raw in [
            "```json\n{\"caption\": \"hi\", \"infeasible\": false}\n```",
            "  ```\n{\"caption\": \"hi\", \"infeasible\": false}\n```  ",
            "```{\"caption\": \"hi\", \"infeasible\": false}```",
        ] {
            assert_eq!(parse_response(raw, &f).unwrap().simplified, "hi", "{raw}");
        }
    }

    #[test]
    fn parse_format_round_trip() {
        let f = ResponseFields {
            caption: "utterance".into(),
            infeasible: "skip".into(),
        };
        for p in [
            Parsed { simplified: "look! \"ball\"".into(), feasible: true },
            Parsed { simplified: String::new(), feasible: false },
        ] {
            assert_eq!(parse_response(&format_response(&p, &f), &f).unwrap(), p);
        }
    }

    #[test]
    fn three_records_one_infeasible() {
        struct OneBad;
        impl Backend for OneBad {
            fn send(&self, prompt: &str) -> Result<String, BackendError> {
                Ok(if prompt.contains("stock chart") {
                    r#"{"caption":"","infeasible":true}"#.into()
                } else {
                    r#"{"caption":"look!","infeasible":false}"#.into()
                })
            }
        }
        let m = manifest(&[("c", "a dog"), ("a", "a stock chart"), ("b", "a cat")]);
        let out = run_transfer(&m, &OneBad, &PromptTemplate::default(), &fast()).unwrap();
        assert_eq!(out.manifest.ids().collect::<Vec<_>>(), ["b", "c"]);
        assert!(out.manifest.records.iter().all(|r| r.source == Source::Transferred && r.caption == "look!"));
        assert_eq!(out.rejections, vec![Rejection { pair_id: "a".into(), reason: "infeasible".into(), attempts: 1 }]);
    }

    #[test]
    fn flaky_backend_succeeds_on_third_attempt() {
        struct Flaky(AtomicU32);
        impl Backend for Flaky {
            fn send(&self, _: &str) -> Result<String, BackendError> {
                if self.0.fetch_add(1, Ordering::SeqCst) < 2 {
                    Err(BackendError::Transient("503".into()))
                } else {
                    Ok(r#"{"caption":"hi","infeasible":false}"#.into())
                }
            }
        }
        let m = manifest(&[("x", "a ball")]);
        let out = run_transfer(&m, &Flaky(AtomicU32::new(0)), &PromptTemplate::default(), &fast()).unwrap();
        assert_eq!(out.results[0].attempts, 3);
        assert!(out.results[0].feasible);
    }

    #[test]
    fn retries_exhausted_and_backend_unavailable() {
        struct Down;
        impl Backend for Down {
            fn send(&self, _: &str) -> Result<String, BackendError> {
                Err(BackendError::Transient("connection refused".into()))
            }
        }
        let m = manifest(&[("x", "a ball"), ("y", "a cup")]);
        let p = BackendPolicy { max_retries: 2, ..fast() };
        assert!(matches!(
            run_transfer(&m, &Down, &PromptTemplate::default(), &p),
            Err(TransferError::BackendUnavailable { attempted: 2, .. })
        ));
    }

    #[test]
    fn partial_failure_is_logged_not_fatal() {
        struct HalfDown;
        impl Backend for HalfDown {
            fn send(&self, prompt: &str) -> Result<String, BackendError> {
                if prompt.contains("cup") {
                    Err(BackendError::Fatal("HTTP 400".into()))
                } else {
                    Ok(r#"{"caption":"ball!","infeasible":false}"#.into())
                }
            }
        }
        let m = manifest(&[("x", "a ball"), ("y", "a cup")]);
        let out = run_transfer(&m, &HalfDown, &PromptTemplate::default(), &fast()).unwrap();
        assert_eq!(out.manifest.len(), 1);
        // fatal errors are not retried
        assert_eq!(out.rejections[0].attempts, 1);
        assert_eq!(out.manifest.len() + out.rejections.len(), m.len());
    }

    #[test]
    fn mock_run_is_deterministic_across_concurrency() {
        let owned: Vec<(String, String)> =
            (0..60).map(|i| (format!("p{i:03}"), format!("A red ball number {i} on the grass"))).collect();
        let m = manifest(&owned.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect::<Vec<_>>());
        let b = MockBackend::new(3, 0.2);
        let t = PromptTemplate::default();
        let one = run_transfer(&m, &b, &t, &BackendPolicy { max_in_flight: 1, ..fast() }).unwrap();
        let many = run_transfer(&m, &b, &t, &BackendPolicy { max_in_flight: 7, ..fast() }).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.manifest.len() + one.rejections.len(), 60);
        assert!(!one.rejections.is_empty() && !one.manifest.is_empty());
    }

    #[test]
    fn backoff_grows_and_is_jittered() {
        let p = BackendPolicy { backoff_base: Duration::from_millis(100), ..Default::default() };
        for a in 0..5 {
            let d = p.backoff("id", a);
            let base = 100u64 << a;
            assert!(d >= Duration::from_millis(base / 2) && d < Duration::from_millis(base), "{d:?}");
            assert_eq!(d, p.backoff("id", a));
        }
    }

    #[test]
    fn zero_in_flight_rejected() {
        let p = BackendPolicy { max_in_flight: 0, ..Default::default() };
        assert!(matches!(
            run_transfer(&Manifest::default(), &MockBackend::new(0, 0.0), &PromptTemplate::default(), &p),
            Err(TransferError::InvalidPolicy(_))
        ));
    }
}
