//! Model calls, answer extraction, grading and metric aggregation.
//!
//! Records are graded from their persisted raw response, so re-grading is a
//! pure function of the record. Records that end in `api_error` or `refusal`
//! are never graded and never enter an accuracy numerator or denominator.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, IteratorRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{mix_seed, GeneratedExample};
use crate::graph::NodeId;
use crate::naturalizer::{parse_fact, parse_proof_prompt, parse_symbolic_prompt, PromptKind, PromptText, ProofPlanningExample};
use crate::profile::ProofCorpusRecord;

pub const PERTURBATION_PROMPT: &str = "You are given one proof line. Change the line so that it becomes incorrect but still mathematically sensible.\n\
Do NOT change numbering, labels, formatting-only tokens, or spacing.\n\
Try to keep the line very similar to the original line (so if there are markdown tokens for closing a line or spacing, keep those).\n\
Return ONLY the modified single line (no commentary, no extra lines).\n\
Make only ONE single change for the line. Change only ONE mathematical property or relation, do not do multiple changes.";

/// Our own prompt for the optional model-backed path extractor.
pub const EXTRACTION_PROMPT: &str = "Extract the final path from the answer below. Reply with only the node ids \
separated by \" -> \", or with NONE if the answer gives no path.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Natural,
    Length,
    ApiError,
    Refusal,
}

impl StopReason {
    /// Whether the record is excluded from accuracy denominators.
    pub fn is_excluded(self) -> bool {
        matches!(self, StopReason::ApiError | StopReason::Refusal)
    }
}

/// Built-in offline endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mock", rename_all = "snake_case")]
pub enum MockKind {
    /// Solves the prompt exactly.
    Gold,
    /// Picks a uniformly random child of the start.
    UniformGuess { seed: u64 },
    /// Rejects every request as asking for too many tokens.
    AlwaysRefuse,
    /// The gold answer cut to `tokens` whitespace tokens, marked as a length stop.
    TruncateAt { tokens: usize },
    /// Returns a fixed string.
    Echo { text: String },
    /// Fails every request with a transient error.
    AlwaysFail,
    /// Fails the first `failures` requests with HTTP 429, then answers gold.
    Flaky { failures: u32 },
    /// Rule-based line perturber for the perturbation prompt.
    Perturber,
}

impl FromStr for MockKind {
    type Err = Error;

    /// Parses `gold`, `uniform[:seed]`, `refuse`, `truncate:N`, `echo:TEXT`,
    /// `fail`, `flaky:N` or `perturb`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<u64> {
            a.ok_or_else(|| Error::domain(format!("mock {head} needs an argument")))?
                .parse()
                .map_err(|_| Error::domain(format!("bad mock argument in {s:?}")))
        };
        Ok(match head {
            "gold" => MockKind::Gold,
            "uniform" => MockKind::UniformGuess {
                seed: arg.map(|a| num(Some(a))).transpose()?.unwrap_or(0),
            },
            "refuse" => MockKind::AlwaysRefuse,
            "truncate" => MockKind::TruncateAt { tokens: num(arg)? as usize },
            "echo" => MockKind::Echo {
                text: arg.unwrap_or_default().to_string(),
            },
            "fail" => MockKind::AlwaysFail,
            "flaky" => MockKind::Flaky { failures: num(arg)? as u32 },
            "perturb" => MockKind::Perturber,
            _ => return Err(Error::domain(format!("unknown mock endpoint {s:?}"))),
        })
    }
}

/// One model endpoint and its request defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    /// Model id sent on the wire; defaults to `name`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub base_url: String,
    /// Environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_supports_temperature")]
    pub supports_temperature: bool,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub mock: Option<MockKind>,
}

fn default_supports_temperature() -> bool {
    true
}
fn default_max_output_tokens() -> u32 {
    32_768
}
fn default_concurrency() -> usize {
    4
}
fn default_retries() -> u32 {
    4
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    600
}

impl ModelEndpoint {
    pub fn mock(name: impl Into<String>, kind: MockKind) -> Self {
        Self {
            name: name.into(),
            model: None,
            base_url: String::new(),
            api_key_env: None,
            temperature: 0.0,
            supports_temperature: true,
            max_output_tokens: default_max_output_tokens(),
            max_concurrency: default_concurrency(),
            max_retries: default_retries(),
            backoff_ms: 0,
            timeout_secs: default_timeout_secs(),
            mock: Some(kind),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::domain("endpoint name is empty"));
        }
        if self.mock.is_none() && self.base_url.is_empty() {
            return Err(Error::domain(format!("endpoint {} has no base_url", self.name)));
        }
        if self.max_concurrency == 0 {
            return Err(Error::domain(format!("endpoint {} has max_concurrency 0", self.name)));
        }
        if self.supports_temperature && self.temperature != 0.0 {
            return Err(Error::domain(format!("endpoint {} must run at temperature 0", self.name)));
        }
        Ok(())
    }

    pub fn request(&self, prompt: &PromptText) -> ChatRequest {
        ChatRequest {
            model: self.model.clone().unwrap_or_else(|| self.name.clone()),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: prompt.system.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: prompt.user.clone(),
                },
            ],
            temperature: self.supports_temperature.then_some(self.temperature),
            max_tokens: self.max_output_tokens,
        }
    }

    /// Builds the transport: a mock, or HTTP with the key read from the
    /// environment.
    pub fn transport(&self) -> Result<Box<dyn ChatTransport>> {
        if let Some(kind) = &self.mock {
            return Ok(Box::new(MockTransport::new(kind.clone())));
        }
        let key = match &self.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| Error::domain(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(Box::new(HttpTransport::new(&self.base_url, key, self.timeout_secs)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: Option<String>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: rate limits, 5xx, network failures.
    Transient(String),
    /// The request itself was rejected.
    Fatal(String),
    /// The provider refused the requested token budget.
    Refusal(String),
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, TransportError>;

    /// Whether latency is meaningful for this transport.
    fn measures_latency(&self) -> bool {
        true
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout_secs: u64) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Self { url, api_key, agent }
    }
}

fn looks_like_token_refusal(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("max_tokens") || b.contains("max_completion_tokens") || b.contains("maximum context length")
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, TransportError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 409 | 429 | 500..=599 => return Err(TransportError::Transient(format!("HTTP {status}: {body}"))),
            400 if looks_like_token_refusal(&body) => return Err(TransportError::Refusal(body)),
            _ => return Err(TransportError::Fatal(format!("HTTP {status}: {body}"))),
        }
        let v: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| TransportError::Fatal(format!("bad response JSON: {e}")))?;
        let choice = &v["choices"][0];
        let content = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| TransportError::Fatal("response has no message content".into()))?;
        Ok(ChatResponse {
            content: content.to_string(),
            finish_reason: choice["finish_reason"].as_str().map(str::to_string),
            completion_tokens: v["usage"]["completion_tokens"].as_u64(),
        })
    }
}

/// Offline endpoint that answers by parsing the prompt it is given.
pub struct MockTransport {
    kind: MockKind,
    calls: AtomicU32,
}

impl MockTransport {
    pub fn new(kind: MockKind) -> Self {
        Self {
            kind,
            calls: AtomicU32::new(0),
        }
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn whitespace_tokens(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl ChatTransport for MockTransport {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, TransportError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        let user = request.user_text();
        let natural = |content: String| ChatResponse {
            completion_tokens: Some(whitespace_tokens(&content)),
            content,
            finish_reason: Some("stop".into()),
        };
        match &self.kind {
            MockKind::Gold => Ok(natural(mock_answer(user, None))),
            MockKind::UniformGuess { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(*seed, fnv1a(user.as_bytes())));
                Ok(natural(mock_answer(user, Some(&mut rng))))
            }
            MockKind::AlwaysRefuse => Err(TransportError::Refusal(format!(
                "max_tokens {} exceeds the model limit",
                request.max_tokens
            ))),
            MockKind::TruncateAt { tokens } => {
                let full = mock_answer(user, None);
                let words: Vec<&str> = full.split_whitespace().collect();
                if words.len() <= *tokens {
                    return Ok(natural(full));
                }
                Ok(ChatResponse {
                    content: words[..*tokens].join(" "),
                    finish_reason: Some("length".into()),
                    completion_tokens: Some(*tokens as u64),
                })
            }
            MockKind::Echo { text } => Ok(natural(text.clone())),
            MockKind::AlwaysFail => Err(TransportError::Transient("HTTP 503: mock outage".into())),
            MockKind::Flaky { failures } => {
                if call < *failures {
                    Err(TransportError::Transient("HTTP 429: mock rate limit".into()))
                } else {
                    Ok(natural(mock_answer(user, None)))
                }
            }
            MockKind::Perturber => {
                let line = user.rsplit_once("\n\n").map(|(_, l)| l).unwrap_or(user);
                Ok(natural(rule_perturb(line)))
            }
        }
    }

    fn measures_latency(&self) -> bool {
        false
    }
}

/// Shortest path over an adjacency map by BFS.
fn bfs_path<K: Clone + Ord>(adj: &BTreeMap<K, Vec<K>>, from: &K, to: &K) -> Option<Vec<K>> {
    let mut parent: BTreeMap<K, K> = BTreeMap::new();
    let mut queue = VecDeque::from([from.clone()]);
    let mut seen = BTreeSet::from([from.clone()]);
    while let Some(u) = queue.pop_front() {
        if &u == to {
            let mut path = vec![u.clone()];
            let mut cur = u;
            while let Some(p) = parent.get(&cur) {
                path.push(p.clone());
                cur = p.clone();
            }
            path.reverse();
            return Some(path);
        }
        for v in adj.get(&u).into_iter().flatten() {
            if seen.insert(v.clone()) {
                parent.insert(v.clone(), u.clone());
                queue.push_back(v.clone());
            }
        }
    }
    None
}

/// Answer text for a symbolic or proof prompt. With `rng`, the first step is
/// a uniform guess among the start's children instead of the correct one.
fn mock_answer(user: &str, rng: Option<&mut ChaCha8Rng>) -> String {
    if let Ok((edges, s, g)) = parse_symbolic_prompt(user) {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (u, v) in edges {
            adj.entry(u).or_default().push(v);
        }
        let path = match rng {
            None => bfs_path(&adj, &s, &g),
            Some(rng) => adj.get(&s).and_then(|cs| cs.choose(rng)).map(|&c| {
                let mut p = vec![s];
                p.extend(bfs_path(&adj, &c, &g).unwrap_or_else(|| vec![c]));
                p
            }),
        };
        return match path {
            Some(p) => {
                let text: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                format!("Following the edges from node {s}.\nFinal Answer: {}", text.join(" -> "))
            }
            None => "There is no path.\nFinal Answer: none".into(),
        };
    }
    if let Ok((facts, _name, s, g)) = parse_proof_prompt(user) {
        let mut adj: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for f in &facts {
            if let Ok((_, a, b)) = parse_fact(f) {
                adj.entry(a).or_default().push(b);
            }
        }
        for cs in adj.values_mut() {
            cs.sort();
        }
        let next = match rng {
            None => bfs_path(&adj, &s, &g).and_then(|p| p.get(1).cloned()),
            Some(rng) => adj.get(&s).and_then(|cs| cs.choose(rng)).cloned(),
        };
        return format!("Final Answer: {}", next.unwrap_or_else(|| "unknown".into()));
    }
    "|YES| The proof is correct.".into()
}

/// Swaps the first relation or operator in a line, or bumps its first digit.
pub fn rule_perturb(line: &str) -> String {
    const SWAPS: [(&str, &str); 10] = [
        ("≤", "≥"),
        ("≥", "≤"),
        ("<=", ">="),
        (">=", "<="),
        ("+", "-"),
        ("-", "+"),
        ("<", ">"),
        (">", "<"),
        ("=", "≠"),
        ("\\le", "\\ge"),
    ];
    let first = SWAPS
        .iter()
        .filter_map(|&(from, to)| line.find(from).map(|i| (i, from, to)))
        .min_by_key(|&(i, from, _)| (i, std::cmp::Reverse(from.len())));
    if let Some((i, from, to)) = first {
        return format!("{}{}{}", &line[..i], to, &line[i + from.len()..]);
    }
    if let Some((i, c)) = line.char_indices().find(|(_, c)| c.is_ascii_digit()) {
        let d = (c.to_digit(10).unwrap() + 1) % 10;
        return format!("{}{}{}", &line[..i], d, &line[i + 1..]);
    }
    format!("not ({line})")
}

/// Cell coordinates carried by every record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct CellLabel {
    pub lookahead: u32,
    pub branches: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
}

impl CellLabel {
    pub fn of_example(e: &GeneratedExample) -> Self {
        Self {
            lookahead: e.lookahead,
            branches: e.branches,
            depth: e.depth,
        }
    }

    pub fn of_proof(e: &ProofPlanningExample) -> Self {
        Self {
            lookahead: e.lookahead,
            branches: e.branches,
            depth: e.depth,
        }
    }
}

/// What was pulled out of a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Extracted {
    Path { nodes: Option<Vec<NodeId>> },
    Attribute { value: Option<String> },
    Judgment { says_correct: Option<bool>, line: Option<usize> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_path: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hallucinated_edges: Option<Vec<(NodeId, NodeId)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_step: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_identification: Option<bool>,
    #[serde(default)]
    pub parse_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run_id: String,
    pub example_id: String,
    pub model: String,
    pub kind: PromptKind,
    pub cell: CellLabel,
    pub prompt: PromptText,
    pub raw_response: String,
    pub completion_tokens: u64,
    pub stop_reason: StopReason,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<Extracted>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<Verdicts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

/// One prompt to send, with the bookkeeping its record needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub example_id: String,
    pub cell: CellLabel,
    pub prompt: PromptText,
}

/// Sends one prompt, retrying transient failures with exponential backoff.
/// Never fails: exhausted retries produce an `api_error` record.
pub fn call_model(endpoint: &ModelEndpoint, transport: &dyn ChatTransport, run_id: &str, item: &EvalItem) -> EvalRecord {
    let request = endpoint.request(&item.prompt);
    let started = Instant::now();
    let mut attempts = 0u32;
    let outcome = loop {
        attempts += 1;
        match transport.complete(&request) {
            Ok(r) => break Ok(r),
            Err(TransportError::Transient(msg)) if attempts <= endpoint.max_retries => {
                let wait = endpoint.backoff_ms.saturating_mul(1 << (attempts - 1).min(10));
                log::warn!(
                    "{}: {} attempt {attempts} failed ({msg}); retrying in {wait} ms",
                    endpoint.name,
                    item.example_id
                );
                std::thread::sleep(Duration::from_millis(wait));
            }
            Err(e) => break Err(e),
        }
    };
    let latency_ms = transport
        .measures_latency()
        .then(|| started.elapsed().as_millis() as u64);
    let mut record = EvalRecord {
        run_id: run_id.to_string(),
        example_id: item.example_id.clone(),
        model: endpoint.name.clone(),
        kind: item.prompt.kind,
        cell: item.cell,
        prompt: item.prompt.clone(),
        raw_response: String::new(),
        completion_tokens: 0,
        stop_reason: StopReason::Natural,
        attempts,
        error: None,
        extracted: None,
        verdicts: None,
        latency_ms,
    };
    match outcome {
        Ok(r) => {
            record.completion_tokens = r.completion_tokens.unwrap_or_else(|| whitespace_tokens(&r.content));
            record.stop_reason = match r.finish_reason.as_deref() {
                Some("length") | Some("max_tokens") => StopReason::Length,
                _ => StopReason::Natural,
            };
            record.raw_response = r.content;
        }
        Err(TransportError::Refusal(msg)) => {
            record.stop_reason = StopReason::Refusal;
            record.error = Some(msg);
        }
        Err(TransportError::Transient(msg)) | Err(TransportError::Fatal(msg)) => {
            record.stop_reason = StopReason::ApiError;
            record.error = Some(msg);
        }
    }
    record
}

/// Outcome of [`run_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchSummary {
    pub completed: usize,
    pub completion_tokens: u64,
    pub budget_exhausted: bool,
}

/// Runs `items` with at most `max_concurrency` calls in flight, handing
/// records to `sink` in input order. Stops before the next chunk once
/// `token_budget` completion tokens have been spent.
pub fn run_batch(
    endpoint: &ModelEndpoint,
    transport: &dyn ChatTransport,
    run_id: &str,
    items: &[EvalItem],
    token_budget: Option<u64>,
    mut sink: impl FnMut(EvalRecord) -> Result<()>,
) -> Result<BatchSummary> {
    let mut summary = BatchSummary::default();
    for chunk in items.chunks(endpoint.max_concurrency.max(1)) {
        if token_budget.is_some_and(|b| summary.completion_tokens >= b) {
            summary.budget_exhausted = true;
            break;
        }
        let records: Vec<EvalRecord> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|item| scope.spawn(move || call_model(endpoint, transport, run_id, item)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("model call panicked")).collect()
        });
        for r in records {
            summary.completion_tokens += r.completion_tokens;
            summary.completed += 1;
            sink(r)?;
        }
    }
    Ok(summary)
}

fn answer_locus(text: &str) -> &str {
    for marker in ["Final Answer:", "Answer:"] {
        if let Some(i) = text.rfind(marker) {
            return &text[i + marker.len()..];
        }
    }
    text
}

/// Last node sequence of two or more ids joined by `->`, `→`, commas or
/// "then", after the final-answer marker if there is one.
pub fn extract_path(answer_text: &str) -> Option<Vec<NodeId>> {
    static SEQ: OnceLock<Regex> = OnceLock::new();
    static NUM: OnceLock<Regex> = OnceLock::new();
    let seq = SEQ.get_or_init(|| {
        let node = r"(?:node\s*)?\d+";
        let sep = r"\s*(?:-+>|→|⟶|=>|,|\bthen\b|\band then\b)\s*";
        Regex::new(&format!(r"(?i){node}(?:{sep}{node})+")).unwrap()
    });
    let num = NUM.get_or_init(|| Regex::new(r"\d+").unwrap());
    let locus = answer_locus(answer_text);
    let m = seq.find_iter(locus).last()?;
    num.find_iter(m.as_str())
        .map(|d| d.as_str().parse::<NodeId>().ok())
        .collect()
}

/// Path extraction strategy.
pub enum PathExtractor<'a> {
    Rule,
    /// Asks a model to restate the path, then applies the rule extractor to
    /// its reply.
    Model {
        endpoint: &'a ModelEndpoint,
        transport: &'a dyn ChatTransport,
    },
}

impl PathExtractor<'_> {
    pub fn extract(&self, answer_text: &str) -> Option<Vec<NodeId>> {
        match self {
            PathExtractor::Rule => extract_path(answer_text),
            PathExtractor::Model { endpoint, transport } => {
                let prompt = PromptText {
                    system: String::new(),
                    user: format!("{EXTRACTION_PROMPT}\n\n{answer_text}"),
                    kind: PromptKind::SymbolicPath,
                };
                let req = endpoint.request(&prompt);
                match transport.complete(&req) {
                    Ok(r) if !r.content.trim().eq_ignore_ascii_case("none") => extract_path(&r.content),
                    _ => None,
                }
            }
        }
    }
}

pub fn detect_edge_hallucinations(example: &GeneratedExample, path: &[NodeId]) -> BTreeSet<(NodeId, NodeId)> {
    path.windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|&(u, v)| !example.graph.has_edge(u, v))
        .collect()
}

pub fn grade_full_path(example: &GeneratedExample, path: Option<&[NodeId]>) -> bool {
    match path {
        Some(p) if !p.is_empty() => {
            p[0] == example.start
                && p[p.len() - 1] == example.goal
                && p.windows(2).all(|w| example.graph.has_edge(w[0], w[1]))
        }
        _ => false,
    }
}

fn normalize_token(s: &str) -> String {
    s.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// The attribute named in the final answer: the last word of the first
/// nonempty line after the marker, or of the last nonempty line.
pub fn extract_attribute(answer_text: &str) -> Option<String> {
    let has_marker = answer_text.contains("Answer:");
    let locus = answer_locus(answer_text);
    let mut lines = locus.lines().map(str::trim).filter(|l| !l.is_empty());
    let line = if has_marker { lines.next() } else { lines.last() }?;
    let word = line.split_whitespace().map(normalize_token).filter(|w| !w.is_empty()).last()?;
    Some(word)
}

pub fn grade_next_step(example: &ProofPlanningExample, answer_text: &str) -> bool {
    extract_attribute(answer_text).is_some_and(|a| a == normalize_token(&example.gold_next_attr))
}

/// A model's verdict on a proof and the line it blames, if any.
pub fn parse_judgment(answer_text: &str) -> (Option<bool>, Option<usize>) {
    static LINE: OnceLock<Regex> = OnceLock::new();
    static INCORRECT: OnceLock<Regex> = OnceLock::new();
    static CORRECT: OnceLock<Regex> = OnceLock::new();
    let line_re = LINE.get_or_init(|| Regex::new(r"(?i)\bline\s*#?\s*(\d+)").unwrap());
    let incorrect = INCORRECT.get_or_init(|| Regex::new(r"(?i)\b(incorrect|not correct|invalid|wrong)\b").unwrap());
    let correct = CORRECT.get_or_init(|| Regex::new(r"(?i)\b(correct|valid)\b").unwrap());
    let t = answer_text.trim_start();
    let verdict = if t.starts_with("|NO|") {
        Some(false)
    } else if t.starts_with("|YES|") {
        Some(true)
    } else if incorrect.is_match(t) {
        Some(false)
    } else if correct.is_match(t) {
        Some(true)
    } else {
        None
    };
    let line = line_re.captures(t).and_then(|c| c[1].parse().ok());
    (verdict, line)
}

/// `changed_line` is the 1-based line that was perturbed, or `None` for an
/// unmodified proof. Returns `(verdict, parse_failure)`.
pub fn grade_error_identification(answer_text: &str, changed_line: Option<usize>) -> (bool, bool) {
    let (says_correct, line) = parse_judgment(answer_text);
    match (says_correct, changed_line) {
        (None, _) => (false, true),
        (Some(true), None) => (true, false),
        (Some(false), Some(k)) => (line == Some(k), false),
        _ => (false, false),
    }
}

/// Ground truth for grading one record.
pub enum Truth<'a> {
    Symbolic(&'a GeneratedExample),
    Proof(&'a ProofPlanningExample),
    Verification { changed_line: Option<usize> },
}

/// Fills `extracted` and `verdicts` from the raw response. Excluded records
/// are left ungraded.
pub fn grade_record(record: &mut EvalRecord, truth: Truth<'_>, extractor: &PathExtractor<'_>) {
    if record.stop_reason.is_excluded() {
        record.extracted = None;
        record.verdicts = None;
        return;
    }
    let text = record.raw_response.as_str();
    let (extracted, verdicts) = match truth {
        Truth::Symbolic(ex) => {
            let nodes = extractor.extract(text);
            let hallucinated = nodes
                .as_deref()
                .map(|p| detect_edge_hallucinations(ex, p).into_iter().collect())
                .unwrap_or_default();
            let v = Verdicts {
                full_path: Some(grade_full_path(ex, nodes.as_deref())),
                hallucinated_edges: Some(hallucinated),
                parse_failure: nodes.is_none(),
                ..Default::default()
            };
            (Extracted::Path { nodes }, v)
        }
        Truth::Proof(ex) => {
            let value = extract_attribute(text);
            let v = Verdicts {
                next_step: Some(grade_next_step(ex, text)),
                parse_failure: value.is_none(),
                ..Default::default()
            };
            (Extracted::Attribute { value }, v)
        }
        Truth::Verification { changed_line } => {
            let (says_correct, line) = parse_judgment(text);
            let (ok, parse_failure) = grade_error_identification(text, changed_line);
            let v = Verdicts {
                error_identification: Some(ok),
                parse_failure,
                ..Default::default()
            };
            (Extracted::Judgment { says_correct, line }, v)
        }
    };
    record.extracted = Some(extracted);
    record.verdicts = Some(verdicts);
}

/// A proof with exactly one line altered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbedProof {
    pub lines: Vec<String>,
    /// 1-based index of the altered line.
    pub changed_line: usize,
    pub original_line: String,
    pub attempts: usize,
}

/// Rewrites one uniformly chosen line through `transport` with the
/// perturbation prompt, retrying until exactly one line differs.
pub fn perturb_proof_line<R: Rng + ?Sized>(
    proof: &[String],
    rng: &mut R,
    endpoint: &ModelEndpoint,
    transport: &dyn ChatTransport,
    max_attempts: usize,
) -> Result<PerturbedProof> {
    if proof.is_empty() {
        return Err(Error::domain("cannot perturb an empty proof"));
    }
    let idx = rng.random_range(0..proof.len());
    let original = &proof[idx];
    let prompt = PromptText {
        system: String::new(),
        user: format!("{PERTURBATION_PROMPT}\n\n{original}"),
        kind: PromptKind::ProofVerification,
    };
    let request = endpoint.request(&prompt);
    let mut reason = String::from("no attempts made");
    for attempt in 1..=max_attempts {
        let reply = match transport.complete(&request) {
            Ok(r) => r.content,
            Err(e) => {
                reason = format!("{e:?}");
                continue;
            }
        };
        let candidate = reply.trim_end_matches(['\n', '\r']);
        if candidate.contains('\n') {
            reason = "reply spans several lines".into();
            continue;
        }
        if candidate == original {
            reason = "reply is unchanged".into();
            continue;
        }
        let mut lines = proof.to_vec();
        lines[idx] = candidate.to_string();
        let differing = lines.iter().zip(proof).filter(|(a, b)| a != b).count();
        if differing != 1 {
            reason = format!("{differing} lines differ");
            continue;
        }
        return Ok(PerturbedProof {
            lines,
            changed_line: idx + 1,
            original_line: original.clone(),
            attempts: attempt,
        });
    }
    Err(Error::PerturbationFailed {
        attempts: max_attempts,
        reason,
    })
}

/// Inclusive proof-length bucket; `max = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub min: usize,
    pub max: Option<usize>,
}

impl LengthBucket {
    pub fn contains(&self, len: usize) -> bool {
        len >= self.min && self.max.is_none_or(|m| len <= m)
    }
}

impl FromStr for LengthBucket {
    type Err = Error;

    /// `a-b`, `a+` or `a`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("bad length bucket {s:?}"));
        let s = s.trim();
        if let Some(lo) = s.strip_suffix('+') {
            return Ok(Self { min: lo.parse().map_err(|_| bad())?, max: None });
        }
        let (lo, hi) = s.split_once(['-', '–']).unwrap_or((s, s));
        let b = Self {
            min: lo.trim().parse().map_err(|_| bad())?,
            max: Some(hi.trim().parse().map_err(|_| bad())?),
        };
        if b.max.unwrap() < b.min {
            return Err(bad());
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSample {
    pub bucket: LengthBucket,
    /// Indices into the corpus, ascending.
    pub indices: Vec<usize>,
    /// Fewer than `per_stratum` proofs were available.
    pub shortfall: bool,
}

/// Up to `per_stratum` proofs from each length bucket, drawn without
/// replacement. Every proof must fall in some bucket.
pub fn stratified_sample_proofs<R: Rng + ?Sized>(
    corpus: &[ProofCorpusRecord],
    strata: &[LengthBucket],
    per_stratum: usize,
    rng: &mut R,
) -> Result<Vec<StratumSample>> {
    if corpus.is_empty() {
        return Err(Error::domain("proof corpus is empty"));
    }
    if let Some(r) = corpus.iter().find(|r| !strata.iter().any(|b| b.contains(r.length()))) {
        return Err(Error::domain(format!(
            "proof {} of length {} falls in no bucket",
            r.proof_id,
            r.length()
        )));
    }
    Ok(strata
        .iter()
        .map(|&bucket| {
            let members = corpus
                .iter()
                .enumerate()
                .filter(|(_, r)| bucket.contains(r.length()))
                .map(|(i, _)| i);
            let mut indices = members.clone().choose_multiple(rng, per_stratum);
            indices.sort_unstable();
            StratumSample {
                bucket,
                shortfall: members.count() < per_stratum,
                indices,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One row per (model, kind, cell).
    #[default]
    Cell,
    /// One row per (model, kind).
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub model: String,
    pub kind: PromptKind,
    pub cell: Option<CellLabel>,
    /// All records, including excluded ones.
    pub n: usize,
    /// Records entering accuracy denominators.
    pub graded: usize,
    pub full_path_accuracy: Option<f64>,
    pub next_step_accuracy: Option<f64>,
    pub error_identification_accuracy: Option<f64>,
    /// Share of graded records with at least one hallucinated edge.
    pub edge_hallucination_rate: Option<f64>,
    pub length_stop_rate: Option<f64>,
    pub api_error_rate: f64,
    pub refusal_rate: f64,
    pub mean_completion_tokens: Option<f64>,
}

#[derive(Default)]
struct Tally {
    n: usize,
    graded: usize,
    full: (usize, usize),
    next: (usize, usize),
    ident: (usize, usize),
    halluc: (usize, usize),
    length: usize,
    api: usize,
    refusal: usize,
    tokens: u64,
}

fn ratio((num, den): (usize, usize)) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn aggregate_metrics(records: &[EvalRecord], grouping: Grouping) -> Vec<CellMetrics> {
    let mut groups: BTreeMap<(String, String, Option<CellLabel>), (PromptKind, Tally)> = BTreeMap::new();
    for r in records {
        let cell = (grouping == Grouping::Cell).then_some(r.cell);
        let kind_key = serde_json::to_string(&r.kind).unwrap_or_default();
        let (_, t) = groups
            .entry((r.model.clone(), kind_key, cell))
            .or_insert_with(|| (r.kind, Tally::default()));
        t.n += 1;
        match r.stop_reason {
            StopReason::ApiError => {
                t.api += 1;
                continue;
            }
            StopReason::Refusal => {
                t.refusal += 1;
                continue;
            }
            StopReason::Length => t.length += 1,
            StopReason::Natural => {}
        }
        t.graded += 1;
        t.tokens += r.completion_tokens;
        let Some(v) = &r.verdicts else { continue };
        let bump = |slot: &mut (usize, usize), ok: Option<bool>| {
            if let Some(ok) = ok {
                slot.1 += 1;
                slot.0 += ok as usize;
            }
        };
        bump(&mut t.full, v.full_path);
        bump(&mut t.next, v.next_step);
        bump(&mut t.ident, v.error_identification);
        bump(&mut t.halluc, v.hallucinated_edges.as_ref().map(|h| !h.is_empty()));
    }
    groups
        .into_iter()
        .map(|((model, _, cell), (kind, t))| CellMetrics {
            model,
            kind,
            cell,
            n: t.n,
            graded: t.graded,
            full_path_accuracy: ratio(t.full),
            next_step_accuracy: ratio(t.next),
            error_identification_accuracy: ratio(t.ident),
            edge_hallucination_rate: ratio(t.halluc),
            length_stop_rate: ratio((t.length, t.graded)),
            api_error_rate: t.api as f64 / t.n as f64,
            refusal_rate: t.refusal as f64 / t.n as f64,
            mean_completion_tokens: (t.graded > 0).then(|| t.tokens as f64 / t.graded as f64),
        })
        .collect()
}

pub const METRICS_CSV_HEADER: &str = "model,kind,lookahead,branches,depth,n,graded,full_path_accuracy,\
next_step_accuracy,error_identification_accuracy,edge_hallucination_rate,length_stop_rate,api_error_rate,\
refusal_rate,mean_completion_tokens";

pub fn write_metrics_csv<W: Write>(metrics: &[CellMetrics], mut w: W) -> Result<()> {
    let f = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    let u = |x: Option<u32>| x.map(|v| v.to_string()).unwrap_or_default();
    writeln!(w, "{METRICS_CSV_HEADER}")?;
    for m in metrics {
        let kind = serde_json::to_value(m.kind)?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{}",
            m.model,
            kind.as_str().unwrap_or_default(),
            u(m.cell.map(|c| c.lookahead)),
            u(m.cell.map(|c| c.branches)),
            u(m.cell.and_then(|c| c.depth)),
            m.n,
            m.graded,
            f(m.full_path_accuracy),
            f(m.next_step_accuracy),
            f(m.error_identification_accuracy),
            f(m.edge_hallucination_rate),
            f(m.length_stop_rate),
            m.api_error_rate,
            m.refusal_rate,
            f(m.mean_completion_tokens),
        )?;
    }
    Ok(())
}

/// Records keyed by example id, for resuming a run; later duplicates win.
pub fn index_records(records: &[EvalRecord]) -> HashMap<&str, &EvalRecord> {
    records.iter().map(|r| (r.example_id.as_str(), r)).collect()
}
