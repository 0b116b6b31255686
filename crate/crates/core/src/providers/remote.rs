//! Remote LLM judge over a chat-completion-shaped HTTP endpoint, with
//! retry/backoff, an in-flight cap, a per-minute rate limit and a
//! record/replay transport for offline tests.

use std::collections::{HashMap, VecDeque};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use once_regex::decimal_regex;
use serde::{Deserialize, Serialize};

use super::judge::CorrectnessJudge;
use super::{ItemRef, ProviderError, SimilarityProvider, SimilarityTask};
use crate::formats;

const CORRECTNESS_TEMPLATE: &str = include_str!("../../prompts/correctness.txt");

pub const ENV_API_KEY: &str = "CLUES_API_KEY";
pub const ENV_API_URL: &str = "CLUES_API_URL";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_format: Option<serde_json::Value>,
}

impl ChatRequest {
    fn key(&self) -> String {
        serde_json::to_string(self).expect("request serialises")
    }
}

/// Sends one request and returns the assistant message text.
pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

/// Blocking HTTP transport with bearer-token auth.
pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpTransport { url: url.into(), api_key, client })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = serde_json::to_vec(request).map_err(|e| ProviderError::Transport(e.to_string()))?;
        let mut req = self.client.post(&self.url).header("content-type", "application/json").body(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Http { status: status.as_u16(), body: text });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| ProviderError::Transport(format!("bad completion body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Transport("completion has no choices".into()))
    }
}

/// Replies from a fixed script, in order. Useful as a fake endpoint.
#[derive(Default)]
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<String, String>>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedTransport {
            script: Mutex::new(responses.into_iter().map(|s| Ok(s.into())).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Queue a transport failure.
    pub fn push_failure(&self, message: impl Into<String>) {
        self.script.lock().unwrap().push_back(Err(message.into()));
    }

    pub fn push_response(&self, text: impl Into<String>) {
        self.script.lock().unwrap().push_back(Ok(text.into()));
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl Transport for ScriptedTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.seen.lock().unwrap().push(request.clone());
        match self.script.lock().unwrap().pop_front() {
            Some(Ok(text)) => Ok(text),
            Some(Err(msg)) => Err(ProviderError::Transport(msg)),
            None => Err(ProviderError::Transport("script exhausted".into())),
        }
    }
}

/// A recorded request/response pair; one JSON object per fixture line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: ChatRequest,
    pub response: String,
}

/// Wraps a transport and records every successful exchange.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<Vec<Exchange>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().unwrap().clone()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProviderError> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for ex in self.log.lock().unwrap().iter() {
            serde_json::to_writer(&mut out, ex).map_err(|e| ProviderError::Io(e.into()))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let response = self.inner.complete(request)?;
        self.log.lock().unwrap().push(Exchange { request: request.clone(), response: response.clone() });
        Ok(response)
    }
}

/// Serves responses from recorded exchanges, matched on the full request.
/// Identical requests recorded several times are replayed in order.
pub struct ReplayTransport {
    by_request: HashMap<String, Vec<String>>,
    cursor: Mutex<HashMap<String, usize>>,
}

impl ReplayTransport {
    pub fn new(exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        let mut by_request: HashMap<String, Vec<String>> = HashMap::new();
        for ex in exchanges {
            by_request.entry(ex.request.key()).or_default().push(ex.response);
        }
        ReplayTransport { by_request, cursor: Mutex::new(HashMap::new()) }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let exchanges: Vec<Exchange> = formats::read_jsonl(path)
            .map_err(|e| ProviderError::Config(format!("fixture {}: {e}", path.display())))?;
        Ok(Self::new(exchanges))
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let key = request.key();
        let responses = self.by_request.get(&key).ok_or(ProviderError::ReplayMiss)?;
        let mut cursor = self.cursor.lock().unwrap();
        let idx = cursor.entry(key).or_insert(0);
        let out = responses.get(*idx).cloned().ok_or(ProviderError::ReplayMiss)?;
        *idx += 1;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    /// Total attempts per query, first try included.
    pub max_attempts: usize,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
    /// Ask for JSON-schema structured output.
    pub structured_output: bool,
    pub timeout_secs: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: String::new(),
            api_key: None,
            model: "judge".into(),
            max_attempts: 3,
            backoff_base_ms: 500,
            max_in_flight: 4,
            requests_per_minute: None,
            structured_output: false,
            timeout_secs: 60,
        }
    }
}

impl EndpointConfig {
    /// Reads `CLUES_API_URL` and `CLUES_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, ProviderError> {
        let url = std::env::var(ENV_API_URL).map_err(|_| ProviderError::Config(format!("{ENV_API_URL} is not set")))?;
        let api_key = std::env::var(ENV_API_KEY).ok();
        Ok(EndpointConfig { url, api_key, model: model.into(), ..Default::default() })
    }
}

struct LimiterState {
    in_flight: usize,
    window: VecDeque<Instant>,
}

/// In-flight cap plus a sliding one-minute request budget.
struct RateLimiter {
    max_in_flight: usize,
    per_minute: Option<u32>,
    state: Mutex<LimiterState>,
    cv: Condvar,
}

struct Permit<'a>(&'a RateLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.state.lock().unwrap().in_flight -= 1;
        self.0.cv.notify_one();
    }
}

impl RateLimiter {
    fn new(max_in_flight: usize, per_minute: Option<u32>) -> Self {
        RateLimiter {
            max_in_flight: max_in_flight.max(1),
            per_minute,
            state: Mutex::new(LimiterState { in_flight: 0, window: VecDeque::new() }),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let minute = Duration::from_secs(60);
        let mut state = self.state.lock().unwrap();
        loop {
            let now = Instant::now();
            while state.window.front().is_some_and(|t| now.duration_since(*t) >= minute) {
                state.window.pop_front();
            }
            let budget_ok = self.per_minute.is_none_or(|cap| state.window.len() < cap as usize);
            if state.in_flight < self.max_in_flight && budget_ok {
                state.in_flight += 1;
                if self.per_minute.is_some() {
                    state.window.push_back(now);
                }
                return Permit(self);
            }
            let wait = if budget_ok {
                Duration::from_millis(50)
            } else {
                minute.saturating_sub(now.duration_since(*state.window.front().unwrap()))
            };
            state = self.cv.wait_timeout(state, wait).unwrap().0;
        }
    }
}

/// LLM-as-a-judge for similarity scores and correctness verdicts.
pub struct LlmJudge {
    config: EndpointConfig,
    transport: Box<dyn Transport>,
    limiter: RateLimiter,
}

impl LlmJudge {
    pub fn new(config: EndpointConfig, transport: Box<dyn Transport>) -> Self {
        let limiter = RateLimiter::new(config.max_in_flight, config.requests_per_minute);
        LlmJudge { config, transport, limiter }
    }

    /// Judge talking HTTP to `config.url`.
    pub fn http(config: EndpointConfig) -> Result<Self, ProviderError> {
        if config.url.is_empty() {
            return Err(ProviderError::Config("endpoint url is empty".into()));
        }
        let transport =
            HttpTransport::new(config.url.clone(), config.api_key.clone(), Duration::from_secs(config.timeout_secs))?;
        Ok(Self::new(config, Box::new(transport)))
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub(crate) fn request(&self, prompt: String, schema: Option<serde_json::Value>) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt }],
            temperature: 0.0,
            response_format: if self.config.structured_output { schema } else { None },
        }
    }

    /// Sends `request` until `parse` accepts a response or attempts run out.
    pub(crate) fn query<T>(
        &self,
        request: &ChatRequest,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<T, ProviderError> {
        let attempts = self.config.max_attempts.max(1);
        let mut last_response: Option<String> = None;
        let mut last_error: Option<ProviderError> = None;
        for attempt in 0..attempts {
            if attempt > 0 && self.config.backoff_base_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_base_ms << (attempt - 1)));
            }
            let result = {
                let _permit = self.limiter.acquire();
                self.transport.complete(request)
            };
            match result {
                Ok(text) => match parse(&text) {
                    Some(value) => return Ok(value),
                    None => {
                        log::warn!("unparsable judge response (attempt {}): {text:?}", attempt + 1);
                        last_response = Some(text);
                        last_error = None;
                    }
                },
                Err(e) => {
                    log::warn!("judge request failed (attempt {}): {e}", attempt + 1);
                    last_error = Some(e);
                }
            }
        }
        match (last_error, last_response) {
            (Some(e), _) => Err(e),
            (None, Some(text)) => Err(ProviderError::Parse { attempts, last_response: text }),
            (None, None) => unreachable!("at least one attempt is made"),
        }
    }

    pub fn score(&self, a: &str, b: &str, task: &SimilarityTask) -> Result<f64, ProviderError> {
        let schema = serde_json::json!({
            "type": "json_schema",
            "json_schema": {"name": "similarity", "schema": {
                "type": "object", "properties": {"score": {"type": "number"}}, "required": ["score"]}}
        });
        let req = self.request(task.render(a, b), Some(schema));
        self.query(&req, parse_score)
    }
}

impl SimilarityProvider for LlmJudge {
    fn id(&self) -> String {
        format!("llm:{}@{}", self.config.model, self.config.url)
    }

    fn similarity(&self, a: &ItemRef<'_>, b: &ItemRef<'_>, task: &SimilarityTask) -> Result<f64, ProviderError> {
        for item in [a, b] {
            if item.text.trim().is_empty() {
                return Err(ProviderError::EmptyText(item.id.to_string()));
            }
        }
        self.score(a.text, b.text, task)
    }
}

impl CorrectnessJudge for LlmJudge {
    fn is_correct(&self, question: &str, interpretation: &str, gold: &str, answer: &str) -> Result<bool, ProviderError> {
        let prompt = CORRECTNESS_TEMPLATE
            .replace("{question}", question)
            .replace("{interpretation}", interpretation)
            .replace("{gold}", gold)
            .replace("{answer}", answer);
        let schema = serde_json::json!({
            "type": "json_schema",
            "json_schema": {"name": "verdict", "schema": {
                "type": "object", "properties": {"correct": {"type": "boolean"}}, "required": ["correct"]}}
        });
        let req = self.request(prompt, Some(schema));
        self.query(&req, parse_verdict)
    }
}

fn last_line(text: &str) -> Option<&str> {
    text.lines().map(str::trim).rev().find(|l| !l.is_empty())
}

/// Extracts a score: `{"score": x}` when the response is a JSON object,
/// otherwise the first decimal on the final non-empty line.
pub fn parse_score(text: &str) -> Option<f64> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(trimmed) {
            return v.get("score").and_then(|s| s.as_f64()).filter(|x| x.is_finite());
        }
    }
    let line = last_line(text)?;
    decimal_regex().find(line).and_then(|m| m.as_str().parse::<f64>().ok()).filter(|x| x.is_finite())
}

/// Extracts a yes/no verdict from `{"correct": bool}` or the final line.
pub fn parse_verdict(text: &str) -> Option<bool> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(trimmed) {
            return v.get("correct").and_then(|c| c.as_bool());
        }
    }
    let line = last_line(text)?.to_lowercase();
    let word: String = line.chars().take_while(|c| c.is_alphabetic()).collect();
    match word.as_str() {
        "yes" | "correct" | "true" => Some(true),
        "no" | "incorrect" | "false" => Some(false),
        _ => None,
    }
}

mod once_regex {
    use regex::Regex;
    use std::sync::OnceLock;

    pub fn decimal_regex() -> &'static Regex {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?").unwrap())
    }
}
