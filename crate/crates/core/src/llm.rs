//! Document-level augmentation through an external chat-completion endpoint:
//! ratio-targeted generation plans, 2-few-shot prompt construction, an HTTP
//! client with retry/backoff and a shared request-rate cap, and validation /
//! ingestion of generated responses.
//!
//! The module is offline-first: everything is testable against a local stub
//! server, and dry runs emit prompts without any network call.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryId, Corpus, CorpusError, LabeledResponse, Origin};
use crate::features::tokenize;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("target minority {target} is below the current minority count {current}")]
    TargetBelowCurrent { target: usize, current: usize },
    #[error("prompt spec needs at least one exemplar")]
    NoExemplars,
    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("authentication failed (HTTP {0}); not retrying")]
    Auth(u16),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request failed after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: usize, last: String },
    #[error("malformed completion payload: {0}")]
    BadPayload(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// How many synthetic responses to generate for one category, given the
/// counts and a target minority size. All arithmetic is exact; the ratio is
/// rounded only for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub category: CategoryId,
    pub n_majority: usize,
    pub n_minority: usize,
    pub target_minority: usize,
    pub n_to_generate: usize,
    pub resulting_ratio: f64,
    pub ratio_threshold: f64,
}

impl AugmentationPlan {
    /// The ratio as reported: two decimals.
    pub fn ratio_display(&self) -> f64 {
        (self.resulting_ratio * 100.0).round() / 100.0
    }
}

pub const DEFAULT_RATIO_THRESHOLD: f64 = 10.0;

/// Plan generation toward an explicit minority target.
pub fn plan_generation(
    category: CategoryId,
    n_majority: usize,
    n_minority: usize,
    target_minority: usize,
) -> Result<AugmentationPlan, LlmError> {
    if target_minority < n_minority {
        return Err(LlmError::TargetBelowCurrent {
            target: target_minority,
            current: n_minority,
        });
    }
    Ok(AugmentationPlan {
        category,
        n_majority,
        n_minority,
        target_minority,
        n_to_generate: target_minority - n_minority,
        resulting_ratio: n_majority as f64 / target_minority as f64,
        ratio_threshold: DEFAULT_RATIO_THRESHOLD,
    })
}

/// Minimal minority count whose ratio meets the threshold:
/// `ceil(n_majority / ratio_threshold)`.
pub fn target_for_threshold(n_majority: usize, ratio_threshold: f64) -> usize {
    (n_majority as f64 / ratio_threshold).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub text: String,
}

/// Inputs for one prompt: the assessment item stem, exemplar minority
/// responses (two by default), and how many answers to request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub item_stem: String,
    pub exemplars: Vec<Exemplar>,
    pub n_requested: usize,
    pub template_id: String,
}

impl PromptSpec {
    pub fn new(item_stem: &str, exemplars: Vec<Exemplar>, n_requested: usize) -> Result<Self, LlmError> {
        if exemplars.is_empty() || exemplars.iter().any(|e| e.text.trim().is_empty()) {
            return Err(LlmError::NoExemplars);
        }
        Ok(Self {
            item_stem: item_stem.to_string(),
            exemplars,
            n_requested: n_requested.max(1),
            template_id: "few-shot-v1".to_string(),
        })
    }
}

fn count_words(n: usize) -> String {
    const WORDS: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve",
    ];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

/// Render the few-shot prompt: item framing, revise-in-your-own-way and
/// student-role instructions, the exemplar block, then the generation
/// request. Byte-deterministic for a fixed spec.
pub fn build_prompt(spec: &PromptSpec) -> String {
    let mut out = String::new();
    out.push_str("Assessment item:\n");
    out.push_str(spec.item_stem.trim());
    out.push_str("\n\n");
    let plural_exemplars = spec.exemplars.len() != 1;
    out.push_str(&format!(
        "From the item description, can you understand the following {} student {} and revise {} in your own way?\n",
        count_words(spec.exemplars.len()),
        if plural_exemplars { "responses" } else { "response" },
        if plural_exemplars { "them" } else { "it" },
    ));
    out.push_str("You are a student. Please understand the responses below and write a similar answer.\n");
    out.push_str(&format!(
        "The following {} {} students' answers to the question above, given separately.\n\n",
        count_words(spec.exemplars.len()),
        if plural_exemplars { "responses are" } else { "response is" },
    ));
    for e in &spec.exemplars {
        out.push_str(&format!("Student {}: \"{}\"\n\n", e.id, e.text));
    }
    let n = spec.n_requested;
    if n == 1 {
        out.push_str(
            "Now, can you analyze these students' responses and generate one new suitable answer that is a similar response and satisfies the same rubric criteria for the question? Reply with a numbered list.\n",
        );
    } else {
        out.push_str(&format!(
            "Now, can you analyze these students' responses and generate {} new suitable answers that are similar responses and satisfy the same rubric criteria for the question? Reply with a numbered list.\n",
            count_words(n),
        ));
    }
    out
}

/// HTTP client configuration. The API key is read from the named environment
/// variable at call time and never persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub timeout_secs: u64,
    pub requests_per_minute: usize,
    /// First retry delay; doubles per attempt.
    pub retry_initial_ms: u64,
    /// Rate-cap window (a minute in production; shrunk in tests).
    pub rate_window_ms: u64,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: "gpt-4".to_string(),
            api_key_env: "AUGFORGE_LLM_KEY".to_string(),
            temperature: 0.7,
            max_retries: 3,
            timeout_secs: 30,
            requests_per_minute: 60,
            retry_initial_ms: 500,
            rate_window_ms: 60_000,
        }
    }
}

/// Sliding-window request-rate cap shared across categories.
#[derive(Debug)]
pub struct RateLimiter {
    window: Duration,
    capacity: usize,
    stamps: Mutex<std::collections::VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(capacity: usize, window: Duration) -> Self {
        Self {
            window,
            capacity: capacity.max(1),
            stamps: Mutex::new(Default::default()),
        }
    }

    /// Block until a request slot is available, then claim it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut stamps = self.stamps.lock().expect("rate limiter lock");
                let now = Instant::now();
                while stamps.front().is_some_and(|&t| now.duration_since(t) >= self.window) {
                    stamps.pop_front();
                }
                if stamps.len() < self.capacity {
                    stamps.push_back(now);
                    return;
                }
                self.window - now.duration_since(*stamps.front().expect("nonempty"))
            };
            std::thread::sleep(wait.min(Duration::from_millis(50)));
        }
    }
}

/// One call's result: the parsed answers, or the raw text flagged when no
/// list structure could be found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationBatch {
    pub texts: Vec<String>,
    pub parse_failed: bool,
    pub raw: String,
}

/// Split a completion into answers by `1.` / `1)` / `-` / `*` list markers;
/// unmarked lines continue the current answer.
pub fn parse_answers(content: &str) -> GenerationBatch {
    fn strip_marker(line: &str) -> Option<&str> {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix('-').or_else(|| trimmed.strip_prefix('*')) {
            return Some(rest.trim_start());
        }
        let digits: String = trimmed.chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            return None;
        }
        let rest = &trimmed[digits.len()..];
        rest.strip_prefix('.')
            .or_else(|| rest.strip_prefix(')'))
            .map(str::trim_start)
    }

    let mut texts: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    for line in content.lines() {
        if let Some(item) = strip_marker(line) {
            if let Some(done) = current.take() {
                texts.push(done);
            }
            current = Some(item.to_string());
        } else if let Some(cur) = current.as_mut() {
            if !line.trim().is_empty() {
                cur.push(' ');
                cur.push_str(line.trim());
            }
        }
    }
    if let Some(done) = current.take() {
        texts.push(done);
    }
    let texts: Vec<String> = texts
        .into_iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    let parse_failed = texts.is_empty();
    GenerationBatch {
        texts,
        parse_failed,
        raw: content.to_string(),
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: MessageBody,
}

#[derive(Deserialize)]
struct MessageBody {
    content: String,
}

/// Chat-completions client: POSTs `{model, messages, temperature}` and reads
/// `choices[0].message.content`, with exponential backoff on transient
/// failures and the shared rate cap applied before every attempt.
pub struct LlmClient {
    config: LlmClientConfig,
    http: reqwest::blocking::Client,
    limiter: Arc<RateLimiter>,
}

impl LlmClient {
    pub fn new(config: LlmClientConfig) -> Result<Self, LlmError> {
        let limiter = Arc::new(RateLimiter::new(
            config.requests_per_minute,
            Duration::from_millis(config.rate_window_ms),
        ));
        Self::with_limiter(config, limiter)
    }

    pub fn with_limiter(config: LlmClientConfig, limiter: Arc<RateLimiter>) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::BadPayload(e.to_string()))?;
        Ok(Self {
            config,
            http,
            limiter,
        })
    }

    pub fn limiter(&self) -> Arc<RateLimiter> {
        Arc::clone(&self.limiter)
    }

    /// Send one prompt and parse the answers out of the completion.
    pub fn request_generations(&self, prompt: &str) -> Result<GenerationBatch, LlmError> {
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| LlmError::MissingApiKey(self.config.api_key_env.clone()))?;
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.temperature,
        };
        let mut last_error = String::new();
        let attempts = self.config.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.retry_initial_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
            self.limiter.acquire();
            let sent = self
                .http
                .post(&self.config.endpoint)
                .bearer_auth(&key)
                .json(&body)
                .send();
            match sent {
                Ok(response) => {
                    let status = response.status();
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(LlmError::Auth(status.as_u16()));
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_error = format!("HTTP {status}");
                        continue;
                    }
                    if !status.is_success() {
                        let body = response.text().unwrap_or_default();
                        return Err(LlmError::Status {
                            status: status.as_u16(),
                            body,
                        });
                    }
                    let payload: ChatResponse = response
                        .json()
                        .map_err(|e| LlmError::BadPayload(e.to_string()))?;
                    let content = payload
                        .choices
                        .first()
                        .map(|c| c.message.content.clone())
                        .ok_or_else(|| LlmError::BadPayload("no choices in response".into()))?;
                    return Ok(parse_answers(&content));
                }
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            }
        }
        Err(LlmError::ExhaustedRetries {
            attempts,
            last: last_error,
        })
    }
}

/// One-shot convenience wrapper around [`LlmClient::request_generations`].
pub fn request_generations(prompt: &str, config: &LlmClientConfig) -> Result<GenerationBatch, LlmError> {
    LlmClient::new(config.clone())?.request_generations(prompt)
}

/// Why a generated text was not ingested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestRejection {
    Empty,
    TooShort,
    Duplicate,
    PlanComplete,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestRecord {
    pub text: String,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection: Option<IngestRejection>,
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub merged: Corpus,
    pub accepted: Vec<LabeledResponse>,
    pub audit: Vec<IngestRecord>,
    /// Present when fewer texts were accepted than the plan called for.
    pub shortfall: Option<String>,
}

/// Validate generated texts and merge the survivors into the train corpus.
///
/// Rejects empty texts, texts under 10 tokens, and byte-duplicates of
/// original responses, exemplars, or earlier acceptances; stops once the
/// plan's count is reached. Accepted texts become responses with origin
/// `llm`, the target category at the minority label, and 0 elsewhere.
/// `id_offset` keeps generated ids unique across successive batches.
pub fn validate_and_ingest(
    texts: &[String],
    train: &Corpus,
    category: CategoryId,
    plan: &AugmentationPlan,
    exemplars: &[Exemplar],
    minority_label: u8,
    id_offset: usize,
) -> Result<IngestOutcome, LlmError> {
    let mut seen: std::collections::HashSet<String> =
        train.responses().iter().map(|r| r.text.clone()).collect();
    for e in exemplars {
        seen.insert(e.text.clone());
    }
    let mut audit = Vec::with_capacity(texts.len());
    let mut accepted: Vec<LabeledResponse> = Vec::new();
    for text in texts {
        let trimmed = text.trim();
        let rejection = if trimmed.is_empty() {
            Some(IngestRejection::Empty)
        } else if tokenize(trimmed).len() < 10 {
            Some(IngestRejection::TooShort)
        } else if seen.contains(trimmed) {
            Some(IngestRejection::Duplicate)
        } else if accepted.len() >= plan.n_to_generate {
            Some(IngestRejection::PlanComplete)
        } else {
            None
        };
        if rejection.is_none() {
            seen.insert(trimmed.to_string());
            let labels: BTreeMap<CategoryId, u8> = train
                .schema()
                .ids()
                .map(|c| (c, if c == category { minority_label } else { 0 }))
                .collect();
            accepted.push(LabeledResponse {
                id: format!("llm-c{category}-{:04}", id_offset + accepted.len()),
                text: trimmed.to_string(),
                labels,
                origin: Origin::Llm,
                parent_ids: exemplars.iter().map(|e| e.id.clone()).collect(),
            });
        }
        audit.push(IngestRecord {
            text: trimmed.to_string(),
            accepted: rejection.is_none(),
            rejection,
        });
    }
    let shortfall = if accepted.len() < plan.n_to_generate {
        Some(format!(
            "category {category}: ingested {} of {} planned responses",
            accepted.len(),
            plan.n_to_generate
        ))
    } else {
        None
    };
    if let Some(w) = &shortfall {
        log::warn!("llm: {w}");
    }
    let merged = train.extend(accepted.clone())?;
    Ok(IngestOutcome {
        merged,
        accepted,
        audit,
        shortfall,
    })
}

/// Audit record for one HTTP call: the prompt hash, the raw completion, and
/// what was parsed out of it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallAudit {
    pub category: CategoryId,
    pub prompt_sha256: String,
    pub raw_completion: String,
    pub parsed_texts: Vec<String>,
    pub parse_failed: bool,
    pub dry_run: bool,
}
