//! Executes conversation plans against chat-completion providers.

mod http;
mod replay;
mod runner;

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::{Corpus, OptionId};
use crate::parsing::{extract_choice, Choice};
use crate::protocol::{
    build_conversation, next_message, Action, ConversationPlan, Message, Mode, Origin,
    ProtocolError, Role, TrialSpec,
};
use crate::records::{RunRecord, TrialStatus};

pub use http::HttpProvider;
pub use replay::{make_replay_provider, ReplayAnswer, ReplayEntry, ReplayProvider};
pub use runner::{run_trials, ProviderSet, RunOptions, RunSummary};

/// Decoding temperature for every generation.
pub const TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited by provider (HTTP 429)")]
    RateLimited,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Response(String),
    #[error("replay error for trial {trial_id}: {reason}")]
    Replay { trial_id: String, reason: String },
    #[error("cannot load fixtures from {path}: {reason}")]
    Load { path: PathBuf, reason: String },
    #[error("credentials: {0}")]
    Auth(String),
    #[error("provider config: {0}")]
    Config(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("record I/O: {0}")]
    Io(String),
}

impl ClientError {
    /// Transport failures, 429 and 5xx are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) | ClientError::RateLimited => true,
            ClientError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

impl From<ProtocolError> for ClientError {
    fn from(e: ProtocolError) -> Self {
        ClientError::Protocol(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimit {
    pub requests_per_second: f64,
    #[serde(default = "default_burst")]
    pub burst: u32,
}

fn default_burst() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub replay_dir: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model_name: String,
    pub auth_env_var: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    pub rate_limit: Option<RateLimit>,
}

impl ProviderConfig {
    pub fn replay(dir: PathBuf) -> Self {
        ProviderConfig {
            kind: ProviderKind::Replay,
            replay_dir: Some(dir),
            base_url: None,
            model_name: String::new(),
            auth_env_var: None,
            timeout_secs: 0,
            max_retries: RetryPolicy::default().max_retries,
            parallelism: 1,
            rate_limit: None,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.parallelism == 0 {
            return Err(ClientError::Config("parallelism must be at least 1".into()));
        }
        match self.kind {
            ProviderKind::Replay if self.replay_dir.is_none() => Err(ClientError::Config(
                "replay provider needs a fixture directory".into(),
            )),
            ProviderKind::HttpChat if self.base_url.is_none() || self.auth_env_var.is_none() => {
                Err(ClientError::Config(
                    "http provider needs base_url and auth_env_var".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Instantiates the provider. Live providers read their credentials
    /// here, so a missing variable fails before any request is sent.
    pub fn build(&self) -> Result<Box<dyn ChatProvider>, ClientError> {
        self.validate()?;
        match self.kind {
            ProviderKind::Replay => Ok(Box::new(make_replay_provider(
                self.replay_dir.as_deref().expect("validated"),
            )?)),
            ProviderKind::HttpChat => Ok(Box::new(HttpProvider::from_config(self)?)),
        }
    }
}

/// One generation request: the conversation so far plus the slot to fill.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub trial_id: &'a str,
    pub slot: &'a str,
    pub model_id: &'a str,
    pub messages: &'a [Message],
    pub temperature: f64,
}

pub trait ChatProvider: Send + Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, ClientError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, ClientError> {
        (**self).generate(request)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, ClientError> {
        (**self).generate(request)
    }
}

/// Deterministic exponential backoff: `base * 2^attempt`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Self::default()
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }

    /// Calls `op` until it succeeds, fails permanently, or retries run out.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, ClientError>,
        sleep: &dyn Fn(Duration),
    ) -> Result<T, ClientError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let d = self.delay(attempt);
                    tracing::warn!(attempt, delay_ms = d.as_millis() as u64, error = %e, "retrying");
                    sleep(d);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Token bucket shared by every request to one provider.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(limit: RateLimit) -> Self {
        let burst = f64::from(limit.burst.max(1));
        RateLimiter {
            rate: limit.requests_per_second.max(f64::MIN_POSITIVE),
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// Takes one token, returning how long the caller must wait first.
    pub fn reserve(&self) -> Duration {
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        let now = Instant::now();
        let elapsed = now.saturating_duration_since(state.1).as_secs_f64();
        state.0 = (state.0 + elapsed * self.rate).min(self.burst) - 1.0;
        state.1 = now;
        if state.0 >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-state.0 / self.rate)
        }
    }

    pub fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub trial_id: String,
    pub model_id: String,
    pub messages: Vec<Message>,
    pub decode_params: DecodeParams,
    /// Wall-clock milliseconds since the Unix epoch, one per message.
    /// Excluded from content comparisons.
    #[serde(default)]
    pub timestamps_ms: Vec<u64>,
}

impl Transcript {
    pub fn new(trial_id: &str, model_id: &str) -> Self {
        Transcript {
            trial_id: trial_id.to_string(),
            model_id: model_id.to_string(),
            messages: Vec::new(),
            decode_params: DecodeParams {
                temperature: TEMPERATURE,
            },
            timestamps_ms: Vec::new(),
        }
    }

    pub fn slot_text(&self, slot: &str) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.origin == Origin::Generated && m.slot.as_deref() == Some(slot))
            .map(|m| m.text.as_str())
    }

    pub fn generated_count(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.origin == Origin::Generated)
            .count()
    }

    fn push(&mut self, message: Message) {
        self.messages.push(message);
        self.timestamps_ms.push(now_ms());
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Drives `plan` to completion, filling generated slots from `provider`.
///
/// On failure the partial transcript is returned alongside the error so
/// the caller can record it.
#[allow(clippy::result_large_err)]
pub fn execute_plan(
    plan: &ConversationPlan,
    spec: &TrialSpec,
    provider: &dyn ChatProvider,
    retry: &RetryPolicy,
    sleep: &dyn Fn(Duration),
    mut after_generation: impl FnMut(&str, &str) -> Result<(), ClientError>,
) -> Result<Transcript, (Transcript, ClientError)> {
    let mut t = Transcript::new(&spec.trial_id, &spec.model_id);
    loop {
        let action = match next_message(plan, &t.messages) {
            Ok(a) => a,
            Err(e) => return Err((t, e.into())),
        };
        match action {
            Action::Done => return Ok(t),
            Action::SendFixed { role, text } => t.push(Message {
                role,
                text,
                origin: Origin::Fixed,
                slot: None,
            }),
            Action::AwaitGeneration { slot } => {
                let request = GenerationRequest {
                    trial_id: &spec.trial_id,
                    slot: &slot,
                    model_id: &spec.model_id,
                    messages: &t.messages,
                    temperature: TEMPERATURE,
                };
                let text = match retry.run(|| provider.generate(&request), sleep) {
                    Ok(text) => text,
                    Err(e) => return Err((t, e)),
                };
                if let Err(e) = after_generation(&slot, &text) {
                    t.push(generated(slot, text));
                    return Err((t, e));
                }
                t.push(generated(slot, text));
            }
        }
    }
}

fn generated(slot: String, text: String) -> Message {
    Message {
        role: Role::Assistant,
        text,
        origin: Origin::Generated,
        slot: Some(slot),
    }
}

/// Plans and runs one trial, producing the record to persist.
///
/// In free-choice mode a neutral or refusing choice stops the trial, which
/// is then recorded as invalid.
pub fn execute_trial(
    corpus: &Corpus,
    spec: &TrialSpec,
    provider: &dyn ChatProvider,
    retry: &RetryPolicy,
    sleep: &dyn Fn(Duration),
) -> RunRecord {
    let plan = match build_conversation(corpus, spec) {
        Ok(p) => p,
        Err(e) => {
            return RunRecord::new(
                spec.clone(),
                TrialStatus::Failed,
                Transcript::new(&spec.trial_id, &spec.model_id),
                Some(e.to_string()),
                None,
            )
        }
    };
    let mut chosen: Option<OptionId> = spec.fed_option;
    let choice_slot = plan.choice_slot.clone();
    let check = |slot: &str, text: &str| -> Result<(), ClientError> {
        if spec.mode != Mode::FreeChoice || choice_slot.as_deref() != Some(slot) {
            return Ok(());
        }
        let story = corpus
            .story(&spec.story_id)
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        match extract_choice(text, story) {
            Choice::Neutral => Err(ClientError::Protocol(NEUTRAL_CHOICE.into())),
            c => {
                chosen = c.option();
                Ok(())
            }
        }
    };
    match execute_plan(&plan, spec, provider, retry, sleep, check) {
        Ok(t) => RunRecord::new(spec.clone(), TrialStatus::Completed, t, None, chosen),
        Err((t, ClientError::Protocol(msg))) if msg == NEUTRAL_CHOICE => {
            RunRecord::new(spec.clone(), TrialStatus::Invalid, t, Some(msg), None)
        }
        Err((t, e)) => RunRecord::new(
            spec.clone(),
            TrialStatus::Failed,
            t,
            Some(e.to_string()),
            None,
        ),
    }
}

const NEUTRAL_CHOICE: &str = "free choice was neutral or refused";
