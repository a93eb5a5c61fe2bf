//! Text-generation clients: a deterministic stub and an HTTPS chat-completions client.

use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::persona::{Prompt, TranscriptLine};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// `stub` or `http`.
    pub provider: String,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub attempts: u32,
    pub timeout_s: f64,
    pub max_words: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            provider: "stub".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            temperature: 0.9,
            max_tokens: 60,
            api_key_env: Some("OPENAI_API_KEY".into()),
            attempts: 3,
            timeout_s: 20.0,
            max_words: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl From<&GeneratorConfig> for GenerationParams {
    fn from(c: &GeneratorConfig) -> Self {
        GenerationParams { model: c.model.clone(), temperature: c.temperature, max_tokens: c.max_tokens }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenerationError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("empty completion")]
    Empty,
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

pub trait TextGenerator: Send + Sync {
    fn complete(
        &self,
        system_prompt: &str,
        transcript: &[TranscriptLine],
        params: &GenerationParams,
    ) -> std::result::Result<String, GenerationError>;
}

/// Deterministic replies: a greeting before the agent's first message, then
/// a stance-flavoured echo of the longest word in the latest message.
#[derive(Debug, Clone, Default)]
pub struct StubGenerator;

impl TextGenerator for StubGenerator {
    fn complete(
        &self,
        system_prompt: &str,
        transcript: &[TranscriptLine],
        _params: &GenerationParams,
    ) -> std::result::Result<String, GenerationError> {
        if system_prompt.contains(super::persona::FIRST_INTERACTION_NOTE) {
            return Ok("Hi everyone".into());
        }
        let keyword = transcript
            .last()
            .and_then(|l| {
                l.text
                    .split_whitespace()
                    .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
                    .filter(|w| !w.is_empty())
                    .fold(None::<String>, |best, w| match best {
                        Some(b) if b.len() >= w.len() => Some(b),
                        _ => Some(w),
                    })
            })
            .unwrap_or_else(|| "this".into());
        if system_prompt.contains("Respond warmly") {
            Ok(format!("good point about {keyword}, what do u think?"))
        } else {
            Ok(format!("not convinced about {keyword} tbh"))
        }
    }
}

/// OpenAI-style `chat/completions` client over HTTPS.
pub struct HttpGenerator {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(cfg: &GeneratorConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let api_key = cfg.api_key_env.as_ref().and_then(|k| std::env::var(k).ok());
        Ok(HttpGenerator { endpoint: cfg.endpoint.clone(), api_key, client })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl TextGenerator for HttpGenerator {
    fn complete(
        &self,
        system_prompt: &str,
        transcript: &[TranscriptLine],
        params: &GenerationParams,
    ) -> std::result::Result<String, GenerationError> {
        let chat: String = transcript.iter().map(|l| format!("{}: {}\n", l.pseudonym, l.text)).collect();
        let body = serde_json::json!({
            "model": params.model,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": format!("Chat so far:\n{chat}\nWrite your next message.")},
            ],
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| GenerationError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(GenerationError::Transport(format!("HTTP {}", resp.status())));
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| GenerationError::Transport(e.to_string()))?;
        parsed.choices.into_iter().next().and_then(|c| c.message.content).ok_or(GenerationError::Empty)
    }
}

pub fn build_generator(cfg: &GeneratorConfig) -> Result<Box<dyn TextGenerator>> {
    match cfg.provider.as_str() {
        "stub" => Ok(Box::new(StubGenerator)),
        "http" => Ok(Box::new(HttpGenerator::new(cfg)?)),
        other => Err(Error::Config(format!("unknown generator provider `{other}`"))),
    }
}

/// Keeps at most `max_words` whitespace tokens.
pub fn truncate_words(text: &str, max_words: usize) -> String {
    text.split_whitespace().take(max_words).collect::<Vec<_>>().join(" ")
}

/// Generates one reply, retrying transport failures and empty completions.
pub fn generate_reply(
    client: &dyn TextGenerator,
    prompt: &Prompt,
    params: &GenerationParams,
    max_words: usize,
    attempts: u32,
) -> std::result::Result<String, GenerationError> {
    let system = prompt.system_text();
    let mut last = GenerationError::Empty;
    for attempt in 1..=attempts.max(1) {
        match client.complete(&system, &prompt.transcript, params) {
            Ok(text) => {
                let reply = truncate_words(text.trim(), max_words);
                if !reply.is_empty() {
                    return Ok(reply);
                }
                last = GenerationError::Empty;
            }
            Err(e) => {
                warn!("generation attempt {attempt} failed: {e}");
                last = e;
            }
        }
    }
    Err(GenerationError::Exhausted { attempts: attempts.max(1), last: last.to_string() })
}
