//! Blocking client for a chat-completions compatible endpoint.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    correction_prompt, estimate_tokens, extract_program, extract_summary, initial_prompt,
    summary_prompt, truncate_words, word_count, CreditLine, Generator, GeneratorError,
    GeneratorErrorKind, GeneratorResponse, ProblemContext, QueryCost, SUMMARY_WORD_CAP,
};

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    1000
}

fn default_timeout_seconds() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Retries after the first attempt on transport or server errors.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubled after each failed attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_seconds")]
    pub timeout_seconds: u64,
    /// Smallest cost charged per query.
    #[serde(default = "default_min_cost")]
    pub min_cost: u64,
}

fn default_min_cost() -> u64 {
    1
}

#[derive(Debug)]
pub struct LiveGenerator {
    config: LiveConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    min_cost: u64,
    word_cap: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(String, QueryCost),
    /// Worth retrying: connection problems, timeouts, 429 and 5xx.
    Transient(String),
    Fatal(String),
}

impl LiveGenerator {
    /// Fails when the API key variable is unset or empty.
    pub fn new(config: LiveConfig) -> Result<Self, String> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| format!("environment variable {} is not set", config.api_key_env))?;
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: LiveConfig, api_key: String) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_seconds))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            api_key,
            client,
            min_cost: config.min_cost,
            word_cap: SUMMARY_WORD_CAP,
            config,
        })
    }

    fn attempt(&self, prompt: &str) -> Attempt {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let response = match self.client.post(url).bearer_auth(&self.api_key).json(&body).send() {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Transient(format!("HTTP {status}"));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Attempt::Fatal(format!("HTTP {status}: {}", text.trim()));
        }
        let parsed: ChatResponse = match response.json() {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(format!("malformed response: {e}")),
        };
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let (input, output) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (estimate_tokens(prompt), estimate_tokens(&content)),
        };
        Attempt::Done(content, QueryCost::new(input, output, self.min_cost))
    }

    /// Sends `prompt`, retrying transient failures with exponential backoff.
    /// Each failed attempt is charged the estimated prompt cost.
    fn query(&self, prompt: &str) -> Result<GeneratorResponse, GeneratorError> {
        let failed_attempt = QueryCost::new(estimate_tokens(prompt), 0, self.min_cost);
        let mut spent = QueryCost::default();
        let mut delay = self.config.backoff_ms;
        for attempt in 0..=self.config.max_retries {
            match self.attempt(prompt) {
                Attempt::Done(payload, cost) => {
                    return Ok(GeneratorResponse {
                        payload,
                        cost: spent.add(cost),
                    })
                }
                Attempt::Fatal(message) => {
                    return Err(GeneratorError {
                        kind: GeneratorErrorKind::BadResponse,
                        message,
                        cost: spent.add(failed_attempt),
                    })
                }
                Attempt::Transient(message) => {
                    spent = spent.add(failed_attempt);
                    if attempt == self.config.max_retries {
                        return Err(GeneratorError {
                            kind: GeneratorErrorKind::Transport,
                            message: format!(
                                "giving up after {} attempts: {message}",
                                self.config.max_retries + 1
                            ),
                            cost: spent,
                        });
                    }
                    thread::sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                }
            }
        }
        unreachable!("the final attempt always returns")
    }
}

impl Generator for LiveGenerator {
    fn generate_initial(&mut self, ctx: &ProblemContext) -> Result<GeneratorResponse, GeneratorError> {
        let mut r = self.query(&initial_prompt(ctx))?;
        r.payload = extract_program(&r.payload);
        if r.payload.trim().is_empty() {
            return Err(GeneratorError {
                kind: GeneratorErrorKind::BadResponse,
                message: "empty program".into(),
                cost: r.cost,
            });
        }
        Ok(r)
    }

    fn generate_corrections(
        &mut self,
        ctx: &ProblemContext,
        reference: &str,
        summary: Option<&str>,
    ) -> Result<GeneratorResponse, GeneratorError> {
        self.query(&correction_prompt(ctx, reference, summary))
    }

    fn update_summary(
        &mut self,
        ctx: &ProblemContext,
        previous: &str,
        credits: &[CreditLine],
    ) -> Result<GeneratorResponse, GeneratorError> {
        let mut r = self.query(&summary_prompt(ctx, previous, credits, self.word_cap))?;
        let summary = extract_summary(&r.payload);
        r.payload = if word_count(&summary) > self.word_cap {
            truncate_words(&summary, self.word_cap)
        } else {
            summary
        };
        Ok(r)
    }
}
