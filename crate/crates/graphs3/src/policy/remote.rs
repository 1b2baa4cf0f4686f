//! Chat-completion client: one blocking HTTP call per decision, with
//! exponential-backoff retries and a global in-flight request cap.

use super::{parse_decision, Policy, PolicyDecision, PolicyError};
use crate::env::{serialize_state, AgentState};
use crate::graph::TextualGraph;
use serde::Deserialize;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

/// Bearer token environment variable. Read per request; never configured
/// through files so checked-in configs stay secret-free.
pub const API_KEY_ENV: &str = "GRAPHS3_API_KEY";

/// Counting gate bounding concurrent requests across all episodes.
pub struct InFlightGate {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl InFlightGate {
    pub fn new(max: usize) -> Arc<Self> {
        Arc::new(Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        })
    }

    fn acquire(self: &Arc<Self>) -> GatePermit {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        GatePermit {
            gate: Arc::clone(self),
        }
    }

    pub fn capacity(&self) -> usize {
        self.max
    }
}

struct GatePermit {
    gate: Arc<InFlightGate>,
}

impl Drop for GatePermit {
    fn drop(&mut self) {
        let mut n = self.gate.in_flight.lock().unwrap();
        *n -= 1;
        self.gate.freed.notify_one();
    }
}

#[derive(Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub timeout: Duration,
    /// Additional attempts after the first; 3 by default.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff: Duration,
    pub gate: Arc<InFlightGate>,
}

impl RemoteConfig {
    pub fn new(endpoint: String, model_name: String, gate: Arc<InFlightGate>) -> Self {
        Self {
            endpoint,
            model_name,
            temperature: 0.7,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(250),
            gate,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

pub struct RemotePolicy {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemotePolicy {
    pub fn new(config: RemoteConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .expect("client construction is infallible with these options");
        Self { config, client }
    }

    fn call_once(&self, body: &serde_json::Value) -> Result<String, String> {
        let mut request = self.client.post(&self.config.endpoint).json(body);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("status {status}"));
        }
        let parsed: ChatResponse = response.json().map_err(|e| e.to_string())?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "empty choices".to_string())
    }

    /// One completion call with retries. The request body is identical
    /// across retries. Also serves answer-generation callers outside the
    /// episode loop.
    pub fn complete_prompt(&self, prompt: &str) -> Result<String, PolicyError> {
        let body = serde_json::json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let _permit = self.config.gate.acquire();
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * 2u32.pow(attempt - 1));
            }
            match self.call_once(&body) {
                Ok(content) => return Ok(content),
                Err(detail) => last_error = detail,
            }
        }
        Err(PolicyError::Remote {
            attempts,
            detail: last_error,
        })
    }
}

impl Policy for RemotePolicy {
    fn decide(
        &mut self,
        _graph: &TextualGraph,
        state: &AgentState,
    ) -> Result<PolicyDecision, PolicyError> {
        let prompt = serialize_state(state);
        let content = self.complete_prompt(&prompt)?;
        parse_decision(&content).map_err(|error| PolicyError::Parse {
            raw: content,
            error,
        })
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}
