use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "HYBRIDRANK_API_KEY";

const BODY_EXCERPT: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after every further failure.
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            backoff_base_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, failed_attempts: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1 << failed_attempts.saturating_sub(1).min(20)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmEndpoint {
    /// Base URL such that `{base_url}/chat/completions` is the completion route.
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_concurrency() -> usize {
    4
}

impl LlmEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        LlmEndpoint {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            timeout_secs: default_timeout(),
            max_concurrency: default_concurrency(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidEndpoint(m.to_string()));
        if !(self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        if self.max_concurrency < 1 {
            return bad("max_concurrency must be at least 1");
        }
        if !(self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive");
        }
        if self.retry.max_attempts < 1 {
            return bad("retry.max_attempts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint answered {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("environment variable {0} is not set")]
    MissingCredential(&'static str),
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
}

/// First choice's message text, with bookkeeping for the call.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub latency: Duration,
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

/// Blocking chat-completion client.
pub struct LlmClient {
    endpoint: LlmEndpoint,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl LlmClient {
    pub fn new(endpoint: LlmEndpoint, api_key: Option<String>) -> Result<Self, LlmError> {
        endpoint.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| LlmError::InvalidEndpoint(e.to_string()))?;
        Ok(LlmClient { endpoint, api_key, http })
    }

    /// Reads the token from [`API_KEY_ENV`].
    pub fn from_env(endpoint: LlmEndpoint) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| LlmError::MissingCredential(API_KEY_ENV))?;
        LlmClient::new(endpoint, Some(key))
    }

    pub fn endpoint(&self) -> &LlmEndpoint {
        &self.endpoint
    }

    /// Sends one user-role prompt, retrying transport failures, 429 and 5xx.
    pub fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        let url = format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.endpoint.model_name,
            "temperature": self.endpoint.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let start = Instant::now();
        let policy = &self.endpoint.retry;
        let mut last = String::new();
        for attempt in 1..=policy.max_attempts {
            if attempt > 1 {
                std::thread::sleep(policy.delay(attempt - 1));
            }
            let mut req = self.http.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("attempt {attempt}: {e}");
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            let text = resp.text().unwrap_or_default();
            if status.as_u16() == 429 || status.is_server_error() {
                log::warn!("attempt {attempt}: status {status}");
                last = format!("status {}: {}", status.as_u16(), excerpt(&text));
                continue;
            }
            if !status.is_success() {
                return Err(LlmError::Protocol {
                    status: status.as_u16(),
                    body: excerpt(&text),
                });
            }
            let content = serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| v["choices"][0]["message"]["content"].as_str().map(str::to_string));
            return match content {
                Some(text) => Ok(Completion {
                    text,
                    attempts: attempt,
                    latency: start.elapsed(),
                }),
                None => Err(LlmError::Protocol {
                    status: status.as_u16(),
                    body: excerpt(&text),
                }),
            };
        }
        Err(LlmError::Transport {
            attempts: policy.max_attempts,
            message: last,
        })
    }
}

/// Runs `f` over `jobs` on at most `max_concurrency` threads; results keep job order.
pub fn complete_batch<T, R, F>(jobs: &[T], max_concurrency: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..max_concurrency.max(1).min(jobs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let r = f(job);
                slots.lock().expect("no poisoned worker")[k] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned worker")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    /// Serves the canned (status, body) responses in order, one per connection,
    /// and records each request body.
    fn stub(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut req = vec![0; len];
                reader.read_exact(&mut req).unwrap();
                log.lock().unwrap().push(String::from_utf8(req).unwrap());
                let mut stream = reader.into_inner();
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        (url, seen)
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn client(url: &str) -> LlmClient {
        let mut ep = LlmEndpoint::new(url, "stub-model");
        ep.retry.backoff_base_ms = 1;
        ep.timeout_secs = 2.0;
        LlmClient::new(ep, Some("k".into())).unwrap()
    }

    #[test]
    fn returns_message_text() {
        let (url, seen) = stub(vec![(200, ok_body("1. Dune"))]);
        let c = client(&url).complete("rank these").unwrap();
        assert_eq!(c.text, "1. Dune");
        assert_eq!(c.attempts, 1);
        let req: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(req["model"], "stub-model");
        assert_eq!(req["messages"][0]["content"], "rank these");
    }

    #[test]
    fn retries_rate_limits() {
        let (url, _) = stub(vec![(429, "{}".into()), (429, "{}".into()), (200, ok_body("ok"))]);
        let c = client(&url).complete("p").unwrap();
        assert_eq!(c.attempts, 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, _) = stub(vec![(400, "{\"error\":\"bad\"}".into())]);
        match client(&url).complete("p") {
            Err(LlmError::Protocol { status, body }) => {
                assert_eq!(status, 400);
                assert!(body.contains("bad"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn timeouts_exhaust_attempts() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        std::thread::spawn(move || {
            let mut held = Vec::new();
            for s in listener.incoming() {
                held.push(s);
            }
        });
        let mut ep = LlmEndpoint::new(url, "m");
        ep.timeout_secs = 0.2;
        ep.retry = RetryPolicy {
            max_attempts: 2,
            backoff_base_ms: 1,
        };
        match LlmClient::new(ep, None).unwrap().complete("p") {
            Err(LlmError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn endpoint_validation() {
        let mut ep = LlmEndpoint::new("http://x", "m");
        ep.max_concurrency = 0;
        assert!(ep.validate().is_err());
        ep.max_concurrency = 1;
        ep.temperature = -1.0;
        assert!(ep.validate().is_err());
    }

    #[test]
    fn batch_preserves_order() {
        let jobs: Vec<u64> = (0..50).collect();
        let out = complete_batch(&jobs, 4, |&j| {
            std::thread::sleep(Duration::from_micros((50 - j) * 10));
            j * 2
        });
        assert_eq!(out, jobs.iter().map(|j| j * 2).collect::<Vec<_>>());
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            max_attempts: 5,
            backoff_base_ms: 100,
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(3), Duration::from_millis(400));
    }
}
