//! Blocking JSON-over-HTTP client shared by the remote providers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone)]
pub(crate) struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug)]
pub(crate) enum HttpFailure {
    /// Connection-level failure, or 503 after all attempts.
    Unreachable(String),
    /// Non-retryable status with the response body.
    Status(u16, String),
    /// 200 with a body that does not parse as the expected JSON.
    Decode(String),
}

#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    policy: RetryPolicy,
}

impl JsonClient {
    pub fn new(policy: RetryPolicy) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(policy.timeout).build();
        Self { agent, policy }
    }

    /// POSTs `body`, retrying transport errors and 503 with exponential
    /// backoff. Requests are idempotent, so retries are safe.
    #[allow(clippy::result_large_err)]
    pub fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
    ) -> Result<R, HttpFailure> {
        self.send(url, || self.agent.post(url).send_json(body))
    }

    #[allow(clippy::result_large_err)]
    pub fn get<R: DeserializeOwned>(&self, url: &str) -> Result<R, HttpFailure> {
        self.send(url, || self.agent.get(url).call())
    }

    fn send<R, F>(&self, url: &str, call: F) -> Result<R, HttpFailure>
    where
        R: DeserializeOwned,
        F: Fn() -> Result<ureq::Response, ureq::Error>,
    {
        let mut backoff = self.policy.initial_backoff;
        let mut last = String::new();
        for attempt in 0..self.policy.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(backoff);
                backoff *= 2;
            }
            match call() {
                Ok(resp) => {
                    return resp
                        .into_json::<R>()
                        .map_err(|e| HttpFailure::Decode(e.to_string()))
                }
                Err(ureq::Error::Status(503, resp)) => {
                    last = format!("503 from {url}: {}", resp.into_string().unwrap_or_default());
                }
                Err(ureq::Error::Status(code, resp)) => {
                    return Err(HttpFailure::Status(
                        code,
                        resp.into_string().unwrap_or_default(),
                    ))
                }
                Err(ureq::Error::Transport(t)) => last = t.to_string(),
            }
        }
        Err(HttpFailure::Unreachable(last))
    }
}

pub(crate) fn endpoint(base: &str, path: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), path)
}

/// Runs `job` over every chunk with at most `max_in_flight` concurrent
/// calls; results come back in chunk order.
pub(crate) fn run_bounded<T, R, E, F>(chunks: &[T], max_in_flight: usize, job: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync,
{
    if chunks.len() <= 1 || max_in_flight <= 1 {
        return chunks.iter().map(&job).collect();
    }
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.min(chunks.len());
    let mut slots: Vec<Option<Result<R, E>>> = (0..chunks.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= chunks.len() {
                            break;
                        }
                        done.push((i, job(&chunks[i])));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("provider worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every chunk is processed"))
        .collect()
}
