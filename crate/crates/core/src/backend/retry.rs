use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BackendError;

/// Bounded exponential backoff: attempt `n` (1-based) that fails waits
/// `base_backoff · 2^(n-1)` before attempt `n + 1`, unless the server sent a
/// retry-after hint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_backoff_ms: 1000 }
    }
}

impl RetryPolicy {
    pub fn new(max_attempts: u32, base_backoff: Duration) -> Self {
        Self { max_attempts, base_backoff_ms: base_backoff.as_millis() as u64 }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_attempts == 0 {
            return Err(BackendError::Config("retry.max_attempts must be >= 1".into()));
        }
        Ok(())
    }

    /// Delay after failed attempt `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(self.base_backoff_ms.saturating_mul(factor))
    }

    /// Run `op` until it succeeds, fails fatally, or attempts run out.
    pub fn run<T, F, S>(&self, mut op: F, mut sleep: S) -> Result<T, BackendError>
    where
        F: FnMut() -> Result<T, BackendError>,
        S: FnMut(Duration),
    {
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if !e.is_retryable() => return Err(e),
                Err(e) if attempt >= self.max_attempts => {
                    return Err(BackendError::ExhaustedRetries { attempts: attempt, last: Box::new(e) })
                }
                Err(e) => {
                    let delay = match &e {
                        BackendError::RateLimited { retry_after: Some(hint) } => *hint,
                        _ => self.backoff(attempt),
                    };
                    log::debug!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}
