use std::time::Duration;

use super::BackendError;

/// Exponential backoff for transient backend failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retried<T> {
    pub value: T,
    pub retries: u32,
}

impl RetryPolicy {
    pub fn new(max_retries: u32, base_delay: Duration) -> Self {
        Self {
            max_retries,
            base_delay,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (0-based): base * 2^attempt, capped.
    pub fn delay_for(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.min(16)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    /// Runs `op` until it succeeds, fails permanently, or the retry budget is
    /// spent.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<Retried<T>, BackendError> {
        let mut retries = 0;
        loop {
            match op() {
                Ok(value) => return Ok(Retried { value, retries }),
                Err(e) if !e.is_transient() => return Err(e),
                Err(e) if retries >= self.max_retries => {
                    return Err(BackendError::RetriesExhausted {
                        attempts: retries + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => {
                    log::debug!("transient backend failure, retrying: {e}");
                    std::thread::sleep(self.delay_for(retries));
                    retries += 1;
                }
            }
        }
    }
}
