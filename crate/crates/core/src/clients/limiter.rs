use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Time source for the rate limiter and retry backoff.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Manually driven clock: `sleep` advances time instantly and is recorded.
#[derive(Debug, Default)]
pub struct FakeClock {
    state: Mutex<(Duration, Vec<Duration>)>,
}

impl FakeClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        self.state.lock().unwrap().0 += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().unwrap().1.clone()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        self.state.lock().unwrap().0
    }

    fn sleep(&self, d: Duration) {
        let mut s = self.state.lock().unwrap();
        s.0 += d;
        s.1.push(d);
    }
}

/// Sliding-window gate: at most `limit` admissions in any window.
///
/// The lock is held while waiting, so concurrent callers queue behind the
/// gate in arrival order.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    admitted: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn per_minute(requests_per_minute: u32, clock: Arc<dyn Clock>) -> Self {
        Self::new(requests_per_minute.max(1) as usize, Duration::from_secs(60), clock)
    }

    pub fn new(limit: usize, window: Duration, clock: Arc<dyn Clock>) -> Self {
        assert!(limit >= 1, "rate limit must admit at least one request");
        RateLimiter {
            limit,
            window,
            clock,
            admitted: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks until a request may be sent; returns the admission time.
    pub fn acquire(&self) -> Duration {
        let mut admitted = self.admitted.lock().unwrap();
        loop {
            let now = self.clock.now();
            while admitted.front().is_some_and(|&t| now.saturating_sub(t) >= self.window) {
                admitted.pop_front();
            }
            if admitted.len() < self.limit {
                admitted.push_back(now);
                return now;
            }
            let oldest = *admitted.front().expect("window is full");
            self.clock.sleep(oldest + self.window - now);
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }
}

/// Exponential backoff with seeded multiplicative jitter in `[0.5, 1.0)`.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
    pub seed: u64,
}

impl RetryPolicy {
    pub fn new(max_retries: u32, seed: u64) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            jitter: true,
            seed,
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << retry.min(20));
        let capped = exp.min(self.max_delay);
        if !self.jitter {
            return capped;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (u64::from(retry) << 32));
        capped.mul_f64(rng.random_range(0.5..1.0))
    }
}
