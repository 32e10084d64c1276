//! Retry policy for transient HTTP failures.

use std::time::Duration;

use rand::Rng;

/// Attempt cap and backoff shape for 429/5xx responses.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, initial_delay: Duration::from_secs(1), factor: 2.0 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based), with equal jitter:
    /// uniform over the upper half of the exponential step. Successive
    /// windows do not overlap, so delays never decrease across attempts.
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let base = self.initial_delay.as_secs_f64() * self.factor.powi(attempt as i32);
        Duration::from_secs_f64(base * rng.gen_range(0.5..1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delays_are_non_decreasing_for_any_rng_stream() {
        let policy = RetryPolicy::default();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let delays: Vec<Duration> =
                (0..policy.max_attempts).map(|a| policy.delay(a, &mut rng)).collect();
            for pair in delays.windows(2) {
                assert!(pair[0] <= pair[1], "seed {seed}: {delays:?}");
            }
        }
    }

    #[test]
    fn first_delay_is_at_least_half_the_initial() {
        let policy = RetryPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let d = policy.delay(0, &mut rng);
            assert!(d >= Duration::from_millis(500) && d < Duration::from_secs(1));
        }
    }
}
