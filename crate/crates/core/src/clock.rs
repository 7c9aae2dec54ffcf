//! Injected time. Nothing in the crawler reads the wall clock directly.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

/// Seconds since the start of a run.
pub type Timestamp = f64;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;

    /// Block (or, for simulated time, advance) until `t` has been reached.
    fn sleep_until(&self, t: Timestamp);
}

/// Simulated time: `sleep_until` moves the clock forward instead of
/// sleeping, so politeness delays cost nothing in tests.
#[derive(Debug, Default)]
pub struct VirtualClock {
    bits: AtomicU64,
}

impl VirtualClock {
    pub fn new(start: Timestamp) -> Self {
        Self {
            bits: AtomicU64::new(start.to_bits()),
        }
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        f64::from_bits(self.bits.load(Ordering::SeqCst))
    }

    fn sleep_until(&self, t: Timestamp) {
        // never moves backwards
        let _ = self
            .bits
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |cur| {
                (t > f64::from_bits(cur)).then_some(t.to_bits())
            });
    }
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        self.origin.elapsed().as_secs_f64()
    }

    fn sleep_until(&self, t: Timestamp) {
        let wait = t - self.now();
        if wait > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}
