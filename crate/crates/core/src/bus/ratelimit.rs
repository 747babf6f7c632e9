//! Leaky-bucket admission in integer milli-tokens so steady traffic at the
//! drain rate never accumulates rounding loss.

use serde::{Deserialize, Serialize};

use crate::simkern::Millis;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimiter {
    /// Whole tokens.
    pub capacity: u32,
    /// Tokens per virtual second.
    pub drain_rate: u32,
    level_milli: u64,
    last_ms: Millis,
}

impl RateLimiter {
    /// Starts full at t = 0.
    pub fn new(capacity: u32, drain_rate: u32) -> Self {
        Self {
            capacity,
            drain_rate,
            level_milli: capacity as u64 * 1000,
            last_ms: 0,
        }
    }

    /// Whole tokens currently available.
    pub fn level(&self) -> u32 {
        (self.level_milli / 1000) as u32
    }

    fn refill(&mut self, at: Millis) {
        if at > self.last_ms {
            // tokens/s * ms = milli-tokens
            let add = (at - self.last_ms).saturating_mul(self.drain_rate as u64);
            self.level_milli =
                (self.level_milli.saturating_add(add)).min(self.capacity as u64 * 1000);
            self.last_ms = at;
        }
    }

    /// Consumes one token if available.
    pub fn admit(&mut self, at: Millis) -> bool {
        self.refill(at);
        if self.level_milli >= 1000 {
            self.level_milli -= 1000;
            true
        } else {
            false
        }
    }
}
