//! Offline recovery of a 6-digit PIN from its SHA-256.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::simkern::SimRng;

pub const PIN_SPACE: u32 = 1_000_000;

pub fn pin_string(n: u32) -> String {
    format!("{n:06}")
}

fn digest(pin: &str) -> [u8; 32] {
    Sha256::digest(pin.as_bytes()).into()
}

/// Exhaustive search over 000000..=999999.
pub fn crack_pin(hash: &[u8; 32]) -> Option<String> {
    (0..PIN_SPACE)
        .into_par_iter()
        .find_first(|&n| digest(&pin_string(n)) == *hash)
        .map(pin_string)
}

/// Precomputed hash→PIN table over a chosen candidate set.
pub struct PinTable {
    map: HashMap<[u8; 32], u32>,
}

impl PinTable {
    pub fn full() -> Self {
        Self::from_candidates(0..PIN_SPACE)
    }

    pub fn from_candidates(pins: impl IntoIterator<Item = u32>) -> Self {
        let v: Vec<u32> = pins.into_iter().collect();
        let map = v.par_iter().map(|&n| (digest(&pin_string(n)), n)).collect();
        Self { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn lookup(&self, hash: &[u8; 32]) -> Option<String> {
        self.map.get(hash).map(|&n| pin_string(n))
    }

    /// Table first, exhaustive search on a miss.
    pub fn crack(&self, hash: &[u8; 32]) -> Option<String> {
        self.lookup(hash).or_else(|| crack_pin(hash))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinPattern {
    RepeatedDigit,
    Ascending,
    Descending,
    RepeatedPair,
    RepeatedTriple,
    Mirror,
    Date,
}

impl PinPattern {
    pub const ALL: [PinPattern; 7] = [
        PinPattern::RepeatedDigit,
        PinPattern::Ascending,
        PinPattern::Descending,
        PinPattern::RepeatedPair,
        PinPattern::RepeatedTriple,
        PinPattern::Mirror,
        PinPattern::Date,
    ];

    pub fn matches(self, pin: &str) -> bool {
        let d: Vec<u8> = pin.bytes().map(|b| b - b'0').collect();
        if d.len() != 6 || !pin.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        match self {
            PinPattern::RepeatedDigit => d.iter().all(|&x| x == d[0]),
            PinPattern::Ascending => d.windows(2).all(|w| w[1] == (w[0] + 1) % 10),
            PinPattern::Descending => d.windows(2).all(|w| w[0] == (w[1] + 1) % 10),
            PinPattern::RepeatedPair => d[0] != d[1] && d[..2] == d[2..4] && d[..2] == d[4..],
            PinPattern::RepeatedTriple => d[..3] == d[3..] && !(d[0] == d[1] && d[1] == d[2]),
            PinPattern::Mirror => d[0] == d[5] && d[1] == d[4] && d[2] == d[3],
            PinPattern::Date => {
                let day = d[0] * 10 + d[1];
                let month = d[2] * 10 + d[3];
                (1..=12).contains(&month) && (1..=days_in(month)).contains(&day)
            }
        }
    }

    /// All PINs of this pattern.
    pub fn members(self) -> Vec<String> {
        (0..PIN_SPACE)
            .map(pin_string)
            .filter(|p| self.matches(p))
            .collect()
    }
}

fn days_in(month: u8) -> u8 {
    match month {
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

/// Ten distinct PINs per pattern, drawn from `rng`.
pub fn pattern_pins(rng: &mut SimRng) -> Vec<(PinPattern, String)> {
    let mut out = Vec::new();
    for p in PinPattern::ALL {
        let mut members = p.members();
        members.shuffle(rng);
        out.extend(members.into_iter().take(10).map(|m| (p, m)));
    }
    out
}

pub fn random_pins(rng: &mut SimRng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| pin_string(rng.gen_range(0..PIN_SPACE)))
        .collect()
}
