use std::fmt;

use serde::{Deserialize, Serialize};

use crate::simkern::Millis;

/// Delay between a fatal error and the resulting power-off.
pub const ERROR_POWER_OFF_MS: Millis = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    /// No communication with BMS: motor halt, power-off after 10 s.
    E21,
    /// Internal BMS not activated: continuous beeping.
    E23,
    /// Supply voltage out of range: power-off after 10 s.
    E24,
}

impl ErrorCode {
    pub fn number(self) -> u8 {
        match self {
            ErrorCode::E21 => 21,
            ErrorCode::E23 => 23,
            ErrorCode::E24 => 24,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            21 => Some(ErrorCode::E21),
            23 => Some(ErrorCode::E23),
            24 => Some(ErrorCode::E24),
            _ => None,
        }
    }

    pub fn powers_off(self) -> bool {
        matches!(self, ErrorCode::E21 | ErrorCode::E24)
    }

    pub fn description(self) -> &'static str {
        match self {
            ErrorCode::E21 => "No Communication with BMS",
            ErrorCode::E23 => "Internal BMS not activated",
            ErrorCode::E24 => "Supply Voltage out of range",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.number())
    }
}
