//! Patchable capabilities of a modified BCTRL firmware and the manifest that
//! a BCTRL image body carries.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Capability {
    /// Disable firmware updates until unlocked.
    Dfu,
    /// Malicious UART bus: forge frames with any sender.
    Mub,
    /// Malicious I2C bus: arbitrary BMON register access.
    Mib,
    /// Disable cUVT/cOVT checks.
    Dct,
    /// Disable load balancing.
    Dlb,
    /// Disable battery charging.
    Dbc,
    /// Force battery discharge (no sleep).
    Fbd,
    /// Change BLE advertisement.
    Cba,
    /// Spoof a cell voltage in status frames.
    Scv,
    /// Disable BMON hardware thresholds.
    Ddt,
}

impl Capability {
    pub const ALL: [Capability; 10] = [
        Capability::Dfu,
        Capability::Mub,
        Capability::Mib,
        Capability::Dct,
        Capability::Dlb,
        Capability::Dbc,
        Capability::Fbd,
        Capability::Cba,
        Capability::Scv,
        Capability::Ddt,
    ];
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format!("{self:?}").to_uppercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdtTrips {
    pub uv_trip: u16,
    pub ov_trip: u16,
}

impl Default for DdtTrips {
    fn default() -> Self {
        Self {
            uv_trip: 1580,
            ov_trip: 4700,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScvSpoof {
    /// 0-based group index.
    pub group: usize,
    pub voltage_mv: u16,
}

/// All-false is stock behaviour.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSet {
    pub dfu: bool,
    pub mub: bool,
    pub mib: bool,
    pub dct: bool,
    pub dlb: bool,
    pub dbc: bool,
    pub fbd: bool,
    pub cba: bool,
    pub scv: bool,
    pub ddt: Option<DdtTrips>,
    pub scv_spoof: Option<ScvSpoof>,
}

impl PatchSet {
    pub fn stock() -> Self {
        Self::default()
    }

    pub fn of(caps: &[Capability]) -> Self {
        caps.iter().fold(Self::default(), |p, &c| p.with(c))
    }

    pub fn with(mut self, c: Capability) -> Self {
        match c {
            Capability::Dfu => self.dfu = true,
            Capability::Mub => self.mub = true,
            Capability::Mib => self.mib = true,
            Capability::Dct => self.dct = true,
            Capability::Dlb => self.dlb = true,
            Capability::Dbc => self.dbc = true,
            Capability::Fbd => self.fbd = true,
            Capability::Cba => self.cba = true,
            Capability::Scv => {
                self.scv = true;
                self.scv_spoof.get_or_insert(ScvSpoof {
                    group: 0,
                    voltage_mv: 3700,
                });
            }
            Capability::Ddt => {
                self.ddt.get_or_insert_with(DdtTrips::default);
            }
        }
        self
    }

    pub fn has(&self, c: Capability) -> bool {
        match c {
            Capability::Dfu => self.dfu,
            Capability::Mub => self.mub,
            Capability::Mib => self.mib,
            Capability::Dct => self.dct,
            Capability::Dlb => self.dlb,
            Capability::Dbc => self.dbc,
            Capability::Fbd => self.fbd,
            Capability::Cba => self.cba,
            Capability::Scv => self.scv,
            Capability::Ddt => self.ddt.is_some(),
        }
    }

    pub fn capabilities(&self) -> Vec<Capability> {
        Capability::ALL
            .into_iter()
            .filter(|&c| self.has(c))
            .collect()
    }

    pub fn is_stock(&self) -> bool {
        self.capabilities().is_empty()
    }
}

/// Behaviour program carried by a malicious image. The logic lives with the
/// attacks; the BCTRL only stores which one is installed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    #[default]
    None,
    Ubr,
    Uti,
    Plr,
    Des(u8),
}

/// Decoded body of a BCTRL image.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub patches: PatchSet,
    pub payload: Payload,
    /// Hex-encoded 128-bit code that lifts the DFU lock.
    pub unlock_code: Option<String>,
}

impl Manifest {
    pub fn stock() -> Self {
        Self::default()
    }

    pub fn to_body(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("manifest serializes")
    }

    pub fn from_body(body: &[u8]) -> Option<Self> {
        serde_json::from_slice(body).ok()
    }

    pub fn unlock_code_bytes(&self) -> Option<[u8; 16]> {
        let v = hex::decode(self.unlock_code.as_deref()?).ok()?;
        v.try_into().ok()
    }
}
