//! Decision part of the BCTRL main loop, separated from I/O so it can be
//! checked against a reference on arbitrary readings.

use serde::Serialize;

use super::patches::PatchSet;
use crate::battery::Thresholds;

/// What one `readBMON` pass yields, in mV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellReadings {
    pub min_cell_mv: f64,
    pub max_cell_mv: f64,
    pub delta_mv: f64,
}

impl CellReadings {
    pub fn from_voltages(v: &[f64]) -> Self {
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            min_cell_mv: min,
            max_cell_mv: max,
            delta_mv: max - min,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Branches {
    pub balance: bool,
    pub sleep_on_delta: bool,
    pub sleep_on_uv: bool,
    pub sleep_on_ov: bool,
}

impl Branches {
    pub fn any_sleep(&self) -> bool {
        self.sleep_on_delta || self.sleep_on_uv || self.sleep_on_ov
    }
}

/// DLB removes the delta branch; DCT removes both voltage branches.
pub fn evaluate(r: &CellReadings, th: &Thresholds, patches: &PatchSet) -> Branches {
    let delta_hit = !patches.dlb && r.delta_mv >= th.c_lbd as f64;
    Branches {
        balance: delta_hit,
        sleep_on_delta: delta_hit,
        sleep_on_uv: !patches.dct && r.min_cell_mv < th.c_uvt as f64,
        sleep_on_ov: !patches.dct && r.max_cell_mv > th.c_ovt as f64,
    }
}
