//! 14-byte tracking message carried in the BLE name.

use serde::Serialize;

pub const TRACK_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrackMessage {
    /// Last 8 bytes of the DRV serial.
    pub fingerprint: [u8; 8],
    pub mileage_km: u16,
    pub batt_level: u8,
}

impl TrackMessage {
    pub fn fingerprint_of(drv_id: &[u8]) -> Option<[u8; 8]> {
        drv_id
            .len()
            .checked_sub(8)
            .map(|s| drv_id[s..].try_into().unwrap())
    }

    /// `fingerprint || mileage BE || level || 0 0 0`.
    pub fn to_bytes(&self) -> [u8; TRACK_LEN] {
        let mut b = [0u8; TRACK_LEN];
        b[..8].copy_from_slice(&self.fingerprint);
        b[8..10].copy_from_slice(&self.mileage_km.to_be_bytes());
        b[10] = self.batt_level;
        b
    }

    /// Sniffer-side decoder; rejects anything not exactly 14 bytes with zero
    /// reserved bytes.
    pub fn decode(name: &[u8]) -> Option<Self> {
        if name.len() != TRACK_LEN || name[11..] != [0, 0, 0] {
            return None;
        }
        Some(Self {
            fingerprint: name[..8].try_into().unwrap(),
            mileage_km: u16::from_be_bytes([name[8], name[9]]),
            batt_level: name[10],
        })
    }
}
