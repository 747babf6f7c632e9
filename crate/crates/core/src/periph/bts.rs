use serde_json::json;

use super::sniffer::Sniffer;
use crate::bus::{cmd, NodeId, UartFrame};
use crate::simkern::{EventKind, EventLog, LogNode, Millis};

pub const BLE_NAME_MAX: usize = 14;

#[derive(Debug, Clone)]
pub struct BtsState {
    pub ble_name: Vec<u8>,
    pub default_name: Vec<u8>,
    pub paired: bool,
    pub advertising: bool,
    pub powered: bool,
    pub fwver: String,
    /// Cell voltages last reported by BCTRL, for the companion app.
    pub reported_cells: Vec<u16>,
    pub reboots: u32,
}

impl BtsState {
    pub fn new(default_name: &[u8], fwver: &str) -> Self {
        let name = default_name[..default_name.len().min(BLE_NAME_MAX)].to_vec();
        Self {
            ble_name: name.clone(),
            default_name: name,
            paired: true,
            advertising: false,
            powered: false,
            fwver: fwver.to_string(),
            reported_cells: Vec::new(),
            reboots: 0,
        }
    }

    pub fn power_on(&mut self, t: Millis, log: &mut EventLog, sniffer: &mut Sniffer) {
        if self.powered {
            return;
        }
        self.powered = true;
        self.advertising = true;
        log.append(t, LogNode::Bts, EventKind::PowerOn, json!({}));
        sniffer.record(t, &self.ble_name);
    }

    pub fn power_off(&mut self, t: Millis, log: &mut EventLog, why: &str) {
        if !self.powered {
            return;
        }
        self.powered = false;
        self.advertising = false;
        log.append(t, LogNode::Bts, EventKind::PowerOff, json!({"reason": why}));
    }

    /// Renames, reboots and re-advertises. Names longer than 14 bytes are cut.
    pub fn ble_set_name(
        &mut self,
        t: Millis,
        name: &[u8],
        log: &mut EventLog,
        sniffer: &mut Sniffer,
    ) {
        if name.len() > BLE_NAME_MAX {
            log.append(
                t,
                LogNode::Bts,
                EventKind::Warning,
                json!({"warning": "name-truncated", "len": name.len()}),
            );
        }
        self.ble_name = name[..name.len().min(BLE_NAME_MAX)].to_vec();
        self.reboots += 1;
        log.append(
            t,
            LogNode::Bts,
            EventKind::Reboot,
            json!({"cause": "ble-name"}),
        );
        log.append(
            t,
            LogNode::Bts,
            EventKind::AdvertChanged,
            json!({"name": hex::encode(&self.ble_name)}),
        );
        if self.powered {
            sniffer.record(t, &self.ble_name);
        }
    }

    /// Default name, unpaired. Hardware identifiers elsewhere are untouched.
    pub fn factory_reset(&mut self, t: Millis, log: &mut EventLog, sniffer: &mut Sniffer) {
        self.paired = false;
        let name = self.default_name.clone();
        log.append(
            t,
            LogNode::Bts,
            EventKind::Reboot,
            json!({"cause": "factory-reset"}),
        );
        self.ble_name = name;
        self.reboots += 1;
        if self.powered {
            sniffer.record(t, &self.ble_name);
        }
    }

    /// Handles frames addressed to BTS.
    pub fn handle(&mut self, t: Millis, f: &UartFrame, log: &mut EventLog, sniffer: &mut Sniffer) {
        if !self.powered {
            return;
        }
        match f.command {
            // Only the DRV may rename the scooter.
            cmd::BLE_NAME if f.sender == NodeId::DRV => {
                self.ble_set_name(t, &f.payload, log, sniffer)
            }
            cmd::CELL_VOLTAGES if f.sender == NodeId::BCTRL => {
                self.reported_cells = f
                    .payload
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect();
            }
            cmd::POWER_OFF if f.sender == NodeId::BCTRL => self.power_off(t, log, "bctrl"),
            _ => {}
        }
    }
}
