use rand::Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::error::{ErrorCode, ERROR_POWER_OFF_MS};
use crate::bctrl::{FwUpdateSession, UpdateStep};
use crate::bus::{cmd, NodeId, PacketType, UartFrame};
use crate::simkern::{EventKind, EventLog, LogNode, Millis, SimRng};

pub const KEEPALIVE_PERIOD_MS: Millis = 1_000;
pub const BMS_TIMEOUT_MS: Millis = 3_000;
/// Stock auto-off when idle and not locked.
pub const AUTO_OFF_IDLE_MS: Millis = 300_000;
pub const BEEP_PERIOD_MS: Millis = 1_000;
pub const REBOOT_MS: Millis = 2_000;
/// Series resistance of one cell group; the motor-side reading sags by I·R.
pub const GROUP_RESISTANCE_OHM: f64 = 0.05;
pub const RIDE_SPEED_KMH: f64 = 20.0;

pub fn password_hash(pin: &str) -> [u8; 32] {
    Sha256::digest(pin.as_bytes()).into()
}

/// `XMDRV-` followed by production date YYMMDD, revision letter and unit.
pub fn generate_drv_id(rng: &mut SimRng) -> [u8; 14] {
    let yy = rng.gen_range(18..=23);
    let mm = rng.gen_range(1..=12);
    let dd = rng.gen_range(1..=28);
    let rev = rng.gen_range(b'A'..=b'Z') as char;
    let unit = rng.gen_range(b'0'..=b'9') as char;
    let s = format!("XMDRV-{yy:02}{mm:02}{dd:02}{rev}{unit}");
    s.as_bytes().try_into().expect("14 ascii bytes")
}

#[derive(Debug, Clone, Default)]
pub struct DrvReport {
    pub image: Option<Vec<u8>>,
    pub raised: Option<ErrorCode>,
}

#[derive(Debug, Clone)]
pub struct DrvState {
    pub drv_id: [u8; 14],
    pub mileage_km: u16,
    pub last_travel_km: u16,
    pub avg_speed: u16,
    pub password_hash: [u8; 32],
    pub motor_voltage: f64,
    pub locked: bool,
    pub error_state: Option<ErrorCode>,
    pub beeping: bool,
    pub powered: bool,
    pub voltage_check_active: bool,
    /// Head and tail lights, switched by the BTS.
    pub lights_on: bool,
    pub fwver: String,
    /// Battery level last served by BCTRL.
    pub batt_level: u8,
    pub update: FwUpdateSession,
    pub power_off_at: Option<Millis>,
    last_bms_ms: Millis,
    next_poll_ms: Millis,
    next_beep_ms: Millis,
    idle_since_ms: Millis,
    booting_until: Millis,
    odometer_m: f64,
}

impl DrvState {
    pub fn new(drv_id: [u8; 14], pin: &str, voltage_check_active: bool, fwver: &str) -> Self {
        Self {
            drv_id,
            mileage_km: 0,
            last_travel_km: 0,
            avg_speed: RIDE_SPEED_KMH as u16,
            password_hash: password_hash(pin),
            motor_voltage: 0.0,
            locked: false,
            error_state: None,
            beeping: false,
            powered: false,
            voltage_check_active,
            lights_on: false,
            fwver: fwver.to_string(),
            batt_level: 0,
            update: FwUpdateSession::default(),
            power_off_at: None,
            last_bms_ms: 0,
            next_poll_ms: 0,
            next_beep_ms: 0,
            idle_since_ms: 0,
            booting_until: 0,
            odometer_m: 0.0,
        }
    }

    pub fn set_mileage(&mut self, km: u16) {
        self.mileage_km = km;
        self.odometer_m = km as f64 * 1000.0;
    }

    pub fn power_on(&mut self, t: Millis, log: &mut EventLog) {
        if self.powered {
            return;
        }
        self.powered = true;
        self.error_state = None;
        self.beeping = false;
        self.power_off_at = None;
        self.last_bms_ms = t;
        self.next_poll_ms = t;
        self.idle_since_ms = t;
        self.booting_until = t;
        log.append(t, LogNode::Drv, EventKind::PowerOn, json!({}));
    }

    pub fn power_off(&mut self, t: Millis, log: &mut EventLog, why: &str) {
        if !self.powered {
            return;
        }
        self.powered = false;
        self.beeping = false;
        self.lights_on = false;
        self.power_off_at = None;
        log.append(t, LogNode::Drv, EventKind::PowerOff, json!({"reason": why}));
    }

    pub fn rideable(&self, t: Millis) -> bool {
        self.powered
            && !self.locked
            && self.error_state.is_none()
            && self.batt_level > 0
            && t >= self.booting_until
    }

    pub fn raise_error(&mut self, t: Millis, code: ErrorCode, log: &mut EventLog, source: &str) {
        if self.error_state == Some(code) {
            return;
        }
        self.error_state = Some(code);
        log.append(
            t,
            LogNode::Drv,
            EventKind::ErrorRaised,
            json!({"code": code.to_string(), "text": code.description(), "source": source}),
        );
        match code {
            ErrorCode::E23 => {
                self.beeping = true;
                self.next_beep_ms = t;
            }
            _ if code.powers_off() && self.power_off_at.is_none() => {
                self.power_off_at = Some(t + ERROR_POWER_OFF_MS);
            }
            _ => {}
        }
    }

    fn reboot(&mut self, t: Millis, log: &mut EventLog, cause: &str) {
        log.append(t, LogNode::Drv, EventKind::Reboot, json!({"cause": cause}));
        self.error_state = None;
        self.beeping = false;
        self.power_off_at = None;
        self.locked = false;
        self.last_bms_ms = t;
        self.booting_until = t + REBOOT_MS;
    }

    fn reply(&self, f: &UartFrame, payload: Vec<u8>) -> UartFrame {
        UartFrame::new(
            NodeId::DRV,
            f.sender,
            PacketType::Notify,
            f.command,
            payload,
        )
    }

    /// Answers a Read addressed to DRV. The claimed sender is trusted.
    pub fn handle_read(&self, f: &UartFrame) -> Option<UartFrame> {
        let payload = match f.command {
            cmd::DRV_ID => self.drv_id.to_vec(),
            cmd::MILEAGE => self.mileage_km.to_be_bytes().to_vec(),
            cmd::LAST_TRAVEL => self.last_travel_km.to_be_bytes().to_vec(),
            cmd::AVG_SPEED => self.avg_speed.to_be_bytes().to_vec(),
            cmd::BATT_LEVEL => vec![self.batt_level],
            cmd::PASSWORD_HASH => self.password_hash.to_vec(),
            _ => return None,
        };
        Some(self.reply(f, payload))
    }

    /// One DRV iteration. `min_group_mv` is the true lowest group voltage and
    /// `pack_current_ma` the present load; `riding` is the rider's intent.
    #[allow(clippy::too_many_arguments)]
    pub fn tick(
        &mut self,
        t: Millis,
        dt_ms: Millis,
        min_group_mv: f64,
        pack_current_ma: f64,
        riding: bool,
        rx: &[UartFrame],
        log: &mut EventLog,
        out: &mut Vec<UartFrame>,
    ) -> DrvReport {
        let mut report = DrvReport::default();
        if !self.powered {
            return report;
        }
        self.motor_voltage = min_group_mv - pack_current_ma * GROUP_RESISTANCE_OHM;

        for f in rx {
            if f.ptype == PacketType::Read {
                if let Some(r) = self.handle_read(f) {
                    out.push(r);
                }
                continue;
            }
            match (f.command, f.sender) {
                (cmd::BATT_LEVEL, NodeId::BCTRL) if f.ptype == PacketType::Notify => {
                    self.last_bms_ms = t;
                    self.batt_level = f.payload.first().copied().unwrap_or(0);
                }
                (cmd::POWER_OFF, NodeId::BCTRL) => {
                    self.power_off(t, log, "bctrl");
                    return report;
                }
                (cmd::LOCK, NodeId::BTS) => {
                    if !self.locked {
                        log.append(t, LogNode::Drv, EventKind::Warning, json!({"lock": true}));
                    }
                    self.locked = true;
                }
                (cmd::UNLOCK, NodeId::BTS) => {
                    if self.locked {
                        log.append(t, LogNode::Drv, EventKind::Warning, json!({"lock": false}));
                    }
                    self.locked = false;
                }
                (cmd::LIGHTS, NodeId::BTS) => {
                    self.lights_on = f.payload.first().is_some_and(|&b| b != 0)
                }
                (cmd::RESET, NodeId::BTS) => self.reboot(t, log, "reset-command"),
                (cmd::ERROR_NOTIFY, NodeId::BTS) => {
                    if let Some(code) = f.payload.first().and_then(|&n| ErrorCode::from_number(n)) {
                        self.raise_error(t, code, log, "bus");
                    }
                }
                (c, NodeId::BTS) if cmd::is_update(c) => match self.update.handle(c, &f.payload) {
                    UpdateStep::ImageReady(img) => report.image = Some(img),
                    UpdateStep::Reset(why) => {
                        log.append(
                            t,
                            LogNode::Drv,
                            EventKind::InstallRejected,
                            json!({"target": "DRV", "reason": "SessionReset", "detail": why}),
                        );
                    }
                    UpdateStep::Progress => {}
                },
                _ => {}
            }
        }

        // Strict: a reading exactly at cUVT is in range.
        if self.voltage_check_active
            && self.motor_voltage < crate::battery::Thresholds::default().c_uvt as f64
        {
            if self.error_state != Some(ErrorCode::E24) {
                report.raised = Some(ErrorCode::E24);
            }
            self.raise_error(t, ErrorCode::E24, log, "voltage-check");
        }

        if t >= self.next_poll_ms {
            self.next_poll_ms = t + KEEPALIVE_PERIOD_MS;
            out.push(UartFrame::new(
                NodeId::DRV,
                NodeId::BCTRL,
                PacketType::Read,
                cmd::BATT_LEVEL,
                vec![],
            ));
        }
        if t.saturating_sub(self.last_bms_ms) > BMS_TIMEOUT_MS
            && self.error_state != Some(ErrorCode::E21)
        {
            report.raised = Some(ErrorCode::E21);
            self.raise_error(t, ErrorCode::E21, log, "keepalive");
        }
        if self.beeping && t >= self.next_beep_ms {
            self.next_beep_ms = t + BEEP_PERIOD_MS;
            log.append(t, LogNode::Drv, EventKind::Beep, json!({"code": "E23"}));
        }

        let moving = riding && self.rideable(t);
        if moving {
            self.idle_since_ms = t;
            self.odometer_m += RIDE_SPEED_KMH / 3.6 * dt_ms as f64 / 1000.0;
            self.mileage_km = (self.odometer_m / 1000.0) as u16;
        } else if !self.locked && t.saturating_sub(self.idle_since_ms) >= AUTO_OFF_IDLE_MS {
            self.power_off(t, log, "auto-off");
            return report;
        }

        if let Some(at) = self.power_off_at {
            if t >= at {
                let code = self.error_state.map(|c| c.to_string()).unwrap_or_default();
                self.power_off(t, log, &format!("error {code}"));
            }
        }
        report
    }

    /// Fingerprint-bearing fields survive; lock and errors clear.
    pub fn factory_reset(&mut self, t: Millis, log: &mut EventLog) {
        self.reboot(t, log, "factory-reset");
    }
}
