use serde_json::json;
use thiserror::Error;

use super::algo::{evaluate, Branches, CellReadings};
use super::patches::{Capability, Manifest, PatchSet, Payload};
use super::update::{FwUpdateSession, UpdateStep};
use crate::battery::{BmonRegisters, I2cError, I2cMessage, I2cReply, Pack, Register, Thresholds};
use crate::bus::{cmd, NodeId, PacketType, UartFrame};
use crate::simkern::{EventKind, EventLog, LogNode, Millis};

/// Stock firmware sleeps after this long without a frame addressed to it.
pub const IDLE_SLEEP_MS: Millis = 5_000;
pub const STATUS_PERIOD_MS: Millis = 1_000;
pub const AWAKE_DRAW_MA: f64 = 2.0;
pub const SLEEP_DRAW_MA: f64 = 0.02;
const BALANCE_ALL: u16 = 0x03FF;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("capability {0} not present in installed firmware")]
pub struct CapabilityMissing(pub Capability);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnlockResult {
    Unlocked,
    AlreadyUnlocked,
    Mismatch,
    /// No DFU lock installed.
    NotLocked,
}

#[derive(Debug, Clone, Default)]
pub struct TickReport {
    pub branches: Branches,
    pub readings: Option<CellReadings>,
    /// Completed update transfer awaiting verification.
    pub image: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct BctrlState {
    pub serial: String,
    pub fwver: String,
    pub can_charge: bool,
    pub sleep_mode: bool,
    pub can_fw_update: bool,
    pub unlock_code: Option<[u8; 16]>,
    pub patches: PatchSet,
    pub payload: Payload,
    /// Installed image may charge a pack below cUVT.
    pub recovery: bool,
    pub thresholds: Thresholds,
    pub update: FwUpdateSession,
    pub booted: bool,
    /// Charger is feeding the pack; protection sleep leaves loads powered.
    pub charging: bool,
    last_addressed_ms: Millis,
    next_status_ms: Millis,
}

impl BctrlState {
    pub fn new(serial: &str, fwver: &str, thresholds: Thresholds) -> Self {
        Self {
            serial: serial.to_string(),
            fwver: fwver.to_string(),
            can_charge: true,
            sleep_mode: false,
            can_fw_update: true,
            unlock_code: None,
            patches: PatchSet::stock(),
            payload: Payload::None,
            recovery: false,
            thresholds,
            update: FwUpdateSession::default(),
            booted: false,
            charging: false,
            last_addressed_ms: 0,
            next_status_ms: 0,
        }
    }

    /// Takes over an accepted BCTRL image. The caller reboots afterwards, so
    /// runtime flags the previous image set do not survive.
    pub fn install(&mut self, version: &str, manifest: &Manifest, recovery: bool) {
        self.fwver = version.to_string();
        self.can_charge = true;
        self.patches = manifest.patches.clone();
        self.payload = manifest.payload;
        self.unlock_code = manifest.unlock_code_bytes();
        self.can_fw_update = !self.patches.dfu;
        self.recovery = recovery;
        self.update = FwUpdateSession::default();
    }

    /// Boot: configure BMON thresholds. Fails when BMON is in ship mode.
    pub fn init_bmon<S: crate::Scalar>(
        &mut self,
        t: Millis,
        regs: &mut BmonRegisters,
        pack: &Pack<S>,
        log: &mut EventLog,
    ) -> bool {
        self.sleep_mode = false;
        self.last_addressed_ms = t;
        self.next_status_ms = t;
        let (uv, ov) = match self.patches.ddt {
            Some(d) => (d.uv_trip, d.ov_trip),
            None => (self.thresholds.d_uvt, self.thresholds.d_ovt),
        };
        let ok = regs
            .access(pack, I2cMessage::write(Register::UvTrip, uv))
            .is_ok()
            && regs
                .access(pack, I2cMessage::write(Register::OvTrip, ov))
                .is_ok();
        self.booted = ok;
        if ok {
            log.append(
                t,
                LogNode::Bctrl,
                EventKind::PowerOn,
                json!({"fwver": self.fwver, "uv_trip": regs.uv_trip, "ov_trip": regs.ov_trip}),
            );
        } else {
            log.append(
                t,
                LogNode::Bctrl,
                EventKind::ErrorRaised,
                json!({"error": "bmon-unreachable", "boot": "aborted"}),
            );
        }
        ok
    }

    pub fn draw_ma(&self) -> f64 {
        match (self.booted, self.sleep_mode) {
            (false, _) => 0.0,
            (true, true) => SLEEP_DRAW_MA,
            (true, false) => AWAKE_DRAW_MA,
        }
    }

    fn read_cells<S: crate::Scalar>(
        &self,
        regs: &mut BmonRegisters,
        pack: &Pack<S>,
    ) -> Result<Vec<f64>, I2cError> {
        (1..=pack.groups.len() as u8)
            .map(
                |i| match regs.access(pack, I2cMessage::read(Register::Vc(i)))? {
                    I2cReply::Value(v) => Ok(v as f64),
                    _ => unreachable!("VC read returns a value"),
                },
            )
            .collect()
    }

    /// Voltages as reported on the bus; SCV replaces one group.
    pub fn reported_voltages(&self, true_mv: &[f64]) -> Vec<u16> {
        let mut v: Vec<u16> = true_mv
            .iter()
            .map(|&x| x.round().clamp(0.0, u16::MAX as f64) as u16)
            .collect();
        if let (true, Some(s)) = (self.patches.scv, self.patches.scv_spoof) {
            if let Some(slot) = v.get_mut(s.group) {
                *slot = s.voltage_mv;
            }
        }
        v
    }

    fn status_payload(&self, true_mv: &[f64]) -> Vec<u8> {
        self.reported_voltages(true_mv)
            .iter()
            .flat_map(|v| v.to_be_bytes())
            .collect()
    }

    /// One pass of the main loop. `rx` holds frames addressed to BCTRL that
    /// survived the bus and the secure channel.
    #[allow(clippy::too_many_arguments)]
    pub fn main_loop_tick(
        &mut self,
        t: Millis,
        regs: &mut BmonRegisters,
        pack: &mut Pack<f64>,
        rx: &[UartFrame],
        log: &mut EventLog,
        out: &mut Vec<UartFrame>,
    ) -> TickReport {
        let mut report = TickReport::default();
        if !self.booted {
            return report;
        }
        let Ok(volts) = self.read_cells(regs, pack) else {
            return report;
        };
        let readings = CellReadings::from_voltages(&volts);
        let branches = evaluate(&readings, &self.thresholds, &self.patches);
        report.readings = Some(readings);
        report.branches = branches;

        let hw_trip = !self.patches.dct && (regs.faults.under_trip || regs.faults.over_trip);
        if branches.balance {
            regs.cellbal = [BALANCE_ALL; 3];
            pack.balance_step();
        } else {
            regs.cellbal = [0; 3];
        }

        if self.patches.fbd {
            self.sleep_mode = false;
        } else if (branches.any_sleep() || hw_trip) && !self.sleep_mode {
            self.sleep_mode = true;
            log.append(
                t,
                LogNode::Bctrl,
                EventKind::Sleep,
                json!({"reason": "protection", "branches": branches, "hw_trip": hw_trip}),
            );
            if !self.charging {
                for n in [NodeId::BTS, NodeId::DRV] {
                    out.push(UartFrame::new(
                        NodeId::BCTRL,
                        n,
                        PacketType::Write,
                        cmd::POWER_OFF,
                        vec![],
                    ));
                }
            }
        } else if !self.sleep_mode && t.saturating_sub(self.last_addressed_ms) >= IDLE_SLEEP_MS {
            self.sleep_mode = true;
            log.append(
                t,
                LogNode::Bctrl,
                EventKind::Sleep,
                json!({"reason": "idle"}),
            );
        }

        if !rx.is_empty() {
            self.last_addressed_ms = t;
            if self.sleep_mode {
                self.sleep_mode = false;
                log.append(
                    t,
                    LogNode::Bctrl,
                    EventKind::Wake,
                    json!({"by": rx[0].sender.to_string()}),
                );
            }
        }
        if self.sleep_mode {
            return report;
        }

        let level = pack.batt_level().round() as u8;
        for f in rx {
            match f.command {
                cmd::UNLOCK_CODE => {
                    self.handle_unlock(t, &f.payload, log);
                }
                c if cmd::is_update(c) => {
                    if self.patches.dfu && !self.can_fw_update {
                        log.append(
                            t,
                            LogNode::Bctrl,
                            EventKind::InstallRejected,
                            json!({"target": "BCTRL", "reason": "UpdateLocked", "cmd": c}),
                        );
                        continue;
                    }
                    match self.update.handle(c, &f.payload) {
                        UpdateStep::Progress => {}
                        UpdateStep::Reset(why) => {
                            log.append(
                                t,
                                LogNode::Bctrl,
                                EventKind::InstallRejected,
                                json!({"target": "BCTRL", "reason": "SessionReset", "detail": why}),
                            );
                        }
                        UpdateStep::ImageReady(img) => report.image = Some(img),
                    }
                }
                cmd::BATT_LEVEL if f.ptype == PacketType::Read => {
                    out.push(UartFrame::new(
                        NodeId::BCTRL,
                        f.sender,
                        PacketType::Notify,
                        cmd::BATT_LEVEL,
                        vec![level],
                    ));
                }
                cmd::CELL_VOLTAGES if f.ptype == PacketType::Read => {
                    out.push(UartFrame::new(
                        NodeId::BCTRL,
                        f.sender,
                        PacketType::Notify,
                        cmd::CELL_VOLTAGES,
                        self.status_payload(&volts),
                    ));
                }
                _ => {}
            }
        }

        if t >= self.next_status_ms {
            self.next_status_ms = t + STATUS_PERIOD_MS;
            out.push(UartFrame::new(
                NodeId::BCTRL,
                NodeId::BTS,
                PacketType::Notify,
                cmd::CELL_VOLTAGES,
                self.status_payload(&volts),
            ));
        }
        report
    }

    pub fn handle_unlock(&mut self, t: Millis, code: &[u8], log: &mut EventLog) -> UnlockResult {
        let Some(expected) = self.unlock_code.filter(|_| self.patches.dfu) else {
            return UnlockResult::NotLocked;
        };
        if code != expected {
            log.append(
                t,
                LogNode::Bctrl,
                EventKind::Unlock,
                json!({"accepted": false}),
            );
            return UnlockResult::Mismatch;
        }
        if self.can_fw_update {
            return UnlockResult::AlreadyUnlocked;
        }
        self.can_fw_update = true;
        log.append(
            t,
            LogNode::Bctrl,
            EventKind::Unlock,
            json!({"accepted": true}),
        );
        UnlockResult::Unlocked
    }

    /// The flag the charge path sees; DBC pins it to false.
    pub fn read_can_charge(&self) -> bool {
        !self.patches.dbc && self.can_charge
    }

    pub fn control_charge(
        &self,
        charger_present: bool,
        regs: &BmonRegisters,
        pack: &Pack<f64>,
    ) -> bool {
        let above_cuvt = pack
            .min_live_voltage()
            .is_some_and(|v| v >= self.thresholds.c_uvt as f64);
        self.booted
            && charger_present
            && self.read_can_charge()
            && !regs.faults.over_trip
            && (above_cuvt || self.recovery)
    }

    pub fn spoof_frame(
        &self,
        sender: NodeId,
        receiver: NodeId,
        ptype: PacketType,
        command: u8,
        payload: Vec<u8>,
    ) -> Result<UartFrame, CapabilityMissing> {
        if !self.patches.mub {
            return Err(CapabilityMissing(Capability::Mub));
        }
        Ok(UartFrame::new(sender, receiver, ptype, command, payload))
    }

    pub fn spoof_i2c<S: crate::Scalar>(
        &self,
        regs: &mut BmonRegisters,
        pack: &Pack<S>,
        msg: I2cMessage,
    ) -> Result<Result<I2cReply, I2cError>, CapabilityMissing> {
        if !self.patches.mib {
            return Err(CapabilityMissing(Capability::Mib));
        }
        Ok(regs.access(pack, msg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::SHIP_BIT;
    use crate::simkern::Profile;

    fn boot(patches: PatchSet) -> (BctrlState, BmonRegisters, Pack<f64>, EventLog) {
        let pack = Pack::for_profile(Profile::M365);
        let mut regs = BmonRegisters::default();
        let mut log = EventLog::new();
        let mut b = BctrlState::new("00000000000001", "1.0.0", pack.thresholds);
        b.install(
            "1.0.0",
            &Manifest {
                patches,
                ..Manifest::stock()
            },
            false,
        );
        assert!(b.init_bmon(0, &mut regs, &pack, &mut log));
        (b, regs, pack, log)
    }

    #[test]
    fn boot_writes_trip_registers() {
        let (_, regs, _, _) = boot(PatchSet::stock());
        assert_eq!((regs.uv_trip, regs.ov_trip), (2750, 4200));
        let (_, regs, _, _) = boot(PatchSet::of(&[Capability::Ddt]));
        assert_eq!((regs.uv_trip, regs.ov_trip), (1580, 4700));
    }

    #[test]
    fn boot_aborts_in_ship_mode() {
        let pack = Pack::<f64>::for_profile(Profile::M365);
        let mut regs = BmonRegisters {
            sys_ctrl: SHIP_BIT,
            ..Default::default()
        };
        let mut log = EventLog::new();
        let mut b = BctrlState::new("00000000000001", "1.0.0", pack.thresholds);
        assert!(!b.init_bmon(0, &mut regs, &pack, &mut log));
        assert_eq!(log.count(EventKind::ErrorRaised), 1);
    }

    #[test]
    fn healthy_tick_emits_status() {
        let (mut b, mut regs, mut pack, mut log) = boot(PatchSet::stock());
        let mut out = Vec::new();
        b.main_loop_tick(0, &mut regs, &mut pack, &[], &mut log, &mut out);
        assert!(!b.sleep_mode);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].command, cmd::CELL_VOLTAGES);
    }

    #[test]
    fn undervolt_sleeps_and_powers_off_unless_patched() {
        let (mut b, mut regs, mut pack, mut log) = boot(PatchSet::stock());
        pack.groups[0].set_voltage(1500.0);
        let mut out = Vec::new();
        b.main_loop_tick(100, &mut regs, &mut pack, &[], &mut log, &mut out);
        assert!(b.sleep_mode);
        assert!(out
            .iter()
            .any(|f| f.command == cmd::POWER_OFF && f.receiver == NodeId::DRV));
        assert!(out
            .iter()
            .any(|f| f.command == cmd::POWER_OFF && f.receiver == NodeId::BTS));

        let (mut b, mut regs, mut pack, mut log) =
            boot(PatchSet::of(&[Capability::Dct, Capability::Fbd]));
        pack.groups[0].set_voltage(1500.0);
        let mut out = Vec::new();
        b.main_loop_tick(100, &mut regs, &mut pack, &[], &mut log, &mut out);
        assert!(!b.sleep_mode);
        assert!(out.iter().all(|f| f.command != cmd::POWER_OFF));
    }

    #[test]
    fn idle_sleep_and_wake() {
        let (mut b, mut regs, mut pack, mut log) = boot(PatchSet::stock());
        let mut out = Vec::new();
        b.main_loop_tick(IDLE_SLEEP_MS, &mut regs, &mut pack, &[], &mut log, &mut out);
        assert!(b.sleep_mode);
        let poll = UartFrame::new(
            NodeId::DRV,
            NodeId::BCTRL,
            PacketType::Read,
            cmd::BATT_LEVEL,
            vec![],
        );
        out.clear();
        b.main_loop_tick(
            IDLE_SLEEP_MS + 100,
            &mut regs,
            &mut pack,
            &[poll],
            &mut log,
            &mut out,
        );
        assert!(!b.sleep_mode);
        assert!(out
            .iter()
            .any(|f| f.command == cmd::BATT_LEVEL && f.payload == vec![100]));
    }

    #[test]
    fn fbd_never_sleeps() {
        let (mut b, mut regs, mut pack, mut log) = boot(PatchSet::of(&[Capability::Fbd]));
        let mut out = Vec::new();
        for i in 0..200 {
            b.main_loop_tick(i * 100, &mut regs, &mut pack, &[], &mut log, &mut out);
            assert!(!b.sleep_mode);
        }
    }

    #[test]
    fn unlock_is_exact_and_idempotent() {
        let code = [0x5A; 16];
        let pack = Pack::<f64>::for_profile(Profile::M365);
        let mut b = BctrlState::new("00000000000001", "1.0.0", pack.thresholds);
        let m = Manifest {
            patches: PatchSet::of(&[Capability::Dfu]),
            payload: Payload::Ubr,
            unlock_code: Some(hex::encode(code)),
        };
        b.install("6.6.6", &m, false);
        assert!(!b.can_fw_update);
        let mut log = EventLog::new();
        let mut bad = code;
        bad[15] ^= 1;
        assert_eq!(b.handle_unlock(0, &bad, &mut log), UnlockResult::Mismatch);
        assert!(!b.can_fw_update);
        assert_eq!(b.handle_unlock(1, &code, &mut log), UnlockResult::Unlocked);
        assert_eq!(
            b.handle_unlock(2, &code, &mut log),
            UnlockResult::AlreadyUnlocked
        );
        assert!(b.can_fw_update);
    }

    #[test]
    fn locked_updates_are_rejected() {
        let (mut b, mut regs, mut pack, mut log) = boot(PatchSet::of(&[Capability::Dfu]));
        let frames = super::super::update::chunk_image(NodeId::BTS, NodeId::BCTRL, b"stock");
        let mut out = Vec::new();
        let r = b.main_loop_tick(0, &mut regs, &mut pack, &frames, &mut log, &mut out);
        assert!(r.image.is_none());
        assert_eq!(log.count(EventKind::InstallRejected), frames.len());
    }

    #[test]
    fn charge_control() {
        let (b, regs, pack, _) = boot(PatchSet::stock());
        assert!(b.control_charge(true, &regs, &pack));
        assert!(!b.control_charge(false, &regs, &pack));
        let (b, regs, pack, _) = boot(PatchSet::of(&[Capability::Dbc]));
        assert!(!b.control_charge(true, &regs, &pack));
        let (mut b, regs, mut pack, _) = boot(PatchSet::stock());
        pack.groups[2].set_voltage(800.0);
        assert!(!b.control_charge(true, &regs, &pack));
        b.recovery = true;
        assert!(b.control_charge(true, &regs, &pack));
    }

    #[test]
    fn scv_only_touches_reports() {
        let mut p = PatchSet::of(&[Capability::Scv]);
        p.scv_spoof = Some(super::super::patches::ScvSpoof {
            group: 3,
            voltage_mv: 3650,
        });
        let (mut b, mut regs, mut pack, mut log) = boot(p);
        let before = pack.clone();
        let mut out = Vec::new();
        b.main_loop_tick(0, &mut regs, &mut pack, &[], &mut log, &mut out);
        assert_eq!(pack, before);
        let payload = &out[0].payload;
        assert_eq!(u16::from_be_bytes([payload[6], payload[7]]), 3650);
        assert_eq!(u16::from_be_bytes([payload[0], payload[1]]), 4200);
    }

    #[test]
    fn spoofing_requires_capability() {
        let (b, mut regs, pack, _) = boot(PatchSet::stock());
        assert_eq!(
            b.spoof_frame(
                NodeId::BTS,
                NodeId::DRV,
                PacketType::Read,
                cmd::PASSWORD_HASH,
                vec![]
            ),
            Err(CapabilityMissing(Capability::Mub))
        );
        assert!(b
            .spoof_i2c(
                &mut regs,
                &pack,
                I2cMessage::write(Register::SysCtrl, SHIP_BIT)
            )
            .is_err());
        let (b, mut regs, pack, _) = boot(PatchSet::of(&[Capability::Mub, Capability::Mib]));
        assert!(b
            .spoof_frame(
                NodeId::BTS,
                NodeId::DRV,
                PacketType::Read,
                cmd::PASSWORD_HASH,
                vec![]
            )
            .is_ok());
        b.spoof_i2c(
            &mut regs,
            &pack,
            I2cMessage::write(Register::SysCtrl, SHIP_BIT),
        )
        .unwrap()
        .unwrap();
        assert!(regs.ship_mode());
    }
}
