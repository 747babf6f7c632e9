//! Behaviour of the payload inside a malicious BCTRL build. It runs as part
//! of the BCTRL main loop and only has the powers its capabilities grant.

use serde_json::{json, Value};

use super::world::World;
use crate::attacks::fragments::split;
use crate::attacks::{capabilities_for, TrackMessage};
use crate::battery::{I2cMessage, I2cReply, Register, SHIP_BIT};
use crate::bctrl::{Capability, Payload};
use crate::bus::{cmd, NodeId, PacketType};
use crate::periph::ErrorCode;
use crate::simkern::{Attack, EventKind, LogNode, Millis};

/// Shortened payment link advertised on reveal; fits the BLE name.
pub const RANSOM_URL: &str = "t.ly/AaBbCc";
pub const TRACK_PERIOD_MS: Millis = 20_000;
pub const ROTATION_MS: Millis = 500;
pub const HASH_READ_RETRY_MS: Millis = 2_000;
pub const DES4_RESET_PERIOD_MS: Millis = 10_000;
pub const DES6_E23_AFTER_MS: Millis = 1_000;
pub const DES6_E24_AFTER_MS: Millis = 20_000;
pub const DES3_FLOOD_FPS: u32 = 2_000;

pub fn attack_of(p: Payload) -> Attack {
    match p {
        Payload::None => Attack::None,
        Payload::Ubr => Attack::Ubr,
        Payload::Uti => Attack::Uti,
        Payload::Plr => Attack::Plr,
        Payload::Des(n) => Attack::Des(n),
    }
}

#[derive(Debug, Clone, Default)]
pub struct UbrState {
    pub init_at: Option<Millis>,
    /// Per group: 0 healthy, 1 below dUVT, 2 below cUVT.
    pub zone: Vec<u8>,
    pub dead: Vec<usize>,
    pub revealed_at: Option<Millis>,
}

#[derive(Debug, Clone, Default)]
pub struct UtiState {
    pub next_cycle: Millis,
    pub drv_id: Option<Vec<u8>>,
    pub mileage: Option<u16>,
    pub level: Option<u8>,
    pub sent: Vec<(Millis, TrackMessage)>,
}

#[derive(Debug, Clone, Default)]
pub struct PlrState {
    pub reads: u32,
    pub next_read: Millis,
    pub hash: Option<[u8; 32]>,
    pub rotated: usize,
    pub next_rotation: Millis,
    /// First and last rotation times.
    pub window: Option<(Millis, Millis)>,
}

#[derive(Debug, Clone, Default)]
pub struct DesState {
    pub next_reset: Millis,
    pub e23_sent: bool,
    pub e24_sent: bool,
}

/// Mutable state of the installed payload.
#[derive(Debug, Clone, Default)]
pub struct PayloadRuntime {
    pub armed_at: Option<Millis>,
    pub failed: Option<String>,
    pub ubr: UbrState,
    pub uti: UtiState,
    pub plr: PlrState,
    pub des: DesState,
}

fn phase(w: &mut World, t: Millis, detail: Value) {
    w.log
        .append(t, LogNode::Bctrl, EventKind::AttackPhase, detail);
}

impl PayloadRuntime {
    fn fail(&mut self, w: &mut World, t: Millis, step: &str, reason: String) {
        phase(
            w,
            t,
            json!({"step": step, "status": "failed", "reason": reason}),
        );
        self.failed = Some(format!("{step}: {reason}"));
    }

    /// Puts a frame with a forged sender on the line.
    #[allow(clippy::too_many_arguments)]
    fn spoof(
        &mut self,
        w: &mut World,
        t: Millis,
        step: &str,
        from: NodeId,
        to: NodeId,
        ptype: PacketType,
        c: u8,
        p: Vec<u8>,
    ) -> bool {
        match w.bctrl.spoof_frame(from, to, ptype, c, p) {
            Ok(f) => {
                w.send(NodeId::BCTRL, f);
                true
            }
            Err(e) => {
                self.fail(w, t, step, e.to_string());
                false
            }
        }
    }

    fn require(&mut self, w: &mut World, t: Millis, step: &str, cap: Capability) -> bool {
        if w.bctrl.patches.has(cap) {
            true
        } else {
            self.fail(
                w,
                t,
                step,
                format!("capability {cap} not present in installed firmware"),
            );
            false
        }
    }

    pub fn on_tick(&mut self, w: &mut World, t: Millis) {
        let payload = w.bctrl.payload;
        if payload == Payload::None
            || !w.bctrl.booted
            || w.bctrl.sleep_mode
            || self.failed.is_some()
        {
            return;
        }
        if self.armed_at.is_none() {
            let need = capabilities_for(attack_of(payload));
            let missing: Vec<String> = need
                .iter()
                .filter(|&&c| !w.bctrl.patches.has(c))
                .map(|c| c.to_string())
                .collect();
            if !missing.is_empty() {
                self.fail(w, t, "arm", format!("missing {}", missing.join(",")));
                return;
            }
            self.armed_at = Some(t);
            phase(
                w,
                t,
                json!({"step": "arm", "status": "ok", "payload": payload, "capabilities": need}),
            );
        }
        match payload {
            Payload::Ubr => self.ubr(w, t),
            Payload::Uti => self.uti(w, t),
            Payload::Plr => self.plr(w, t),
            Payload::Des(n) => self.des(w, t, n),
            Payload::None => {}
        }
    }

    fn ubr(&mut self, w: &mut World, t: Millis) {
        if self.ubr.init_at.is_none() {
            // Stealthy until the rider has run the battery down.
            if w.pack.batt_level() >= 0.5 {
                return;
            }
            if !self.require(w, t, "disable-undervoltage-checks", Capability::Ddt)
                || !self.require(w, t, "disable-undervoltage-checks", Capability::Dct)
            {
                return;
            }
            phase(
                w,
                t,
                json!({"step": "disable-undervoltage-checks", "uv_trip": w.regs.uv_trip, "ov_trip": w.regs.ov_trip}),
            );
            if !self.require(w, t, "disable-balancing", Capability::Dlb) {
                return;
            }
            phase(w, t, json!({"step": "disable-balancing"}));
            if !self.require(w, t, "disable-charging", Capability::Dbc) {
                return;
            }
            w.bctrl.can_charge = false;
            phase(w, t, json!({"step": "disable-charging"}));
            if !self.spoof(
                w,
                t,
                "enable-lock",
                NodeId::BTS,
                NodeId::DRV,
                PacketType::Write,
                cmd::LOCK,
                vec![],
            ) {
                return;
            }
            phase(w, t, json!({"step": "enable-lock"}));
            if !self.require(w, t, "fast-discharge", Capability::Fbd)
                || !self.spoof(
                    w,
                    t,
                    "fast-discharge",
                    NodeId::BTS,
                    NodeId::DRV,
                    PacketType::Write,
                    cmd::LIGHTS,
                    vec![1],
                )
            {
                return;
            }
            phase(w, t, json!({"step": "fast-discharge"}));
            self.ubr.init_at = Some(t);
            self.ubr.zone = vec![0; w.pack.groups.len()];
        }

        let th = w.pack.thresholds;
        let dead = w.pack.check_cell_health();
        for &g in dead.iter().filter(|g| !self.ubr.dead.contains(g)) {
            let grp = &w.pack.groups[g - 1];
            let detail = json!({"group": g, "effectiveCapacityPct": grp.effective_capacity / grp.nominal_capacity * 100.0,
                                "degradationFactor": grp.degradation_factor});
            w.log.append(t, LogNode::Bctrl, EventKind::CellDead, detail);
        }
        self.ubr.dead = dead;
        let volts = w.pack.voltages();
        for (i, &v) in volts.iter().enumerate() {
            let zone = if v < th.c_uvt as f64 {
                2
            } else if v < th.d_uvt as f64 {
                1
            } else {
                0
            };
            if zone > self.ubr.zone[i] {
                let name = if zone == 2 { "cUVT" } else { "dUVT" };
                w.log.append(
                    t,
                    LogNode::Bctrl,
                    EventKind::ThresholdCrossed,
                    json!({"group": i + 1, "threshold": name, "mv": v.round()}),
                );
                self.ubr.zone[i] = zone;
            }
        }
        let notify = volts.iter().any(|&v| v < th.c_uvt as f64);
        if notify && self.ubr.revealed_at.is_none() {
            if !self.require(w, t, "reveal", Capability::Cba)
                || !self.spoof(
                    w,
                    t,
                    "reveal",
                    NodeId::DRV,
                    NodeId::BTS,
                    PacketType::Write,
                    cmd::BLE_NAME,
                    RANSOM_URL.as_bytes().to_vec(),
                )
            {
                return;
            }
            self.ubr.revealed_at = Some(t);
            phase(w, t, json!({"step": "reveal", "url": RANSOM_URL}));
        }
    }

    fn uti(&mut self, w: &mut World, t: Millis) {
        for f in &w.bctrl_seen {
            if f.sender != NodeId::DRV || f.ptype != PacketType::Notify {
                continue;
            }
            match f.command {
                cmd::DRV_ID => self.uti.drv_id = Some(f.payload.clone()),
                cmd::MILEAGE if f.payload.len() == 2 => {
                    self.uti.mileage = Some(u16::from_be_bytes([f.payload[0], f.payload[1]]))
                }
                cmd::BATT_LEVEL => self.uti.level = f.payload.first().copied(),
                _ => {}
            }
        }
        if let (Some(id), Some(km), Some(level)) =
            (&self.uti.drv_id, self.uti.mileage, self.uti.level)
        {
            let Some(fingerprint) = TrackMessage::fingerprint_of(id) else {
                self.fail(w, t, "fingerprint", "short DRV serial".into());
                return;
            };
            let track = TrackMessage {
                fingerprint,
                mileage_km: km,
                batt_level: level,
            };
            self.uti.drv_id = None;
            self.uti.mileage = None;
            self.uti.level = None;
            if !self.require(w, t, "advertise-track", Capability::Cba)
                || !self.spoof(
                    w,
                    t,
                    "advertise-track",
                    NodeId::DRV,
                    NodeId::BTS,
                    PacketType::Write,
                    cmd::BLE_NAME,
                    track.to_bytes().to_vec(),
                )
            {
                return;
            }
            phase(
                w,
                t,
                json!({"step": "advertise-track", "track": hex::encode(track.to_bytes())}),
            );
            self.uti.sent.push((t, track));
        }
        if t < self.uti.next_cycle {
            return;
        }
        self.uti.next_cycle = t + TRACK_PERIOD_MS;
        // Cross-check the level against the monitor before asking the DRV.
        let mut sum = 0u32;
        for i in 1..=w.pack.groups.len() as u8 {
            match w
                .bctrl
                .spoof_i2c(&mut w.regs, &w.pack, I2cMessage::read(Register::Vc(i)))
            {
                Ok(Ok(I2cReply::Value(v))) => sum += v as u32,
                Ok(_) => {}
                Err(e) => {
                    self.fail(w, t, "read-bmon", e.to_string());
                    return;
                }
            }
        }
        phase(
            w,
            t,
            json!({"step": "read-bmon", "mean_mv": sum / w.pack.groups.len() as u32}),
        );
        for c in [cmd::DRV_ID, cmd::MILEAGE, cmd::BATT_LEVEL] {
            if !self.spoof(
                w,
                t,
                "spoof-read",
                NodeId::BTS,
                NodeId::DRV,
                PacketType::Read,
                c,
                vec![],
            ) {
                return;
            }
        }
        phase(
            w,
            t,
            json!({"step": "spoof-read", "fields": ["drvId", "mileage", "battLevel"]}),
        );
    }

    fn plr(&mut self, w: &mut World, t: Millis) {
        if self.plr.hash.is_none() {
            let seen = w.bctrl_seen.iter().find(|f| {
                f.sender == NodeId::DRV
                    && f.ptype == PacketType::Notify
                    && f.command == cmd::PASSWORD_HASH
                    && f.payload.len() == 32
            });
            if let Some(f) = seen {
                self.plr.hash = Some(f.payload[..].try_into().unwrap());
                self.plr.next_rotation = t;
                phase(w, t, json!({"step": "hash-captured"}));
            } else if t >= self.plr.next_read && self.plr.reads < 3 {
                self.plr.reads += 1;
                self.plr.next_read = t + HASH_READ_RETRY_MS;
                if self.spoof(
                    w,
                    t,
                    "spoof-read",
                    NodeId::BTS,
                    NodeId::DRV,
                    PacketType::Read,
                    cmd::PASSWORD_HASH,
                    vec![],
                ) {
                    phase(
                        w,
                        t,
                        json!({"step": "spoof-read", "field": "passwordHash", "attempt": self.plr.reads}),
                    );
                }
                return;
            } else {
                return;
            }
        }
        let Some(hash) = self.plr.hash else { return };
        if self.plr.rotated < 3 && t >= self.plr.next_rotation {
            let frag = split(&hash)[self.plr.rotated].clone();
            if !self.require(w, t, "exfiltrate", Capability::Cba)
                || !self.spoof(
                    w,
                    t,
                    "exfiltrate",
                    NodeId::DRV,
                    NodeId::BTS,
                    PacketType::Write,
                    cmd::BLE_NAME,
                    frag,
                )
            {
                return;
            }
            self.plr.rotated += 1;
            self.plr.next_rotation = t + ROTATION_MS;
            let start = self.plr.window.map_or(t, |w| w.0);
            self.plr.window = Some((start, t));
            phase(
                w,
                t,
                json!({"step": "exfiltrate", "fragment": self.plr.rotated}),
            );
        }
    }

    fn des(&mut self, w: &mut World, t: Millis, n: u8) {
        let armed = self.armed_at.unwrap_or(t);
        let first = armed == t;
        match n {
            1 if first => {
                w.bctrl_isolated = true;
                phase(
                    w,
                    t,
                    json!({"step": "drop-inbound", "uart": true, "i2c": true}),
                );
            }
            2 if first => match w.bctrl.spoof_i2c(
                &mut w.regs,
                &w.pack,
                I2cMessage::write(Register::SysCtrl, SHIP_BIT),
            ) {
                Ok(_) => phase(w, t, json!({"step": "ship-mode"})),
                Err(e) => self.fail(w, t, "ship-mode", e.to_string()),
            },
            3 if first => {
                if self.require(w, t, "flood", Capability::Mub) {
                    w.flood_fps = DES3_FLOOD_FPS;
                    phase(w, t, json!({"step": "flood", "fps": DES3_FLOOD_FPS}));
                }
            }
            4 => {
                if t >= self.des.next_reset {
                    self.des.next_reset = t + DES4_RESET_PERIOD_MS;
                    if !self.spoof(
                        w,
                        t,
                        "reset",
                        NodeId::BTS,
                        NodeId::DRV,
                        PacketType::Write,
                        cmd::RESET,
                        vec![],
                    ) {
                        return;
                    }
                }
                self.spoof(
                    w,
                    t,
                    "lock",
                    NodeId::BTS,
                    NodeId::DRV,
                    PacketType::Write,
                    cmd::LOCK,
                    vec![],
                );
                if first {
                    phase(w, t, json!({"step": "lock-reset-cycle"}));
                }
            }
            5 if first => {
                if self.require(w, t, "disable-charging", Capability::Dbc) {
                    w.bctrl.can_charge = false;
                    phase(w, t, json!({"step": "disable-charging"}));
                }
            }
            6 => {
                for (sent, after, code) in [
                    (self.des.e23_sent, DES6_E23_AFTER_MS, ErrorCode::E23),
                    (self.des.e24_sent, DES6_E24_AFTER_MS, ErrorCode::E24),
                ] {
                    if !sent && t >= armed + after {
                        if !self.spoof(
                            w,
                            t,
                            "forge-error",
                            NodeId::BTS,
                            NodeId::DRV,
                            PacketType::Write,
                            cmd::ERROR_NOTIFY,
                            vec![code.number()],
                        ) {
                            return;
                        }
                        phase(
                            w,
                            t,
                            json!({"step": "forge-error", "code": code.to_string()}),
                        );
                        match code {
                            ErrorCode::E23 => self.des.e23_sent = true,
                            _ => self.des.e24_sent = true,
                        }
                    }
                }
            }
            7 if first && self.require(w, t, "deny-sleep", Capability::Fbd) => {
                phase(w, t, json!({"step": "deny-sleep"}));
            }
            _ => {}
        }
    }
}
