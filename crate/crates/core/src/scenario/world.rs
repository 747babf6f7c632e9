//! The simulated scooter: pack, BMON, BCTRL, BTS, DRV and the UART medium,
//! advanced in fixed ticks by the event loop.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, RngCore};
use serde::Serialize;
use serde_json::json;

use super::payload::PayloadRuntime;
use super::script::UserScript;
use crate::attacks::UnlockAuthority;
use crate::battery::{BmonRegisters, DegradationRates, Pack, Thresholds};
use crate::bctrl::{chunk_image, BctrlState, Manifest};
use crate::bus::{establish, Bus, BusConfig, NodeId, Psk, SecureSession, Transmission, UartFrame};
use crate::fwpipe::{
    verify_and_install, FirmwareImage, InstallContext, KeyMaterial, SigningPolicy, Target,
};
use crate::periph::{generate_drv_id, BtsState, DrvState, Sniffer};
use crate::simkern::{
    rng_from_seed, Countermeasure, EventKind, EventLog, LogNode, Millis, Profile, ScenarioConfig,
    Scheduler, SimRng,
};

/// Frames a node may put on the line per tick.
pub const TX_PER_TICK: usize = 4;
pub const VOLTAGE_SAMPLE_MS: Millis = 1_000;
/// Per-cell charger target.
pub const CHARGER_TARGET_MV: f64 = 4200.0;

/// Load-side characteristics of a scooter model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileParams {
    /// Pack current while riding; sized so a full pack reaches 0% in the
    /// observed ride time.
    pub nominal_load_ma: f64,
    /// Pack current with the scooter on but stationary.
    pub idle_load_ma: f64,
    pub charger_ma: f64,
    /// DRV compares the supply voltage against cUVT on its own.
    pub drv_voltage_check: bool,
    /// Group with the highest self-discharge, and its load multiplier.
    pub weak_group: usize,
    pub weak_weight: f64,
    pub bts_fw: &'static str,
    pub drv_fw: &'static str,
    pub bctrl_fw: &'static str,
}

/// Extra load multiplier on the weakest group, fitted against the degradation
/// targets together with the decay rates.
pub const WEAK_GROUP_WEIGHT: f64 = 1.03;

/// The fitted battery constants; overridable so the calibration search can
/// try candidates without touching the frozen defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryModel {
    pub rates: DegradationRates<f64>,
    pub weak_weight: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self {
            rates: DegradationRates::default(),
            weak_weight: WEAK_GROUP_WEIGHT,
        }
    }
}

impl ProfileParams {
    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::M365 => Self {
                nominal_load_ma: 2600.0,
                idle_load_ma: 120.0,
                charger_ma: 1700.0,
                drv_voltage_check: false,
                weak_group: 2,
                weak_weight: WEAK_GROUP_WEIGHT,
                bts_fw: "1.5.1",
                drv_fw: "1.5.5",
                bctrl_fw: crate::attacks::images::STOCK_BCTRL_VERSION,
            },
            Profile::Es3 => Self {
                nominal_load_ma: 1275.0,
                idle_load_ma: 120.0,
                charger_ma: 1700.0,
                drv_voltage_check: true,
                weak_group: 2,
                weak_weight: WEAK_GROUP_WEIGHT,
                bts_fw: "1.5.5",
                drv_fw: "0.1.7",
                bctrl_fw: "1.4.1",
            },
        }
    }
}

/// Scripted stimuli from outside the scooter.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Tick,
    PowerOn,
    PowerOff,
    StartRiding,
    StopRiding,
    ConnectCharger,
    DisconnectCharger,
    FactoryReset,
    /// Firmware image handed to the BTS over BLE.
    Deliver(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoltageRow {
    pub t_ms: Millis,
    pub vc: Vec<u16>,
    pub battlevel: u8,
    pub sleeping: bool,
    pub charging: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstallRecord {
    pub t: Millis,
    pub target: String,
    pub version: String,
    pub accepted: bool,
    pub reason: Option<String>,
}

/// Key material held by each party.
#[derive(Debug, Clone)]
pub struct Keys {
    pub vendor: KeyMaterial,
    pub device: KeyMaterial,
    pub attacker: KeyMaterial,
}

/// Tick counters the outcome checks read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Observations {
    /// Ticks since the payload armed, after a one-second grace period.
    pub armed_ticks: u64,
    pub rideable_ticks: u64,
    pub charger_ticks: u64,
    pub charging_ticks: u64,
}

pub const OBSERVE_GRACE_MS: Millis = 1_000;

pub struct World {
    pub cfg: ScenarioConfig,
    pub params: ProfileParams,
    pub rng: SimRng,
    pub log: EventLog,
    pub sched: Scheduler<Action>,
    pub pack: Pack<f64>,
    pub rates: DegradationRates<f64>,
    pub regs: BmonRegisters,
    pub bctrl: BctrlState,
    pub bts: BtsState,
    pub drv: DrvState,
    pub bus: Bus,
    pub sniffer: Sniffer,
    pub policy: SigningPolicy,
    pub keys: Keys,
    pub authority: UnlockAuthority,
    pub charger_present: bool,
    pub charging: bool,
    pub riding: bool,
    /// DES1: nothing reaches the BCTRL, over UART or I2C.
    pub bctrl_isolated: bool,
    /// DES3: dummy frames per second the BCTRL pushes onto the line.
    pub flood_fps: u32,
    pub voltages: Vec<VoltageRow>,
    pub installs: Vec<InstallRecord>,
    pub observed: Observations,
    /// Plaintext frames the BCTRL saw on the line this tick, any receiver.
    pub bctrl_seen: Vec<UartFrame>,
    pub payload: PayloadRuntime,
    pub script: UserScript,
    pub stopped: Option<String>,
    pub now: Millis,
    sessions: BTreeMap<(NodeId, NodeId), SecureSession>,
    outbox: BTreeMap<NodeId, VecDeque<UartFrame>>,
    inbox: BTreeMap<NodeId, Vec<Transmission>>,
    charge_blocked_logged: bool,
}

const TRANSMITTERS: [NodeId; 3] = [NodeId::BTS, NodeId::DRV, NodeId::BCTRL];

impl World {
    /// Builds the scooter for `cfg`. `baseline` skips the malicious install
    /// while keeping the attack's user script.
    pub fn new(cfg: ScenarioConfig, baseline: bool) -> Self {
        Self::with_model(cfg, baseline, BatteryModel::default())
    }

    pub fn with_model(cfg: ScenarioConfig, baseline: bool, model: BatteryModel) -> Self {
        let mut params = ProfileParams::for_profile(cfg.profile);
        params.weak_weight = model.weak_weight;
        let mut rng = rng_from_seed(cfg.seed);
        let drv_id = generate_drv_id(&mut rng);
        let serial = String::from_utf8_lossy(&drv_id).into_owned();
        let bts_name = format!("MIScooter{:04}", rng.gen_range(0..10_000));
        let thresholds = Thresholds::default();
        let pack =
            Pack::for_profile(cfg.profile).with_load_weight(params.weak_group, params.weak_weight);
        let cm = cfg.countermeasures;

        let mut sessions = BTreeMap::new();
        if cm.has(Countermeasure::C3) {
            for (i, &a) in TRANSMITTERS.iter().enumerate() {
                for &b in &TRANSMITTERS[i + 1..] {
                    let mut psk = [0u8; 16];
                    rng.fill_bytes(&mut psk);
                    let (ca, cb): ([u8; 8], [u8; 8]) = (rng.gen(), rng.gen());
                    let (sa, sb) = establish(a, b, &Psk(psk), &Psk(psk), ca, cb)
                        .expect("provisioned keys match");
                    sessions.insert((a, b), sa);
                    sessions.insert((b, a), sb);
                }
            }
        }

        let script = UserScript::for_attack(cfg.attack);
        let mut w = Self {
            params,
            log: EventLog::new(),
            sched: Scheduler::new(),
            pack,
            rates: model.rates,
            regs: BmonRegisters::default(),
            bctrl: BctrlState::new(&serial, params.bctrl_fw, thresholds),
            bts: BtsState::new(bts_name.as_bytes(), params.bts_fw),
            drv: DrvState::new(drv_id, &cfg.pin, params.drv_voltage_check, params.drv_fw),
            bus: Bus::new(BusConfig {
                rate_limit: cm.has(Countermeasure::C4),
                ..BusConfig::default()
            }),
            sniffer: Sniffer::default(),
            policy: SigningPolicy::vulnerable(cfg.profile).with_countermeasures(cm),
            keys: Keys {
                vendor: KeyMaterial::vendor(),
                device: KeyMaterial::device(),
                attacker: KeyMaterial::attacker(),
            },
            authority: UnlockAuthority::default(),
            charger_present: false,
            charging: false,
            riding: false,
            bctrl_isolated: false,
            flood_fps: 0,
            voltages: Vec::new(),
            installs: Vec::new(),
            observed: Observations::default(),
            bctrl_seen: Vec::new(),
            payload: PayloadRuntime::default(),
            script,
            stopped: None,
            now: 0,
            sessions,
            outbox: TRANSMITTERS.iter().map(|&n| (n, VecDeque::new())).collect(),
            inbox: BTreeMap::new(),
            charge_blocked_logged: false,
            rng,
            cfg,
        };
        w.log.append(
            0,
            LogNode::Kernel,
            EventKind::Summary,
            json!({"phase": "start", "config": w.cfg, "drvId": serial, "bleName": bts_name}),
        );
        w.bctrl.init_bmon(0, &mut w.regs, &w.pack, &mut w.log);
        let mut script = std::mem::take(&mut w.script);
        script.setup(&mut w, baseline);
        w.script = script;
        w.sched
            .schedule(Action::Tick, 0)
            .expect("t=0 is not in the past");
        w
    }

    pub fn record_frames(&mut self) {
        self.bus.record_dump();
    }

    /// Runs until the configured duration or an early stop.
    pub fn run_to_end(&mut self) {
        while let Some(t) = self.sched.peek_time() {
            if t >= self.cfg.duration_ms || self.stopped.is_some() {
                break;
            }
            let (t, a) = self.sched.pop().expect("peeked");
            self.now = t;
            self.dispatch(t, a);
        }
    }

    pub fn at(&mut self, t: Millis, a: Action) {
        // Scripts only schedule forward in time.
        let _ = self.sched.schedule(a, t.max(self.sched.now()));
    }

    /// Queues a frame for transmission by `origin`.
    pub fn send(&mut self, origin: NodeId, f: UartFrame) {
        self.outbox.entry(origin).or_default().push_back(f);
    }

    pub fn stop(&mut self, why: &str) {
        if self.stopped.is_none() {
            self.log.append(
                self.now,
                LogNode::Kernel,
                EventKind::Summary,
                json!({"phase": "stopped", "reason": why}),
            );
            self.stopped = Some(why.to_string());
        }
    }

    fn dispatch(&mut self, t: Millis, a: Action) {
        match a {
            Action::Tick => {
                self.tick(t);
                self.at(t + self.cfg.tick_ms, Action::Tick);
            }
            Action::PowerOn => {
                self.power_on(t);
            }
            Action::PowerOff => {
                self.bts.power_off(t, &mut self.log, "user");
                self.drv.power_off(t, &mut self.log, "user");
            }
            Action::StartRiding => self.riding = true,
            Action::StopRiding => self.riding = false,
            Action::ConnectCharger => {
                self.charger_present = true;
                self.charge_blocked_logged = false;
                self.log.append(
                    t,
                    LogNode::Charger,
                    EventKind::PowerOn,
                    json!({"charger": "connected"}),
                );
                if self.regs.ship_mode() {
                    self.log.append(
                        t,
                        LogNode::Charger,
                        EventKind::Warning,
                        json!({"charger": "no-response", "reason": "ship-mode"}),
                    );
                }
            }
            Action::DisconnectCharger => {
                self.charger_present = false;
                self.log.append(
                    t,
                    LogNode::Charger,
                    EventKind::PowerOff,
                    json!({"charger": "disconnected"}),
                );
            }
            Action::FactoryReset => {
                self.bts.factory_reset(t, &mut self.log, &mut self.sniffer);
                self.drv.factory_reset(t, &mut self.log);
            }
            Action::Deliver(bytes) => self.deliver(t, bytes),
        }
    }

    /// Pressing the power button. Nothing happens once BMON is in ship mode.
    pub fn power_on(&mut self, t: Millis) -> bool {
        if self.regs.ship_mode() || !self.bctrl.booted {
            self.log.append(
                t,
                LogNode::Kernel,
                EventKind::Warning,
                json!({"power-on": "failed", "ship": self.regs.ship_mode()}),
            );
            return false;
        }
        self.bts.power_on(t, &mut self.log, &mut self.sniffer);
        self.drv.power_on(t, &mut self.log);
        true
    }

    fn deliver(&mut self, t: Millis, bytes: Vec<u8>) {
        let target = match FirmwareImage::from_bytes(&bytes) {
            Ok(img) => img.target,
            Err(e) => {
                self.reject(t, "?", "?", &format!("Malformed: {e}"));
                return;
            }
        };
        if !self.bts.powered {
            self.reject(t, &target.to_string(), "?", "BtsUnreachable");
            return;
        }
        self.log.append(
            t,
            LogNode::Bts,
            EventKind::AttackPhase,
            json!({"update": "received", "target": target.to_string(), "len": bytes.len()}),
        );
        match target {
            Target::Bts => {
                self.install_image(t, &bytes);
            }
            Target::Drv => {
                for f in chunk_image(NodeId::BTS, NodeId::DRV, &bytes) {
                    self.send(NodeId::BTS, f);
                }
            }
            Target::Bctrl => {
                for f in chunk_image(NodeId::BTS, NodeId::BCTRL, &bytes) {
                    self.send(NodeId::BTS, f);
                }
            }
        }
    }

    fn reject(&mut self, t: Millis, target: &str, version: &str, reason: &str) {
        self.log.append(
            t,
            LogNode::Kernel,
            EventKind::InstallRejected,
            json!({"target": target, "version": version, "reason": reason}),
        );
        self.installs.push(InstallRecord {
            t,
            target: target.into(),
            version: version.into(),
            accepted: false,
            reason: Some(reason.into()),
        });
    }

    /// Bootloader path shared by every target.
    pub fn install_image(&mut self, t: Millis, bytes: &[u8]) -> bool {
        let img = match FirmwareImage::from_bytes(bytes) {
            Ok(i) => i,
            Err(e) => {
                self.reject(t, "?", "?", &format!("Malformed: {e}"));
                return false;
            }
        };
        let ctx = InstallContext {
            min_live_cell_mv: self.pack.min_live_voltage().unwrap_or(0.0),
            c_uvt_mv: self.pack.thresholds.c_uvt as f64,
        };
        let target = img.target.to_string();
        let inst = match verify_and_install(&img, &self.policy, &self.keys.device, &ctx) {
            Ok(i) => i,
            Err(r) => {
                if img.target == Target::Bctrl {
                    self.bctrl.update.conclude(false);
                }
                self.reject(t, &target, &img.version, &format!("{r:?}"));
                return false;
            }
        };
        match inst.target {
            Target::Bctrl => {
                let Some(m) = Manifest::from_body(&inst.plaintext) else {
                    self.reject(t, &target, &inst.version, "BadManifest");
                    return false;
                };
                self.bctrl
                    .install(&inst.version, &m, inst.allow_charge_below_cuvt);
                self.log.append(
                    t,
                    LogNode::Bctrl,
                    EventKind::InstallAccepted,
                    json!({"target": target, "version": inst.version, "capabilities": m.patches.capabilities(), "payload": m.payload}),
                );
                self.log.append(
                    t,
                    LogNode::Bctrl,
                    EventKind::Reboot,
                    json!({"cause": "firmware-update"}),
                );
                self.bctrl
                    .init_bmon(t, &mut self.regs, &self.pack, &mut self.log);
            }
            Target::Bts => {
                self.bts.fwver = inst.version.clone();
                self.log.append(
                    t,
                    LogNode::Bts,
                    EventKind::InstallAccepted,
                    json!({"target": target, "version": inst.version}),
                );
                self.log.append(
                    t,
                    LogNode::Bts,
                    EventKind::Reboot,
                    json!({"cause": "firmware-update"}),
                );
                self.bts.reboots += 1;
                if self.bts.powered {
                    self.sniffer.record(t, &self.bts.ble_name.clone());
                }
            }
            Target::Drv => {
                self.drv.fwver = inst.version.clone();
                self.log.append(
                    t,
                    LogNode::Drv,
                    EventKind::InstallAccepted,
                    json!({"target": target, "version": inst.version}),
                );
                self.drv.factory_reset(t, &mut self.log);
            }
        }
        self.installs.push(InstallRecord {
            t,
            target,
            version: inst.version,
            accepted: true,
            reason: None,
        });
        true
    }

    /// Current drawn from the pack.
    pub fn load_ma(&self, t: Millis) -> f64 {
        let mut load = self.bctrl.draw_ma();
        if self.drv.powered {
            let moving = self.riding && self.drv.rideable(t);
            load += if moving || self.drv.lights_on {
                self.params.nominal_load_ma
            } else {
                self.params.idle_load_ma
            };
        }
        load
    }

    fn powered_nodes(&self) -> Vec<NodeId> {
        let mut v = Vec::with_capacity(3);
        if self.bts.powered {
            v.push(NodeId::BTS);
        }
        if self.drv.powered {
            v.push(NodeId::DRV);
        }
        if self.bctrl.booted && !self.bctrl_isolated {
            v.push(NodeId::BCTRL);
        }
        v
    }

    /// Frames for `node` from last tick's window: addressed ones that pass the
    /// secure channel, plus (for BCTRL) everything readable on the line.
    fn receive(&mut self, node: NodeId) -> Vec<UartFrame> {
        let txs = self.inbox.remove(&node).unwrap_or_default();
        let secure = self.cfg.countermeasures.has(Countermeasure::C3);
        let mut out = Vec::new();
        for tx in txs {
            let f = tx.frame;
            if f.receiver != node {
                if node == NodeId::BCTRL && !f.wrapped {
                    self.bctrl_seen.push(f);
                }
                continue;
            }
            if !secure {
                if node == NodeId::BCTRL {
                    self.bctrl_seen.push(f.clone());
                }
                out.push(f);
                continue;
            }
            let res = match self.sessions.get_mut(&(node, f.sender)) {
                Some(s) if f.wrapped => s.unwrap(&f).map_err(|e| e.to_string()),
                Some(_) => Err("unwrapped frame".to_string()),
                None => Err("no session with claimed sender".to_string()),
            };
            match res {
                Ok(plain) => {
                    if node == NodeId::BCTRL {
                        self.bctrl_seen.push(plain.clone());
                    }
                    out.push(plain);
                }
                Err(e) => self.log.append(
                    self.now,
                    node.into(),
                    EventKind::Warning,
                    json!({"secure": "rejected", "from": f.sender.to_string(), "cmd": f.command, "error": e}),
                ),
            }
        }
        out
    }

    fn tick(&mut self, t: Millis) {
        let dt = self.cfg.tick_ms;
        self.bctrl_seen.clear();

        // Physics.
        let load = self.load_ma(t);
        if !self.regs.ship_mode() {
            self.pack.step_discharge(load, dt);
        }
        if self.charging {
            self.pack
                .step_charge(self.params.charger_ma, dt, CHARGER_TARGET_MV);
        }
        // Damage accrues while a group rests deep-discharged, not while it is
        // being recharged out of that region.
        if !self.charging {
            self.pack.apply_undervolt_degradation(dt, &self.rates);
        }
        self.regs.protect_check(&self.pack);

        if self.regs.ship_mode() && (self.bctrl.booted || self.bts.powered || self.drv.powered) {
            self.bctrl.booted = false;
            self.bctrl.sleep_mode = false;
            self.log.append(
                t,
                LogNode::Bmon,
                EventKind::PowerOff,
                json!({"reason": "ship-mode"}),
            );
            self.bts.power_off(t, &mut self.log, "ship-mode");
            self.drv.power_off(t, &mut self.log, "ship-mode");
            self.inbox.clear();
        }

        // Nodes.
        let bts_rx = self.receive(NodeId::BTS);
        for f in &bts_rx {
            self.bts.handle(t, f, &mut self.log, &mut self.sniffer);
        }

        let drv_rx = self.receive(NodeId::DRV);
        let mut out = Vec::new();
        let min_mv = self.pack.min_voltage();
        let rep = self.drv.tick(
            t,
            dt,
            min_mv,
            load,
            self.riding,
            &drv_rx,
            &mut self.log,
            &mut out,
        );
        for f in out.drain(..) {
            self.send(NodeId::DRV, f);
        }
        if let Some(img) = rep.image {
            self.install_image(t, &img);
        }

        let bctrl_rx = self.receive(NodeId::BCTRL);
        if self.bctrl.booted && !self.bctrl_isolated {
            let rep = self.bctrl.main_loop_tick(
                t,
                &mut self.regs,
                &mut self.pack,
                &bctrl_rx,
                &mut self.log,
                &mut out,
            );
            for f in out.drain(..) {
                self.send(NodeId::BCTRL, f);
            }
            if let Some(img) = rep.image {
                self.install_image(t, &img);
            }
        }

        let charging = !self.bctrl_isolated
            && self
                .bctrl
                .control_charge(self.charger_present, &self.regs, &self.pack);
        if charging && !self.charging {
            self.log.append(
                t,
                LogNode::Bctrl,
                EventKind::ChargeStarted,
                json!({"min_live_mv": self.pack.min_live_voltage().map(f64::round)}),
            );
        }
        self.charging = charging;
        self.bctrl.charging = charging;
        if self.charger_present && !charging && !self.charge_blocked_logged {
            self.charge_blocked_logged = true;
            self.log.append(
                t,
                LogNode::Bctrl,
                EventKind::ChargeBlocked,
                json!({"can_charge": self.bctrl.read_can_charge(), "booted": self.bctrl.booted, "over_trip": self.regs.faults.over_trip}),
            );
        }

        // Malicious firmware and the people around the scooter.
        let mut payload = std::mem::take(&mut self.payload);
        payload.on_tick(self, t);
        self.payload = payload;
        let mut script = std::mem::take(&mut self.script);
        script.on_tick(self, t);
        self.script = script;

        if let Some(a) = self.payload.armed_at {
            if t >= a + OBSERVE_GRACE_MS {
                self.observed.armed_ticks += 1;
                self.observed.rideable_ticks += self.drv.rideable(t) as u64;
            }
        }
        if self.charger_present {
            self.observed.charger_ticks += 1;
            self.observed.charging_ticks += self.charging as u64;
        }

        self.transmit(t, dt);

        if t.is_multiple_of(VOLTAGE_SAMPLE_MS) {
            self.sample(t);
        }
    }

    fn transmit(&mut self, t: Millis, dt: Millis) {
        let secure = self.cfg.countermeasures.has(Countermeasure::C3);
        for origin in TRANSMITTERS {
            let up = match origin {
                NodeId::BTS => self.bts.powered,
                NodeId::DRV => self.drv.powered,
                _ => self.bctrl.booted,
            };
            let q = self.outbox.get_mut(&origin).expect("transmitter queue");
            if !up {
                q.clear();
                continue;
            }
            let n = q.len().min(TX_PER_TICK);
            let batch: Vec<UartFrame> = q.drain(..n).collect();
            for f in batch {
                let f = if secure {
                    match self
                        .sessions
                        .get_mut(&(origin, f.receiver))
                        .map(|s| s.wrap(&f))
                    {
                        Some(Ok(w)) => w,
                        Some(Err(e)) => {
                            self.log.append(
                                t,
                                origin.into(),
                                EventKind::Warning,
                                json!({"secure": "wrap-failed", "error": e.to_string()}),
                            );
                            continue;
                        }
                        None => f,
                    }
                } else {
                    f
                };
                self.bus.submit(t, origin, f, true, &mut self.log);
            }
        }
        if self.flood_fps > 0 && self.bctrl.booted {
            self.bus
                .flood(t, NodeId::BCTRL, self.flood_fps, dt, &mut self.log);
        }
        let delivered = self.bus.resolve(t, dt, &mut self.log);
        self.inbox = Bus::broadcast(&delivered, &self.powered_nodes());
    }

    fn sample(&mut self, t: Millis) {
        self.voltages.push(VoltageRow {
            t_ms: t,
            vc: self
                .pack
                .voltages()
                .iter()
                .map(|v| v.round().max(0.0) as u16)
                .collect(),
            battlevel: self.pack.batt_level().round() as u8,
            sleeping: self.bctrl.sleep_mode,
            charging: self.charging,
        });
    }
}
