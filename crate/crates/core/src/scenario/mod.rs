//! Scenario runner: builds the scooter, plays the attack and the owner's
//! script against it, and collects every output file.

pub mod calibrate;
pub mod matrix;
pub mod outcome;
pub mod payload;
pub mod script;
pub mod world;

use std::fmt::Write as _;

use serde_json::json;

pub use outcome::{Baseline, Outcome};
pub use world::{Action, BatteryModel, ProfileParams, VoltageRow, World};

use crate::periph::Sniffer;
use crate::simkern::{
    Attack, ConfigError, EventKind, EventLog, LogNode, Millis, Profile, ScenarioConfig,
};

/// Virtual duration used when the caller does not pick one.
pub fn default_duration_ms(attack: Attack, profile: Profile) -> Millis {
    match (attack, profile) {
        (Attack::Ubr, Profile::M365) => 12_600_000,
        (Attack::Ubr, Profile::Es3) => 36_000_000,
        (Attack::Uti, _) => 70_000,
        (Attack::Plr, _) => 10_000,
        (Attack::Des(_), _) => 40_000,
        (Attack::None, _) => 60_000,
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub log: EventLog,
    pub outcome: Outcome,
    /// Wall-clock PIN cracking time; kept out of the deterministic log.
    pub crack_time_ms: Option<f64>,
    pub voltages: Vec<VoltageRow>,
    pub sniffer: Sniffer,
    pub frames: Vec<String>,
}

pub const METRICS_HEADER: &str = "attack,profile,countermeasures,seed,duration_ms,tick_ms,success,status,reason,autonomy_loss_pct,dead_cells,min_cell_mv,e21,e23,e24,sleep_intervals,drawn_mah,frames_sent,frames_delivered,legit_dropped,flood_dropped";

impl RunResult {
    pub fn events_jsonl(&self) -> String {
        self.log.to_jsonl()
    }

    pub fn metrics_row(&self) -> String {
        let o = &self.outcome;
        let m = &o.metrics;
        let num = |k: &str| m.get(k).map(|v| v.to_string()).unwrap_or_default();
        let f2 = |k: &str| {
            m.get(k)
                .and_then(|v| v.as_f64())
                .map(|x| format!("{x:.3}"))
                .unwrap_or_default()
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            o.attack,
            o.profile,
            o.countermeasures.replace(',', "+"),
            o.seed,
            self.config.duration_ms,
            self.config.tick_ms,
            o.success,
            o.status,
            o.reason.as_deref().unwrap_or("").replace(',', ";"),
            f2("autonomyLossPct"),
            num("deadCells"),
            f2("minCellMv"),
            num("e21"),
            num("e23"),
            num("e24"),
            num("sleepIntervals"),
            f2("drawnMah"),
            num("framesSent"),
            num("framesDelivered"),
            num("legitDropped"),
            num("floodDropped"),
        )
    }

    pub fn metrics_csv(&self) -> String {
        format!("{METRICS_HEADER}\n{}\n", self.metrics_row())
    }

    pub fn voltages_csv(&self) -> String {
        let mut s = String::from("t_ms");
        for i in 1..=10 {
            let _ = write!(s, ",vc{i}");
        }
        s.push_str(",battlevel,sleeping,charging\n");
        for r in &self.voltages {
            let _ = write!(s, "{}", r.t_ms);
            for v in &r.vc {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(
                s,
                ",{},{},{}",
                r.battlevel, r.sleeping as u8, r.charging as u8
            );
        }
        s
    }

    /// Outcome JSON, including the wall-clock crack time when there is one.
    pub fn outcome_json(&self) -> String {
        let mut v = serde_json::to_value(&self.outcome).expect("outcome serializes");
        if let Some(ms) = self.crack_time_ms {
            v["metrics"]["crackTimeMs"] = json!(ms);
        }
        serde_json::to_string_pretty(&v).expect("json") + "\n"
    }
}

fn simulate(cfg: &ScenarioConfig, baseline: bool, record_frames: bool) -> World {
    let mut w = World::new(cfg.clone(), baseline);
    if record_frames {
        w.record_frames();
    }
    w.run_to_end();
    w
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunResult, ConfigError> {
    run_with(cfg, false)
}

/// Runs `cfg`; `record_frames` keeps a text dump of every delivered frame.
pub fn run_with(cfg: &ScenarioConfig, record_frames: bool) -> Result<RunResult, ConfigError> {
    cfg.validate()?;
    let baseline = match cfg.attack {
        Attack::Des(7) => {
            let b = simulate(cfg, true, false);
            Some(Baseline {
                drain_mah: outcome::drain_after_off(&b),
                sleep_intervals: outcome::sleep_intervals_after_off(&b),
            })
        }
        _ => None,
    };
    let mut w = simulate(cfg, false, record_frames);
    let (outcome, crack_time_ms) = outcome::evaluate(&w, baseline);
    let end = w.now;
    w.log.append(
        end,
        LogNode::Kernel,
        EventKind::Summary,
        json!({"phase": "end", "outcome": outcome}),
    );
    Ok(RunResult {
        config: cfg.clone(),
        frames: w.bus.dump().to_vec(),
        log: w.log,
        outcome,
        crack_time_ms,
        voltages: w.voltages,
        sniffer: w.sniffer,
    })
}
