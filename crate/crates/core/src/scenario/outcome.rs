//! Judges a finished run: did the attack produce its declared observable?

use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::payload::{RANSOM_URL, ROTATION_MS};
use super::script::{UTI_BTS_UPDATE_MS, UTI_RESET_MS};
use super::world::World;
use crate::attacks::images::MALICIOUS_BCTRL_VERSION;
use crate::attacks::{crack_pin, reassemble, TrackMessage};
use crate::simkern::{Attack, Countermeasures, EventKind, LogNode, Millis};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub attack: String,
    pub profile: String,
    pub countermeasures: String,
    pub seed: u64,
    pub success: bool,
    /// `success`, `success-with-E24`, `failed` or `baseline`.
    pub status: String,
    pub reason: Option<String>,
    pub metrics: Map<String, Value>,
}

/// Figures from the idle run a DES7 result is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Baseline {
    pub drain_mah: f64,
    pub sleep_intervals: usize,
}

pub fn cm_label(cm: Countermeasures) -> String {
    if cm.bits() == 0 {
        "none".into()
    } else {
        cm.to_string()
    }
}

fn raised(w: &World, code: &str) -> bool {
    w.log
        .of_kind(EventKind::ErrorRaised)
        .any(|r| r.node == LogNode::Drv && r.detail["code"] == code)
}

fn drv_powered_off_by(w: &World, code: &str) -> bool {
    let want = format!("error {code}");
    w.log
        .of_kind(EventKind::PowerOff)
        .any(|r| r.node == LogNode::Drv && r.detail["reason"] == want.as_str())
}

fn bctrl_sleeps_after(w: &World, t: Millis) -> usize {
    w.log
        .of_kind(EventKind::Sleep)
        .filter(|r| r.node == LogNode::Bctrl && r.t >= t)
        .count()
}

/// Drain after the owner switched off; DES7 compares it against a baseline.
pub fn drain_after_off(w: &World) -> f64 {
    w.pack.drawn_mah - w.script.drawn_at_off
}

pub fn sleep_intervals_after_off(w: &World) -> usize {
    bctrl_sleeps_after(w, w.script.user_off_at.unwrap_or(0))
}

fn common_metrics(w: &World) -> Map<String, Value> {
    let dead = w.pack.check_cell_health();
    let s = w.bus.stats;
    let mut m = Map::new();
    m.insert("autonomyLossPct".into(), json!(w.pack.autonomy_loss_pct()));
    m.insert("deadCells".into(), json!(dead.len()));
    m.insert("deadGroups".into(), json!(dead));
    m.insert("minCellMv".into(), json!(w.pack.min_voltage()));
    m.insert("battLevel".into(), json!(w.pack.batt_level()));
    m.insert("drawnMah".into(), json!(w.pack.drawn_mah));
    m.insert("e21".into(), json!(raised(w, "E21")));
    m.insert("e23".into(), json!(raised(w, "E23")));
    m.insert("e24".into(), json!(raised(w, "E24")));
    m.insert("sleepIntervals".into(), json!(bctrl_sleeps_after(w, 0)));
    m.insert("framesSent".into(), json!(s.sent));
    m.insert("framesDelivered".into(), json!(s.delivered));
    m.insert("legitDropped".into(), json!(s.legit_dropped));
    m.insert("floodDropped".into(), json!(s.flood_dropped));
    m.insert("endMs".into(), json!(w.now));
    m
}

fn verdict(ok: bool, why_not: &str) -> (bool, String, Option<String>) {
    if ok {
        (true, "success".into(), None)
    } else {
        (false, "failed".into(), Some(why_not.into()))
    }
}

/// Evaluates `w`. `baseline` is required for DES7. Returns the outcome and
/// the wall-clock crack time (PLR only), which stays out of the event log.
pub fn evaluate(w: &World, baseline: Option<Baseline>) -> (Outcome, Option<f64>) {
    let cfg = &w.cfg;
    let mut metrics = common_metrics(w);
    let mut crack_ms = None;
    let malicious = w
        .installs
        .iter()
        .find(|r| r.version == MALICIOUS_BCTRL_VERSION);

    let (success, status, reason) = if cfg.attack == Attack::None {
        (false, "baseline".to_string(), None)
    } else if let Some(r) = malicious.filter(|r| !r.accepted) {
        (
            false,
            "failed".into(),
            Some(format!(
                "install rejected: {}",
                r.reason.clone().unwrap_or_default()
            )),
        )
    } else if malicious.is_none() {
        (
            false,
            "failed".into(),
            Some("malicious image never installed".into()),
        )
    } else if let Some(f) = &w.payload.failed {
        (false, "failed".into(), Some(f.clone()))
    } else {
        match cfg.attack {
            Attack::Ubr => {
                let crossed = |th: &str| {
                    w.log
                        .of_kind(EventKind::ThresholdCrossed)
                        .any(|r| r.detail["threshold"] == th)
                };
                let reveal = w.payload.ubr.revealed_at;
                metrics.insert("timeToReveal".into(), json!(reveal));
                metrics.insert("ransomUrl".into(), json!(reveal.map(|_| RANSOM_URL)));
                metrics.insert("belowCuvt".into(), json!(crossed("cUVT")));
                metrics.insert(
                    "belowDuvt".into(),
                    json!(crossed("dUVT") || crossed("cUVT")),
                );
                let e24 = raised(w, "E24");
                if !(crossed("dUVT") || crossed("cUVT")) {
                    (
                        false,
                        "failed".into(),
                        Some("no cell reached dangerous undervoltage".into()),
                    )
                } else if e24 {
                    (true, "success-with-E24".into(), None)
                } else {
                    (true, "success".into(), None)
                }
            }
            Attack::Uti => {
                let truth = TrackMessage::fingerprint_of(&w.drv.drv_id).expect("14-byte serial");
                let tracks: Vec<(Millis, TrackMessage)> = w
                    .sniffer
                    .all()
                    .iter()
                    .filter_map(|a| TrackMessage::decode(&a.name_bytes()).map(|m| (a.t, m)))
                    .collect();
                let consistent =
                    !tracks.is_empty() && tracks.iter().all(|(_, m)| m.fingerprint == truth);
                let after = |t0: Millis| tracks.iter().any(|(t, _)| *t > t0);
                let reset_ok = w.now <= UTI_RESET_MS || after(UTI_RESET_MS);
                let update_ok = w.now <= UTI_BTS_UPDATE_MS || after(UTI_BTS_UPDATE_MS);
                if let Some((_, first)) = tracks.first() {
                    metrics.insert("fingerprint".into(), json!(hex::encode(first.fingerprint)));
                    metrics.insert("mileageKm".into(), json!(first.mileage_km));
                    metrics.insert("trackBattLevel".into(), json!(first.batt_level));
                }
                metrics.insert("tracks".into(), json!(tracks.len()));
                metrics.insert("persistsReset".into(), json!(after(UTI_RESET_MS)));
                metrics.insert("persistsUpdate".into(), json!(after(UTI_BTS_UPDATE_MS)));
                verdict(
                    consistent && reset_ok && update_ok,
                    "no consistent tracking advert observed",
                )
            }
            Attack::Plr => {
                let names: Vec<Vec<u8>> = w.sniffer.all().iter().map(|a| a.name_bytes()).collect();
                let hash = reassemble(names.iter().map(|n| n.as_slice()));
                let reboots = match w.payload.plr.window {
                    Some((a, b)) => w
                        .log
                        .of_kind(EventKind::Reboot)
                        .filter(|r| {
                            r.node == LogNode::Bts
                                && r.t >= a
                                && r.t <= b + ROTATION_MS
                                && r.detail["cause"] == "ble-name"
                        })
                        .count(),
                    None => 0,
                };
                metrics.insert("exfilReboots".into(), json!(reboots));
                match hash {
                    Ok(h) => {
                        let started = Instant::now();
                        let pin = crack_pin(&h);
                        crack_ms = Some(started.elapsed().as_secs_f64() * 1000.0);
                        metrics.insert("hashMatches".into(), json!(h == w.drv.password_hash));
                        metrics.insert("crackedPin".into(), json!(pin));
                        verdict(
                            h == w.drv.password_hash && pin.as_deref() == Some(cfg.pin.as_str()),
                            "password not recovered",
                        )
                    }
                    Err(e) => {
                        metrics.insert("hashMatches".into(), json!(false));
                        verdict(false, &format!("reassembly: {e}"))
                    }
                }
            }
            Attack::Des(n) => des_verdict(w, n, baseline, &mut metrics),
            Attack::None => unreachable!(),
        }
    };

    let outcome = Outcome {
        attack: cfg.attack.name(),
        profile: cfg.profile.name().into(),
        countermeasures: cm_label(cfg.countermeasures),
        seed: cfg.seed,
        success,
        status,
        reason,
        metrics,
    };
    (outcome, crack_ms)
}

fn des_verdict(
    w: &World,
    n: u8,
    baseline: Option<Baseline>,
    m: &mut Map<String, Value>,
) -> (bool, String, Option<String>) {
    let e21 = raised(w, "E21");
    match n {
        1 | 3 => {
            let off = drv_powered_off_by(w, "E21");
            m.insert("drvPoweredOff".into(), json!(off));
            verdict(e21 && off, "DRV kept talking to the BCTRL")
        }
        2 => {
            let ship_at = w
                .log
                .of_kind(EventKind::PowerOff)
                .find(|r| r.node == LogNode::Bmon && r.detail["reason"] == "ship-mode")
                .map(|r| r.t);
            let attempts: Vec<bool> = w
                .log
                .records()
                .iter()
                .filter(|r| r.t > ship_at.unwrap_or(Millis::MAX))
                .filter_map(|r| match (r.node, r.kind) {
                    (LogNode::Kernel, EventKind::Warning) if r.detail["power-on"] == "failed" => {
                        Some(false)
                    }
                    (LogNode::Bts | LogNode::Drv, EventKind::PowerOn) => Some(true),
                    _ => None,
                })
                .collect();
            m.insert("shipModeAt".into(), json!(ship_at));
            m.insert("powerOnAttempts".into(), json!(attempts.len()));
            let ok = ship_at.is_some()
                && !attempts.is_empty()
                && attempts.iter().all(|s| !s)
                && !w.bts.powered
                && !w.drv.powered;
            verdict(ok, "scooter could be powered on again")
        }
        4 => {
            let o = &w.observed;
            m.insert("ticksObserved".into(), json!(o.armed_ticks));
            m.insert("rideableTicks".into(), json!(o.rideable_ticks));
            verdict(
                o.armed_ticks > 0 && o.rideable_ticks == 0,
                "scooter became rideable",
            )
        }
        5 => {
            let o = &w.observed;
            m.insert("chargerTicks".into(), json!(o.charger_ticks));
            m.insert("chargingTicks".into(), json!(o.charging_ticks));
            verdict(o.charger_ticks > 0 && o.charging_ticks == 0, "pack charged")
        }
        6 => {
            let beeps = w.log.of_kind(EventKind::Beep).count();
            let off = drv_powered_off_by(w, "E24");
            m.insert("beeps".into(), json!(beeps));
            m.insert("drvPoweredOff".into(), json!(off));
            verdict(beeps > 0 || off, "forged errors had no effect")
        }
        7 => {
            let drain = drain_after_off(w);
            let sleeps = sleep_intervals_after_off(w);
            m.insert("drainMah".into(), json!(drain));
            m.insert("sleepIntervalsAfterOff".into(), json!(sleeps));
            let Some(b) = baseline else {
                return verdict(false, "no baseline");
            };
            let ratio = if b.drain_mah > 0.0 {
                drain / b.drain_mah
            } else {
                f64::INFINITY
            };
            m.insert("baselineDrainMah".into(), json!(b.drain_mah));
            m.insert("baselineSleepIntervals".into(), json!(b.sleep_intervals));
            m.insert("drainRatio".into(), json!(ratio));
            verdict(sleeps == 0 && ratio > 1.0, "BCTRL still slept")
        }
        _ => verdict(false, "unknown variant"),
    }
}
