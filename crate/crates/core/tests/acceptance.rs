//! One PASS/FAIL line per acceptance criterion. Tolerances are pinned here.

mod props;

use std::panic;
use std::time::{Duration, Instant};

use bessim::attacks::{pattern_pins, random_pins, TrackMessage};
use bessim::battery::{CAPACITY_FLOOR, MAX_DEGRADATION_FACTOR};
use bessim::scenario::matrix::{claims, run_matrix};
use bessim::scenario::script::{UTI_BTS_UPDATE_MS, UTI_RESET_MS};
use bessim::scenario::{outcome, run, World};
use bessim::simkern::{rng_from_seed, Attack, EventKind, LogNode, Profile, ScenarioConfig};
use sha2::{Digest, Sha256};

const M365_LOSS_MIN: f64 = 50.0;
const M365_LOSS_MAX: f64 = 55.0;
const M365_BUDGET: Duration = Duration::from_secs(10);
const ES3_LOSS: f64 = 10.0;
const ES3_LOSS_TOL: f64 = 3.0;
const ES3_BUDGET: Duration = Duration::from_secs(30);
const UTI_MILEAGE_RAW: [u8; 2] = [0x01, 0xB1];
const UTI_LEVEL_RAW: u8 = 0x2D;
const RANDOM_PINS: usize = 100;
const CRACK_BUDGET_MS: f64 = 1000.0;
const EXFIL_REBOOTS: u64 = 3;
const MATRIX_BUDGET: Duration = Duration::from_secs(300);

struct Report(Vec<(u8, bool, String)>);

impl Report {
    fn record(&mut self, n: u8, ok: bool, detail: String) {
        println!(
            "{} criterion {n}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        self.0.push((n, ok, detail));
    }
}

fn simulate(profile: Profile) -> (World, Duration) {
    let cfg = ScenarioConfig::new(
        profile,
        Attack::Ubr,
        bessim::scenario::default_duration_ms(Attack::Ubr, profile),
    );
    let started = Instant::now();
    let mut w = World::new(cfg, false);
    w.run_to_end();
    (w, started.elapsed())
}

fn criterion_1(r: &mut Report) {
    let (w, took) = simulate(Profile::M365);
    let (o, _) = outcome::evaluate(&w, None);
    let loss = w.pack.autonomy_loss_pct();
    let post_mortem = w.pack.groups.iter().filter(|g| g.dead).all(|g| {
        (g.effective_capacity - CAPACITY_FLOOR * g.nominal_capacity).abs() < 1e-9
            && (g.degradation_factor - MAX_DEGRADATION_FACTOR).abs() < 1e-12
    });
    let dead = w.pack.check_cell_health();
    let ok = o.success
        && (M365_LOSS_MIN..=M365_LOSS_MAX).contains(&loss)
        && !dead.is_empty()
        && post_mortem
        && took < M365_BUDGET;
    r.record(1, ok, format!("M365 ransomware 3.5 h: loss {loss:.2}%, dead groups {dead:?}, post-mortem state ok {post_mortem}, {took:.2?}"));
}

fn criterion_2(r: &mut Report) {
    let (w, took) = simulate(Profile::Es3);
    let loss = w.pack.autonomy_loss_pct();
    let c_uvt = w.pack.thresholds.c_uvt;
    let e24 = w
        .log
        .of_kind(EventKind::ErrorRaised)
        .find(|e| e.node == LogNode::Drv && e.detail["code"] == "E24")
        .map(|e| e.t);
    let first_below = w
        .voltages
        .iter()
        .find(|row| row.vc.iter().any(|&v| v < c_uvt))
        .map(|row| row.t_ms);
    let protected = match (e24, first_below) {
        (Some(_), None) => true,
        (Some(e), Some(b)) => e < b,
        _ => false,
    };
    let ok = protected && (loss - ES3_LOSS).abs() <= ES3_LOSS_TOL && took < ES3_BUDGET;
    r.record(2, ok, format!("ES3 ransomware 10 h: E24 at {e24:?} ms, first cell below cUVT {first_below:?}, loss {loss:.2}%, {took:.2?}"));
}

fn criterion_3(r: &mut Report) {
    let res = run(&ScenarioConfig::new(
        Profile::M365,
        Attack::Uti,
        bessim::scenario::default_duration_ms(Attack::Uti, Profile::M365),
    ))
    .unwrap();
    let tracks: Vec<(u64, Vec<u8>)> = res
        .sniffer
        .all()
        .iter()
        .map(|a| (a.t, a.name_bytes()))
        .filter(|(_, n)| TrackMessage::decode(n).is_some())
        .collect();
    let raw_ok = !tracks.is_empty()
        && tracks
            .iter()
            .all(|(_, n)| n[8..10] == UTI_MILEAGE_RAW && n[10] == UTI_LEVEL_RAW);
    let decoded = tracks.first().and_then(|(_, n)| TrackMessage::decode(n));
    let fps: Vec<[u8; 8]> = tracks
        .iter()
        .filter_map(|(_, n)| TrackMessage::decode(n))
        .map(|m| m.fingerprint)
        .collect();
    let identical = fps.windows(2).all(|p| p[0] == p[1]);
    let spans = tracks.iter().any(|(t, _)| *t < UTI_RESET_MS)
        && tracks.iter().any(|(t, _)| *t > UTI_BTS_UPDATE_MS);
    let ok = raw_ok
        && identical
        && spans
        && decoded.is_some_and(|m| m.mileage_km == 433 && m.batt_level == 45);
    r.record(3, ok, format!("tracking: {} adverts, decoded {decoded:?}, fingerprint stable across reset and update {}", tracks.len(), identical && spans));
}

fn criterion_4(r: &mut Report) {
    let mut rng = rng_from_seed(4);
    let mut pins: Vec<String> = pattern_pins(&mut rng).into_iter().map(|(_, p)| p).collect();
    let patterned = pins.len();
    pins.extend(random_pins(&mut rng, RANDOM_PINS));
    let mut failures = Vec::new();
    let mut worst_ms: f64 = 0.0;
    let mut total_ms = 0.0;
    for pin in &pins {
        let mut cfg = ScenarioConfig::new(
            Profile::M365,
            Attack::Plr,
            bessim::scenario::default_duration_ms(Attack::Plr, Profile::M365),
        );
        cfg.pin = pin.clone();
        let res = run(&cfg).unwrap();
        let m = &res.outcome.metrics;
        let crack = res.crack_time_ms.unwrap_or(f64::INFINITY);
        worst_ms = worst_ms.max(crack);
        total_ms += crack;
        let truth: [u8; 32] = Sha256::digest(pin.as_bytes()).into();
        let ok = res.outcome.success
            && m["hashMatches"] == true
            && m["crackedPin"] == pin.as_str()
            && m["exfilReboots"].as_u64() == Some(EXFIL_REBOOTS)
            && crack < CRACK_BUDGET_MS
            && bessim::attacks::reassemble(
                res.sniffer
                    .all()
                    .iter()
                    .map(|a| a.name_bytes())
                    .collect::<Vec<_>>()
                    .iter()
                    .map(|n| n.as_slice()),
            )
            .is_ok_and(|h| h == truth);
        if !ok {
            failures.push(pin.clone());
        }
    }
    let n = pins.len();
    r.record(
        4,
        patterned == 70 && failures.is_empty(),
        format!(
            "password leak: {}/{n} PINs ({patterned} patterned) recovered, crack mean {:.1} ms worst {worst_ms:.1} ms, failures {failures:?}",
            n - failures.len(),
            total_ms / n as f64
        ),
    );
}

fn criterion_5(r: &mut Report) {
    let mut bad = Vec::new();
    for profile in Profile::ALL {
        for n in 1..=7 {
            let a = Attack::Des(n);
            let res = run(&ScenarioConfig::new(
                profile,
                a,
                bessim::scenario::default_duration_ms(a, profile),
            ))
            .unwrap();
            if !res.outcome.success {
                bad.push(format!("{a}/{profile}: {:?}", res.outcome.reason));
            }
        }
    }
    r.record(
        5,
        bad.is_empty(),
        format!("denial variants 1-7 on both profiles, failures {bad:?}"),
    );
}

fn criterion_6(r: &mut Report) {
    let started = Instant::now();
    let rows = run_matrix(0, &Profile::ALL).unwrap();
    let took = started.elapsed();
    let cl = claims(&rows);
    let ok = cl.iter().all(|(_, b)| *b) && took < MATRIX_BUDGET && rows.len() == 10 * 2 * 16;
    let summary: Vec<String> = cl.iter().map(|(c, b)| format!("{c}: {b}")).collect();
    r.record(
        6,
        ok,
        format!(
            "countermeasure matrix, {} runs in {took:.1?}; {}",
            rows.len(),
            summary.join("; ")
        ),
    );
}

fn criterion_7(r: &mut Report) {
    let prev = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let failed: Vec<&str> = props::ALL
        .iter()
        .filter(|(_, f)| panic::catch_unwind(f).is_err())
        .map(|(n, _)| *n)
        .collect();
    panic::set_hook(prev);
    r.record(
        7,
        failed.is_empty(),
        format!(
            "{} property suites at 1000 cases each, failures {failed:?}",
            props::ALL.len()
        ),
    );
}

fn criterion_8(r: &mut Report) {
    let mut cases = vec![
        ScenarioConfig::new(Profile::M365, Attack::Ubr, 11_000_000).with_seed(7),
        ScenarioConfig::new(Profile::Es3, Attack::Uti, 70_000).with_seed(3),
        ScenarioConfig::new(Profile::M365, Attack::Des(3), 20_000)
            .with_countermeasures("c4".parse().unwrap())
            .with_seed(11),
        ScenarioConfig::new(Profile::Es3, Attack::Des(7), 40_000).with_seed(5),
    ];
    let mut plr = ScenarioConfig::new(Profile::M365, Attack::Plr, 10_000).with_seed(9);
    plr.pin = "908172".into();
    cases.push(plr);
    let mismatched: Vec<String> = cases
        .iter()
        .filter(|c| run(c).unwrap().events_jsonl() != run(c).unwrap().events_jsonl())
        .map(|c| format!("{}/{}", c.attack, c.profile))
        .collect();
    r.record(
        8,
        mismatched.is_empty(),
        format!(
            "{} configs replayed twice, byte-identical event logs; mismatches {mismatched:?}",
            cases.len()
        ),
    );
}

#[test]
fn acceptance() {
    let mut r = Report(Vec::new());
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    criterion_8(&mut r);
    let failed: Vec<u8> =
        r.0.iter()
            .filter(|(_, ok, _)| !ok)
            .map(|(n, _, _)| *n)
            .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
