//! Every attack against every countermeasure subset on every profile. Runs
//! in parallel; rows come back in config order so the merged output is
//! independent of scheduling.

use rayon::prelude::*;

use super::{default_duration_ms, run, Outcome, METRICS_HEADER};
use crate::simkern::{
    Attack, ConfigError, Countermeasure, Countermeasures, Profile, ScenarioConfig,
};

#[derive(Debug, Clone)]
pub struct MatrixRow {
    pub config: ScenarioConfig,
    pub outcome: Outcome,
    pub metrics_row: String,
}

/// Attack-major, then profile, then subset bits ascending.
pub fn configs(seed: u64, profiles: &[Profile]) -> Vec<ScenarioConfig> {
    let mut v = Vec::new();
    for attack in Attack::catalog() {
        for &profile in profiles {
            for cm in Countermeasures::subsets() {
                v.push(
                    ScenarioConfig::new(profile, attack, default_duration_ms(attack, profile))
                        .with_seed(seed)
                        .with_countermeasures(cm),
                );
            }
        }
    }
    v
}

pub fn run_matrix(seed: u64, profiles: &[Profile]) -> Result<Vec<MatrixRow>, ConfigError> {
    configs(seed, profiles)
        .into_par_iter()
        .map(|cfg| {
            let r = run(&cfg)?;
            Ok(MatrixRow {
                metrics_row: r.metrics_row(),
                outcome: r.outcome,
                config: cfg,
            })
        })
        .collect()
}

pub fn matrix_csv(rows: &[MatrixRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        s.push_str(&r.metrics_row);
        s.push('\n');
    }
    s
}

/// The countermeasure claims, each with whether the rows bear it out.
pub fn claims(rows: &[MatrixRow]) -> Vec<(&'static str, bool)> {
    let c123 = Countermeasures::of(&[Countermeasure::C1, Countermeasure::C2, Countermeasure::C3]);
    let all_succeed_bare = rows
        .iter()
        .filter(|r| r.config.countermeasures == Countermeasures::NONE)
        .all(|r| r.outcome.success);
    let non_des_fail = rows
        .iter()
        .filter(|r| {
            !matches!(r.config.attack, Attack::Des(_))
                && r.config.countermeasures.contains_all(c123)
        })
        .all(|r| !r.outcome.success);
    let des_fail = rows
        .iter()
        .filter(|r| {
            matches!(r.config.attack, Attack::Des(_))
                && r.config.countermeasures == Countermeasures::ALL
        })
        .all(|r| !r.outcome.success);
    vec![
        (
            "every attack succeeds without countermeasures",
            all_succeed_bare,
        ),
        (
            "UBR, UTI and PLR fail whenever C1, C2 and C3 are all on",
            non_des_fail,
        ),
        ("every DES variant fails with C1 to C4 all on", des_fail),
    ]
}
