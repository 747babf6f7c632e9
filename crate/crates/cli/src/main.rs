use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bessim::attacks::images::{
    capabilities_for, malicious_bctrl_image, recovery_bctrl_image, stock_bctrl_image,
    vendor_bts_image,
};
use bessim::fwpipe::{FirmwareImage, KeyMaterial};
use bessim::scenario::calibrate::{fit, ubr_figures};
use bessim::scenario::matrix::{claims, matrix_csv, run_matrix};
use bessim::scenario::{default_duration_ms, Action, BatteryModel, World};
use bessim::simkern::{Attack, Countermeasures, Millis, Profile, ScenarioConfig, DEFAULT_TICK_MS};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
/// Virtual time a flash attempt is given to finish the chunked transfer.
const FLASH_WINDOW_MS: Millis = 5_000;
const FLASH_AT_MS: Millis = 100;

#[derive(Parser)]
#[command(
    name = "bessim",
    version,
    about = "Scooter battery-management attack simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Clone)]
struct Scenario {
    #[arg(long, default_value = "m365")]
    profile: Profile,
    /// Comma-separated subset of c1,c2,c3,c4 (empty or "none" for no countermeasures).
    #[arg(long, default_value = "")]
    countermeasures: Countermeasures,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: Scenario,
    #[arg(long, default_value = "none")]
    attack: Attack,
    /// Virtual milliseconds; defaults to the attack's standard length.
    #[arg(long)]
    duration: Option<Millis>,
    #[arg(long, default_value_t = DEFAULT_TICK_MS)]
    tick: Millis,
    /// Six-digit scooter password.
    #[arg(long, default_value = "123456")]
    pin: String,
    /// Ransomware only: the victim pays at this virtual time and recovers.
    #[arg(long)]
    pay_at: Option<Millis>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write frames.txt with every delivered bus frame.
    #[arg(long)]
    frames: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write events.jsonl, metrics.csv, voltages.csv,
    /// sniffer.jsonl and outcome.json.
    Run(RunArgs),
    /// Every attack against every countermeasure subset on both profiles.
    Matrix {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Writes matrix.csv here; prints it to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Push an image file through the BTS into a freshly booted scooter.
    Flash {
        image: PathBuf,
        #[command(flatten)]
        scenario: Scenario,
    },
    /// Write a firmware image file.
    MakeImage {
        #[arg(long, value_enum)]
        kind: ImageKind,
        /// Payload for a malicious image.
        #[arg(long, default_value = "ubr")]
        attack: Attack,
        /// Version string for a BTS image.
        #[arg(long, default_value = "1.5.6")]
        version: String,
        /// TEA-encrypt the body with the ecosystem key.
        #[arg(long)]
        encrypt: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refit the degradation rates against the ransomware targets.
    Calibrate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only report the figures the frozen constants produce.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageKind {
    Stock,
    Recovery,
    Malicious,
    Bts,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(PathBuf, io::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Io(path.to_path_buf(), e)
}

/// Writes through a temporary sibling so readers never see partial files.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let (s, attack, pay_at, out) = (&a.scenario, a.attack, a.pay_at, a.out.as_path());
    let mut cfg = ScenarioConfig::new(
        s.profile,
        attack,
        a.duration
            .unwrap_or_else(|| default_duration_ms(attack, s.profile)),
    )
    .with_seed(s.seed)
    .with_countermeasures(s.countermeasures);
    cfg.tick_ms = a.tick;
    cfg.pin = a.pin.clone();
    cfg.pay_at_ms = pay_at;
    if pay_at.is_some() && attack != Attack::Ubr {
        return Err(Failure::Usage(
            "--pay-at only applies to --attack ubr".into(),
        ));
    }
    let r =
        bessim::scenario::run_with(&cfg, a.frames).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_atomic(&out.join("events.jsonl"), r.events_jsonl().as_bytes())?;
    write_atomic(&out.join("metrics.csv"), r.metrics_csv().as_bytes())?;
    write_atomic(&out.join("voltages.csv"), r.voltages_csv().as_bytes())?;
    write_atomic(&out.join("sniffer.jsonl"), r.sniffer.to_jsonl().as_bytes())?;
    write_atomic(&out.join("outcome.json"), r.outcome_json().as_bytes())?;
    if a.frames {
        write_atomic(
            &out.join("frames.txt"),
            (r.frames.join("\n") + "\n").as_bytes(),
        )?;
    }
    print!("{}", r.outcome_json());
    Ok(())
}

fn cmd_matrix(seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let rows = run_matrix(seed, &Profile::ALL).map_err(|e| Failure::Usage(e.to_string()))?;
    let csv = matrix_csv(&rows);
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            write_atomic(&dir.join("matrix.csv"), csv.as_bytes())?;
        }
        None => print!("{csv}"),
    }
    for (claim, holds) in claims(&rows) {
        eprintln!("{} {claim}", if holds { "holds:" } else { "BROKEN:" });
    }
    Ok(())
}

fn cmd_flash(path: &Path, s: Scenario) -> Result<(), Failure> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let img = FirmwareImage::from_bytes(&bytes)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let cfg = ScenarioConfig::new(s.profile, Attack::None, FLASH_AT_MS + FLASH_WINDOW_MS)
        .with_seed(s.seed)
        .with_countermeasures(s.countermeasures);
    let mut w = World::new(cfg, false);
    w.at(FLASH_AT_MS, Action::Deliver(bytes));
    w.run_to_end();
    let result = match w.installs.iter().find(|r| r.version == img.version) {
        Some(r) => {
            json!({"target": r.target, "version": r.version, "accepted": r.accepted, "reason": r.reason})
        }
        None => {
            json!({"target": img.target.to_string(), "version": img.version, "accepted": false, "reason": "transfer incomplete"})
        }
    };
    println!("{}", serde_json::to_string_pretty(&result).expect("json"));
    Ok(())
}

fn cmd_make_image(
    kind: ImageKind,
    attack: Attack,
    version: &str,
    encrypt: bool,
    out: &Path,
) -> Result<(), Failure> {
    let vendor = KeyMaterial::vendor();
    let img = match kind {
        ImageKind::Stock => stock_bctrl_image(encrypt, &vendor),
        ImageKind::Recovery => recovery_bctrl_image(encrypt, &vendor),
        ImageKind::Bts => vendor_bts_image(version, &vendor),
        ImageKind::Malicious => {
            if attack == Attack::None {
                return Err(Failure::Usage("a malicious image needs --attack".into()));
            }
            malicious_bctrl_image(
                attack,
                &capabilities_for(attack),
                [0; 16],
                encrypt,
                &KeyMaterial::attacker(),
            )
        }
    };
    write_atomic(out, &img.to_bytes())?;
    println!(
        "{} {} {} bytes",
        img.target,
        img.version,
        img.to_bytes().len()
    );
    Ok(())
}

fn cmd_calibrate(seed: u64, check: bool) {
    let report = if check {
        let m = BatteryModel::default();
        json!({
            "r1_per_hour": m.rates.r1_per_hour,
            "r2_per_hour": m.rates.r2_per_hour,
            "weak_weight": m.weak_weight,
            "m365": ubr_figures(Profile::M365, seed, m),
            "es3": ubr_figures(Profile::Es3, seed, m),
        })
    } else {
        serde_json::to_value(fit(seed)).expect("json")
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Matrix { seed, out } => cmd_matrix(seed, out.as_deref()),
        Cmd::Flash { image, scenario } => cmd_flash(&image, scenario),
        Cmd::MakeImage {
            kind,
            attack,
            version,
            encrypt,
            out,
        } => cmd_make_image(kind, attack, &version, encrypt, &out),
        Cmd::Calibrate { seed, check } => {
            cmd_calibrate(seed, check);
            Ok(())
        }
    };
    let _ = io::stdout().flush();
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(path, e)) => {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(EXIT_IO)
        }
    }
}
