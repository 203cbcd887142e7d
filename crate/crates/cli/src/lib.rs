//! Command implementations behind the `ivxv-sim` binary.
//!
//! Every command writes its human-readable output to the supplied writer and
//! returns the process exit code: 0 for success, 2 for an invalid audit
//! verdict, 1 for any error.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ivxv_core::adversary::{
    analytic_outcomes, end_to_end_attack, optimal_policy, undetected_probability,
    BehaviorDistribution, ManipulationPolicy, SweepRow,
};
use ivxv_core::ceremony::{
    replay_audit, run_election, ElectionConfig, ElectionTranscript, RunStats, Tally,
};

pub const SEED_ENV: &str = "IVXV_SIM_SEED";

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INVALID: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ivxv-sim", version, about = "Deterministic IVXV voting-ceremony simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one election and write its transcript and summary.
    Run {
        config: PathBuf,
        /// Overrides the config seed (IVXV_SIM_SEED overrides both).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Success probability of a manipulation policy under a behavior
    /// distribution, optionally with the exhaustive optimum.
    Analyze {
        /// Distribution CSV, or `default` for the shipped table.
        distribution: String,
        /// `always`, `never`, or a policy CSV.
        #[arg(long, default_value = "always")]
        policy: String,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Undetected and detected probabilities for a range of manipulated votes.
    Sweep {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        k_min: u32,
        #[arg(long)]
        k_max: u32,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat full elections with corrupted devices and report detection.
    Attack {
        config: PathBuf,
        #[arg(long, default_value = "always")]
        policy: String,
        #[arg(long)]
        corrupted: u32,
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the audit over a stored transcript.
    Replay { transcript: PathBuf },
}

/// Header line of every transcript file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: ElectionConfig,
    /// SHA-256 of every file the run read, keyed by path.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    manifest: RunManifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub verdict: ivxv_core::ceremony::AuditVerdict,
    pub tally: Tally,
    pub stats: RunStats,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Seed precedence: environment, then flag, then config.
fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer")),
        Err(_) => Ok(flag.unwrap_or(config_seed)),
    }
}

/// Reads a config file and resolves relative paths against its directory.
pub fn load_config(path: &Path) -> Result<ElectionConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut config = ElectionConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.resolve_paths(base);
    Ok(config)
}

fn load_distribution(source: &str) -> Result<BehaviorDistribution> {
    if source == "default" {
        return Ok(BehaviorDistribution::default_aggregate());
    }
    BehaviorDistribution::load(source).with_context(|| format!("loading distribution {source}"))
}

fn write_output(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => stdout.write_all(text.as_bytes()).context("writing to stdout"),
    }
}

pub fn cmd_run(config_path: &Path, seed: Option<u64>, out: &Path, stdout: &mut dyn Write) -> Result<u8> {
    let mut config = load_config(config_path)?;
    config.seed = resolve_seed(seed, config.seed)?;
    let mut inputs = BTreeMap::new();
    inputs.insert(config_path.display().to_string(), sha256_file(config_path)?);
    for f in config.input_files() {
        inputs.insert(f.display().to_string(), sha256_file(&f)?);
    }
    let outcome = run_election(&config)?;
    let seed = config.seed;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        inputs,
    };

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut transcript = serde_json::to_string(&ManifestLine { manifest })?;
    transcript.push('\n');
    transcript.push_str(&outcome.transcript.to_jsonl());
    fs::write(out.join("transcript.jsonl"), transcript)?;

    let summary = RunSummary {
        seed,
        verdict: outcome.verdict.clone(),
        tally: outcome.tally.clone(),
        stats: outcome.stats.clone(),
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(out.join("summary.json"), text)?;

    writeln!(stdout, "verdict {}", outcome.verdict)?;
    for (candidate, count) in &outcome.tally.counts {
        writeln!(stdout, "candidate {candidate}: {count}")?;
    }
    if outcome.tally.rejected > 0 {
        writeln!(stdout, "rejected: {}", outcome.tally.rejected)?;
    }
    Ok(if outcome.verdict.is_valid() { EXIT_OK } else { EXIT_INVALID })
}

pub fn cmd_analyze(
    distribution: &str,
    policy: &str,
    max_len: Option<usize>,
    stdout: &mut dyn Write,
) -> Result<u8> {
    let dist = load_distribution(distribution)?;
    let policy = ManipulationPolicy::from_name_or_path(policy)
        .with_context(|| format!("loading policy {policy}"))?;
    let mass = analytic_outcomes(&policy, &dist)?;
    writeln!(stdout, "policy {policy}")?;
    writeln!(stdout, "success {:.6}", mass.success)?;
    writeln!(stdout, "caught {:.6}", mass.caught)?;
    writeln!(stdout, "silent_fail {:.6}", mass.silent_fail)?;
    if let Some(max_len) = max_len {
        let (table, best) = optimal_policy(&dist, max_len)?;
        writeln!(stdout, "optimum {best:.6}")?;
        write!(stdout, "{}", table.to_csv())?;
    }
    Ok(EXIT_OK)
}

/// CSV `k,undetected,detected`, six decimals, LF line endings.
pub fn sweep_csv(p: f64, k_min: u32, k_max: u32) -> Result<String> {
    ensure!((0.0..=1.0).contains(&p), "p must lie in [0, 1], got {p}");
    ensure!(k_min <= k_max, "k-min {k_min} exceeds k-max {k_max}");
    let mut out = String::from("k,undetected,detected\n");
    for k in k_min..=k_max {
        let u = undetected_probability(p, k)?;
        out.push_str(&format!("{k},{u:.6},{:.6}\n", 1.0 - u));
    }
    Ok(out)
}

pub fn cmd_sweep(p: f64, k_min: u32, k_max: u32, out: Option<&Path>, stdout: &mut dyn Write) -> Result<u8> {
    let csv = sweep_csv(p, k_min, k_max)?;
    write_output(out, &csv, stdout)?;
    Ok(EXIT_OK)
}

pub fn cmd_attack(
    config_path: &Path,
    policy: &str,
    corrupted: u32,
    trials: u64,
    seed: Option<u64>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<u8> {
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    let mut config = load_config(config_path)?;
    config.seed = resolve_seed(seed, config.seed)?;
    let policy = ManipulationPolicy::from_name_or_path(policy)
        .with_context(|| format!("loading policy {policy}"))?;
    let report = end_to_end_attack(&config, &policy, corrupted, trials)?;
    let csv = format!("{}\n{}\n", SweepRow::CSV_HEADER, report.row().to_csv_line());
    write_output(out, &csv, stdout)?;
    Ok(EXIT_OK)
}

/// Splits off the manifest header line, if present.
fn parse_transcript_file(text: &str) -> Result<(Option<RunManifest>, ElectionTranscript)> {
    let mut lines = text.splitn(2, '\n');
    let first = lines.next().unwrap_or_default();
    if let Ok(header) = serde_json::from_str::<ManifestLine>(first) {
        let rest = lines.next().unwrap_or_default();
        return Ok((Some(header.manifest), ElectionTranscript::from_jsonl(rest)?));
    }
    Ok((None, ElectionTranscript::from_jsonl(text)?))
}

pub fn cmd_replay(path: &Path, stdout: &mut dyn Write) -> Result<u8> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(text.ends_with('\n'), "transcript is truncated (no final newline)");
    let (_, transcript) = parse_transcript_file(&text)?;
    let report = replay_audit(&transcript)?;
    writeln!(stdout, "recorded {}", report.recorded)?;
    writeln!(stdout, "recomputed {}", report.recomputed)?;
    Ok(if report.confirms_valid() { EXIT_OK } else { EXIT_INVALID })
}

/// Dispatches a parsed command line. Errors are printed to stderr and map to
/// exit code 1.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, &out, stdout),
        Command::Analyze {
            distribution,
            policy,
            max_len,
        } => cmd_analyze(&distribution, &policy, max_len, stdout),
        Command::Sweep { p, k_min, k_max, out } => cmd_sweep(p, k_min, k_max, out.as_deref(), stdout),
        Command::Attack {
            config,
            policy,
            corrupted,
            trials,
            seed,
            out,
        } => cmd_attack(&config, &policy, corrupted, trials, seed, out.as_deref(), stdout),
        Command::Replay { transcript } => cmd_replay(&transcript, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
