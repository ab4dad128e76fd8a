//! `tollsim` command implementations, callable in-process.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use toll_core::engine::{
    compare_modes, export_metrics, load_scenario, run, CompareError, ExportFormat, MetricsReport, ScenarioConfig,
    ScenarioError,
};
use toll_core::ledger::{read_ndjson, verify_blocks, write_ndjson, Chain};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_UNKNOWN_ACCOUNT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tollsim", version, about = "Simulate a machine-to-machine toll economy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write metrics, chain and optional transcript.
    Run {
        /// Scenario JSON; the bundled default when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write transcript.ndjson.
        #[arg(long)]
        transcript: bool,
    },
    /// Check a chain file's integrity.
    Verify {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Print final balances, or one account's balance and history.
    Inspect {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        account: Option<String>,
    },
    /// Run a scenario under fixed and dynamic pricing and compare.
    Compare {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-export a run's metrics as json or csv on stdout.
    Export {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
        #[arg(long)]
        format: String,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Corrupt(String),
    #[error("{0}")]
    Config(String),
    #[error("verification failed")]
    Verify,
    #[error("unknown account {0}")]
    UnknownAccount(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Corrupt(_) => EXIT_IO,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Verify => EXIT_VERIFY,
            CliError::UnknownAccount(_) => EXIT_UNKNOWN_ACCOUNT,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn scenario(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    match path {
        None => Ok(ScenarioConfig::default_scenario()),
        Some(p) => load_scenario(&read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
    }
}

fn load_chain_blocks(path: &Path) -> Result<Vec<toll_core::ledger::Block>, CliError> {
    let text = read(path)?;
    read_ndjson(&text).map_err(|e| CliError::Corrupt(format!("{}: {e}", path.display())))
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Run {
            scenario: path,
            out: dir,
            seed,
            transcript,
        } => cmd_run(path.as_deref(), &dir, seed, transcript, out),
        Command::Verify { chain } => cmd_verify(&chain, out),
        Command::Inspect { chain, account } => cmd_inspect(&chain, account.as_deref(), out),
        Command::Compare {
            scenario: path,
            out: dir,
        } => cmd_compare(path.as_deref(), &dir, out),
        Command::Export {
            run_dir,
            format,
            out: file,
        } => cmd_export(&run_dir, &format, file.as_deref(), out),
    }
}

fn emit(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

pub fn cmd_run(
    path: Option<&Path>,
    dir: &Path,
    seed: Option<u64>,
    transcript: bool,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut cfg = scenario(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let started = Instant::now();
    let result = run(&cfg)?;
    let elapsed = started.elapsed();

    ensure_dir(dir)?;
    let report = &result.report;
    write(&dir.join("metrics.json"), &export_metrics(report, ExportFormat::Json))?;
    write(&dir.join("metrics.csv"), &export_metrics(report, ExportFormat::Csv))?;
    write(&dir.join("chain.ndjson"), &write_ndjson(result.chain.blocks()))?;
    if transcript {
        write(&dir.join("transcript.ndjson"), &result.transcript_ndjson())?;
    }

    let revenue: Vec<String> = report
        .summary
        .toll_revenue
        .iter()
        .map(|(t, r)| format!("{t}={r}"))
        .collect();
    emit(
        out,
        format_args!(
            "revenue {} settlements={} chain={}",
            revenue.join(" "),
            report.summary.settlements,
            report.final_chain_hash
        ),
    )?;
    emit(out, format_args!("elapsed_ms: {}", elapsed.as_millis()))?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let blocks = load_chain_blocks(path)?;
    let report = verify_blocks(&blocks);
    if report.is_valid() {
        emit(out, format_args!("PASS {} blocks", blocks.len()))?;
        return Ok(EXIT_OK);
    }
    let heights: Vec<String> = report.flagged_heights().iter().map(u64::to_string).collect();
    emit(out, format_args!("FAIL heights [{}]", heights.join(", ")))?;
    for v in &report.violations {
        emit(out, format_args!("  {v}"))?;
    }
    Ok(EXIT_VERIFY)
}

pub fn cmd_inspect(path: &Path, account: Option<&str>, out: &mut dyn Write) -> Result<i32, CliError> {
    let blocks = load_chain_blocks(path)?;
    let chain = match Chain::from_blocks(blocks) {
        Ok(c) => c,
        Err(e) => {
            emit(out, format_args!("FAIL {e}"))?;
            return Err(CliError::Verify);
        }
    };
    let Some(id) = account else {
        for a in chain.state().accounts() {
            emit(out, format_args!("{} {}", a.id, a.balance))?;
        }
        return Ok(EXIT_OK);
    };
    let balance = chain
        .get_balance(id)
        .map_err(|_| CliError::UnknownAccount(id.to_owned()))?;
    emit(out, format_args!("{id} balance {balance}"))?;
    for block in &chain.blocks()[1..] {
        for tx in block
            .transactions
            .iter()
            .filter(|t| t.from.as_str() == id || t.to.as_str() == id)
        {
            let lane = tx.contract.as_ref().map_or("-".to_owned(), |c| c.lane.to_string());
            emit(
                out,
                format_args!(
                    "height={} tick={} {} -> {} amount={} lane={} nonce={} tx={}",
                    block.height, tx.tick, tx.from, tx.to, tx.amount, lane, tx.nonce, tx.tx_id
                ),
            )?;
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_compare(path: Option<&Path>, dir: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = scenario(path)?;
    let cmp = compare_modes(&cfg).map_err(|e| match e {
        CompareError::MissingFixedTable => CliError::Config(e.to_string()),
        CompareError::Scenario(s) => s.into(),
    })?;
    ensure_dir(dir)?;
    let mut json = serde_json::to_string_pretty(&cmp).expect("comparison always serializes");
    json.push('\n');
    write(&dir.join("comparison.json"), &json)?;

    let fmt_u = |u: Option<f64>| u.map_or("-".to_owned(), |u| format!("{u:.4}"));
    emit(
        out,
        format_args!("{:<8} {:>10} {:>12} {:>8}", "mode", "revenue", "utility", "rounds"),
    )?;
    for m in [&cmp.dynamic, &cmp.fixed] {
        let mode = match m.mode {
            toll_core::agents::PricingMode::Dynamic => "dynamic",
            toll_core::agents::PricingMode::Fixed => "fixed",
        };
        emit(
            out,
            format_args!(
                "{:<8} {:>10} {:>12} {:>8.3}",
                mode,
                m.total_revenue,
                fmt_u(m.mean_vehicle_utility),
                m.mean_negotiation_rounds
            ),
        )?;
    }
    for v in &cmp.vehicles {
        let verdict = match v.dynamic_not_worse {
            Some(true) => "dynamic>=fixed",
            Some(false) => "dynamic<fixed",
            None => "n/a",
        };
        emit(
            out,
            format_args!(
                "{:<8} {:>12} {:>12} {verdict}",
                v.vehicle,
                fmt_u(v.dynamic),
                fmt_u(v.fixed)
            ),
        )?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_export(dir: &Path, format: &str, file: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let format: ExportFormat = format
        .parse()
        .map_err(|e: toll_core::engine::ExportError| CliError::Config(e.to_string()))?;
    let path = dir.join("metrics.json");
    let report: MetricsReport =
        serde_json::from_str(&read(&path)?).map_err(|e| CliError::Corrupt(format!("{}: {e}", path.display())))?;
    let doc = export_metrics(&report, format);
    match file {
        Some(f) => write(f, &doc)?,
        None => out.write_all(doc.as_bytes()).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })?,
    }
    Ok(EXIT_OK)
}
