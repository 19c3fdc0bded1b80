// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! `dvs`: initialize DVS networks, run closed-loop scenarios and benchmark
//! suites, and audit exported ledgers.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime failure, 3 collapse.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dvs_core::bench::{cmd_bench, series_csv, sweep_file_name, BenchError, SuiteConfig};
use dvs_core::ledger::{parse_chain_jsonl, verify_chain, Network};
use dvs_core::scenario::{cmd_init, cmd_simulate, ScenarioConfig, ScenarioError, SCENARIO_FORMAT_VERSION};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_COLLAPSE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dvs",
    version,
    about = "Decentralized voltage stability on a simulated sharded ledger"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bootstrap a network and commit the group records.
    Init(ScenarioArgs),
    /// Run a closed-loop scenario and write its log.
    Simulate(ScenarioArgs),
    /// Run a benchmark suite and write JSON and CSV reports.
    Bench(BenchArgs),
    /// Audit exported ledgers.
    Verify(VerifyArgs),
    /// Run a scenario and dump every channel's ledger as JSONL.
    Export(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Grid case; overrides the scenario's.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Grouping file; overrides the scenario's.
    #[arg(long)]
    grouping: Option<PathBuf>,
    /// Network config; overrides the scenario's.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Pace logical time against the wall clock.
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Overrides the suite's base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// JSONL ledgers written by `export`.
    #[arg(required = true)]
    ledgers: Vec<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Scenario(s) => s.into(),
            BenchError::Spec(_) | BenchError::Ledger(dvs_core::ledger::LedgerError::Config(_)) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_failure(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn scenario_config(a: &ScenarioArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &a.scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => match (&a.case, &a.grouping, &a.network) {
            (Some(case), Some(grouping), Some(network)) => ScenarioConfig::parse(
                &json!({
                    "format_version": SCENARIO_FORMAT_VERSION,
                    "case": case,
                    "grouping": grouping,
                    "network": network,
                    "duration_ms": 0,
                })
                .to_string(),
            )?,
            _ => {
                return Err(Failure::Config(
                    "give --scenario, or all of --case, --grouping and --network".into(),
                ))
            }
        },
    };
    if let Some(p) = &a.case {
        cfg.case = p.clone();
    }
    if let Some(p) = &a.grouping {
        cfg.grouping = p.clone();
    }
    if let Some(p) = &a.network {
        cfg.network = p.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn chain_hashes(net: &Network) -> Result<serde_json::Value, Failure> {
    let mut m = serde_json::Map::new();
    for ch in net.channel_ids() {
        let h = net.chain_hash(&ch).map_err(|e| Failure::Runtime(e.to_string()))?;
        m.insert(ch, h.into());
    }
    Ok(m.into())
}

fn export_ledgers(net: &Network, dir: &Path) -> Result<(), Failure> {
    for ch in net.channel_ids() {
        let mut buf = Vec::new();
        net.export_jsonl(&ch, &mut buf)
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        write(&dir.join(format!("ledger_{ch}.jsonl")), buf)?;
    }
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn init(a: &ScenarioArgs) -> Result<u8, Failure> {
    let cfg = scenario_config(a)?;
    let init = cmd_init(&cfg)?;
    out_dir(&a.out_dir)?;
    let summary = json!({
        "groups": init.inputs.groups.len(),
        "combos": init.combos,
        "init_tx": init.init_tx,
        "chain_hashes": chain_hashes(&init.network)?,
    });
    write(&a.out_dir.join("init.json"), pretty(&summary))?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(0)
}

fn simulate(a: &ScenarioArgs, export: bool) -> Result<u8, Failure> {
    let cfg = scenario_config(a)?;
    let (log, net) = cmd_simulate(&cfg, a.wall_clock)?;
    out_dir(&a.out_dir)?;
    if export {
        export_ledgers(&net, &a.out_dir)?;
    } else {
        write(&a.out_dir.join("log.jsonl"), log.to_jsonl())?;
    }
    let summary = json!({
        "entries": log.entries.len(),
        "controller_rounds": log.controller_rounds,
        "collapsed": log.collapsed,
        "chain_hashes": log.chain_hashes,
    });
    if !export {
        write(&a.out_dir.join("summary.json"), pretty(&summary))?;
    }
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(if log.collapsed { EXIT_COLLAPSE } else { 0 })
}

fn bench(a: &BenchArgs) -> Result<u8, Failure> {
    let cfg = SuiteConfig::load(&a.suite)?;
    let report = cmd_bench(&cfg, a.seed)?;
    out_dir(&a.out_dir)?;
    write(&a.out_dir.join("bench_report.json"), pretty(&report))?;
    for series in &report.sweeps {
        if let Some(first) = series.first() {
            write(&a.out_dir.join(sweep_file_name(first.axis)), series_csv(series))?;
        }
    }
    Ok(0)
}

fn verify(a: &VerifyArgs) -> Result<u8, Failure> {
    let mut code = 0;
    for path in &a.ledgers {
        let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let blocks = parse_chain_jsonl(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let audit = verify_chain(&blocks);
        match audit.first_broken {
            None => println!("{}: ok, {} blocks", path.display(), blocks.len()),
            Some(n) => {
                println!("{}: broken at block {n}", path.display());
                code = EXIT_RUNTIME;
            }
        }
    }
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Init(a) => init(a),
        Command::Simulate(a) => simulate(a, false),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
        Command::Export(a) => simulate(a, true),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
