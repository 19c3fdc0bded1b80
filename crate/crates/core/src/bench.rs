// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Open-loop workloads against the DVS contracts and parameter sweeps over
//! send rate, transaction count and worker count.
//!
//! Suite file (paths relative to the file):
//!
//! ```json
//! {
//!   "format_version": "1",
//!   "case": "ieee30.json",
//!   "grouping": "ieee30_groups.json",
//!   "networks": [["no-shard", "network_noshard.json"], ["3-shard", "network_3shard.json"]],
//!   "base": {"workers": 3, "tx_count": 8000, "send_rate": 800.0, "mix": 1.0, "seed": 42},
//!   "stress_factor": 3.0,
//!   "sweeps": [{"axis": "send_rate", "values": [100, 400, 800]}]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contracts::{bootstrap_dvs, group_resources, ComputeVsiArgs, InitArgs, OP_COMPUTE_VSI, VSI_CONTRACT};
use crate::gridcase::{apply_grouping, parse_case, parse_grouping, GridCase, Group, GroupId};
use crate::ledger::{time_to_ms, LedgerError, Network, NetworkConfig, SimTime, TxId, TxStatus, MAINCHAIN};
use crate::powerflow::{make_snapshot, solve_powerflow, SolveOptions};
use crate::scenario::{init_args, read, write_init, ScenarioError};

pub const SUITE_FORMAT_VERSION: &str = "1";

/// Threshold and target voltage carried by benchmark payloads.
pub const BENCH_THRESHOLD: f64 = 0.2;
pub const BENCH_V_REQ: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("network has no initialized group records")]
    NotInitialized,
    #[error("no traces to aggregate")]
    EmptyTraces,
    #[error("invalid workload: {0}")]
    Spec(String),
    #[error("no payload for group {0}")]
    MissingPayload(GroupId),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub workers: usize,
    pub tx_count: usize,
    /// Aggregate submissions per second.
    pub send_rate: f64,
    /// Fraction of normal (monitoring only) payloads; the rest are stressed.
    pub mix: f64,
    /// Target channels; empty means every channel serving a group.
    #[serde(default)]
    pub channels: Vec<String>,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn check(&self) -> Result<(), BenchError> {
        if self.workers == 0 {
            return Err(BenchError::Spec("workers must be at least 1".into()));
        }
        if self.tx_count == 0 {
            return Err(BenchError::Spec("tx_count must be at least 1".into()));
        }
        if !(self.send_rate > 0.0 && self.send_rate.is_finite()) {
            return Err(BenchError::Spec("send_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(BenchError::Spec("mix must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxTrace {
    pub tx: TxId,
    pub channel: String,
    pub submitted_ms: f64,
    pub committed_ms: Option<f64>,
    pub status: TxStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub submitted: usize,
    pub valid: usize,
    /// Valid transactions per second.
    pub throughput: f64,
    pub avg_latency_ms: f64,
    pub min_latency_ms: f64,
    pub max_latency_ms: f64,
    pub success_rate: f64,
}

/// Metrics over complete traces. Throughput divides the valid count by the
/// span from first submission to last commit, but never by less than
/// `min_window_ms`. Latencies cover valid transactions only.
pub fn aggregate(traces: &[TxTrace], min_window_ms: f64) -> Result<Metrics, BenchError> {
    if traces.is_empty() {
        return Err(BenchError::EmptyTraces);
    }
    let first = traces.iter().map(|t| t.submitted_ms).fold(f64::INFINITY, f64::min);
    let last = traces
        .iter()
        .filter_map(|t| t.committed_ms)
        .fold(f64::NEG_INFINITY, f64::max);
    let lat: Vec<f64> = traces
        .iter()
        .filter(|t| t.status.is_valid())
        .filter_map(|t| t.committed_ms.map(|c| c - t.submitted_ms))
        .collect();
    let valid = lat.len();
    let window_ms = (last - first).max(min_window_ms);
    let throughput = if valid == 0 || window_ms <= 0.0 {
        0.0
    } else {
        valid as f64 * 1000.0 / window_ms
    };
    let (avg, min, max) = if lat.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            lat.iter().sum::<f64>() / valid as f64,
            lat.iter().copied().fold(f64::INFINITY, f64::min),
            lat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    Ok(Metrics {
        submitted: traces.len(),
        valid,
        throughput,
        avg_latency_ms: avg,
        min_latency_ms: min,
        max_latency_ms: max,
        success_rate: valid as f64 / traces.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub network: String,
    pub spec: WorkloadSpec,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub per_channel: BTreeMap<String, Metrics>,
}

/// Pre-generated ComputeVSI arguments per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payloads {
    pub normal: BTreeMap<GroupId, String>,
    pub stressed: BTreeMap<GroupId, String>,
}

fn payload(case: &GridCase, group: &Group) -> Result<String, BenchError> {
    let sol = solve_powerflow(case, &SolveOptions::default()).map_err(ScenarioError::from)?;
    let snapshot = make_snapshot(case, &sol, group, 0).map_err(ScenarioError::from)?;
    let args = ComputeVsiArgs {
        snapshot,
        resources: group_resources(group, &case.vvcs),
        threshold: BENCH_THRESHOLD,
        v_req: BENCH_V_REQ,
    };
    Ok(serde_json::to_string(&args).expect("args serialize"))
}

/// Normal payloads from the base case; stressed payloads from the base
/// case with the group's own loads scaled by `stress_factor`.
pub fn build_payloads(case: &GridCase, groups: &[Group], stress_factor: f64) -> Result<Payloads, BenchError> {
    let mut normal = BTreeMap::new();
    let mut stressed = BTreeMap::new();
    for g in groups {
        normal.insert(g.id.clone(), payload(case, g)?);
        let heavy = case
            .scale_load(&g.bus_ids, stress_factor)
            .map_err(|source| ScenarioError::Grid {
                path: PathBuf::new(),
                source,
            })?;
        stressed.insert(g.id.clone(), payload(&heavy, g)?);
    }
    Ok(Payloads { normal, stressed })
}

/// Channels hosting groups, each with the groups it serves.
fn group_channels(net: &Network, groups: &[GroupId]) -> Result<BTreeMap<String, Vec<GroupId>>, BenchError> {
    let mut out: BTreeMap<String, Vec<GroupId>> = BTreeMap::new();
    for g in groups {
        out.entry(net.config().channel_for_group(g)?)
            .or_default()
            .push(g.clone());
    }
    Ok(out)
}

/// Submits the workload and drains the network. Worker `w` sends every
/// `workers`-th transaction, so workers are evenly staggered; each worker
/// cycles over the target channels and, per channel, over its groups.
pub fn run_workload(
    spec: &WorkloadSpec,
    net: &mut Network,
    payloads: &Payloads,
    name: &str,
) -> Result<BenchReport, BenchError> {
    spec.check()?;
    let groups: Vec<GroupId> = match net.query_state(MAINCHAIN, "groups")? {
        Some(text) => serde_json::from_str::<Vec<Group>>(&text)
            .map_err(|_| BenchError::NotInitialized)?
            .into_iter()
            .map(|g| g.id)
            .collect(),
        None => return Err(BenchError::NotInitialized),
    };
    let mut hosted = group_channels(net, &groups)?;
    if !spec.channels.is_empty() {
        let wanted: BTreeSet<&String> = spec.channels.iter().collect();
        for c in &spec.channels {
            if !hosted.contains_key(c) {
                return Err(BenchError::Spec(format!("channel {c} serves no group")));
            }
        }
        hosted.retain(|c, _| wanted.contains(c));
    }
    let channels: Vec<(String, Vec<GroupId>)> = hosted.into_iter().collect();
    for (_, gs) in &channels {
        for g in gs {
            if !payloads.normal.contains_key(g) || !payloads.stressed.contains_key(g) {
                return Err(BenchError::MissingPayload(g.clone()));
            }
        }
    }

    net.set_client_workers(spec.workers);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start: SimTime = net.now();
    // Worker `i % workers` sends tx `i`; each worker cycles over the
    // channels `(w + k * workers) % C`, so the merged stream visits the
    // channels in the same order for every worker count.
    let mut counters = vec![0usize; channels.len()];
    let mut ids = Vec::with_capacity(spec.tx_count);
    for i in 0..spec.tx_count {
        let c = i % channels.len();
        let (ch, gs) = &channels[c];
        let g = &gs[counters[c] % gs.len()];
        counters[c] += 1;
        let normal = rng.random::<f64>() < spec.mix;
        let set = if normal { &payloads.normal } else { &payloads.stressed };
        let at = start + (i as f64 * 1e6 / spec.send_rate).round() as SimTime;
        ids.push(net.submit(ch, VSI_CONTRACT, OP_COMPUTE_VSI, set[g].clone(), at)?);
    }
    net.run_until_idle();

    let traces: Vec<TxTrace> = ids
        .iter()
        .map(|&id| {
            let t = net.tx(id).expect("submitted");
            TxTrace {
                tx: id,
                channel: t.channel.clone(),
                submitted_ms: time_to_ms(t.submitted_us),
                committed_ms: t.committed_us.map(time_to_ms),
                status: t.status.clone(),
            }
        })
        .collect();
    let min_window = spec.tx_count as f64 * 1000.0 / spec.send_rate;
    let metrics = aggregate(&traces, min_window)?;
    let mut per_channel = BTreeMap::new();
    for (ch, _) in &channels {
        let sub: Vec<TxTrace> = traces.iter().filter(|t| &t.channel == ch).cloned().collect();
        if !sub.is_empty() {
            let share = sub.len() as f64 * 1000.0 / spec.send_rate;
            per_channel.insert(ch.clone(), aggregate(&sub, share)?);
        }
    }
    Ok(BenchReport {
        network: name.to_string(),
        spec: spec.clone(),
        metrics,
        per_channel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SendRate,
    TxCount,
    Workers,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::SendRate => "send_rate",
            Axis::TxCount => "tx_count",
            Axis::Workers => "workers",
        })
    }
}

impl Axis {
    pub fn apply(self, base: &WorkloadSpec, x: f64) -> WorkloadSpec {
        let mut s = base.clone();
        match self {
            Axis::SendRate => s.send_rate = x,
            Axis::TxCount => s.tx_count = x.round() as usize,
            Axis::Workers => s.workers = x.round() as usize,
        }
        s
    }
}

/// Everything a fresh benchmark network needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub init: InitArgs,
    pub payloads: Payloads,
}

impl Prepared {
    pub fn new(case: &GridCase, groups: &[Group], stress_factor: f64) -> Result<Prepared, BenchError> {
        Ok(Prepared {
            init: init_args(case, groups)?,
            payloads: build_payloads(case, groups, stress_factor)?,
        })
    }

    /// A bootstrapped network with the group records committed.
    pub fn network(&self, config: &NetworkConfig) -> Result<Network, BenchError> {
        let mut net = bootstrap_dvs(config.clone())?;
        write_init(&mut net, &self.init)?;
        Ok(net)
    }

    pub fn run(&self, name: &str, config: &NetworkConfig, spec: &WorkloadSpec) -> Result<BenchReport, BenchError> {
        let mut net = self.network(config)?;
        run_workload(spec, &mut net, &self.payloads, name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub axis: Axis,
    pub network: String,
    pub points: Vec<(f64, BenchReport)>,
}

/// One fresh run per (network, value); networks run in parallel.
pub fn sweep(
    axis: Axis,
    values: &[f64],
    base: &WorkloadSpec,
    networks: &[(String, NetworkConfig)],
    prepared: &Prepared,
) -> Result<Vec<Series>, BenchError> {
    if values.is_empty() {
        return Err(BenchError::Spec("sweep needs at least one value".into()));
    }
    networks
        .par_iter()
        .map(|(name, cfg)| {
            let mut points = Vec::with_capacity(values.len());
            for &x in values {
                points.push((x, prepared.run(name, cfg, &axis.apply(base, x))?));
            }
            Ok(Series {
                axis,
                network: name.clone(),
                points,
            })
        })
        .collect()
}

/// Plottable rows: x, network, throughput, latencies, success rate.
pub fn series_csv(series: &[Series]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "x",
        "network",
        "throughput_tps",
        "avg_latency_ms",
        "min_latency_ms",
        "max_latency_ms",
        "success_rate",
    ])
    .expect("in-memory write");
    for s in series {
        for (x, r) in &s.points {
            let m = &r.metrics;
            w.write_record([
                x.to_string(),
                s.network.clone(),
                format!("{:.6}", m.throughput),
                format!("{:.6}", m.avg_latency_ms),
                format!("{:.6}", m.min_latency_ms),
                format!("{:.6}", m.max_latency_ms),
                format!("{:.6}", m.success_rate),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
}

fn default_stress() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub format_version: String,
    pub case: PathBuf,
    pub grouping: PathBuf,
    /// (name, network config path), in report order.
    pub networks: Vec<(String, PathBuf)>,
    pub base: WorkloadSpec,
    #[serde(default = "default_stress")]
    pub stress_factor: f64,
    pub sweeps: Vec<SweepConfig>,
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<SuiteConfig, ScenarioError> {
        let cfg: SuiteConfig = serde_json::from_str(text)
            .map_err(|e| ScenarioError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        if cfg.format_version != SUITE_FORMAT_VERSION {
            return Err(ScenarioError::Config(format!(
                "unsupported format_version {:?}",
                cfg.format_version
            )));
        }
        if cfg.networks.is_empty() {
            return Err(ScenarioError::Config("suite names no networks".into()));
        }
        if let Some(s) = cfg.sweeps.iter().find(|s| s.values.is_empty()) {
            return Err(ScenarioError::Config(format!("sweep over {} has no values", s.axis)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SuiteConfig, ScenarioError> {
        let mut cfg = SuiteConfig::parse(&read(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut cfg.case);
        fix(&mut cfg.grouping);
        for (_, p) in &mut cfg.networks {
            fix(p);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub sweeps: Vec<Vec<Series>>,
}

/// File name of a sweep's CSV series.
pub fn sweep_file_name(axis: Axis) -> String {
    format!("sweep_{axis}.csv")
}

/// Runs every sweep of a suite; `seed` overrides the base workload seed.
pub fn cmd_bench(cfg: &SuiteConfig, seed: Option<u64>) -> Result<SuiteReport, BenchError> {
    let case = parse_case(&read(&cfg.case)?).map_err(|source| ScenarioError::Grid {
        path: cfg.case.clone(),
        source,
    })?;
    let grouping = parse_grouping(&read(&cfg.grouping)?).map_err(|source| ScenarioError::Grid {
        path: cfg.grouping.clone(),
        source,
    })?;
    let groups = apply_grouping(&case, &grouping).map_err(|source| ScenarioError::Grid {
        path: cfg.grouping.clone(),
        source,
    })?;
    let mut networks = Vec::with_capacity(cfg.networks.len());
    for (name, path) in &cfg.networks {
        let net = NetworkConfig::parse(&read(path)?)?;
        net.check_groups(groups.iter().map(|g| &g.id))?;
        networks.push((name.clone(), net));
    }
    let mut base = cfg.base.clone();
    if let Some(s) = seed {
        base.seed = s;
    }
    base.check()?;
    let prepared = Prepared::new(&case, &groups, cfg.stress_factor)?;
    let mut sweeps = Vec::with_capacity(cfg.sweeps.len());
    for s in &cfg.sweeps {
        sweeps.push(sweep(s.axis, &s.values, &base, &networks, &prepared)?);
    }
    Ok(SuiteReport {
        seed: base.seed,
        sweeps,
    })
}
