// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Closed-loop scenarios: every PMU period the grid is solved, each active
//! monitoring stream submits a ComputeVSI transaction, committed control
//! actions are applied to the grid, and exhausted groups escalate to the
//! GlobalController on the mainchain.
//!
//! Scenario file (paths relative to the file):
//!
//! ```json
//! {
//!   "format_version": "1",
//!   "case": "ieee30.json",
//!   "grouping": "ieee30_groups.json",
//!   "network": "network_3shard.json",
//!   "vsi_threshold": 0.2,
//!   "v_req": 0.9,
//!   "pmu_period_ms": 100,
//!   "duration_ms": 2000,
//!   "max_controller_rounds": 10,
//!   "disturbances": [{"at_ms": 200, "buses": [26, 29, 30], "factor": 5.5}],
//!   "vvc_overrides": [{"bus": 10, "q_available_mvar": 300.0}],
//!   "pmu_noise": 0.0,
//!   "seed": 7
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contracts::{
    bootstrap_dvs, group_resources, ComputeVsiArgs, GlobalArgs, InitArgs, MergeResponse, VsiResponse, GLOBAL_CONTRACT,
    OP_COMPUTE_VSI, OP_COMPUTE_VSI_MERGED, OP_GLOBAL_CONTROLLER, OP_INIT_GROUPS, VSI_CONTRACT,
};
use crate::dvs::{ActionStatus, DvsError, GroupData};
use crate::gridcase::{
    apply_grouping, merge_groups, parse_case, parse_grouping, BusId, GridCase, GridError, Group, GroupId,
};
use crate::ledger::{ms_to_time, LedgerError, Network, NetworkConfig, SimTime, TxId, TxStatus, MAINCHAIN};
use crate::powerflow::{make_snapshot, solve_powerflow, PfError, SolveOptions};

pub const SCENARIO_FORMAT_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Grid { path: PathBuf, source: GridError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Dvs(#[from] DvsError),
    #[error(transparent)]
    PowerFlow(#[from] PfError),
    #[error("initialization transaction failed: {0:?}")]
    InitFailed(TxStatus),
}

impl ScenarioError {
    /// True for failures caused by the inputs rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ScenarioError::Io { .. }
                | ScenarioError::Config(_)
                | ScenarioError::Grid { .. }
                | ScenarioError::Ledger(LedgerError::Config(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub at_ms: u64,
    pub buses: BTreeSet<BusId>,
    pub factor: f64,
}

/// Replaces the spare capacity of every compensator at `bus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VvcOverride {
    pub bus: BusId,
    pub q_available_mvar: f64,
}

fn default_threshold() -> f64 {
    0.2
}

fn default_v_req() -> f64 {
    0.9
}

fn default_period() -> u64 {
    100
}

fn default_rounds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub format_version: String,
    pub case: PathBuf,
    pub grouping: PathBuf,
    pub network: PathBuf,
    #[serde(default = "default_threshold")]
    pub vsi_threshold: f64,
    #[serde(default = "default_v_req")]
    pub v_req: f64,
    #[serde(default = "default_period")]
    pub pmu_period_ms: u64,
    pub duration_ms: u64,
    #[serde(default = "default_rounds")]
    pub max_controller_rounds: usize,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub vvc_overrides: Vec<VvcOverride>,
    /// Relative uniform noise on measured voltage magnitudes.
    #[serde(default)]
    pub pmu_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)
            .map_err(|e| ScenarioError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        if cfg.format_version != SCENARIO_FORMAT_VERSION {
            return Err(ScenarioError::Config(format!(
                "unsupported format_version {:?}",
                cfg.format_version
            )));
        }
        if cfg.pmu_period_ms == 0 {
            return Err(ScenarioError::Config("pmu_period_ms must be positive".into()));
        }
        if let Some(d) = cfg.disturbances.iter().find(|d| d.at_ms > cfg.duration_ms) {
            return Err(ScenarioError::Config(format!(
                "disturbance at {} ms is after the end",
                d.at_ms
            )));
        }
        if cfg
            .disturbances
            .iter()
            .any(|d| !(d.factor.is_finite() && d.factor >= 0.0))
        {
            return Err(ScenarioError::Config(
                "disturbance factors must be finite and non-negative".into(),
            ));
        }
        if !(cfg.pmu_noise >= 0.0 && cfg.pmu_noise < 1.0) {
            return Err(ScenarioError::Config("pmu_noise must be in [0, 1)".into()));
        }
        Ok(cfg)
    }

    /// Reads a scenario file, resolving its paths against its directory.
    pub fn load(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
        let mut cfg = ScenarioConfig::parse(&read(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.case, &mut cfg.grouping, &mut cfg.network] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }
}

pub fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parsed inputs of a scenario.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub case: GridCase,
    pub groups: Vec<Group>,
    pub network: NetworkConfig,
}

impl Inputs {
    pub fn load(cfg: &ScenarioConfig) -> Result<Inputs, ScenarioError> {
        fn grid(path: &Path) -> impl Fn(GridError) -> ScenarioError + '_ {
            move |source| ScenarioError::Grid {
                path: path.to_path_buf(),
                source,
            }
        }
        let mut case = parse_case(&read(&cfg.case)?).map_err(grid(&cfg.case))?;
        let grouping = parse_grouping(&read(&cfg.grouping)?).map_err(grid(&cfg.grouping))?;
        let groups = apply_grouping(&case, &grouping).map_err(grid(&cfg.grouping))?;
        let network = NetworkConfig::parse(&read(&cfg.network)?)?;
        network.check_groups(groups.iter().map(|g| &g.id))?;
        apply_overrides(&mut case, &cfg.vvc_overrides)?;
        Ok(Inputs { case, groups, network })
    }
}

pub fn apply_overrides(case: &mut GridCase, overrides: &[VvcOverride]) -> Result<(), ScenarioError> {
    for o in overrides {
        let mut hit = false;
        for v in case.vvcs.iter_mut().filter(|v| v.bus == o.bus) {
            v.q_available = o.q_available_mvar / case.base_mva;
            hit = true;
        }
        if !hit {
            return Err(ScenarioError::Config(format!("no compensator at bus {}", o.bus)));
        }
    }
    Ok(())
}

/// Group records and adjacent-pair combination records.
pub fn init_args(case: &GridCase, groups: &[Group]) -> Result<InitArgs, ScenarioError> {
    let mut data = Vec::new();
    for g in groups {
        data.push(GroupData::build(case, g)?);
    }
    let mut combos = Vec::new();
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            if a.is_adjacent(b) {
                let m = merge_groups(case, a, b).map_err(|source| ScenarioError::Grid {
                    path: PathBuf::new(),
                    source,
                })?;
                combos.push(GroupData::build(case, &m)?);
            }
        }
    }
    Ok(InitArgs {
        groups: data,
        combos,
        vvcs: case.vvcs.clone(),
    })
}

/// Network with the contracts deployed and the initial records committed.
pub struct Initialized {
    pub inputs: Inputs,
    pub network: Network,
    pub init_tx: TxId,
    pub combos: usize,
}

/// Writes the group records via a mainchain transaction.
pub fn write_init(network: &mut Network, args: &InitArgs) -> Result<TxId, ScenarioError> {
    let text = serde_json::to_string(args).expect("init args serialize");
    let at = network.now();
    let tx = network.submit(MAINCHAIN, GLOBAL_CONTRACT, OP_INIT_GROUPS, text, at)?;
    network.run_until_idle();
    let status = network.tx(tx).expect("submitted").status.clone();
    if !status.is_valid() {
        return Err(ScenarioError::InitFailed(status));
    }
    Ok(tx)
}

pub fn cmd_init(cfg: &ScenarioConfig) -> Result<Initialized, ScenarioError> {
    let inputs = Inputs::load(cfg)?;
    let args = init_args(&inputs.case, &inputs.groups)?;
    let mut network = bootstrap_dvs(inputs.network.clone())?;
    let init_tx = write_init(&mut network, &args)?;
    Ok(Initialized {
        combos: args.combos.len(),
        inputs,
        network,
        init_tx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "event")]
pub enum LogEvent {
    Init {
        groups: usize,
        combos: usize,
        tx: TxId,
    },
    Disturbance {
        buses: BTreeSet<BusId>,
        factor: f64,
    },
    Tx {
        tx: TxId,
        channel: String,
        op: String,
        status: TxStatus,
        latency_ms: Option<f64>,
    },
    Vsi {
        group: GroupId,
        min_vsi: f64,
        weak_bus: Option<BusId>,
        weak_v: Option<f64>,
        flagged: bool,
    },
    Action {
        tx: TxId,
        group: GroupId,
        weak_bus: BusId,
        vvc_bus: Option<BusId>,
        q_req: f64,
        status: ActionStatus,
    },
    Merge {
        tx: TxId,
        merged: GroupId,
        from: (GroupId, GroupId),
    },
    MergeFailed {
        tx: TxId,
        group: GroupId,
        status: TxStatus,
    },
    Split {
        tx: TxId,
        merged: GroupId,
        into: (GroupId, GroupId),
    },
    Collapse {
        reason: String,
    },
    RoundLimit {
        rounds: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Logical time in microseconds.
    pub t_us: SimTime,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLog {
    pub entries: Vec<LogEntry>,
    pub collapsed: bool,
    pub controller_rounds: usize,
    /// Final head hash of every channel.
    pub chain_hashes: BTreeMap<String, String>,
}

impl ScenarioLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn events(&self) -> impl Iterator<Item = &LogEvent> {
        self.entries.iter().map(|e| &e.event)
    }
}

struct Stream {
    group: Group,
    merged: bool,
}

pub struct Simulation {
    pub cfg: ScenarioConfig,
    pub case: GridCase,
    pub groups: Vec<Group>,
    pub network: Network,
    log: Vec<LogEntry>,
    rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, init: Initialized) -> Simulation {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut sim = Simulation {
            case: init.inputs.case,
            groups: init.inputs.groups,
            network: init.network,
            log: Vec::new(),
            rng,
            cfg,
        };
        let ev = LogEvent::Init {
            groups: sim.groups.len(),
            combos: init.combos,
            tx: init.init_tx,
        };
        sim.push(ev);
        sim
    }

    fn push(&mut self, event: LogEvent) {
        self.log.push(LogEntry {
            t_us: self.network.now(),
            event,
        });
    }

    fn log_tx(&mut self, tx: TxId) {
        let t = self.network.tx(tx).expect("submitted");
        let ev = LogEvent::Tx {
            tx,
            channel: t.channel.clone(),
            op: t.op.clone(),
            status: t.status.clone(),
            latency_ms: t.latency_ms(),
        };
        self.push(ev);
    }

    fn streams(&self, merged: &BTreeMap<GroupId, Group>) -> Vec<Stream> {
        let covered: BTreeSet<&GroupId> = merged
            .values()
            .filter_map(|m| m.merged_from.as_ref())
            .flat_map(|(a, b)| [a, b])
            .collect();
        let mut out: Vec<Stream> = self
            .groups
            .iter()
            .filter(|g| !covered.contains(&g.id))
            .map(|g| Stream {
                group: g.clone(),
                merged: false,
            })
            .collect();
        out.extend(merged.values().map(|g| Stream {
            group: g.clone(),
            merged: true,
        }));
        out
    }

    fn perturb(&mut self, snap: &mut crate::powerflow::PmuSnapshot) {
        if self.cfg.pmu_noise == 0.0 {
            return;
        }
        for v in snap.v_phasor.values_mut() {
            let k: f64 = self.rng.random_range(-1.0..=1.0);
            *v *= 1.0 + self.cfg.pmu_noise * k;
        }
    }

    /// Runs the closed loop for the configured duration.
    pub fn run(mut self) -> Result<(ScenarioLog, Network), ScenarioError> {
        let period = self.cfg.pmu_period_ms;
        let mut merged: BTreeMap<GroupId, Group> = BTreeMap::new();
        let mut applied = vec![false; self.cfg.disturbances.len()];
        let mut rounds = 0;
        let mut collapsed = false;
        let mut t_ms = 0;
        while t_ms <= self.cfg.duration_ms {
            let start = ms_to_time(t_ms as f64).max(self.network.now());
            self.network.run_until(start);
            for (i, d) in self.cfg.disturbances.clone().iter().enumerate() {
                if !applied[i] && d.at_ms <= t_ms {
                    applied[i] = true;
                    self.case = self
                        .case
                        .scale_load(&d.buses, d.factor)
                        .map_err(|source| ScenarioError::Grid {
                            path: PathBuf::new(),
                            source,
                        })?;
                    self.push(LogEvent::Disturbance {
                        buses: d.buses.clone(),
                        factor: d.factor,
                    });
                }
            }
            let sol = match solve_powerflow(&self.case, &SolveOptions::default()) {
                Ok(s) if s.converged => s,
                Ok(_) => {
                    self.push(LogEvent::Collapse {
                        reason: "power flow did not converge".into(),
                    });
                    collapsed = true;
                    break;
                }
                Err(e) => {
                    self.push(LogEvent::Collapse { reason: e.to_string() });
                    collapsed = true;
                    break;
                }
            };

            let mut submitted = Vec::new();
            for s in self.streams(&merged) {
                let mut snapshot = make_snapshot(&self.case, &sol, &s.group, t_ms)?;
                self.perturb(&mut snapshot);
                let args = ComputeVsiArgs {
                    snapshot,
                    resources: group_resources(&s.group, &self.case.vvcs),
                    threshold: self.cfg.vsi_threshold,
                    v_req: self.cfg.v_req,
                };
                let text = serde_json::to_string(&args).expect("args serialize");
                let tx = if s.merged {
                    self.network
                        .submit(MAINCHAIN, GLOBAL_CONTRACT, OP_COMPUTE_VSI_MERGED, text, start)?
                } else {
                    let ch = self.network.config().channel_for_group(&s.group.id)?;
                    self.network.submit(&ch, VSI_CONTRACT, OP_COMPUTE_VSI, text, start)?
                };
                submitted.push(tx);
            }
            self.network.run_until_idle();

            let mut active = false;
            let mut escalate = Vec::new();
            for tx in submitted {
                self.log_tx(tx);
                let t = self.network.tx(tx).expect("submitted");
                if !t.status.is_valid() {
                    continue;
                }
                let resp: VsiResponse =
                    serde_json::from_str(t.response.as_deref().unwrap_or_default()).expect("contract response");
                let VsiResponse::Monitored { summary, action, split } = resp else {
                    continue;
                };
                self.push(LogEvent::Vsi {
                    group: summary.group_id.clone(),
                    min_vsi: summary.min_vsi,
                    weak_bus: summary.weak_bus,
                    weak_v: summary.weak_v,
                    flagged: summary.flagged,
                });
                if let Some(rec) = &action {
                    active = true;
                    let a = &rec.action;
                    self.push(LogEvent::Action {
                        tx,
                        group: a.group_id.clone(),
                        weak_bus: a.weak_bus,
                        vvc_bus: a.vvc_bus,
                        q_req: a.q_req,
                        status: a.status,
                    });
                    if let (ActionStatus::Applied, Some(k)) = (a.status, rec.vvc_case_index) {
                        let v = &mut self.case.vvcs[k];
                        v.q_injected += a.q_req;
                        v.q_available -= a.q_req;
                    }
                }
                let exhausted = action
                    .as_ref()
                    .is_some_and(|r| r.action.status == ActionStatus::InsufficientLocalResources);
                if exhausted && !merged.contains_key(&summary.group_id) {
                    escalate.push(summary.group_id.clone());
                }
                if let Some(into) = split {
                    active = true;
                    merged.remove(&summary.group_id);
                    self.push(LogEvent::Split {
                        tx,
                        merged: summary.group_id.clone(),
                        into,
                    });
                }
            }

            for g in escalate {
                if merged
                    .values()
                    .any(|m| m.merged_from.as_ref().is_some_and(|(a, b)| *a == g || *b == g))
                {
                    continue;
                }
                let args = GlobalArgs {
                    group: g.clone(),
                    vvcs: self.case.vvcs.clone(),
                };
                let text = serde_json::to_string(&args).expect("args serialize");
                let at = self.network.now();
                let tx = self
                    .network
                    .submit(MAINCHAIN, GLOBAL_CONTRACT, OP_GLOBAL_CONTROLLER, text, at)?;
                self.network.run_until_idle();
                self.log_tx(tx);
                let t = self.network.tx(tx).expect("submitted");
                if t.status.is_valid() {
                    let m: MergeResponse =
                        serde_json::from_str(t.response.as_deref().unwrap_or_default()).expect("merge response");
                    let from = m.merged.merged_from.clone().expect("merge product");
                    self.push(LogEvent::Merge {
                        tx,
                        merged: m.merged.id.clone(),
                        from,
                    });
                    merged.insert(m.merged.id.clone(), m.merged);
                } else {
                    let status = t.status.clone();
                    self.push(LogEvent::MergeFailed { tx, group: g, status });
                }
                active = true;
            }

            if active {
                rounds += 1;
                if rounds >= self.cfg.max_controller_rounds {
                    self.push(LogEvent::RoundLimit { rounds });
                    break;
                }
            }
            t_ms += period;
        }
        let mut chain_hashes = BTreeMap::new();
        for ch in self.network.channel_ids() {
            chain_hashes.insert(ch.clone(), self.network.chain_hash(&ch)?);
        }
        Ok((
            ScenarioLog {
                entries: self.log,
                collapsed,
                controller_rounds: rounds,
                chain_hashes,
            },
            self.network,
        ))
    }
}

/// Initializes the network and runs the scenario.
pub fn cmd_simulate(cfg: &ScenarioConfig, wall_clock: bool) -> Result<(ScenarioLog, Network), ScenarioError> {
    let mut init = cmd_init(cfg)?;
    init.network.set_wall_clock(wall_clock);
    Simulation::new(cfg.clone(), init).run()
}
