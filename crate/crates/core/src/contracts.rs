// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! The DVS contracts. `VSIContract` runs on each shard (or on the mainchain
//! when there are no shards) and performs ComputeVSI followed, when the
//! group is flagged, by LocalController in the same transaction.
//! `GlobalContract` runs on the mainchain: it stores the per-group and
//! per-combination records written at initialization, merges groups whose
//! local resources ran out, and monitors merged groups until they split.
//!
//! Mainchain keys:
//!
//! | key               | value                                   |
//! |-------------------|-----------------------------------------|
//! | `groups`          | base groups                             |
//! | `group/<g>`       | [`GroupData`] of a base group           |
//! | `combo/<a+b>`     | [`GroupData`] of an adjacent pair       |
//! | `vvc/<g>`         | compensator registry of a group         |
//! | `merge/<g>`       | id of the merged group `g` belongs to   |
//! | `merged/<a+b>`    | the active merged [`Group`]             |
//!
//! Per-transaction keys on the executing channel: `vsi/<g>/<tx>` and
//! `action/<g>/<tx>`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dvs::{compute_vsi, global_controller, local_controller, split_group, ControlAction, GroupData, VsiReport};
use crate::gridcase::{BusId, Group, GroupId, VvcRecord};
use crate::ledger::{Contract, ContractError, LedgerError, Network, NetworkConfig, TxContext, Version, MAINCHAIN};
use crate::powerflow::PmuSnapshot;

pub const VSI_CONTRACT: &str = "VSIContract";
pub const GLOBAL_CONTRACT: &str = "GlobalContract";

pub const OP_COMPUTE_VSI: &str = "ComputeVSI";
pub const OP_COMPUTE_VSI_MERGED: &str = "ComputeVSIMerged";
pub const OP_INIT_GROUPS: &str = "InitGroups";
pub const OP_GLOBAL_CONTROLLER: &str = "GlobalController";

/// A compensator together with its position in the case's list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedVvc {
    pub index: usize,
    pub record: VvcRecord,
}

/// Compensators of `vvcs` located in `group`.
pub fn group_resources(group: &Group, vvcs: &[VvcRecord]) -> Vec<IndexedVvc> {
    vvcs.iter()
        .enumerate()
        .filter(|(_, v)| group.contains(v.bus))
        .map(|(index, v)| IndexedVvc {
            index,
            record: v.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeVsiArgs {
    pub snapshot: PmuSnapshot,
    pub resources: Vec<IndexedVvc>,
    pub threshold: f64,
    pub v_req: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitArgs {
    pub groups: Vec<GroupData>,
    pub combos: Vec<GroupData>,
    pub vvcs: Vec<VvcRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalArgs {
    pub group: GroupId,
    pub vvcs: Vec<VvcRecord>,
}

/// Ledger record of one monitoring pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsiSummary {
    pub group_id: GroupId,
    pub timestamp: u64,
    pub min_vsi: f64,
    pub weak_bus: Option<BusId>,
    pub weak_v: Option<f64>,
    pub threshold: f64,
    pub flagged: bool,
    pub vsi: BTreeMap<BusId, f64>,
}

impl VsiSummary {
    pub fn of(report: &VsiReport) -> VsiSummary {
        VsiSummary {
            group_id: report.group_id.clone(),
            timestamp: report.timestamp,
            min_vsi: report.min_vsi,
            weak_bus: report.weak_bus,
            weak_v: report.weak_voltage(),
            threshold: report.threshold,
            flagged: report.flagged(),
            vsi: report.buses.iter().map(|(b, v)| (*b, v.vsi)).collect(),
        }
    }
}

/// Ledger record of a LocalController decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action: ControlAction,
    /// Position of the chosen compensator in the case's list.
    pub vvc_case_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum VsiResponse {
    /// The group is part of an active merge; monitoring happens there.
    Merged { merged_into: GroupId },
    Monitored {
        summary: VsiSummary,
        action: Option<ActionRecord>,
        /// Constituents restored when a merged group stabilized.
        split: Option<(GroupId, GroupId)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeResponse {
    pub merged: Group,
}

fn bad(e: impl std::fmt::Display) -> ContractError {
    ContractError::new(e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("record serializes")
}

/// Modeled cost of ComputeVSI: dense reductions on the group network plus
/// one transfer-limit evaluation per load bus.
pub fn vsi_cost_units(data: &GroupData) -> f64 {
    let m = data.y.order as f64;
    let loads = data.bus_classes.len() as f64;
    (m * m * m + 20.0 * loads) / 1000.0
}

/// Modeled cost of LocalController: a sensitivity matrix and one path
/// search per candidate.
pub fn control_cost_units(data: &GroupData) -> f64 {
    let m = data.y.order as f64;
    (m * m * m + m * m * data.pi.ranking.len() as f64) / 1000.0
}

/// One evaluated monitoring pass, with its ledger encodings.
struct Pass {
    report: VsiReport,
    action: Option<ActionRecord>,
    summary: VsiSummary,
    summary_json: String,
    action_json: Option<String>,
}

type Computed = Result<Arc<Pass>, String>;

/// Shared monitoring logic. Parsed arguments and results are memoized on
/// the argument bytes and the record version they were computed from, so
/// every endorsement stays a pure function of its inputs.
#[derive(Default)]
struct Monitor {
    data: Mutex<HashMap<(String, Version), Arc<GroupData>>>,
    args: Mutex<HashMap<[u8; 32], Arc<ComputeVsiArgs>>>,
    results: Mutex<HashMap<([u8; 32], Version), Computed>>,
}

impl Monitor {
    fn parse(&self, text: &str) -> Result<([u8; 32], Arc<ComputeVsiArgs>), ContractError> {
        let digest: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        if let Some(a) = self.args.lock().expect("cache lock").get(&digest) {
            return Ok((digest, a.clone()));
        }
        let a: Arc<ComputeVsiArgs> = Arc::new(serde_json::from_str(text).map_err(bad)?);
        self.args.lock().expect("cache lock").insert(digest, a.clone());
        Ok((digest, a))
    }

    fn group_data(&self, key: &str, text: &str, version: Version) -> Result<Arc<GroupData>, ContractError> {
        let id = (key.to_string(), version);
        if let Some(d) = self.data.lock().expect("cache lock").get(&id) {
            return Ok(d.clone());
        }
        let d: Arc<GroupData> = Arc::new(serde_json::from_str(text).map_err(bad)?);
        self.data.lock().expect("cache lock").insert(id, d.clone());
        Ok(d)
    }

    /// ComputeVSI, then LocalController if the group is flagged; records
    /// the pass under per-transaction keys.
    fn run(
        &self,
        ctx: &mut TxContext<'_>,
        digest: [u8; 32],
        args: &ComputeVsiArgs,
        data_key: &str,
    ) -> Result<Arc<Pass>, ContractError> {
        let data = ctx
            .with_global(data_key, |text, version| {
                let version = version.unwrap_or(Version { block: 0, tx: 0 });
                self.group_data(data_key, text, version).map(|d| (d, version))
            })
            .ok_or_else(|| ContractError::new(format!("no record {data_key}")))?;
        let (data, version) = data?;
        let cached = self
            .results
            .lock()
            .expect("cache lock")
            .get(&(digest, version))
            .cloned();
        let computed = match cached {
            Some(c) => c,
            None => {
                let c = compute(args, &data);
                self.results
                    .lock()
                    .expect("cache lock")
                    .insert((digest, version), c.clone());
                c
            }
        };
        let pass = computed.map_err(ContractError::new)?;
        ctx.charge(vsi_cost_units(&data));
        if pass.action.is_some() {
            ctx.charge(control_cost_units(&data));
        }
        let g = &pass.report.group_id;
        let tx = ctx.tx_id();
        ctx.put_state(&format!("vsi/{g}/{tx}"), pass.summary_json.clone());
        if let Some(a) = &pass.action_json {
            ctx.put_state(&format!("action/{g}/{tx}"), a.clone());
        }
        Ok(pass)
    }
}

fn compute(args: &ComputeVsiArgs, data: &GroupData) -> Computed {
    let report = compute_vsi(&args.snapshot, data, args.threshold).map_err(|e| e.to_string())?;
    let action = if report.flagged() {
        let records: Vec<VvcRecord> = args.resources.iter().map(|r| r.record.clone()).collect();
        let a = local_controller(&report, &args.snapshot, &records, data, args.v_req).map_err(|e| e.to_string())?;
        let vvc_case_index = a.vvc_index.map(|k| args.resources[k].index);
        Some(ActionRecord {
            action: a,
            vvc_case_index,
        })
    } else {
        None
    };
    let summary = VsiSummary::of(&report);
    Ok(Arc::new(Pass {
        summary_json: to_json(&summary),
        action_json: action.as_ref().map(to_json),
        report,
        action,
        summary,
    }))
}

fn merge_flag(ctx: &mut TxContext<'_>, group: &GroupId) -> Result<Option<GroupId>, ContractError> {
    match ctx.get_global(&format!("merge/{group}")) {
        None => Ok(None),
        Some((text, _)) => serde_json::from_str(&text).map_err(bad),
    }
}

#[derive(Default)]
pub struct VsiContract {
    monitor: Monitor,
}

impl Contract for VsiContract {
    fn name(&self) -> &str {
        VSI_CONTRACT
    }

    fn invoke(&self, ctx: &mut TxContext<'_>, op: &str, args: &str) -> Result<String, ContractError> {
        if op != OP_COMPUTE_VSI {
            return Err(ContractError::new(format!("unknown operation {op}")));
        }
        let (digest, parsed) = self.monitor.parse(args)?;
        let g = &parsed.snapshot.group_id;
        if let Some(merged_into) = merge_flag(ctx, g)? {
            return Ok(to_json(&VsiResponse::Merged { merged_into }));
        }
        let pass = self.monitor.run(ctx, digest, &parsed, &format!("group/{g}"))?;
        Ok(to_json(&VsiResponse::Monitored {
            summary: pass.summary.clone(),
            action: pass.action.clone(),
            split: None,
        }))
    }
}

#[derive(Default)]
pub struct GlobalContract {
    monitor: Monitor,
}

impl GlobalContract {
    fn init(&self, ctx: &mut TxContext<'_>, args: &str) -> Result<String, ContractError> {
        let init: InitArgs = serde_json::from_str(args).map_err(bad)?;
        let groups: Vec<Group> = init.groups.iter().map(|d| d.group.clone()).collect();
        ctx.put_state("groups", to_json(&groups));
        for d in &init.groups {
            ctx.put_state(&format!("group/{}", d.group.id), to_json(d));
            ctx.put_state(
                &format!("vvc/{}", d.group.id),
                to_json(&group_resources(&d.group, &init.vvcs)),
            );
        }
        for d in &init.combos {
            ctx.put_state(&format!("combo/{}", d.group.id), to_json(d));
        }
        ctx.charge(init.groups.len() as f64 + init.combos.len() as f64);
        Ok(to_json(&(init.groups.len(), init.combos.len())))
    }

    fn merge(&self, ctx: &mut TxContext<'_>, args: &str) -> Result<String, ContractError> {
        let req: GlobalArgs = serde_json::from_str(args).map_err(bad)?;
        let groups: Vec<Group> = ctx
            .get_state("groups")
            .ok_or_else(|| ContractError::new("groups not initialized"))
            .and_then(|t| serde_json::from_str(&t).map_err(bad))?;
        if let Some(m) = merge_flag(ctx, &req.group)? {
            return Err(ContractError::new(format!(
                "group {} is already merged into {m}",
                req.group
            )));
        }
        // Only groups outside any active merge are candidates.
        let mut free = Vec::new();
        for g in &groups {
            if g.id == req.group || merge_flag(ctx, &g.id)?.is_none() {
                free.push(g.clone());
            }
        }
        let merged = global_controller(&req.group, &free, &req.vvcs).map_err(bad)?;
        if ctx.get_state(&format!("combo/{}", merged.id)).is_none() {
            return Err(ContractError::new(format!("no combination record for {}", merged.id)));
        }
        let (a, b) = merged.merged_from.clone().expect("merge product");
        for g in [&a, &b] {
            ctx.put_state(&format!("merge/{g}"), to_json(&Some(merged.id.clone())));
            let group = groups.iter().find(|x| &x.id == g).expect("constituent");
            ctx.put_state(&format!("vvc/{g}"), to_json(&group_resources(group, &req.vvcs)));
        }
        ctx.put_state(&format!("merged/{}", merged.id), to_json(&Some(&merged)));
        ctx.charge(groups.len() as f64);
        Ok(to_json(&MergeResponse { merged }))
    }

    fn compute_merged(&self, ctx: &mut TxContext<'_>, args: &str) -> Result<String, ContractError> {
        let (digest, parsed) = self.monitor.parse(args)?;
        let id = parsed.snapshot.group_id.clone();
        let merged: Group = ctx
            .get_state(&format!("merged/{id}"))
            .and_then(|t| serde_json::from_str::<Option<Group>>(&t).ok().flatten())
            .ok_or_else(|| ContractError::new(format!("{id} is not an active merged group")))?;
        let pass = self.monitor.run(ctx, digest, &parsed, &format!("combo/{id}"))?;
        let mut split = None;
        if !pass.report.flagged() {
            let groups: Vec<Group> = ctx
                .get_state("groups")
                .ok_or_else(|| ContractError::new("groups not initialized"))
                .and_then(|t| serde_json::from_str(&t).map_err(bad))?;
            let (a, b) = split_group(&merged, &pass.report, &groups).map_err(bad)?;
            for g in [&a.id, &b.id] {
                ctx.put_state(&format!("merge/{g}"), to_json(&None::<GroupId>));
            }
            ctx.put_state(&format!("merged/{id}"), to_json(&None::<Group>));
            split = Some((a.id, b.id));
        }
        Ok(to_json(&VsiResponse::Monitored {
            summary: pass.summary.clone(),
            action: pass.action.clone(),
            split,
        }))
    }
}

impl Contract for GlobalContract {
    fn name(&self) -> &str {
        GLOBAL_CONTRACT
    }

    fn invoke(&self, ctx: &mut TxContext<'_>, op: &str, args: &str) -> Result<String, ContractError> {
        match op {
            OP_INIT_GROUPS => self.init(ctx, args),
            OP_GLOBAL_CONTROLLER => self.merge(ctx, args),
            OP_COMPUTE_VSI_MERGED => self.compute_merged(ctx, args),
            _ => Err(ContractError::new(format!("unknown operation {op}"))),
        }
    }
}

/// Bootstraps the network and deploys the contracts: GlobalContract on the
/// mainchain, VSIContract on every shard, or on the mainchain when unsharded.
pub fn bootstrap_dvs(config: NetworkConfig) -> Result<Network, LedgerError> {
    let mut net = Network::bootstrap(config)?;
    net.deploy_contract(MAINCHAIN, Arc::new(GlobalContract::default()))?;
    let shards: Vec<String> = net.config().shards.iter().map(|s| s.id.clone()).collect();
    if shards.is_empty() {
        net.deploy_contract(MAINCHAIN, Arc::new(VsiContract::default()))?;
    }
    for s in shards {
        net.deploy_contract(&s, Arc::new(VsiContract::default()))?;
    }
    Ok(net)
}
