// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{PfError, PowerFlowSolution};
use crate::gridcase::{
    tie_flow, virtualize_ties, BranchId, BusId, BusKind, GridCase, GridError, Group, GroupId, TieFlow, VirtualizedGroup,
};

/// Synchronized phasor measurements of one group at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmuSnapshot {
    pub group_id: GroupId,
    /// Logical milliseconds.
    pub timestamp: u64,
    pub v_phasor: BTreeMap<BusId, Complex64>,
    /// Net load (demand less compensation) at the group's PQ buses.
    pub s_load: BTreeMap<BusId, Complex64>,
    pub tie_flows: BTreeMap<BranchId, TieFlow>,
}

impl PmuSnapshot {
    pub fn virtualize(&self, case: &GridCase, group: &Group) -> Result<VirtualizedGroup, GridError> {
        virtualize_ties(case, group, &self.tie_flows)
    }
}

/// Restricts a converged solution to `group`, measuring its tie flows.
pub fn make_snapshot(
    case: &GridCase,
    solution: &PowerFlowSolution,
    group: &Group,
    timestamp: u64,
) -> Result<PmuSnapshot, PfError> {
    if !solution.converged {
        return Err(PfError::NotConverged);
    }
    let volt = |b: BusId| solution.voltage(b).ok_or(PfError::UnknownBus(b));
    let mut v_phasor = BTreeMap::new();
    for &b in &group.bus_ids {
        v_phasor.insert(b, volt(b)?);
    }
    let s_load = case
        .buses
        .iter()
        .filter(|b| group.contains(b.id) && b.kind == BusKind::Pq)
        .map(|b| (b.id, case.net_load(b)))
        .collect();
    let mut tie_flows = BTreeMap::new();
    for &k in &group.tie_branches {
        let br = &case.branches[k];
        tie_flows.insert(k, tie_flow(case, group, k, volt(br.from_bus)?, volt(br.to_bus)?));
    }
    Ok(PmuSnapshot {
        group_id: group.id.clone(),
        timestamp,
        v_phasor,
        s_load,
        tie_flows,
    })
}
