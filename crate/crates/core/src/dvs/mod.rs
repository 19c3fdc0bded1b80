// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Voltage stability monitoring (Thevenin equivalents and the stability
//! index) and control (compensator selection, group merge and split).

mod control;
mod global;
mod priority;
mod thevenin;
mod transfer;
mod vsi;

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use control::{local_controller, required_reactive, ActionStatus, ControlAction};
pub use global::{global_controller, merge_pair, split_group};
pub use priority::{priority_index, PIMatrix};
pub use thevenin::{schur_impedance, thevenin, TheveninParams};
pub use transfer::{deliverable, margin, max_transfer, p_max_at, q_max_at, s_max_along, vsi_from, TransferLimits};
pub use vsi::{compute_vsi, shell_sort, BusVsi, VsiReport};

use crate::gridcase::{
    classify_buses, virtualize_ties, BusClass, BusId, GridCase, GridError, Group, GroupId, NodeId, TieFlow,
};
use crate::powerflow::{case_admittance, group_admittance, AdmittanceMatrix, PfError, PmuSnapshot};

#[derive(Debug, thiserror::Error)]
pub enum DvsError {
    #[error("tie block Y_TT is singular")]
    SingularTieBlock,
    #[error("reduced load admittance is singular")]
    SingularSchur,
    #[error("group {0} admittance is singular even after grounding")]
    SingularGroupAdmittance(GroupId),
    #[error("bus {0} has a degenerate Thevenin impedance")]
    DegenerateImpedance(BusId),
    #[error("load class contains virtual node {0}")]
    VirtualLoad(NodeId),
    #[error("no measurement for bus {0}")]
    MissingMeasurement(BusId),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("snapshot of group {snapshot} does not match stored data for group {record}")]
    StaleGroupData { snapshot: GroupId, record: GroupId },
    #[error("report has no weak bus")]
    NoWeakBus,
    #[error("no adjacent group for {0}")]
    NoAdjacentGroup(GroupId),
    #[error("no adjacent group of {0} has spare compensation")]
    NoAdjacentResources(GroupId),
    #[error("group {0} is not a merge product")]
    NotMerged(GroupId),
    #[error("group {group} is still unstable (min VSI {min_vsi})")]
    StillUnstable { group: GroupId, min_vsi: f64 },
    #[error(transparent)]
    PowerFlow(#[from] PfError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Everything the contracts need about one group, computed once at
/// initialization: the group-network admittance (with one virtual node per
/// tie), the static bus classes and the priority index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupData {
    pub group: Group,
    pub y: AdmittanceMatrix,
    pub bus_classes: BTreeMap<BusId, BusClass>,
    pub pi: PIMatrix,
}

impl GroupData {
    pub fn build(case: &GridCase, group: &Group) -> Result<GroupData, DvsError> {
        // Virtual-bus kinds do not affect the admittance.
        let zero = TieFlow {
            s_into: Complex64::new(0.0, 0.0),
            v_mid: Complex64::new(1.0, 0.0),
        };
        let flows = group.tie_branches.iter().map(|k| (*k, zero)).collect();
        let vgroup = virtualize_ties(case, group, &flows)?;
        let y = group_admittance(case, &vgroup)?;
        let full = case_admittance(case)?;
        let pi = priority_index(&full, group, &case.source_buses())?;
        Ok(GroupData {
            group: group.clone(),
            y,
            bus_classes: classify_buses(case, group),
            pi,
        })
    }

    /// Node classes under the snapshot's tie flows: importing ties are
    /// virtual generators (G), exporting ties virtual loads (eliminated as T).
    pub fn classes_for(&self, snap: &PmuSnapshot) -> Result<BTreeMap<NodeId, BusClass>, DvsError> {
        let mut out: BTreeMap<NodeId, BusClass> = self.bus_classes.iter().map(|(b, c)| (NodeId::Bus(*b), *c)).collect();
        for &k in &self.group.tie_branches {
            let flow = snap.tie_flows.get(&k).ok_or(GridError::MissingFlow(k))?;
            let class = if flow.is_import() { BusClass::G } else { BusClass::T };
            out.insert(NodeId::Virtual(k), class);
        }
        Ok(out)
    }

    /// Measured voltage at every group-network node; virtual nodes take
    /// the tie midpoint voltage.
    pub fn node_voltages(&self, snap: &PmuSnapshot) -> Result<BTreeMap<NodeId, Complex64>, DvsError> {
        let mut out = BTreeMap::new();
        for node in &self.y.nodes {
            let v = match node {
                NodeId::Bus(b) => *snap.v_phasor.get(b).ok_or(DvsError::MissingMeasurement(*b))?,
                NodeId::Virtual(k) => snap.tie_flows.get(k).ok_or(GridError::MissingFlow(*k))?.v_mid,
            };
            out.insert(*node, v);
        }
        Ok(out)
    }
}
