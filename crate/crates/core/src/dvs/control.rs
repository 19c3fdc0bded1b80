// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{DvsError, GroupData, VsiReport};
use crate::gridcase::{BusId, GroupId, NodeId, VvcRecord};
use crate::powerflow::{dqdv_at, sensitivity_chain, shortest_path, PmuSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionStatus {
    Applied,
    InsufficientLocalResources,
    NoActionNeeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub group_id: GroupId,
    pub weak_bus: BusId,
    pub vvc_bus: Option<BusId>,
    /// Position of the chosen compensator in the resource list.
    pub vvc_index: Option<usize>,
    pub q_req: f64,
    pub sensitivity: f64,
    pub v_weak: f64,
    pub v_req: f64,
    pub status: ActionStatus,
}

/// Reactive power to lift `v_weak` to `v_req`; zero if already there.
pub fn required_reactive(sensitivity: f64, v_req: f64, v_weak: f64) -> f64 {
    (sensitivity * (v_req - v_weak)).max(0.0)
}

/// First active compensator at `bus` able to supply `q_req`.
fn resource_at(resources: &[VvcRecord], bus: BusId, q_req: f64) -> Option<usize> {
    resources
        .iter()
        .position(|v| v.active && v.bus == bus && v.q_available >= q_req)
}

/// Picks a compensator for the report's weak bus: the weak bus itself if
/// it can cover the requirement, else the first bus down the priority list
/// that can cover its own (chain-rule) requirement.
pub fn local_controller(
    report: &VsiReport,
    snap: &PmuSnapshot,
    resources: &[VvcRecord],
    data: &GroupData,
    v_req: f64,
) -> Result<ControlAction, DvsError> {
    let w = report.weak_bus.ok_or(DvsError::NoWeakBus)?;
    let v_weak = report.buses[&w].v_mag;
    let volts = data.node_voltages(snap)?;
    let dqdv = dqdv_at(&data.y, &volts)?;
    let wn = NodeId::Bus(w);

    let mut action = ControlAction {
        group_id: report.group_id.clone(),
        weak_bus: w,
        vvc_bus: None,
        vvc_index: None,
        q_req: 0.0,
        sensitivity: 0.0,
        v_weak,
        v_req,
        status: ActionStatus::InsufficientLocalResources,
    };

    let s_ww = sensitivity_chain(&dqdv, &data.y, wn, wn, &[])?.abs();
    let q_ww = required_reactive(s_ww, v_req, v_weak);
    action.sensitivity = s_ww;
    action.q_req = q_ww;
    if q_ww <= 0.0 {
        action.status = ActionStatus::NoActionNeeded;
        return Ok(action);
    }
    if let Some(k) = resource_at(resources, w, q_ww) {
        action.vvc_bus = Some(w);
        action.vvc_index = Some(k);
        action.status = ActionStatus::Applied;
        return Ok(action);
    }
    for i in data.pi.list(w) {
        let inode = NodeId::Bus(i);
        let Some(path) = shortest_path(&data.y, inode, wn) else {
            continue;
        };
        let s = sensitivity_chain(&dqdv, &data.y, inode, wn, &path)?.abs();
        let q = required_reactive(s, v_req, v_weak);
        if let Some(k) = resource_at(resources, i, q) {
            action.vvc_bus = Some(i);
            action.vvc_index = Some(k);
            action.q_req = q;
            action.sensitivity = s;
            action.status = ActionStatus::Applied;
            return Ok(action);
        }
    }
    Ok(action)
}
