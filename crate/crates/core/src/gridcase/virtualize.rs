// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Tie-line virtualization. Each tie branch is cut at its midpoint; the
//! group keeps the near half (series impedance z/2, the near-end charging
//! b/2) and the far side is replaced by a virtual bus at the midpoint. A
//! group importing over the tie sees a virtual generator (PV), a group
//! exporting sees a virtual load (PQ).

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BranchId, BusId, GridCase, GridError, Group};

/// Bus class used to partition the admittance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BusClass {
    G,
    T,
    L,
}

/// A node of a group network: a real bus or the midpoint of a tie branch.
/// Serialized as its display form ("12" or "v5") so it can key JSON maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NodeId {
    Bus(BusId),
    Virtual(BranchId),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Bus(b) => write!(f, "{b}"),
            NodeId::Virtual(k) => write!(f, "v{k}"),
        }
    }
}

impl From<NodeId> for String {
    fn from(n: NodeId) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for NodeId {
    type Error = String;

    fn try_from(s: String) -> Result<NodeId, String> {
        let bad = |_| format!("bad node id {s:?}");
        match s.strip_prefix('v') {
            Some(k) => k.parse().map(NodeId::Virtual).map_err(bad),
            None => s.parse().map(NodeId::Bus).map_err(bad),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VirtualKind {
    VirtualPq,
    VirtualPv,
}

/// Complex power crossing a tie at its midpoint, signed as seen by one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieFlow {
    /// Power flowing into the group (p.u.); negative real part is export.
    pub s_into: Complex64,
    /// Voltage at the tie midpoint.
    pub v_mid: Complex64,
}

impl TieFlow {
    pub fn is_import(&self) -> bool {
        self.s_into.re > 0.0
    }
}

/// Midpoint flow of tie `branch` into `group`, from the end voltages.
pub fn tie_flow(case: &GridCase, group: &Group, branch: BranchId, v_from: Complex64, v_to: Complex64) -> TieFlow {
    let br = &case.branches[branch];
    let i_series = (v_from - v_to) / br.impedance();
    let v_mid = (v_from + v_to) * 0.5;
    let s_from_to = v_mid * i_series.conj();
    let s_into = if group.contains(br.to_bus) {
        s_from_to
    } else {
        -s_from_to
    };
    TieFlow { s_into, v_mid }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualBus {
    pub branch_id: BranchId,
    pub kind: VirtualKind,
    /// Group-side endpoint of the tie.
    pub boundary_bus: BusId,
    /// Series impedance between `boundary_bus` and the midpoint: z/2.
    pub z_mid: Complex64,
    /// Charging susceptance kept at `boundary_bus`: b/2.
    pub b_end: f64,
    /// Measured midpoint flow into the group.
    pub injection: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualizedGroup {
    pub group: Group,
    pub virtual_buses: Vec<VirtualBus>,
    pub classes: BTreeMap<NodeId, BusClass>,
}

impl VirtualizedGroup {
    /// Group-network nodes: real buses ascending, then virtual buses by branch.
    pub fn nodes(&self) -> Vec<NodeId> {
        self.group
            .bus_ids
            .iter()
            .map(|b| NodeId::Bus(*b))
            .chain(self.virtual_buses.iter().map(|v| NodeId::Virtual(v.branch_id)))
            .collect()
    }

    pub fn class_of(&self, node: NodeId) -> Option<BusClass> {
        self.classes.get(&node).copied()
    }

    pub fn load_buses(&self) -> Vec<BusId> {
        self.classes
            .iter()
            .filter_map(|(n, c)| match (n, c) {
                (NodeId::Bus(b), BusClass::L) => Some(*b),
                _ => None,
            })
            .collect()
    }
}

/// G for slack and PV buses, T for other group-side tie endpoints, L for
/// the rest. A source on a tie stays G.
pub fn classify_buses(case: &GridCase, group: &Group) -> BTreeMap<BusId, BusClass> {
    let mut out: BTreeMap<BusId, BusClass> = group.bus_ids.iter().map(|b| (*b, BusClass::L)).collect();
    for &k in &group.tie_branches {
        let br = &case.branches[k];
        for end in [br.from_bus, br.to_bus] {
            if let Some(c) = out.get_mut(&end) {
                *c = BusClass::T;
            }
        }
    }
    for bus in &case.buses {
        if bus.kind.is_source() {
            if let Some(c) = out.get_mut(&bus.id) {
                *c = BusClass::G;
            }
        }
    }
    out
}

/// Replaces every tie of `group` by a virtual bus typed by flow direction.
pub fn virtualize_ties(
    case: &GridCase,
    group: &Group,
    flows: &BTreeMap<BranchId, TieFlow>,
) -> Result<VirtualizedGroup, GridError> {
    let mut classes: BTreeMap<NodeId, BusClass> = classify_buses(case, group)
        .into_iter()
        .map(|(b, c)| (NodeId::Bus(b), c))
        .collect();
    let mut virtual_buses = Vec::with_capacity(group.tie_branches.len());
    for &k in &group.tie_branches {
        let flow = flows.get(&k).ok_or(GridError::MissingFlow(k))?;
        let br = &case.branches[k];
        let boundary_bus = if group.contains(br.from_bus) {
            br.from_bus
        } else {
            br.to_bus
        };
        let kind = if flow.is_import() {
            VirtualKind::VirtualPv
        } else {
            VirtualKind::VirtualPq
        };
        classes.insert(
            NodeId::Virtual(k),
            match kind {
                VirtualKind::VirtualPv => BusClass::G,
                VirtualKind::VirtualPq => BusClass::T,
            },
        );
        virtual_buses.push(VirtualBus {
            branch_id: k,
            kind,
            boundary_bus,
            z_mid: br.impedance() * 0.5,
            b_end: br.b_charging * 0.5,
            injection: flow.s_into,
        });
    }
    Ok(VirtualizedGroup {
        group: group.clone(),
        virtual_buses,
        classes,
    })
}
