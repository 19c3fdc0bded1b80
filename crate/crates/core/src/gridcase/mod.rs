// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Power-grid case data: buses, branches, generators and volt-var
//! compensators, plus the grouping of buses into monitoring groups.
//!
//! In memory every quantity is per-unit on the system MVA base and angles
//! are in radians. The on-disk case format (see [`parse_case`]) uses the
//! conventional table units instead: MW / MVAr for powers and shunts, and
//! degrees for angles. Branch impedances are per-unit in both.

mod grouping;
mod parse;
mod validate;
mod virtualize;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use grouping::{apply_grouping, merge_groups, parse_grouping, Grouping};
pub use parse::{parse_case, write_case, CASE_FORMAT_VERSION};
pub use validate::{validate_case, Violation, ViolationKind};
pub use virtualize::{
    classify_buses, tie_flow, virtualize_ties, BusClass, NodeId, TieFlow, VirtualBus, VirtualKind, VirtualizedGroup,
};

/// Bus number as it appears in the case tables.
pub type BusId = u32;

/// Position of a branch in [`GridCase::branches`].
pub type BranchId = usize;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format_version {found:?} (expected {expected:?})")]
    FormatVersion { found: String, expected: String },
    #[error("referential integrity: {0}")]
    Reference(Violation),
    #[error("grouping is not a partition: {0}")]
    NotPartition(String),
    #[error("missing flow for tie branch {0}")]
    MissingFlow(BranchId),
    #[error("group {0} is not adjacent to group {1}")]
    NotAdjacent(GroupId, GroupId),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("scale factor must be finite and non-negative, got {0}")]
    NegativeFactor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: BusId,
    pub kind: BusKind,
    pub p_demand: f64,
    pub q_demand: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub v_mag: f64,
    pub v_ang: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub status: bool,
}

impl BranchRecord {
    pub fn impedance(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.r, self.x)
    }

    /// The endpoint opposite `bus`, if `bus` is an endpoint at all.
    pub fn other_end(&self, bus: BusId) -> Option<BusId> {
        if self.from_bus == bus {
            Some(self.to_bus)
        } else if self.to_bus == bus {
            Some(self.from_bus)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRecord {
    pub bus: BusId,
    pub p_gen: f64,
    pub q_gen: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_set: f64,
}

/// A volt-var compensator: a controllable reactive source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VvcRecord {
    pub bus: BusId,
    pub q_available: f64,
    pub q_injected: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub gens: Vec<GenRecord>,
    pub vvcs: Vec<VvcRecord>,
}

impl GridCase {
    pub fn bus(&self, id: BusId) -> Option<&BusRecord> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_ids(&self) -> BTreeSet<BusId> {
        self.buses.iter().map(|b| b.id).collect()
    }

    pub fn in_service(&self) -> impl Iterator<Item = (BranchId, &BranchRecord)> {
        self.branches.iter().enumerate().filter(|(_, br)| br.status)
    }

    /// Reactive power currently injected by active compensators at `bus`.
    pub fn vvc_injection(&self, bus: BusId) -> f64 {
        self.vvcs
            .iter()
            .filter(|v| v.active && v.bus == bus)
            .map(|v| v.q_injected)
            .sum()
    }

    /// Load seen at `bus`: demand minus compensator injection.
    pub fn net_load(&self, bus: &BusRecord) -> num_complex::Complex64 {
        num_complex::Complex64::new(bus.p_demand, bus.q_demand - self.vvc_injection(bus.id))
    }

    /// Buses whose voltage magnitude is held by a source.
    pub fn source_buses(&self) -> BTreeSet<BusId> {
        self.buses
            .iter()
            .filter(|b| matches!(b.kind, BusKind::Slack | BusKind::Pv))
            .map(|b| b.id)
            .collect()
    }

    /// SHA-256 over the canonical serialization; keys caches of derived
    /// matrices, which are invalid once the topology changes.
    pub fn content_hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("case serializes");
        Sha256::digest(&bytes).into()
    }

    /// Multiplies demand at `buses` by `factor` at constant power factor.
    pub fn scale_load(&self, buses: &BTreeSet<BusId>, factor: f64) -> Result<GridCase, GridError> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(GridError::NegativeFactor(factor));
        }
        for id in buses {
            if self.bus(*id).is_none() {
                return Err(GridError::UnknownBus(*id));
            }
        }
        let mut out = self.clone();
        for bus in out.buses.iter_mut().filter(|b| buses.contains(&b.id)) {
            bus.p_demand *= factor;
            bus.q_demand *= factor;
        }
        Ok(out)
    }
}

/// Identifier of a monitoring group. Merged groups use `"a+b"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub String);

impl GroupId {
    pub fn new(id: impl Into<String>) -> Self {
        GroupId(id.into())
    }

    /// Id of the merge product of `a` and `b`, independent of argument order.
    pub fn merged(a: &GroupId, b: &GroupId) -> GroupId {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        GroupId(format!("{}+{}", lo.0, hi.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GroupId {
    fn from(s: &str) -> Self {
        GroupId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    pub bus_ids: BTreeSet<BusId>,
    pub tie_branches: BTreeSet<BranchId>,
    pub merged_from: Option<(GroupId, GroupId)>,
    /// Minimum-content findings; informational only.
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl Group {
    pub fn contains(&self, bus: BusId) -> bool {
        self.bus_ids.contains(&bus)
    }

    pub fn is_merged(&self) -> bool {
        self.merged_from.is_some()
    }

    /// Total spare reactive capacity of active compensators inside the group.
    pub fn q_available(&self, vvcs: &[VvcRecord]) -> f64 {
        vvcs.iter()
            .filter(|v| v.active && self.contains(v.bus))
            .map(|v| v.q_available)
            .sum()
    }

    pub fn is_adjacent(&self, other: &Group) -> bool {
        self.tie_branches.intersection(&other.tie_branches).next().is_some()
    }
}
