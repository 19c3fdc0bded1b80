// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Admittance matrices, AC power flow, reactive sensitivities and PMU
//! snapshots.

mod admittance;
mod partition;
mod sensitivity;
mod snapshot;
mod solver;

use std::collections::BTreeSet;

pub use admittance::{build_admittance, case_admittance, group_admittance, AdmittanceMatrix};
pub use partition::{partition_admittance, PartitionedY};
pub use sensitivity::{dqdv_at, jacobian_dqdv, sensitivity_chain, shortest_path, DqDv};
pub use snapshot::{make_snapshot, PmuSnapshot};
pub(crate) use solver::polar_jacobian;
pub use solver::{solve_powerflow, solve_with_admittance, PowerFlowSolution, SolveOptions};

use crate::gridcase::{BranchId, BusId, GridCase, GridError, NodeId};

#[derive(Debug, thiserror::Error)]
pub enum PfError {
    #[error("branch {0} has zero impedance")]
    ZeroImpedance(BranchId),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("node {0} has no class")]
    Unclassified(NodeId),
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("power flow did not converge")]
    NotConverged,
    #[error("no voltage for node {0}")]
    MissingVoltage(NodeId),
    #[error("path broken between {0} and {1}")]
    BrokenPath(NodeId, NodeId),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Load scaling at constant power factor; see [`GridCase::scale_load`].
pub fn scale_load(case: &GridCase, buses: &BTreeSet<BusId>, factor: f64) -> Result<GridCase, GridError> {
    case.scale_load(buses, factor)
}
