// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PfError;
use crate::gridcase::{BranchRecord, BusId, BusRecord, GridCase, NodeId, VirtualizedGroup};

/// Dense nodal admittance matrix with its node ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceMatrix {
    pub order: usize,
    pub entries: DMatrix<Complex64>,
    pub nodes: Vec<NodeId>,
    pub bus_index: BTreeMap<NodeId, usize>,
}

impl AdmittanceMatrix {
    fn zeros(nodes: Vec<NodeId>) -> Self {
        let order = nodes.len();
        let bus_index = nodes.iter().enumerate().map(|(k, n)| (*n, k)).collect();
        AdmittanceMatrix {
            order,
            entries: DMatrix::zeros(order, order),
            nodes,
            bus_index,
        }
    }

    pub fn index(&self, node: NodeId) -> Option<usize> {
        self.bus_index.get(&node).copied()
    }

    pub fn index_of_bus(&self, bus: BusId) -> Option<usize> {
        self.index(NodeId::Bus(bus))
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Complex64 {
        match (self.index(a), self.index(b)) {
            (Some(i), Some(j)) => self.entries[(i, j)],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// True when `a` and `b` are distinct and joined by a nonzero entry.
    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.get(a, b).norm() > 0.0
    }

    /// Nodes sharing a nonzero off-diagonal entry with `node`, in order.
    pub fn neighbors(&self, node: NodeId) -> Vec<NodeId> {
        let Some(i) = self.index(node) else {
            return Vec::new();
        };
        (0..self.order)
            .filter(|&j| j != i && self.entries[(i, j)].norm() > 0.0)
            .map(|j| self.nodes[j])
            .collect()
    }

    fn add_series(&mut self, a: usize, b: usize, y: Complex64) {
        self.entries[(a, a)] += y;
        self.entries[(b, b)] += y;
        self.entries[(a, b)] -= y;
        self.entries[(b, a)] -= y;
    }

    fn add_shunt(&mut self, a: usize, y: Complex64) {
        self.entries[(a, a)] += y;
    }

    pub fn scaled(&self, k: f64) -> AdmittanceMatrix {
        AdmittanceMatrix {
            entries: self.entries.map(|v| v * k),
            ..self.clone()
        }
    }
}

fn series_admittance(k: usize, br: &BranchRecord) -> Result<Complex64, PfError> {
    let z = br.impedance();
    if z.norm() == 0.0 {
        return Err(PfError::ZeroImpedance(k));
    }
    Ok(z.inv())
}

/// Pi-model admittance over in-service branches; half of each branch's
/// charging susceptance lands on each endpoint.
pub fn build_admittance(buses: &[BusRecord], branches: &[BranchRecord]) -> Result<AdmittanceMatrix, PfError> {
    let mut ids: Vec<BusId> = buses.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    let mut y = AdmittanceMatrix::zeros(ids.iter().map(|b| NodeId::Bus(*b)).collect());
    for bus in buses {
        let i = y.index_of_bus(bus.id).unwrap();
        y.add_shunt(i, Complex64::new(bus.g_shunt, bus.b_shunt));
    }
    for (k, br) in branches.iter().enumerate().filter(|(_, br)| br.status) {
        let ys = series_admittance(k, br)?;
        let f = y.index_of_bus(br.from_bus).ok_or(PfError::UnknownBus(br.from_bus))?;
        let t = y.index_of_bus(br.to_bus).ok_or(PfError::UnknownBus(br.to_bus))?;
        y.add_series(f, t, ys);
        let half = Complex64::new(0.0, br.b_charging * 0.5);
        y.add_shunt(f, half);
        y.add_shunt(t, half);
    }
    Ok(y)
}

pub fn case_admittance(case: &GridCase) -> Result<AdmittanceMatrix, PfError> {
    build_admittance(&case.buses, &case.branches)
}

/// Admittance of a group network: the group's buses and interior branches
/// plus, per tie, a half line from the boundary bus to a virtual node.
pub fn group_admittance(case: &GridCase, vgroup: &VirtualizedGroup) -> Result<AdmittanceMatrix, PfError> {
    let group = &vgroup.group;
    let mut y = AdmittanceMatrix::zeros(vgroup.nodes());
    for bus in case.buses.iter().filter(|b| group.contains(b.id)) {
        let i = y.index_of_bus(bus.id).unwrap();
        y.add_shunt(i, Complex64::new(bus.g_shunt, bus.b_shunt));
    }
    for (k, br) in case.in_service() {
        if !(group.contains(br.from_bus) && group.contains(br.to_bus)) {
            continue;
        }
        let ys = series_admittance(k, br)?;
        let f = y.index_of_bus(br.from_bus).unwrap();
        let t = y.index_of_bus(br.to_bus).unwrap();
        y.add_series(f, t, ys);
        let half = Complex64::new(0.0, br.b_charging * 0.5);
        y.add_shunt(f, half);
        y.add_shunt(t, half);
    }
    for vb in &vgroup.virtual_buses {
        if vb.z_mid.norm() == 0.0 {
            return Err(PfError::ZeroImpedance(vb.branch_id));
        }
        let b = y.index_of_bus(vb.boundary_bus).unwrap();
        let v = y.index(NodeId::Virtual(vb.branch_id)).unwrap();
        y.add_series(b, v, vb.z_mid.inv());
        y.add_shunt(b, Complex64::new(0.0, vb.b_end));
    }
    Ok(y)
}
