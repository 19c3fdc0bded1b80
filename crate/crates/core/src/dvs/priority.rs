// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DvsError;
use crate::gridcase::{BusId, Group, GroupId, NodeId};
use crate::powerflow::AdmittanceMatrix;

/// Candidate injection buses per weak bus, nearest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PIMatrix {
    pub group_id: GroupId,
    pub ranking: BTreeMap<BusId, Vec<BusId>>,
    pub distances: BTreeMap<BusId, BTreeMap<BusId, f64>>,
    /// Generator bus grounded to make the group matrix invertible, if any.
    pub grounded: Option<BusId>,
}

impl PIMatrix {
    pub fn distance(&self, a: BusId, b: BusId) -> Option<f64> {
        self.distances.get(&a)?.get(&b).copied()
    }

    /// Ranked candidates for `weak`, excluding `weak` itself.
    pub fn list(&self, weak: BusId) -> Vec<BusId> {
        self.ranking
            .get(&weak)
            .map(|r| r.iter().copied().filter(|b| *b != weak).collect())
            .unwrap_or_default()
    }
}

fn invert_checked(m: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = m.nrows();
    let inv = m.clone().try_inverse()?;
    let resid = (m * &inv - DMatrix::<Complex64>::identity(n, n)).norm();
    (resid.is_finite() && resid < 1e-8 * (n.max(1) as f64)).then_some(inv)
}

/// Ranks, for every bus w of the group, all group buses by electrical
/// distance d(i, j) = |Z_ii + Z_jj − 2 Z_ij| with Z the inverse of `y`
/// restricted to the group. `w` comes first, then its branch neighbours,
/// then everyone else; ties go to the lower bus id.
pub fn priority_index(
    y: &AdmittanceMatrix,
    group: &Group,
    generator_buses: &BTreeSet<BusId>,
) -> Result<PIMatrix, DvsError> {
    let buses: Vec<BusId> = group.bus_ids.iter().copied().collect();
    let idx: Vec<usize> = buses
        .iter()
        .map(|b| y.index_of_bus(*b).ok_or(DvsError::UnknownBus(*b)))
        .collect::<Result<_, _>>()?;
    let sub = |keep: &[usize]| DMatrix::from_fn(keep.len(), keep.len(), |i, j| y.entries[(idx[keep[i]], idx[keep[j]])]);

    let all: Vec<usize> = (0..buses.len()).collect();
    let (z_of, grounded) = match invert_checked(&sub(&all)) {
        Some(z) => (z, None),
        None => {
            let g = *buses
                .iter()
                .rev()
                .find(|b| generator_buses.contains(b))
                .ok_or(DvsError::SingularGroupAdmittance(group.id.clone()))?;
            let keep: Vec<usize> = all.iter().copied().filter(|&k| buses[k] != g).collect();
            let zr = invert_checked(&sub(&keep)).ok_or(DvsError::SingularGroupAdmittance(group.id.clone()))?;
            // The grounded bus is the reference: its row and column are zero.
            let mut z = DMatrix::zeros(buses.len(), buses.len());
            for (a, &i) in keep.iter().enumerate() {
                for (b, &j) in keep.iter().enumerate() {
                    z[(i, j)] = zr[(a, b)];
                }
            }
            (z, Some(g))
        }
    };

    let mut distances = BTreeMap::new();
    let mut ranking = BTreeMap::new();
    for (a, &w) in buses.iter().enumerate() {
        let mut row = BTreeMap::new();
        for (b, &j) in buses.iter().enumerate() {
            let d = if a == b {
                0.0
            } else {
                (z_of[(a, a)] + z_of[(b, b)] - z_of[(a, b)] * 2.0).norm()
            };
            row.insert(j, d);
        }
        let adjacent = |j: BusId| y.adjacent(NodeId::Bus(w), NodeId::Bus(j));
        let tier = |j: BusId| {
            if j == w {
                0
            } else if adjacent(j) {
                1
            } else {
                2
            }
        };
        let mut order: Vec<BusId> = buses.clone();
        order.sort_by(|&p, &q| tier(p).cmp(&tier(q)).then(row[&p].total_cmp(&row[&q])).then(p.cmp(&q)));
        ranking.insert(w, order);
        distances.insert(w, row);
    }
    Ok(PIMatrix {
        group_id: group.id.clone(),
        ranking,
        distances,
        grounded,
    })
}
