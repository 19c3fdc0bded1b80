// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{polar_jacobian, AdmittanceMatrix, PfError, PowerFlowSolution};
use crate::gridcase::NodeId;

/// ∂Q/∂|V| over the nodes of an admittance matrix, angles held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqDv {
    pub nodes: Vec<NodeId>,
    pub matrix: DMatrix<f64>,
}

impl DqDv {
    pub fn index(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| *n == node)
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> Option<f64> {
        Some(self.matrix[(self.index(i)?, self.index(j)?)])
    }
}

/// Jacobian block at the given node voltages. Every node of `y` needs a
/// voltage.
pub fn dqdv_at(y: &AdmittanceMatrix, v: &BTreeMap<NodeId, Complex64>) -> Result<DqDv, PfError> {
    let volts: Vec<Complex64> = y
        .nodes
        .iter()
        .map(|n| v.get(n).copied().ok_or(PfError::MissingVoltage(*n)))
        .collect::<Result<_, _>>()?;
    let (_, _, _, q_v) = polar_jacobian(&y.entries, &volts);
    Ok(DqDv {
        nodes: y.nodes.clone(),
        matrix: q_v,
    })
}

/// ∂Q/∂|V| of a converged case-wide solution.
pub fn jacobian_dqdv(solution: &PowerFlowSolution, y: &AdmittanceMatrix) -> Result<DqDv, PfError> {
    if !solution.converged {
        return Err(PfError::NotConverged);
    }
    let v = solution
        .bus_ids
        .iter()
        .zip(&solution.v)
        .map(|(b, v)| (NodeId::Bus(*b), *v))
        .collect();
    dqdv_at(y, &v)
}

/// Effective ∂Q_i/∂V_w along `path` (from `i` to `w`). Each interior hop
/// contributes the voltage ratio implied by holding that node's reactive
/// injection constant: ∂V_k/∂V_{k+1} = −J[k][k+1] / J[k][k]. A path of at
/// most one node means `i = w` and yields the diagonal entry.
pub fn sensitivity_chain(
    dqdv: &DqDv,
    y: &AdmittanceMatrix,
    i: NodeId,
    w: NodeId,
    path: &[NodeId],
) -> Result<f64, PfError> {
    let entry = |a: NodeId, b: NodeId| dqdv.get(a, b).ok_or(PfError::BrokenPath(a, b));
    if path.len() <= 1 {
        if i != w || path.first().is_some_and(|p| *p != w) {
            return Err(PfError::BrokenPath(i, w));
        }
        return entry(w, w);
    }
    if path[0] != i || *path.last().unwrap() != w {
        return Err(PfError::BrokenPath(i, w));
    }
    for pair in path.windows(2) {
        if !y.adjacent(pair[0], pair[1]) {
            return Err(PfError::BrokenPath(pair[0], pair[1]));
        }
    }
    let mut s = entry(path[0], path[1])?;
    for m in 1..path.len() - 1 {
        let diag = entry(path[m], path[m])?;
        s *= -entry(path[m], path[m + 1])? / diag;
    }
    Ok(s)
}

/// Fewest-hop path between two nodes; among equal hop counts the one with
/// the smallest summed branch impedance magnitude |1/Y_ij|.
pub fn shortest_path(y: &AdmittanceMatrix, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
    let n = y.order;
    let s = y.index(from)?;
    let t = y.index(to)?;
    let mut best: Vec<Option<(usize, f64)>> = vec![None; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    best[s] = Some((0, 0.0));
    let better = |a: (usize, f64), b: (usize, f64)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    loop {
        let mut pick: Option<usize> = None;
        for k in 0..n {
            if done[k] {
                continue;
            }
            if let Some(c) = best[k] {
                if pick.is_none_or(|p| better(c, best[p].unwrap())) {
                    pick = Some(k);
                }
            }
        }
        let Some(u) = pick else { break };
        if u == t {
            break;
        }
        done[u] = true;
        let (hops, cost) = best[u].unwrap();
        for v in 0..n {
            let yuv = y.entries[(u, v)];
            if v == u || done[v] || yuv.norm() == 0.0 {
                continue;
            }
            let cand = (hops + 1, cost + 1.0 / yuv.norm());
            if best[v].is_none_or(|b| better(cand, b)) {
                best[v] = Some(cand);
                prev[v] = Some(u);
            }
        }
    }
    best[t]?;
    let mut path = vec![t];
    while let Some(p) = prev[*path.last().unwrap()] {
        path.push(p);
    }
    path.reverse();
    Some(path.into_iter().map(|k| y.nodes[k]).collect())
}
