// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{AdmittanceMatrix, PfError};
use crate::gridcase::{BusClass, NodeId};

const CLASSES: [BusClass; 3] = [BusClass::G, BusClass::T, BusClass::L];

/// The admittance matrix split into the nine class blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedY {
    pub blocks: BTreeMap<(BusClass, BusClass), DMatrix<Complex64>>,
    pub class_index: BTreeMap<NodeId, (BusClass, usize)>,
    /// Members of each class, in block order.
    pub members: BTreeMap<BusClass, Vec<NodeId>>,
}

impl PartitionedY {
    pub fn block(&self, r: BusClass, c: BusClass) -> &DMatrix<Complex64> {
        &self.blocks[&(r, c)]
    }

    pub fn members(&self, class: BusClass) -> &[NodeId] {
        &self.members[&class]
    }

    /// Node ordering G, then T, then L.
    pub fn permuted_order(&self) -> Vec<NodeId> {
        CLASSES.iter().flat_map(|c| self.members[c].iter().copied()).collect()
    }

    /// Stacks the blocks back into one matrix under [`Self::permuted_order`].
    pub fn reassemble(&self) -> DMatrix<Complex64> {
        let n: usize = self.members.values().map(Vec::len).sum();
        let mut out = DMatrix::zeros(n, n);
        let mut r0 = 0;
        for rc in CLASSES {
            let mut c0 = 0;
            for cc in CLASSES {
                let b = self.block(rc, cc);
                out.view_mut((r0, c0), b.shape()).copy_from(b);
                c0 += self.members[&cc].len();
            }
            r0 += self.members[&rc].len();
        }
        out
    }
}

/// Extracts the class blocks, each class ordered as in `y`.
pub fn partition_admittance(
    y: &AdmittanceMatrix,
    classes: &BTreeMap<NodeId, BusClass>,
) -> Result<PartitionedY, PfError> {
    let mut members: BTreeMap<BusClass, Vec<NodeId>> = CLASSES.iter().map(|c| (*c, Vec::new())).collect();
    let mut class_index = BTreeMap::new();
    for node in &y.nodes {
        let class = *classes.get(node).ok_or(PfError::Unclassified(*node))?;
        let list = members.get_mut(&class).unwrap();
        class_index.insert(*node, (class, list.len()));
        list.push(*node);
    }
    let mut blocks = BTreeMap::new();
    for rc in CLASSES {
        for cc in CLASSES {
            let rows: Vec<usize> = members[&rc].iter().map(|n| y.bus_index[n]).collect();
            let cols: Vec<usize> = members[&cc].iter().map(|n| y.bus_index[n]).collect();
            let block = DMatrix::from_fn(rows.len(), cols.len(), |i, j| y.entries[(rows[i], cols[j])]);
            blocks.insert((rc, cc), block);
        }
    }
    Ok(PartitionedY {
        blocks,
        class_index,
        members,
    })
}
