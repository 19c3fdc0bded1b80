// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{max_transfer, thevenin, vsi_from, DvsError, GroupData};
use crate::gridcase::{BusId, GroupId};
use crate::powerflow::{partition_admittance, PmuSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusVsi {
    pub vsi: f64,
    pub p_load: f64,
    pub q_load: f64,
    pub s_load: f64,
    pub p_max: f64,
    pub q_max: f64,
    pub s_max: f64,
    pub v_mag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsiReport {
    pub group_id: GroupId,
    pub timestamp: u64,
    pub buses: BTreeMap<BusId, BusVsi>,
    /// Load buses ascending by (VSI, bus id).
    pub sorted_buses: Vec<BusId>,
    pub min_vsi: f64,
    pub weak_bus: Option<BusId>,
    pub threshold: f64,
}

impl VsiReport {
    /// True when the weakest bus is at or below the threshold.
    pub fn flagged(&self) -> bool {
        self.weak_bus.is_some() && self.min_vsi <= self.threshold
    }

    pub fn weak_voltage(&self) -> Option<f64> {
        self.weak_bus.map(|b| self.buses[&b].v_mag)
    }
}

fn key_cmp(a: &(BusId, f64), b: &(BusId, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// Shell sort with Knuth's gaps (3^k − 1)/2: 1, 4, 13, 40, ... Orders by
/// VSI, ties by bus id.
pub fn shell_sort(values: &[(BusId, f64)]) -> Vec<(BusId, f64)> {
    let mut v = values.to_vec();
    let n = v.len();
    let mut gap = 1;
    while gap < n / 3 {
        gap = 3 * gap + 1;
    }
    while gap >= 1 {
        for i in gap..n {
            let item = v[i];
            let mut j = i;
            while j >= gap && key_cmp(&v[j - gap], &item) == Ordering::Greater {
                v[j] = v[j - gap];
                j -= gap;
            }
            v[j] = item;
        }
        gap /= 3;
    }
    v
}

/// VSI for every load bus of the group measured by `snap`.
pub fn compute_vsi(snap: &PmuSnapshot, data: &GroupData, threshold: f64) -> Result<VsiReport, DvsError> {
    if snap.group_id != data.group.id {
        return Err(DvsError::StaleGroupData {
            snapshot: snap.group_id.clone(),
            record: data.group.id.clone(),
        });
    }
    let classes = data.classes_for(snap)?;
    let part = partition_admittance(&data.y, &classes)?;
    let params = thevenin(snap, &part)?;
    let mut buses = BTreeMap::new();
    for th in &params {
        let load = snap.s_load.get(&th.load_bus).copied().unwrap_or_default();
        let lim = max_transfer(th, load);
        buses.insert(
            th.load_bus,
            BusVsi {
                vsi: vsi_from(&lim, load),
                p_load: load.re,
                q_load: load.im,
                s_load: load.norm(),
                p_max: lim.p_max,
                q_max: lim.q_max,
                s_max: lim.s_max,
                v_mag: snap.v_phasor[&th.load_bus].norm(),
            },
        );
    }
    let pairs: Vec<(BusId, f64)> = buses.iter().map(|(b, r)| (*b, r.vsi)).collect();
    let sorted = shell_sort(&pairs);
    let (weak_bus, min_vsi) = match sorted.first() {
        Some((b, v)) => (Some(*b), *v),
        None => (None, 1.0),
    };
    Ok(VsiReport {
        group_id: data.group.id.clone(),
        timestamp: snap.timestamp,
        buses,
        sorted_buses: sorted.into_iter().map(|(b, _)| b).collect(),
        min_vsi,
        weak_bus,
        threshold,
    })
}
