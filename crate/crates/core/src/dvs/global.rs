// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use super::{DvsError, VsiReport};
use crate::gridcase::{Group, GroupId, VvcRecord};

/// Merges `requesting` with the adjacent group holding the most spare
/// compensation (lower id on ties).
pub fn global_controller(requesting: &GroupId, groups: &[Group], vvcs: &[VvcRecord]) -> Result<Group, DvsError> {
    let req = groups
        .iter()
        .find(|g| &g.id == requesting)
        .ok_or_else(|| DvsError::UnknownGroup(requesting.clone()))?;
    let mut neighbours: Vec<&Group> = groups.iter().filter(|g| g.id != req.id && g.is_adjacent(req)).collect();
    if neighbours.is_empty() {
        return Err(DvsError::NoAdjacentGroup(req.id.clone()));
    }
    neighbours.sort_by(|a, b| a.id.cmp(&b.id));
    let mut best: Option<(&Group, f64)> = None;
    for g in neighbours {
        let q = g.q_available(vvcs);
        if q > 0.0 && best.is_none_or(|(_, bq)| q > bq) {
            best = Some((g, q));
        }
    }
    let (partner, _) = best.ok_or_else(|| DvsError::NoAdjacentResources(req.id.clone()))?;
    Ok(merge_pair(req, partner))
}

/// Union of two groups; shared ties become interior.
pub fn merge_pair(a: &Group, b: &Group) -> Group {
    let (lo, hi) = if a.id <= b.id { (a, b) } else { (b, a) };
    Group {
        id: GroupId::merged(&lo.id, &hi.id),
        bus_ids: lo.bus_ids.union(&hi.bus_ids).copied().collect(),
        tie_branches: lo
            .tie_branches
            .symmetric_difference(&hi.tie_branches)
            .copied()
            .collect(),
        merged_from: Some((lo.id.clone(), hi.id.clone())),
        diagnostics: Vec::new(),
    }
}

/// Restores the two constituents of a stabilized merged group.
pub fn split_group(merged: &Group, report: &VsiReport, groups: &[Group]) -> Result<(Group, Group), DvsError> {
    let (a, b) = merged
        .merged_from
        .as_ref()
        .ok_or_else(|| DvsError::NotMerged(merged.id.clone()))?;
    if report.min_vsi <= report.threshold {
        return Err(DvsError::StillUnstable {
            group: merged.id.clone(),
            min_vsi: report.min_vsi,
        });
    }
    let find = |id: &GroupId| {
        groups
            .iter()
            .find(|g| &g.id == id)
            .cloned()
            .ok_or_else(|| DvsError::UnknownGroup(id.clone()))
    };
    Ok((find(a)?, find(b)?))
}
