// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{BranchId, BusId, BusKind, GridCase, GridError, Group, GroupId};

/// Group id to member buses, as read from a grouping file:
///
/// ```json
/// {"format_version": "1", "groups": {"1": [1, 2, 3], "2": [4, 5]}}
/// ```
pub type Grouping = BTreeMap<GroupId, BTreeSet<BusId>>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupingFile {
    format_version: String,
    groups: Grouping,
}

pub fn parse_grouping(text: &str) -> Result<Grouping, GridError> {
    let file: GroupingFile = serde_json::from_str(text).map_err(|e| GridError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.format_version != super::CASE_FORMAT_VERSION {
        return Err(GridError::FormatVersion {
            found: file.format_version,
            expected: super::CASE_FORMAT_VERSION.to_string(),
        });
    }
    Ok(file.groups)
}

fn tie_branches(case: &GridCase, buses: &BTreeSet<BusId>) -> BTreeSet<BranchId> {
    case.in_service()
        .filter(|(_, br)| buses.contains(&br.from_bus) != buses.contains(&br.to_bus))
        .map(|(k, _)| k)
        .collect()
}

fn diagnostics(case: &GridCase, buses: &BTreeSet<BusId>, ties: &BTreeSet<BranchId>) -> Vec<String> {
    let mut out = Vec::new();
    let kinds: Vec<BusKind> = buses.iter().filter_map(|id| case.bus(*id).map(|b| b.kind)).collect();
    if !kinds.contains(&BusKind::Pq) {
        out.push("group has no load bus".to_string());
    }
    // A tie can become a virtual source once flows are known.
    if !kinds.iter().any(|k| k.is_source()) && ties.is_empty() {
        out.push("group has no generator and no tie for a virtual source".to_string());
    }
    if !case.vvcs.iter().any(|v| buses.contains(&v.bus)) {
        out.push("group has no volt-var compensator".to_string());
    }
    out
}

fn make_group(case: &GridCase, id: GroupId, buses: BTreeSet<BusId>) -> Group {
    let ties = tie_branches(case, &buses);
    let diagnostics = diagnostics(case, &buses, &ties);
    Group {
        id,
        bus_ids: buses,
        tie_branches: ties,
        merged_from: None,
        diagnostics,
    }
}

/// Builds one [`Group`] per entry of a grouping that partitions the case's
/// buses. Groups come back ordered by id.
pub fn apply_grouping(case: &GridCase, grouping: &Grouping) -> Result<Vec<Group>, GridError> {
    let all = case.bus_ids();
    let mut owner: BTreeMap<BusId, &GroupId> = BTreeMap::new();
    for (gid, buses) in grouping {
        if buses.is_empty() {
            return Err(GridError::NotPartition(format!("group {gid} is empty")));
        }
        for b in buses {
            if !all.contains(b) {
                return Err(GridError::NotPartition(format!(
                    "group {gid} names bus {b}, which is not in the case"
                )));
            }
            if let Some(prev) = owner.insert(*b, gid) {
                return Err(GridError::NotPartition(format!(
                    "bus {b} is in both group {prev} and group {gid}"
                )));
            }
        }
    }
    let missing: Vec<BusId> = all.iter().filter(|b| !owner.contains_key(b)).copied().collect();
    if !missing.is_empty() {
        return Err(GridError::NotPartition(format!("buses {missing:?} belong to no group")));
    }
    Ok(grouping
        .iter()
        .map(|(gid, buses)| make_group(case, gid.clone(), buses.clone()))
        .collect())
}

/// Union of two adjacent groups; ties are recomputed, so the branches
/// between them become interior.
pub fn merge_groups(case: &GridCase, a: &Group, b: &Group) -> Result<Group, GridError> {
    if !a.is_adjacent(b) {
        return Err(GridError::NotAdjacent(a.id.clone(), b.id.clone()));
    }
    let (lo, hi) = if a.id <= b.id { (a, b) } else { (b, a) };
    let buses: BTreeSet<BusId> = lo.bus_ids.union(&hi.bus_ids).copied().collect();
    let mut g = make_group(case, GroupId::merged(&lo.id, &hi.id), buses);
    g.merged_from = Some((lo.id.clone(), hi.id.clone()));
    Ok(g)
}
