// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Case-file reader and writer.
//!
//! ```json
//! {
//!   "format_version": "1",
//!   "base_mva": 100.0,
//!   "buses":    [{"id": 1, "kind": "slack", "p_demand": 0.0, "q_demand": 0.0,
//!                 "g_shunt": 0.0, "b_shunt": 0.0, "v_mag": 1.06, "v_ang": 0.0,
//!                 "base_kv": 135.0}],
//!   "branches": [{"from_bus": 1, "to_bus": 2, "r": 0.02, "x": 0.06,
//!                 "b_charging": 0.03, "status": true}],
//!   "gens":     [{"bus": 1, "p_gen": 23.5, "q_gen": 0.0, "q_min": -20.0,
//!                 "q_max": 150.0, "v_set": 1.06}],
//!   "vvcs":     [{"bus": 7, "q_available": 10.0, "q_injected": 0.0, "active": true}]
//! }
//! ```
//!
//! Powers and shunts are MW / MVAr (shunts at 1 p.u. voltage), angles are
//! degrees, voltages and branch parameters are per-unit.

use serde::{Deserialize, Serialize};

use super::{
    validate::{reference_violations, Violation},
    BranchRecord, BusKind, BusRecord, GenRecord, GridCase, GridError, VvcRecord,
};

pub const CASE_FORMAT_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    format_version: String,
    base_mva: f64,
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
    #[serde(default)]
    gens: Vec<GenRecord>,
    #[serde(default)]
    vvcs: Vec<VvcRecord>,
}

/// Parses a case file and converts it to per-unit / radians.
pub fn parse_case(text: &str) -> Result<GridCase, GridError> {
    let file: CaseFile = serde_json::from_str(text).map_err(|e| GridError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.format_version != CASE_FORMAT_VERSION {
        return Err(GridError::FormatVersion {
            found: file.format_version,
            expected: CASE_FORMAT_VERSION.to_string(),
        });
    }
    if !(file.base_mva.is_finite() && file.base_mva > 0.0) {
        return Err(GridError::Reference(Violation::new(
            "case",
            super::ViolationKind::NonFinite,
            format!("base_mva must be positive, got {}", file.base_mva),
        )));
    }
    let base = file.base_mva;
    let buses = file
        .buses
        .into_iter()
        .map(|b| BusRecord {
            p_demand: b.p_demand / base,
            q_demand: b.q_demand / base,
            g_shunt: b.g_shunt / base,
            b_shunt: b.b_shunt / base,
            v_ang: b.v_ang.to_radians(),
            ..b
        })
        .collect();
    let gens = file
        .gens
        .into_iter()
        .map(|g| GenRecord {
            p_gen: g.p_gen / base,
            q_gen: g.q_gen / base,
            q_min: g.q_min / base,
            q_max: g.q_max / base,
            ..g
        })
        .collect();
    let vvcs = file
        .vvcs
        .into_iter()
        .map(|v| VvcRecord {
            q_available: v.q_available / base,
            q_injected: v.q_injected / base,
            ..v
        })
        .collect();
    let case = GridCase {
        base_mva: base,
        buses,
        branches: file.branches,
        gens,
        vvcs,
    };
    if let Some(v) = reference_violations(&case).into_iter().next() {
        return Err(GridError::Reference(v));
    }
    Ok(case)
}

/// Inverse of [`parse_case`]: emits the on-disk units.
pub fn write_case(case: &GridCase) -> String {
    let base = case.base_mva;
    let file = CaseFile {
        format_version: CASE_FORMAT_VERSION.to_string(),
        base_mva: base,
        buses: case
            .buses
            .iter()
            .map(|b| BusRecord {
                p_demand: b.p_demand * base,
                q_demand: b.q_demand * base,
                g_shunt: b.g_shunt * base,
                b_shunt: b.b_shunt * base,
                v_ang: b.v_ang.to_degrees(),
                ..b.clone()
            })
            .collect(),
        branches: case.branches.clone(),
        gens: case
            .gens
            .iter()
            .map(|g| GenRecord {
                p_gen: g.p_gen * base,
                q_gen: g.q_gen * base,
                q_min: g.q_min * base,
                q_max: g.q_max * base,
                ..g.clone()
            })
            .collect(),
        vvcs: case
            .vvcs
            .iter()
            .map(|v| VvcRecord {
                q_available: v.q_available * base,
                q_injected: v.q_injected * base,
                ..v.clone()
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("case serializes")
}

impl BusKind {
    pub fn is_source(self) -> bool {
        matches!(self, BusKind::Slack | BusKind::Pv)
    }
}
