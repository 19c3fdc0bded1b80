// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BusId, BusKind, GridCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    DuplicateBus,
    UnknownBus,
    SelfLoop,
    ZeroImpedance,
    NonFinite,
    MultipleSlack,
    NoSlack,
    GenLimits,
    NegativeVvc,
    DisconnectedComponent,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::DuplicateBus => "duplicate bus",
            ViolationKind::UnknownBus => "unknown bus",
            ViolationKind::SelfLoop => "self loop",
            ViolationKind::ZeroImpedance => "zero impedance",
            ViolationKind::NonFinite => "non-finite value",
            ViolationKind::MultipleSlack => "multiple slack",
            ViolationKind::NoSlack => "no slack",
            ViolationKind::GenLimits => "reactive limits",
            ViolationKind::NegativeVvc => "negative compensator quantity",
            ViolationKind::DisconnectedComponent => "disconnected component",
        }
    }
}

/// One broken rule, naming the offending record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub record: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl Violation {
    pub fn new(record: impl Into<String>, kind: ViolationKind, detail: impl Into<String>) -> Self {
        Violation {
            record: record.into(),
            kind,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.record, self.kind.label(), self.detail)
    }
}

/// Duplicate ids and references to buses that do not exist.
pub(crate) fn reference_violations(case: &GridCase) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for bus in &case.buses {
        if !seen.insert(bus.id) {
            out.push(Violation::new(
                format!("bus {}", bus.id),
                ViolationKind::DuplicateBus,
                "id appears more than once",
            ));
        }
    }
    let mut check = |record: String, bus: BusId| {
        if !seen.contains(&bus) {
            out.push(Violation::new(
                record,
                ViolationKind::UnknownBus,
                format!("references bus {bus}, which is not in the bus table"),
            ));
        }
    };
    for (k, br) in case.branches.iter().enumerate() {
        check(format!("branch {k}"), br.from_bus);
        check(format!("branch {k}"), br.to_bus);
    }
    for (k, g) in case.gens.iter().enumerate() {
        check(format!("gen {k}"), g.bus);
    }
    for (k, v) in case.vvcs.iter().enumerate() {
        check(format!("vvc {k}"), v.bus);
    }
    out
}

/// Lists every broken case invariant; empty iff the case is well formed.
pub fn validate_case(case: &GridCase) -> Vec<Violation> {
    let mut out = reference_violations(case);

    let slacks: Vec<BusId> = case
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .collect();
    match slacks.len() {
        0 => out.push(Violation::new("case", ViolationKind::NoSlack, "no slack bus")),
        1 => {}
        _ => out.push(Violation::new(
            "case",
            ViolationKind::MultipleSlack,
            format!("slack buses {slacks:?}"),
        )),
    }

    for bus in &case.buses {
        let vals = [
            bus.p_demand,
            bus.q_demand,
            bus.g_shunt,
            bus.b_shunt,
            bus.v_mag,
            bus.v_ang,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new(
                format!("bus {}", bus.id),
                ViolationKind::NonFinite,
                "demand, shunt or voltage is not finite",
            ));
        }
    }

    for (k, br) in case.branches.iter().enumerate() {
        let rec = format!("branch {k}");
        if br.from_bus == br.to_bus {
            out.push(Violation::new(
                rec.clone(),
                ViolationKind::SelfLoop,
                format!("both ends at bus {}", br.from_bus),
            ));
        }
        if ![br.r, br.x, br.b_charging].iter().all(|v| v.is_finite()) {
            out.push(Violation::new(
                rec.clone(),
                ViolationKind::NonFinite,
                "r, x or b_charging is not finite",
            ));
        } else if br.r == 0.0 && br.x == 0.0 {
            out.push(Violation::new(rec, ViolationKind::ZeroImpedance, "r = x = 0"));
        }
    }

    for (k, g) in case.gens.iter().enumerate() {
        if !(g.q_min <= g.q_gen && g.q_gen <= g.q_max) {
            out.push(Violation::new(
                format!("gen {k}"),
                ViolationKind::GenLimits,
                format!("q_gen {} outside [{}, {}]", g.q_gen, g.q_min, g.q_max),
            ));
        }
    }

    for (k, v) in case.vvcs.iter().enumerate() {
        if !(v.q_available >= 0.0 && v.q_injected >= 0.0) {
            out.push(Violation::new(
                format!("vvc {k}"),
                ViolationKind::NegativeVvc,
                format!(
                    "q_available {} and q_injected {} must be non-negative",
                    v.q_available, v.q_injected
                ),
            ));
        }
    }

    for comp in components(case).into_iter().skip(1) {
        out.push(Violation::new(
            format!("bus {}", comp[0]),
            ViolationKind::DisconnectedComponent,
            format!("buses {comp:?} are not connected to the rest of the case"),
        ));
    }
    out
}

/// Connected components over in-service branches, largest first, each
/// sorted ascending; ties ordered by smallest member.
pub(crate) fn components(case: &GridCase) -> Vec<Vec<BusId>> {
    let mut adj: BTreeMap<BusId, Vec<BusId>> = case.buses.iter().map(|b| (b.id, Vec::new())).collect();
    for (_, br) in case.in_service() {
        if let (true, true) = (adj.contains_key(&br.from_bus), adj.contains_key(&br.to_bus)) {
            adj.get_mut(&br.from_bus).unwrap().push(br.to_bus);
            adj.get_mut(&br.to_bus).unwrap().push(br.from_bus);
        }
    }
    let mut seen = BTreeSet::new();
    let mut comps = Vec::new();
    for &start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(b) = queue.pop_front() {
            for &n in &adj[&b] {
                if seen.insert(n) {
                    comp.push(n);
                    queue.push_back(n);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}
