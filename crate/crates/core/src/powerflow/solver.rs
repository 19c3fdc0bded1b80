// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Newton-Raphson AC power flow in polar coordinates. Generator reactive
//! limits are not enforced; PV buses hold their setpoint unconditionally.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{case_admittance, AdmittanceMatrix, PfError};
use crate::gridcase::{BusId, BusKind, GridCase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub flat_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-8,
            max_iterations: 30,
            flat_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub bus_ids: Vec<BusId>,
    pub v: Vec<Complex64>,
    pub s_injection: Vec<Complex64>,
    /// Infinity norm of the final P/Q mismatch.
    pub mismatch: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PowerFlowSolution {
    pub fn index(&self, bus: BusId) -> Option<usize> {
        self.bus_ids.binary_search(&bus).ok()
    }

    pub fn voltage(&self, bus: BusId) -> Option<Complex64> {
        self.index(bus).map(|i| self.v[i])
    }

    pub fn v_mag(&self, bus: BusId) -> Option<f64> {
        self.voltage(bus).map(|v| v.norm())
    }

    pub fn v_ang(&self, bus: BusId) -> Option<f64> {
        self.voltage(bus).map(|v| v.arg())
    }

    pub fn injection(&self, bus: BusId) -> Option<Complex64> {
        self.index(bus).map(|i| self.s_injection[i])
    }

    pub fn voltages(&self) -> BTreeMap<BusId, Complex64> {
        self.bus_ids.iter().copied().zip(self.v.iter().copied()).collect()
    }
}

/// Partial derivatives of bus injections with respect to voltage angle and
/// magnitude, all n x n: (dP/dθ, dP/d|V|, dQ/dθ, dQ/d|V|).
pub(crate) fn polar_jacobian(
    y: &DMatrix<Complex64>,
    v: &[Complex64],
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = v.len();
    let s = injections(y, v);
    let mut p_th = DMatrix::zeros(n, n);
    let mut p_v = DMatrix::zeros(n, n);
    let mut q_th = DMatrix::zeros(n, n);
    let mut q_v = DMatrix::zeros(n, n);
    for i in 0..n {
        let vi = v[i].norm();
        for j in 0..n {
            let (g, b) = (y[(i, j)].re, y[(i, j)].im);
            if i == j {
                p_th[(i, i)] = -s[i].im - b * vi * vi;
                p_v[(i, i)] = s[i].re / vi + g * vi;
                q_th[(i, i)] = s[i].re - g * vi * vi;
                q_v[(i, i)] = s[i].im / vi - b * vi;
            } else {
                if g == 0.0 && b == 0.0 {
                    continue;
                }
                let vj = v[j].norm();
                let th = v[i].arg() - v[j].arg();
                let (sn, cs) = th.sin_cos();
                p_th[(i, j)] = vi * vj * (g * sn - b * cs);
                p_v[(i, j)] = vi * (g * cs + b * sn);
                q_th[(i, j)] = -vi * vj * (g * cs + b * sn);
                q_v[(i, j)] = vi * (g * sn - b * cs);
            }
        }
    }
    (p_th, p_v, q_th, q_v)
}

pub(crate) fn injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let vv = DVector::from_column_slice(v);
    let i = y * &vv;
    v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
}

/// Voltage magnitude held by a source bus: the first generator's setpoint,
/// else the bus record's magnitude.
fn setpoint(case: &GridCase, bus: BusId, fallback: f64) -> f64 {
    case.gens
        .iter()
        .find(|g| g.bus == bus)
        .map(|g| g.v_set)
        .unwrap_or(fallback)
}

pub fn solve_powerflow(case: &GridCase, options: &SolveOptions) -> Result<PowerFlowSolution, PfError> {
    let y = case_admittance(case)?;
    solve_with_admittance(case, &y, options)
}

/// As [`solve_powerflow`], reusing a prebuilt admittance for `case`.
pub fn solve_with_admittance(
    case: &GridCase,
    y: &AdmittanceMatrix,
    options: &SolveOptions,
) -> Result<PowerFlowSolution, PfError> {
    let mut buses: Vec<_> = case.buses.iter().collect();
    buses.sort_by_key(|b| b.id);
    let n = buses.len();
    let bus_ids: Vec<BusId> = buses.iter().map(|b| b.id).collect();

    let slack: Vec<usize> = (0..n).filter(|&i| buses[i].kind == BusKind::Slack).collect();
    if slack.len() != 1 {
        return Err(PfError::SlackCount(slack.len()));
    }
    let pvpq: Vec<usize> = (0..n).filter(|&i| buses[i].kind != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| buses[i].kind == BusKind::Pq).collect();

    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for (i, b) in buses.iter().enumerate() {
        let load = case.net_load(b);
        p_spec[i] = -load.re;
        q_spec[i] = -load.im;
    }
    for g in &case.gens {
        if let Ok(i) = bus_ids.binary_search(&g.bus) {
            p_spec[i] += g.p_gen;
            q_spec[i] += g.q_gen;
        }
    }

    let mut vm: Vec<f64> = buses
        .iter()
        .map(|b| if options.flat_start { 1.0 } else { b.v_mag })
        .collect();
    let mut va: Vec<f64> = buses
        .iter()
        .map(|b| if options.flat_start { 0.0 } else { b.v_ang })
        .collect();
    for (i, b) in buses.iter().enumerate() {
        if b.kind.is_source() {
            vm[i] = setpoint(case, b.id, b.v_mag);
        }
        if b.kind == BusKind::Slack {
            va[i] = b.v_ang;
        }
    }

    let np = pvpq.len();
    let dim = np + pq.len();
    let mut iterations = 0;
    loop {
        let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
        let s = injections(&y.entries, &v);
        let mut f = DVector::zeros(dim);
        for (k, &i) in pvpq.iter().enumerate() {
            f[k] = s[i].re - p_spec[i];
        }
        for (k, &i) in pq.iter().enumerate() {
            f[np + k] = s[i].im - q_spec[i];
        }
        let mismatch = f.amax();
        let finite = mismatch.is_finite() && v.iter().all(|x| x.re.is_finite() && x.im.is_finite());
        let converged = finite && mismatch <= options.tolerance;
        if converged || !finite || iterations >= options.max_iterations {
            return Ok(PowerFlowSolution {
                bus_ids,
                v,
                s_injection: s,
                mismatch: if finite { mismatch } else { f64::INFINITY },
                iterations,
                converged,
            });
        }

        let (p_th, p_v, q_th, q_v) = polar_jacobian(&y.entries, &v);
        let mut j = DMatrix::zeros(dim, dim);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                j[(r, c)] = p_th[(i, k)];
            }
            for (c, &k) in pq.iter().enumerate() {
                j[(r, np + c)] = p_v[(i, k)];
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                j[(np + r, c)] = q_th[(i, k)];
            }
            for (c, &k) in pq.iter().enumerate() {
                j[(np + r, np + c)] = q_v[(i, k)];
            }
        }
        let dx = j
            .lu()
            .solve(&(-f))
            .ok_or(PfError::SingularJacobian { iteration: iterations })?;
        for (k, &i) in pvpq.iter().enumerate() {
            va[i] += dx[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            vm[i] += dx[np + k];
        }
        iterations += 1;
    }
}
