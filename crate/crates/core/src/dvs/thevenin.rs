// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DvsError;
use crate::gridcase::{BusClass, BusId, NodeId};
use crate::powerflow::{PartitionedY, PmuSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheveninParams {
    pub load_bus: BusId,
    pub v_th: Complex64,
    pub z_th: Complex64,
}

/// (Y_LL − Y_LT Y_TT⁻¹ Y_TL)⁻¹, rows and columns in L-block order.
pub fn schur_impedance(part: &PartitionedY) -> Result<DMatrix<Complex64>, DvsError> {
    let y_ll = part.block(BusClass::L, BusClass::L);
    let n_t = part.members(BusClass::T).len();
    let reduced = if n_t == 0 {
        y_ll.clone()
    } else {
        let y_tt = part.block(BusClass::T, BusClass::T);
        let x = y_tt
            .clone()
            .lu()
            .solve(part.block(BusClass::T, BusClass::L))
            .ok_or(DvsError::SingularTieBlock)?;
        y_ll - part.block(BusClass::L, BusClass::T) * x
    };
    let z = reduced.try_inverse().ok_or(DvsError::SingularSchur)?;
    if z.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(DvsError::SingularSchur);
    }
    Ok(z)
}

/// Per-load-bus Thevenin equivalent: Z_th from the reduced impedance
/// diagonal, V_th = V_L + Z_th (S_L / V_L)*.
pub fn thevenin(snap: &PmuSnapshot, part: &PartitionedY) -> Result<Vec<TheveninParams>, DvsError> {
    let z = schur_impedance(part)?;
    let mut out = Vec::with_capacity(z.nrows());
    for (k, node) in part.members(BusClass::L).iter().enumerate() {
        let NodeId::Bus(bus) = *node else {
            return Err(DvsError::VirtualLoad(*node));
        };
        let v_l = *snap.v_phasor.get(&bus).ok_or(DvsError::MissingMeasurement(bus))?;
        let s_l = snap.s_load.get(&bus).copied().unwrap_or_default();
        let z_th = z[(k, k)];
        if !(z_th.norm() > 0.0 && z_th.norm().is_finite()) {
            return Err(DvsError::DegenerateImpedance(bus));
        }
        let i_l = (s_l / v_l).conj();
        out.push(TheveninParams {
            load_bus: bus,
            v_th: v_l + z_th * i_l,
            z_th,
        });
    }
    Ok(out)
}
