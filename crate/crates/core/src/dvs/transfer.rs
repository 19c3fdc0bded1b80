// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Maximum deliverable load through a Thevenin source.
//!
//! With source magnitude E behind z = R + jX, a load P + jQ has a real
//! voltage solution iff
//!
//! ```text
//! (2(PR + QX) − E²)² ≥ 4(P² + Q²)|z|²   and   E² − 2(PR + QX) ≥ 0.
//! ```
//!
//! The second condition keeps the solution on the branch connected to the
//! no-load state. The maxima below are the boundary of that set along Q
//! fixed, P fixed and the load's power-factor ray.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TheveninParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferLimits {
    pub p_max: f64,
    pub q_max: f64,
    pub s_max: f64,
}

pub fn deliverable(e: f64, z: Complex64, p: f64, q: f64) -> bool {
    let e2 = e * e;
    let k = p * z.re + q * z.im;
    let lhs = (2.0 * k - e2).powi(2);
    e2 - 2.0 * k >= 0.0 && lhs >= 4.0 * (p * p + q * q) * z.norm_sqr()
}

/// Largest deliverable P holding Q; NaN when no P is deliverable.
pub fn p_max_at(e: f64, z: Complex64, q: f64) -> f64 {
    let (r, x, zm) = (z.re, z.im, z.norm());
    let a = e * e - 2.0 * q * x;
    let disc = a * a - 4.0 * x * x * q * q;
    if a < 0.0 || disc < 0.0 {
        return f64::NAN;
    }
    (a * a - 4.0 * zm * zm * q * q) / (2.0 * (zm * disc.sqrt() + a * r))
}

/// Largest deliverable Q holding P; NaN when no Q is deliverable.
pub fn q_max_at(e: f64, z: Complex64, p: f64) -> f64 {
    p_max_at(e, Complex64::new(z.im, z.re), p)
}

/// Largest deliverable |S| along the unit direction (c, s).
pub fn s_max_along(e: f64, z: Complex64, c: f64, s: f64) -> f64 {
    let den = 2.0 * (z.norm() + z.re * c + z.im * s);
    if den <= 0.0 {
        return f64::INFINITY;
    }
    e * e / den
}

/// Maxima for `load` through `th`. A zero load is treated as unity power
/// factor.
pub fn max_transfer(th: &TheveninParams, load: Complex64) -> TransferLimits {
    let e = th.v_th.norm();
    let z = th.z_th;
    let s = load.norm();
    let (c, sn) = if s > 0.0 {
        (load.re / s, load.im / s)
    } else {
        (1.0, 0.0)
    };
    TransferLimits {
        p_max: p_max_at(e, z, load.im),
        q_max: q_max_at(e, z, load.re),
        s_max: s_max_along(e, z, c, sn),
    }
}

/// (max − load) / max; −1 when the maximum is not positive or undefined.
pub fn margin(max: f64, load: f64) -> f64 {
    if max.is_infinite() && max > 0.0 {
        return 1.0;
    }
    if max.is_nan() || max <= 0.0 {
        return -1.0;
    }
    (max - load) / max
}

/// Smallest of the three normalized margins.
pub fn vsi_from(limits: &TransferLimits, load: Complex64) -> f64 {
    margin(limits.p_max, load.re)
        .min(margin(limits.q_max, load.im))
        .min(margin(limits.s_max, load.norm()))
}
