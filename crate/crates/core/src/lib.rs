// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Decentralized voltage stability monitoring and control executed as smart
//! contracts on a simulated, sharded, permissioned ledger.

pub mod bench;
pub mod contracts;
pub mod dvs;
pub mod gridcase;
pub mod ledger;
pub mod powerflow;
pub mod scenario;
