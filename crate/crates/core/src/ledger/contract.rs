// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::{TxId, Version, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ContractError(pub String);

impl ContractError {
    pub fn new(msg: impl Into<String>) -> Self {
        ContractError(msg.into())
    }
}

/// Contract logic. Executed once per endorsing peer, so it must be a pure
/// function of its arguments and the state visible through the context.
pub trait Contract: Send + Sync {
    fn name(&self) -> &str;

    /// Runs `op`; the returned string is the response recorded with the tx.
    fn invoke(&self, ctx: &mut TxContext<'_>, op: &str, args: &str) -> Result<String, ContractError>;
}

/// Read set, write set and charged cost units of one execution.
pub type RwSet = (Vec<(String, Option<Version>)>, Vec<(String, String)>, f64);

/// Execution context handed to a contract during endorsement.
pub struct TxContext<'a> {
    tx_id: TxId,
    channel: &'a str,
    state: &'a WorldState,
    /// The peer's mainchain replica when executing on a shard.
    mainchain: Option<&'a WorldState>,
    reads: BTreeMap<String, Option<Version>>,
    writes: BTreeMap<String, String>,
    units: f64,
}

impl<'a> TxContext<'a> {
    pub fn new(tx_id: TxId, channel: &'a str, state: &'a WorldState, mainchain: Option<&'a WorldState>) -> Self {
        TxContext {
            tx_id,
            channel,
            state,
            mainchain,
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
            units: 0.0,
        }
    }

    pub fn tx_id(&self) -> TxId {
        self.tx_id
    }

    pub fn channel(&self) -> &str {
        self.channel
    }

    /// Reads a key of this channel; recorded in the read set.
    pub fn get_state(&mut self, key: &str) -> Option<String> {
        if let Some(v) = self.writes.get(key) {
            return Some(v.clone());
        }
        let entry = self.state.get(key);
        self.reads.entry(key.to_string()).or_insert(entry.map(|e| e.version));
        entry.map(|e| e.value.clone())
    }

    /// Version of a key without recording a read.
    pub fn peek_version(&self, key: &str) -> Option<Version> {
        self.state.version(key)
    }

    /// Reads mainchain records. On the mainchain itself this is an ordinary
    /// read; from a shard it is an unvalidated read of the peer's mainchain
    /// replica, which every peer holds.
    pub fn get_global(&mut self, key: &str) -> Option<(String, Option<Version>)> {
        match self.mainchain {
            None => {
                let v = self.get_state(key)?;
                Some((v, self.state.version(key)))
            }
            Some(main) => main.get(key).map(|e| (e.value.clone(), Some(e.version))),
        }
    }

    /// Like [`TxContext::get_global`] but lends the value to `f`.
    pub fn with_global<R>(&mut self, key: &str, f: impl FnOnce(&str, Option<Version>) -> R) -> Option<R> {
        match self.mainchain {
            None => {
                if let Some(v) = self.writes.get(key) {
                    return Some(f(v, None));
                }
                let entry = self.state.get(key);
                self.reads.entry(key.to_string()).or_insert(entry.map(|e| e.version));
                entry.map(|e| f(&e.value, Some(e.version)))
            }
            Some(main) => main.get(key).map(|e| f(&e.value, Some(e.version))),
        }
    }

    pub fn put_state(&mut self, key: &str, value: String) {
        self.writes.insert(key.to_string(), value);
    }

    /// Adds modeled execution cost.
    pub fn charge(&mut self, units: f64) {
        self.units += units;
    }

    pub fn units(&self) -> f64 {
        self.units
    }

    pub fn into_rwset(self) -> RwSet {
        (
            self.reads.into_iter().collect(),
            self.writes.into_iter().collect(),
            self.units,
        )
    }
}

/// Digest that endorsers sign: identical execution gives identical digests.
pub(crate) fn rwset_digest(reads: &[(String, Option<Version>)], writes: &[(String, String)], response: &str) -> String {
    let bytes = serde_json::to_vec(&(reads, writes, response)).expect("rwset serializes");
    hex::encode(Sha256::digest(bytes))
}
