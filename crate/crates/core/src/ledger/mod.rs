// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Simulated permissioned ledger: channels as shards, committee
//! endorsement, a single shared orderer and read/write-set validation,
//! driven by a discrete-event clock in microseconds.

mod block;
mod config;
mod contract;
mod network;
mod state;

use serde::{Deserialize, Serialize};

pub use block::{
    block_hash, parse_chain_jsonl, replay, validate_block, verify_chain, Block, BlockTx, ChainAudit, HASH_ALGORITHM,
};
pub use config::{
    CostModel, NetworkConfig, OrdererConfig, PeerConfig, Policies, Policy, ShardConfig, MAINCHAIN,
    NETWORK_FORMAT_VERSION,
};
pub use contract::{Contract, ContractError, TxContext};
pub use network::{ChannelKind, Network, ReplicaCheckpoint};
pub use state::{Version, VersionedValue, WorldState};

pub type TxId = u64;

/// Logical time in microseconds.
pub type SimTime = u64;

pub fn ms_to_time(ms: f64) -> SimTime {
    (ms * 1000.0).round().max(0.0) as SimTime
}

pub fn time_to_ms(t: SimTime) -> f64 {
    t as f64 / 1000.0
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("network config: {0}")]
    Config(String),
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("contract {contract} is not deployed on {channel}")]
    UnknownContract { channel: String, contract: String },
    #[error("contract {contract} already deployed on {channel}")]
    DuplicateContract { channel: String, contract: String },
    #[error("unknown peer {0}")]
    UnknownPeer(String),
    #[error("submission time {at} is before the current time {now}")]
    SubmitInPast { at: SimTime, now: SimTime },
    #[error("chain export: {0}")]
    Export(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidReason {
    Endorsement,
    MvccConflict,
    Dropped,
    Contract(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxStatus {
    Pending,
    Valid,
    Invalid(InvalidReason),
}

impl TxStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, TxStatus::Valid)
    }

    pub fn is_final(&self) -> bool {
        !matches!(self, TxStatus::Pending)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub peer: String,
    /// Hex sha256 over the read set, write set and response.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxId,
    pub channel: String,
    pub contract: String,
    pub op: String,
    pub args: String,
    pub read_set: Vec<(String, Option<Version>)>,
    pub write_set: Vec<(String, String)>,
    pub response: Option<String>,
    pub endorsements: Vec<Endorsement>,
    pub submitted_us: SimTime,
    pub endorsed_us: Option<SimTime>,
    pub ordered_us: Option<SimTime>,
    pub committed_us: Option<SimTime>,
    pub block: Option<u64>,
    pub status: TxStatus,
}

impl Transaction {
    /// Submit-to-commit latency in milliseconds, once final.
    pub fn latency_ms(&self) -> Option<f64> {
        self.committed_us.map(|c| time_to_ms(c - self.submitted_us))
    }
}
