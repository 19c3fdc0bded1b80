// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

//! Network configuration:
//!
//! ```json
//! {
//!   "format_version": "1",
//!   "peers": [{"id": "peer0", "org": "org1"}],
//!   "shards": [{"id": "shard1", "committee": ["peer0", "peer1", "peer2"]}],
//!   "group_shards": {"1": "shard1"},
//!   "policies": {"shard": "all", "mainchain": "majority-orgs"},
//!   "cost": {"endorse_base_ms": 0.5, "endorse_per_unit_ms": 0.4},
//!   "orderer": {"batch_size": 50, "batch_timeout_ms": 100.0, "queue_bound": 10000}
//! }
//! ```
//!
//! With no shards every group is served by the mainchain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::gridcase::GroupId;

pub const NETWORK_FORMAT_VERSION: &str = "1";
pub const MAINCHAIN: &str = "mainchain";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerConfig {
    pub id: String,
    pub org: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardConfig {
    pub id: String,
    pub committee: Vec<String>,
}

/// Matching endorsements required for a transaction to be valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Every channel member.
    All,
    /// Peers from more than half of the channel's orgs.
    MajorityOrgs,
    /// At least this many member peers.
    AnyOf(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Policies {
    pub shard: Policy,
    pub mainchain: Policy,
}

impl Default for Policies {
    fn default() -> Self {
        Policies {
            shard: Policy::All,
            mainchain: Policy::MajorityOrgs,
        }
    }
}

/// Simulated service times, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub endorse_base_ms: f64,
    pub endorse_per_unit_ms: f64,
    /// Relative slowdown per extra concurrent client worker.
    pub worker_contention: f64,
    pub validate_base_ms: f64,
    pub validate_per_tx_ms: f64,
    pub order_per_tx_ms: f64,
    /// Client to peer, and client to orderer.
    pub net_submit_ms: f64,
    /// Orderer to peer.
    pub net_deliver_ms: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            endorse_base_ms: 0.5,
            endorse_per_unit_ms: 0.4,
            worker_contention: 0.05,
            validate_base_ms: 1.0,
            validate_per_tx_ms: 0.1,
            order_per_tx_ms: 0.05,
            net_submit_ms: 1.0,
            net_deliver_ms: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrdererConfig {
    pub batch_size: usize,
    pub batch_timeout_ms: f64,
    /// Per-channel cap on transactions submitted but not yet in a block.
    pub queue_bound: usize,
}

impl Default for OrdererConfig {
    fn default() -> Self {
        OrdererConfig {
            batch_size: 50,
            batch_timeout_ms: 100.0,
            queue_bound: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub format_version: String,
    pub peers: Vec<PeerConfig>,
    #[serde(default)]
    pub shards: Vec<ShardConfig>,
    #[serde(default)]
    pub group_shards: BTreeMap<GroupId, String>,
    #[serde(default)]
    pub policies: Policies,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub orderer: OrdererConfig,
}

impl NetworkConfig {
    pub fn parse(text: &str) -> Result<NetworkConfig, LedgerError> {
        let cfg: NetworkConfig = serde_json::from_str(text)
            .map_err(|e| LedgerError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        if cfg.format_version != NETWORK_FORMAT_VERSION {
            return Err(LedgerError::Config(format!(
                "unsupported format_version {:?}",
                cfg.format_version
            )));
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), LedgerError> {
        if self.peers.is_empty() {
            return Err(LedgerError::Config("no peers".into()));
        }
        let ids: BTreeSet<&str> = self.peers.iter().map(|p| p.id.as_str()).collect();
        if ids.len() != self.peers.len() {
            return Err(LedgerError::Config("duplicate peer id".into()));
        }
        let mut shard_ids = BTreeSet::new();
        for s in &self.shards {
            if s.id == MAINCHAIN || !shard_ids.insert(s.id.as_str()) {
                return Err(LedgerError::Config(format!("bad or duplicate shard id {:?}", s.id)));
            }
            if s.committee.is_empty() {
                return Err(LedgerError::Config(format!("shard {} has an empty committee", s.id)));
            }
            for p in &s.committee {
                if !ids.contains(p.as_str()) {
                    return Err(LedgerError::Config(format!("shard {} names unknown peer {p}", s.id)));
                }
            }
        }
        for (g, s) in &self.group_shards {
            if !shard_ids.contains(s.as_str()) {
                return Err(LedgerError::Config(format!("group {g} assigned to unknown shard {s}")));
            }
        }
        if self.orderer.batch_size == 0 {
            return Err(LedgerError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn is_sharded(&self) -> bool {
        !self.shards.is_empty()
    }

    /// Channel serving a group's monitoring stream.
    pub fn channel_for_group(&self, group: &GroupId) -> Result<String, LedgerError> {
        if !self.is_sharded() {
            return Ok(MAINCHAIN.to_string());
        }
        self.group_shards
            .get(group)
            .cloned()
            .ok_or_else(|| LedgerError::Config(format!("group {group} is assigned to no shard")))
    }

    /// Checks that every group has a home channel.
    pub fn check_groups<'a>(&self, groups: impl IntoIterator<Item = &'a GroupId>) -> Result<(), LedgerError> {
        for g in groups {
            self.channel_for_group(g)?;
        }
        Ok(())
    }
}
