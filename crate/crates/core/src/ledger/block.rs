// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::contract::rwset_digest;
use super::{Endorsement, InvalidReason, LedgerError, Policy, TxId, TxStatus, Version, WorldState};

pub const HASH_ALGORITHM: &str = "sha256";

/// Ledger content of one ordered transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTx {
    pub id: TxId,
    pub contract: String,
    pub op: String,
    pub args: String,
    pub read_set: Vec<(String, Option<Version>)>,
    pub write_set: Vec<(String, String)>,
    pub response: String,
    pub endorsements: Vec<Endorsement>,
    pub status: TxStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub number: u64,
    pub channel: String,
    pub prev_hash: String,
    /// Channel configuration, present only in the genesis block.
    pub config: Option<String>,
    pub txs: Vec<BlockTx>,
    pub hash: String,
}

impl Block {
    pub fn genesis(channel: &str, config: String) -> Block {
        let mut b = Block {
            number: 0,
            channel: channel.to_string(),
            prev_hash: "0".repeat(64),
            config: Some(config),
            txs: Vec::new(),
            hash: String::new(),
        };
        b.hash = block_hash(&b);
        b
    }
}

/// Digest over everything in the block except its own hash.
pub fn block_hash(block: &Block) -> String {
    let content = (
        &block.number,
        &block.channel,
        &block.prev_hash,
        &block.config,
        &block.txs,
    );
    let bytes = serde_json::to_vec(&content).expect("block serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainAudit {
    pub ok: bool,
    /// Number of the first block whose content hash or back link fails.
    pub first_broken: Option<u64>,
}

pub fn verify_chain(blocks: &[Block]) -> ChainAudit {
    let mut prev = "0".repeat(64);
    for (i, b) in blocks.iter().enumerate() {
        if b.number != i as u64 || b.prev_hash != prev || block_hash(b) != b.hash {
            return ChainAudit {
                ok: false,
                first_broken: Some(i as u64),
            };
        }
        prev = b.hash.clone();
    }
    ChainAudit {
        ok: true,
        first_broken: None,
    }
}

/// Parses a chain exported one block per line.
pub fn parse_chain_jsonl(text: &str) -> Result<Vec<Block>, LedgerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| LedgerError::Export(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Whether the endorsements satisfy `policy` for the given rwset; every
/// endorsement must carry the same digest.
pub(crate) fn endorsed(tx: &BlockTx, policy: Policy, members: &[(String, String)]) -> bool {
    let digest = rwset_digest(&tx.read_set, &tx.write_set, &tx.response);
    if tx.endorsements.iter().any(|e| e.digest != digest) {
        return false;
    }
    let org_of: BTreeMap<&str, &str> = members.iter().map(|(p, o)| (p.as_str(), o.as_str())).collect();
    let peers: BTreeSet<&str> = tx
        .endorsements
        .iter()
        .map(|e| e.peer.as_str())
        .filter(|p| org_of.contains_key(p))
        .collect();
    match policy {
        Policy::All => peers.len() == org_of.len(),
        Policy::AnyOf(k) => peers.len() >= k.max(1),
        Policy::MajorityOrgs => {
            let all: BTreeSet<&str> = org_of.values().copied().collect();
            let got: BTreeSet<&str> = peers.iter().map(|p| org_of[p]).collect();
            2 * got.len() > all.len()
        }
    }
}

/// Statuses of a block's transactions against `state`, in order: policy
/// check, then read versions, then at most one valid write per key.
pub fn validate_block(
    state: &WorldState,
    number: u64,
    txs: &[BlockTx],
    policy: Policy,
    members: &[(String, String)],
) -> Vec<TxStatus> {
    let mut written: BTreeMap<&str, Version> = BTreeMap::new();
    let mut out = Vec::with_capacity(txs.len());
    for (i, tx) in txs.iter().enumerate() {
        if !endorsed(tx, policy, members) {
            out.push(TxStatus::Invalid(InvalidReason::Endorsement));
            continue;
        }
        let stale = tx.read_set.iter().any(|(k, v)| {
            let current = written.get(k.as_str()).copied().or_else(|| state.version(k));
            current != *v
        });
        let clash = tx.write_set.iter().any(|(k, _)| written.contains_key(k.as_str()));
        if stale || clash {
            out.push(TxStatus::Invalid(InvalidReason::MvccConflict));
            continue;
        }
        let version = Version {
            block: number,
            tx: i as u32,
        };
        for (k, _) in &tx.write_set {
            written.insert(k, version);
        }
        out.push(TxStatus::Valid);
    }
    out
}

/// Applies the write sets of a block's valid transactions.
pub(crate) fn apply_block(state: &mut WorldState, block: &Block) {
    for (i, tx) in block.txs.iter().enumerate() {
        if tx.status.is_valid() {
            let version = Version {
                block: block.number,
                tx: i as u32,
            };
            for (k, v) in &tx.write_set {
                state.put(k, v.clone(), version);
            }
        }
    }
}

/// Rebuilds a channel's world state from its chain.
pub fn replay(blocks: &[Block]) -> WorldState {
    let mut s = WorldState::default();
    for b in blocks {
        apply_block(&mut s, b);
    }
    s
}
