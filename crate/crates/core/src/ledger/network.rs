// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::block::{apply_block, block_hash, endorsed, validate_block, Block, BlockTx, ChainAudit, HASH_ALGORITHM};
use super::contract::rwset_digest;
use super::{
    ms_to_time, verify_chain, Contract, Endorsement, InvalidReason, LedgerError, NetworkConfig, Policy, SimTime,
    Transaction, TxContext, TxId, TxStatus, Version, WorldState, MAINCHAIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Mainchain,
    Shard,
}

/// State digest of one peer's replica right after it applied a block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaCheckpoint {
    pub channel: String,
    pub block: u64,
    pub peer: String,
    pub state_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    Endorse(TxId),
    Validate(usize, u64),
}

struct EndorseOutcome {
    read_set: Vec<(String, Option<Version>)>,
    write_set: Vec<(String, String)>,
    response: Result<String, String>,
    digest: String,
}

struct Peer {
    id: String,
    org: String,
    replicas: BTreeMap<usize, WorldState>,
    queue: VecDeque<Job>,
    running: Option<(Job, Option<EndorseOutcome>)>,
}

struct Channel {
    id: String,
    kind: ChannelKind,
    members: Vec<usize>,
    member_orgs: Vec<(String, String)>,
    policy: Policy,
    contracts: BTreeMap<String, Arc<dyn Contract>>,
    chain: Vec<Block>,
    state: WorldState,
    queue: VecDeque<(TxId, SimTime)>,
    timer_gen: u64,
    in_flight: usize,
    applied_by: BTreeMap<u64, usize>,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Submit(TxId),
    PeerArrive(usize, Job),
    PeerDone(usize),
    OrdererArrive(TxId),
    OrdererDone,
    BatchTimeout(usize, u64),
}

struct Scheduled {
    time: SimTime,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Discrete-event model of the whole network: peers as FIFO servers, one
/// shared orderer with per-channel batch queues.
pub struct Network {
    config: NetworkConfig,
    peers: Vec<Peer>,
    channels: Vec<Channel>,
    txs: Vec<Transaction>,
    endorsements: BTreeMap<TxId, Vec<(usize, EndorseOutcome)>>,
    orderer_queue: VecDeque<TxId>,
    orderer_busy: Option<TxId>,
    events: BinaryHeap<Scheduled>,
    seq: u64,
    now: SimTime,
    client_workers: usize,
    audit: bool,
    checkpoints: Vec<ReplicaCheckpoint>,
    forks: Vec<String>,
    wall_clock: Option<Instant>,
}

impl Network {
    /// Creates the mainchain over all peers and one channel per shard.
    pub fn bootstrap(config: NetworkConfig) -> Result<Network, LedgerError> {
        config.check()?;
        let peer_index: BTreeMap<&str, usize> = config
            .peers
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect();
        let mut specs: Vec<(String, ChannelKind, Vec<usize>, Policy)> = vec![(
            MAINCHAIN.to_string(),
            ChannelKind::Mainchain,
            (0..config.peers.len()).collect(),
            config.policies.mainchain,
        )];
        for s in &config.shards {
            let mut members: Vec<usize> = s.committee.iter().map(|p| peer_index[p.as_str()]).collect();
            members.sort_unstable();
            members.dedup();
            specs.push((s.id.clone(), ChannelKind::Shard, members, config.policies.shard));
        }
        let mut peers: Vec<Peer> = config
            .peers
            .iter()
            .map(|p| Peer {
                id: p.id.clone(),
                org: p.org.clone(),
                replicas: BTreeMap::new(),
                queue: VecDeque::new(),
                running: None,
            })
            .collect();
        let mut channels = Vec::new();
        for (ci, (id, kind, members, policy)) in specs.into_iter().enumerate() {
            let member_orgs: Vec<(String, String)> = members
                .iter()
                .map(|&m| (peers[m].id.clone(), peers[m].org.clone()))
                .collect();
            let genesis_config = serde_json::json!({
                "channel": id,
                "kind": kind,
                "members": member_orgs,
                "policy": policy,
                "hash_algorithm": HASH_ALGORITHM,
                "orderer": config.orderer,
            });
            for &m in &members {
                peers[m].replicas.insert(ci, WorldState::default());
            }
            channels.push(Channel {
                chain: vec![Block::genesis(&id, genesis_config.to_string())],
                id,
                kind,
                members,
                member_orgs,
                policy,
                contracts: BTreeMap::new(),
                state: WorldState::default(),
                queue: VecDeque::new(),
                timer_gen: 0,
                in_flight: 0,
                applied_by: BTreeMap::new(),
            });
        }
        Ok(Network {
            config,
            peers,
            channels,
            txs: Vec::new(),
            endorsements: BTreeMap::new(),
            orderer_queue: VecDeque::new(),
            orderer_busy: None,
            events: BinaryHeap::new(),
            seq: 0,
            now: 0,
            client_workers: 1,
            audit: false,
            checkpoints: Vec::new(),
            forks: Vec::new(),
            wall_clock: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of concurrent client workers, which slows endorsement.
    pub fn set_client_workers(&mut self, workers: usize) {
        self.client_workers = workers.max(1);
    }

    /// Records a replica digest for every peer after every block.
    pub fn set_audit(&mut self, on: bool) {
        self.audit = on;
    }

    /// Paces event processing against the wall clock, 1 logical ms per ms.
    pub fn set_wall_clock(&mut self, on: bool) {
        self.wall_clock = on.then(Instant::now);
    }

    pub fn channel_ids(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.id.clone()).collect()
    }

    fn channel_index(&self, id: &str) -> Result<usize, LedgerError> {
        self.channels
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| LedgerError::UnknownChannel(id.to_string()))
    }

    pub fn channel_kind(&self, id: &str) -> Result<ChannelKind, LedgerError> {
        Ok(self.channels[self.channel_index(id)?].kind)
    }

    pub fn members(&self, channel: &str) -> Result<Vec<String>, LedgerError> {
        let c = &self.channels[self.channel_index(channel)?];
        Ok(c.members.iter().map(|&m| self.peers[m].id.clone()).collect())
    }

    pub fn peer_channels(&self, peer: &str) -> Result<Vec<String>, LedgerError> {
        let p = self
            .peers
            .iter()
            .find(|p| p.id == peer)
            .ok_or_else(|| LedgerError::UnknownPeer(peer.to_string()))?;
        Ok(p.replicas.keys().map(|&c| self.channels[c].id.clone()).collect())
    }

    pub fn deploy_contract(&mut self, channel: &str, contract: Arc<dyn Contract>) -> Result<(), LedgerError> {
        let ci = self.channel_index(channel)?;
        let name = contract.name().to_string();
        let c = &mut self.channels[ci];
        if c.contracts.contains_key(&name) {
            return Err(LedgerError::DuplicateContract {
                channel: channel.to_string(),
                contract: name,
            });
        }
        c.contracts.insert(name, contract);
        Ok(())
    }

    pub fn has_contract(&self, channel: &str, contract: &str) -> bool {
        self.channel_index(channel)
            .map(|ci| self.channels[ci].contracts.contains_key(contract))
            .unwrap_or(false)
    }

    /// Queues a transaction for submission at logical time `at`.
    pub fn submit(
        &mut self,
        channel: &str,
        contract: &str,
        op: &str,
        args: String,
        at: SimTime,
    ) -> Result<TxId, LedgerError> {
        let ci = self.channel_index(channel)?;
        if !self.channels[ci].contracts.contains_key(contract) {
            return Err(LedgerError::UnknownContract {
                channel: channel.to_string(),
                contract: contract.to_string(),
            });
        }
        if at < self.now {
            return Err(LedgerError::SubmitInPast { at, now: self.now });
        }
        let id = self.txs.len() as TxId;
        self.txs.push(Transaction {
            id,
            channel: channel.to_string(),
            contract: contract.to_string(),
            op: op.to_string(),
            args,
            read_set: Vec::new(),
            write_set: Vec::new(),
            response: None,
            endorsements: Vec::new(),
            submitted_us: at,
            endorsed_us: None,
            ordered_us: None,
            committed_us: None,
            block: None,
            status: TxStatus::Pending,
        });
        self.schedule(at, Event::Submit(id));
        Ok(id)
    }

    pub fn tx(&self, id: TxId) -> Option<&Transaction> {
        self.txs.get(id as usize)
    }

    pub fn txs(&self) -> &[Transaction] {
        &self.txs
    }

    /// Runs until no events remain.
    pub fn run_until_idle(&mut self) {
        while self.step(None) {}
    }

    /// Runs every event scheduled at or before `t`, then advances to `t`.
    pub fn run_until(&mut self, t: SimTime) {
        while self.step(Some(t)) {}
        self.now = self.now.max(t);
    }

    pub fn is_idle(&self) -> bool {
        self.events.is_empty()
    }

    pub fn query_state(&self, channel: &str, key: &str) -> Result<Option<String>, LedgerError> {
        let ci = self.channel_index(channel)?;
        let first = self.channels[ci].members[0];
        Ok(self.peers[first].replicas[&ci].value(key).map(str::to_string))
    }

    /// A peer's replica of a channel, if it is a member.
    pub fn replica(&self, peer: &str, channel: &str) -> Option<&WorldState> {
        let ci = self.channel_index(channel).ok()?;
        self.peers.iter().find(|p| p.id == peer)?.replicas.get(&ci)
    }

    /// The orderer-side state after the last cut block.
    pub fn canonical_state(&self, channel: &str) -> Result<&WorldState, LedgerError> {
        Ok(&self.channels[self.channel_index(channel)?].state)
    }

    pub fn chain(&self, channel: &str) -> Result<&[Block], LedgerError> {
        Ok(&self.channels[self.channel_index(channel)?].chain)
    }

    pub fn chain_hash(&self, channel: &str) -> Result<String, LedgerError> {
        Ok(self.chain(channel)?.last().expect("genesis").hash.clone())
    }

    pub fn verify_chain(&self, channel: &str) -> Result<ChainAudit, LedgerError> {
        Ok(verify_chain(self.chain(channel)?))
    }

    pub fn checkpoints(&self) -> &[ReplicaCheckpoint] {
        &self.checkpoints
    }

    /// Blocks where a peer's own validation disagreed with the block.
    pub fn forks(&self) -> &[String] {
        &self.forks
    }

    /// Writes one JSON block per line.
    pub fn export_jsonl(&self, channel: &str, out: &mut dyn Write) -> Result<(), LedgerError> {
        for b in self.chain(channel)? {
            let line = serde_json::to_string(b).map_err(|e| LedgerError::Export(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| LedgerError::Export(e.to_string()))?;
        }
        Ok(())
    }

    /// Cuts a block if the channel's queue is full or its oldest entry has
    /// waited a full batch timeout. Returns the new block's number.
    pub fn cut_block(&mut self, channel: &str) -> Result<Option<u64>, LedgerError> {
        let ci = self.channel_index(channel)?;
        Ok(self.try_cut(ci))
    }

    fn schedule(&mut self, time: SimTime, event: Event) {
        self.seq += 1;
        self.events.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn step(&mut self, limit: Option<SimTime>) -> bool {
        match self.events.peek() {
            None => return false,
            Some(s) if limit.is_some_and(|l| s.time > l) => return false,
            _ => {}
        }
        let s = self.events.pop().expect("peeked");
        if let Some(start) = self.wall_clock {
            let due = start + Duration::from_micros(s.time);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        self.now = s.time;
        match s.event {
            Event::Submit(tx) => self.on_submit(tx),
            Event::PeerArrive(p, job) => {
                self.peers[p].queue.push_back(job);
                self.start_next(p);
            }
            Event::PeerDone(p) => self.on_peer_done(p),
            Event::OrdererArrive(tx) => {
                self.orderer_queue.push_back(tx);
                self.start_orderer();
            }
            Event::OrdererDone => self.on_orderer_done(),
            Event::BatchTimeout(ci, gen) => {
                if self.channels[ci].timer_gen == gen {
                    self.try_cut(ci);
                }
            }
        }
        true
    }

    fn finish(&mut self, tx: TxId, status: TxStatus) {
        let t = &mut self.txs[tx as usize];
        t.status = status;
        t.committed_us = Some(self.now);
    }

    fn on_submit(&mut self, tx: TxId) {
        let ci = self
            .channel_index(&self.txs[tx as usize].channel)
            .expect("checked at submit");
        if self.channels[ci].in_flight >= self.config.orderer.queue_bound {
            self.finish(tx, TxStatus::Invalid(InvalidReason::Dropped));
            return;
        }
        self.channels[ci].in_flight += 1;
        let arrive = self.now + ms_to_time(self.config.cost.net_submit_ms);
        for m in self.channels[ci].members.clone() {
            self.schedule(arrive, Event::PeerArrive(m, Job::Endorse(tx)));
        }
    }

    fn start_next(&mut self, p: usize) {
        if self.peers[p].running.is_some() {
            return;
        }
        let Some(job) = self.peers[p].queue.pop_front() else {
            return;
        };
        let cost = self.config.cost;
        let (service_ms, outcome) = match job {
            Job::Endorse(tx) => {
                let (units, outcome) = self.execute(p, tx);
                let slow = 1.0 + cost.worker_contention * (self.client_workers as f64 - 1.0);
                (
                    (cost.endorse_base_ms + cost.endorse_per_unit_ms * units) * slow,
                    Some(outcome),
                )
            }
            Job::Validate(ci, n) => {
                let count = self.channels[ci].chain[n as usize].txs.len() as f64;
                (cost.validate_base_ms + cost.validate_per_tx_ms * count, None)
            }
        };
        self.peers[p].running = Some((job, outcome));
        self.schedule(self.now + ms_to_time(service_ms).max(1), Event::PeerDone(p));
    }

    /// Simulates the contract on peer `p`'s current replica.
    fn execute(&self, p: usize, tx: TxId) -> (f64, EndorseOutcome) {
        let t = &self.txs[tx as usize];
        let ci = self.channel_index(&t.channel).expect("known channel");
        let chan = &self.channels[ci];
        let peer = &self.peers[p];
        let state = &peer.replicas[&ci];
        let main = match chan.kind {
            ChannelKind::Mainchain => None,
            ChannelKind::Shard => peer.replicas.get(&0),
        };
        let mut ctx = TxContext::new(tx, &chan.id, state, main);
        let response = chan.contracts[&t.contract]
            .invoke(&mut ctx, &t.op, &t.args)
            .map_err(|e| e.0);
        let (read_set, write_set, units) = ctx.into_rwset();
        let digest = rwset_digest(&read_set, &write_set, response.as_deref().unwrap_or(""));
        (
            units,
            EndorseOutcome {
                read_set,
                write_set,
                response,
                digest,
            },
        )
    }

    fn on_peer_done(&mut self, p: usize) {
        let (job, outcome) = self.peers[p].running.take().expect("peer was busy");
        match job {
            Job::Endorse(tx) => self.on_endorsed(p, tx, outcome.expect("endorse outcome")),
            Job::Validate(ci, n) => self.on_validated(p, ci, n),
        }
        self.start_next(p);
    }

    fn on_endorsed(&mut self, p: usize, tx: TxId, outcome: EndorseOutcome) {
        let ci = self
            .channel_index(&self.txs[tx as usize].channel)
            .expect("known channel");
        let collected = self.endorsements.entry(tx).or_default();
        collected.push((p, outcome));
        if collected.len() < self.channels[ci].members.len() {
            return;
        }
        let mut collected = self.endorsements.remove(&tx).expect("present");
        collected.sort_by_key(|(p, _)| *p);
        self.txs[tx as usize].endorsed_us = Some(self.now);
        if let Some(msg) = collected.iter().find_map(|(_, o)| o.response.as_ref().err()) {
            let msg = msg.clone();
            self.channels[ci].in_flight -= 1;
            self.finish(tx, TxStatus::Invalid(InvalidReason::Contract(msg)));
            return;
        }
        let first = &collected[0].1;
        let t = &mut self.txs[tx as usize];
        t.endorsements = collected
            .iter()
            .map(|(p, o)| Endorsement {
                peer: self.peers[*p].id.clone(),
                digest: o.digest.clone(),
            })
            .collect();
        t.read_set = first.read_set.clone();
        t.write_set = first.write_set.clone();
        t.response = first.response.clone().ok();
        let agreed = collected.iter().all(|(_, o)| o.digest == first.digest);
        let chan = &self.channels[ci];
        if !agreed || !endorsed(&block_tx(t), chan.policy, &chan.member_orgs) {
            self.channels[ci].in_flight -= 1;
            self.finish(tx, TxStatus::Invalid(InvalidReason::Endorsement));
            return;
        }
        self.schedule(
            self.now + ms_to_time(self.config.cost.net_submit_ms),
            Event::OrdererArrive(tx),
        );
    }

    fn start_orderer(&mut self) {
        if self.orderer_busy.is_some() {
            return;
        }
        if let Some(tx) = self.orderer_queue.pop_front() {
            self.orderer_busy = Some(tx);
            let service = ms_to_time(self.config.cost.order_per_tx_ms);
            self.schedule(self.now + service, Event::OrdererDone);
        }
    }

    fn on_orderer_done(&mut self) {
        let tx = self.orderer_busy.take().expect("orderer was busy");
        let ci = self
            .channel_index(&self.txs[tx as usize].channel)
            .expect("known channel");
        let was_empty = self.channels[ci].queue.is_empty();
        self.channels[ci].queue.push_back((tx, self.now));
        if self.try_cut(ci).is_none() && was_empty {
            self.arm_timer(ci);
        }
        self.start_orderer();
    }

    fn arm_timer(&mut self, ci: usize) {
        let Some(&(_, oldest)) = self.channels[ci].queue.front() else {
            return;
        };
        self.channels[ci].timer_gen += 1;
        let gen = self.channels[ci].timer_gen;
        let due = (oldest + ms_to_time(self.config.orderer.batch_timeout_ms)).max(self.now);
        self.schedule(due, Event::BatchTimeout(ci, gen));
    }

    fn try_cut(&mut self, ci: usize) -> Option<u64> {
        let batch = self.config.orderer.batch_size;
        let timeout = ms_to_time(self.config.orderer.batch_timeout_ms);
        let chan = &self.channels[ci];
        let &(_, oldest) = chan.queue.front()?;
        if chan.queue.len() < batch && self.now < oldest + timeout {
            return None;
        }
        let take = chan.queue.len().min(batch);
        let ids: Vec<TxId> = self.channels[ci].queue.drain(..take).map(|(t, _)| t).collect();
        let n = self.commit_block(ci, &ids);
        self.channels[ci].timer_gen += 1;
        if !self.channels[ci].queue.is_empty() && self.try_cut(ci).is_none() {
            self.arm_timer(ci);
        }
        Some(n)
    }

    /// Validates a batch against the channel state, appends the block and
    /// ships it to the members.
    fn commit_block(&mut self, ci: usize, ids: &[TxId]) -> u64 {
        let now = self.now;
        let chan = &mut self.channels[ci];
        let number = chan.chain.len() as u64;
        let mut txs: Vec<BlockTx> = ids.iter().map(|&id| block_tx(&self.txs[id as usize])).collect();
        let statuses = validate_block(&chan.state, number, &txs, chan.policy, &chan.member_orgs);
        for (t, s) in txs.iter_mut().zip(statuses) {
            t.status = s;
        }
        let mut block = Block {
            number,
            channel: chan.id.clone(),
            prev_hash: chan.chain.last().expect("genesis").hash.clone(),
            config: None,
            txs,
            hash: String::new(),
        };
        block.hash = block_hash(&block);
        apply_block(&mut chan.state, &block);
        chan.chain.push(block);
        for &id in ids {
            let t = &mut self.txs[id as usize];
            t.ordered_us = Some(now);
            t.block = Some(number);
        }
        let arrive = now + ms_to_time(self.config.cost.net_deliver_ms);
        for m in self.channels[ci].members.clone() {
            self.schedule(arrive, Event::PeerArrive(m, Job::Validate(ci, number)));
        }
        number
    }

    fn on_validated(&mut self, p: usize, ci: usize, n: u64) {
        let chan = &self.channels[ci];
        let block = &chan.chain[n as usize];
        let peer_id = self.peers[p].id.clone();
        let replica = self.peers[p].replicas.get_mut(&ci).expect("member replica");
        let mine = validate_block(replica, n, &block.txs, chan.policy, &chan.member_orgs);
        if mine.iter().zip(&block.txs).any(|(s, t)| *s != t.status) {
            self.forks.push(format!("{} block {n} on {peer_id}", chan.id));
        }
        apply_block(replica, block);
        if self.audit {
            self.checkpoints.push(ReplicaCheckpoint {
                channel: chan.id.clone(),
                block: n,
                peer: peer_id,
                state_digest: replica.digest(),
            });
        }
        let members = chan.members.len();
        let done = {
            let c = self.channels[ci].applied_by.entry(n).or_insert(0);
            *c += 1;
            *c == members
        };
        if done {
            self.channels[ci].applied_by.remove(&n);
            let statuses: Vec<(TxId, TxStatus)> = self.channels[ci].chain[n as usize]
                .txs
                .iter()
                .map(|t| (t.id, t.status.clone()))
                .collect();
            self.channels[ci].in_flight -= statuses.len();
            for (id, s) in statuses {
                self.finish(id, s);
            }
        }
    }
}

fn block_tx(t: &Transaction) -> BlockTx {
    BlockTx {
        id: t.id,
        contract: t.contract.clone(),
        op: t.op.clone(),
        args: t.args.clone(),
        read_set: t.read_set.clone(),
        write_set: t.write_set.clone(),
        response: t.response.clone().unwrap_or_default(),
        endorsements: t.endorsements.clone(),
        status: TxStatus::Pending,
    }
}
