// Copyright (c) The DVS Ledger Contributors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use proptest::prelude::*;

use dvs_core::ledger::{
    ms_to_time, parse_chain_jsonl, verify_chain, ChannelKind, Contract, ContractError, Network, NetworkConfig,
    TxContext,
};

struct Kv;

impl Contract for Kv {
    fn name(&self) -> &str {
        "kv"
    }

    fn invoke(&self, ctx: &mut TxContext<'_>, op: &str, args: &str) -> Result<String, ContractError> {
        match op {
            "put" => {
                let (k, v) = args.split_once('=').ok_or_else(|| ContractError::new("bad args"))?;
                ctx.put_state(k, v.to_string());
                Ok(String::new())
            }
            "incr" => {
                let n: u64 = ctx.get_state(args).and_then(|v| v.parse().ok()).unwrap_or(0);
                ctx.put_state(args, (n + 1).to_string());
                Ok((n + 1).to_string())
            }
            _ => Err(ContractError::new("unknown op")),
        }
    }
}

fn network(config: &str) -> Network {
    let mut net = Network::bootstrap(NetworkConfig::parse(config).unwrap()).unwrap();
    for ch in net.channel_ids() {
        net.deploy_contract(&ch, Arc::new(Kv)).unwrap();
    }
    net
}

fn two_shard() -> Network {
    network(include_str!("../data/network_2shard.json"))
}

#[test]
fn mainchain_spans_all_peers_and_shards_their_committees() {
    for cfg in [
        include_str!("../data/network_noshard.json"),
        include_str!("../data/network_2shard.json"),
        include_str!("../data/network_3shard.json"),
    ] {
        let net = network(cfg);
        let peers = net.config().peers.len();
        let mut covered = std::collections::BTreeSet::new();
        for ch in net.channel_ids() {
            let members = net.members(&ch).unwrap();
            match net.channel_kind(&ch).unwrap() {
                ChannelKind::Mainchain => assert_eq!(members.len(), peers),
                ChannelKind::Shard => {
                    assert!(members.len() < peers);
                    assert!(members.iter().all(|m| covered.insert(m.clone())), "committees overlap");
                }
            }
        }
    }
}

#[test]
fn light_load_commits_everything_valid() {
    let mut net = two_shard();
    let mut ids = Vec::new();
    for i in 0..60u64 {
        let ch = if i % 2 == 0 { "shard1" } else { "shard2" };
        ids.push(
            net.submit(ch, "kv", "put", format!("k{i}={i}"), ms_to_time(20.0 * i as f64))
                .unwrap(),
        );
    }
    net.run_until_idle();
    for id in ids {
        let t = net.tx(id).unwrap();
        assert!(t.status.is_valid(), "{t:?}");
        let (e, o, c) = (t.endorsed_us.unwrap(), t.ordered_us.unwrap(), t.committed_us.unwrap());
        assert!(t.submitted_us <= e && e <= o && o <= c);
    }
}

#[test]
fn versions_increase_per_key() {
    let mut net = two_shard();
    let mut last = None;
    for i in 0..10u64 {
        let at = ms_to_time(300.0 * i as f64);
        net.submit("shard1", "kv", "incr", "n".into(), at).unwrap();
        net.run_until(at + ms_to_time(250.0));
        let v = net.canonical_state("shard1").unwrap().version("n").unwrap();
        assert!(last.is_none_or(|l| v > l));
        last = Some(v);
    }
    assert_eq!(net.query_state("shard1", "n").unwrap().as_deref(), Some("10"));
}

#[test]
fn shards_commute() {
    let ops: Vec<(&str, String)> = (0..40)
        .map(|i| (if i % 3 == 0 { "shard2" } else { "shard1" }, format!("k{}={i}", i % 7)))
        .collect();
    let run = |order: Vec<&(&str, String)>| {
        let mut net = two_shard();
        for (n, (ch, args)) in order.into_iter().enumerate() {
            net.submit(ch, "kv", "put", args.clone(), ms_to_time(30.0 * n as f64))
                .unwrap();
        }
        net.run_until_idle();
        ["shard1", "shard2"].map(|c| net.canonical_state(c).unwrap().to_bytes())
    };
    // Same per-shard order, different interleaving across shards.
    let interleaved = run(ops.iter().collect());
    let (a, b): (Vec<_>, Vec<_>) = ops.iter().partition(|(c, _)| *c == "shard1");
    let grouped = run(b.into_iter().chain(a).collect());
    let values = |bytes: &Vec<u8>| {
        let v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        v.as_object()
            .unwrap()
            .iter()
            .map(|(k, x)| (k.clone(), x["value"].clone()))
            .collect::<Vec<_>>()
    };
    for (x, y) in interleaved.iter().zip(&grouped) {
        assert_eq!(values(x), values(y));
    }
}

fn exported_chain() -> String {
    let mut net = two_shard();
    for i in 0..30u64 {
        net.submit(
            "shard1",
            "kv",
            "incr",
            format!("c{}", i % 3),
            ms_to_time(15.0 * i as f64),
        )
        .unwrap();
    }
    net.run_until_idle();
    let mut out = Vec::new();
    net.export_jsonl("shard1", &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn any_bit_flip_is_detected_or_inert(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        static CHAIN: std::sync::OnceLock<String> = std::sync::OnceLock::new();
        let text = CHAIN.get_or_init(exported_chain);
        let original = parse_chain_jsonl(text).unwrap();
        prop_assert!(verify_chain(&original).ok);
        let mut bytes = text.as_bytes().to_vec();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        let Ok(s) = std::str::from_utf8(&bytes) else { return Ok(()) };
        if let Ok(blocks) = parse_chain_jsonl(s) {
            // A flip that parses to the same content is no mutation at all.
            prop_assert!(blocks == original || !verify_chain(&blocks).ok);
        }
    }
}
