use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use toll_core::lane::Lane;
use toll_core::ledger::tamper::mutate_random_field;
use toll_core::ledger::{
    hash_transaction, read_ndjson, verify_blocks, write_ndjson, AccountId, Chain, PassageContract, Transaction,
};

fn golden() -> Value {
    serde_json::from_str(include_str!("data/golden.json")).unwrap()
}

fn contract(vehicle: &str, toll: &str, lane: Lane, price: u64, rounds: u32, tick: u64) -> PassageContract {
    PassageContract {
        vehicle_id: vehicle.into(),
        toll_id: toll.into(),
        lane,
        price,
        negotiated_rounds: rounds,
        tick,
    }
}

fn golden_chain() -> Chain {
    let balances = [("T1", 0), ("T2", 0), ("V1", 1000), ("V2", 500)].map(|(a, b)| (AccountId::from(a), b));
    Chain::genesis(vec!["T1".into(), "T2".into()], balances).unwrap()
}

#[test]
fn hashes_match_frozen_vectors() {
    let g = golden();
    let mut chain = golden_chain();
    assert_eq!(chain.tip().block_hash.to_hex(), g["genesis_hash"]);

    let batch = chain
        .settle_batch(
            &[
                contract("V2", "T2", Lane::Economic, 5, 0, 3),
                contract("V1", "T1", Lane::Fast, 12, 2, 3),
            ],
            3,
        )
        .unwrap();
    assert!(batch.failures.is_empty());
    let block = chain.tip();
    let ids: Vec<String> = block.transactions.iter().map(|t| t.tx_id.to_hex()).collect();
    assert_eq!(serde_json::json!(ids), g["settlement_tx_ids"]);
    assert_eq!(block.block_hash.to_hex(), g["block1_hash"]);

    chain.append_block(Vec::new(), 4).unwrap();
    assert_eq!(chain.tip().block_hash.to_hex(), g["heartbeat_block2_hash"]);

    let plain = Transaction::new("V1".into(), "V2".into(), 7, None, 9, 4);
    assert_eq!(hash_transaction(&plain).to_hex(), g["plain_transfer_tx_id"]);
}

fn busy_chain(seed: u64, blocks: usize) -> Chain {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vehicles: Vec<String> = (1..=5).map(|i| format!("V{i}")).collect();
    let tolls = ["T1", "T2", "T3"];
    let balances = tolls
        .iter()
        .map(|t| (AccountId::from(*t), 0))
        .chain(vehicles.iter().map(|v| (AccountId::from(v.as_str()), 500)));
    let mut chain = Chain::genesis(tolls.iter().map(|t| AccountId::from(*t)).collect(), balances).unwrap();
    for tick in 1..=blocks as u64 {
        let n = rng.gen_range(0..4);
        let contracts: Vec<_> = (0..n)
            .map(|_| {
                let v = &vehicles[rng.gen_range(0..vehicles.len())];
                let t = tolls[rng.gen_range(0..tolls.len())];
                let lane = if rng.gen_bool(0.5) { Lane::Fast } else { Lane::Economic };
                contract(v, t, lane, rng.gen_range(1..30), rng.gen_range(0..4), tick)
            })
            .collect();
        if contracts.is_empty() {
            chain.append_block(Vec::new(), tick).unwrap();
        } else {
            chain.settle_batch(&contracts, tick).unwrap();
        }
    }
    chain
}

#[test]
fn every_single_field_mutation_is_detected() {
    let chain = busy_chain(7, 40);
    assert!(chain.verify().is_valid());
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let mut blocks = chain.blocks().to_vec();
        let site = mutate_random_field(&mut blocks, &mut rng);
        let report = verify_blocks(&blocks);
        assert!(!report.is_valid(), "undetected mutation at {site:?}");
        assert!(
            report.flagged_heights().contains(&site.height),
            "{site:?} not flagged: {report}"
        );
        assert!(Chain::from_blocks(blocks).is_err());
    }
}

#[test]
fn ndjson_round_trip_replays_identically() {
    let chain = busy_chain(3, 25);
    let text = write_ndjson(chain.blocks());
    assert_eq!(text.lines().count(), chain.blocks().len());
    let blocks = read_ndjson(&text).unwrap();
    let replayed = Chain::from_blocks(blocks).unwrap();
    assert_eq!(replayed.state(), chain.state());
    assert_eq!(replayed.tip().block_hash, chain.tip().block_hash);
    assert_eq!(write_ndjson(replayed.blocks()), text);
}

#[test]
fn proposers_share_blocks_evenly() {
    let chain = busy_chain(11, 300);
    let mut counts = std::collections::BTreeMap::new();
    for b in &chain.blocks()[1..] {
        assert_eq!(&b.proposer, &chain.validators()[(b.height % 3) as usize]);
        *counts.entry(b.proposer.clone()).or_insert(0u32) += 1;
    }
    assert_eq!(counts.len(), 3);
    let (min, max) = (counts.values().min().unwrap(), counts.values().max().unwrap());
    assert!(max - min <= 1, "{counts:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_holds_after_every_block(seed in any::<u64>(), len in 1usize..30) {
        let chain = busy_chain(seed, len);
        let supply = u128::from(chain.total_supply());
        let mut replay = Chain::from_blocks(chain.blocks()[..1].to_vec()).unwrap();
        for b in &chain.blocks()[1..] {
            replay.append_block(b.transactions.clone(), b.tick).unwrap();
            prop_assert_eq!(replay.state().balance_sum(), supply);
        }
        prop_assert_eq!(replay.tip().block_hash, chain.tip().block_hash);
    }

    #[test]
    fn same_inputs_same_chain(seed in any::<u64>()) {
        let a = busy_chain(seed, 15);
        let b = busy_chain(seed, 15);
        prop_assert_eq!(write_ndjson(a.blocks()), write_ndjson(b.blocks()));
    }
}
