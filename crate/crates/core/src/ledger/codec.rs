//! Canonical length-prefixed serialization and SHA-256 digests.
//!
//! Integers are 8-byte big-endian; byte strings are prefixed with their
//! length as a u64; optional values carry a one-byte presence tag.

use sha2::{Digest as _, Sha256};

use super::types::{Block, Digest, PassageContract, Transaction};

struct Encoder(Vec<u8>);

impl Encoder {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }

    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    fn contract(&mut self, c: &PassageContract) {
        self.str(c.vehicle_id.as_str());
        self.str(c.toll_id.as_str());
        self.u8(c.lane.tag());
        self.u64(c.price);
        self.u64(u64::from(c.negotiated_rounds));
        self.u64(c.tick);
    }

    fn transaction_body(&mut self, tx: &Transaction) {
        self.str(tx.from.as_str());
        self.str(tx.to.as_str());
        self.u64(tx.amount);
        match &tx.contract {
            None => self.u8(0),
            Some(c) => {
                self.u8(1);
                self.contract(c);
            }
        }
        self.u64(tx.tick);
        self.u64(tx.nonce);
    }
}

const TX_DOMAIN: &[u8] = b"toll-ledger/tx/v1";
const BLOCK_DOMAIN: &[u8] = b"toll-ledger/block/v1";

/// Canonical bytes of every transaction field except `tx_id`.
pub fn canonical_transaction_bytes(tx: &Transaction) -> Vec<u8> {
    let mut enc = Encoder(Vec::with_capacity(128));
    enc.bytes(TX_DOMAIN);
    enc.transaction_body(tx);
    enc.0
}

pub fn hash_transaction(tx: &Transaction) -> Digest {
    sha256(&canonical_transaction_bytes(tx))
}

/// Canonical bytes of every block field except `block_hash`.
pub fn canonical_block_bytes(block: &Block) -> Vec<u8> {
    let mut enc = Encoder(Vec::with_capacity(256));
    enc.bytes(BLOCK_DOMAIN);
    enc.u64(block.height);
    enc.bytes(&block.parent_hash.0);
    enc.str(block.proposer.as_str());
    enc.u64(block.tick);
    enc.u64(block.transactions.len() as u64);
    for tx in &block.transactions {
        enc.bytes(&tx.tx_id.0);
        enc.transaction_body(tx);
    }
    match &block.genesis {
        None => enc.u8(0),
        Some(g) => {
            enc.u8(1);
            enc.u64(g.validators.len() as u64);
            for v in &g.validators {
                enc.str(v.as_str());
            }
            enc.u64(g.allocations.len() as u64);
            for a in &g.allocations {
                enc.str(a.account.as_str());
                enc.u64(a.balance);
            }
        }
    }
    enc.0
}

/// Digest over the canonical block serialization. Pure; ignores the stored
/// `block_hash`.
pub fn hash_block(block: &Block) -> Digest {
    sha256(&canonical_block_bytes(block))
}

pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}
