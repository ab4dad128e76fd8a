//! Single-field corruption of committed blocks, for exercising the verifier.

use rand::Rng;
use serde::Serialize;

use super::types::{Block, Digest};
use crate::lane::Lane;

/// Where a mutation landed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MutationSite {
    pub height: u64,
    pub field: String,
}

fn flip_bit(d: &mut Digest, rng: &mut impl Rng) {
    let bit = rng.gen_range(0..256);
    d.0[bit / 8] ^= 1 << (bit % 8);
}

fn bump(v: &mut u64, rng: &mut impl Rng) {
    *v ^= 1 << rng.gen_range(0..16);
}

fn rename(s: &str, rng: &mut impl Rng) -> String {
    let mut bytes = s.as_bytes().to_vec();
    if bytes.is_empty() || rng.gen_bool(0.5) {
        bytes.push(b'x');
    } else {
        let i = rng.gen_range(0..bytes.len());
        bytes[i] = if bytes[i] == b'Z' { b'Y' } else { b'Z' };
    }
    String::from_utf8(bytes).expect("ascii edit")
}

/// Changes exactly one field of one block to a different value.
///
/// # Panics
/// If `blocks` is empty.
pub fn mutate_random_field(blocks: &mut [Block], rng: &mut impl Rng) -> MutationSite {
    assert!(!blocks.is_empty(), "nothing to mutate");
    let index = rng.gen_range(0..blocks.len());
    let block = &mut blocks[index];
    let height = block.height;

    let tx_fields = block.transactions.len() * 12;
    let genesis_fields = block
        .genesis
        .as_ref()
        .map_or(0, |g| g.validators.len() + 2 * g.allocations.len());
    let pick = rng.gen_range(0..5 + tx_fields + genesis_fields);

    let field = match pick {
        0 => {
            bump(&mut block.height, rng);
            "height".to_owned()
        }
        1 => {
            flip_bit(&mut block.parent_hash, rng);
            "parent_hash".to_owned()
        }
        2 => {
            block.proposer = rename(block.proposer.as_str(), rng).into();
            "proposer".to_owned()
        }
        3 => {
            bump(&mut block.tick, rng);
            "tick".to_owned()
        }
        4 => {
            flip_bit(&mut block.block_hash, rng);
            "block_hash".to_owned()
        }
        p if p < 5 + tx_fields => {
            let (i, f) = ((p - 5) / 12, (p - 5) % 12);
            let tx = &mut block.transactions[i];
            let name = match f {
                0 => {
                    flip_bit(&mut tx.tx_id, rng);
                    "tx_id"
                }
                1 => {
                    tx.from = rename(tx.from.as_str(), rng).into();
                    "from"
                }
                2 => {
                    tx.to = rename(tx.to.as_str(), rng).into();
                    "to"
                }
                3 => {
                    bump(&mut tx.amount, rng);
                    "amount"
                }
                4 => {
                    bump(&mut tx.tick, rng);
                    "tick"
                }
                5 => {
                    bump(&mut tx.nonce, rng);
                    "nonce"
                }
                _ => match &mut tx.contract {
                    None => {
                        bump(&mut tx.amount, rng);
                        "amount"
                    }
                    Some(c) => match f {
                        6 => {
                            c.vehicle_id = rename(c.vehicle_id.as_str(), rng).into();
                            "contract.vehicle_id"
                        }
                        7 => {
                            c.toll_id = rename(c.toll_id.as_str(), rng).into();
                            "contract.toll_id"
                        }
                        8 => {
                            c.lane = match c.lane {
                                Lane::Fast => Lane::Economic,
                                Lane::Economic => Lane::Fast,
                            };
                            "contract.lane"
                        }
                        9 => {
                            bump(&mut c.price, rng);
                            "contract.price"
                        }
                        10 => {
                            c.negotiated_rounds ^= 1 << rng.gen_range(0..8);
                            "contract.negotiated_rounds"
                        }
                        _ => {
                            bump(&mut c.tick, rng);
                            "contract.tick"
                        }
                    },
                },
            };
            format!("transactions[{i}].{name}")
        }
        p => {
            let g = block.genesis.as_mut().expect("genesis fields only counted on genesis");
            let k = p - 5 - tx_fields;
            if k < g.validators.len() {
                g.validators[k] = rename(g.validators[k].as_str(), rng).into();
                format!("genesis.validators[{k}]")
            } else {
                let k = k - g.validators.len();
                let a = &mut g.allocations[k / 2];
                if k.is_multiple_of(2) {
                    a.account = rename(a.account.as_str(), rng).into();
                    format!("genesis.allocations[{}].account", k / 2)
                } else {
                    bump(&mut a.balance, rng);
                    format!("genesis.allocations[{}].balance", k / 2)
                }
            }
        }
    };
    MutationSite { height, field }
}
