//! Full-chain verification.
//!
//! Every invariant is checked independently and all violations are collected;
//! an empty report means the chain is valid.

use std::fmt;

use serde::Serialize;

use super::chain::{proposer_index, Chain};
use super::codec::{hash_block, hash_transaction};
use super::state::WalletState;
use super::types::{AccountId, Block, Digest};
use super::LedgerError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyChain,
    MissingGenesis,
    UnexpectedGenesis {
        height: u64,
    },
    EmptyValidatorSet,
    InvalidGenesisAllocation {
        reason: String,
    },
    /// `height` is the block's position; `found` the height it claims.
    HeightDiscontinuity {
        height: u64,
        found: u64,
    },
    ParentHashMismatch {
        height: u64,
    },
    /// Stored digest differs from the digest recomputed along the chain.
    HashMismatch {
        height: u64,
    },
    ProposerMismatch {
        height: u64,
        expected: AccountId,
        found: AccountId,
    },
    TickRegression {
        height: u64,
    },
    TxIdMismatch {
        height: u64,
        index: usize,
    },
    TxTickAfterBlock {
        height: u64,
        index: usize,
    },
    NonceOrder {
        height: u64,
        index: usize,
        reason: String,
    },
    NegativeBalance {
        height: u64,
        index: usize,
        reason: String,
    },
    InvalidTransaction {
        height: u64,
        index: usize,
        reason: String,
    },
    SupplyMismatch {
        total_supply: u64,
        balance_sum: u128,
    },
    StateMismatch,
    ValidatorMismatch,
}

impl Violation {
    pub fn height(&self) -> Option<u64> {
        use Violation::*;
        match self {
            UnexpectedGenesis { height }
            | HeightDiscontinuity { height, .. }
            | ParentHashMismatch { height }
            | HashMismatch { height }
            | ProposerMismatch { height, .. }
            | TickRegression { height }
            | TxIdMismatch { height, .. }
            | TxTickAfterBlock { height, .. }
            | NonceOrder { height, .. }
            | NegativeBalance { height, .. }
            | InvalidTransaction { height, .. } => Some(*height),
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyChain => write!(f, "chain holds no blocks"),
            MissingGenesis => write!(f, "first block is not a genesis block"),
            UnexpectedGenesis { height } => write!(f, "height {height}: genesis data outside height 0"),
            EmptyValidatorSet => write!(f, "genesis declares no validators"),
            InvalidGenesisAllocation { reason } => write!(f, "genesis allocation: {reason}"),
            HeightDiscontinuity { height, found } => {
                write!(f, "height {height}: block claims height {found}")
            }
            ParentHashMismatch { height } => write!(f, "height {height}: parent hash does not link to predecessor"),
            HashMismatch { height } => write!(f, "height {height}: block hash mismatch"),
            ProposerMismatch {
                height,
                expected,
                found,
            } => {
                write!(f, "height {height}: proposer {found}, expected {expected}")
            }
            TickRegression { height } => write!(f, "height {height}: tick does not advance"),
            TxIdMismatch { height, index } => write!(f, "height {height} tx {index}: tx_id mismatch"),
            TxTickAfterBlock { height, index } => {
                write!(f, "height {height} tx {index}: transaction tick after block tick")
            }
            NonceOrder { height, index, reason } => write!(f, "height {height} tx {index}: {reason}"),
            NegativeBalance { height, index, reason } => write!(f, "height {height} tx {index}: {reason}"),
            InvalidTransaction { height, index, reason } => {
                write!(f, "height {height} tx {index}: {reason}")
            }
            SupplyMismatch {
                total_supply,
                balance_sum,
            } => {
                write!(f, "balances sum to {balance_sum}, total supply is {total_supply}")
            }
            StateMismatch => write!(f, "stored wallet state differs from replay"),
            ValidatorMismatch => write!(f, "validator set differs from genesis"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Distinct heights named by any violation, ascending.
    pub fn flagged_heights(&self) -> Vec<u64> {
        let mut hs: Vec<u64> = self.violations.iter().filter_map(Violation::height).collect();
        hs.sort_unstable();
        hs.dedup();
        hs
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Verifies a chain value, including that its cached state and validator set
/// match what the blocks replay to.
pub fn verify_chain(chain: &Chain) -> VerificationReport {
    let (mut report, replayed) = verify_inner(chain.blocks());
    if let Some((state, validators)) = replayed {
        if &state != chain.state() {
            report.violations.push(Violation::StateMismatch);
        }
        if validators != chain.validators() {
            report.violations.push(Violation::ValidatorMismatch);
        }
    }
    report
}

/// Verifies a bare block sequence (for example one read from a chain file).
pub fn verify_blocks(blocks: &[Block]) -> VerificationReport {
    verify_inner(blocks).0
}

fn verify_inner(blocks: &[Block]) -> (VerificationReport, Option<(WalletState, Vec<AccountId>)>) {
    let mut out = Vec::new();
    let Some(first) = blocks.first() else {
        return (
            VerificationReport {
                violations: vec![Violation::EmptyChain],
            },
            None,
        );
    };

    let (validators, mut state) = match &first.genesis {
        None => {
            out.push(Violation::MissingGenesis);
            (Vec::new(), WalletState::default())
        }
        Some(g) => {
            if g.validators.is_empty() {
                out.push(Violation::EmptyValidatorSet);
            }
            let state =
                match WalletState::from_allocations(g.allocations.iter().map(|a| (a.account.clone(), a.balance))) {
                    Ok(s) => s,
                    Err(e) => {
                        out.push(Violation::InvalidGenesisAllocation { reason: e.to_string() });
                        WalletState::default()
                    }
                };
            (g.validators.clone(), state)
        }
    };
    if !first.transactions.is_empty() {
        out.push(Violation::InvalidTransaction {
            height: 0,
            index: 0,
            reason: "genesis block carries transactions".into(),
        });
    }
    if first.parent_hash != Digest::ZERO {
        out.push(Violation::ParentHashMismatch { height: 0 });
    }

    // Digest of each block recomputed with its parent link taken from the
    // recomputed predecessor, so a single mutation taints every descendant.
    let mut linked_prev = Digest::ZERO;
    for (index, block) in blocks.iter().enumerate() {
        // Violations are keyed by position, which is the true height of a
        // well-formed chain.
        let height = index as u64;
        if block.height != height {
            out.push(Violation::HeightDiscontinuity {
                height,
                found: block.height,
            });
        }
        if index > 0 {
            let prev = &blocks[index - 1];
            if block.parent_hash != prev.block_hash {
                out.push(Violation::ParentHashMismatch { height });
            }
            if block.tick <= prev.tick {
                out.push(Violation::TickRegression { height });
            }
            if block.genesis.is_some() {
                out.push(Violation::UnexpectedGenesis { height });
            }
        }

        let mut relinked = block.clone();
        relinked.parent_hash = linked_prev;
        let recomputed = hash_block(&relinked);
        if recomputed != block.block_hash || hash_block(block) != block.block_hash {
            out.push(Violation::HashMismatch { height });
        }
        linked_prev = recomputed;

        if !validators.is_empty() {
            let expected = &validators[proposer_index(height, validators.len())];
            if &block.proposer != expected {
                out.push(Violation::ProposerMismatch {
                    height,
                    expected: expected.clone(),
                    found: block.proposer.clone(),
                });
            }
        }

        if index == 0 {
            continue;
        }
        for (i, tx) in block.transactions.iter().enumerate() {
            if hash_transaction(tx) != tx.tx_id {
                out.push(Violation::TxIdMismatch { height, index: i });
            }
            if tx.tick > block.tick {
                out.push(Violation::TxTickAfterBlock { height, index: i });
            }
            match state.apply_in_place(tx) {
                Ok(()) => {}
                // Already reported above.
                Err(LedgerError::TxIdMismatch) => {}
                Err(e @ LedgerError::BadNonce { .. }) => out.push(Violation::NonceOrder {
                    height,
                    index: i,
                    reason: e.to_string(),
                }),
                Err(e @ LedgerError::InsufficientFunds { .. }) => out.push(Violation::NegativeBalance {
                    height,
                    index: i,
                    reason: e.to_string(),
                }),
                Err(e) => out.push(Violation::InvalidTransaction {
                    height,
                    index: i,
                    reason: e.to_string(),
                }),
            }
        }
    }

    let sum = state.balance_sum();
    if sum != u128::from(state.total_supply()) {
        out.push(Violation::SupplyMismatch {
            total_supply: state.total_supply(),
            balance_sum: sum,
        });
    }

    (VerificationReport { violations: out }, Some((state, validators)))
}
