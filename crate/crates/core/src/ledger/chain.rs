use super::codec::hash_block;
use super::state::WalletState;
use super::types::{AccountId, Allocation, Block, Digest, GenesisSpec, PassageContract, Receipt, Transaction};
use super::verify::{verify_blocks, VerificationReport};
use super::LedgerError;

/// An append-only, hash-linked sequence of blocks with the wallet state they
/// produce. Proposers rotate round-robin over `validators` by height.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
    state: WalletState,
    validators: Vec<AccountId>,
}

/// Outcome of sealing several settlements into one block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BatchSettlement {
    /// Index into the input slice and the receipt of each settled contract.
    pub receipts: Vec<(usize, Receipt)>,
    /// Index into the input slice and the reason each contract was refused.
    pub failures: Vec<(usize, LedgerError)>,
}

pub(crate) fn proposer_index(height: u64, validator_count: usize) -> usize {
    (height % validator_count as u64) as usize
}

impl Chain {
    /// Creates a chain holding only the genesis block at tick 0.
    pub fn genesis<I>(validators: Vec<AccountId>, initial_balances: I) -> Result<Chain, LedgerError>
    where
        I: IntoIterator<Item = (AccountId, u64)>,
    {
        if validators.is_empty() {
            return Err(LedgerError::EmptyValidatorSet);
        }
        for (i, v) in validators.iter().enumerate() {
            if validators[..i].contains(v) {
                return Err(LedgerError::DuplicateValidator(v.clone()));
            }
        }
        let allocations: Vec<(AccountId, u64)> = initial_balances.into_iter().collect();
        let state = WalletState::from_allocations(allocations.iter().cloned())?;

        let mut block = Block {
            height: 0,
            parent_hash: Digest::ZERO,
            proposer: validators[0].clone(),
            tick: 0,
            transactions: Vec::new(),
            genesis: Some(GenesisSpec {
                validators: validators.clone(),
                allocations: allocations
                    .into_iter()
                    .map(|(account, balance)| Allocation { account, balance })
                    .collect(),
            }),
            block_hash: Digest::ZERO,
        };
        block.block_hash = hash_block(&block);

        Ok(Chain {
            blocks: vec![block],
            state,
            validators,
        })
    }

    /// Rebuilds a chain from imported blocks. Fails with the full violation
    /// report if the blocks do not verify.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Chain, LedgerError> {
        let report = verify_blocks(&blocks);
        if !report.is_valid() {
            return Err(LedgerError::InvalidChain(report));
        }
        let genesis = blocks[0].genesis.clone().expect("verified genesis");
        let mut state = WalletState::from_allocations(genesis.allocations.into_iter().map(|a| (a.account, a.balance)))?;
        for block in &blocks[1..] {
            for tx in &block.transactions {
                state.apply_in_place(tx)?;
            }
        }
        Ok(Chain {
            blocks,
            state,
            validators: genesis.validators,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn state(&self) -> &WalletState {
        &self.state
    }

    pub fn validators(&self) -> &[AccountId] {
        &self.validators
    }

    pub fn total_supply(&self) -> u64 {
        self.state.total_supply()
    }

    pub fn proposer_for(&self, height: u64) -> &AccountId {
        &self.validators[proposer_index(height, self.validators.len())]
    }

    pub fn get_balance(&self, account: &str) -> Result<u64, LedgerError> {
        self.state.balance(account)
    }

    pub fn verify(&self) -> VerificationReport {
        super::verify::verify_chain(self)
    }

    /// Appends a block holding `txs` in order. Atomic: if any transaction
    /// fails, the chain is left exactly as it was.
    pub fn append_block(&mut self, txs: Vec<Transaction>, tick: u64) -> Result<&Block, LedgerError> {
        let last_tick = self.tip().tick;
        if tick <= last_tick {
            return Err(LedgerError::NonMonotonicTick {
                last: last_tick,
                got: tick,
            });
        }
        let mut next = self.state.clone();
        for (index, tx) in txs.iter().enumerate() {
            if tx.tick > tick {
                return Err(LedgerError::InvalidTransactionInBlock {
                    index,
                    cause: Box::new(LedgerError::MalformedTransaction("transaction tick after block tick")),
                });
            }
            next.apply_in_place(tx)
                .map_err(|cause| LedgerError::InvalidTransactionInBlock {
                    index,
                    cause: Box::new(cause),
                })?;
        }

        let height = self.height() + 1;
        let mut block = Block {
            height,
            parent_hash: self.tip().block_hash,
            proposer: self.proposer_for(height).clone(),
            tick,
            transactions: txs,
            genesis: None,
            block_hash: Digest::ZERO,
        };
        block.block_hash = hash_block(&block);

        self.state = next;
        self.blocks.push(block);
        Ok(self.tip())
    }

    /// Settles one contract in its own block at `tick`.
    pub fn settle(&mut self, contract: &PassageContract, tick: u64) -> Result<Receipt, LedgerError> {
        let mut batch = self.settle_batch(std::slice::from_ref(contract), tick)?;
        match batch.failures.pop() {
            Some((_, cause)) => Err(LedgerError::SettlementFailed(Box::new(cause))),
            None => Ok(batch.receipts.pop().expect("one contract, one outcome").1),
        }
    }

    /// Seals every contract that can be paid into a single block at `tick`,
    /// ordered by (vehicle id, toll id). Contracts the payer cannot cover are
    /// reported in `failures` and leave no trace on the chain. No block is
    /// produced when nothing settles.
    pub fn settle_batch(&mut self, contracts: &[PassageContract], tick: u64) -> Result<BatchSettlement, LedgerError> {
        let mut order: Vec<usize> = (0..contracts.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&contracts[a], &contracts[b]);
            (&ca.vehicle_id, &ca.toll_id).cmp(&(&cb.vehicle_id, &cb.toll_id))
        });

        let mut scratch = self.state.clone();
        let mut txs = Vec::new();
        let mut settled = Vec::new();
        let mut out = BatchSettlement::default();
        for idx in order {
            let c = &contracts[idx];
            let nonce = match scratch.next_nonce(c.vehicle_id.as_str()) {
                Ok(n) => n,
                Err(e) => {
                    out.failures.push((idx, e));
                    continue;
                }
            };
            let tx = Transaction::new(
                c.vehicle_id.clone(),
                c.toll_id.clone(),
                c.price,
                Some(c.clone()),
                tick,
                nonce,
            );
            match scratch.apply_in_place(&tx) {
                Ok(()) => {
                    settled.push((idx, tx.tx_id));
                    txs.push(tx);
                }
                Err(e) => out.failures.push((idx, e)),
            }
        }

        if !txs.is_empty() {
            let height = self.append_block(txs, tick)?.height;
            out.receipts = settled
                .into_iter()
                .map(|(idx, tx_id)| {
                    (
                        idx,
                        Receipt {
                            block_height: height,
                            tx_id,
                            tick,
                        },
                    )
                })
                .collect();
        }
        Ok(out)
    }
}
