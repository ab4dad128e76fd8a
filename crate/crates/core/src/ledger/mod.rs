//! Permissioned hash-chained ledger.
//!
//! Blocks are proposed round-robin by the validator set and are final as soon
//! as they are appended. Wallet state is a pure function of the block sequence.

mod chain;
pub mod codec;
mod io;
mod state;
pub mod tamper;
mod types;
mod verify;

use thiserror::Error;

pub use chain::{BatchSettlement, Chain};
pub use codec::{hash_block, hash_transaction};
pub use io::{read_ndjson, write_ndjson, ChainFileError};
pub use state::{apply_transaction, Account, WalletState};
pub use types::{AccountId, Allocation, Block, Digest, GenesisSpec, PassageContract, Receipt, Transaction};
pub use verify::{verify_blocks, verify_chain, VerificationReport, Violation};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("validator set is empty")]
    EmptyValidatorSet,
    #[error("duplicate account {0}")]
    DuplicateAccount(AccountId),
    #[error("duplicate validator {0}")]
    DuplicateValidator(AccountId),
    #[error("initial balances overflow the token supply")]
    SupplyOverflow,
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("insufficient funds: {account} holds {balance}, needs {amount}")]
    InsufficientFunds {
        account: AccountId,
        balance: u64,
        amount: u64,
    },
    #[error("bad nonce for {account}: expected {expected}, found {found}")]
    BadNonce {
        account: AccountId,
        expected: u64,
        found: u64,
    },
    #[error("malformed transaction: {0}")]
    MalformedTransaction(&'static str),
    #[error("transaction id does not match its contents")]
    TxIdMismatch,
    #[error("transaction {index} invalid: {cause}")]
    InvalidTransactionInBlock { index: usize, cause: Box<LedgerError> },
    #[error("block tick {got} does not follow tip tick {last}")]
    NonMonotonicTick { last: u64, got: u64 },
    #[error("settlement failed: {0}")]
    SettlementFailed(Box<LedgerError>),
    #[error("chain does not verify ({} violations)", .0.violations.len())]
    InvalidChain(VerificationReport),
}
