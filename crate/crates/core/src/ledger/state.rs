use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::codec::hash_transaction;
use super::types::{AccountId, Transaction};
use super::LedgerError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    pub balance: u64,
    /// Nonce of the last transaction this account sent; 0 before the first.
    pub nonce: u64,
}

/// Account balances of a closed token system. No mint or burn after genesis.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletState {
    accounts: BTreeMap<AccountId, Account>,
    total_supply: u64,
}

impl WalletState {
    pub fn from_allocations<I>(allocations: I) -> Result<Self, LedgerError>
    where
        I: IntoIterator<Item = (AccountId, u64)>,
    {
        let mut state = WalletState::default();
        for (id, balance) in allocations {
            if state.accounts.contains_key(&id) {
                return Err(LedgerError::DuplicateAccount(id));
            }
            state.total_supply = state
                .total_supply
                .checked_add(balance)
                .ok_or(LedgerError::SupplyOverflow)?;
            state.accounts.insert(id.clone(), Account { id, balance, nonce: 0 });
        }
        Ok(state)
    }

    pub fn total_supply(&self) -> u64 {
        self.total_supply
    }

    pub fn balance(&self, id: &str) -> Result<u64, LedgerError> {
        self.accounts
            .get(id)
            .map(|a| a.balance)
            .ok_or_else(|| LedgerError::UnknownAccount(id.into()))
    }

    pub fn account(&self, id: &str) -> Option<&Account> {
        self.accounts.get(id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    /// Nonce the next transaction sent by `id` must carry.
    pub fn next_nonce(&self, id: &str) -> Result<u64, LedgerError> {
        self.accounts
            .get(id)
            .map(|a| a.nonce + 1)
            .ok_or_else(|| LedgerError::UnknownAccount(id.into()))
    }

    /// Sum of balances, computed without trusting `total_supply`.
    pub fn balance_sum(&self) -> u128 {
        self.accounts.values().map(|a| u128::from(a.balance)).sum()
    }

    /// Applies `tx` in place. Leaves `self` untouched on error.
    pub(crate) fn apply_in_place(&mut self, tx: &Transaction) -> Result<(), LedgerError> {
        if tx.amount == 0 {
            return Err(LedgerError::MalformedTransaction("amount must be positive"));
        }
        if tx.from == tx.to {
            return Err(LedgerError::MalformedTransaction("sender equals recipient"));
        }
        if hash_transaction(tx) != tx.tx_id {
            return Err(LedgerError::TxIdMismatch);
        }
        if !self.accounts.contains_key(&tx.to) {
            return Err(LedgerError::UnknownAccount(tx.to.clone()));
        }
        let sender = self
            .accounts
            .get(&tx.from)
            .ok_or_else(|| LedgerError::UnknownAccount(tx.from.clone()))?;
        if tx.nonce != sender.nonce + 1 {
            return Err(LedgerError::BadNonce {
                account: tx.from.clone(),
                expected: sender.nonce + 1,
                found: tx.nonce,
            });
        }
        if sender.balance < tx.amount {
            return Err(LedgerError::InsufficientFunds {
                account: tx.from.clone(),
                balance: sender.balance,
                amount: tx.amount,
            });
        }

        let sender = self.accounts.get_mut(&tx.from).expect("checked above");
        sender.balance -= tx.amount;
        sender.nonce = tx.nonce;
        let recipient = self.accounts.get_mut(&tx.to).expect("checked above");
        // Cannot overflow: every balance is bounded by total_supply.
        recipient.balance += tx.amount;
        Ok(())
    }
}

/// Pure transfer: returns the successor state, leaving `state` unmodified.
pub fn apply_transaction(state: &WalletState, tx: &Transaction) -> Result<WalletState, LedgerError> {
    let mut next = state.clone();
    next.apply_in_place(tx)?;
    Ok(next)
}
