use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::lane::Lane;

/// Opaque account (and agent) identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AccountId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for AccountId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl Borrow<str> for AccountId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// 32-byte SHA-256 digest, hex-encoded (lowercase) on the wire.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("digest must be lowercase hex"));
        }
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// The negotiated right of one vehicle to pass one toll in one lane.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageContract {
    pub vehicle_id: AccountId,
    pub toll_id: AccountId,
    pub lane: Lane,
    pub price: u64,
    pub negotiated_rounds: u32,
    pub tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub tx_id: Digest,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: u64,
    pub contract: Option<PassageContract>,
    pub tick: u64,
    pub nonce: u64,
}

impl Transaction {
    /// Builds a transaction and stamps its content digest.
    pub fn new(
        from: AccountId,
        to: AccountId,
        amount: u64,
        contract: Option<PassageContract>,
        tick: u64,
        nonce: u64,
    ) -> Self {
        let mut tx = Transaction {
            tx_id: Digest::ZERO,
            from,
            to,
            amount,
            contract,
            tick,
            nonce,
        };
        tx.tx_id = super::codec::hash_transaction(&tx);
        tx
    }

    pub fn is_well_formed(&self) -> bool {
        self.amount > 0 && self.from != self.to
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Allocation {
    pub account: AccountId,
    pub balance: u64,
}

/// Validator set and initial allocations, carried (and hashed) by the genesis
/// block only so that a chain file alone is enough to replay state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisSpec {
    pub validators: Vec<AccountId>,
    pub allocations: Vec<Allocation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Digest,
    pub proposer: AccountId,
    pub tick: u64,
    pub transactions: Vec<Transaction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genesis: Option<GenesisSpec>,
    pub block_hash: Digest,
}

/// Proof that a contract was settled.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Receipt {
    pub block_height: u64,
    pub tx_id: Digest,
    pub tick: u64,
}
