//! Simulated peer-to-peer message layer.
//!
//! Delivery order is total: envelopes leave the queue ordered by
//! `(deliver_tick, msg_id)`, and `msg_id` is a global monotone counter. Drops
//! are decided when a message is sent, from a seeded stream, so the transcript
//! depends only on the seed and the sequence of sends.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lane::{Lane, PerLane};
use crate::ledger::{AccountId, PassageContract, Receipt};
use crate::rng;

pub type AgentId = AccountId;
pub type MsgId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Final offer stayed below the toll's reserve price.
    BelowReserve,
    NoSession,
    /// Offer round beyond the negotiation bound, or a second lane switch.
    ProtocolViolation,
    Timeout,
    SettlementFailed,
    /// The vehicle abandoned the session (cannot afford any lane).
    Withdrawn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    QuoteRequest {
        lanes: Vec<Lane>,
    },
    QuoteResponse {
        quotes: PerLane<u64>,
        densities: PerLane<f64>,
    },
    /// An offer from the vehicle, or a counteroffer (the current quote) from the toll.
    Offer {
        lane: Lane,
        price: u64,
        round: u32,
    },
    Accept {
        contract: PassageContract,
    },
    Reject {
        reason: RejectReason,
    },
    PeerQuoteShare {
        base: PerLane<u64>,
    },
    SettlementNotice {
        receipt: Receipt,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub msg_id: MsgId,
    pub from: AgentId,
    pub to: AgentId,
    pub payload: Message,
    pub sent_tick: u64,
    pub deliver_tick: u64,
}

/// One line of the network transcript: every envelope ever sent, in send
/// order, with its drop decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(flatten)]
    pub envelope: Envelope,
    pub dropped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub latency_ticks: u64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latency_ticks: 1,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum NetworkError {
    #[error("unknown sender {0}")]
    UnknownSender(AgentId),
    #[error("unknown recipient {0}")]
    UnknownRecipient(AgentId),
    #[error("broadcast group is empty")]
    EmptyGroup,
    #[error("drop probability {0} outside [0, 1]")]
    InvalidDropProbability(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

pub struct Network {
    config: NetworkConfig,
    drops: ChaCha8Rng,
    next_id: MsgId,
    members: BTreeSet<AgentId>,
    queue: BTreeMap<(u64, MsgId), Envelope>,
    drop_log: Vec<Envelope>,
    transcript: Vec<TranscriptEntry>,
    stats: NetworkStats,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self, NetworkError> {
        let p = config.drop_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(NetworkError::InvalidDropProbability(p));
        }
        Ok(Self {
            config,
            drops: rng::stream(config.seed, rng::NETWORK_DROP_STREAM),
            next_id: 0,
            members: BTreeSet::new(),
            queue: BTreeMap::new(),
            drop_log: Vec::new(),
            transcript: Vec::new(),
            stats: NetworkStats::default(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn register(&mut self, agent: AgentId) {
        self.members.insert(agent);
    }

    pub fn send(&mut self, from: &AgentId, to: &AgentId, payload: Message, tick: u64) -> Result<MsgId, NetworkError> {
        if !self.members.contains(from) {
            return Err(NetworkError::UnknownSender(from.clone()));
        }
        if !self.members.contains(to) {
            return Err(NetworkError::UnknownRecipient(to.clone()));
        }
        Ok(self.enqueue(from.clone(), to.clone(), payload, tick))
    }

    /// Sends `payload` to every member of `group` except the sender; each
    /// copy is subject to its own drop decision.
    pub fn broadcast(
        &mut self,
        from: &AgentId,
        group: &[AgentId],
        payload: Message,
        tick: u64,
    ) -> Result<Vec<MsgId>, NetworkError> {
        if group.is_empty() {
            return Err(NetworkError::EmptyGroup);
        }
        if !self.members.contains(from) {
            return Err(NetworkError::UnknownSender(from.clone()));
        }
        if let Some(unknown) = group.iter().find(|m| !self.members.contains(*m)) {
            return Err(NetworkError::UnknownRecipient(unknown.clone()));
        }
        Ok(group
            .iter()
            .filter(|m| *m != from)
            .map(|m| self.enqueue(from.clone(), m.clone(), payload.clone(), tick))
            .collect())
    }

    fn enqueue(&mut self, from: AgentId, to: AgentId, payload: Message, tick: u64) -> MsgId {
        let msg_id = self.next_id;
        self.next_id += 1;
        let envelope = Envelope {
            msg_id,
            from,
            to,
            payload,
            sent_tick: tick,
            deliver_tick: tick + self.config.latency_ticks,
        };
        // Always draw, so the stream position depends only on the send count.
        let roll: f64 = self.drops.gen();
        let dropped = roll < self.config.drop_probability;
        self.stats.sent += 1;
        self.transcript.push(TranscriptEntry {
            envelope: envelope.clone(),
            dropped,
        });
        if dropped {
            self.stats.dropped += 1;
            self.drop_log.push(envelope);
        } else {
            self.queue.insert((envelope.deliver_tick, msg_id), envelope);
        }
        msg_id
    }

    /// Removes and returns every envelope due at or before `tick`, ordered by
    /// `(deliver_tick, msg_id)`.
    pub fn deliver(&mut self, tick: u64) -> Vec<Envelope> {
        let later = self.queue.split_off(&(tick + 1, 0));
        let due = std::mem::replace(&mut self.queue, later);
        self.stats.delivered += due.len() as u64;
        due.into_values().collect()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn drop_log(&self) -> &[Envelope] {
        &self.drop_log
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn stats(&self) -> NetworkStats {
        self.stats
    }

    pub fn transcript_ndjson(&self) -> String {
        let mut out = String::new();
        for entry in &self.transcript {
            out.push_str(&serde_json::to_string(entry).expect("envelopes always serialize"));
            out.push('\n');
        }
        out
    }
}
