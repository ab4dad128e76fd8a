use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::lane::{Lane, PerLane};
use crate::ledger::PassageContract;
use crate::network::{AgentId, Envelope, Message, RejectReason};
use crate::pricing::{FixedTable, PricingModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingMode {
    #[default]
    Dynamic,
    Fixed,
}

/// A message an agent wants sent this tick.
#[derive(Clone, Debug, PartialEq)]
pub enum Outgoing {
    To(AgentId, Message),
    /// To every peer toll except the sender.
    Peers(Message),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TollResponse {
    Accept(PassageContract),
    Counter(u64),
    Reject(RejectReason),
}

/// An accepted offer, with the session's posted quote and reserve for the
/// contracted lane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub contract: PassageContract,
    pub quote: u64,
    pub reserve: u64,
}

#[derive(Clone, Debug)]
pub struct TollContext<'a> {
    pub tick: u64,
    /// Current lane densities.
    pub rho: PerLane<f64>,
    pub max_rounds: u32,
    pub timeout_ticks: u64,
    /// Zero disables peer sharing.
    pub peer_share_period: u64,
    pub peers: &'a [AgentId],
}

#[derive(Clone, Debug, Default)]
pub struct TollStepOutput {
    pub outbox: Vec<Outgoing>,
    pub accepted: Vec<Acceptance>,
}

#[derive(Clone, Debug, PartialEq)]
struct Session {
    opened: u64,
    quotes: PerLane<u64>,
    reserves: PerLane<u64>,
    lane: Option<Lane>,
    /// Set after a Reject; the next offer is the vehicle's one fallback.
    rejected: bool,
}

/// Quotes are frozen per session at the density seen when the vehicle asked,
/// so the acceptance bounds a vehicle negotiates against cannot move under it.
#[derive(Clone, Debug, PartialEq)]
pub struct TollAgent {
    pub id: AgentId,
    pub position: u32,
    pub model: PricingModel,
    pub mode: PricingMode,
    pub fixed_table: FixedTable,
    sessions: BTreeMap<AgentId, Session>,
}

impl TollAgent {
    pub fn new(id: AgentId, position: u32, model: PricingModel, mode: PricingMode, fixed_table: FixedTable) -> Self {
        Self {
            id,
            position,
            model,
            mode,
            fixed_table,
            sessions: BTreeMap::new(),
        }
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.len()
    }

    pub fn has_session(&self, vehicle: &str) -> bool {
        self.sessions.contains_key(vehicle)
    }

    /// Posted price per lane at the given densities.
    pub fn quotes(&self, rho: &PerLane<f64>) -> PerLane<u64> {
        PerLane::from_fn(|lane| match self.mode {
            PricingMode::Dynamic => self.model.quote(lane, rho[lane]),
            PricingMode::Fixed => self.fixed_table.get(&lane).copied().unwrap_or(self.model.base[lane]),
        })
    }

    fn reserves(&self, quotes: &PerLane<u64>, max_rounds: u32) -> PerLane<u64> {
        PerLane::from_fn(|lane| {
            if self.mode == PricingMode::Fixed || max_rounds == 0 {
                quotes[lane]
            } else {
                self.model.reserve_for_quote(lane, quotes[lane])
            }
        })
    }

    /// Opens (or reopens) a session for `vehicle` and returns the quotes.
    pub fn open_session(&mut self, vehicle: &AgentId, rho: &PerLane<f64>, max_rounds: u32, tick: u64) -> PerLane<u64> {
        let quotes = self.quotes(rho);
        let reserves = self.reserves(&quotes, max_rounds);
        self.sessions.insert(
            vehicle.clone(),
            Session {
                opened: tick,
                quotes,
                reserves,
                lane: None,
                rejected: false,
            },
        );
        quotes
    }

    /// Answers one offer: accept at or above reserve, counter with the quote
    /// while rounds remain, otherwise reject. After a reject the session
    /// stays open for exactly one fallback offer.
    pub fn respond(
        &mut self,
        vehicle: &AgentId,
        lane: Lane,
        offer: u64,
        round: u32,
        max_rounds: u32,
        tick: u64,
    ) -> Result<TollResponse, AgentError> {
        let session = self
            .sessions
            .get_mut(vehicle)
            .ok_or_else(|| AgentError::NoSession(vehicle.clone()))?;

        let switching = session.lane.is_some_and(|l| l != lane);
        if round > max_rounds || (switching && !session.rejected) {
            self.sessions.remove(vehicle);
            return Ok(TollResponse::Reject(RejectReason::ProtocolViolation));
        }
        session.lane = Some(lane);
        let (quote, reserve) = (session.quotes[lane], session.reserves[lane]);

        if offer >= reserve {
            self.sessions.remove(vehicle);
            return Ok(TollResponse::Accept(PassageContract {
                vehicle_id: vehicle.clone(),
                toll_id: self.id.clone(),
                lane,
                price: offer.min(quote),
                negotiated_rounds: round,
                tick,
            }));
        }
        if !session.rejected && round < max_rounds {
            return Ok(TollResponse::Counter(quote));
        }
        if session.rejected {
            self.sessions.remove(vehicle);
        } else {
            session.rejected = true;
        }
        Ok(TollResponse::Reject(RejectReason::BelowReserve))
    }

    fn session_bounds(&self, vehicle: &AgentId, lane: Lane) -> Option<(u64, u64)> {
        self.sessions.get(vehicle).map(|s| (s.quotes[lane], s.reserves[lane]))
    }

    /// Learns from a settled contract (Dynamic mode only).
    pub fn on_settlement(&mut self, contract: &PassageContract) {
        if self.mode == PricingMode::Dynamic {
            self.model = self.model.update_on_settlement(contract.lane, contract.price);
        }
    }

    pub fn on_peer_share(&mut self, peer_base: &PerLane<u64>) {
        if self.mode == PricingMode::Dynamic {
            for lane in Lane::ALL {
                self.model = self.model.incorporate_peer(lane, peer_base[lane]);
            }
        }
    }

    /// Processes this tick's delivered messages in order, expires stale
    /// sessions, then shares the base price with peers when scheduled.
    pub fn step(&mut self, delivered: &[Envelope], ctx: &TollContext<'_>) -> TollStepOutput {
        let mut out = TollStepOutput::default();
        for env in delivered {
            let from = &env.from;
            match &env.payload {
                Message::QuoteRequest { .. } => {
                    let quotes = self.open_session(from, &ctx.rho, ctx.max_rounds, ctx.tick);
                    out.outbox.push(Outgoing::To(
                        from.clone(),
                        Message::QuoteResponse {
                            quotes,
                            densities: ctx.rho,
                        },
                    ));
                }
                Message::Offer { lane, price, round } => {
                    let bounds = self.session_bounds(from, *lane);
                    match self.respond(from, *lane, *price, *round, ctx.max_rounds, ctx.tick) {
                        Ok(TollResponse::Accept(contract)) => {
                            let (quote, reserve) = bounds.expect("accepted sessions exist");
                            out.accepted.push(Acceptance {
                                contract: contract.clone(),
                                quote,
                                reserve,
                            });
                            out.outbox
                                .push(Outgoing::To(from.clone(), Message::Accept { contract }));
                        }
                        Ok(TollResponse::Counter(quote)) => out.outbox.push(Outgoing::To(
                            from.clone(),
                            Message::Offer {
                                lane: *lane,
                                price: quote,
                                round: *round,
                            },
                        )),
                        Ok(TollResponse::Reject(reason)) => {
                            out.outbox.push(Outgoing::To(from.clone(), Message::Reject { reason }))
                        }
                        Err(_) => out.outbox.push(Outgoing::To(
                            from.clone(),
                            Message::Reject {
                                reason: RejectReason::NoSession,
                            },
                        )),
                    }
                }
                Message::Reject { .. } => {
                    self.sessions.remove(from);
                }
                Message::PeerQuoteShare { base } => self.on_peer_share(base),
                Message::QuoteResponse { .. } | Message::Accept { .. } | Message::SettlementNotice { .. } => {}
            }
        }

        let timeout = ctx.timeout_ticks;
        self.sessions
            .retain(|_, s| ctx.tick.saturating_sub(s.opened) <= timeout);

        if self.mode == PricingMode::Dynamic
            && ctx.peer_share_period > 0
            && ctx.tick.is_multiple_of(ctx.peer_share_period)
            && ctx.peers.iter().any(|p| p != &self.id)
        {
            out.outbox
                .push(Outgoing::Peers(Message::PeerQuoteShare { base: self.model.base }));
        }
        out
    }
}
