use serde::{Deserialize, Serialize};

use super::{
    choose_from, make_counteroffer, LaneAttempt, NegotiationRecord, Norms, OutcomeKind, Preferences, RefusalCause,
};
use crate::lane::{Lane, PerLane};
use crate::ledger::PassageContract;
use crate::network::{AgentId, Envelope, Message, RejectReason};
use crate::pricing::{expected_delay, DelayParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "round", rename_all = "snake_case")]
pub enum VehicleState {
    Cruising,
    AwaitingQuotes,
    Negotiating(u32),
    AwaitingSettlement,
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MovementParams {
    /// Free-flow speed per lane, in cells per tick.
    pub cell_rate: PerLane<u32>,
    pub gamma_move: f64,
}

impl Default for MovementParams {
    fn default() -> Self {
        Self {
            cell_rate: PerLane::new(3, 2),
            gamma_move: 1.0,
        }
    }
}

impl MovementParams {
    /// `floor(cell_rate[lane] / (1 + gamma_move * rho))`, at least one cell.
    pub fn speed(&self, lane: Lane, rho: f64) -> u32 {
        let raw = f64::from(self.cell_rate[lane]) / (1.0 + self.gamma_move * rho.clamp(0.0, 1.0));
        (raw.floor() as u32).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct VehicleContext<'a> {
    pub tick: u64,
    /// Current ledger balance.
    pub balance: u64,
    pub track_cells: u32,
    /// Toll ids and their cells.
    pub tolls: &'a [(AgentId, u32)],
    pub rho: PerLane<f64>,
    pub max_rounds: u32,
    pub timeout_ticks: u64,
    pub norms: Norms,
    pub delay: &'a DelayParams,
    pub movement: MovementParams,
}

#[derive(Clone, Debug, Default)]
pub struct VehicleStepOutput {
    pub outbox: Vec<(AgentId, Message)>,
    /// Toll a negotiation was opened with this step.
    pub opened: Option<AgentId>,
    pub closed: Option<NegotiationRecord>,
}

#[derive(Clone, Debug, PartialEq)]
struct Session {
    toll: AgentId,
    opened: u64,
    quotes: Option<PerLane<u64>>,
    densities: Option<PerLane<f64>>,
    chosen: Option<Lane>,
    lane: Option<Lane>,
    fallback_used: bool,
    rounds_used: u32,
    attempts: Vec<LaneAttempt>,
    contract: Option<PassageContract>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleAgent {
    pub id: AgentId,
    pub prefs: Preferences,
    pub position: u32,
    pub lane: Lane,
    pub state: VehicleState,
    pending: Option<Session>,
    /// Amount held back for the outstanding offer.
    reserved: u64,
    stalled: Option<(AgentId, u64)>,
}

impl VehicleAgent {
    pub fn new(id: AgentId, prefs: Preferences, position: u32, lane: Lane) -> Self {
        Self {
            id,
            prefs,
            position,
            lane,
            state: VehicleState::Cruising,
            pending: None,
            reserved: 0,
            stalled: None,
        }
    }

    pub fn reserved(&self) -> u64 {
        self.reserved
    }

    pub fn session_toll(&self) -> Option<&AgentId> {
        self.pending.as_ref().map(|s| &s.toll)
    }

    /// Handles delivered messages, applies the session timeout, then moves or
    /// retries as the state allows.
    pub fn step(&mut self, delivered: &[Envelope], ctx: &VehicleContext<'_>) -> VehicleStepOutput {
        let mut out = VehicleStepOutput::default();
        self.handle_messages(delivered, ctx, &mut out);
        self.check_timeout(ctx, &mut out);
        self.advance(ctx, &mut out);
        out
    }

    pub(crate) fn handle_messages(
        &mut self,
        delivered: &[Envelope],
        ctx: &VehicleContext<'_>,
        out: &mut VehicleStepOutput,
    ) {
        for env in delivered {
            if env.to != self.id || self.session_toll() != Some(&env.from) {
                continue;
            }
            match (self.state, &env.payload) {
                (VehicleState::AwaitingQuotes, Message::QuoteResponse { quotes, densities }) => {
                    let delays = PerLane::from_fn(|l| expected_delay(l, densities[l], ctx.delay));
                    let chosen = choose_from(&self.prefs, quotes, &delays, &ctx.norms);
                    let session = self.pending.as_mut().expect("session while awaiting quotes");
                    session.quotes = Some(*quotes);
                    session.densities = Some(*densities);
                    session.chosen = Some(chosen);
                    session.attempts.push(LaneAttempt {
                        lane: chosen,
                        exchanges: 0,
                    });
                    let round = if ctx.max_rounds == 0 { 0 } else { 1 };
                    self.offer(chosen, round, ctx, out);
                }
                (VehicleState::Negotiating(round), Message::Offer { lane, .. }) => {
                    if round < ctx.max_rounds {
                        self.offer(*lane, round + 1, ctx, out);
                    } else {
                        self.fallback(ctx, out);
                    }
                }
                (VehicleState::Negotiating(_), Message::Reject { .. }) => self.fallback(ctx, out),
                (VehicleState::Negotiating(_), Message::Accept { contract }) if contract.vehicle_id == self.id => {
                    self.pending.as_mut().expect("session while negotiating").contract = Some(contract.clone());
                    self.state = VehicleState::AwaitingSettlement;
                }
                (VehicleState::AwaitingSettlement, Message::SettlementNotice { .. }) => {
                    self.close_settled(true, ctx, out);
                }
                (
                    VehicleState::AwaitingSettlement,
                    Message::Reject {
                        reason: RejectReason::SettlementFailed,
                    },
                ) => {
                    self.close_refused(RefusalCause::SettlementFailed, ctx, out);
                }
                _ => {}
            }
        }
    }

    /// Sends an offer on `lane`: the posted quote in round 0, otherwise the
    /// counteroffer schedule. Unaffordable offers go straight to fallback.
    fn offer(&mut self, lane: Lane, round: u32, ctx: &VehicleContext<'_>, out: &mut VehicleStepOutput) {
        let session = self.pending.as_ref().expect("offer needs a session");
        let quote = session.quotes.expect("offer after quotes")[lane];
        let price = make_counteroffer(&self.prefs, quote, round);
        if price > ctx.balance {
            self.fallback(ctx, out);
            return;
        }
        self.send_offer(lane, price, round, out);
    }

    fn send_offer(&mut self, lane: Lane, price: u64, round: u32, out: &mut VehicleStepOutput) {
        let session = self.pending.as_mut().expect("offer needs a session");
        if let Some(attempt) = session.attempts.last_mut() {
            attempt.exchanges += 1;
        }
        session.lane = Some(lane);
        session.rounds_used = session.rounds_used.max(round);
        self.reserved = price;
        self.state = VehicleState::Negotiating(round);
        out.outbox
            .push((session.toll.clone(), Message::Offer { lane, price, round }));
    }

    /// One retry on the Economic lane at its posted price, if affordable.
    fn fallback(&mut self, ctx: &VehicleContext<'_>, out: &mut VehicleStepOutput) {
        let session = self.pending.as_mut().expect("fallback needs a session");
        let econ = session.quotes.expect("fallback after quotes").economic;
        if !session.fallback_used && econ <= ctx.balance {
            session.fallback_used = true;
            session.attempts.push(LaneAttempt {
                lane: Lane::Economic,
                exchanges: 0,
            });
            let round = ctx.max_rounds.min(1);
            self.send_offer(Lane::Economic, econ, round, out);
            return;
        }
        let cause = if econ > ctx.balance {
            RefusalCause::Insolvent
        } else {
            RefusalCause::Rejected
        };
        out.outbox.push((
            session.toll.clone(),
            Message::Reject {
                reason: RejectReason::Withdrawn,
            },
        ));
        self.close_refused(cause, ctx, out);
    }

    pub(crate) fn check_timeout(&mut self, ctx: &VehicleContext<'_>, out: &mut VehicleStepOutput) {
        let Some(session) = &self.pending else { return };
        if ctx.tick.saturating_sub(session.opened) <= ctx.timeout_ticks {
            return;
        }
        if self.state == VehicleState::AwaitingSettlement {
            // Accepted contracts are sealed in the acceptance tick; only the
            // notice went missing.
            self.close_settled(false, ctx, out);
        } else {
            out.outbox.push((
                session.toll.clone(),
                Message::Reject {
                    reason: RejectReason::Timeout,
                },
            ));
            self.close_refused(RefusalCause::Timeout, ctx, out);
        }
    }

    fn record(
        &self,
        session: Session,
        outcome: OutcomeKind,
        refusal: Option<RefusalCause>,
        confirmed: bool,
        tick: u64,
    ) -> NegotiationRecord {
        NegotiationRecord {
            vehicle: self.id.clone(),
            toll: session.toll,
            opened_tick: session.opened,
            closed_tick: tick,
            outcome,
            chosen_lane: session.chosen,
            contract: session.contract,
            rounds_used: session.rounds_used,
            attempts: session.attempts,
            quotes: session.quotes,
            densities: session.densities,
            refusal,
            settlement_confirmed: confirmed,
        }
    }

    fn close_settled(&mut self, confirmed: bool, ctx: &VehicleContext<'_>, out: &mut VehicleStepOutput) {
        let session = self.pending.take().expect("close needs a session");
        let contract = session.contract.clone().expect("settled sessions hold a contract");
        let outcome = if session.fallback_used {
            OutcomeKind::FallbackEconomic
        } else {
            OutcomeKind::Agreed
        };
        self.lane = contract.lane;
        self.reserved = 0;
        self.state = VehicleState::Cruising;
        self.stalled = None;
        out.closed = Some(self.record(session, outcome, None, confirmed, ctx.tick));
    }

    fn close_refused(&mut self, cause: RefusalCause, ctx: &VehicleContext<'_>, out: &mut VehicleStepOutput) {
        let session = self.pending.take().expect("close needs a session");
        self.reserved = 0;
        self.state = VehicleState::Stalled;
        self.stalled = Some((session.toll.clone(), ctx.tick));
        out.closed = Some(self.record(session, OutcomeKind::Refused, Some(cause), false, ctx.tick));
    }

    pub(crate) fn open_session(&mut self, toll: AgentId, tick: u64, out: &mut VehicleStepOutput) {
        out.outbox.push((
            toll.clone(),
            Message::QuoteRequest {
                lanes: Lane::ALL.to_vec(),
            },
        ));
        out.opened = Some(toll.clone());
        self.pending = Some(Session {
            toll,
            opened: tick,
            quotes: None,
            densities: None,
            chosen: None,
            lane: None,
            fallback_used: false,
            rounds_used: 0,
            attempts: Vec::new(),
            contract: None,
        });
        self.state = VehicleState::AwaitingQuotes;
    }

    fn advance(&mut self, ctx: &VehicleContext<'_>, out: &mut VehicleStepOutput) {
        match self.state {
            VehicleState::Cruising => self.drive(ctx, out),
            VehicleState::Stalled => {
                if let Some((toll, since)) = self.stalled.clone() {
                    if ctx.tick > since {
                        self.stalled = None;
                        self.open_session(toll, ctx.tick, out);
                    }
                }
            }
            _ => {}
        }
    }

    /// Moves along the circular track, stopping at the first toll cell
    /// crossed and opening a negotiation there.
    fn drive(&mut self, ctx: &VehicleContext<'_>, out: &mut VehicleStepOutput) {
        if ctx.track_cells == 0 {
            return;
        }
        let speed = ctx.movement.speed(self.lane, ctx.rho[self.lane]);
        for step in 1..=speed {
            let cell = ((u64::from(self.position) + u64::from(step)) % u64::from(ctx.track_cells)) as u32;
            if let Some((toll, _)) = ctx.tolls.iter().find(|(_, pos)| *pos == cell) {
                self.position = cell;
                self.open_session(toll.clone(), ctx.tick, out);
                return;
            }
        }
        self.position = ((u64::from(self.position) + u64::from(speed)) % u64::from(ctx.track_cells)) as u32;
    }
}
