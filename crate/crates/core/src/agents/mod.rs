//! Vehicle and toll agents.
//!
//! Vehicles pick a lane by utility, haggle over a bounded number of rounds,
//! and fall back once to the posted Economic price. Tolls quote from their
//! pricing model, accept any offer at or above the reserve, and learn from
//! settlements and peer tolls.

mod negotiation;
mod toll;
mod vehicle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lane::{Lane, PerLane};
use crate::ledger::{AccountId, PassageContract};
use crate::pricing::round_half_up;

pub use negotiation::{run_negotiation, NegotiationParams, NegotiationRun};
pub use toll::{Acceptance, Outgoing, PricingMode, TollAgent, TollContext, TollResponse, TollStepOutput};
pub use vehicle::{MovementParams, VehicleAgent, VehicleContext, VehicleState, VehicleStepOutput};

/// Per-round discount a cost-focused vehicle asks for on its first offer.
pub const COUNTEROFFER_DISCOUNT: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum AgentError {
    #[error("no quote for lane {0}")]
    MissingQuote(Lane),
    #[error("no open session for vehicle {0}")]
    NoSession(AccountId),
    #[error("invalid preference weights ({w_time}, {w_cost})")]
    InvalidPreferences { w_time: f64, w_cost: f64 },
    #[error("vehicle {0} is already negotiating")]
    Busy(AccountId),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub w_time: f64,
    pub w_cost: f64,
}

impl Preferences {
    /// Normalizes the weights so they sum to one.
    pub fn new(w_time: f64, w_cost: f64) -> Result<Self, AgentError> {
        let sum = w_time + w_cost;
        if !(w_time >= 0.0 && w_cost >= 0.0 && sum > 0.0 && sum.is_finite()) {
            return Err(AgentError::InvalidPreferences { w_time, w_cost });
        }
        Ok(Self {
            w_time: w_time / sum,
            w_cost: w_cost / sum,
        })
    }

    pub fn time_weighted(w_time: f64) -> Result<Self, AgentError> {
        Self::new(w_time, 1.0 - w_time)
    }
}

/// Fixed normalization scales for the utility function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Norms {
    pub price_scale: f64,
    pub delay_scale: f64,
}

impl Default for Norms {
    fn default() -> Self {
        Self {
            price_scale: 10.0,
            delay_scale: 5.0,
        }
    }
}

/// `-(w_cost * price / price_scale + w_time * delay / delay_scale)`; higher is better.
pub fn vehicle_utility(prefs: &Preferences, price: f64, delay: f64, norms: &Norms) -> f64 {
    -(prefs.w_cost * price / norms.price_scale + prefs.w_time * delay / norms.delay_scale)
}

/// Lane with the highest utility; ties go to Economic.
pub fn choose_lane(
    prefs: &Preferences,
    quotes: &BTreeMap<Lane, u64>,
    delays: &BTreeMap<Lane, f64>,
    norms: &Norms,
) -> Result<Lane, AgentError> {
    let utility = |lane: Lane| -> Result<f64, AgentError> {
        let price = *quotes.get(&lane).ok_or(AgentError::MissingQuote(lane))?;
        let delay = *delays.get(&lane).ok_or(AgentError::MissingQuote(lane))?;
        Ok(vehicle_utility(prefs, price as f64, delay, norms))
    };
    let (fast, econ) = (utility(Lane::Fast)?, utility(Lane::Economic)?);
    Ok(if fast > econ { Lane::Fast } else { Lane::Economic })
}

pub(crate) fn choose_from(prefs: &Preferences, quotes: &PerLane<u64>, delays: &PerLane<f64>, norms: &Norms) -> Lane {
    let quotes: BTreeMap<Lane, u64> = quotes.iter().map(|(l, q)| (l, *q)).collect();
    let delays: BTreeMap<Lane, f64> = delays.iter().map(|(l, d)| (l, *d)).collect();
    choose_lane(prefs, &quotes, &delays, norms).expect("both lanes present")
}

/// Offer for `round` (1-based): the quote discounted by
/// `COUNTEROFFER_DISCOUNT * w_cost / round`, never below one token.
pub fn make_counteroffer(prefs: &Preferences, quoted_price: u64, round: u32) -> u64 {
    if round == 0 {
        return quoted_price;
    }
    let factor = 1.0 - COUNTEROFFER_DISCOUNT * prefs.w_cost / f64::from(round);
    round_half_up(quoted_price as f64 * factor).max(1)
}

/// `2 * (latency + 1) * (max_rounds + 2)`: a full worst-case exchange.
pub fn timeout_ticks(latency_ticks: u64, max_rounds: u32) -> u64 {
    2 * (latency_ticks + 1) * (u64::from(max_rounds) + 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "contract", rename_all = "snake_case")]
pub enum NegotiationResult {
    Agreed(PassageContract),
    FallbackEconomic(PassageContract),
    Refused,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegotiationOutcome {
    pub result: NegotiationResult,
    pub rounds_used: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Agreed,
    FallbackEconomic,
    Refused,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefusalCause {
    /// Could not afford the posted Economic price.
    Insolvent,
    /// Both the chosen lane and the Economic fallback were rejected.
    Rejected,
    Timeout,
    SettlementFailed,
}

/// Offers sent on one lane during one attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneAttempt {
    pub lane: Lane,
    pub exchanges: u32,
}

/// Everything a vehicle knows about one closed negotiation session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegotiationRecord {
    pub vehicle: AccountId,
    pub toll: AccountId,
    pub opened_tick: u64,
    pub closed_tick: u64,
    pub outcome: OutcomeKind,
    /// Lane picked by utility from the quotes, before any fallback.
    pub chosen_lane: Option<Lane>,
    pub contract: Option<PassageContract>,
    pub rounds_used: u32,
    /// The chosen lane, then the Economic fallback if one was tried.
    pub attempts: Vec<LaneAttempt>,
    pub quotes: Option<PerLane<u64>>,
    pub densities: Option<PerLane<f64>>,
    pub refusal: Option<RefusalCause>,
    /// False when the session closed on timeout after an Accept but before
    /// the settlement notice arrived.
    pub settlement_confirmed: bool,
}

impl NegotiationRecord {
    /// Offers sent on `lane` across every attempt.
    pub fn exchanges_on(&self, lane: Lane) -> u32 {
        self.attempts
            .iter()
            .filter(|a| a.lane == lane)
            .map(|a| a.exchanges)
            .sum()
    }

    pub fn outcome(&self) -> NegotiationOutcome {
        let result = match (&self.outcome, &self.contract) {
            (OutcomeKind::Agreed, Some(c)) => NegotiationResult::Agreed(c.clone()),
            (OutcomeKind::FallbackEconomic, Some(c)) => NegotiationResult::FallbackEconomic(c.clone()),
            _ => NegotiationResult::Refused,
        };
        NegotiationOutcome {
            result,
            rounds_used: self.rounds_used,
        }
    }
}
