//! Two-tier dynamic lane pricing.
//!
//! The global tier is a per-lane base price: an exponential moving average of
//! accepted settlement prices, nudged toward the bases shared by peer tolls.
//! The local tier scales the base by current lane density. Every formula
//! rounds half-up to whole tokens and clamps to the lane's `[floor, ceiling]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lane::{Lane, PerLane};

/// Posted prices for the fixed-pricing baseline.
pub type FixedTable = BTreeMap<Lane, u64>;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PricingError {
    #[error("no fixed price for lane {0}")]
    UnknownLane(Lane),
}

/// Round half-up for non-negative reals. The small bias absorbs binary
/// representation error at exact halves (e.g. 10 * 1.25).
pub fn round_half_up(x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    (x + 0.5 + 1e-9).floor() as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricingModel {
    pub base: PerLane<u64>,
    /// Congestion sensitivity.
    pub alpha: f64,
    /// EMA learning rate on accepted prices.
    pub lambda: f64,
    /// Peer-fusion rate.
    pub beta: f64,
    pub floor: PerLane<u64>,
    pub ceiling: PerLane<u64>,
    /// Reserve discount off the quote.
    pub margin: f64,
}

impl Default for PricingModel {
    fn default() -> Self {
        Self {
            base: PerLane::new(15, 5),
            alpha: 1.0,
            lambda: 0.2,
            beta: 0.3,
            floor: PerLane::new(5, 1),
            ceiling: PerLane::new(60, 20),
            margin: 0.15,
        }
    }
}

impl PricingModel {
    /// Checks parameter ranges; on failure returns the offending field and why.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let range = |name: &str, v: f64, lo: f64, hi: f64, hi_open: bool| {
            let ok = v.is_finite() && v >= lo && if hi_open { v < hi } else { v <= hi };
            if ok {
                Ok(())
            } else {
                let close = if hi_open { ')' } else { ']' };
                Err((name.to_owned(), format!("{v} outside [{lo}, {hi}{close}")))
            }
        };
        range("alpha", self.alpha, 0.0, f64::MAX, false)?;
        range("lambda", self.lambda, 0.0, 1.0, false)?;
        range("beta", self.beta, 0.0, 1.0, false)?;
        range("margin", self.margin, 0.0, 1.0, true)?;
        for lane in Lane::ALL {
            let (f, b, c) = (self.floor[lane], self.base[lane], self.ceiling[lane]);
            if f < 1 {
                return Err((format!("floor.{lane}"), "must be at least 1".into()));
            }
            if f > c {
                return Err((format!("floor.{lane}"), format!("floor {f} above ceiling {c}")));
            }
            if b < f || b > c {
                return Err((format!("base.{lane}"), format!("{b} outside [{f}, {c}]")));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, lane: Lane, price: u64) -> u64 {
        price.clamp(self.floor[lane], self.ceiling[lane])
    }

    /// Posted price: `base * (1 + alpha * rho)`.
    pub fn quote(&self, lane: Lane, rho: f64) -> u64 {
        let rho = rho.clamp(0.0, 1.0);
        let raw = self.base[lane] as f64 * (1.0 + self.alpha * rho);
        self.clamp(lane, round_half_up(raw))
    }

    /// Lowest offer accepted against a posted `quote`.
    pub fn reserve_for_quote(&self, lane: Lane, quote: u64) -> u64 {
        let raw = round_half_up(quote as f64 * (1.0 - self.margin));
        self.clamp(lane, raw).max(1)
    }

    pub fn reserve_price(&self, lane: Lane, rho: f64) -> u64 {
        self.reserve_for_quote(lane, self.quote(lane, rho))
    }

    /// EMA step of the base toward an accepted price; other lanes untouched.
    pub fn update_on_settlement(&self, lane: Lane, accepted_price: u64) -> PricingModel {
        let base = self.base[lane] as f64;
        let next = (1.0 - self.lambda) * base + self.lambda * accepted_price as f64;
        let mut out = self.clone();
        out.base[lane] = self.clamp(lane, round_half_up(next));
        out
    }

    /// Moves the base a fraction `beta` of the way toward a peer's base.
    pub fn incorporate_peer(&self, lane: Lane, peer_base: u64) -> PricingModel {
        let base = self.base[lane] as f64;
        let next = base + self.beta * (peer_base as f64 - base);
        let mut out = self.clone();
        out.base[lane] = self.clamp(lane, round_half_up(next));
        out
    }
}

pub fn fixed_quote(table: &FixedTable, lane: Lane) -> Result<u64, PricingError> {
    table.get(&lane).copied().ok_or(PricingError::UnknownLane(lane))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayParams {
    /// Free-flow delay per lane, in ticks.
    pub d0: PerLane<f64>,
    pub gamma: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        Self {
            d0: PerLane::new(2.0, 5.0),
            gamma: 3.0,
        }
    }
}

/// Expected passage delay in ticks: `d0[lane] * (1 + gamma * rho)`.
pub fn expected_delay(lane: Lane, rho: f64, params: &DelayParams) -> f64 {
    params.d0[lane] * (1.0 + params.gamma * rho.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityObservation {
    pub lane: Lane,
    pub count: u32,
    pub capacity: u32,
    pub rho: f64,
}

impl DensityObservation {
    pub fn new(lane: Lane, count: u32, capacity: u32) -> Self {
        let rho = if capacity == 0 {
            if count > 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (f64::from(count) / f64::from(capacity)).min(1.0)
        };
        Self {
            lane,
            count,
            capacity,
            rho,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> PricingModel {
        PricingModel {
            base: PerLane::new(10, 10),
            floor: PerLane::new(1, 1),
            ceiling: PerLane::new(100, 100),
            ..PricingModel::default()
        }
    }

    #[test]
    fn zero_density_quotes_base() {
        let m = PricingModel::default();
        assert_eq!(m.quote(Lane::Fast, 0.0), 15);
        assert_eq!(m.quote(Lane::Economic, 0.0), 5);
    }

    #[test]
    fn congestion_multiplier_rounds_half_up() {
        let m = PricingModel { alpha: 0.5, ..model() };
        // 10 * (1 + 0.5 * 0.5) = 12.5
        assert_eq!(m.quote(Lane::Fast, 0.5), 13);
    }

    #[test]
    fn quote_clamps_to_ceiling() {
        let mut m = PricingModel { alpha: 10.0, ..model() };
        m.ceiling.fast = 50;
        assert_eq!(m.quote(Lane::Fast, 1.0), 50);
    }

    #[test]
    fn reserve_examples() {
        let m = PricingModel { margin: 0.0, ..model() };
        assert_eq!(m.reserve_for_quote(Lane::Fast, 13), 13);
        let m = PricingModel { margin: 0.2, ..model() };
        // 13 * 0.8 = 10.4
        assert_eq!(m.reserve_for_quote(Lane::Fast, 13), 10);
        let m = PricingModel { margin: 0.9, ..model() };
        assert_eq!(m.reserve_for_quote(Lane::Fast, 1), 1);
    }

    #[test]
    fn ema_examples() {
        let m = PricingModel { lambda: 1.0, ..model() };
        assert_eq!(m.update_on_settlement(Lane::Fast, 37).base.fast, 37);
        let m = PricingModel { lambda: 0.2, ..model() };
        // 0.8 * 10 + 0.2 * 20 = 12
        let next = m.update_on_settlement(Lane::Fast, 20);
        assert_eq!(next.base.fast, 12);
        assert_eq!(next.base.economic, 10);
        assert_eq!(m.update_on_settlement(Lane::Fast, 10), m);
    }

    #[test]
    fn peer_fusion_examples() {
        let m = PricingModel { beta: 0.0, ..model() };
        assert_eq!(m.incorporate_peer(Lane::Fast, 20), m);
        let m = PricingModel { beta: 0.5, ..model() };
        // 10 + 0.5 * (20 - 10) = 15
        assert_eq!(m.incorporate_peer(Lane::Fast, 20).base.fast, 15);
        assert_eq!(m.incorporate_peer(Lane::Fast, 10), m);
    }

    #[test]
    fn fixed_table_lookup() {
        let table: FixedTable = [(Lane::Fast, 15), (Lane::Economic, 5)].into_iter().collect();
        assert_eq!(fixed_quote(&table, Lane::Fast), Ok(15));
        let partial: FixedTable = [(Lane::Fast, 15)].into_iter().collect();
        assert_eq!(
            fixed_quote(&partial, Lane::Economic),
            Err(PricingError::UnknownLane(Lane::Economic))
        );
    }

    #[test]
    fn delay_examples() {
        let p = DelayParams {
            d0: PerLane::new(4.0, 5.0),
            gamma: 2.0,
        };
        assert_eq!(expected_delay(Lane::Fast, 0.0, &p), 4.0);
        // 4 * (1 + 2 * 0.5)
        assert_eq!(expected_delay(Lane::Fast, 0.5, &p), 8.0);
        assert!(expected_delay(Lane::Economic, 0.9, &p) >= expected_delay(Lane::Economic, 0.1, &p));
    }

    #[test]
    fn density_is_clamped() {
        assert_eq!(DensityObservation::new(Lane::Fast, 3, 6).rho, 0.5);
        assert_eq!(DensityObservation::new(Lane::Fast, 9, 6).rho, 1.0);
        assert_eq!(DensityObservation::new(Lane::Fast, 0, 0).rho, 0.0);
    }

    #[test]
    fn default_model_is_valid() {
        assert!(PricingModel::default().validate().is_ok());
        let bad = PricingModel {
            margin: 1.0,
            ..PricingModel::default()
        };
        assert_eq!(bad.validate().unwrap_err().0, "margin");
    }

    fn arb_model() -> impl Strategy<Value = PricingModel> {
        (
            1u64..50,
            0u64..50,
            0u64..200,
            0.0..5.0f64,
            0.01..=1.0f64,
            0.0..=1.0f64,
            0.0..0.99f64,
        )
            .prop_map(|(floor, span, base_off, alpha, lambda, beta, margin)| {
                let ceiling = floor + span;
                let base = floor + base_off % (span + 1);
                PricingModel {
                    base: PerLane::new(base, base),
                    alpha,
                    lambda,
                    beta,
                    floor: PerLane::new(floor, floor),
                    ceiling: PerLane::new(ceiling, ceiling),
                    margin,
                }
            })
    }

    fn fusion_model(base: u64, beta: f64) -> PricingModel {
        PricingModel {
            base: PerLane::new(base, base),
            beta,
            floor: PerLane::new(1, 1),
            ceiling: PerLane::new(200, 200),
            ..PricingModel::default()
        }
    }

    proptest! {
        #[test]
        fn quotes_are_monotone_and_bounded(m in arb_model(), r1 in 0.0..=1.0f64, r2 in 0.0..=1.0f64) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let (q1, q2) = (m.quote(Lane::Fast, lo), m.quote(Lane::Fast, hi));
            prop_assert!(q1 <= q2);
            for q in [q1, q2] {
                prop_assert!(q >= m.floor.fast && q <= m.ceiling.fast);
            }
            let r = m.reserve_price(Lane::Fast, hi);
            prop_assert!(r >= 1 && r >= m.floor.fast && r <= m.ceiling.fast && r <= q2);
        }

        #[test]
        fn ema_contracts_toward_accepted(m in arb_model(), accepted_off in 0u64..100) {
            let accepted = m.floor.fast + accepted_off % (m.ceiling.fast - m.floor.fast + 1);
            let before = (m.base.fast as f64 - accepted as f64).abs();
            let next = m.update_on_settlement(Lane::Fast, accepted);
            let after = (next.base.fast as f64 - accepted as f64).abs();
            prop_assert!(after <= (1.0 - m.lambda) * before + 1.0);
            prop_assert!(next.base.fast >= m.floor.fast && next.base.fast <= m.ceiling.fast);
        }

        #[test]
        fn peer_fusion_never_widens_the_gap(a in 1u64..200, b in 1u64..200, beta in 0.0..=1.0f64) {
            let (mut ma, mut mb) = (fusion_model(a, beta), fusion_model(b, beta));
            let mut gap = a.abs_diff(b);
            for _ in 0..50 {
                let (ba, bb) = (ma.base.fast, mb.base.fast);
                ma = ma.incorporate_peer(Lane::Fast, bb);
                mb = mb.incorporate_peer(Lane::Fast, ba);
                let next_gap = ma.base.fast.abs_diff(mb.base.fast);
                prop_assert!(next_gap <= gap);
                gap = next_gap;
            }
        }

        // Outside this band rounding can pin the gap above one token: a step
        // of beta * gap < 0.5 rounds away, and beta near 1 swaps the bases.
        #[test]
        fn peer_fusion_converges_within_one_token(a in 1u64..200, b in 1u64..200, beta in 0.25..=0.75f64) {
            let (mut ma, mut mb) = (fusion_model(a, beta), fusion_model(b, beta));
            for _ in 0..100 {
                let (ba, bb) = (ma.base.fast, mb.base.fast);
                ma = ma.incorporate_peer(Lane::Fast, bb);
                mb = mb.incorporate_peer(Lane::Fast, ba);
            }
            prop_assert!(ma.base.fast.abs_diff(mb.base.fast) <= 1);
        }
    }
}
