use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{LaneShare, MetricsReport};
use super::scenario::{ScenarioConfig, ScenarioError};
use super::sim::run;
use crate::agents::PricingMode;
use crate::ledger::{AccountId, Digest};

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("fixed pricing needs a fixed_table in the scenario")]
    MissingFixedTable,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: PricingMode,
    pub toll_revenue: BTreeMap<AccountId, u64>,
    pub total_revenue: u64,
    pub settlements: u64,
    pub settlement_prices: BTreeSet<u64>,
    pub mean_vehicle_utility: Option<f64>,
    pub vehicle_utility: BTreeMap<AccountId, f64>,
    pub lane_share_by_preference: BTreeMap<String, LaneShare>,
    pub mean_negotiation_rounds: f64,
    pub final_chain_hash: Digest,
}

impl ModeSummary {
    fn from_report(report: &MetricsReport) -> Self {
        let s = &report.summary;
        Self {
            mode: report.header.pricing_mode,
            toll_revenue: s.toll_revenue.clone(),
            total_revenue: s.toll_revenue.values().sum(),
            settlements: s.settlements,
            settlement_prices: report.settlements.iter().map(|e| e.amount).collect(),
            mean_vehicle_utility: s.mean_vehicle_utility,
            vehicle_utility: s.vehicle_utility.clone(),
            lane_share_by_preference: s.lane_share_by_preference.clone(),
            mean_negotiation_rounds: s.mean_negotiation_rounds,
            final_chain_hash: report.final_chain_hash,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleComparison {
    pub vehicle: AccountId,
    pub dynamic: Option<f64>,
    pub fixed: Option<f64>,
    /// Dynamic utility at least the fixed one. A vehicle that passed under
    /// only one mode counts as not comparable and is reported as `None`.
    pub dynamic_not_worse: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub dynamic: ModeSummary,
    pub fixed: ModeSummary,
    pub vehicles: Vec<VehicleComparison>,
}

impl ComparisonReport {
    /// Every comparable vehicle does at least as well under dynamic pricing.
    pub fn dynamic_dominates(&self) -> bool {
        self.vehicles.iter().all(|v| v.dynamic_not_worse != Some(false))
    }
}

/// Runs the scenario once per pricing mode with the same seed.
pub fn compare_modes(config: &ScenarioConfig) -> Result<ComparisonReport, CompareError> {
    if config.fixed_table.is_none() {
        return Err(CompareError::MissingFixedTable);
    }
    let mut dynamic_cfg = config.clone();
    dynamic_cfg.pricing_mode = PricingMode::Dynamic;
    let mut fixed_cfg = config.clone();
    fixed_cfg.pricing_mode = PricingMode::Fixed;

    let dynamic = run(&dynamic_cfg)?.report;
    let fixed = run(&fixed_cfg)?.report;

    let vehicles = dynamic
        .header
        .vehicles
        .iter()
        .map(|id| {
            let d = dynamic.summary.vehicle_utility.get(id).copied();
            let f = fixed.summary.vehicle_utility.get(id).copied();
            VehicleComparison {
                vehicle: id.clone(),
                dynamic: d,
                fixed: f,
                dynamic_not_worse: d.zip(f).map(|(d, f)| d >= f - 1e-12),
            }
        })
        .collect();

    Ok(ComparisonReport {
        seed: config.seed,
        dynamic: ModeSummary::from_report(&dynamic),
        fixed: ModeSummary::from_report(&fixed),
        vehicles,
    })
}
