//! Scenario documents: UTF-8 JSON, unknown fields rejected, defaults filled.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{MovementParams, Norms, PricingMode};
use crate::lane::Lane;
use crate::network::NetworkConfig;
use crate::pricing::{DelayParams, FixedTable, PricingModel};

/// The bundled six-vehicle, two-toll, two-lane scenario.
pub const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/default.json");

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column} (byte offset {offset}): {message}")]
    Parse {
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: String,
    pub balance: u64,
    /// Weight on travel time; the cost weight is `1 - w_time`.
    pub w_time: f64,
    /// Drawn from the seeded placement stream when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_cell: Option<u32>,
    #[serde(default = "default_lane")]
    pub start_lane: Lane,
}

fn default_lane() -> Lane {
    Lane::Economic
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkParams {
    pub latency_ticks: u64,
    pub drop_probability: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        let d = NetworkConfig::default();
        Self {
            latency_ticks: d.latency_ticks,
            drop_probability: d.drop_probability,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub ticks: u64,
    pub track_cells: u32,
    /// One toll per entry, named `T1`, `T2`, ... in this order.
    pub toll_positions: Vec<u32>,
    pub vehicles: Vec<VehicleSpec>,
    /// A single model shared by every toll, or one per toll.
    #[serde(default = "default_pricing")]
    pub pricing: Vec<PricingModel>,
    #[serde(default)]
    pub pricing_mode: PricingMode,
    #[serde(default)]
    pub fixed_table: Option<FixedTable>,
    #[serde(default)]
    pub network: NetworkParams,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    /// Ticks between peer base-price shares; 0 disables sharing.
    #[serde(default = "default_peer_share_period")]
    pub peer_share_period: u64,
    /// Vehicles per lane at which density saturates.
    #[serde(default = "default_lane_capacity")]
    pub lane_capacity: u32,
    #[serde(default)]
    pub norms: Norms,
    #[serde(default)]
    pub delay: DelayParams,
    #[serde(default)]
    pub movement: MovementParams,
    /// Seal an empty block on ticks without settlements.
    #[serde(default)]
    pub heartbeat_blocks: bool,
}

fn default_pricing() -> Vec<PricingModel> {
    vec![PricingModel::default()]
}

fn default_max_rounds() -> u32 {
    3
}

fn default_peer_share_period() -> u64 {
    10
}

fn default_lane_capacity() -> u32 {
    6
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ScenarioConfig {
    pub fn default_scenario() -> Self {
        load_scenario(DEFAULT_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn toll_ids(&self) -> Vec<String> {
        (1..=self.toll_positions.len()).map(|i| format!("T{i}")).collect()
    }

    /// Pricing model of the `index`-th toll.
    pub fn pricing_for(&self, index: usize) -> &PricingModel {
        if self.pricing.len() == 1 {
            &self.pricing[0]
        } else {
            &self.pricing[index]
        }
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            latency_ticks: self.network.latency_ticks,
            drop_probability: self.network.drop_probability,
            seed: self.seed,
        }
    }

    /// Negotiation rounds in force: fixed pricing is a posted-price regime.
    pub fn effective_max_rounds(&self) -> u32 {
        match self.pricing_mode {
            PricingMode::Dynamic => self.max_rounds,
            PricingMode::Fixed => 0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.ticks == 0 {
            return Err(invalid("ticks", "must be at least 1"));
        }
        if self.track_cells == 0 {
            return Err(invalid("track_cells", "must be at least 1"));
        }
        if self.toll_positions.is_empty() {
            return Err(invalid("toll_positions", "at least one toll is required"));
        }
        let mut cells = BTreeSet::new();
        for (i, &p) in self.toll_positions.iter().enumerate() {
            if p >= self.track_cells {
                return Err(invalid(
                    format!("toll_positions[{i}]"),
                    format!("cell {p} outside track"),
                ));
            }
            if !cells.insert(p) {
                return Err(invalid(
                    format!("toll_positions[{i}]"),
                    format!("cell {p} already has a toll"),
                ));
            }
        }

        let tolls: BTreeSet<String> = self.toll_ids().into_iter().collect();
        let mut ids = BTreeSet::new();
        let mut supply: u64 = 0;
        for (i, v) in self.vehicles.iter().enumerate() {
            let field = |name: &str| format!("vehicles[{i}].{name}");
            if !valid_id(&v.id) {
                return Err(invalid(field("id"), "must be non-empty [A-Za-z0-9_.-]"));
            }
            if tolls.contains(&v.id) {
                return Err(invalid(field("id"), format!("{} is a toll id", v.id)));
            }
            if !ids.insert(v.id.as_str()) {
                return Err(invalid(field("id"), format!("duplicate vehicle id {}", v.id)));
            }
            if !(0.0..=1.0).contains(&v.w_time) {
                return Err(invalid(field("w_time"), "must lie in [0, 1]"));
            }
            if v.start_cell.is_some_and(|c| c >= self.track_cells) {
                return Err(invalid(field("start_cell"), "outside track"));
            }
            supply = supply
                .checked_add(v.balance)
                .ok_or_else(|| invalid(field("balance"), "total supply overflows"))?;
        }

        if self.pricing.len() != 1 && self.pricing.len() != self.toll_positions.len() {
            return Err(invalid(
                "pricing",
                format!(
                    "expected 1 or {} models, found {}",
                    self.toll_positions.len(),
                    self.pricing.len()
                ),
            ));
        }
        for (i, m) in self.pricing.iter().enumerate() {
            m.validate()
                .map_err(|(f, reason)| invalid(format!("pricing[{i}].{f}"), reason))?;
        }

        if let Some(table) = &self.fixed_table {
            for (lane, &price) in table {
                if price == 0 {
                    return Err(invalid(format!("fixed_table.{lane}"), "price must be at least 1"));
                }
            }
        }
        if self.pricing_mode == PricingMode::Fixed {
            let table = self
                .fixed_table
                .as_ref()
                .ok_or_else(|| invalid("fixed_table", "required in fixed pricing mode"))?;
            for lane in Lane::ALL {
                if !table.contains_key(&lane) {
                    return Err(invalid(format!("fixed_table.{lane}"), "missing lane price"));
                }
            }
        }

        let p = self.network.drop_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("network.drop_probability", "must lie in [0, 1]"));
        }
        if self.lane_capacity == 0 {
            return Err(invalid("lane_capacity", "must be at least 1"));
        }
        if !(self.norms.price_scale > 0.0 && self.norms.price_scale.is_finite()) {
            return Err(invalid("norms.price_scale", "must be positive"));
        }
        if !(self.norms.delay_scale > 0.0 && self.norms.delay_scale.is_finite()) {
            return Err(invalid("norms.delay_scale", "must be positive"));
        }
        for lane in Lane::ALL {
            if !(self.delay.d0[lane] > 0.0 && self.delay.d0[lane].is_finite()) {
                return Err(invalid(format!("delay.d0.{lane}"), "must be positive"));
            }
            if self.movement.cell_rate[lane] == 0 {
                return Err(invalid(format!("movement.cell_rate.{lane}"), "must be at least 1"));
            }
        }
        if self.delay.d0.fast >= self.delay.d0.economic {
            return Err(invalid("delay.d0.fast", "must be below delay.d0.economic"));
        }
        if !(self.delay.gamma >= 0.0 && self.delay.gamma.is_finite()) {
            return Err(invalid("delay.gamma", "must be non-negative"));
        }
        if !(self.movement.gamma_move >= 0.0 && self.movement.gamma_move.is_finite()) {
            return Err(invalid("movement.gamma_move", "must be non-negative"));
        }
        Ok(())
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str) -> Result<ScenarioConfig, ScenarioError> {
    let config: ScenarioConfig = serde_json::from_str(document).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        ScenarioError::Parse {
            line,
            column,
            offset: byte_offset(document, line, column),
            message: e.to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// Byte offset of a 1-based (line, column) position as reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
