use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{NegotiationRecord, PricingMode};
use crate::lane::{Lane, PerLane};
use crate::ledger::{AccountId, Digest};
use crate::network::NetworkStats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub tick: u64,
    pub lane_counts: PerLane<u32>,
    pub rho: PerLane<f64>,
    pub quotes: BTreeMap<AccountId, PerLane<u64>>,
    pub base: BTreeMap<AccountId, PerLane<u64>>,
    pub balances: BTreeMap<AccountId, u64>,
    /// Sum of ledger balances this tick.
    pub balance_sum: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceEvent {
    pub tick: u64,
    pub vehicle: AccountId,
    pub toll: AccountId,
    pub lane: Lane,
    pub price: u64,
    pub quote: u64,
    pub reserve: u64,
    pub round: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlementEvent {
    pub tick: u64,
    pub accepted_tick: u64,
    pub latency_ticks: u64,
    pub vehicle: AccountId,
    pub toll: AccountId,
    pub lane: Lane,
    pub amount: u64,
    pub block_height: u64,
    pub tx_id: Digest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlementFailure {
    pub tick: u64,
    pub vehicle: AccountId,
    pub toll: AccountId,
    pub amount: u64,
    pub reason: String,
}

/// A closed negotiation with the utility the vehicle achieved, if it passed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegotiationEvent {
    #[serde(flatten)]
    pub record: NegotiationRecord,
    pub achieved_utility: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LaneShare {
    pub fast: u32,
    pub economic: u32,
    pub fast_share: f64,
}

impl LaneShare {
    pub(crate) fn add(&mut self, lane: Lane) {
        match lane {
            Lane::Fast => self.fast += 1,
            Lane::Economic => self.economic += 1,
        }
        self.fast_share = f64::from(self.fast) / f64::from(self.fast + self.economic);
    }
}

/// Preference bucket by time weight.
pub fn preference_bucket(w_time: f64) -> &'static str {
    if (w_time - 0.5).abs() < 1e-9 {
        "balanced"
    } else if w_time > 0.5 {
        "time_focused"
    } else {
        "cost_focused"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total_supply: u64,
    /// Sum of every toll and vehicle balance at the end of the run.
    pub conservation: u64,
    pub toll_revenue: BTreeMap<AccountId, u64>,
    pub vehicle_spend: BTreeMap<AccountId, u64>,
    pub vehicle_final_balance: BTreeMap<AccountId, u64>,
    pub settlements: u64,
    pub settlement_failures: u64,
    pub negotiations: u64,
    pub refusals: u64,
    pub mean_settlement_latency: f64,
    pub max_settlement_latency: u64,
    pub mean_negotiation_rounds: f64,
    pub lane_share_by_preference: BTreeMap<String, LaneShare>,
    /// Mean achieved utility per vehicle, over its settled passages.
    pub vehicle_utility: BTreeMap<AccountId, f64>,
    pub mean_vehicle_utility: Option<f64>,
    pub chain_height: u64,
    pub network: NetworkStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub seed: u64,
    pub ticks: u64,
    pub pricing_mode: PricingMode,
    pub tolls: Vec<AccountId>,
    pub vehicles: Vec<AccountId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub header: ReportHeader,
    pub series: Vec<TickSample>,
    pub negotiations: Vec<NegotiationEvent>,
    pub acceptances: Vec<AcceptanceEvent>,
    pub settlements: Vec<SettlementEvent>,
    pub settlement_failures: Vec<SettlementFailure>,
    pub summary: Summary,
    pub final_chain_hash: Digest,
}

impl MetricsReport {
    /// A report with headers and no rows.
    pub fn empty(header: ReportHeader) -> Self {
        Self {
            header,
            series: Vec::new(),
            negotiations: Vec::new(),
            acceptances: Vec::new(),
            settlements: Vec::new(),
            settlement_failures: Vec::new(),
            summary: Summary {
                total_supply: 0,
                conservation: 0,
                toll_revenue: BTreeMap::new(),
                vehicle_spend: BTreeMap::new(),
                vehicle_final_balance: BTreeMap::new(),
                settlements: 0,
                settlement_failures: 0,
                negotiations: 0,
                refusals: 0,
                mean_settlement_latency: 0.0,
                max_settlement_latency: 0,
                mean_negotiation_rounds: 0.0,
                lane_share_by_preference: BTreeMap::new(),
                vehicle_utility: BTreeMap::new(),
                mean_vehicle_utility: None,
                chain_height: 0,
                network: NetworkStats::default(),
            },
            final_chain_hash: Digest::ZERO,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("unsupported export format {0:?} (expected json or csv)")]
    UnsupportedFormat(String),
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(ExportError::UnsupportedFormat(other.to_owned())),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
        })
    }
}

/// Renders the report. JSON carries everything; CSV carries the per-tick
/// series, one row per tick.
pub fn export_metrics(report: &MetricsReport, format: ExportFormat) -> String {
    match format {
        ExportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
            s.push('\n');
            s
        }
        ExportFormat::Csv => export_csv(report),
    }
}

fn export_csv(report: &MetricsReport) -> String {
    let tolls = &report.header.tolls;
    let accounts: Vec<&AccountId> = report.header.tolls.iter().chain(&report.header.vehicles).collect();

    let mut header = vec![
        "tick".to_owned(),
        "fast_count".into(),
        "economic_count".into(),
        "fast_rho".into(),
        "economic_rho".into(),
    ];
    for t in tolls {
        for lane in Lane::ALL {
            header.push(format!("{t}_{lane}_quote"));
        }
        for lane in Lane::ALL {
            header.push(format!("{t}_{lane}_base"));
        }
    }
    for a in &accounts {
        header.push(format!("{a}_balance"));
    }
    header.push("balance_sum".into());

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for s in &report.series {
        let mut row = vec![
            s.tick.to_string(),
            s.lane_counts.fast.to_string(),
            s.lane_counts.economic.to_string(),
            s.rho.fast.to_string(),
            s.rho.economic.to_string(),
        ];
        for t in tolls {
            let q = s.quotes.get(t).copied().unwrap_or_default();
            let b = s.base.get(t).copied().unwrap_or_default();
            row.extend(Lane::ALL.iter().map(|&l| q[l].to_string()));
            row.extend(Lane::ALL.iter().map(|&l| b[l].to_string()));
        }
        for a in &accounts {
            row.push(s.balances.get(*a).copied().unwrap_or_default().to_string());
        }
        row.push(s.balance_sum.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
