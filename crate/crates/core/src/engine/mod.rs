//! Deterministic tick loop binding agents, network, pricing and ledger.

mod compare;
mod metrics;
mod scenario;
mod sim;

pub use compare::{compare_modes, CompareError, ComparisonReport, ModeSummary, VehicleComparison};
pub use metrics::{
    export_metrics, preference_bucket, AcceptanceEvent, ExportError, ExportFormat, LaneShare, MetricsReport,
    NegotiationEvent, ReportHeader, SettlementEvent, SettlementFailure, Summary, TickSample,
};
pub use scenario::{load_scenario, NetworkParams, ScenarioConfig, ScenarioError, VehicleSpec, DEFAULT_SCENARIO};
pub use sim::{run, Phase, Simulation, SimulationOutput, DEFAULT_PHASE_ORDER};
