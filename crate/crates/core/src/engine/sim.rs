use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::metrics::{
    preference_bucket, AcceptanceEvent, LaneShare, MetricsReport, NegotiationEvent, ReportHeader, SettlementEvent,
    SettlementFailure, Summary, TickSample,
};
use super::scenario::{ScenarioConfig, ScenarioError};
use crate::agents::{
    timeout_ticks, vehicle_utility, Acceptance, NegotiationRecord, Outgoing, Preferences, PricingMode, TollAgent,
    TollContext, VehicleAgent, VehicleContext,
};
use crate::lane::PerLane;
use crate::ledger::{AccountId, Chain};
use crate::network::{AgentId, Envelope, Message, Network, RejectReason, TranscriptEntry};
use crate::pricing::{expected_delay, DensityObservation};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Deliver,
    Tolls,
    Vehicles,
    Seal,
    Sample,
}

pub const DEFAULT_PHASE_ORDER: [Phase; 5] = [
    Phase::Deliver,
    Phase::Tolls,
    Phase::Vehicles,
    Phase::Seal,
    Phase::Sample,
];

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub report: MetricsReport,
    pub chain: Chain,
    pub transcript: Vec<TranscriptEntry>,
}

impl SimulationOutput {
    pub fn transcript_ndjson(&self) -> String {
        let mut out = String::new();
        for entry in &self.transcript {
            out.push_str(&serde_json::to_string(entry).expect("envelopes always serialize"));
            out.push('\n');
        }
        out
    }
}

/// Validates `config` and runs it to completion.
pub fn run(config: &ScenarioConfig) -> Result<SimulationOutput, ScenarioError> {
    let mut sim = Simulation::new(config.clone())?;
    while sim.tick_count() < config.ticks {
        sim.tick();
    }
    Ok(sim.finish())
}

pub struct Simulation {
    config: ScenarioConfig,
    phases: [Phase; 5],
    tick: u64,
    chain: Chain,
    network: Network,
    tolls: Vec<TollAgent>,
    toll_ids: Vec<AgentId>,
    toll_cells: Vec<(AgentId, u32)>,
    vehicles: Vec<VehicleAgent>,
    max_rounds: u32,
    timeout: u64,
    inbox: Vec<Envelope>,
    accepted: Vec<Acceptance>,

    series: Vec<TickSample>,
    negotiations: Vec<NegotiationRecord>,
    acceptances: Vec<AcceptanceEvent>,
    settlements: Vec<SettlementEvent>,
    failures: Vec<SettlementFailure>,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        Self::with_phase_order(config, DEFAULT_PHASE_ORDER)
    }

    /// Runs phases in a non-standard order. Only useful for testing that the
    /// order matters.
    pub fn with_phase_order(config: ScenarioConfig, phases: [Phase; 5]) -> Result<Self, ScenarioError> {
        config.validate()?;
        let fixed_table = config.fixed_table.clone().unwrap_or_default();

        let mut tolls: Vec<TollAgent> = config
            .toll_ids()
            .into_iter()
            .zip(&config.toll_positions)
            .enumerate()
            .map(|(i, (id, &cell))| {
                TollAgent::new(
                    id.into(),
                    cell,
                    config.pricing_for(i).clone(),
                    config.pricing_mode,
                    fixed_table.clone(),
                )
            })
            .collect();
        tolls.sort_by(|a, b| a.id.cmp(&b.id));

        let mut placement = rng::stream(config.seed, rng::PLACEMENT_STREAM);
        let mut vehicles = Vec::with_capacity(config.vehicles.len());
        for (i, v) in config.vehicles.iter().enumerate() {
            // One draw per vehicle whether or not it is used.
            let drawn = placement.gen_range(0..config.track_cells);
            let prefs = Preferences::time_weighted(v.w_time).map_err(|_| ScenarioError::Validation {
                field: format!("vehicles[{i}].w_time"),
                reason: "must lie in [0, 1]".into(),
            })?;
            vehicles.push(VehicleAgent::new(
                v.id.clone().into(),
                prefs,
                v.start_cell.unwrap_or(drawn),
                v.start_lane,
            ));
        }
        vehicles.sort_by(|a, b| a.id.cmp(&b.id));

        let toll_ids: Vec<AgentId> = tolls.iter().map(|t| t.id.clone()).collect();
        let toll_cells = tolls.iter().map(|t| (t.id.clone(), t.position)).collect();
        let balances = toll_ids.iter().map(|t| (t.clone(), 0)).chain(
            config
                .vehicles
                .iter()
                .map(|v| (AccountId::from(v.id.as_str()), v.balance)),
        );
        let chain = Chain::genesis(toll_ids.clone(), balances).map_err(|e| ScenarioError::Validation {
            field: "vehicles".into(),
            reason: e.to_string(),
        })?;

        let mut network = Network::new(config.network_config()).map_err(|e| ScenarioError::Validation {
            field: "network".into(),
            reason: e.to_string(),
        })?;
        for id in toll_ids.iter().chain(vehicles.iter().map(|v| &v.id)) {
            network.register(id.clone());
        }

        let max_rounds = config.effective_max_rounds();
        let timeout = timeout_ticks(config.network.latency_ticks, max_rounds);
        Ok(Self {
            config,
            phases,
            tick: 0,
            chain,
            network,
            tolls,
            toll_ids,
            toll_cells,
            vehicles,
            max_rounds,
            timeout,
            inbox: Vec::new(),
            accepted: Vec::new(),
            series: Vec::new(),
            negotiations: Vec::new(),
            acceptances: Vec::new(),
            settlements: Vec::new(),
            failures: Vec::new(),
        })
    }

    /// Ticks completed so far.
    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn vehicles(&self) -> &[VehicleAgent] {
        &self.vehicles
    }

    pub fn tolls(&self) -> &[TollAgent] {
        &self.tolls
    }

    pub fn samples(&self) -> &[TickSample] {
        &self.series
    }

    pub fn lane_counts(&self) -> PerLane<u32> {
        let mut counts = PerLane::new(0, 0);
        for v in &self.vehicles {
            counts[v.lane] += 1;
        }
        counts
    }

    /// Whole-track lane densities.
    pub fn densities(&self) -> PerLane<f64> {
        let counts = self.lane_counts();
        PerLane::from_fn(|lane| DensityObservation::new(lane, counts[lane], self.config.lane_capacity).rho)
    }

    /// Runs one tick through every phase.
    pub fn tick(&mut self) {
        self.tick += 1;
        for phase in self.phases {
            match phase {
                Phase::Deliver => {
                    let due = self.network.deliver(self.tick);
                    self.inbox.extend(due);
                }
                Phase::Tolls => self.step_tolls(),
                Phase::Vehicles => self.step_vehicles(),
                Phase::Seal => self.seal(),
                Phase::Sample => self.sample(),
            }
        }
    }

    fn take_inbox(&mut self, to: &AgentId) -> Vec<Envelope> {
        let (mine, rest) = std::mem::take(&mut self.inbox).into_iter().partition(|e| &e.to == to);
        self.inbox = rest;
        mine
    }

    fn step_tolls(&mut self) {
        let rho = self.densities();
        let share_period = match self.config.pricing_mode {
            PricingMode::Dynamic => self.config.peer_share_period,
            PricingMode::Fixed => 0,
        };
        for i in 0..self.tolls.len() {
            let id = self.tolls[i].id.clone();
            let delivered = self.take_inbox(&id);
            let ctx = TollContext {
                tick: self.tick,
                rho,
                max_rounds: self.max_rounds,
                timeout_ticks: self.timeout,
                peer_share_period: share_period,
                peers: &self.toll_ids,
            };
            let out = self.tolls[i].step(&delivered, &ctx);
            for msg in out.outbox {
                match msg {
                    Outgoing::To(to, payload) => {
                        self.network
                            .send(&id, &to, payload, self.tick)
                            .expect("every agent is registered");
                    }
                    Outgoing::Peers(payload) => {
                        self.network
                            .broadcast(&id, &self.toll_ids, payload, self.tick)
                            .expect("every toll is registered");
                    }
                }
            }
            for acc in out.accepted {
                let c = &acc.contract;
                self.acceptances.push(AcceptanceEvent {
                    tick: self.tick,
                    vehicle: c.vehicle_id.clone(),
                    toll: c.toll_id.clone(),
                    lane: c.lane,
                    price: c.price,
                    quote: acc.quote,
                    reserve: acc.reserve,
                    round: c.negotiated_rounds,
                });
                self.accepted.push(acc);
            }
        }
    }

    fn step_vehicles(&mut self) {
        let rho = self.densities();
        for i in 0..self.vehicles.len() {
            let id = self.vehicles[i].id.clone();
            let delivered = self.take_inbox(&id);
            let ctx = VehicleContext {
                tick: self.tick,
                balance: self.chain.get_balance(id.as_str()).unwrap_or(0),
                track_cells: self.config.track_cells,
                tolls: &self.toll_cells,
                rho,
                max_rounds: self.max_rounds,
                timeout_ticks: self.timeout,
                norms: self.config.norms,
                delay: &self.config.delay,
                movement: self.config.movement,
            };
            let out = self.vehicles[i].step(&delivered, &ctx);
            for (to, payload) in out.outbox {
                self.network
                    .send(&id, &to, payload, self.tick)
                    .expect("every agent is registered");
            }
            if let Some(record) = out.closed {
                self.negotiations.push(record);
            }
        }
    }

    /// Seals everything accepted this tick into one block.
    fn seal(&mut self) {
        let accepted = std::mem::take(&mut self.accepted);
        if accepted.is_empty() {
            if self.config.heartbeat_blocks && self.chain.tip().tick < self.tick {
                self.chain
                    .append_block(Vec::new(), self.tick)
                    .expect("empty blocks always apply");
            }
            return;
        }
        let contracts: Vec<_> = accepted.iter().map(|a| a.contract.clone()).collect();
        let batch = match self.chain.settle_batch(&contracts, self.tick) {
            Ok(b) => b,
            Err(e) => {
                // Only a tick regression can fail the whole batch.
                for c in &contracts {
                    self.fail(c.vehicle_id.clone(), c.toll_id.clone(), c.price, e.to_string());
                }
                return;
            }
        };
        for (idx, receipt) in batch.receipts {
            let c = &contracts[idx];
            if let Some(toll) = self.tolls.iter_mut().find(|t| t.id == c.toll_id) {
                toll.on_settlement(c);
            }
            self.settlements.push(SettlementEvent {
                tick: receipt.tick,
                accepted_tick: c.tick,
                latency_ticks: receipt.tick - c.tick,
                vehicle: c.vehicle_id.clone(),
                toll: c.toll_id.clone(),
                lane: c.lane,
                amount: c.price,
                block_height: receipt.block_height,
                tx_id: receipt.tx_id,
            });
            self.network
                .send(
                    &c.toll_id,
                    &c.vehicle_id,
                    Message::SettlementNotice { receipt },
                    self.tick,
                )
                .expect("every agent is registered");
        }
        for (idx, err) in batch.failures {
            let c = &contracts[idx];
            self.fail(c.vehicle_id.clone(), c.toll_id.clone(), c.price, err.to_string());
        }
    }

    fn fail(&mut self, vehicle: AccountId, toll: AccountId, amount: u64, reason: String) {
        self.network
            .send(
                &toll,
                &vehicle,
                Message::Reject {
                    reason: RejectReason::SettlementFailed,
                },
                self.tick,
            )
            .expect("every agent is registered");
        self.failures.push(SettlementFailure {
            tick: self.tick,
            vehicle,
            toll,
            amount,
            reason,
        });
    }

    fn sample(&mut self) {
        let rho = self.densities();
        let state = self.chain.state();
        let balances: BTreeMap<AccountId, u64> = state.accounts().map(|a| (a.id.clone(), a.balance)).collect();
        let balance_sum = balances.values().sum();
        self.series.push(TickSample {
            tick: self.tick,
            lane_counts: self.lane_counts(),
            rho,
            quotes: self.tolls.iter().map(|t| (t.id.clone(), t.quotes(&rho))).collect(),
            base: self.tolls.iter().map(|t| (t.id.clone(), t.model.base)).collect(),
            balances,
            balance_sum,
        });
    }

    /// Builds the report and hands back the chain and transcript.
    pub fn finish(self) -> SimulationOutput {
        let settled: BTreeSet<(AccountId, AccountId, u64)> = self
            .settlements
            .iter()
            .map(|s| (s.vehicle.clone(), s.toll.clone(), s.accepted_tick))
            .collect();
        let prefs: BTreeMap<&AccountId, &Preferences> = self.vehicles.iter().map(|v| (&v.id, &v.prefs)).collect();

        let negotiations: Vec<NegotiationEvent> = self
            .negotiations
            .iter()
            .map(|r| {
                let achieved_utility = match (&r.contract, &r.densities) {
                    (Some(c), Some(rho)) if settled.contains(&(c.vehicle_id.clone(), c.toll_id.clone(), c.tick)) => {
                        let delay = expected_delay(c.lane, rho[c.lane], &self.config.delay);
                        Some(vehicle_utility(
                            prefs[&r.vehicle],
                            c.price as f64,
                            delay,
                            &self.config.norms,
                        ))
                    }
                    _ => None,
                };
                NegotiationEvent {
                    record: r.clone(),
                    achieved_utility,
                }
            })
            .collect();

        let summary = self.summarize(&negotiations);
        let header = ReportHeader {
            seed: self.config.seed,
            ticks: self.config.ticks,
            pricing_mode: self.config.pricing_mode,
            tolls: self.toll_ids.clone(),
            vehicles: self.vehicles.iter().map(|v| v.id.clone()).collect(),
        };
        let report = MetricsReport {
            header,
            series: self.series,
            negotiations,
            acceptances: self.acceptances,
            settlements: self.settlements,
            settlement_failures: self.failures,
            summary,
            final_chain_hash: self.chain.tip().block_hash,
        };
        SimulationOutput {
            report,
            transcript: self.network.transcript().to_vec(),
            chain: self.chain,
        }
    }

    fn summarize(&self, negotiations: &[NegotiationEvent]) -> Summary {
        let state = self.chain.state();
        let toll_revenue: BTreeMap<AccountId, u64> = self
            .toll_ids
            .iter()
            .map(|t| (t.clone(), state.balance(t.as_str()).unwrap_or(0)))
            .collect();
        let mut vehicle_spend: BTreeMap<AccountId, u64> = self.vehicles.iter().map(|v| (v.id.clone(), 0)).collect();
        for s in &self.settlements {
            *vehicle_spend.entry(s.vehicle.clone()).or_default() += s.amount;
        }
        let vehicle_final_balance: BTreeMap<AccountId, u64> = self
            .vehicles
            .iter()
            .map(|v| (v.id.clone(), state.balance(v.id.as_str()).unwrap_or(0)))
            .collect();
        let conservation = toll_revenue.values().sum::<u64>() + vehicle_final_balance.values().sum::<u64>();

        let latencies: Vec<u64> = self.settlements.iter().map(|s| s.latency_ticks).collect();
        let mean_settlement_latency = mean(latencies.iter().map(|&l| l as f64));
        let rounds = mean(negotiations.iter().map(|n| f64::from(n.record.rounds_used)));

        let w_time: BTreeMap<&AccountId, f64> = self.vehicles.iter().map(|v| (&v.id, v.prefs.w_time)).collect();
        let mut lane_share: BTreeMap<String, LaneShare> = BTreeMap::new();
        for s in &self.settlements {
            let bucket = preference_bucket(w_time.get(&s.vehicle).copied().unwrap_or(0.0));
            lane_share.entry(bucket.to_owned()).or_default().add(s.lane);
        }

        let mut per_vehicle: BTreeMap<AccountId, Vec<f64>> = BTreeMap::new();
        for n in negotiations {
            if let Some(u) = n.achieved_utility {
                per_vehicle.entry(n.record.vehicle.clone()).or_default().push(u);
            }
        }
        let vehicle_utility: BTreeMap<AccountId, f64> = per_vehicle
            .into_iter()
            .map(|(v, us)| (v, mean(us.into_iter())))
            .collect();
        let mean_vehicle_utility = if vehicle_utility.is_empty() {
            None
        } else {
            Some(mean(vehicle_utility.values().copied()))
        };

        Summary {
            total_supply: self.chain.total_supply(),
            conservation,
            toll_revenue,
            vehicle_spend,
            vehicle_final_balance,
            settlements: self.settlements.len() as u64,
            settlement_failures: self.failures.len() as u64,
            negotiations: negotiations.len() as u64,
            refusals: negotiations.iter().filter(|n| n.record.refusal.is_some()).count() as u64,
            mean_settlement_latency,
            max_settlement_latency: latencies.iter().copied().max().unwrap_or(0),
            mean_negotiation_rounds: rounds,
            lane_share_by_preference: lane_share,
            vehicle_utility,
            mean_vehicle_utility,
            chain_height: self.chain.height(),
            network: self.network.stats(),
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0u64), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
