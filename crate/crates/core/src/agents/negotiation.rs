use super::toll::{Acceptance, Outgoing, TollContext};
use super::vehicle::{MovementParams, VehicleContext, VehicleState, VehicleStepOutput};
use super::{timeout_ticks, AgentError, NegotiationOutcome, NegotiationRecord, Norms, TollAgent, VehicleAgent};
use crate::lane::PerLane;
use crate::ledger::{Chain, Receipt};
use crate::network::{Message, Network, NetworkConfig, RejectReason, TranscriptEntry};
use crate::pricing::DelayParams;

#[derive(Clone, Debug, PartialEq)]
pub struct NegotiationParams {
    pub max_rounds: u32,
    pub norms: Norms,
    pub delay: DelayParams,
    pub network: NetworkConfig,
}

impl Default for NegotiationParams {
    fn default() -> Self {
        Self {
            max_rounds: 3,
            norms: Norms::default(),
            delay: DelayParams::default(),
            network: NetworkConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NegotiationRun {
    pub outcome: NegotiationOutcome,
    pub record: NegotiationRecord,
    pub acceptance: Option<Acceptance>,
    pub receipt: Option<Receipt>,
    pub transcript: Vec<TranscriptEntry>,
}

/// Runs one complete encounter between `vehicle` and `toll` over a private
/// network, settling any accepted contract on `chain` in the acceptance tick.
/// Densities are held fixed for the whole exchange.
pub fn run_negotiation(
    vehicle: &mut VehicleAgent,
    toll: &mut TollAgent,
    chain: &mut Chain,
    rho: PerLane<f64>,
    params: &NegotiationParams,
) -> Result<NegotiationRun, AgentError> {
    if vehicle.state != VehicleState::Cruising {
        return Err(AgentError::Busy(vehicle.id.clone()));
    }
    let mut net = Network::new(params.network).map_err(AgentError::Network)?;
    net.register(vehicle.id.clone());
    net.register(toll.id.clone());

    let timeout = timeout_ticks(params.network.latency_ticks, params.max_rounds);
    let start = chain.tip().tick + 1;
    let mut acceptance = None;
    let mut receipt = None;

    let mut opening = VehicleStepOutput::default();
    vehicle.open_session(toll.id.clone(), start, &mut opening);
    for (to, msg) in opening.outbox {
        net.send(&vehicle.id, &to, msg, start).map_err(AgentError::Network)?;
    }

    for tick in start..=start + timeout + 1 {
        let delivered = net.deliver(tick);
        let (to_toll, to_vehicle): (Vec<_>, Vec<_>) = delivered.into_iter().partition(|e| e.to == toll.id);

        let ctx = TollContext {
            tick,
            rho,
            max_rounds: params.max_rounds,
            timeout_ticks: timeout,
            peer_share_period: 0,
            peers: &[],
        };
        let toll_out = toll.step(&to_toll, &ctx);
        for msg in toll_out.outbox {
            if let Outgoing::To(to, payload) = msg {
                net.send(&toll.id, &to, payload, tick).map_err(AgentError::Network)?;
            }
        }
        for acc in toll_out.accepted {
            let notice = match chain.settle(&acc.contract, tick) {
                Ok(r) => {
                    toll.on_settlement(&acc.contract);
                    receipt = Some(r.clone());
                    Message::SettlementNotice { receipt: r }
                }
                Err(_) => Message::Reject {
                    reason: RejectReason::SettlementFailed,
                },
            };
            net.send(&toll.id, &acc.contract.vehicle_id, notice, tick)
                .map_err(AgentError::Network)?;
            acceptance = Some(acc);
        }

        let balance = chain.get_balance(vehicle.id.as_str()).unwrap_or(0);
        let vctx = VehicleContext {
            tick,
            balance,
            track_cells: 0,
            tolls: &[],
            rho,
            max_rounds: params.max_rounds,
            timeout_ticks: timeout,
            norms: params.norms,
            delay: &params.delay,
            movement: MovementParams::default(),
        };
        let mut out = VehicleStepOutput::default();
        vehicle.handle_messages(&to_vehicle, &vctx, &mut out);
        vehicle.check_timeout(&vctx, &mut out);
        for (to, msg) in out.outbox {
            net.send(&vehicle.id, &to, msg, tick).map_err(AgentError::Network)?;
        }
        if let Some(record) = out.closed {
            return Ok(NegotiationRun {
                outcome: record.outcome(),
                record,
                acceptance,
                receipt,
                transcript: net.transcript().to_vec(),
            });
        }
    }
    unreachable!("the session timeout closes every negotiation")
}
