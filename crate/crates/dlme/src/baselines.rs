//! Average-emission baselines.
//!
//! `compute_dlae` traces carbon through the solved power flow: each hour,
//! every bus mixes its injections (grid imports, DG, storage discharge,
//! and upstream branch deliveries) into one average intensity, losses are
//! booked at the sending end's intensity, and loads withdraw at their
//! bus's intensity. Storage keeps a running mass/energy account so that
//! discharged energy carries the average intensity of what filled it,
//! divided by the discharge efficiency.
//!
//! `compute_rodm` ignores the network entirely: a merit-order stack of
//! generators per hour, every bus assigned the marginal unit's rate.

use crate::grid::NetworkCase;
use crate::scenario::ScenarioSet;
use crate::scheduler::DispatchSolution;
use thiserror::Error;

/// Flows and injections below this (MW) are treated as zero.
const FLOW_EPS: f64 = 1e-7;

// --- flow-traced average intensity -----------------------------------------

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct DlaeAudit {
    /// Emission released by generation over the horizon, tCO2.
    pub generation: f64,
    /// Emission attributed to served load (including EV charging), tCO2.
    pub to_loads: f64,
    /// Emission attributed to branch losses, tCO2.
    pub to_losses: f64,
    /// Stored mass drawn out of storage accounts, tCO2.
    pub store_released: f64,
    /// Mass absorbed into storage accounts, tCO2.
    pub store_absorbed: f64,
}

impl DlaeAudit {
    /// Conservation defect: generation plus released store mass must equal
    /// loads plus losses plus absorbed store mass.
    pub fn residual(&self) -> f64 {
        self.generation + self.store_released - self.to_loads - self.to_losses
            - self.store_absorbed
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AverageSignals {
    pub label: String,
    /// Average intensity seen by demand, tCO2/MWh, per (bus position, hour).
    pub intensity: Vec<Vec<f64>>,
    pub audit: DlaeAudit,
    /// Buses that had demand in an hour with no traced inflow.
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("dispatch shape does not match the case ({0})")]
    Shape(String),
    #[error("hour {hour}: demand {demand:.3} MW exceeds stack capacity {capacity:.3} MW")]
    Shortfall { hour: usize, demand: f64, capacity: f64 },
}

struct StoreState {
    energy: f64,
    mass: f64,
}

/// Trace average carbon intensity through a solved dispatch.
pub fn compute_dlae(
    case: &NetworkCase,
    scenario: &ScenarioSet,
    sol: &DispatchSolution,
) -> Result<AverageSignals, BaselineError> {
    let n = case.buses.len();
    let t_all = case.horizon();
    if sol.v_squared.len() != n || scenario.demand_p.len() != n {
        return Err(BaselineError::Shape("bus count".into()));
    }
    if sol.branch_l.len() != case.closed_branches().len() {
        return Err(BaselineError::Shape("branch count".into()));
    }
    let bus_index = case.bus_index();
    let closed = case.closed_branches();
    let branch_ends: Vec<(usize, usize)> =
        closed.iter().map(|br| (bus_index[&br.from], bus_index[&br.to])).collect();
    let sub = case.substation_index();
    let dt = case.base.period_hours;
    let base = case.base.mva;

    let mut stores: Vec<StoreState> = case
        .storage
        .iter()
        .map(|u| StoreState { energy: u.e_init, mass: u.e_init * u.initial_intensity })
        .collect();

    let mut intensity = vec![vec![0.0; t_all]; n];
    let mut audit = DlaeAudit::default();
    let mut warnings = Vec::new();

    for t in 0..t_all {
        // Sent/received/loss per branch, MW, with the sender's bus worked
        // out from the flow sign. When neither end receives (tiny counter
        // flows feeding the loss), both ends are senders.
        struct Edge {
            sender: usize,
            receiver: Option<usize>,
            received: f64,
            loss_at_sender: f64,
            extra: Option<(usize, f64)>, // second feeding end
        }
        let mut edges: Vec<Edge> = Vec::with_capacity(closed.len());
        for (k, br) in closed.iter().enumerate() {
            let (f, to) = branch_ends[k];
            let p = sol.branch_p[k][t];
            let loss = br.r * sol.branch_l[k][t] * base;
            let s_from = p;
            let s_to = loss - p;
            if s_from > 0.0 && s_to <= 0.0 {
                edges.push(Edge {
                    sender: f,
                    receiver: Some(to),
                    received: -s_to,
                    loss_at_sender: loss,
                    extra: None,
                });
            } else if s_to > 0.0 && s_from <= 0.0 {
                edges.push(Edge {
                    sender: to,
                    receiver: Some(f),
                    received: -s_from,
                    loss_at_sender: loss,
                    extra: None,
                });
            } else {
                // Both ends feed the line; everything becomes loss.
                edges.push(Edge {
                    sender: f,
                    receiver: None,
                    received: 0.0,
                    loss_at_sender: s_from.max(0.0),
                    extra: Some((to, s_to.max(0.0))),
                });
            }
        }

        // Local injections: MW and tCO2/h mass flow.
        let mut inflow = vec![0.0; n];
        let mut mass = vec![0.0; n];
        inflow[sub] += sol.p_import[t].max(0.0);
        mass[sub] += sol.p_import[t].max(0.0) * case.emission_rates.substation;
        for (g, unit) in case.sync_dg.iter().enumerate() {
            let j = bus_index[&unit.bus];
            let p = sol.p_sync[g][t].max(0.0);
            inflow[j] += p;
            mass[j] += p * unit.emission_rate;
        }
        for (g, unit) in case.inverter_dg.iter().enumerate() {
            let j = bus_index[&unit.bus];
            inflow[j] += sol.p_inverter[g][t].max(0.0);
            // Zero-carbon injection adds power, no mass.
        }
        // Intensity of each store before this hour's movements; used for
        // both the injected mass and the account update so the two agree.
        let store_int_pre: Vec<f64> = stores
            .iter()
            .map(|st| if st.energy > FLOW_EPS { st.mass / st.energy } else { 0.0 })
            .collect();
        for (s, unit) in case.storage.iter().enumerate() {
            let j = bus_index[&unit.bus];
            let p = sol.p_discharge[s][t];
            if p > FLOW_EPS {
                inflow[j] += p;
                mass[j] += p * store_int_pre[s] / unit.eta_dis;
            }
        }

        // Topological sweep over flow-directed edges (a tree orientation is
        // a DAG): a bus is ready once all its receiving edges are resolved.
        let mut pending = vec![0usize; n];
        for e in &edges {
            if let Some(r) = e.receiver {
                pending[r] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&j| pending[j] == 0).collect();
        let mut e_bus = vec![0.0; n];
        let mut resolved = 0;
        while let Some(j) = ready.pop() {
            resolved += 1;
            e_bus[j] = if inflow[j] > FLOW_EPS { mass[j] / inflow[j] } else { 0.0 };
            for e in &edges {
                if e.sender == j {
                    if let Some(r) = e.receiver {
                        inflow[r] += e.received;
                        mass[r] += e.received * e_bus[j];
                        pending[r] -= 1;
                        if pending[r] == 0 {
                            ready.push(r);
                        }
                    }
                }
            }
        }
        debug_assert_eq!(resolved, n, "flow orientation of a tree must be acyclic");

        // Book losses at the sender's now-known intensity.
        for e in &edges {
            audit.to_losses += dt * e.loss_at_sender * e_bus[e.sender];
            if let Some((j2, fed)) = e.extra {
                audit.to_losses += dt * fed * e_bus[j2];
            }
        }

        // Withdrawals at nodal intensity: fixed demand plus EV charging.
        let mut load = vec![0.0; n];
        for j in 0..n {
            load[j] += scenario.demand_p[j][t];
        }
        for (a, unit) in case.ev.iter().enumerate() {
            load[bus_index[&unit.bus]] += sol.p_ev[a][t].max(0.0);
        }
        for j in 0..n {
            intensity[j][t] = e_bus[j];
            audit.to_loads += dt * load[j] * e_bus[j];
            if load[j] > FLOW_EPS && inflow[j] <= FLOW_EPS {
                warnings.push(format!(
                    "bus {} hour {t}: {:.3} MW of demand with no traced inflow",
                    case.buses[j].id, load[j]
                ));
            }
        }

        // Update storage accounts after the hour's intensities are fixed.
        // Releases use the pre-hour intensity so the mass leaving the store
        // is exactly the mass injected at the bus above.
        for (s, unit) in case.storage.iter().enumerate() {
            let j = bus_index[&unit.bus];
            let cha = sol.p_charge[s][t];
            if cha > FLOW_EPS {
                let absorbed = dt * cha * e_bus[j];
                stores[s].mass += absorbed;
                stores[s].energy += dt * cha * unit.eta_cha;
                audit.store_absorbed += absorbed;
            }
            let dis = sol.p_discharge[s][t];
            if dis > FLOW_EPS {
                let drawn = dt * dis / unit.eta_dis;
                let released = drawn * store_int_pre[s];
                stores[s].mass -= released;
                stores[s].energy = (stores[s].energy - drawn).max(0.0);
                audit.store_released += released;
            }
        }

        // Generation-side emission for the audit.
        audit.generation += dt * sol.p_import[t].max(0.0) * case.emission_rates.substation;
        for (g, unit) in case.sync_dg.iter().enumerate() {
            audit.generation += dt * sol.p_sync[g][t].max(0.0) * unit.emission_rate;
        }
    }

    Ok(AverageSignals { label: scenario.label.clone(), intensity, audit, warnings })
}

// --- merit-order marginal baseline ------------------------------------------

/// Network-free merit-order signal: sort the hour's available units by
/// price, serve total demand cumulatively, and report the marginal unit's
/// emission rate for every bus. A demand total landing exactly on a unit
/// boundary takes the next unit (the one an extra MWh would run).
pub fn compute_rodm(
    case: &NetworkCase,
    scenario: &ScenarioSet,
) -> Result<Vec<Vec<f64>>, BaselineError> {
    let n = case.buses.len();
    let t_all = case.horizon();
    let mut out = vec![vec![0.0; t_all]; n];
    for t in 0..t_all {
        // (price, rate, capacity); stable sort keeps the push order on ties.
        let mut stack: Vec<(f64, f64, f64)> = Vec::new();
        for (g, unit) in case.inverter_dg.iter().enumerate() {
            stack.push((unit.price_p, 0.0, unit.p_max * scenario.pv_availability[g][t]));
        }
        for unit in &case.sync_dg {
            stack.push((unit.price_p, unit.emission_rate, unit.p_max));
        }
        stack.push((
            case.prices.substation_p.at(t),
            case.emission_rates.substation,
            case.substation.p_max,
        ));
        stack.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite prices"));

        let demand = scenario.total_demand(t);
        let capacity: f64 = stack.iter().map(|u| u.2).sum();
        let mut cum = 0.0;
        let mut rate = None;
        for &(_, r, cap) in &stack {
            if cap <= FLOW_EPS {
                continue;
            }
            cum += cap;
            if cum > demand + FLOW_EPS {
                rate = Some(r);
                break;
            }
        }
        let rate = rate.ok_or(BaselineError::Shortfall { hour: t, demand, capacity })?;
        for j in 0..n {
            out[j][t] = rate;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
