//! Multi-period dispatch as a second-order cone program.
//!
//! Variables (all per-unit on the case MVA base): substation import p/q,
//! inverter DG p/q, synchronous DG p/q, storage charge/discharge/state,
//! EV charging, squared bus voltages, and per-branch sending-end flows
//! p/q plus squared current l. Equalities carry nodal balance (demand on
//! the right-hand side), the branch voltage drop, the substation voltage
//! pin, and the storage state recursion. Inequalities are grouped by
//! hour so projection kinks can be attributed to hours. Each branch-hour
//! contributes one rotated flow cone ||(2p, 2q, l - v_from)|| <= l + v_from.
//!
//! The nodal balance rows put demand in `b`, so sensitivities of any
//! scalar output with respect to `b` are exactly its sensitivities to
//! nodal demand.

use crate::grid::NetworkCase;
use crate::scenario::ScenarioSet;
use conic::{Cone, ConeSet, ConicProblem, CscMat, SolutionBundle, SolveError, SolverSettings};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("scenario {label:?} does not match the case: {msg}")]
    ScenarioShape { label: String, msg: String },
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

// --- variable and row bookkeeping ----------------------------------------

/// Column and row layout of the assembled program.
///
/// Columns are family-major, hour-minor. Equality rows come first and
/// their balance-row positions are recorded, so `b[balance_p_rows[j][t]]`
/// is the active demand of bus j at hour t (per-unit).
#[derive(Debug, Clone)]
pub struct VariableIndex {
    pub periods: usize,
    pub n_bus: usize,
    pub n_branch: usize,
    pub n_inv: usize,
    pub n_sync: usize,
    pub n_storage: usize,
    pub n_ev: usize,
    pub n_cols: usize,
    pub n_eq: usize,
    pub n_rows: usize,
    off_qs: usize,
    off_pinv: usize,
    off_qinv: usize,
    off_psm: usize,
    off_qsm: usize,
    off_pcha: usize,
    off_pdis: usize,
    off_e: usize,
    off_pev: usize,
    off_v: usize,
    off_pbr: usize,
    off_qbr: usize,
    off_lbr: usize,
    pub balance_p_rows: Vec<Vec<usize>>,
    pub balance_q_rows: Vec<Vec<usize>>,
    /// Closed-branch endpoints as dense bus positions (from, to).
    pub branch_ends: Vec<(usize, usize)>,
}

impl VariableIndex {
    fn new(case: &NetworkCase) -> Self {
        let t = case.horizon();
        let n_bus = case.buses.len();
        let index = case.bus_index();
        let branch_ends: Vec<(usize, usize)> =
            case.closed_branches().iter().map(|br| (index[&br.from], index[&br.to])).collect();
        let n_branch = branch_ends.len();
        let n_inv = case.inverter_dg.len();
        let n_sync = case.sync_dg.len();
        let n_storage = case.storage.len();
        let n_ev = case.ev.len();
        let mut at = t; // p_s occupies [0, t)
        let off_qs = at;
        at += t;
        let off_pinv = at;
        at += n_inv * t;
        let off_qinv = at;
        at += n_inv * t;
        let off_psm = at;
        at += n_sync * t;
        let off_qsm = at;
        at += n_sync * t;
        let off_pcha = at;
        at += n_storage * t;
        let off_pdis = at;
        at += n_storage * t;
        let off_e = at;
        at += n_storage * t;
        let off_pev = at;
        at += n_ev * t;
        let off_v = at;
        at += n_bus * t;
        let off_pbr = at;
        at += n_branch * t;
        let off_qbr = at;
        at += n_branch * t;
        let off_lbr = at;
        at += n_branch * t;
        VariableIndex {
            periods: t,
            n_bus,
            n_branch,
            n_inv,
            n_sync,
            n_storage,
            n_ev,
            n_cols: at,
            n_eq: 0,
            n_rows: 0,
            off_qs,
            off_pinv,
            off_qinv,
            off_psm,
            off_qsm,
            off_pcha,
            off_pdis,
            off_e,
            off_pev,
            off_v,
            off_pbr,
            off_qbr,
            off_lbr,
            balance_p_rows: vec![vec![0; t]; n_bus],
            balance_q_rows: vec![vec![0; t]; n_bus],
            branch_ends,
        }
    }

    pub fn col_p_s(&self, t: usize) -> usize {
        t
    }
    pub fn col_q_s(&self, t: usize) -> usize {
        self.off_qs + t
    }
    pub fn col_p_inv(&self, g: usize, t: usize) -> usize {
        self.off_pinv + g * self.periods + t
    }
    pub fn col_q_inv(&self, g: usize, t: usize) -> usize {
        self.off_qinv + g * self.periods + t
    }
    pub fn col_p_sync(&self, g: usize, t: usize) -> usize {
        self.off_psm + g * self.periods + t
    }
    pub fn col_q_sync(&self, g: usize, t: usize) -> usize {
        self.off_qsm + g * self.periods + t
    }
    pub fn col_p_cha(&self, s: usize, t: usize) -> usize {
        self.off_pcha + s * self.periods + t
    }
    pub fn col_p_dis(&self, s: usize, t: usize) -> usize {
        self.off_pdis + s * self.periods + t
    }
    pub fn col_soc(&self, s: usize, t: usize) -> usize {
        self.off_e + s * self.periods + t
    }
    pub fn col_p_ev(&self, a: usize, t: usize) -> usize {
        self.off_pev + a * self.periods + t
    }
    pub fn col_v(&self, bus: usize, t: usize) -> usize {
        self.off_v + bus * self.periods + t
    }
    pub fn col_p_br(&self, k: usize, t: usize) -> usize {
        self.off_pbr + k * self.periods + t
    }
    pub fn col_q_br(&self, k: usize, t: usize) -> usize {
        self.off_qbr + k * self.periods + t
    }
    pub fn col_l_br(&self, k: usize, t: usize) -> usize {
        self.off_lbr + k * self.periods + t
    }

    /// Human-readable column names, for program dumps.
    pub fn col_names(&self, case: &NetworkCase) -> Vec<String> {
        let mut names = vec![String::new(); self.n_cols];
        let t_all = self.periods;
        for t in 0..t_all {
            names[self.col_p_s(t)] = format!("p_s[{t}]");
            names[self.col_q_s(t)] = format!("q_s[{t}]");
        }
        for (g, unit) in case.inverter_dg.iter().enumerate() {
            for t in 0..t_all {
                names[self.col_p_inv(g, t)] = format!("p_inv[{}][{t}]", unit.id);
                names[self.col_q_inv(g, t)] = format!("q_inv[{}][{t}]", unit.id);
            }
        }
        for (g, unit) in case.sync_dg.iter().enumerate() {
            for t in 0..t_all {
                names[self.col_p_sync(g, t)] = format!("p_sync[{}][{t}]", unit.id);
                names[self.col_q_sync(g, t)] = format!("q_sync[{}][{t}]", unit.id);
            }
        }
        for (s, unit) in case.storage.iter().enumerate() {
            for t in 0..t_all {
                names[self.col_p_cha(s, t)] = format!("p_cha[{}][{t}]", unit.id);
                names[self.col_p_dis(s, t)] = format!("p_dis[{}][{t}]", unit.id);
                names[self.col_soc(s, t)] = format!("e[{}][{t}]", unit.id);
            }
        }
        for (a, unit) in case.ev.iter().enumerate() {
            for t in 0..t_all {
                names[self.col_p_ev(a, t)] = format!("p_ev[{}][{t}]", unit.id);
            }
        }
        for (j, bus) in case.buses.iter().enumerate() {
            for t in 0..t_all {
                names[self.col_v(j, t)] = format!("v[{}][{t}]", bus.id);
            }
        }
        for (k, br) in case.closed_branches().iter().enumerate() {
            for t in 0..t_all {
                names[self.col_p_br(k, t)] = format!("p_br[{}-{}][{t}]", br.from, br.to);
                names[self.col_q_br(k, t)] = format!("q_br[{}-{}][{t}]", br.from, br.to);
                names[self.col_l_br(k, t)] = format!("l_br[{}-{}][{t}]", br.from, br.to);
            }
        }
        names
    }

    /// Map flagged cone-Jacobian block indices to the hours they touch.
    ///
    /// Blocks are laid out [free, zero, nonneg-per-hour x T, flow cones
    /// (hour-major), tau]; a flagged tau block taints every hour.
    pub fn kink_hours(&self, kinks: &[usize]) -> Vec<bool> {
        let t_all = self.periods;
        let mut flags = vec![false; t_all];
        for &bi in kinks {
            if bi <= 1 {
                continue; // free block and equality block cannot kink
            }
            let p = bi - 1;
            if p <= t_all {
                flags[p - 1] = true;
            } else {
                let s = p - 1 - t_all;
                if s < t_all * self.n_branch {
                    flags[s / self.n_branch] = true;
                } else {
                    for f in flags.iter_mut() {
                        *f = true;
                    }
                }
            }
        }
        flags
    }
}

// --- program assembly -----------------------------------------------------

struct Row {
    cols: Vec<(usize, f64)>,
    rhs: f64,
}

struct Builder {
    eq: Vec<Row>,
    ineq: Vec<Vec<Row>>,
    soc: Vec<[Row; 4]>,
}

impl Builder {
    fn eq_row(&mut self, cols: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.eq.push(Row { cols, rhs });
        self.eq.len() - 1
    }

    /// a . x <= rhs, attributed to `hour`.
    fn le_row(&mut self, hour: usize, cols: Vec<(usize, f64)>, rhs: f64) {
        self.ineq[hour].push(Row { cols, rhs });
    }

    /// lo <= x[col] <= hi as a pair of one-sided rows.
    fn box_rows(&mut self, hour: usize, col: usize, lo: f64, hi: f64) {
        self.le_row(hour, vec![(col, 1.0)], hi);
        self.le_row(hour, vec![(col, -1.0)], -lo);
    }
}

#[derive(Debug, Clone)]
pub struct DispatchProgram {
    pub problem: ConicProblem,
    pub index: VariableIndex,
}

pub fn build_program(
    case: &NetworkCase,
    scenario: &ScenarioSet,
) -> Result<DispatchProgram, BuildError> {
    let t_all = case.horizon();
    let shape_err = |msg: &str| BuildError::ScenarioShape {
        label: scenario.label.clone(),
        msg: msg.to_string(),
    };
    if scenario.horizon != t_all {
        return Err(shape_err("horizon differs from base.periods"));
    }
    if scenario.demand_p.len() != case.buses.len() || scenario.demand_q.len() != case.buses.len() {
        return Err(shape_err("demand rows do not cover the bus list"));
    }
    if scenario.pv_availability.len() != case.inverter_dg.len() {
        return Err(shape_err("availability rows do not cover the inverter list"));
    }

    let mut index = VariableIndex::new(case);
    let base = case.base.mva;
    let dt = case.base.period_hours;
    let pu = 1.0 / base;
    let closed = case.closed_branches();
    let sub = case.substation_index();

    let mut bld = Builder {
        eq: Vec::new(),
        ineq: (0..t_all).map(|_| Vec::new()).collect(),
        soc: Vec::new(),
    };

    // Nodal balance. Generation enters positive, demand-side variables
    // negative, and a branch delivers (flow - loss) at its `to` end.
    let bus_index = case.bus_index();
    let inv_bus: Vec<usize> = case.inverter_dg.iter().map(|u| bus_index[&u.bus]).collect();
    let sync_bus: Vec<usize> = case.sync_dg.iter().map(|u| bus_index[&u.bus]).collect();
    let storage_bus: Vec<usize> = case.storage.iter().map(|u| bus_index[&u.bus]).collect();
    let ev_bus: Vec<usize> = case.ev.iter().map(|u| bus_index[&u.bus]).collect();
    for j in 0..index.n_bus {
        for t in 0..t_all {
            let mut p_cols: Vec<(usize, f64)> = Vec::new();
            let mut q_cols: Vec<(usize, f64)> = Vec::new();
            if j == sub {
                p_cols.push((index.col_p_s(t), 1.0));
                q_cols.push((index.col_q_s(t), 1.0));
            }
            for g in 0..index.n_inv {
                if inv_bus[g] == j {
                    p_cols.push((index.col_p_inv(g, t), 1.0));
                    q_cols.push((index.col_q_inv(g, t), 1.0));
                }
            }
            for g in 0..index.n_sync {
                if sync_bus[g] == j {
                    p_cols.push((index.col_p_sync(g, t), 1.0));
                    q_cols.push((index.col_q_sync(g, t), 1.0));
                }
            }
            for s in 0..index.n_storage {
                if storage_bus[s] == j {
                    p_cols.push((index.col_p_dis(s, t), 1.0));
                    p_cols.push((index.col_p_cha(s, t), -1.0));
                }
            }
            for a in 0..index.n_ev {
                if ev_bus[a] == j {
                    p_cols.push((index.col_p_ev(a, t), -1.0));
                }
            }
            for (k, br) in closed.iter().enumerate() {
                let (f, to) = index.branch_ends[k];
                if to == j {
                    p_cols.push((index.col_p_br(k, t), 1.0));
                    p_cols.push((index.col_l_br(k, t), -br.r));
                    q_cols.push((index.col_q_br(k, t), 1.0));
                    q_cols.push((index.col_l_br(k, t), -br.x));
                }
                if f == j {
                    p_cols.push((index.col_p_br(k, t), -1.0));
                    q_cols.push((index.col_q_br(k, t), -1.0));
                }
            }
            let rp = bld.eq_row(p_cols, scenario.demand_p[j][t] * pu);
            index.balance_p_rows[j][t] = rp;
            let rq = bld.eq_row(q_cols, scenario.demand_q[j][t] * pu);
            index.balance_q_rows[j][t] = rq;
        }
    }

    // Branch voltage drop: v_to = v_from - 2(r p + x q) + (r^2 + x^2) l.
    for (k, br) in closed.iter().enumerate() {
        let (f, to) = index.branch_ends[k];
        let z2 = br.r * br.r + br.x * br.x;
        for t in 0..t_all {
            bld.eq_row(
                vec![
                    (index.col_v(to, t), 1.0),
                    (index.col_v(f, t), -1.0),
                    (index.col_p_br(k, t), 2.0 * br.r),
                    (index.col_q_br(k, t), 2.0 * br.x),
                    (index.col_l_br(k, t), -z2),
                ],
                0.0,
            );
        }
    }

    // Substation voltage reference.
    for t in 0..t_all {
        bld.eq_row(vec![(index.col_v(sub, t), 1.0)], 1.0);
    }

    // Storage state recursion (e in per-unit hours).
    for (s, unit) in case.storage.iter().enumerate() {
        for t in 0..t_all {
            let mut cols = vec![
                (index.col_soc(s, t), 1.0),
                (index.col_p_cha(s, t), -unit.eta_cha * dt),
                (index.col_p_dis(s, t), dt / unit.eta_dis),
            ];
            let rhs = if t == 0 {
                unit.e_init * pu
            } else {
                cols.push((index.col_soc(s, t - 1), -1.0));
                0.0
            };
            bld.eq_row(cols, rhs);
        }
    }

    // Hour-grouped inequalities.
    for t in 0..t_all {
        for (j, bus) in case.buses.iter().enumerate() {
            if j != sub {
                bld.box_rows(t, index.col_v(j, t), bus.v_min * bus.v_min, bus.v_max * bus.v_max);
            }
        }
        for (k, br) in closed.iter().enumerate() {
            bld.box_rows(t, index.col_l_br(k, t), br.i_min * br.i_min, br.i_max * br.i_max);
        }
        bld.box_rows(t, index.col_p_s(t), case.substation.p_min * pu, case.substation.p_max * pu);
        bld.box_rows(t, index.col_q_s(t), case.substation.q_min * pu, case.substation.q_max * pu);
        for (g, unit) in case.inverter_dg.iter().enumerate() {
            let avail = scenario.pv_availability[g][t];
            bld.box_rows(t, index.col_p_inv(g, t), unit.p_min * avail * pu, unit.p_max * avail * pu);
            // Power-factor band |q| <= p sqrt(1 - k^2) / k.
            let alpha = (1.0 - unit.kappa_min * unit.kappa_min).sqrt() / unit.kappa_min;
            bld.le_row(
                t,
                vec![(index.col_q_inv(g, t), 1.0), (index.col_p_inv(g, t), -alpha)],
                0.0,
            );
            bld.le_row(
                t,
                vec![(index.col_q_inv(g, t), -1.0), (index.col_p_inv(g, t), -alpha)],
                0.0,
            );
        }
        for (g, unit) in case.sync_dg.iter().enumerate() {
            bld.box_rows(t, index.col_p_sync(g, t), unit.p_min * pu, unit.p_max * pu);
            bld.box_rows(t, index.col_q_sync(g, t), unit.q_min * pu, unit.q_max * pu);
            // Hourly ramp, anchored at the pre-horizon output for t = 0.
            let up = unit.ramp_up * dt * pu;
            let down = unit.ramp_down * dt * pu;
            if t == 0 {
                let p0 = unit.initial_output() * pu;
                bld.le_row(t, vec![(index.col_p_sync(g, 0), 1.0)], up + p0);
                bld.le_row(t, vec![(index.col_p_sync(g, 0), -1.0)], -(down + p0));
            } else {
                bld.le_row(
                    t,
                    vec![(index.col_p_sync(g, t), 1.0), (index.col_p_sync(g, t - 1), -1.0)],
                    up,
                );
                bld.le_row(
                    t,
                    vec![(index.col_p_sync(g, t), -1.0), (index.col_p_sync(g, t - 1), 1.0)],
                    -down,
                );
            }
        }
        for (s, unit) in case.storage.iter().enumerate() {
            bld.box_rows(t, index.col_p_cha(s, t), 0.0, unit.p_cha_max * pu);
            bld.box_rows(t, index.col_p_dis(s, t), 0.0, unit.p_dis_max * pu);
            bld.box_rows(t, index.col_soc(s, t), unit.e_min * pu, unit.e_max * pu);
            if t == t_all - 1 && unit.terminal_at_least_init {
                bld.le_row(t, vec![(index.col_soc(s, t), -1.0)], -unit.e_init * pu);
            }
        }
        for (a, unit) in case.ev.iter().enumerate() {
            bld.box_rows(t, index.col_p_ev(a, t), unit.p_lb.at(t) * pu, unit.p_ub.at(t) * pu);
            // Cumulative energy window through hour t.
            let up: Vec<(usize, f64)> = (0..=t).map(|tau| (index.col_p_ev(a, tau), dt)).collect();
            let lo: Vec<(usize, f64)> = (0..=t).map(|tau| (index.col_p_ev(a, tau), -dt)).collect();
            bld.le_row(t, up, unit.e_ub[t] * pu);
            bld.le_row(t, lo, -unit.e_lb[t] * pu);
        }
    }

    // Flow cones, hour-major to match kink attribution.
    for t in 0..t_all {
        for (k, _) in closed.iter().enumerate() {
            let (f, _) = index.branch_ends[k];
            let l = index.col_l_br(k, t);
            let v = index.col_v(f, t);
            let p = index.col_p_br(k, t);
            let q = index.col_q_br(k, t);
            bld.soc.push([
                Row { cols: vec![(l, -1.0), (v, -1.0)], rhs: 0.0 },
                Row { cols: vec![(p, -2.0)], rhs: 0.0 },
                Row { cols: vec![(q, -2.0)], rhs: 0.0 },
                Row { cols: vec![(l, -1.0), (v, 1.0)], rhs: 0.0 },
            ]);
        }
    }

    // Objective: energy prices applied to per-unit powers over each period.
    let mut c = vec![0.0; index.n_cols];
    let money = base * dt;
    for t in 0..t_all {
        c[index.col_p_s(t)] = case.prices.substation_p.at(t) * money;
        c[index.col_q_s(t)] = case.prices.substation_q_at(t) * money;
        for (g, unit) in case.inverter_dg.iter().enumerate() {
            c[index.col_p_inv(g, t)] = unit.price_p * money;
            c[index.col_q_inv(g, t)] = unit.price_q.unwrap_or(0.1 * unit.price_p) * money;
        }
        for (g, unit) in case.sync_dg.iter().enumerate() {
            c[index.col_p_sync(g, t)] = unit.price_p * money;
            c[index.col_q_sync(g, t)] = unit.price_q.unwrap_or(0.1 * unit.price_p) * money;
        }
        for (s, unit) in case.storage.iter().enumerate() {
            c[index.col_p_cha(s, t)] = unit.price * money;
            c[index.col_p_dis(s, t)] = unit.price * money;
        }
    }

    // Stack rows: equalities, then hour blocks, then cones.
    let n_eq = bld.eq.len();
    let mut cones = vec![Cone::Zero(n_eq)];
    for rows in &bld.ineq {
        cones.push(Cone::NonNeg(rows.len()));
    }
    for _ in 0..bld.soc.len() {
        cones.push(Cone::Soc(4));
    }
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    let mut push_row = |row: &Row, at: usize, triplets: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
        for &(col, val) in &row.cols {
            triplets.push((at, col, val));
        }
        b.push(row.rhs);
    };
    let mut at = 0;
    for row in &bld.eq {
        push_row(row, at, &mut triplets, &mut b);
        at += 1;
    }
    for rows in &bld.ineq {
        for row in rows {
            push_row(row, at, &mut triplets, &mut b);
            at += 1;
        }
    }
    for block in &bld.soc {
        for row in block {
            push_row(row, at, &mut triplets, &mut b);
            at += 1;
        }
    }
    index.n_eq = n_eq;
    index.n_rows = at;
    let a = CscMat::from_triplets(at, index.n_cols, &triplets);
    let problem = ConicProblem { a, b, c, cones: ConeSet::new(cones) };
    Ok(DispatchProgram { problem, index })
}

// --- solving and extraction ------------------------------------------------

/// Dispatch result in engineering units (MW, MVar, MWh; voltages and
/// currents stay squared per-unit).
#[derive(Debug, Clone, serde::Serialize)]
pub struct DispatchSolution {
    pub label: String,
    pub objective: f64,
    pub p_import: Vec<f64>,
    pub q_import: Vec<f64>,
    pub p_inverter: Vec<Vec<f64>>,
    pub q_inverter: Vec<Vec<f64>>,
    pub p_sync: Vec<Vec<f64>>,
    pub q_sync: Vec<Vec<f64>>,
    pub p_charge: Vec<Vec<f64>>,
    pub p_discharge: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub p_ev: Vec<Vec<f64>>,
    pub v_squared: Vec<Vec<f64>>,
    pub branch_p: Vec<Vec<f64>>,
    pub branch_q: Vec<Vec<f64>>,
    pub branch_l: Vec<Vec<f64>>,
    pub iters: usize,
}

pub fn extract_solution(
    case: &NetworkCase,
    index: &VariableIndex,
    label: &str,
    bundle: &SolutionBundle,
) -> DispatchSolution {
    let base = case.base.mva;
    let t_all = index.periods;
    let x = &bundle.x;
    let grid_p: Vec<f64> = (0..t_all).map(|t| x[index.col_p_s(t)] * base).collect();
    let grid_q: Vec<f64> = (0..t_all).map(|t| x[index.col_q_s(t)] * base).collect();
    let matrix = |count: usize, col: &dyn Fn(usize, usize) -> usize, scale: f64| -> Vec<Vec<f64>> {
        (0..count)
            .map(|k| (0..t_all).map(|t| x[col(k, t)] * scale).collect())
            .collect()
    };
    DispatchSolution {
        label: label.to_string(),
        objective: bundle.obj_primal,
        p_import: grid_p,
        q_import: grid_q,
        p_inverter: matrix(index.n_inv, &|g, t| index.col_p_inv(g, t), base),
        q_inverter: matrix(index.n_inv, &|g, t| index.col_q_inv(g, t), base),
        p_sync: matrix(index.n_sync, &|g, t| index.col_p_sync(g, t), base),
        q_sync: matrix(index.n_sync, &|g, t| index.col_q_sync(g, t), base),
        p_charge: matrix(index.n_storage, &|s, t| index.col_p_cha(s, t), base),
        p_discharge: matrix(index.n_storage, &|s, t| index.col_p_dis(s, t), base),
        soc: matrix(index.n_storage, &|s, t| index.col_soc(s, t), base),
        p_ev: matrix(index.n_ev, &|a, t| index.col_p_ev(a, t), base),
        v_squared: matrix(index.n_bus, &|j, t| index.col_v(j, t), 1.0),
        branch_p: matrix(index.n_branch, &|k, t| index.col_p_br(k, t), base),
        branch_q: matrix(index.n_branch, &|k, t| index.col_q_br(k, t), base),
        branch_l: matrix(index.n_branch, &|k, t| index.col_l_br(k, t), 1.0),
        iters: bundle.iters,
    }
}

pub fn solve_dispatch(
    case: &NetworkCase,
    scenario: &ScenarioSet,
    settings: &SolverSettings,
    warm: Option<(&[f64], &[f64], &[f64])>,
) -> Result<(DispatchSolution, SolutionBundle, DispatchProgram), DispatchError> {
    let program = build_program(case, scenario)?;
    let bundle = conic::solve_hsde(&program.problem, settings, warm)?;
    let solution = extract_solution(case, &program.index, &scenario.label, &bundle);
    Ok((solution, bundle, program))
}

/// Solver defaults tuned for dispatch programs: the embedding residual
/// stays at the generic default while KKT acceptance is relaxed to what a
/// first-order method reaches on networks of this size.
pub fn dispatch_settings() -> SolverSettings {
    SolverSettings { kkt_tol: 1e-6, ..SolverSettings::default() }
}

/// Horizon emissions of a dispatch, tCO2: substation imports at the grid
/// intensity plus synchronous DG at each unit's rate. Inverter DG and the
/// demand side carry no direct emissions.
pub fn total_emission(case: &NetworkCase, sol: &DispatchSolution) -> f64 {
    let dt = case.base.period_hours;
    let mut e = 0.0;
    for t in 0..case.horizon() {
        e += dt * case.emission_rates.substation * sol.p_import[t];
        for (g, unit) in case.sync_dg.iter().enumerate() {
            e += dt * unit.emission_rate * sol.p_sync[g][t];
        }
    }
    e
}

/// Assembled standard-form data as JSON, for external inspection.
pub fn dump_program(case: &NetworkCase, program: &DispatchProgram) -> serde_json::Value {
    let cones: Vec<serde_json::Value> = program
        .problem
        .cones
        .cones
        .iter()
        .map(|c| match c {
            Cone::Zero(d) => serde_json::json!({"zero": d}),
            Cone::NonNeg(d) => serde_json::json!({"nonneg": d}),
            Cone::Soc(d) => serde_json::json!({"soc": d}),
        })
        .collect();
    let triplets: Vec<(usize, usize, f64)> = program.problem.a.to_triplets();
    serde_json::json!({
        "rows": program.index.n_rows,
        "cols": program.index.n_cols,
        "cones": cones,
        "a": triplets,
        "b": program.problem.b,
        "c": program.problem.c,
        "columns": program.index.col_names(case),
    })
}

// ---------------------------------------------------------------------------
