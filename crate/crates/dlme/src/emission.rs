//! Marginal locational emission signals.
//!
//! The horizon emission total is a linear functional gamma'x of the
//! dispatch solution. Differentiating the solver's solution map at the
//! optimum and pulling gamma back through it yields d(emissions)/d(b) in
//! one adjoint solve; the nodal balance rows of `b` hold demand, so those
//! entries are exactly the marginal emission of demand at each bus and
//! hour. A finite-difference oracle (two perturbed re-solves per probe)
//! is kept alongside for audits.

use crate::grid::NetworkCase;
use crate::scenario::ScenarioSet;
use crate::scheduler::{
    build_program, extract_solution, DispatchError, DispatchProgram, DispatchSolution,
};
use conic::{solve_hsde, DerivativeContext, DiffError, DiffSettings, SolutionBundle, SolverSettings};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmissionError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("cannot differentiate the dispatch solution: {0}")]
    Diff(#[from] DiffError),
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error("both finite-difference probes failed at bus position {bus}, hour {hour}")]
    ProbeFailed { bus: usize, hour: usize },
}

/// Marginal emission intensities, tCO2/MWh of additional demand.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EmissionSignals {
    pub label: String,
    /// d(total emission)/d(active demand), per (bus position, hour).
    pub active: Vec<Vec<f64>>,
    /// d(total emission)/d(reactive demand), per (bus position, hour).
    pub reactive: Vec<Vec<f64>>,
    /// Hours where the optimum sits within kink tolerance of a projection
    /// boundary; entries there are one-sided derivatives.
    pub kinked_hours: Vec<bool>,
    /// True when the adjoint system was solved to reduced accuracy.
    pub approximate: bool,
}

/// One full marginal-signal run, keeping the pieces later stages reuse.
pub struct DlmeRun {
    pub signals: EmissionSignals,
    pub dispatch: DispatchSolution,
    pub bundle: SolutionBundle,
    pub program: DispatchProgram,
}

/// Gradient of horizon emissions with respect to the program columns:
/// nonzero only at substation and synchronous-DG active power.
pub fn emission_gradient(case: &NetworkCase, program: &DispatchProgram) -> Vec<f64> {
    let index = &program.index;
    let mut g = vec![0.0; index.n_cols];
    let w = case.base.period_hours * case.base.mva;
    for t in 0..index.periods {
        g[index.col_p_s(t)] = w * case.emission_rates.substation;
        for (k, unit) in case.sync_dg.iter().enumerate() {
            g[index.col_p_sync(k, t)] = w * unit.emission_rate;
        }
    }
    g
}

/// Differentiate emissions through an already-solved program.
pub fn signals_from_bundle(
    case: &NetworkCase,
    program: &DispatchProgram,
    bundle: &SolutionBundle,
    label: &str,
    kink_tol: f64,
) -> Result<EmissionSignals, EmissionError> {
    let ctx = DerivativeContext::new(
        &program.problem,
        &bundle.z,
        DiffSettings { kink_tol, ..DiffSettings::default() },
    )?;
    let gamma = emission_gradient(case, program);
    let zeros = vec![0.0; program.index.n_rows];
    let adj = ctx.adjoint(&gamma, &zeros, &zeros);
    let index = &program.index;
    // b is per-unit demand over one period; signals are per MWh.
    let scale = 1.0 / (case.base.mva * case.base.period_hours);
    let t_all = index.periods;
    let mut active = vec![vec![0.0; t_all]; index.n_bus];
    let mut reactive = vec![vec![0.0; t_all]; index.n_bus];
    for j in 0..index.n_bus {
        for t in 0..t_all {
            active[j][t] = adj.gb[index.balance_p_rows[j][t]] * scale;
            reactive[j][t] = adj.gb[index.balance_q_rows[j][t]] * scale;
        }
    }
    Ok(EmissionSignals {
        label: label.to_string(),
        active,
        reactive,
        kinked_hours: index.kink_hours(ctx.kinks()),
        approximate: adj.approximate,
    })
}

/// Solve the dispatch and differentiate its emissions in one go.
pub fn compute_dlme(
    case: &NetworkCase,
    scenario: &ScenarioSet,
    settings: &SolverSettings,
) -> Result<DlmeRun, EmissionError> {
    let program = build_program(case, scenario).map_err(DispatchError::from)?;
    let bundle =
        solve_hsde(&program.problem, settings, None).map_err(DispatchError::from)?;
    let signals =
        signals_from_bundle(case, &program, &bundle, &scenario.label, settings.kink_tol)?;
    let dispatch = extract_solution(case, &program.index, &scenario.label, &bundle);
    Ok(DlmeRun { signals, dispatch, bundle, program })
}

// --- finite-difference oracle ----------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct FdSample {
    /// Bus position in the case bus list.
    pub bus: usize,
    pub hour: usize,
    pub reactive: bool,
    /// Central (or one-sided) difference of total emissions, tCO2/MWh.
    pub value: f64,
    /// True when one probe failed and the other side was used alone.
    pub one_sided: bool,
}

/// Re-solve with the demand at one (bus, hour) nudged by +-delta (per-unit
/// power) and difference the emission totals. Independent of the adjoint
/// path by construction: it only uses the solver.
pub fn fd_oracle(
    case: &NetworkCase,
    scenario: &ScenarioSet,
    bus: usize,
    hour: usize,
    reactive: bool,
    delta_pu: f64,
    settings: &SolverSettings,
    warm: Option<&SolutionBundle>,
) -> Result<FdSample, EmissionError> {
    if delta_pu <= 0.0 {
        return Err(EmissionError::BadStep(delta_pu));
    }
    let delta_mw = delta_pu * case.base.mva;
    let probe = |sign: f64| -> Result<f64, EmissionError> {
        let mut scn = scenario.clone();
        if reactive {
            scn.demand_q[bus][hour] += sign * delta_mw;
        } else {
            scn.demand_p[bus][hour] += sign * delta_mw;
        }
        let program = build_program(case, &scn).map_err(DispatchError::from)?;
        let w = warm.map(|b| (b.x.as_slice(), b.y.as_slice(), b.s.as_slice()));
        let bundle = solve_hsde(&program.problem, settings, w).map_err(DispatchError::from)?;
        let sol = extract_solution(case, &program.index, &scn.label, &bundle);
        Ok(crate::scheduler::total_emission(case, &sol))
    };
    let dt = case.base.period_hours;
    match (probe(1.0), probe(-1.0)) {
        (Ok(up), Ok(down)) => Ok(FdSample {
            bus,
            hour,
            reactive,
            value: (up - down) / (2.0 * delta_mw * dt),
            one_sided: false,
        }),
        (Ok(up), Err(_)) => {
            let base = probe(0.0)?;
            Ok(FdSample { bus, hour, reactive, value: (up - base) / (delta_mw * dt), one_sided: true })
        }
        (Err(_), Ok(down)) => {
            let base = probe(0.0)?;
            Ok(FdSample {
                bus,
                hour,
                reactive,
                value: (base - down) / (delta_mw * dt),
                one_sided: true,
            })
        }
        (Err(_), Err(_)) => Err(EmissionError::ProbeFailed { bus, hour }),
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::two_bus_case;
    use crate::scheduler::dispatch_settings;

    fn single_bus_flat(demand: f64) -> (crate::grid::NetworkCase, ScenarioSet) {
        let mut case = two_bus_case();
        case.buses.truncate(1);
        case.branches.clear();
        case.base.periods = 3;
        let mut scn = ScenarioSet::zeros(&case, "flat");
        for t in 0..3 {
            scn.demand_p[0][t] = demand;
            scn.demand_q[0][t] = 0.3 * demand;
        }
        (case, scn)
    }

    #[test]
    fn single_bus_marginal_equals_the_import_rate() {
        let (case, scn) = single_bus_flat(20.0);
        let run = compute_dlme(&case, &scn, &dispatch_settings()).unwrap();
        for t in 0..3 {
            assert!(
                (run.signals.active[0][t] - 0.875).abs() < 1e-6,
                "active {:?}",
                run.signals.active
            );
            assert!(run.signals.reactive[0][t].abs() < 1e-6, "reactive {:?}", run.signals.reactive);
        }
        assert!(!run.signals.approximate);
    }

    #[test]
    fn lossy_feeder_amplifies_the_marginal_rate_downstream() {
        let mut case = two_bus_case();
        case.base.periods = 1;
        let mut scn = ScenarioSet::zeros(&case, "one");
        scn.demand_p[1][0] = 30.0;
        scn.demand_q[1][0] = 9.0;
        let run = compute_dlme(&case, &scn, &dispatch_settings()).unwrap();

        // Closed-form check: with the substation voltage pinned at 1 and the
        // flow cone tight, l = p^2 + q^2 with p = d + r l, q = d_q + x l, so
        // d(import)/d(demand) = 1 + r dl/dd with dl/dd = 2p / (1 - 2rp - 2xq).
        let (r, x) = (0.01, 0.02);
        let (d, dq) = (0.30, 0.09);
        let mut l = 0.0;
        for _ in 0..200 {
            let p = d + r * l;
            let q = dq + x * l;
            l = p * p + q * q;
        }
        let p = d + r * l;
        let q = dq + x * l;
        let dl_dd = 2.0 * p / (1.0 - 2.0 * r * p - 2.0 * x * q);
        let expected = 0.875 * (1.0 + r * dl_dd);
        let got = run.signals.active[1][0];
        assert!((got - expected).abs() < 1e-4, "got {got}, expected {expected}");
        assert!(got > 0.875, "marginal downstream of a lossy line must exceed the source rate");

        // Reactive demand also drives loss, so its signal is small but positive.
        let dl_ddq = 2.0 * q / (1.0 - 2.0 * r * p - 2.0 * x * q);
        let expected_q = 0.875 * r * dl_ddq;
        let got_q = run.signals.reactive[1][0];
        assert!((got_q - expected_q).abs() < 1e-4, "got {got_q}, expected {expected_q}");

        // At the substation bus itself the marginal is the plain rate.
        assert!((run.signals.active[0][0] - 0.875).abs() < 1e-5);
    }

    #[test]
    fn adjoint_matches_the_finite_difference_oracle() {
        let mut case = two_bus_case();
        case.base.periods = 2;
        let mut scn = ScenarioSet::zeros(&case, "two");
        for t in 0..2 {
            scn.demand_p[1][t] = 25.0 + 5.0 * t as f64;
            scn.demand_q[1][t] = 8.0;
        }
        let run = compute_dlme(&case, &scn, &dispatch_settings()).unwrap();
        for (bus, hour, reactive) in [(1, 0, false), (1, 1, false), (0, 1, false), (1, 0, true)] {
            let fd = fd_oracle(
                &case,
                &scn,
                bus,
                hour,
                reactive,
                1e-4,
                &dispatch_settings(),
                Some(&run.bundle),
            )
            .unwrap();
            let adj = if reactive {
                run.signals.reactive[bus][hour]
            } else {
                run.signals.active[bus][hour]
            };
            let tol = (1e-3 * adj.abs()).max(1e-5);
            assert!(
                (adj - fd.value).abs() <= tol,
                "bus {bus} hour {hour} reactive {reactive}: adjoint {adj} vs fd {}",
                fd.value
            );
            assert!(!fd.one_sided);
        }
    }

    #[test]
    fn gradient_touches_only_emitting_injections() {
        let (mut case, scn) = single_bus_flat(10.0);
        case.sync_dg.push(crate::grid::SyncDg {
            id: "g".into(),
            bus: 1,
            p_min: 0.0,
            p_max: 5.0,
            q_min: 0.0,
            q_max: 0.0,
            ramp_down: -5.0,
            ramp_up: 5.0,
            emission_rate: 0.52,
            price_p: 30.0,
            price_q: None,
            p_initial: Some(0.0),
        });
        let program = build_program(&case, &scn).unwrap();
        let g = emission_gradient(&case, &program);
        let idx = &program.index;
        for t in 0..3 {
            assert_eq!(g[idx.col_p_s(t)], 0.875 * 100.0);
            assert_eq!(g[idx.col_p_sync(0, t)], 0.52 * 100.0);
            assert_eq!(g[idx.col_q_s(t)], 0.0);
            assert_eq!(g[idx.col_q_sync(0, t)], 0.0);
        }
        let nonzero = g.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 6);
    }

    #[test]
    fn bad_fd_step_is_rejected() {
        let (case, scn) = single_bus_flat(10.0);
        let err =
            fd_oracle(&case, &scn, 0, 0, false, 0.0, &dispatch_settings(), None).unwrap_err();
        assert!(matches!(err, EmissionError::BadStep(_)));
    }
}
