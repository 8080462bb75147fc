//! Budgeted demand response guided by an emission signal.
//!
//! Each hour gets the same reduction budget (a percentage of the system
//! peak demand). The allocator walks buses in descending signal order,
//! shedding as much as each bus's demand allows until the budget is
//! spent; redispatching the reduced scenario then prices the signal by
//! the emissions it actually avoided.

use crate::grid::NetworkCase;
use crate::scenario::ScenarioSet;
use crate::scheduler::{solve_dispatch, total_emission, DispatchError, DispatchSolution};
use conic::SolverSettings;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DrError {
    #[error("signal matrix shape does not match the scenario")]
    Shape,
    #[error("hour {hour}: budget {budget:.3} MW exceeds sheddable demand {available:.3} MW")]
    BudgetExceedsLoad { hour: usize, budget: f64, available: f64 },
    #[error("reduction at bus position {bus}, hour {hour} exceeds the demand there")]
    NegativeDemand { bus: usize, hour: usize },
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DrPlan {
    /// MW shed per (bus position, hour).
    pub reduction: Vec<Vec<f64>>,
    pub hourly_budget: f64,
}

impl DrPlan {
    pub fn total_shed(&self) -> f64 {
        self.reduction.iter().flatten().sum()
    }
}

/// Hourly budget: `pct` percent of the largest hourly system demand.
pub fn hourly_budget(scenario: &ScenarioSet, pct: f64) -> f64 {
    scenario.peak_total_demand() * pct / 100.0
}

/// Greedy allocation: per hour, shed at the buses with the highest signal
/// first (ties to the lower bus position), capped by each bus's demand,
/// until the hourly budget is exactly spent. Hours flagged in
/// `skip_hours` receive no allocation.
pub fn allocate_dr(
    signal: &[Vec<f64>],
    scenario: &ScenarioSet,
    budget: f64,
    skip_hours: Option<&[bool]>,
) -> Result<DrPlan, DrError> {
    let n = scenario.demand_p.len();
    let t_all = scenario.horizon;
    if signal.len() != n || signal.iter().any(|row| row.len() != t_all) {
        return Err(DrError::Shape);
    }
    if let Some(skip) = skip_hours {
        if skip.len() != t_all {
            return Err(DrError::Shape);
        }
    }
    let mut reduction = vec![vec![0.0; t_all]; n];
    for t in 0..t_all {
        if skip_hours.map_or(false, |s| s[t]) {
            continue;
        }
        let available: f64 = (0..n).map(|j| scenario.demand_p[j][t]).sum();
        if budget > available + 1e-9 {
            return Err(DrError::BudgetExceedsLoad { hour: t, budget, available });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            signal[b][t].partial_cmp(&signal[a][t]).expect("finite signal").then(a.cmp(&b))
        });
        let mut remaining = budget;
        for j in order {
            if remaining <= 0.0 {
                break;
            }
            let shed = scenario.demand_p[j][t].min(remaining);
            if shed > 0.0 {
                reduction[j][t] = shed;
                remaining -= shed;
            }
        }
    }
    Ok(DrPlan { reduction, hourly_budget: budget })
}

/// Scenario with the plan's reductions applied to active demand.
pub fn apply_reduction(scenario: &ScenarioSet, plan: &DrPlan) -> Result<ScenarioSet, DrError> {
    let mut out = scenario.clone();
    for j in 0..out.demand_p.len() {
        for t in 0..out.horizon {
            let r = plan.reduction[j][t];
            if r > out.demand_p[j][t] + 1e-9 {
                return Err(DrError::NegativeDemand { bus: j, hour: t });
            }
            out.demand_p[j][t] = (out.demand_p[j][t] - r).max(0.0);
        }
    }
    Ok(out)
}

/// Outcome of one signal-guided reduction: the redispatch and its emissions.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DrOutcome {
    pub plan: DrPlan,
    pub dispatch: DispatchSolution,
    pub emission: f64,
}

/// Allocate along `signal`, redispatch, and report the new emission total.
pub fn apply_and_redispatch(
    case: &NetworkCase,
    scenario: &ScenarioSet,
    signal: &[Vec<f64>],
    budget: f64,
    skip_hours: Option<&[bool]>,
    settings: &SolverSettings,
) -> Result<DrOutcome, DrError> {
    let plan = allocate_dr(signal, scenario, budget, skip_hours)?;
    let reduced = apply_reduction(scenario, &plan)?;
    let (dispatch, _, _) = solve_dispatch(case, &reduced, settings, None)?;
    let emission = total_emission(case, &dispatch);
    Ok(DrOutcome { plan, dispatch, emission })
}

/// Extra emission reduction of the tested signal over a baseline signal,
/// as a percentage of the baseline's reduction. None when the baseline
/// saved nothing to compare against.
pub fn enhance_percent(e_initial: f64, e_signal: f64, e_baseline: f64) -> Option<f64> {
    let saved_signal = e_initial - e_signal;
    let saved_baseline = e_initial - e_baseline;
    if saved_baseline.abs() < 1e-12 {
        return None;
    }
    Some((saved_signal - saved_baseline) / saved_baseline * 100.0)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::two_bus_case;
    use crate::scheduler::dispatch_settings;

    fn scenario3(case: &NetworkCase) -> ScenarioSet {
        let mut scn = ScenarioSet::zeros(case, "s");
        // Peak total demand is 30 at hour 1.
        scn.demand_p[0] = vec![4.0, 10.0, 6.0];
        scn.demand_p[1] = vec![8.0, 20.0, 5.0];
        scn
    }

    #[test]
    fn budget_is_a_share_of_the_system_peak() {
        let mut case = two_bus_case();
        case.base.periods = 3;
        let scn = scenario3(&case);
        assert!((hourly_budget(&scn, 1.0) - 0.30).abs() < 1e-12);
        assert!((hourly_budget(&scn, 10.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_takes_the_highest_signal_first_and_spends_exactly() {
        let mut case = two_bus_case();
        case.base.periods = 3;
        let scn = scenario3(&case);
        let signal = vec![vec![0.9, 0.5, 0.7], vec![0.8, 0.6, 0.7]];
        let plan = allocate_dr(&signal, &scn, 5.0, None).unwrap();
        // Hour 0: bus 0 leads (0.9 > 0.8) but holds only 4 MW; bus 1 takes the rest.
        assert_eq!(plan.reduction[0][0], 4.0);
        assert_eq!(plan.reduction[1][0], 1.0);
        // Hour 1: bus 1 leads and can absorb the whole budget.
        assert_eq!(plan.reduction[0][1], 0.0);
        assert_eq!(plan.reduction[1][1], 5.0);
        // Hour 2: tie broken toward the lower bus position.
        assert_eq!(plan.reduction[0][2], 5.0);
        assert_eq!(plan.reduction[1][2], 0.0);
        for t in 0..3 {
            let spent: f64 = (0..2).map(|j| plan.reduction[j][t]).sum();
            assert!((spent - 5.0).abs() < 1e-12, "hour {t}");
        }
    }

    #[test]
    fn flagged_hours_receive_no_allocation() {
        let mut case = two_bus_case();
        case.base.periods = 3;
        let scn = scenario3(&case);
        let signal = vec![vec![1.0; 3], vec![0.5; 3]];
        let plan = allocate_dr(&signal, &scn, 2.0, Some(&[false, true, false])).unwrap();
        assert_eq!(plan.reduction[0][1], 0.0);
        assert_eq!(plan.reduction[1][1], 0.0);
        assert_eq!(plan.reduction[0][0], 2.0);
    }

    #[test]
    fn over_budget_hours_are_rejected() {
        let mut case = two_bus_case();
        case.base.periods = 3;
        let scn = scenario3(&case);
        let signal = vec![vec![1.0; 3], vec![0.5; 3]];
        let err = allocate_dr(&signal, &scn, 12.0, None).unwrap_err();
        // Hour 2 holds only 11 MW of demand.
        assert!(matches!(err, DrError::BudgetExceedsLoad { hour: 2, .. }), "{err}");
    }

    #[test]
    fn applying_a_plan_reduces_demand_in_place() {
        let mut case = two_bus_case();
        case.base.periods = 3;
        let scn = scenario3(&case);
        let signal = vec![vec![1.0; 3], vec![0.5; 3]];
        let plan = allocate_dr(&signal, &scn, 3.0, None).unwrap();
        let reduced = apply_reduction(&scn, &plan).unwrap();
        for t in 0..3 {
            let before = scn.total_demand(t);
            let after = reduced.total_demand(t);
            assert!((before - after - 3.0).abs() < 1e-12, "hour {t}");
        }
    }

    #[test]
    fn redispatch_of_a_reduction_lowers_import_and_emissions() {
        let mut case = two_bus_case();
        case.base.periods = 2;
        let mut scn = ScenarioSet::zeros(&case, "s");
        scn.demand_p[1] = vec![30.0, 40.0];
        scn.demand_q[1] = vec![9.0, 12.0];
        let (initial, _, _) = solve_dispatch(&case, &scn, &dispatch_settings(), None).unwrap();
        let e0 = total_emission(&case, &initial);
        let signal = vec![vec![0.0; 2], vec![1.0; 2]];
        let out = apply_and_redispatch(
            &case,
            &scn,
            &signal,
            hourly_budget(&scn, 10.0),
            None,
            &dispatch_settings(),
        )
        .unwrap();
        assert!((out.plan.hourly_budget - 4.0).abs() < 1e-12);
        assert!(out.emission < e0 - 0.9 * 2.0 * 4.0 * 0.875 * 0.9, "e0 {e0} -> {}", out.emission);
    }

    #[test]
    fn enhance_compares_reductions_against_the_baseline() {
        let e = enhance_percent(100.0, 96.0, 98.0).unwrap();
        assert!((e - 100.0).abs() < 1e-12);
        assert_eq!(enhance_percent(100.0, 96.0, 100.0), None);
        let worse = enhance_percent(100.0, 99.0, 98.0).unwrap();
        assert!(worse < 0.0);
    }
}
