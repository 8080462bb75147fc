//! Multi-period SOCP dispatch for radial distribution feeders, with
//! marginal (sensitivity-based) and average (flow-tracing) locational
//! emission signals and a budgeted demand-response evaluator on top.
//!
//! The pipeline: load a [`grid::NetworkCase`] and hourly
//! [`scenario::ScenarioSet`]s, build and solve the dispatch cone program
//! ([`scheduler`]), then derive signals: [`emission`] differentiates the
//! optimal emissions through the solver to get marginal tCO2/MWh per bus
//! and hour, [`baselines`] computes flow-traced average intensities and a
//! network-free merit-order signal, and [`dr`] redispatches after a
//! budgeted demand reduction placed by any of those signals.

pub mod baselines;
pub mod cluster;
pub mod dr;
pub mod emission;
pub mod grid;
pub mod report;
pub mod scenario;
pub mod scheduler;

pub use cluster::{cluster_scenarios, ClusterResult};
pub use grid::{load_case, CaseError, NetworkCase};
pub use scenario::{load_scenarios, ScenarioError, ScenarioSet};
pub use scheduler::{
    build_program, dispatch_settings, solve_dispatch, total_emission, DispatchError,
    DispatchProgram, DispatchSolution,
};
