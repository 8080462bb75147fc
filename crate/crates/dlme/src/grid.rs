//! Network case model: buses, branches, DER fleet, substation, prices,
//! and emission rates, loaded from a JSON case file and validated.
//!
//! Conventions: network quantities are per-unit on the case MVA base;
//! injected powers in the case file are MW/MVar/MWh; emission rates stay
//! in tCO2/MWh. Bus ids are arbitrary unique positive integers; loaders
//! map them to dense indices in file order.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

/// Hourly profile: either one value for all hours or an explicit series.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Profile {
    Scalar(f64),
    Series(Vec<f64>),
}

impl Profile {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Profile::Scalar(v) => *v,
            Profile::Series(s) => s[t],
        }
    }

    pub fn len_ok(&self, horizon: usize) -> bool {
        match self {
            Profile::Scalar(_) => true,
            Profile::Series(s) => s.len() == horizon,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseBase {
    pub name: String,
    pub mva: f64,
    #[serde(default)]
    pub kv: Option<f64>,
    pub periods: usize,
    #[serde(default = "default_period_hours")]
    pub period_hours: f64,
}

fn default_period_hours() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub is_substation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchStatus {
    Closed,
    Open,
}

impl Default for BranchStatus {
    fn default() -> Self {
        BranchStatus::Closed
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Resistance, p.u.
    pub r: f64,
    /// Reactance, p.u.
    pub x: f64,
    /// Current magnitude upper bound, p.u.
    pub i_max: f64,
    #[serde(default)]
    pub i_min: f64,
    #[serde(default)]
    pub status: BranchStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InverterDg {
    pub id: String,
    pub bus: usize,
    /// Nameplate active capacity, MW; hourly availability scales it.
    pub p_max: f64,
    #[serde(default)]
    pub p_min: f64,
    /// Minimum power factor in (0, 1].
    pub kappa_min: f64,
    pub price_p: f64,
    #[serde(default)]
    pub price_q: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncDg {
    pub id: String,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Signed per-hour ramp limits, MW/h, ramp_down <= ramp_up.
    pub ramp_down: f64,
    pub ramp_up: f64,
    /// tCO2/MWh.
    pub emission_rate: f64,
    pub price_p: f64,
    #[serde(default)]
    pub price_q: Option<f64>,
    /// Output before the first period, MW; defaults to the box midpoint.
    #[serde(default)]
    pub p_initial: Option<f64>,
}

impl SyncDg {
    pub fn initial_output(&self) -> f64 {
        self.p_initial.unwrap_or(0.5 * (self.p_min + self.p_max))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Storage {
    pub id: String,
    pub bus: usize,
    pub p_cha_max: f64,
    pub p_dis_max: f64,
    #[serde(default)]
    pub e_min: f64,
    pub e_max: f64,
    pub e_init: f64,
    pub eta_cha: f64,
    pub eta_dis: f64,
    /// Cost per MWh moved in either direction; keeps charge/discharge
    /// complementary without binaries.
    #[serde(default = "default_storage_price")]
    pub price: f64,
    /// Carbon intensity of the energy already stored at the start of the
    /// horizon (tCO2/MWh), used by the average-emission flow model.
    #[serde(default)]
    pub initial_intensity: f64,
    /// Require end-of-horizon energy >= e_init.
    #[serde(default = "default_true")]
    pub terminal_at_least_init: bool,
}

fn default_storage_price() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvAggregator {
    pub id: String,
    pub bus: usize,
    /// Hourly charging power bounds, MW.
    pub p_lb: Profile,
    pub p_ub: Profile,
    /// Cumulative-energy bounds through the end of each hour, MWh.
    pub e_lb: Vec<f64>,
    pub e_ub: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Substation {
    pub bus: usize,
    pub p_max: f64,
    #[serde(default)]
    pub p_min: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prices {
    /// Substation active energy price, currency/MWh.
    pub substation_p: Profile,
    /// Substation reactive price; defaults to 0.1 x substation_p.
    #[serde(default)]
    pub substation_q: Option<Profile>,
}

impl Prices {
    pub fn substation_q_at(&self, t: usize) -> f64 {
        match &self.substation_q {
            Some(p) => p.at(t),
            None => 0.1 * self.substation_p.at(t),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmissionRates {
    /// Carbon intensity of substation imports, tCO2/MWh.
    #[serde(default = "default_substation_rate")]
    pub substation: f64,
}

fn default_substation_rate() -> f64 {
    0.875
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base: CaseBase,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub inverter_dg: Vec<InverterDg>,
    #[serde(default)]
    pub sync_dg: Vec<SyncDg>,
    #[serde(default)]
    pub storage: Vec<Storage>,
    #[serde(default)]
    pub ev: Vec<EvAggregator>,
    pub substation: Substation,
    pub prices: Prices,
    #[serde(default = "default_emission_rates")]
    pub emission_rates: EmissionRates,
}

fn default_emission_rates() -> EmissionRates {
    EmissionRates { substation: default_substation_rate() }
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse case file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid case: {0}")]
    Invalid(String),
}

impl NetworkCase {
    pub fn horizon(&self) -> usize {
        self.base.periods
    }

    /// Dense index of a bus id.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect()
    }

    pub fn closed_branches(&self) -> Vec<&Branch> {
        self.branches.iter().filter(|b| b.status == BranchStatus::Closed).collect()
    }

    pub fn substation_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.id == self.substation.bus)
            .expect("validated case has a substation bus")
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let fail = |msg: String| Err(CaseError::Invalid(msg));
        if self.base.mva <= 0.0 {
            return fail("base.mva must be positive".into());
        }
        if self.base.periods == 0 {
            return fail("base.periods must be at least 1".into());
        }
        if self.base.period_hours <= 0.0 {
            return fail("base.period_hours must be positive".into());
        }
        if self.buses.is_empty() {
            return fail("case has no buses".into());
        }
        let mut seen = HashMap::new();
        for b in &self.buses {
            if seen.insert(b.id, ()).is_some() {
                return fail(format!("duplicate bus id {}", b.id));
            }
            if !(0.0 < b.v_min && b.v_min < b.v_max) {
                return fail(format!("bus {}: need 0 < v_min < v_max", b.id));
            }
        }
        let subs: Vec<_> = self.buses.iter().filter(|b| b.is_substation).collect();
        if subs.len() != 1 {
            return fail(format!("expected exactly one substation bus, found {}", subs.len()));
        }
        if subs[0].id != self.substation.bus {
            return fail(format!(
                "substation section names bus {} but bus {} carries the flag",
                self.substation.bus, subs[0].id
            ));
        }
        let index = self.bus_index();
        for br in &self.branches {
            if !index.contains_key(&br.from) || !index.contains_key(&br.to) {
                return fail(format!("branch {}-{} references unknown bus", br.from, br.to));
            }
            if br.from == br.to {
                return fail(format!("branch {}-{} is a self-loop", br.from, br.to));
            }
            if br.r < 0.0 || br.x < 0.0 || br.r + br.x == 0.0 {
                return fail(format!("branch {}-{}: need r, x >= 0 and r + x > 0", br.from, br.to));
            }
            if br.i_max <= 0.0 || br.i_min < 0.0 || br.i_min > br.i_max {
                return fail(format!("branch {}-{}: bad current bounds", br.from, br.to));
            }
        }
        self.check_radial(&index)?;
        let horizon = self.base.periods;
        if !self.prices.substation_p.len_ok(horizon)
            || !self.prices.substation_q.as_ref().map_or(true, |p| p.len_ok(horizon))
        {
            return fail("price profile length does not match base.periods".into());
        }
        for g in &self.inverter_dg {
            if !index.contains_key(&g.bus) {
                return fail(format!("inverter {}: unknown bus {}", g.id, g.bus));
            }
            if !(0.0 < g.kappa_min && g.kappa_min <= 1.0) {
                return fail(format!("inverter {}: kappa_min must be in (0, 1]", g.id));
            }
            if g.p_min < 0.0 || g.p_min > g.p_max {
                return fail(format!("inverter {}: need 0 <= p_min <= p_max", g.id));
            }
        }
        for g in &self.sync_dg {
            if !index.contains_key(&g.bus) {
                return fail(format!("generator {}: unknown bus {}", g.id, g.bus));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return fail(format!("generator {}: crossed power bounds", g.id));
            }
            if g.ramp_down > g.ramp_up {
                return fail(format!("generator {}: ramp_down > ramp_up", g.id));
            }
            if g.emission_rate < 0.0 {
                return fail(format!("generator {}: negative emission rate", g.id));
            }
            if let Some(p0) = g.p_initial {
                if p0 < g.p_min || p0 > g.p_max {
                    return fail(format!("generator {}: p_initial outside [p_min, p_max]", g.id));
                }
            }
        }
        for s in &self.storage {
            if !index.contains_key(&s.bus) {
                return fail(format!("storage {}: unknown bus {}", s.id, s.bus));
            }
            if !(0.0 < s.eta_cha && s.eta_cha <= 1.0 && 0.0 < s.eta_dis && s.eta_dis <= 1.0) {
                return fail(format!("storage {}: efficiencies must be in (0, 1]", s.id));
            }
            if !(s.e_min <= s.e_init && s.e_init <= s.e_max) {
                return fail(format!("storage {}: need e_min <= e_init <= e_max", s.id));
            }
            if s.p_cha_max < 0.0 || s.p_dis_max < 0.0 {
                return fail(format!("storage {}: negative power limit", s.id));
            }
        }
        for a in &self.ev {
            if !index.contains_key(&a.bus) {
                return fail(format!("ev {}: unknown bus {}", a.id, a.bus));
            }
            if !a.p_lb.len_ok(horizon)
                || !a.p_ub.len_ok(horizon)
                || a.e_lb.len() != horizon
                || a.e_ub.len() != horizon
            {
                return fail(format!("ev {}: profile length != periods", a.id));
            }
            let dt = self.base.period_hours;
            let mut cum_lb = 0.0;
            let mut cum_ub = 0.0;
            for t in 0..horizon {
                if a.p_lb.at(t) > a.p_ub.at(t) {
                    return fail(format!("ev {}: p_lb > p_ub at hour {t}", a.id));
                }
                if a.e_lb[t] > a.e_ub[t] {
                    return fail(format!("ev {}: e_lb > e_ub at hour {t}", a.id));
                }
                if t > 0 && (a.e_lb[t] < a.e_lb[t - 1] || a.e_ub[t] < a.e_ub[t - 1]) {
                    return fail(format!("ev {}: cumulative bounds decrease at hour {t}", a.id));
                }
                cum_lb += a.p_lb.at(t) * dt;
                cum_ub += a.p_ub.at(t) * dt;
                if cum_lb > a.e_ub[t] + 1e-9 || cum_ub < a.e_lb[t] - 1e-9 {
                    return fail(format!("ev {}: energy window unreachable at hour {t}", a.id));
                }
            }
        }
        if !index.contains_key(&self.substation.bus) {
            return fail(format!("substation references unknown bus {}", self.substation.bus));
        }
        if self.substation.p_min > self.substation.p_max
            || self.substation.q_min > self.substation.q_max
        {
            return fail("substation: crossed import bounds".into());
        }
        if self.emission_rates.substation < 0.0 {
            return fail("emission_rates.substation must be nonnegative".into());
        }
        Ok(())
    }

    /// Closed branches must form a tree spanning every bus, rooted at the
    /// substation.
    fn check_radial(&self, index: &HashMap<usize, usize>) -> Result<(), CaseError> {
        let n = self.buses.len();
        let closed = self.closed_branches();
        if closed.len() != n - 1 {
            return Err(CaseError::Invalid(format!(
                "non-radial: {} closed branches for {} buses (need {})",
                closed.len(),
                n,
                n - 1
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for br in &closed {
            let (f, t) = (index[&br.from], index[&br.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let root = index[&self.substation.bus];
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        seen[root] = true;
        let mut count = 0;
        while let Some(u) = stack.pop() {
            count += 1;
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if count != n {
            return Err(CaseError::Invalid(format!(
                "non-radial: only {count} of {n} buses reachable from the substation over closed branches"
            )));
        }
        Ok(())
    }
}

pub fn load_case(path: &Path) -> Result<NetworkCase, CaseError> {
    let text = std::fs::read_to_string(path)?;
    let case: NetworkCase = serde_json::from_str(&text)?;
    case.validate()?;
    Ok(case)
}

// ---------------------------------------------------------------------------
