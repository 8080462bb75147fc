//! Scenario data: hourly bus demands and PV availability, read from CSV.
//!
//! Expected columns: `entity_id, hour, p_mw, q_mvar`, with an optional
//! leading `scenario` column when one file carries several scenarios.
//! `entity_id` is `bus:<id>` for a load row (p_mw/q_mvar in MW/MVar) or
//! `pv:<unit-id>` for an inverter availability row (availability in the
//! p_mw column, in [0, 1]; q_mvar ignored). Entries not present default
//! to zero.

use crate::grid::NetworkCase;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub label: String,
    pub horizon: usize,
    /// MW, indexed [bus position in case][hour].
    pub demand_p: Vec<Vec<f64>>,
    /// MVar, same indexing.
    pub demand_q: Vec<Vec<f64>>,
    /// Availability in [0, 1], indexed [inverter position in case][hour].
    pub pv_availability: Vec<Vec<f64>>,
}

impl ScenarioSet {
    pub fn zeros(case: &NetworkCase, label: &str) -> Self {
        let t = case.horizon();
        ScenarioSet {
            label: label.to_string(),
            horizon: t,
            demand_p: vec![vec![0.0; t]; case.buses.len()],
            demand_q: vec![vec![0.0; t]; case.buses.len()],
            pv_availability: vec![vec![0.0; t]; case.inverter_dg.len()],
        }
    }

    /// System-wide demand at hour t, MW.
    pub fn total_demand(&self, t: usize) -> f64 {
        self.demand_p.iter().map(|row| row[t]).sum()
    }

    /// Largest hourly system demand over the horizon, MW.
    pub fn peak_total_demand(&self) -> f64 {
        (0..self.horizon).map(|t| self.total_demand(t)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Csv(#[from] csv::Error),
    #[error("scenario file needs columns entity_id, hour, p_mw, q_mvar (optional leading scenario); got {0:?}")]
    Header(Vec<String>),
    #[error("record {record}: {msg}")]
    Record { record: usize, msg: String },
}

pub fn load_scenarios(path: &Path, case: &NetworkCase) -> Result<Vec<ScenarioSet>, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let default_label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    parse_scenarios(&text, &default_label, case)
}

pub fn parse_scenarios(
    text: &str,
    default_label: &str,
    case: &NetworkCase,
) -> Result<Vec<ScenarioSet>, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let labeled = headers.first().map(|h| h == "scenario").unwrap_or(false);
    let want: &[&str] = &["entity_id", "hour", "p_mw", "q_mvar"];
    let body = if labeled { &headers[1..] } else { &headers[..] };
    if body != want {
        return Err(ScenarioError::Header(headers));
    }

    let bus_index = case.bus_index();
    let pv_index: HashMap<&str, usize> =
        case.inverter_dg.iter().enumerate().map(|(k, g)| (g.id.as_str(), k)).collect();
    let horizon = case.horizon();

    let mut order: Vec<String> = Vec::new();
    let mut sets: HashMap<String, ScenarioSet> = HashMap::new();

    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let fail = |msg: String| ScenarioError::Record { record: k + 2, msg };
        let off = usize::from(labeled);
        let label = if labeled { record.get(0).unwrap_or("") } else { default_label };
        let label = if label.is_empty() { default_label } else { label };
        let entity = record.get(off).unwrap_or("");
        let hour: usize = record
            .get(off + 1)
            .unwrap_or("")
            .parse()
            .map_err(|_| fail("hour is not an integer".into()))?;
        let p: f64 = record
            .get(off + 2)
            .unwrap_or("")
            .parse()
            .map_err(|_| fail("p_mw is not a number".into()))?;
        let q: f64 = record
            .get(off + 3)
            .unwrap_or("")
            .parse()
            .map_err(|_| fail("q_mvar is not a number".into()))?;
        if hour >= horizon {
            return Err(fail(format!("hour {hour} outside horizon 0..{horizon}")));
        }
        if !sets.contains_key(label) {
            order.push(label.to_string());
            sets.insert(label.to_string(), ScenarioSet::zeros(case, label));
        }
        let set = sets.get_mut(label).expect("just inserted");
        if let Some(id) = entity.strip_prefix("bus:") {
            let bus: usize = id.parse().map_err(|_| fail(format!("bad bus id {id:?}")))?;
            let &j = bus_index
                .get(&bus)
                .ok_or_else(|| fail(format!("bus {bus} is not in the case")))?;
            if p < 0.0 {
                return Err(fail(format!("negative demand {p} at bus {bus}")));
            }
            set.demand_p[j][hour] = p;
            set.demand_q[j][hour] = q;
        } else if let Some(id) = entity.strip_prefix("pv:") {
            let &g = pv_index
                .get(id)
                .ok_or_else(|| fail(format!("inverter {id:?} is not in the case")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(fail(format!("availability {p} outside [0, 1] for {id:?}")));
            }
            set.pv_availability[g][hour] = p;
        } else {
            return Err(fail(format!("entity_id {entity:?} must start with bus: or pv:")));
        }
    }

    if order.is_empty() {
        return Err(ScenarioError::Record { record: 1, msg: "scenario file has no data rows".into() });
    }
    Ok(order.into_iter().map(|l| sets.remove(&l).expect("collected")).collect())
}

/// Write scenarios in the same CSV dialect `load_scenarios` reads,
/// always with the leading `scenario` column. Values use the shortest
/// round-trip decimal form, so write-then-read is lossless.
pub fn write_scenarios<W: Write>(
    out: &mut W,
    sets: &[ScenarioSet],
    case: &NetworkCase,
) -> std::io::Result<()> {
    writeln!(out, "scenario,entity_id,hour,p_mw,q_mvar")?;
    for set in sets {
        for (j, bus) in case.buses.iter().enumerate() {
            for t in 0..set.horizon {
                writeln!(
                    out,
                    "{},bus:{},{},{},{}",
                    set.label, bus.id, t, set.demand_p[j][t], set.demand_q[j][t]
                )?;
            }
        }
        for (g, unit) in case.inverter_dg.iter().enumerate() {
            for t in 0..set.horizon {
                writeln!(out, "{},pv:{},{},{},0", set.label, unit.id, t, set.pv_availability[g][t])?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
