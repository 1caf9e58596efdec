//! Post-hoc diagnostics on finished runs: where agents go, how much their
//! individual heads matter there, and how returns evolve over training.

mod curve;
mod stats;

pub use curve::{learning_curve, learning_curve_svg, read_eval_curve, CurvePoint, CurveSeries};
pub use stats::{mann_whitney_greater, population_sd, MannWhitney};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envsim::{observe, Direction, Layout, Region, TraceRecord};
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::policy::QOutputs;

/// Spread of the individual values over actions relative to the spread of
/// the shared values, both as population SDs. The denominator is clamped at
/// `1e-8`.
pub fn sd_ratio(q: &QOutputs) -> f64 {
    population_sd(&q.q_individual) / population_sd(&q.q_shared).max(1e-8)
}

/// Per-cell occupancy counts for every agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    /// `per_agent[i][r * cols + c]`.
    pub per_agent: Vec<Vec<u64>>,
}

impl Heatmap {
    pub fn count(&self, agent: usize, r: usize, c: usize) -> u64 {
        self.per_agent[agent][r * self.cols + c]
    }

    pub fn pooled(&self) -> Vec<u64> {
        let mut out = vec![0; self.rows * self.cols];
        for agent in &self.per_agent {
            for (o, &v) in out.iter_mut().zip(agent) {
                *o += v;
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.per_agent.iter().flatten().sum()
    }

    /// Grid CSV of one agent's counts, or of all agents pooled. Wall cells
    /// are left empty.
    pub fn to_csv(&self, layout: &Layout, agent: Option<usize>) -> String {
        let values = match agent {
            Some(i) => self.per_agent[i].clone(),
            None => self.pooled(),
        };
        grid_csv(layout, |r, c| Some(values[r * self.cols + c].to_string()))
    }
}

fn grid_csv(layout: &Layout, value: impl Fn(usize, usize) -> Option<String>) -> String {
    let mut out = String::new();
    for r in 0..layout.rows() {
        let cells: Vec<String> = (0..layout.cols())
            .map(|c| if layout.is_open(r, c) { value(r, c).unwrap_or_default() } else { String::new() })
            .collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

fn check_record(layout: &Layout, record: &TraceRecord, n_agents: usize) -> Result<()> {
    if record.positions.len() != n_agents {
        return Err(Error::TraceMismatch(format!(
            "episode {} step {}: {} positions for {n_agents} agents",
            record.episode,
            record.step,
            record.positions.len()
        )));
    }
    for &(r, c) in record.positions.iter().chain(&record.dots) {
        if r >= layout.rows() || c >= layout.cols() || !layout.is_open(r, c) {
            return Err(Error::TraceMismatch(format!(
                "episode {} step {}: cell ({r}, {c}) is not an open cell",
                record.episode, record.step
            )));
        }
    }
    Ok(())
}

/// Counts every agent's occupied cell at every recorded step.
pub fn visitation_heatmap(traces: &[TraceRecord], layout: &Layout, n_agents: usize) -> Result<Heatmap> {
    if traces.is_empty() {
        return Err(Error::Precondition("no trace records".into()));
    }
    let mut map = Heatmap {
        rows: layout.rows(),
        cols: layout.cols(),
        per_agent: vec![vec![0; layout.rows() * layout.cols()]; n_agents],
    };
    for record in traces {
        check_record(layout, record, n_agents)?;
        for (i, &(r, c)) in record.positions.iter().enumerate() {
            map.per_agent[i][r * map.cols + c] += 1;
        }
    }
    Ok(map)
}

/// The agent with the most visits to each edge room; ties go to the lowest
/// index and unvisited rooms have no owner.
pub fn room_owners(map: &Heatmap, layout: &Layout) -> Vec<(Direction, Option<usize>)> {
    Direction::ALL
        .iter()
        .map(|&d| {
            let visits: Vec<u64> = (0..map.per_agent.len())
                .map(|i| layout.room_cells(d).iter().map(|&(r, c)| map.count(i, r, c)).sum())
                .collect();
            let best = visits.iter().copied().max().unwrap_or(0);
            let owner = (best > 0).then(|| visits.iter().position(|&v| v == best).expect("max exists"));
            (d, owner)
        })
        .collect()
}

/// Number of different agents that own at least one edge room.
pub fn distinct_room_owners(map: &Heatmap, layout: &Layout) -> usize {
    let mut owners: Vec<usize> = room_owners(map, layout).into_iter().filter_map(|(_, o)| o).collect();
    owners.sort_unstable();
    owners.dedup();
    owners.len()
}

/// Coarse region classes used for aggregation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionClass {
    Center,
    Corridor,
    EdgeRoom,
}

impl From<Region> for RegionClass {
    fn from(r: Region) -> Self {
        match r {
            Region::Center => RegionClass::Center,
            Region::Corridor(_) => RegionClass::Corridor,
            Region::Room(_) => RegionClass::EdgeRoom,
        }
    }
}

/// Visit-weighted means of the SD ratio; `None` where nothing was visited.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionAggregates {
    pub center: Option<f64>,
    pub corridors: Option<f64>,
    pub edge_rooms: Option<f64>,
    pub center_and_corridors: Option<f64>,
    pub visits: BTreeMap<String, u64>,
}

/// SD ratio accumulated per visited cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SdRatioMap {
    pub rows: usize,
    pub cols: usize,
    sums: Vec<f64>,
    visits: Vec<u64>,
    pub regions: RegionAggregates,
}

impl SdRatioMap {
    /// Mean ratio over visits, or `None` for cells never visited.
    pub fn cell(&self, r: usize, c: usize) -> Option<f64> {
        let k = r * self.cols + c;
        (self.visits[k] > 0).then(|| self.sums[k] / self.visits[k] as f64)
    }

    pub fn visits(&self, r: usize, c: usize) -> u64 {
        self.visits[r * self.cols + c]
    }

    pub fn to_csv(&self, layout: &Layout) -> String {
        grid_csv(layout, |r, c| self.cell(r, c).map(|v| format!("{v}")))
    }
}

/// Replays recorded episodes through the learner's agent network, takes
/// each agent's SD ratio at its current cell, and aggregates by region.
pub fn region_sd_summary(learner: &Learner, layout: &Layout, traces: &[TraceRecord]) -> Result<SdRatioMap> {
    if traces.is_empty() {
        return Err(Error::Precondition("no trace records".into()));
    }
    let n = learner.spec.n_agents;
    let (rows, cols) = (layout.rows(), layout.cols());
    let mut sums = vec![0.0; rows * cols];
    let mut visits = vec![0u64; rows * cols];
    let mut actor = learner.new_actor();
    let mut current: Option<usize> = None;
    let mut expected_step = 0;
    for record in traces {
        check_record(layout, record, n)?;
        if current != Some(record.episode) {
            current = Some(record.episode);
            actor = learner.new_actor();
            expected_step = 0;
        }
        if record.step != expected_step || record.actions.len() != n {
            return Err(Error::TraceMismatch(format!(
                "episode {} step {}: records must be consecutive with one action per agent",
                record.episode, record.step
            )));
        }
        expected_step += 1;
        let obs: Vec<Vec<f64>> = (0..n).map(|i| observe(layout, &record.positions, &record.dots, i)).collect();
        let view = learner.observe(&mut actor, &obs)?;
        for (q, &(r, c)) in view.own.iter().zip(&record.positions) {
            sums[r * cols + c] += sd_ratio(q);
            visits[r * cols + c] += 1;
        }
        learner.record_actions(&mut actor, &record.actions);
    }

    let mut by_class: BTreeMap<RegionClass, (f64, u64)> = BTreeMap::new();
    for &(r, c) in layout.open_cells() {
        let class = RegionClass::from(layout.region(r, c).expect("open cell"));
        let e = by_class.entry(class).or_default();
        e.0 += sums[r * cols + c];
        e.1 += visits[r * cols + c];
    }
    let mean = |classes: &[RegionClass]| {
        let (s, v) = classes
            .iter()
            .filter_map(|c| by_class.get(c))
            .fold((0.0, 0), |(s, v), &(s2, v2)| (s + s2, v + v2));
        (v > 0).then(|| s / v as f64)
    };
    let regions = RegionAggregates {
        center: mean(&[RegionClass::Center]),
        corridors: mean(&[RegionClass::Corridor]),
        edge_rooms: mean(&[RegionClass::EdgeRoom]),
        center_and_corridors: mean(&[RegionClass::Center, RegionClass::Corridor]),
        visits: by_class.iter().map(|(k, v)| (format!("{k:?}"), v.1)).collect(),
    };
    Ok(SdRatioMap {
        rows,
        cols,
        sums,
        visits,
        regions,
    })
}

/// Writes text to a file, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
