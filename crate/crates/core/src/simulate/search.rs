use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use super::score::{score_port_counts, score_ships_for};
use super::{prepare_routing, prepare_year, simulate_stage, SimulationResult, YearConfig};
use crate::error::{Error, Result};
use crate::geodata::{GeoData, GeoFrame};
use crate::kde::SaleObservation;

/// Values tried for each tunable routing parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub c_max: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub reward_sd: Vec<f64>,
}

impl ParamGrid {
    /// Every `(c_max, epsilon, reward_sd)` combination, in nested order.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.c_max.len() * self.epsilon.len() * self.reward_sd.len());
        for &c in &self.c_max {
            for &e in &self.epsilon {
                for &s in &self.reward_sd {
                    out.push((c, e, s));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearScore {
    pub year: i32,
    /// χ² against recorded port totals, when the year has them.
    pub ports: Option<f64>,
    /// Summed ship-ledger χ², when the year has ledgers.
    pub ships: Option<f64>,
    pub total: f64,
}

/// Score one year's result against whatever validation data exists for it.
pub fn score_result(result: &SimulationResult, data: &GeoData) -> Result<YearScore> {
    score_records(&result.captives, &result.frame, result.year(), data)
}

/// [`score_result`] over any sale records of `year`.
pub fn score_records<T: SaleObservation>(records: &[T], frame: &GeoFrame, year: i32, data: &GeoData) -> Result<YearScore> {
    let has_ports = data.ports.iter().any(|p| p.year == year && !p.is_unknown());
    let has_ships = data.ledgers.iter().any(|l| l.year == year);
    if !has_ports && !has_ships {
        return Err(Error::Scoring(format!("no validation data for {year}")));
    }
    let ports = has_ports
        .then(|| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for s in records.iter().filter_map(|r| r.sale()) {
                *counts.entry(s.to_string()).or_default() += 1;
            }
            score_port_counts(&counts, &data.ports, year).map(|c| c.statistic)
        })
        .transpose()?;
    let ships = has_ships
        .then(|| score_ships_for(records, frame, year, &data.ledgers, &data.regions).map(|s| s.total))
        .transpose()?;
    Ok(YearScore {
        year,
        ports,
        ships,
        total: ports.unwrap_or(0.0) + ships.unwrap_or(0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchCell {
    pub c_max: f64,
    pub epsilon: f64,
    pub reward_sd: f64,
    /// Total χ² over all years; `None` when the cell failed.
    pub score: Option<f64>,
    pub years: Vec<YearScore>,
    pub error: Option<String>,
}

impl SearchCell {
    fn key(&self) -> [f64; 3] {
        [self.c_max, self.epsilon, self.reward_sd]
    }
}

fn rank(a: &SearchCell, b: &SearchCell) -> Ordering {
    let by_score = match (a.score, b.score) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_score.then_with(|| {
        a.key()
            .iter()
            .zip(b.key().iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Simulate and score every grid cell over `years`, sharing the conflict
/// stage and the base seed across cells. Cells come back sorted by total
/// χ² (failed cells last, ties by parameter values).
pub fn grid_search(grid: &ParamGrid, base: &YearConfig, data: &GeoData, years: &[i32]) -> Result<Vec<SearchCell>> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Domain("parameter grid is empty".into()));
    }
    if years.is_empty() {
        return Err(Error::Domain("no years to search over".into()));
    }
    let stages: Vec<Result<_>> = years
        .iter()
        .map(|&y| prepare_year(data, y, &base.covariance, &base.grid))
        .collect();
    let mut out: Vec<SearchCell> = cells
        .into_iter()
        .map(|(c_max, epsilon, reward_sd)| {
            let run = || -> Result<Vec<YearScore>> {
                stages
                    .iter()
                    .zip(years)
                    .map(|(stage, &year)| {
                        let stage = stage.as_ref().map_err(|e| Error::Scoring(e.to_string()))?;
                        let cfg = YearConfig {
                            year,
                            c_max,
                            epsilon,
                            rewards: base.rewards.with_sd(reward_sd),
                            ..base.clone()
                        };
                        let routing = prepare_routing(stage, &cfg)?;
                        let result = simulate_stage(stage, &routing, &cfg)?;
                        score_result(&result, data).map_err(|e| e.at(year, None))
                    })
                    .collect()
            };
            match run() {
                Ok(years) => SearchCell {
                    c_max,
                    epsilon,
                    reward_sd,
                    score: Some(years.iter().map(|y| y.total).sum()),
                    years,
                    error: None,
                },
                Err(e) => SearchCell {
                    c_max,
                    epsilon,
                    reward_sd,
                    score: None,
                    years: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    out.sort_by(rank);
    Ok(out)
}
