use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimulationResult;
use crate::error::{Error, Result};
use crate::geodata::{point_in_region, GeoFrame, PortRecord, RegionPolygon, ShipLedger};
use crate::kde::SaleObservation;

/// Region token for capture points outside every polygon.
pub const OTHER_REGION: &str = "OTHER";

/// Categories with an expected count below this are pooled.
const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
}

/// Pearson χ² of `observed` counts against `expected_probs`.
///
/// Categories whose expected count `total·p_k` is below 5 are pooled into
/// one rest bucket. The bucket is kept as a category if its own expectation
/// reaches 5; otherwise it is merged into the retained category with the
/// smallest expectation. `df` is the number of final categories minus one.
pub fn chi_square(observed: &[f64], expected_probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected_probs.len() {
        return Err(Error::Domain(format!(
            "{} observed categories for {} probabilities",
            observed.len(),
            expected_probs.len()
        )));
    }
    if observed.iter().chain(expected_probs).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("counts and probabilities must be finite and >= 0".into()));
    }
    let psum: f64 = expected_probs.iter().sum();
    if (psum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("expected probabilities sum to {psum}")));
    }
    let total: f64 = observed.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("observed counts are all zero".into()));
    }
    let mut cats: Vec<(f64, f64)> = Vec::new();
    let (mut rest_o, mut rest_e) = (0.0, 0.0);
    let mut pooled_any = false;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = total * p;
        if e >= MIN_EXPECTED {
            cats.push((o, e));
        } else {
            rest_o += o;
            rest_e += e;
            pooled_any = true;
        }
    }
    if pooled_any {
        if rest_e >= MIN_EXPECTED || cats.is_empty() {
            cats.push((rest_o, rest_e));
        } else {
            let smallest = (0..cats.len())
                .min_by(|&a, &b| cats[a].1.total_cmp(&cats[b].1))
                .expect("non-empty");
            cats[smallest].0 += rest_o;
            cats[smallest].1 += rest_e;
        }
    }
    let statistic = cats
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    Ok(ChiSquare {
        statistic,
        df: cats.len().saturating_sub(1),
    })
}

/// First active region (in list order) containing the point, else
/// [`OTHER_REGION`]. Boundary points count as inside, so a point on a
/// shared border goes to the earlier polygon.
pub fn assign_region<'a>(point: crate::geodata::LonLat, regions: &'a [RegionPolygon]) -> Result<&'a str> {
    for r in regions {
        if point_in_region(point, r)? {
            return Ok(&r.region);
        }
    }
    Ok(OTHER_REGION)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipScore {
    pub ship_id: String,
    pub port: String,
    pub statistic: f64,
    pub df: usize,
    /// Simulated captives sold at the ship's port.
    pub simulated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipScores {
    pub total: f64,
    pub ships: Vec<ShipScore>,
}

/// χ² of each ledger of the result's year against the regional mix of the
/// simulated captives sold at the ledger's port; the total is the sum.
pub fn score_ships(result: &SimulationResult, ledgers: &[ShipLedger], regions: &[RegionPolygon]) -> Result<ShipScores> {
    score_ships_for(&result.captives, &result.frame, result.year(), ledgers, regions)
}

/// [`score_ships`] over any sale records, e.g. rows read back from CSV.
pub fn score_ships_for<T: SaleObservation>(
    records: &[T],
    frame: &GeoFrame,
    year: i32,
    ledgers: &[ShipLedger],
    regions: &[RegionPolygon],
) -> Result<ShipScores> {
    let active: Vec<RegionPolygon> = regions.iter().filter(|r| r.active_in(year)).cloned().collect();
    let mut by_port: BTreeMap<&str, BTreeMap<String, usize>> = BTreeMap::new();
    for c in records {
        if let Some(port) = c.sale() {
            let ll = frame.unproject(c.capture_point())?;
            let region = assign_region(ll, &active)?.to_string();
            *by_port.entry(port).or_default().entry(region).or_default() += 1;
        }
    }
    let mut ships = Vec::new();
    for ledger in ledgers.iter().filter(|l| l.year == year) {
        let model = by_port
            .get(ledger.port.as_str())
            .ok_or_else(|| Error::Scoring(format!("no simulated sales at `{}` (ship {})", ledger.port, ledger.ship_id)))?;
        let simulated: usize = model.values().sum();
        // categories: every modelled region plus every ledger region
        let mut cats: Vec<String> = model.keys().cloned().collect();
        for (r, _) in &ledger.region_counts {
            if !cats.contains(r) {
                cats.push(r.clone());
            }
        }
        let observed: Vec<f64> = cats
            .iter()
            .map(|c| {
                ledger
                    .region_counts
                    .iter()
                    .filter(|(r, _)| r == c)
                    .map(|(_, n)| *n as f64)
                    .sum()
            })
            .collect();
        let probs: Vec<f64> = cats
            .iter()
            .map(|c| model.get(c).copied().unwrap_or(0) as f64 / simulated as f64)
            .collect();
        let chi = chi_square(&observed, &probs)?;
        ships.push(ShipScore {
            ship_id: ledger.ship_id.clone(),
            port: ledger.port.clone(),
            statistic: chi.statistic,
            df: chi.df,
            simulated,
        });
    }
    Ok(ShipScores {
        total: ships.iter().map(|s| s.statistic).sum(),
        ships,
    })
}

/// χ² of simulated sales at the recorded ports against the recorded shares
/// for `year`, renormalized over known ports. Sales at sinks with no record
/// (and `UNKNOWN` rows) do not enter the statistic.
pub fn score_port_totals(result: &SimulationResult, ports: &[PortRecord], year: i32) -> Result<ChiSquare> {
    score_port_counts(&result.port_counts, ports, year)
}

/// [`score_port_totals`] from a sale tally.
pub fn score_port_counts(port_counts: &BTreeMap<String, usize>, ports: &[PortRecord], year: i32) -> Result<ChiSquare> {
    let mut recorded: BTreeMap<&str, u64> = BTreeMap::new();
    for p in ports.iter().filter(|p| p.year == year && !p.is_unknown()) {
        *recorded.entry(p.port.as_str()).or_default() += p.count;
    }
    let known: u64 = recorded.values().sum();
    if recorded.is_empty() || known == 0 {
        return Err(Error::Scoring(format!("no known-port totals recorded for {year}")));
    }
    let observed: Vec<f64> = recorded
        .keys()
        .map(|p| port_counts.get(*p).copied().unwrap_or(0) as f64)
        .collect();
    if observed.iter().all(|&o| o == 0.0) {
        return Err(Error::Scoring(format!("no simulated sales at the recorded ports for {year}")));
    }
    let probs: Vec<f64> = recorded.values().map(|&c| c as f64 / known as f64).collect();
    chi_square(&observed, &probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_is_zero() {
        let c = chi_square(&[20.0, 30.0, 50.0], &[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(c.statistic, 0.0);
        assert_eq!(c.df, 2);
    }

    #[test]
    fn two_categories_by_hand() {
        let c = chi_square(&[10.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_eq!(c.statistic, 10.0);
        assert_eq!(c.df, 1);
    }

    #[test]
    fn small_categories_pool() {
        // E = (45, 45, 6, 4): the last pools; its bucket (4) joins the smallest retained (6)
        let c = chi_square(&[40.0, 50.0, 6.0, 4.0], &[0.45, 0.45, 0.06, 0.04]).unwrap();
        assert_eq!(c.df, 2);
        let want = 25.0 / 45.0 + 25.0 / 45.0 + 0.0;
        assert!((c.statistic - want).abs() < 1e-12);
        // two small categories whose bucket reaches 5 form their own category
        let c = chi_square(&[78.0, 2.0, 8.0, 12.0], &[0.8, 0.04, 0.04, 0.12]).unwrap();
        assert_eq!(c.df, 2);
        let want = 4.0 / 80.0 + 0.0 + 4.0 / 8.0;
        assert!((c.statistic - want).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(chi_square(&[0.0, 0.0], &[0.5, 0.5]).is_err());
        assert!(chi_square(&[1.0, 1.0], &[0.5, 0.6]).is_err());
        assert!(chi_square(&[1.0], &[0.5, 0.5]).is_err());
    }
}
