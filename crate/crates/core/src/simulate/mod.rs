//! The annual pipeline: conflict surface, capture sampling, per-captive
//! reward draws and MDP solves, rollouts, tallies and scores.
//!
//! Every random draw comes from a seed derived from `(seed, year)` and the
//! captive index, so results do not depend on thread count or scheduling.

mod export;
mod score;
mod search;

pub use export::{read_captives_csv, write_captives_csv, CaptiveRow, UNRESOLVED};
pub use score::{
    assign_region, chi_square, score_port_counts, score_port_totals, score_ships, score_ships_for, ChiSquare, ShipScore,
    ShipScores, OTHER_REGION,
};
pub use search::{grid_search, score_records, score_result, ParamGrid, SearchCell, YearScore};

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{ConflictEvent, GeoData, GeoFrame, PointKm};
use crate::grid::{GridSpec, IntensityGrid};
use crate::kde::SaleObservation;
use crate::mdp::{build_mdp, policy_iteration, policy_iteration_from, rollout, MdpModel, Policy, ValueFunction};
use crate::network::{
    augment_with_sales, build_network, conflict_scaled_costs, nearest_node, AugmentedNetwork, CostMode,
    EdgeCostTable,
};
use crate::rng::{rng_from_seed, subseed, Stream};
use crate::surface::{krig_surface, normalize_to_pdf, observations, CellSampler, CovarianceParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub pad_km: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nx: 256,
            ny: 192,
            pad_km: 25.0,
        }
    }
}

/// One reward override. Missing `year` or `sink` matches every year or
/// sink; later overrides win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

/// Sale reward distribution: equal mean and spread at every sink unless
/// overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSpec {
    pub mean: f64,
    pub sd: f64,
    pub overrides: Vec<RewardOverride>,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            mean: 1000.0,
            sd: 25.0,
            overrides: Vec::new(),
        }
    }
}

impl RewardSpec {
    /// Per-sink `(means, sds)` for `year`.
    pub fn resolve(&self, year: i32, sinks: &[String]) -> (Vec<f64>, Vec<f64>) {
        sinks
            .iter()
            .map(|sink| {
                let (mut m, mut s) = (self.mean, self.sd);
                for o in &self.overrides {
                    if o.year.is_none_or(|y| y == year) && o.sink.as_ref().is_none_or(|k| k == sink) {
                        m = o.mean.unwrap_or(m);
                        s = o.sd.unwrap_or(s);
                    }
                }
                (m, s)
            })
            .unzip()
    }

    pub fn with_sd(&self, sd: f64) -> RewardSpec {
        RewardSpec {
            sd,
            overrides: self
                .overrides
                .iter()
                .map(|o| RewardOverride { sd: None, ..o.clone() })
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearConfig {
    pub year: i32,
    pub covariance: CovarianceParams,
    pub grid: GridConfig,
    pub c_max: f64,
    pub cost_mode: CostMode,
    pub samples_per_edge: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub max_steps: usize,
    pub solve_cache: bool,
    pub rewards: RewardSpec,
    pub n_captives: usize,
    pub seed: u64,
}

impl YearConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.n_captives == 0 {
            return bad("n_captives", "must be >= 1".into());
        }
        if self.grid.nx < 2 || self.grid.ny < 2 {
            return bad("grid", format!("need nx, ny >= 2, got {}x{}", self.grid.nx, self.grid.ny));
        }
        if !(self.grid.pad_km >= 0.0) {
            return bad("grid.pad_km", format!("must be >= 0, got {}", self.grid.pad_km));
        }
        if !(self.c_max >= 0.0) || !self.c_max.is_finite() {
            return bad("network.c_max", format!("must be finite and >= 0, got {}", self.c_max));
        }
        if self.samples_per_edge < 2 {
            return bad("network.samples_per_edge", "must be >= 2".into());
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad("mdp.epsilon", format!("must lie in [0, 1), got {}", self.epsilon));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("mdp.gamma", format!("must lie in (0, 1], got {}", self.gamma));
        }
        if self.max_steps == 0 {
            return bad("mdp.max_steps", "must be >= 1".into());
        }
        let r = &self.rewards;
        let sds = std::iter::once(Some(r.sd)).chain(r.overrides.iter().map(|o| o.sd));
        if sds.flatten().any(|s| !(s >= 0.0) || !s.is_finite()) {
            return bad("rewards.sd", "must be finite and >= 0".into());
        }
        let means = std::iter::once(Some(r.mean)).chain(r.overrides.iter().map(|o| o.mean));
        if means.flatten().any(|m| !m.is_finite()) {
            return bad("rewards.mean", "must be finite".into());
        }
        Ok(())
    }

    /// Base seed for this year's random streams.
    pub fn year_seed(&self) -> u64 {
        subseed(self.seed, self.year as i64 as u64, Stream::Year)
    }
}

/// Independent normal draws `mean_k + sd_k·z`, redrawn while below
/// `0.01·mean_k` (clamped there after 1000 attempts).
pub fn draw_rewards(mean: &[f64], sd: &[f64], seed: u64) -> Result<Vec<f64>> {
    if mean.len() != sd.len() {
        return Err(Error::Domain(format!("{} means for {} spreads", mean.len(), sd.len())));
    }
    if let Some(s) = sd.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::Domain(format!("reward spread must be >= 0, got {s}")));
    }
    let mut rng = rng_from_seed(seed);
    Ok(mean
        .iter()
        .zip(sd)
        .map(|(&m, &s)| {
            let floor = 0.01 * m;
            for _ in 0..1000 {
                let z: f64 = rng.sample(StandardNormal);
                let r = m + s * z;
                if r >= floor {
                    return r;
                }
            }
            floor
        })
        .collect())
}

/// Everything about a year that does not depend on routing parameters.
#[derive(Debug, Clone)]
pub struct ConflictStage {
    pub year: i32,
    pub frame: GeoFrame,
    pub events: Vec<ConflictEvent>,
    pub intensity: IntensityGrid,
    pub pdf: IntensityGrid,
    pub sampler: CellSampler,
    pub network: AugmentedNetwork,
}

/// Raster covering every city and conflict in the dataset, identical for
/// all years.
pub fn study_grid(data: &GeoData, frame: &GeoFrame, grid: &GridConfig) -> Result<GridSpec> {
    GridSpec::covering(&data.extent_points(frame)?, grid.pad_km, grid.nx, grid.ny)
}

/// Conflict surface, capture density and augmented network for `year`.
pub fn prepare_year(data: &GeoData, year: i32, covariance: &CovarianceParams, grid: &GridConfig) -> Result<ConflictStage> {
    let run = || -> Result<ConflictStage> {
        let frame = data.frame()?;
        let spec = study_grid(data, &frame, grid)?;
        let events = data.active_conflicts(year);
        if events.is_empty() {
            return Err(Error::EmptyYear(year));
        }
        let obs = observations(&events, &frame)?;
        let intensity = krig_surface(&obs, covariance, &spec, year)?;
        let pdf = normalize_to_pdf(&intensity)?;
        let sampler = CellSampler::new(&pdf)?;
        let net = build_network(&data.cities, &data.edges, year, &frame)?;
        let network = augment_with_sales(&net, &net.sale_cities(), year)?;
        Ok(ConflictStage {
            year,
            frame,
            events,
            intensity,
            pdf,
            sampler,
            network,
        })
    };
    run().map_err(|e| e.at(year, None))
}

/// Edge costs and the mean-reward model for one routing configuration.
#[derive(Debug, Clone)]
pub struct Routing {
    pub costs: EdgeCostTable,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub baseline: MdpModel,
    pub baseline_policy: Policy,
    pub baseline_values: ValueFunction,
}

pub fn prepare_routing(stage: &ConflictStage, cfg: &YearConfig) -> Result<Routing> {
    let run = || -> Result<Routing> {
        cfg.validate()?;
        let aug = &stage.network;
        let costs = conflict_scaled_costs(&aug.base, &stage.intensity, cfg.c_max, cfg.samples_per_edge, cfg.cost_mode)?;
        let sinks: Vec<String> = aug.sinks.iter().map(|s| s.name.clone()).collect();
        let (means, sds) = cfg.rewards.resolve(stage.year, &sinks);
        let baseline = build_mdp(aug, &costs, &means, cfg.epsilon, cfg.gamma)?;
        let (baseline_policy, baseline_values) = policy_iteration(&baseline)?;
        Ok(Routing {
            costs,
            means,
            sds,
            baseline,
            baseline_policy,
            baseline_values,
        })
    };
    run().map_err(|e| e.at(stage.year, None))
}

/// One simulated individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptiveRecord {
    pub id: usize,
    pub capture_point: PointKm,
    pub entry_node: String,
    /// State indices visited, starting at the entry node.
    pub path: Vec<usize>,
    /// Sink (sale city) name, `None` when unresolved.
    pub sale: Option<String>,
    pub reward_draw: Vec<f64>,
}

impl CaptiveRecord {
    pub fn steps(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

impl SaleObservation for CaptiveRecord {
    fn capture_point(&self) -> PointKm {
        self.capture_point
    }

    fn sale(&self) -> Option<&str> {
        self.sale.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: YearConfig,
    pub frame: GeoFrame,
    pub sinks: Vec<String>,
    pub state_names: Vec<String>,
    pub captives: Vec<CaptiveRecord>,
    /// Resolved sales per sink, every sink listed.
    pub port_counts: BTreeMap<String, usize>,
    pub unresolved: usize,
}

impl SimulationResult {
    pub fn year(&self) -> i32 {
        self.config.year
    }

    pub fn resolved(&self) -> usize {
        self.port_counts.values().sum()
    }
}

/// Sales per sink plus the unresolved count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortTally {
    pub counts: BTreeMap<String, usize>,
    pub unresolved: usize,
}

pub fn aggregate_by_port(result: &SimulationResult) -> PortTally {
    tally(&result.sinks, &result.captives)
}

fn tally(sinks: &[String], captives: &[CaptiveRecord]) -> PortTally {
    let mut counts: BTreeMap<String, usize> = sinks.iter().map(|s| (s.clone(), 0)).collect();
    let mut unresolved = 0;
    for c in captives {
        match &c.sale {
            Some(s) => *counts.entry(s.clone()).or_default() += 1,
            None => unresolved += 1,
        }
    }
    PortTally { counts, unresolved }
}

type SolveCache = Mutex<HashMap<Vec<u64>, Arc<Policy>>>;

fn solve_captive(model: &MdpModel, routing: &Routing, key: Vec<u64>, cache: Option<&SolveCache>) -> Result<Arc<Policy>> {
    if let Some(c) = cache {
        if let Some(p) = c.lock().expect("solve cache poisoned").get(&key) {
            return Ok(Arc::clone(p));
        }
    }
    let (policy, _) = policy_iteration_from(model, &routing.baseline_policy)?;
    let policy = Arc::new(policy);
    if let Some(c) = cache {
        c.lock().expect("solve cache poisoned").entry(key).or_insert_with(|| Arc::clone(&policy));
    }
    Ok(policy)
}

/// Captives for a prepared year and routing.
pub fn simulate_stage(stage: &ConflictStage, routing: &Routing, cfg: &YearConfig) -> Result<SimulationResult> {
    cfg.validate().map_err(|e| e.at(stage.year, None))?;
    let aug = &stage.network;
    let n_cities = aug.base.len();
    let base = cfg.year_seed();
    let cache: Option<SolveCache> = cfg.solve_cache.then(|| Mutex::new(HashMap::new()));
    let captives = (0..cfg.n_captives)
        .into_par_iter()
        .with_min_len(16)
        .map(|i| {
            let run = || -> Result<CaptiveRecord> {
                let mut rng = rng_from_seed(subseed(base, i as u64, Stream::Origins));
                let capture_point = stage.sampler.draw(&mut rng);
                let entry = nearest_node(capture_point, &aug.base);
                let rewards = draw_rewards(&routing.means, &routing.sds, subseed(base, i as u64, Stream::Rewards))?;
                let model = build_mdp(aug, &routing.costs, &rewards, cfg.epsilon, cfg.gamma)?;
                let key = rewards.iter().map(|r| r.to_bits()).collect();
                let policy = solve_captive(&model, routing, key, cache.as_ref())?;
                let walk = rollout(&model, &policy, entry, subseed(base, i as u64, Stream::Rollout), cfg.max_steps)?;
                Ok(CaptiveRecord {
                    id: i,
                    capture_point,
                    entry_node: aug.base.nodes[entry].name.clone(),
                    sale: walk.terminal.map(|s| aug.sinks[s - n_cities].name.clone()),
                    path: walk.path,
                    reward_draw: rewards,
                })
            };
            run().map_err(|e| e.at(stage.year, Some(i)))
        })
        .collect::<Result<Vec<_>>>()?;
    let sinks: Vec<String> = aug.sinks.iter().map(|s| s.name.clone()).collect();
    let t = tally(&sinks, &captives);
    Ok(SimulationResult {
        config: cfg.clone(),
        frame: stage.frame,
        state_names: aug.state_names(),
        sinks,
        captives,
        port_counts: t.counts,
        unresolved: t.unresolved,
    })
}

/// Full pipeline for `cfg.year`.
pub fn simulate_year(cfg: &YearConfig, data: &GeoData) -> Result<SimulationResult> {
    cfg.validate().map_err(|e| e.at(cfg.year, None))?;
    let stage = prepare_year(data, cfg.year, &cfg.covariance, &cfg.grid)?;
    let routing = prepare_routing(&stage, cfg)?;
    simulate_stage(&stage, &routing, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_is_the_mean() {
        let m = [10.0, 20.0, 30.0];
        assert_eq!(draw_rewards(&m, &[0.0; 3], 5).unwrap(), m.to_vec());
    }

    #[test]
    fn rewards_deterministic_and_truncated() {
        let a = draw_rewards(&[10.0; 4], &[50.0; 4], 11).unwrap();
        assert_eq!(a, draw_rewards(&[10.0; 4], &[50.0; 4], 11).unwrap());
        assert!(a.iter().all(|&r| r >= 0.1));
        assert!(draw_rewards(&[1.0], &[-1.0], 0).is_err());
        assert!(draw_rewards(&[1.0], &[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn overrides_resolve_in_order() {
        let spec = RewardSpec {
            mean: 100.0,
            sd: 5.0,
            overrides: vec![
                crate::config::reward_override(None, Some("Lagos"), Some(120.0), None),
                crate::config::reward_override(Some(1830), Some("Lagos"), Some(90.0), Some(1.0)),
            ],
        };
        let sinks = vec!["Lagos".to_string(), "Ouidah".to_string()];
        assert_eq!(spec.resolve(1829, &sinks), (vec![120.0, 100.0], vec![5.0, 5.0]));
        assert_eq!(spec.resolve(1830, &sinks), (vec![90.0, 100.0], vec![1.0, 5.0]));
        assert_eq!(spec.with_sd(0.0).resolve(1830, &sinks).1, vec![0.0, 0.0]);
    }
}
