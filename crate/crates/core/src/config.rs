//! Run configuration. Every model parameter is a named TOML key; omitted
//! keys take the defaults printed by [`Config::defaults_toml`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::GeoData;
use crate::network::CostMode;
use crate::simulate::{GridConfig, ParamGrid, RewardOverride, RewardSpec, YearConfig};
use crate::surface::{fit_covariance, observations, CovarianceParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovarianceConfig {
    /// Matérn smoothness.
    pub nu: f64,
    /// Inverse range in 1/km. When absent it is derived from `range_km` as
    /// `sqrt(8ν) / range_km`.
    pub a: Option<f64>,
    pub range_km: f64,
    pub sigma2: f64,
    pub tau2: f64,
    /// Year whose events fix `sigma2` and `tau2` by a variogram fit. When
    /// absent the values above are used as given.
    pub fit_year: Option<i32>,
    pub variogram_bins: usize,
    pub variogram_max_km: f64,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        CovarianceConfig {
            nu: 5.0,
            a: None,
            range_km: 10.0,
            sigma2: 30.0,
            tau2: 1.0,
            fit_year: Some(1828),
            variogram_bins: 10,
            variogram_max_km: 40.0,
        }
    }
}

impl CovarianceConfig {
    pub fn inverse_range(&self) -> f64 {
        self.a.unwrap_or_else(|| CovarianceParams::a_for_range(self.nu, self.range_km))
    }

    /// Parameters as configured, or with sill and nugget fitted on
    /// `fit_year` when one is set.
    pub fn resolve(&self, data: &GeoData) -> Result<CovarianceParams> {
        let a = self.inverse_range();
        match self.fit_year {
            None => CovarianceParams::new(self.nu, a, self.sigma2, self.tau2),
            Some(year) => {
                let frame = data.frame()?;
                let events = data.active_conflicts(year);
                if events.is_empty() {
                    return Err(Error::EmptyYear(year));
                }
                let obs = observations(&events, &frame)?;
                fit_covariance(&obs, self.nu, a, self.variogram_bins, self.variogram_max_km).map_err(|e| e.at(year, None))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub c_max: f64,
    pub cost_mode: CostMode,
    pub samples_per_edge: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            c_max: 3.0,
            cost_mode: CostMode::Scaled,
            samples_per_edge: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdpConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub max_steps: usize,
    pub solve_cache: bool,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig {
            epsilon: 0.1,
            gamma: 1.0,
            max_steps: crate::mdp::DEFAULT_MAX_STEPS,
            solve_cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdeConfig {
    pub h: f64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig { h: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub years: Vec<i32>,
    pub c_max: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub reward_sd: Vec<f64>,
    pub n_captives: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            years: vec![1825, 1832],
            c_max: vec![0.0, 3.0, 6.0],
            epsilon: vec![0.0, 0.1, 0.3],
            reward_sd: vec![0.0, 25.0, 100.0],
            n_captives: 1000,
        }
    }
}

impl SearchConfig {
    pub fn grid(&self) -> ParamGrid {
        ParamGrid {
            c_max: self.c_max.clone(),
            epsilon: self.epsilon.clone(),
            reward_sd: self.reward_sd.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub n_captives: usize,
    pub covariance: CovarianceConfig,
    pub grid: GridConfig,
    pub network: NetworkConfig,
    pub mdp: MdpConfig,
    pub rewards: RewardSpec,
    pub kde: KdeConfig,
    pub search: SearchConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 20240611,
            n_captives: 10_000,
            covariance: CovarianceConfig::default(),
            grid: GridConfig::default(),
            network: NetworkConfig::default(),
            mdp: MdpConfig::default(),
            rewards: RewardSpec::default(),
            kde: KdeConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn defaults_toml() -> String {
        Config::default().to_toml().expect("defaults serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        let c = &self.covariance;
        if !(c.nu > 0.0) {
            return bad("covariance.nu", format!("must be > 0, got {}", c.nu));
        }
        if !(c.inverse_range() > 0.0) || !c.inverse_range().is_finite() {
            return bad("covariance.a", "must be > 0 (or give range_km > 0)".into());
        }
        if c.fit_year.is_none() && !(c.sigma2 > 0.0 && c.tau2 >= 0.0) {
            return bad("covariance.sigma2", "need sigma2 > 0 and tau2 >= 0".into());
        }
        if !(self.kde.h > 0.0) {
            return bad("kde.h", format!("must be > 0, got {}", self.kde.h));
        }
        if self.n_captives == 0 {
            return bad("n_captives", "must be >= 1".into());
        }
        if self.search.n_captives == 0 {
            return bad("search.n_captives", "must be >= 1".into());
        }
        self.year_config(0, CovarianceParams::new(c.nu, c.inverse_range(), 1.0, 0.0)?)
            .validate()
    }

    /// Per-year configuration with resolved covariance parameters.
    pub fn year_config(&self, year: i32, covariance: CovarianceParams) -> YearConfig {
        YearConfig {
            year,
            covariance,
            grid: self.grid.clone(),
            c_max: self.network.c_max,
            cost_mode: self.network.cost_mode,
            samples_per_edge: self.network.samples_per_edge,
            epsilon: self.mdp.epsilon,
            gamma: self.mdp.gamma,
            max_steps: self.mdp.max_steps,
            solve_cache: self.mdp.solve_cache,
            rewards: self.rewards.clone(),
            n_captives: self.n_captives,
            seed: self.seed,
        }
    }
}

/// Convenience for tests and callers that build overrides in code.
pub fn reward_override(year: Option<i32>, sink: Option<&str>, mean: Option<f64>, sd: Option<f64>) -> RewardOverride {
    RewardOverride {
        year,
        sink: sink.map(String::from),
        mean,
        sd,
    }
}
