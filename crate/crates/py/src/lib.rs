//! Python bindings: load data, krige, simulate, score and query bundles.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use origins_core::bundle::Bundle as CoreBundle;
use origins_core::config::Config as CoreConfig;
use origins_core::contour::contours;
use origins_core::kde::{conditional_map, kde2d, KdeSpec};
use origins_core::simulate::{
    chi_square as core_chi_square, grid_search as core_grid_search, prepare_routing, prepare_year, score_result,
    simulate_stage, write_captives_csv, SimulationResult,
};
use origins_core::surface::CovarianceParams;
use origins_core::{Error, ErrorCategory, GridSpec, IntensityGrid, PointKm};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

create_exception!(origins, OriginsError, PyException, "Numerical or model failure in the pipeline.");

fn err(e: Error) -> PyErr {
    match (e.root(), e.category()) {
        (Error::Config(_) | Error::Domain(_), _) => PyValueError::new_err(e.to_string()),
        (Error::Io(_) | Error::MissingArtifact(_), _) => PyOSError::new_err(e.to_string()),
        (_, ErrorCategory::Data) => PyValueError::new_err(e.to_string()),
        _ => OriginsError::new_err(e.to_string()),
    }
}

/// Run configuration. Keys not given keep their defaults.
#[pyclass(module = "origins")]
struct Config {
    inner: CoreConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(s) => CoreConfig::from_toml_str(s).map_err(err)?,
            None => CoreConfig::default(),
        };
        Ok(Config { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::new(Some(&text))
    }

    #[staticmethod]
    fn defaults_toml() -> String {
        CoreConfig::defaults_toml()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn n_captives(&self) -> usize {
        self.inner.n_captives
    }

    #[setter]
    fn set_n_captives(&mut self, v: usize) -> PyResult<()> {
        self.update(|c| c.n_captives = v)
    }

    #[getter]
    fn c_max(&self) -> f64 {
        self.inner.network.c_max
    }

    #[setter]
    fn set_c_max(&mut self, v: f64) -> PyResult<()> {
        self.update(|c| c.network.c_max = v)
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.mdp.epsilon
    }

    #[setter]
    fn set_epsilon(&mut self, v: f64) -> PyResult<()> {
        self.update(|c| c.mdp.epsilon = v)
    }

    #[getter]
    fn reward_sd(&self) -> f64 {
        self.inner.rewards.sd
    }

    #[setter]
    fn set_reward_sd(&mut self, v: f64) -> PyResult<()> {
        self.update(|c| c.rewards.sd = v)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Config(seed={}, n_captives={}, c_max={}, epsilon={}, reward_sd={})",
            c.seed, c.n_captives, c.network.c_max, c.mdp.epsilon, c.rewards.sd
        )
    }
}

impl Config {
    /// Apply `f` to a copy and keep it only if it still validates.
    fn update(&mut self, f: impl FnOnce(&mut CoreConfig)) -> PyResult<()> {
        let mut next = self.inner.clone();
        f(&mut next);
        next.validate().map_err(err)?;
        self.inner = next;
        Ok(())
    }
}

fn config_or_default(cfg: Option<&Config>) -> CoreConfig {
    cfg.map(|c| c.inner.clone()).unwrap_or_default()
}

/// The input datasets of one data directory.
#[pyclass(module = "origins", frozen)]
struct GeoData {
    inner: origins_core::GeoData,
}

#[pymethods]
impl GeoData {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(GeoData {
            inner: origins_core::GeoData::load_dir(dir).map_err(err)?,
        })
    }

    /// Years with at least one active conflict, sorted.
    fn conflict_years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = (self.inner.conflicts.iter().map(|c| c.start_year).min().unwrap_or(0)
            ..=self.inner.conflicts.iter().map(|c| c.end_year).max().unwrap_or(-1))
            .filter(|&y| !self.inner.active_conflicts(y).is_empty())
            .collect();
        years.dedup();
        years
    }

    /// `(id, lon, lat, intensity)` for every conflict active in `year`.
    fn active_conflicts(&self, year: i32) -> Vec<(String, f64, f64, u8)> {
        self.inner
            .active_conflicts(year)
            .into_iter()
            .map(|c| (c.id.clone(), c.lon, c.lat, c.intensity.code()))
            .collect()
    }

    /// Names of the points of sale that exist in `year`.
    fn sale_cities(&self, year: i32) -> Vec<String> {
        self.inner
            .cities
            .iter()
            .filter(|c| c.role.is_sale() && c.exists_in(year))
            .map(|c| c.name.clone())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "GeoData({} conflicts, {} cities, {} edges)",
            self.inner.conflicts.len(),
            self.inner.cities.len(),
            self.inner.edges.len()
        )
    }
}

/// A raster on the planar km grid, row-major from the south-west cell.
#[pyclass(module = "origins", frozen)]
struct Grid {
    inner: IntensityGrid,
}

#[pymethods]
impl Grid {
    #[getter]
    fn nx(&self) -> usize {
        self.inner.spec.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.spec.ny
    }

    /// `(x_min, x_max, y_min, y_max)` in km.
    #[getter]
    fn extent(&self) -> (f64, f64, f64, f64) {
        let s = &self.inner.spec;
        (s.x_min, s.x_max, s.y_min, s.y_max)
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.inner.kind).to_lowercase()
    }

    /// Values as `ny` rows of `nx`.
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.values.chunks(self.inner.spec.nx).map(<[f64]>::to_vec).collect()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    fn integral(&self) -> f64 {
        self.inner.integral()
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    /// Bilinear value at `(x_km, y_km)`, `None` off the grid.
    fn sample(&self, x_km: f64, y_km: f64) -> Option<f64> {
        self.inner.sample(PointKm::new(x_km, y_km))
    }

    /// Isolines as `[(level, [[(x, y), ...], ...]), ...]`.
    fn contours(&self, levels: Vec<f64>) -> Vec<(f64, Vec<Vec<(f64, f64)>>)> {
        contours(&self.inner, &levels)
            .into_iter()
            .map(|l| (l.level, l.lines.into_iter().map(|line| line.into_iter().map(|[x, y]| (x, y)).collect()).collect()))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Grid {
            inner: IntensityGrid::from_json(s).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Grid({}, {}x{})", self.kind(), self.nx(), self.ny())
    }
}

fn grid(inner: IntensityGrid) -> Grid {
    Grid { inner }
}

/// One simulated year.
#[pyclass(module = "origins", frozen)]
struct Simulation {
    result: SimulationResult,
    spec: GridSpec,
    intensity: IntensityGrid,
    pdf: IntensityGrid,
}

#[pymethods]
impl Simulation {
    #[getter]
    fn year(&self) -> i32 {
        self.result.year()
    }

    #[getter]
    fn port_counts(&self) -> BTreeMap<String, usize> {
        self.result.port_counts.clone()
    }

    #[getter]
    fn unresolved(&self) -> usize {
        self.result.unresolved
    }

    #[getter]
    fn intensity(&self) -> Grid {
        grid(self.intensity.clone())
    }

    #[getter]
    fn pdf(&self) -> Grid {
        grid(self.pdf.clone())
    }

    fn __len__(&self) -> usize {
        self.result.captives.len()
    }

    /// `(id, x_km, y_km, entry_node, sale)` per captive; `sale` is `None`
    /// when the captive was not sold within the step cap.
    fn captives(&self) -> Vec<(usize, f64, f64, String, Option<String>)> {
        self.result
            .captives
            .iter()
            .map(|c| (c.id, c.capture_point.x, c.capture_point.y, c.entry_node.clone(), c.sale.clone()))
            .collect()
    }

    /// KDE of the capture points of captives sold at any of `ports`.
    #[pyo3(signature = (ports, h = 1.0))]
    fn conditional_map(&self, py: Python<'_>, ports: Vec<String>, h: f64) -> PyResult<Grid> {
        let ports: BTreeSet<String> = ports.into_iter().collect();
        let spec = KdeSpec::new(h, self.spec).map_err(err)?;
        py.detach(|| conditional_map(&self.result.captives, &ports, &spec)).map(grid).map_err(err)
    }

    /// χ² against the port totals and ship ledgers in `data`, as a dict with
    /// `ports`, `ships` (either may be `None`) and `total`.
    fn score(&self, data: &GeoData) -> PyResult<BTreeMap<String, Option<f64>>> {
        let s = score_result(&self.result, &data.inner).map_err(err)?;
        Ok(BTreeMap::from([
            ("ports".to_string(), s.ports),
            ("ships".to_string(), s.ships),
            ("total".to_string(), Some(s.total)),
        ]))
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        write_captives_csv(&self.result, file).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Simulation(year={}, captives={}, unresolved={})",
            self.year(),
            self.result.captives.len(),
            self.result.unresolved
        )
    }
}

/// Kriged intensity and capture density for `year` as `(intensity, pdf)`.
#[pyfunction]
#[pyo3(signature = (data, year, config = None))]
fn krig(py: Python<'_>, data: &GeoData, year: i32, config: Option<&Config>) -> PyResult<(Grid, Grid)> {
    let cfg = config_or_default(config);
    py.detach(|| -> origins_core::Result<_> {
        let cov = cfg.covariance.resolve(&data.inner)?;
        let stage = prepare_year(&data.inner, year, &cov, &cfg.grid)?;
        Ok((grid(stage.intensity), grid(stage.pdf)))
    })
    .map_err(err)
}

/// Run both stages for `year`. The GIL is released while simulating.
#[pyfunction]
#[pyo3(signature = (data, year, config = None))]
fn simulate(py: Python<'_>, data: &GeoData, year: i32, config: Option<&Config>) -> PyResult<Simulation> {
    let cfg = config_or_default(config);
    py.detach(|| -> origins_core::Result<Simulation> {
        let cov = cfg.covariance.resolve(&data.inner)?;
        let yc = cfg.year_config(year, cov);
        let stage = prepare_year(&data.inner, year, &yc.covariance, &yc.grid)?;
        let routing = prepare_routing(&stage, &yc)?;
        let result = simulate_stage(&stage, &routing, &yc)?;
        Ok(Simulation {
            result,
            spec: stage.intensity.spec,
            intensity: stage.intensity,
            pdf: stage.pdf,
        })
    })
    .map_err(err)
}

/// Matérn covariance at distance `d_km`; the range sets `a = sqrt(8 nu) / range`.
#[pyfunction]
#[pyo3(signature = (d_km, nu = 5.0, range_km = 10.0, sigma2 = 1.0, tau2 = 0.0, include_nugget = false))]
fn matern_cov(d_km: f64, nu: f64, range_km: f64, sigma2: f64, tau2: f64, include_nugget: bool) -> PyResult<f64> {
    let p = CovarianceParams::new(nu, CovarianceParams::a_for_range(nu, range_km), sigma2, tau2).map_err(err)?;
    origins_core::surface::matern_cov(d_km, &p, include_nugget).map_err(err)
}

/// Gaussian KDE of `points` (km) with bandwidth `h` on an `nx` x `ny` grid
/// spanning `extent = (x_min, x_max, y_min, y_max)`.
#[pyfunction]
fn kde(points: Vec<(f64, f64)>, h: f64, extent: (f64, f64, f64, f64), nx: usize, ny: usize) -> PyResult<Grid> {
    let spec = GridSpec::new(extent.0, extent.1, extent.2, extent.3, nx, ny).map_err(err)?;
    let pts: Vec<PointKm> = points.into_iter().map(|(x, y)| PointKm::new(x, y)).collect();
    kde2d(&pts, &KdeSpec::new(h, spec).map_err(err)?).map(grid).map_err(err)
}

/// Pearson χ² with small-expectation pooling; returns `(statistic, df)`.
#[pyfunction]
fn chi_square(observed: Vec<f64>, expected_probs: Vec<f64>) -> PyResult<(f64, usize)> {
    let c = core_chi_square(&observed, &expected_probs).map_err(err)?;
    Ok((c.statistic, c.df))
}

/// Rank the configured search grid. Each entry is a dict with `c_max`,
/// `epsilon`, `reward_sd`, `score` (`None` for failed cells) and `error`.
#[pyfunction]
#[pyo3(signature = (data, config = None, years = None, n_captives = None))]
fn grid_search(
    py: Python<'_>,
    data: &GeoData,
    config: Option<&Config>,
    years: Option<Vec<i32>>,
    n_captives: Option<usize>,
) -> PyResult<Vec<BTreeMap<String, Py<PyAny>>>> {
    let cfg = config_or_default(config);
    let cells = py
        .detach(|| -> origins_core::Result<_> {
            let cov = cfg.covariance.resolve(&data.inner)?;
            let mut base = cfg.year_config(0, cov);
            base.n_captives = n_captives.unwrap_or(cfg.search.n_captives);
            let years = years.unwrap_or_else(|| cfg.search.years.clone());
            core_grid_search(&cfg.search.grid(), &base, &data.inner, &years)
        })
        .map_err(err)?;
    cells
        .into_iter()
        .map(|c| {
            Ok(BTreeMap::from([
                ("c_max".to_string(), c.c_max.into_pyobject(py)?.into_any().unbind()),
                ("epsilon".to_string(), c.epsilon.into_pyobject(py)?.into_any().unbind()),
                ("reward_sd".to_string(), c.reward_sd.into_pyobject(py)?.into_any().unbind()),
                ("score".to_string(), c.score.into_pyobject(py)?.into_any().unbind()),
                ("error".to_string(), c.error.into_pyobject(py)?.into_any().unbind()),
            ]))
        })
        .collect()
}

/// An exported bundle directory, validated on load.
#[pyclass(module = "origins", frozen)]
struct Bundle {
    inner: CoreBundle,
}

#[pymethods]
impl Bundle {
    #[new]
    fn new(dir: PathBuf) -> PyResult<Self> {
        Ok(Bundle {
            inner: CoreBundle::load(&dir).map_err(err)?,
        })
    }

    fn years(&self) -> Vec<i32> {
        self.inner.year_list()
    }

    fn ports(&self, year: i32) -> PyResult<Vec<String>> {
        Ok(self.year(year)?.sale_ports().into_iter().collect())
    }

    fn intensity(&self, year: i32) -> PyResult<Grid> {
        Ok(grid(self.year(year)?.intensity.clone()))
    }

    /// Conditional origin map for captives sold at any of `ports`.
    #[pyo3(signature = (year, ports, h = 1.0))]
    fn surface(&self, py: Python<'_>, year: i32, ports: Vec<String>, h: f64) -> PyResult<Grid> {
        let y = self.year(year)?;
        let ports: BTreeSet<String> = ports.into_iter().collect();
        py.detach(|| y.conditional_surface(&ports, h)).map(grid).map_err(err)
    }
}

impl Bundle {
    fn year(&self, year: i32) -> PyResult<&origins_core::bundle::YearBundle> {
        self.inner
            .years
            .get(&year)
            .ok_or_else(|| PyValueError::new_err(format!("no bundle for year {year}")))
    }
}

#[pymodule]
fn origins(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("OriginsError", m.py().get_type::<OriginsError>())?;
    m.add_class::<Config>()?;
    m.add_class::<GeoData>()?;
    m.add_class::<Grid>()?;
    m.add_class::<Simulation>()?;
    m.add_class::<Bundle>()?;
    m.add_function(wrap_pyfunction!(krig, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(matern_cov, m)?)?;
    m.add_function(wrap_pyfunction!(kde, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square, m)?)?;
    m.add_function(wrap_pyfunction!(grid_search, m)?)?;
    Ok(())
}
