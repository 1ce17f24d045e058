//! Gaussian-process machinery for the conflict stage: Matérn covariance,
//! log-density, variogram fitting, simple kriging onto a raster, conversion
//! to a density and inverse-transform sampling of capture locations.

mod bessel;
mod krige;
mod matern;
mod sample;
mod variogram;

pub use bessel::{bessel_k, bessel_k_scaled};
pub use krige::{krig_surface, Kriger};
pub use matern::{
    cov_matrix, gp_log_density, matern_correlation_general, matern_cov, CovarianceParams, MaternKernel,
};
pub use sample::{normalize_to_pdf, sample_origins, CellSampler};
pub use variogram::{empirical_variogram, fit_variogram, model_semivariance, EmpiricalVariogram, VariogramFit};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geodata::{ConflictEvent, GeoFrame, PointKm};

/// A located intensity value (one kriging input).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: PointKm,
    pub value: f64,
}

impl Observation {
    pub fn new(point: PointKm, value: f64) -> Self {
        Observation { point, value }
    }
}

/// Project conflict events into the frame, using the intensity code as the
/// observed value.
pub fn observations(events: &[ConflictEvent], frame: &GeoFrame) -> Result<Vec<Observation>> {
    events
        .iter()
        .map(|e| Ok(Observation::new(frame.project(e.lon, e.lat)?, e.intensity.value())))
        .collect()
}

/// Empirical variogram plus Cressie-weighted fit, returning full parameters
/// with `nu` and `a` held at the given values.
pub fn fit_covariance(obs: &[Observation], nu: f64, a: f64, n_bins: usize, max_dist: f64) -> Result<CovarianceParams> {
    let emp = empirical_variogram(obs, n_bins, max_dist)?;
    let fit = fit_variogram(&emp, nu, a)?;
    // a zero sill is not a usable covariance; keep a tiny positive floor
    let sigma2 = fit.sigma2.max(1e-9 * (fit.sigma2 + fit.tau2).max(1e-9));
    CovarianceParams::new(nu, a, sigma2, fit.tau2)
}
