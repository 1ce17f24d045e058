use nalgebra::{Cholesky, DVector, Dyn};
use rayon::prelude::*;

use super::matern::{cov_matrix, not_positive_definite, CovarianceParams, MaternKernel};
use super::Observation;
use crate::error::{Error, Result};
use crate::geodata::PointKm;
use crate::grid::{GridKind, GridSpec, IntensityGrid};

/// Factorized simple-kriging system. Prediction at s₀ is
/// σ²k(s₀, s)ᵀ C⁻¹ y with C = σ²K + τ²I.
pub struct Kriger {
    kernel: MaternKernel,
    sites: Vec<PointKm>,
    weights: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Kriger {
    pub fn new(obs: &[Observation], p: &CovarianceParams) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::EmptyInput("kriging needs at least one observation".into()));
        }
        let kernel = p.kernel()?;
        let sites: Vec<PointKm> = obs.iter().map(|o| o.point).collect();
        let c = cov_matrix(&sites, p)?;
        let chol = c
            .clone()
            .cholesky()
            .ok_or_else(|| not_positive_definite(&c, "; coincident sites need a positive nugget (tau2 > 0)"))?;
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.value));
        let weights = chol.solve(&y);
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(not_positive_definite(&c, "; try a positive nugget (tau2 > 0)"));
        }
        Ok(Kriger {
            kernel,
            sites,
            weights,
            chol,
        })
    }

    pub fn predict(&self, s0: PointKm) -> f64 {
        self.sites
            .iter()
            .zip(self.weights.iter())
            .map(|(s, w)| self.kernel.cov(s0.dist(s), false) * w)
            .sum()
    }

    /// Kriging variance σ² − kᵀC⁻¹k at `s0` (without the nugget).
    pub fn variance(&self, s0: PointKm) -> f64 {
        let k = DVector::from_iterator(
            self.sites.len(),
            self.sites.iter().map(|s| self.kernel.cov(s0.dist(s), false)),
        );
        self.kernel.params.sigma2 - k.dot(&self.chol.solve(&k))
    }
}

/// Simple kriging of `obs` at every cell centre of `spec`.
pub fn krig_surface(obs: &[Observation], p: &CovarianceParams, spec: &GridSpec, year: i32) -> Result<IntensityGrid> {
    spec.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyYear(year));
    }
    let kriger = Kriger::new(obs, p)?;
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| kriger.predict(spec.center_of(i)))
        .collect();
    IntensityGrid::new(*spec, GridKind::Intensity, values)
}
