use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::bessel::bessel_k_scaled;
use crate::error::{Error, Result};
use crate::geodata::PointKm;

/// Matérn covariance parameters. `a` is an inverse range in 1/km; `sigma2`
/// and `tau2` are the sill and nugget in squared intensity units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    pub nu: f64,
    pub a: f64,
    pub sigma2: f64,
    pub tau2: f64,
}

impl CovarianceParams {
    pub fn new(nu: f64, a: f64, sigma2: f64, tau2: f64) -> Result<Self> {
        let p = CovarianceParams { nu, a, sigma2, tau2 };
        p.validate()?;
        Ok(p)
    }

    /// Inverse range giving the correlation length `range_km` under the
    /// `sqrt(8ν)/a` convention (correlation ≈ 0.13 at that distance).
    pub fn a_for_range(nu: f64, range_km: f64) -> f64 {
        (8.0 * nu).sqrt() / range_km
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.nu.is_finite()
            && self.a.is_finite()
            && self.sigma2.is_finite()
            && self.tau2.is_finite()
            && self.nu > 0.0
            && self.a > 0.0
            && self.sigma2 > 0.0
            && self.tau2 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "covariance parameters need nu > 0, a > 0, sigma2 > 0, tau2 >= 0; got {self:?}"
            )))
        }
    }

    pub fn kernel(&self) -> Result<MaternKernel> {
        self.validate()?;
        Ok(MaternKernel::new(*self))
    }
}

#[derive(Debug, Clone, Copy)]
enum Form {
    Half,
    ThreeHalves,
    FiveHalves,
    General { ln_norm: f64 },
}

/// A validated Matérn covariance with the normalizing constant precomputed.
#[derive(Debug, Clone, Copy)]
pub struct MaternKernel {
    pub params: CovarianceParams,
    form: Form,
}

impl MaternKernel {
    fn new(params: CovarianceParams) -> Self {
        let form = match params.nu {
            nu if nu == 0.5 => Form::Half,
            nu if nu == 1.5 => Form::ThreeHalves,
            nu if nu == 2.5 => Form::FiveHalves,
            nu => Form::General {
                ln_norm: (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu),
            },
        };
        MaternKernel { params, form }
    }

    /// Unit-sill correlation at distance `d` km.
    pub fn correlation(&self, d: f64) -> f64 {
        let x = self.params.a * d;
        if x == 0.0 {
            return 1.0;
        }
        match self.form {
            Form::Half => (-x).exp(),
            Form::ThreeHalves => (1.0 + x) * (-x).exp(),
            Form::FiveHalves => (1.0 + x + x * x / 3.0) * (-x).exp(),
            Form::General { ln_norm } => general_correlation(self.params.nu, ln_norm, x),
        }
    }

    /// σ²·k(d), plus τ² when `include_nugget` and `d == 0`.
    pub fn cov(&self, d: f64, include_nugget: bool) -> f64 {
        let c = self.params.sigma2 * self.correlation(d);
        if include_nugget && d == 0.0 {
            c + self.params.tau2
        } else {
            c
        }
    }
}

fn general_correlation(nu: f64, ln_norm: f64, x: f64) -> f64 {
    if x > 1400.0 {
        return 0.0;
    }
    match bessel_k_scaled(nu, x) {
        Some(k) => ((ln_norm + nu * x.ln() - x).exp() * k).min(1.0),
        None => 0.0,
    }
}

/// Matérn correlation through the series/continued-fraction Bessel route,
/// never the half-integer closed forms.
pub fn matern_correlation_general(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let ln_norm = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu);
    general_correlation(nu, ln_norm, x)
}

/// Matérn covariance at distance `d` km.
pub fn matern_cov(d: f64, p: &CovarianceParams, include_nugget: bool) -> Result<f64> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("distance must be finite and >= 0, got {d}")));
    }
    Ok(p.kernel()?.cov(d, include_nugget))
}

/// Covariance matrix over `points` with the nugget on the diagonal.
pub fn cov_matrix(points: &[PointKm], p: &CovarianceParams) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("covariance matrix needs at least one point".into()));
    }
    let kernel = p.kernel()?;
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = kernel.cov(0.0, true);
        for j in 0..i {
            let c = kernel.cov(points[i].dist(&points[j]), false);
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    Ok(m)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigenvalues();
    (eig.min(), eig.max())
}

pub(crate) fn not_positive_definite(m: &DMatrix<f64>, hint: &str) -> Error {
    let (lo, hi) = eigen_range(m);
    Error::Numerical(format!(
        "covariance matrix is not positive definite (eigenvalues in [{lo:.3e}, {hi:.3e}], condition ~{:.3e}){hint}",
        if lo > 0.0 { hi / lo } else { f64::INFINITY }
    ))
}

/// Unnormalized Gaussian log-density −log det C − yᵀ C⁻¹ y, where C is the
/// covariance matrix (nugget included on the diagonal). Uses a Cholesky
/// factorization.
pub fn gp_log_density(y: &[f64], points: &[PointKm], p: &CovarianceParams) -> Result<f64> {
    if y.len() != points.len() {
        return Err(Error::Domain(format!(
            "{} observations for {} locations",
            y.len(),
            points.len()
        )));
    }
    let c = cov_matrix(points, p)?;
    let chol = c
        .clone()
        .cholesky()
        .ok_or_else(|| not_positive_definite(&c, ""))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    Ok(-log_det - yv.dot(&alpha))
}
