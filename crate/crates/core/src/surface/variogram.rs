//! Binned empirical semivariogram (method of moments) and a Cressie-weighted
//! fit of sill and nugget with the Matérn shape held fixed.

use serde::{Deserialize, Serialize};

use super::matern::CovarianceParams;
use super::Observation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    pub bin_centers: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    /// Pairs per bin; 0 marks an empty bin.
    pub counts: Vec<usize>,
}

impl EmpiricalVariogram {
    pub fn occupied(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.bin_centers
            .iter()
            .zip(&self.gamma_hat)
            .zip(&self.counts)
            .filter(|(_, &n)| n > 0)
            .map(|((&h, &g), &n)| (h, g, n))
    }
}

/// γ̂(h_j) = Σ (y_i − y_k)² / (2 N_j) over pairs whose separation falls in
/// bin j. Bins split `(0, max_dist]` evenly; coincident pairs go in the first.
pub fn empirical_variogram(obs: &[Observation], n_bins: usize, max_dist: f64) -> Result<EmpiricalVariogram> {
    if obs.len() < 2 {
        return Err(Error::EmptyInput("variogram needs at least two observations".into()));
    }
    if !(max_dist > 0.0) || n_bins == 0 {
        return Err(Error::Domain(format!(
            "variogram needs max_dist > 0 and n_bins >= 1 (got {max_dist}, {n_bins})"
        )));
    }
    let width = max_dist / n_bins as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (i, a) in obs.iter().enumerate() {
        for b in &obs[i + 1..] {
            let d = a.point.dist(&b.point);
            if d > max_dist {
                continue;
            }
            let bin = ((d / width).ceil() as usize).saturating_sub(1).min(n_bins - 1);
            let diff = a.value - b.value;
            sums[bin] += diff * diff;
            counts[bin] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyVariogram { max_dist });
    }
    let gamma_hat = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n > 0 { s / (2.0 * n as f64) } else { 0.0 })
        .collect();
    let bin_centers = (0..n_bins).map(|j| (j as f64 + 0.5) * width).collect();
    Ok(EmpiricalVariogram {
        bin_centers,
        gamma_hat,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit {
    pub sigma2: f64,
    pub tau2: f64,
    pub iterations: usize,
}

/// Model semivariance τ² + σ²(1 − k(h)) with a unit-sill Matérn correlation.
pub fn model_semivariance(h: f64, nu: f64, a: f64, sigma2: f64, tau2: f64) -> f64 {
    let unit = CovarianceParams { nu, a, sigma2: 1.0, tau2: 0.0 };
    let k = unit.kernel().map(|k| k.correlation(h)).unwrap_or(0.0);
    tau2 + sigma2 * (1.0 - k)
}

const MAX_FIT_ITER: usize = 200;
const FIT_TOL: f64 = 1e-12;

/// Fit (σ², τ²) by iteratively reweighted least squares with Cressie weights
/// N_j / γ_model(h_j)², restricted to σ², τ² ≥ 0.
pub fn fit_variogram(emp: &EmpiricalVariogram, nu: f64, a: f64) -> Result<VariogramFit> {
    let unit = CovarianceParams::new(nu, a, 1.0, 0.0)?.kernel()?;
    let bins: Vec<(f64, f64, f64)> = emp
        .occupied()
        .map(|(h, g, n)| (1.0 - unit.correlation(h), g, n as f64))
        .collect();
    if bins.len() < 2 {
        return Err(Error::Domain(format!(
            "variogram fit needs at least 2 occupied bins, found {}",
            bins.len()
        )));
    }
    let scale = bins.iter().map(|b| b.1.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let floor = 1e-12 * scale;
    let mut weights: Vec<f64> = bins.iter().map(|&(_, g, n)| n / g.max(floor).powi(2)).collect();
    let (mut sigma2, mut tau2) = (f64::NAN, f64::NAN);
    for iter in 1..=MAX_FIT_ITER {
        let (s, t) = nnls2(&bins, &weights);
        let converged = (s - sigma2).abs() <= FIT_TOL * (1.0 + s.abs())
            && (t - tau2).abs() <= FIT_TOL * (1.0 + t.abs());
        sigma2 = s;
        tau2 = t;
        if converged {
            return Ok(VariogramFit {
                sigma2,
                tau2,
                iterations: iter,
            });
        }
        for (w, &(f, _, n)) in weights.iter_mut().zip(&bins) {
            *w = n / (tau2 + sigma2 * f).max(floor).powi(2);
        }
    }
    Err(Error::Fit {
        iterations: MAX_FIT_ITER,
        sigma2,
        tau2,
    })
}

/// Weighted least squares for γ ≈ σ²·f + τ² over σ², τ² ≥ 0.
/// `bins` holds (f, γ̂, N) triples.
fn nnls2(bins: &[(f64, f64, f64)], w: &[f64]) -> (f64, f64) {
    let (mut sff, mut sf, mut s1, mut sfy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&(f, y, _), &wi) in bins.iter().zip(w) {
        sff += wi * f * f;
        sf += wi * f;
        s1 += wi;
        sfy += wi * f * y;
        sy += wi * y;
    }
    let objective = |s: f64, t: f64| -> f64 {
        bins.iter()
            .zip(w)
            .map(|(&(f, y, _), &wi)| wi * (s * f + t - y).powi(2))
            .sum()
    };
    let mut candidates = Vec::with_capacity(4);
    let det = sff * s1 - sf * sf;
    if det > 1e-12 * sff * s1 {
        let s = (sfy * s1 - sf * sy) / det;
        let t = (sff * sy - sf * sfy) / det;
        if s >= 0.0 && t >= 0.0 {
            return (s, t);
        }
    }
    if sff > 0.0 {
        candidates.push(((sfy / sff).max(0.0), 0.0));
    }
    if s1 > 0.0 {
        candidates.push((0.0, (sy / s1).max(0.0)));
    }
    candidates.push((0.0, 0.0));
    candidates
        .into_iter()
        .min_by(|a, b| objective(a.0, a.1).total_cmp(&objective(b.0, b.1)))
        .unwrap_or((0.0, 0.0))
}
