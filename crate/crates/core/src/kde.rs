//! Bivariate Gaussian kernel density estimates on the raster, and
//! conditional origin maps restricted to a set of points of sale.
//!
//! The kernel is the standard isotropic Gaussian
//! `1/(n·2πh²) · exp(−r²/2h²)`, truncated at `6h`, and the result is
//! renormalized so its Riemann sum on the grid is exactly one.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::PointKm;
use crate::grid::{GridKind, GridSpec, IntensityGrid};
use crate::surface::{krig_surface, normalize_to_pdf, CovarianceParams, Observation};

const TRUNCATION: f64 = 6.0;
const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeSpec {
    pub bandwidth_h: f64,
    pub grid: GridSpec,
}

impl KdeSpec {
    pub fn new(bandwidth_h: f64, grid: GridSpec) -> Result<Self> {
        if !(bandwidth_h > 0.0) || !bandwidth_h.is_finite() {
            return Err(Error::Domain(format!("bandwidth must be > 0, got {bandwidth_h}")));
        }
        grid.validate()?;
        Ok(KdeSpec { bandwidth_h, grid })
    }
}

/// Anything that has a capture point and (maybe) a point of sale.
pub trait SaleObservation {
    fn capture_point(&self) -> PointKm;
    /// Sink token, or `None` when the trajectory never reached a sale.
    fn sale(&self) -> Option<&str>;
}

/// 1-D kernel weights for the cell centres within the truncation radius.
fn axis_weights(c: f64, lo: f64, step: f64, n: usize, h: f64) -> (usize, Vec<f64>) {
    let reach = TRUNCATION * h;
    let first = (((c - reach - lo) / step - 0.5).ceil().max(0.0)) as usize;
    let last = (((c + reach - lo) / step - 0.5).floor()).min(n as f64 - 1.0);
    if last < first as f64 {
        return (first, Vec::new());
    }
    let last = last as usize;
    let w = (first..=last)
        .map(|i| {
            let d = lo + (i as f64 + 0.5) * step - c;
            (-0.5 * d * d / (h * h)).exp()
        })
        .collect();
    (first, w)
}

fn splat(points: &[PointKm], spec: &KdeSpec, out: &mut [f64]) {
    let g = &spec.grid;
    let h = spec.bandwidth_h;
    let r2 = (TRUNCATION * h).powi(2);
    for p in points {
        let (x0, wx) = axis_weights(p.x, g.x_min, g.dx(), g.nx, h);
        let (y0, wy) = axis_weights(p.y, g.y_min, g.dy(), g.ny, h);
        for (j, &wyj) in wy.iter().enumerate() {
            let iy = y0 + j;
            let dy = g.y_min + (iy as f64 + 0.5) * g.dy() - p.y;
            let row = &mut out[iy * g.nx..(iy + 1) * g.nx];
            for (i, &wxi) in wx.iter().enumerate() {
                let ix = x0 + i;
                let dx = g.x_min + (ix as f64 + 0.5) * g.dx() - p.x;
                if dx * dx + dy * dy <= r2 {
                    row[ix] += wxi * wyj;
                }
            }
        }
    }
}

/// Gaussian KDE of `points` on `spec.grid`, normalized to integrate to one.
///
/// Points are processed in fixed-size chunks whose partial grids are summed
/// in order, so the output does not depend on the number of worker threads.
pub fn kde2d(points: &[PointKm], spec: &KdeSpec) -> Result<IntensityGrid> {
    if points.is_empty() {
        return Err(Error::EmptyInput("kde needs at least one point".into()));
    }
    let spec = KdeSpec::new(spec.bandwidth_h, spec.grid)?;
    let len = spec.grid.len();
    let partials: Vec<Vec<f64>> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; len];
            splat(chunk, &spec, &mut g);
            g
        })
        .collect();
    let mut values = vec![0.0; len];
    for part in &partials {
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    let h = spec.bandwidth_h;
    let norm = 1.0 / (points.len() as f64 * 2.0 * std::f64::consts::PI * h * h);
    values.iter_mut().for_each(|v| *v *= norm);
    let total = values.iter().sum::<f64>() * spec.grid.cell_area();
    if !(total > 0.0) {
        return Err(Error::Normalization(
            "no kernel mass falls on the grid (points lie outside it)".into(),
        ));
    }
    values.iter_mut().for_each(|v| *v /= total);
    IntensityGrid::new(spec.grid, GridKind::Kde, values)
}

/// Capture points of the records sold at any of `ports`, in input order.
pub fn select_by_sale<'a, T: SaleObservation>(records: &'a [T], ports: &BTreeSet<String>) -> Vec<PointKm> {
    records
        .iter()
        .filter(|r| r.sale().is_some_and(|s| ports.contains(s)))
        .map(|r| r.capture_point())
        .collect()
}

fn selection<T: SaleObservation>(records: &[T], ports: &BTreeSet<String>) -> Result<Vec<PointKm>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no captive records".into()));
    }
    if ports.is_empty() {
        return Err(Error::Domain("at least one point of sale must be selected".into()));
    }
    let points = select_by_sale(records, ports);
    if points.is_empty() {
        let names: Vec<&str> = ports.iter().map(String::as_str).collect();
        return Err(Error::EmptySelection(names.join(", ")));
    }
    Ok(points)
}

/// Density of capture points among records sold at any of `ports`.
pub fn conditional_map<T: SaleObservation>(records: &[T], ports: &BTreeSet<String>, spec: &KdeSpec) -> Result<IntensityGrid> {
    kde2d(&selection(records, ports)?, spec)
}

/// Alternative conditional map: bin the selected capture points onto a
/// coarse grid, krige the bin counts and normalize the result.
pub fn conditional_krige<T: SaleObservation>(
    records: &[T],
    ports: &BTreeSet<String>,
    coarse: &GridSpec,
    params: &CovarianceParams,
    out: &GridSpec,
) -> Result<IntensityGrid> {
    let points = selection(records, ports)?;
    let mut counts = vec![0u32; coarse.len()];
    for p in &points {
        if let Some((ix, iy)) = coarse.cell_of(*p) {
            counts[coarse.index(ix, iy)] += 1;
        }
    }
    let obs: Vec<Observation> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| Observation::new(coarse.center_of(i), c as f64))
        .collect();
    if obs.is_empty() {
        return Err(Error::Coverage("no selected capture point falls on the coarse grid".into()));
    }
    normalize_to_pdf(&krig_surface(&obs, params, out, 0)?)
}
