use rand::Rng;

use crate::error::{Error, Result};
use crate::geodata::PointKm;
use crate::grid::{GridKind, GridSpec, IntensityGrid};
use crate::rng::rng_from_seed;

/// Clamp negatives to zero and divide by the Riemann sum, giving a grid of
/// kind `pdf`.
pub fn normalize_to_pdf(g: &IntensityGrid) -> Result<IntensityGrid> {
    let clamped: Vec<f64> = g.values.iter().map(|&v| v.max(0.0)).collect();
    let total = clamped.iter().sum::<f64>() * g.spec.cell_area();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Normalization(format!(
            "surface has no positive mass (max value {})",
            g.max()
        )));
    }
    let values = clamped.into_iter().map(|v| v / total).collect();
    IntensityGrid::new(g.spec, GridKind::Pdf, values)
}

/// Inverse-transform sampler over the cells of a pdf grid.
#[derive(Debug, Clone)]
pub struct CellSampler {
    spec: GridSpec,
    cumulative: Vec<f64>,
}

impl CellSampler {
    pub fn new(pdf: &IntensityGrid) -> Result<Self> {
        if pdf.kind != GridKind::Pdf {
            return Err(Error::Domain(format!("sampling needs a pdf grid, got {:?}", pdf.kind)));
        }
        let mut cumulative = Vec::with_capacity(pdf.values.len());
        let mut acc = 0.0;
        for &v in &pdf.values {
            acc += v;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::Domain("pdf grid has no mass".into()));
        }
        Ok(CellSampler {
            spec: pdf.spec,
            cumulative,
        })
    }

    /// A cell by inverse transform on the cumulative masses, then a uniform
    /// position inside it.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> PointKm {
        let total = *self.cumulative.last().expect("non-empty grid");
        let u = rng.random::<f64>() * total;
        // first cell whose cumulative mass exceeds u; zero-mass cells are never chosen
        let cell = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1);
        let s = &self.spec;
        let (ix, iy) = (cell % s.nx, cell / s.nx);
        let jx: f64 = rng.random();
        let jy: f64 = rng.random();
        PointKm::new(s.x_min + (ix as f64 + jx) * s.dx(), s.y_min + (iy as f64 + jy) * s.dy())
    }
}

/// Draw `n` capture points from a pdf grid with one seeded generator.
pub fn sample_origins(pdf: &IntensityGrid, n: usize, seed: u64) -> Result<Vec<PointKm>> {
    let sampler = CellSampler::new(pdf)?;
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}
