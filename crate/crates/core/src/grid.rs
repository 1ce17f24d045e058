//! Rectangular rasters over the planar frame.
//!
//! Cells are laid out row-major: `values[iy * nx + ix]`, with `ix` running
//! east and `iy` running north from `(x_min, y_min)`. A cell's value applies
//! at its centre.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::PointKm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let spec = GridSpec {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Bounding box of `points`, padded by `pad_km` on every side.
    pub fn covering(points: &[PointKm], pad_km: f64, nx: usize, ny: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("cannot size a grid around zero points".into()));
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        Self::new(x0 - pad_km, x1 + pad_km, y0 - pad_km, y1 + pad_km, nx, ny)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::Domain(format!("invalid grid extent {self:?}")));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Domain(format!(
                "grid needs at least 2x2 cells, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn center(&self, ix: usize, iy: usize) -> PointKm {
        PointKm::new(
            self.x_min + (ix as f64 + 0.5) * self.dx(),
            self.y_min + (iy as f64 + 0.5) * self.dy(),
        )
    }

    pub fn center_of(&self, index: usize) -> PointKm {
        self.center(index % self.nx, index / self.nx)
    }

    pub fn contains(&self, p: PointKm) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Cell holding `p`, if it lies on the grid.
    pub fn cell_of(&self, p: PointKm) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let ix = (((p.x - self.x_min) / self.dx()) as usize).min(self.nx - 1);
        let iy = (((p.y - self.y_min) / self.dy()) as usize).min(self.ny - 1);
        Some((ix, iy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Intensity,
    Pdf,
    Kde,
}

/// A raster of kriged intensity, a normalized density, or a KDE surface.
///
/// The JSON form `{x_min, x_max, y_min, y_max, nx, ny, kind, values}` is the
/// exchange format with the server and UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityGrid {
    #[serde(flatten)]
    pub spec: GridSpec,
    pub kind: GridKind,
    pub values: Vec<f64>,
}

impl IntensityGrid {
    pub fn new(spec: GridSpec, kind: GridKind, values: Vec<f64>) -> Result<Self> {
        let grid = IntensityGrid { spec, kind, values };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.values.len() != self.spec.len() {
            return Err(Error::Domain(format!(
                "grid has {} values for {}x{} cells",
                self.values.len(),
                self.spec.nx,
                self.spec.ny
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("grid value {i} is not finite")));
        }
        if self.kind == GridKind::Pdf {
            if self.values.iter().any(|&v| v < 0.0) {
                return Err(Error::Domain("pdf grid has negative values".into()));
            }
            let total = self.integral();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::Domain(format!("pdf grid integrates to {total}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.spec.index(ix, iy)]
    }

    /// Riemann sum of the cell values.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_area()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index of the largest value (first one on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best % self.spec.nx, best / self.spec.nx)
    }

    /// Bilinear interpolation between cell centres; constant extrapolation
    /// in the half-cell border. `None` outside the grid extent.
    pub fn sample(&self, p: PointKm) -> Option<f64> {
        let s = &self.spec;
        if !s.contains(p) {
            return None;
        }
        let fx = ((p.x - s.x_min) / s.dx() - 0.5).clamp(0.0, (s.nx - 1) as f64);
        let fy = ((p.y - s.y_min) / s.dy() - 0.5).clamp(0.0, (s.ny - 1) as f64);
        let ix = (fx.floor() as usize).min(s.nx - 2);
        let iy = (fy.floor() as usize).min(s.ny - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = self.get(ix, iy);
        let v10 = self.get(ix + 1, iy);
        let v01 = self.get(ix, iy + 1);
        let v11 = self.get(ix + 1, iy + 1);
        Some(
            v00 * (1.0 - tx) * (1.0 - ty)
                + v10 * tx * (1.0 - ty)
                + v01 * (1.0 - tx) * ty
                + v11 * tx * ty,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let grid: IntensityGrid = serde_json::from_str(s)?;
        grid.validate()?;
        Ok(grid)
    }
}
