use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kilometres per degree of latitude (mean meridional value).
pub const KM_PER_DEG_LAT: f64 = 110.574;
/// Kilometres per degree of longitude at the equator.
pub const KM_PER_DEG_LON_EQUATOR: f64 = 111.320;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub fn new(lon: f64, lat: f64) -> Self {
        LonLat { lon, lat }
    }
}

/// A point in the planar kilometre frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointKm {
    pub x: f64,
    pub y: f64,
}

impl PointKm {
    pub fn new(x: f64, y: f64) -> Self {
        PointKm { x, y }
    }

    pub fn dist(&self, other: &PointKm) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(&self, other: &PointKm) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Equirectangular projection about a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoFrame {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub km_per_deg_lon: f64,
    pub km_per_deg_lat: f64,
}

impl GeoFrame {
    pub fn new(origin_lon: f64, origin_lat: f64, km_per_deg_lon: f64, km_per_deg_lat: f64) -> Result<Self> {
        let frame = GeoFrame {
            origin_lon,
            origin_lat,
            km_per_deg_lon,
            km_per_deg_lat,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// Frame centred on `origin`, with the longitude scale taken at its latitude.
    pub fn centered_at(origin: LonLat) -> Result<Self> {
        Self::new(
            origin.lon,
            origin.lat,
            KM_PER_DEG_LON_EQUATOR * origin.lat.to_radians().cos(),
            KM_PER_DEG_LAT,
        )
    }

    /// Frame centred on the mean of `points`.
    pub fn centroid_of(points: impl IntoIterator<Item = LonLat>) -> Result<Self> {
        let (mut lon, mut lat, mut n) = (0.0, 0.0, 0usize);
        for p in points {
            lon += p.lon;
            lat += p.lat;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Domain("cannot centre a frame on zero points".into()));
        }
        Self::centered_at(LonLat::new(lon / n as f64, lat / n as f64))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.origin_lon.is_finite()
            && self.origin_lat.is_finite()
            && self.km_per_deg_lon.is_finite()
            && self.km_per_deg_lat.is_finite()
            && self.km_per_deg_lon > 0.0
            && self.km_per_deg_lat > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid projection frame {self:?}")))
        }
    }

    pub fn project(&self, lon: f64, lat: f64) -> Result<PointKm> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::Domain(format!("cannot project ({lon}, {lat})")));
        }
        Ok(PointKm {
            x: (lon - self.origin_lon) * self.km_per_deg_lon,
            y: (lat - self.origin_lat) * self.km_per_deg_lat,
        })
    }

    pub fn project_ll(&self, p: LonLat) -> Result<PointKm> {
        self.project(p.lon, p.lat)
    }

    pub fn unproject(&self, p: PointKm) -> Result<LonLat> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::Domain(format!("cannot unproject ({}, {})", p.x, p.y)));
        }
        Ok(LonLat {
            lon: self.origin_lon + p.x / self.km_per_deg_lon,
            lat: self.origin_lat + p.y / self.km_per_deg_lat,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame() -> GeoFrame {
        GeoFrame::new(3.5, 7.8, 110.0, 110.574).unwrap()
    }

    #[test]
    fn origin_maps_to_zero() {
        let p = frame().project(3.5, 7.8).unwrap();
        assert_eq!(p, PointKm::new(0.0, 0.0));
    }

    #[test]
    fn one_degree_east_is_scale_km() {
        let p = frame().project(4.5, 7.8).unwrap();
        assert!((p.x - 110.0).abs() < 1e-12);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn non_finite_input_is_domain_error() {
        assert!(matches!(frame().project(f64::NAN, 1.0), Err(Error::Domain(_))));
        assert!(matches!(
            frame().unproject(PointKm::new(f64::INFINITY, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(GeoFrame::new(0.0, 0.0, -1.0, 110.0).is_err());
        assert!(GeoFrame::new(0.0, 0.0, 110.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(lon in -20.0f64..20.0, lat in -15.0f64..15.0) {
            let f = frame();
            let back = f.unproject(f.project(lon, lat).unwrap()).unwrap();
            // a 1e-9 km tolerance on the projected side
            let p0 = f.project(lon, lat).unwrap();
            let p1 = f.project(back.lon, back.lat).unwrap();
            prop_assert!(p0.dist(&p1) < 1e-9);
            prop_assert!((back.lon - lon).abs() < 1e-9 && (back.lat - lat).abs() < 1e-9);
        }

        #[test]
        fn projection_is_affine(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0, d in -10.0f64..10.0) {
            let f = frame();
            let mid = f.project((a + c) / 2.0, (b + d) / 2.0).unwrap();
            let p = f.project(a, b).unwrap();
            let q = f.project(c, d).unwrap();
            prop_assert!((mid.x - (p.x + q.x) / 2.0).abs() < 1e-12);
            prop_assert!((mid.y - (p.y + q.y) / 2.0).abs() < 1e-12);
        }
    }
}
