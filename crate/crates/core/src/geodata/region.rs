use serde::{Deserialize, Serialize};

use super::frame::LonLat;
use crate::error::{Error, Result};

/// A dated region border. The ring is stored closed (first vertex repeated at the end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPolygon {
    pub region: String,
    pub year_from: i32,
    pub year_to: i32,
    #[serde(with = "ring_as_pairs")]
    pub ring: Vec<LonLat>,
}

mod ring_as_pairs {
    use super::LonLat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ring: &[LonLat], s: S) -> Result<S::Ok, S::Error> {
        ring.iter()
            .map(|p| [p.lon, p.lat])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<LonLat>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[lon, lat]| LonLat { lon, lat }).collect())
    }
}

impl RegionPolygon {
    /// Build a polygon, closing the ring if needed and validating it.
    pub fn new(region: impl Into<String>, year_from: i32, year_to: i32, ring: Vec<LonLat>) -> Result<Self> {
        let mut poly = RegionPolygon {
            region: region.into(),
            year_from,
            year_to,
            ring,
        };
        poly.close();
        poly.validate()?;
        Ok(poly)
    }

    fn close(&mut self) {
        if let (Some(first), Some(last)) = (self.ring.first().copied(), self.ring.last().copied()) {
            if first != last {
                self.ring.push(first);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.year_from > self.year_to {
            return Err(Error::Domain(format!(
                "region `{}`: year_from after year_to",
                self.region
            )));
        }
        if self.ring.iter().any(|p| !p.lon.is_finite() || !p.lat.is_finite()) {
            return Err(Error::Domain(format!(
                "region `{}`: non-finite vertex",
                self.region
            )));
        }
        let mut distinct: Vec<LonLat> = Vec::new();
        for p in &self.ring {
            if !distinct.contains(p) {
                distinct.push(*p);
            }
        }
        if distinct.len() < 3 {
            return Err(Error::Domain(format!(
                "region `{}`: ring needs at least 3 distinct vertices",
                self.region
            )));
        }
        if self.ring.first() != self.ring.last() {
            return Err(Error::Domain(format!("region `{}`: ring not closed", self.region)));
        }
        Ok(())
    }

    pub fn active_in(&self, year: i32) -> bool {
        self.year_from <= year && year <= self.year_to
    }

    pub fn contains(&self, point: LonLat) -> Result<bool> {
        point_in_region(point, self)
    }
}

/// Load `regions.json`: a list of `{region, year_from, year_to, ring}` objects.
pub fn load_regions(source: impl std::io::Read) -> Result<Vec<RegionPolygon>> {
    let raw: Vec<RegionPolygon> = serde_json::from_reader(source)?;
    raw.into_iter()
        .map(|r| RegionPolygon::new(r.region, r.year_from, r.year_to, r.ring))
        .collect()
}

pub fn write_regions(sink: impl std::io::Write, regions: &[RegionPolygon]) -> Result<()> {
    serde_json::to_writer_pretty(sink, regions)?;
    Ok(())
}

/// Even-odd ray casting. Points on an edge or vertex count as inside.
pub fn point_in_region(point: LonLat, polygon: &RegionPolygon) -> Result<bool> {
    polygon.validate()?;
    let ring = &polygon.ring;
    let (px, py) = (point.lon, point.lat);
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if on_segment(px, py, a, b) {
            return Ok(true);
        }
        if (a.lat > py) != (b.lat > py) {
            let x_cross = a.lon + (py - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    Ok(inside)
}

fn on_segment(px: f64, py: f64, a: LonLat, b: LonLat) -> bool {
    let cross = (b.lon - a.lon) * (py - a.lat) - (b.lat - a.lat) * (px - a.lon);
    let scale = (b.lon - a.lon).abs() + (b.lat - a.lat).abs();
    if cross.abs() > 1e-12 * scale.max(1.0) {
        return false;
    }
    px >= a.lon.min(b.lon) && px <= a.lon.max(b.lon) && py >= a.lat.min(b.lat) && py <= a.lat.max(b.lat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn ll(lon: f64, lat: f64) -> LonLat {
        LonLat::new(lon, lat)
    }

    fn unit_square() -> RegionPolygon {
        RegionPolygon::new(
            "sq",
            1800,
            1900,
            vec![ll(0.0, 0.0), ll(1.0, 0.0), ll(1.0, 1.0), ll(0.0, 1.0)],
        )
        .unwrap()
    }

    /// Winding number around the ring, counted independently of the ray cast.
    fn winding_number(p: LonLat, ring: &[LonLat]) -> i32 {
        let mut wn = 0;
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            let is_left = (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat);
            if a.lat <= p.lat {
                if b.lat > p.lat && is_left > 0.0 {
                    wn += 1;
                }
            } else if b.lat <= p.lat && is_left < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    #[test]
    fn ring_is_closed_on_construction() {
        let sq = unit_square();
        assert_eq!(sq.ring.len(), 5);
        assert_eq!(sq.ring.first(), sq.ring.last());
    }

    #[test]
    fn centroid_inside_far_point_outside() {
        let sq = unit_square();
        assert!(point_in_region(ll(0.5, 0.5), &sq).unwrap());
        assert!(!point_in_region(ll(11.0, 0.5), &sq).unwrap());
        assert!(!point_in_region(ll(0.5, -10.0), &sq).unwrap());
    }

    #[test]
    fn boundary_counts_as_inside() {
        let sq = unit_square();
        assert!(point_in_region(ll(1.0, 0.5), &sq).unwrap());
        assert!(point_in_region(ll(0.0, 0.0), &sq).unwrap());
        assert!(point_in_region(ll(0.5, 1.0), &sq).unwrap());
    }

    #[test]
    fn degenerate_polygon_rejected() {
        assert!(RegionPolygon::new("d", 0, 1, vec![ll(0.0, 0.0), ll(1.0, 1.0)]).is_err());
        let mut bad = unit_square();
        bad.ring = vec![ll(0.0, 0.0), ll(1.0, 0.0), ll(0.0, 0.0), ll(1.0, 0.0)];
        assert!(matches!(point_in_region(ll(0.2, 0.0), &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn convex_polygon_matches_half_plane_oracle() {
        // counter-clockwise convex hexagon
        let verts = vec![
            ll(2.0, 0.0),
            ll(4.0, 1.0),
            ll(4.5, 3.0),
            ll(3.0, 4.5),
            ll(1.0, 3.5),
            ll(0.5, 1.5),
        ];
        let poly = RegionPolygon::new("hex", 0, 1, verts.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = ll(rng.random_range(-1.0..6.0), rng.random_range(-1.0..6.0));
            let inside_all = (0..verts.len()).all(|i| {
                let a = verts[i];
                let b = verts[(i + 1) % verts.len()];
                (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon) >= 0.0
            });
            assert_eq!(point_in_region(p, &poly).unwrap(), inside_all, "{p:?}");
        }
    }

    #[test]
    fn agrees_with_winding_number_on_concave_polygon() {
        let poly = RegionPolygon::new(
            "c",
            0,
            1,
            vec![
                ll(0.0, 0.0),
                ll(6.0, 0.0),
                ll(6.0, 5.0),
                ll(3.0, 2.0),
                ll(0.0, 5.0),
            ],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let p = ll(rng.random_range(-1.0..7.0), rng.random_range(-1.0..6.0));
            let wn = winding_number(p, &poly.ring) != 0;
            assert_eq!(point_in_region(p, &poly).unwrap(), wn, "{p:?}");
        }
    }

    #[test]
    fn regions_json_round_trip() {
        let src = r#"[{"region":"A","year_from":1816,"year_to":1836,"ring":[[0,0],[1,0],[1,1]]}]"#;
        let regions = load_regions(src.as_bytes()).unwrap();
        assert_eq!(regions[0].ring.len(), 4);
        let mut buf = Vec::new();
        write_regions(&mut buf, &regions).unwrap();
        assert_eq!(load_regions(buf.as_slice()).unwrap(), regions);
    }
}
