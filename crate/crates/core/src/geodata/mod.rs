//! Input datasets, the planar kilometre frame, and region membership.
//!
//! File formats (all UTF-8, decimal degrees):
//!
//! | file            | header / shape                                    |
//! |-----------------|---------------------------------------------------|
//! | `conflicts.csv` | `id,lon,lat,start_year,end_year,intensity`        |
//! | `cities.csv`    | `name,lon,lat,exist_from,exist_to,role`           |
//! | `edges.csv`     | `from,to,directed` (`0` expands to both directions) |
//! | `ports.csv`     | `year,port,count` (`port` may be `UNKNOWN`)       |
//! | `ledgers.csv`   | `ship_id,year,port,region,count` (long form)      |
//! | `regions.json`  | `[{region, year_from, year_to, ring: [[lon,lat],...]}]` |

mod frame;
mod records;
mod region;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

pub use frame::{GeoFrame, LonLat, PointKm, KM_PER_DEG_LAT, KM_PER_DEG_LON_EQUATOR};
pub use records::{
    load_cities, load_conflicts, load_edges, load_ledgers, load_ports, write_cities,
    write_conflicts, write_edges, write_ledgers, write_ports, CityRole, CitySite, ConflictEvent,
    Intensity, PortRecord, ShipLedger, TradeEdge, SALE_CITIES, UNKNOWN_PORT,
};
pub use region::{load_regions, point_in_region, write_regions, RegionPolygon};

use crate::error::{Error, Result};

/// Events active in `year` whose code marks an attack or a destruction.
/// Founded/rebuilt markers are dropped here.
pub fn active_conflicts(events: &[ConflictEvent], year: i32) -> Vec<ConflictEvent> {
    events
        .iter()
        .filter(|e| e.start_year <= year && year <= e.end_year && e.intensity.is_conflict())
        .cloned()
        .collect()
}

/// All datasets for one study region, immutable once loaded.
#[derive(Debug, Clone)]
pub struct GeoData {
    pub conflicts: Vec<ConflictEvent>,
    pub cities: Vec<CitySite>,
    pub edges: Vec<TradeEdge>,
    pub ports: Vec<PortRecord>,
    pub ledgers: Vec<ShipLedger>,
    pub regions: Vec<RegionPolygon>,
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    let path = dir.join(name);
    File::open(&path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

impl GeoData {
    /// Load every dataset from a directory using the standard file names.
    /// `ports.csv`, `ledgers.csv` and `regions.json` are optional.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let conflicts = load_conflicts(open(dir, "conflicts.csv")?)?;
        let cities = load_cities(open(dir, "cities.csv")?)?;
        let edges = load_edges(open(dir, "edges.csv")?, &cities)?;
        let ports = if dir.join("ports.csv").exists() {
            load_ports(open(dir, "ports.csv")?)?
        } else {
            Vec::new()
        };
        let ledgers = if dir.join("ledgers.csv").exists() {
            load_ledgers(open(dir, "ledgers.csv")?)?
        } else {
            Vec::new()
        };
        let regions = if dir.join("regions.json").exists() {
            load_regions(open(dir, "regions.json")?)?
        } else {
            Vec::new()
        };
        Ok(GeoData {
            conflicts,
            cities,
            edges,
            ports,
            ledgers,
            regions,
        })
    }

    /// Projection frame centred on the mean city location.
    pub fn frame(&self) -> Result<GeoFrame> {
        GeoFrame::centroid_of(self.cities.iter().map(|c| LonLat::new(c.lon, c.lat)))
    }

    pub fn active_conflicts(&self, year: i32) -> Vec<ConflictEvent> {
        active_conflicts(&self.conflicts, year)
    }

    pub fn regions_in(&self, year: i32) -> Vec<RegionPolygon> {
        self.regions.iter().filter(|r| r.active_in(year)).cloned().collect()
    }

    /// Projected locations of everything that must fit on the raster.
    pub fn extent_points(&self, frame: &GeoFrame) -> Result<Vec<PointKm>> {
        self.cities
            .iter()
            .map(|c| frame.project(c.lon, c.lat))
            .chain(self.conflicts.iter().map(|e| frame.project(e.lon, e.lat)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(start: i32, end: i32, code: u8) -> ConflictEvent {
        ConflictEvent {
            id: "e".into(),
            lon: 3.0,
            lat: 7.0,
            start_year: start,
            end_year: end,
            intensity: Intensity::try_from(code).unwrap(),
        }
    }

    #[test]
    fn interval_membership() {
        let events = vec![ev(1824, 1826, 5)];
        assert_eq!(active_conflicts(&events, 1825).len(), 1);
        assert_eq!(active_conflicts(&events, 1824).len(), 1);
        assert_eq!(active_conflicts(&events, 1827).len(), 0);
    }

    #[test]
    fn founded_and_rebuilt_excluded() {
        let events = vec![ev(1825, 1825, 0), ev(1825, 1825, 1), ev(1825, 1825, 10)];
        let active = active_conflicts(&events, 1825);
        assert_eq!(active.len(), 1);
        assert_eq!(active[0].intensity, Intensity::Destroyed);
    }

    #[test]
    fn empty_events() {
        assert!(active_conflicts(&[], 1825).is_empty());
    }

    proptest::proptest! {
        #[test]
        fn widening_never_removes(start in 1810i32..1840, len in 0i32..5, widen_lo in 0i32..4, widen_hi in 0i32..4, year in 1805i32..1850) {
            let narrow = vec![ev(start, start + len, 5)];
            let wide = vec![ev(start - widen_lo, start + len + widen_hi, 5)];
            let n = active_conflicts(&narrow, year).len();
            let w = active_conflicts(&wide, year).len();
            proptest::prop_assert!(w >= n);
        }
    }
}
