#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use origins_core::config::Config;
use origins_core::geodata::{CityRole, CitySite, PortRecord, ShipLedger, TradeEdge};
use origins_core::grid::{GridKind, GridSpec, IntensityGrid};
use origins_core::simulate::{assign_region, simulate_year, YearConfig};
use origins_core::surface::CovarianceParams;
use origins_core::{GeoData, GeoFrame, PointKm};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture() -> &'static GeoData {
    static DATA: OnceLock<GeoData> = OnceLock::new();
    DATA.get_or_init(|| GeoData::load_dir(fixtures_dir()).expect("fixture loads"))
}

pub fn fitted_covariance() -> CovarianceParams {
    static COV: OnceLock<CovarianceParams> = OnceLock::new();
    *COV.get_or_init(|| Config::default().covariance.resolve(fixture()).expect("variogram fit"))
}

/// Default per-year configuration with the fitted covariance.
pub fn year_config(year: i32, n: usize, seed: u64) -> YearConfig {
    YearConfig {
        n_captives: n,
        seed,
        ..Config::default().year_config(year, fitted_covariance())
    }
}

pub fn grid_from(nx: usize, ny: usize, kind: GridKind, f: impl Fn(PointKm) -> f64) -> IntensityGrid {
    let spec = GridSpec::new(0.0, nx as f64, 0.0, ny as f64, nx, ny).unwrap();
    let values = (0..spec.len()).map(|i| f(spec.center_of(i))).collect();
    IntensityGrid::new(spec, kind, values).unwrap()
}

/// Two routes from `A` to the port `P`: a short one through `B` and a
/// detour through `C`. One degree is 100 km in the toy frame.
pub struct Toy {
    pub frame: GeoFrame,
    pub cities: Vec<CitySite>,
    pub edges: Vec<TradeEdge>,
}

pub fn toy() -> Toy {
    let city = |name: &str, x: f64, y: f64, role| CitySite {
        name: name.into(),
        lon: x / 100.0,
        lat: y / 100.0,
        exist_from: 1800,
        exist_to: 1900,
        role,
    };
    let edge = |a: &str, b: &str| TradeEdge {
        from: a.into(),
        to: b.into(),
        directed: false,
    };
    Toy {
        frame: GeoFrame::new(0.0, 0.0, 100.0, 100.0).unwrap(),
        cities: vec![
            city("A", 0.0, 0.0, CityRole::Interior),
            city("B", 10.0, 2.0, CityRole::Interior),
            city("C", 10.0, 12.0, CityRole::Interior),
            city("P", 20.0, 0.0, CityRole::SaleAtlantic),
        ],
        edges: vec![edge("A", "B"), edge("B", "P"), edge("A", "C"), edge("C", "P")],
    }
}

/// Conflict surface peaking at the short route's midpoint `B`.
pub fn toy_conflict() -> IntensityGrid {
    let spec = GridSpec::new(-5.0, 25.0, -5.0, 20.0, 120, 100).unwrap();
    let values = (0..spec.len())
        .map(|i| {
            let p = spec.center_of(i);
            10.0 * (-p.dist2(&PointKm::new(10.0, 2.0)) / 8.0).exp()
        })
        .collect();
    IntensityGrid::new(spec, GridKind::Intensity, values).unwrap()
}

pub const RECORDED_PORTS: [&str; 3] = ["Lagos", "Ouidah", "Porto Novo"];

/// Replace the fixture's validation records with ones generated by the
/// model itself at `truth`: port totals from an `n`-captive run per year
/// and two 200-captive ledgers at the busiest recorded port.
pub fn synthetic_truth(truth: &YearConfig, years: &[i32], n: usize) -> GeoData {
    let data = fixture();
    let mut out = data.clone();
    out.ports.clear();
    out.ledgers.clear();
    for &year in years {
        let cfg = YearConfig {
            year,
            n_captives: n,
            ..truth.clone()
        };
        let r = simulate_year(&cfg, data).expect("truth simulation");
        for p in RECORDED_PORTS {
            out.ports.push(PortRecord {
                year,
                port: p.into(),
                count: r.port_counts[p] as u64,
            });
        }
        let busiest = RECORDED_PORTS
            .iter()
            .max_by_key(|p| (r.port_counts[**p], std::cmp::Reverse(**p)))
            .unwrap()
            .to_string();
        let regions = data.regions_in(year);
        let sold: Vec<_> = r.captives.iter().filter(|c| c.sale.as_deref() == Some(busiest.as_str())).collect();
        for (k, chunk) in sold.chunks(200).take(2).enumerate() {
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for c in chunk {
                let ll = r.frame.unproject(c.capture_point).unwrap();
                *counts.entry(assign_region(ll, &regions).unwrap().to_string()).or_default() += 1;
            }
            out.ledgers.push(ShipLedger {
                ship_id: format!("synthetic-{year}-{k}"),
                year,
                port: busiest.clone(),
                region_counts: counts.into_iter().collect(),
            });
        }
    }
    out
}
