//! On-disk artifacts.
//!
//! `simulate` writes a results directory with one subdirectory per year
//! holding the run-specific artifacts ([`RUN_FILES`]). `export_bundle` adds
//! the per-year data layers and an index, giving the layout the server
//! loads:
//!
//! ```text
//! <bundle>/bundle.json
//! <bundle>/<year>/conflicts.json intensity.json pdf.json simulation.csv
//!                 network.json policy.json regions.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{ConflictEvent, GeoData, GeoFrame, Intensity, RegionPolygon};
use crate::grid::{GridKind, IntensityGrid};
use crate::kde::{conditional_map, KdeSpec};
use crate::mdp::PolicyExport;
use crate::network::NetworkExport;
use crate::simulate::{read_captives_csv, write_captives_csv, CaptiveRow, ConflictStage, Routing, SimulationResult, UNRESOLVED};

pub const INDEX_FILE: &str = "bundle.json";
pub const CONFLICTS_FILE: &str = "conflicts.json";
pub const INTENSITY_FILE: &str = "intensity.json";
pub const PDF_FILE: &str = "pdf.json";
pub const SIMULATION_FILE: &str = "simulation.csv";
pub const NETWORK_FILE: &str = "network.json";
pub const POLICY_FILE: &str = "policy.json";
pub const REGIONS_FILE: &str = "regions.json";

/// Written per year by a simulation run.
pub const RUN_FILES: [&str; 5] = [INTENSITY_FILE, PDF_FILE, SIMULATION_FILE, NETWORK_FILE, POLICY_FILE];

/// Every file of a bundle year directory.
pub const YEAR_FILES: [&str; 7] = [
    CONFLICTS_FILE,
    INTENSITY_FILE,
    PDF_FILE,
    SIMULATION_FILE,
    NETWORK_FILE,
    POLICY_FILE,
    REGIONS_FILE,
];

/// Accepted KDE bandwidths for interactive conditional maps, km.
pub const BANDWIDTH_RANGE: (f64, f64) = (0.5, 2.0);

/// A conflict event as shown on the map, with its projected position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictPoint {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub x_km: f64,
    pub y_km: f64,
    pub intensity: Intensity,
}

impl ConflictPoint {
    pub fn from_event(e: &ConflictEvent, frame: &GeoFrame) -> Result<Self> {
        let p = frame.project(e.lon, e.lat)?;
        Ok(ConflictPoint {
            id: e.id.clone(),
            lon: e.lon,
            lat: e.lat,
            x_km: p.x,
            y_km: p.y,
            intensity: e.intensity,
        })
    }
}

/// Contents of `bundle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleIndex {
    pub years: Vec<i32>,
    pub frame: GeoFrame,
    /// Configuration snapshot of the run that produced the bundle.
    pub config: serde_json::Value,
    pub units: BTreeMap<String, String>,
    pub version: String,
}

/// Unit strings advertised to clients.
pub fn default_units() -> BTreeMap<String, String> {
    [
        ("coordinates", "x_km/y_km on a local equirectangular plane (see frame); lon/lat in degrees"),
        ("grid", "cell-centre raster, row-major from (x_min, y_min); values per km^2 for pdf and kde kinds"),
        ("intensity", "kriged conflict intensity, same scale as event codes (0, 1, 5, 10)"),
        ("bandwidth_h", "km"),
        ("distance_km", "km"),
        ("cost", "km-equivalent travel cost"),
        ("values", "expected return in reward units"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec(value)?;
    fs::write(path, bytes)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = fs::File::open(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn year_dir(root: &Path, year: i32) -> PathBuf {
    root.join(year.to_string())
}

/// Write the run artifacts of one simulated year into `dir`.
pub fn write_run_artifacts(dir: &Path, stage: &ConflictStage, routing: &Routing, result: &SimulationResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(INTENSITY_FILE), &stage.intensity)?;
    write_json(&dir.join(PDF_FILE), &stage.pdf)?;
    let mut csv = Vec::new();
    write_captives_csv(result, &mut csv)?;
    fs::write(dir.join(SIMULATION_FILE), csv)?;
    write_json(&dir.join(NETWORK_FILE), &NetworkExport::new(&stage.network.base, &routing.costs))?;
    let policy = PolicyExport::new(stage.year, &routing.baseline, &routing.baseline_policy, &routing.baseline_values);
    write_json(&dir.join(POLICY_FILE), &policy)?;
    Ok(())
}

/// Assemble a bundle at `out` from the run artifacts under `results` plus
/// the year's conflict and region layers from `data`. Fails naming the first
/// missing artifact before anything is written.
pub fn export_bundle(results: &Path, data: &GeoData, years: &[i32], config: serde_json::Value, out: &Path) -> Result<BundleIndex> {
    let years: BTreeSet<i32> = years.iter().copied().collect();
    if years.is_empty() {
        return Err(Error::Domain("no years to export".into()));
    }
    for &y in &years {
        for f in RUN_FILES {
            let p = year_dir(results, y).join(f);
            if !p.is_file() {
                return Err(Error::MissingArtifact(p.display().to_string()));
            }
        }
    }
    let frame = data.frame()?;
    for &y in &years {
        let dir = year_dir(out, y);
        fs::create_dir_all(&dir)?;
        for f in RUN_FILES {
            let src = year_dir(results, y).join(f);
            if src != dir.join(f) {
                fs::copy(&src, dir.join(f))?;
            }
        }
        let conflicts = data
            .active_conflicts(y)
            .iter()
            .map(|e| ConflictPoint::from_event(e, &frame))
            .collect::<Result<Vec<_>>>()?;
        write_json(&dir.join(CONFLICTS_FILE), &conflicts)?;
        write_json(&dir.join(REGIONS_FILE), &data.regions_in(y))?;
    }
    let index = BundleIndex {
        years: years.into_iter().collect(),
        frame,
        config,
        units: default_units(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&out.join(INDEX_FILE), &index)?;
    Ok(index)
}

/// One loaded, validated bundle year.
#[derive(Debug, Clone)]
pub struct YearBundle {
    pub year: i32,
    pub conflicts: Vec<ConflictPoint>,
    pub intensity: IntensityGrid,
    pub pdf: IntensityGrid,
    pub captives: Vec<CaptiveRow>,
    pub network: NetworkExport,
    pub policy: PolicyExport,
    pub regions: Vec<RegionPolygon>,
}

impl YearBundle {
    pub fn load(dir: &Path, year: i32) -> Result<Self> {
        for f in YEAR_FILES {
            if !dir.join(f).is_file() {
                return Err(Error::MissingArtifact(dir.join(f).display().to_string()));
            }
        }
        let file = fs::File::open(dir.join(SIMULATION_FILE))?;
        let b = YearBundle {
            year,
            conflicts: read_json(&dir.join(CONFLICTS_FILE))?,
            intensity: read_json(&dir.join(INTENSITY_FILE))?,
            pdf: read_json(&dir.join(PDF_FILE))?,
            captives: read_captives_csv(BufReader::new(file))?,
            network: read_json(&dir.join(NETWORK_FILE))?,
            policy: read_json(&dir.join(POLICY_FILE))?,
            regions: read_json(&dir.join(REGIONS_FILE))?,
        };
        b.validate().map_err(|e| e.at(year, None))?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schema(m));
        self.intensity.validate()?;
        self.pdf.validate()?;
        if self.intensity.kind != GridKind::Intensity || self.pdf.kind != GridKind::Pdf {
            return bad("grid kinds must be intensity and pdf".into());
        }
        if self.intensity.spec != self.pdf.spec {
            return bad("intensity and pdf grids differ in geometry".into());
        }
        if self.network.year != self.year || self.policy.year != self.year {
            return bad("network or policy year does not match the directory".into());
        }
        let nodes: BTreeSet<&str> = self.network.nodes.iter().map(|n| n.name.as_str()).collect();
        if let Some(e) = self
            .network
            .edges
            .iter()
            .find(|e| !nodes.contains(e.from.as_str()) || !nodes.contains(e.to.as_str()))
        {
            return bad(format!("network edge {} - {} names an unknown node", e.from, e.to));
        }
        let ports = self.sale_ports();
        for c in &self.captives {
            if c.sale != UNRESOLVED && !ports.contains(&c.sale) {
                return bad(format!("captive {} sold at `{}`, not a sale city", c.captive_id, c.sale));
            }
            if !nodes.contains(c.entry_node.as_str()) {
                return bad(format!("captive {} enters at unknown node `{}`", c.captive_id, c.entry_node));
            }
        }
        if self.policy.values.len() != self.policy.states.len() {
            return bad("policy values and states differ in length".into());
        }
        for r in &self.regions {
            r.validate()?;
        }
        Ok(())
    }

    /// Sale cities of the year's network, sorted.
    pub fn sale_ports(&self) -> BTreeSet<String> {
        self.network
            .nodes
            .iter()
            .filter(|n| n.role.is_sale())
            .map(|n| n.name.clone())
            .collect()
    }

    /// KDE of captives sold at any of `ports`, on the year's study grid.
    pub fn conditional_surface(&self, ports: &BTreeSet<String>, h: f64) -> Result<IntensityGrid> {
        let (lo, hi) = BANDWIDTH_RANGE;
        if !(lo..=hi).contains(&h) {
            return Err(Error::Domain(format!("bandwidth h must lie in [{lo}, {hi}] km, got {h}")));
        }
        if let Some(p) = ports.iter().find(|p| !self.sale_ports().contains(*p)) {
            return Err(Error::Domain(format!("`{p}` is not a point of sale in {}", self.year)));
        }
        conditional_map(&self.captives, ports, &KdeSpec::new(h, self.intensity.spec)?)
    }
}

/// A whole bundle directory. Years are exactly the year-named
/// subdirectories; `bundle.json` is optional.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub root: PathBuf,
    pub index: Option<BundleIndex>,
    pub years: BTreeMap<i32, YearBundle>,
}

impl Bundle {
    pub fn load(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::MissingArtifact(format!("bundle directory {}", root.display())));
        }
        let mut years = BTreeMap::new();
        for entry in fs::read_dir(root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let Some(year) = entry.file_name().to_str().and_then(|s| s.parse::<i32>().ok()) else {
                continue;
            };
            years.insert(year, YearBundle::load(&entry.path(), year)?);
        }
        let index_path = root.join(INDEX_FILE);
        let index: Option<BundleIndex> = index_path.is_file().then(|| read_json(&index_path)).transpose()?;
        if let Some(ix) = &index {
            let listed: BTreeSet<i32> = ix.years.iter().copied().collect();
            let found: BTreeSet<i32> = years.keys().copied().collect();
            if listed != found {
                return Err(Error::Schema(format!(
                    "{INDEX_FILE} lists years {listed:?} but the directory holds {found:?}"
                )));
            }
        }
        Ok(Bundle {
            root: root.to_path_buf(),
            index,
            years,
        })
    }

    pub fn year_list(&self) -> Vec<i32> {
        self.years.keys().copied().collect()
    }
}
