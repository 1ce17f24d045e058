use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use origins_core::bundle::{export_bundle, write_run_artifacts, year_dir, SIMULATION_FILE, INTENSITY_FILE};
use origins_core::config::Config;
use origins_core::grid::IntensityGrid;
use origins_core::kde::{kde2d, KdeSpec};
use origins_core::simulate::{prepare_routing, prepare_year, read_captives_csv, simulate_stage, UNRESOLVED};
use origins_core::GeoData;
use origins_server::{router, BundleStore};
use serde_json::Value;
use tempfile::TempDir;

const YEARS: [i32; 3] = [1824, 1825, 1826];

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn data() -> &'static GeoData {
    static D: OnceLock<GeoData> = OnceLock::new();
    D.get_or_init(|| GeoData::load_dir(fixtures()).unwrap())
}

fn build_bundle(out: &Path) {
    let cfg = Config {
        n_captives: 1500,
        ..Config::default()
    };
    let cov = cfg.covariance.resolve(data()).unwrap();
    let results = TempDir::new().unwrap();
    for y in YEARS {
        let yc = cfg.year_config(y, cov);
        let stage = prepare_year(data(), y, &yc.covariance, &yc.grid).unwrap();
        let routing = prepare_routing(&stage, &yc).unwrap();
        let result = simulate_stage(&stage, &routing, &yc).unwrap();
        write_run_artifacts(&year_dir(results.path(), y), &stage, &routing, &result).unwrap();
    }
    let config = serde_json::to_value(&cfg).unwrap();
    export_bundle(results.path(), data(), &YEARS, config, out).unwrap();
}

/// One bundle shared by every test; tests that need altered content copy it.
fn bundle_dir() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let d = TempDir::new().unwrap();
        build_bundle(d.path());
        d
    })
    .path()
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &to.join(e.file_name()));
        } else {
            std::fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
}

fn spawn(store: BundleStore) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    let store = Arc::new(store);
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(store)).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn server() -> SocketAddr {
    static ADDR: OnceLock<SocketAddr> = OnceLock::new();
    *ADDR.get_or_init(|| spawn(BundleStore::open(bundle_dir()).unwrap()))
}

struct Reply {
    status: u16,
    head: String,
    body: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap()
    }
}

fn request(addr: SocketAddr, path: &str, extra: &str) -> Reply {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\n{extra}Connection: close\r\n\r\n").unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    Reply {
        status,
        head: head.to_string(),
        body: body.to_string(),
    }
}

fn get(path: &str) -> Reply {
    request(server(), path, "")
}

#[test]
fn years_match_directory_listing() {
    let r = get("/api/years");
    assert_eq!(r.status, 200);
    let listed: Vec<i32> = serde_json::from_str(&r.body).unwrap();
    let mut on_disk: Vec<i32> = std::fs::read_dir(bundle_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str()?.parse().ok())
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    assert_eq!(listed, YEARS.to_vec());
}

#[test]
fn empty_store_has_no_years() {
    let d = TempDir::new().unwrap();
    let addr = spawn(BundleStore::open(d.path()).unwrap());
    let r = request(addr, "/api/years", "");
    assert_eq!(r.status, 200);
    assert_eq!(r.body, "[]");
}

fn all_ports(year: i32) -> Vec<String> {
    let meta = get("/api/meta").json();
    meta["ports"][year.to_string()]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_str().unwrap().to_string())
        .collect()
}

fn enc(s: &str) -> String {
    s.replace(' ', "%20")
}

#[test]
fn all_ports_equals_unconditional_kde() {
    let year = 1825;
    let ports = all_ports(year).iter().map(|p| enc(p)).collect::<Vec<_>>().join(",");
    let r = get(&format!("/api/surface?year={year}&ports={ports}&h=1.5"));
    assert_eq!(r.status, 200, "{}", r.body);
    let got: IntensityGrid = serde_json::from_str(&r.body).unwrap();

    let dir = year_dir(bundle_dir(), year);
    let rows = read_captives_csv(std::fs::File::open(dir.join(SIMULATION_FILE)).unwrap()).unwrap();
    let points: Vec<_> = rows
        .iter()
        .filter(|r| r.sale != UNRESOLVED)
        .map(|r| origins_core::PointKm::new(r.x_km, r.y_km))
        .collect();
    let intensity: IntensityGrid =
        serde_json::from_str(&std::fs::read_to_string(dir.join(INTENSITY_FILE)).unwrap()).unwrap();
    let want = kde2d(&points, &KdeSpec::new(1.5, intensity.spec).unwrap()).unwrap();
    assert_eq!(got, want);
}

#[test]
fn surface_argument_errors() {
    let port = enc(&all_ports(1825)[0]);
    assert_eq!(get(&format!("/api/surface?year=1825&ports={port}&h=3")).status, 422);
    assert_eq!(get(&format!("/api/surface?year=1825&ports={port}&h=0.49")).status, 422);
    assert_eq!(get(&format!("/api/surface?year=1825&ports={port}&h=abc")).status, 422);
    assert_eq!(get("/api/surface?year=1825&ports=&h=1").status, 422);
    assert_eq!(get("/api/surface?year=1825&h=1").status, 422);
    assert_eq!(get("/api/surface?year=1825&ports=Atlantis&h=1").status, 422);
    assert_eq!(get(&format!("/api/surface?year=1700&ports={port}&h=1")).status, 404);
    assert_eq!(get(&format!("/api/surface?year=soon&ports={port}")).status, 422);
    let r = get(&format!("/api/surface?year=1825&ports={port}&h=2"));
    assert_eq!(r.status, 200, "{}", r.body);
    let r = get(&format!("/api/surface?year=1825&ports={port}&h=0.5"));
    assert_eq!(r.status, 200, "{}", r.body);
}

#[test]
fn repeated_surface_is_byte_identical() {
    let ports = all_ports(1826);
    let q = format!("/api/surface?year=1826&ports={},{}&h=0.8", enc(&ports[0]), enc(&ports[1]));
    let a = get(&q);
    let b = get(&q);
    assert_eq!(a.status, 200, "{}", a.body);
    assert_eq!(a.body, b.body);
    // port order and duplicates do not change the selection
    let q2 = format!("/api/surface?year=1826&ports={},{},{}&h=0.8", enc(&ports[1]), enc(&ports[0]), enc(&ports[1]));
    assert_eq!(get(&q2).body, a.body);
}

#[test]
fn concurrent_requests_agree() {
    let store = Arc::new(BundleStore::open(bundle_dir()).unwrap());
    let ports = vec![all_ports(1824)[0].clone()];
    let bodies: Vec<Arc<str>> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..6)
            .map(|_| {
                let (store, ports) = (Arc::clone(&store), ports.clone());
                s.spawn(move || store.surface(1824, &ports, 1.0).unwrap())
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(store.cached_surfaces(), 1);
}

#[test]
fn no_matching_captive_is_conflict() {
    let d = TempDir::new().unwrap();
    copy_dir(bundle_dir(), d.path());
    let csv = year_dir(d.path(), 1825).join(SIMULATION_FILE);
    let mut rows = read_captives_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    let port = all_ports(1825)[0].clone();
    for r in rows.iter_mut().filter(|r| r.sale == port) {
        r.sale = UNRESOLVED.into();
    }
    let mut w = csv_writer(&csv);
    for r in &rows {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();
    drop(w);
    let addr = spawn(BundleStore::open(d.path()).unwrap());
    let r = request(addr, &format!("/api/surface?year=1825&ports={}", enc(&port)), "");
    assert_eq!(r.status, 409, "{}", r.body);
    assert!(r.json()["error"].as_str().unwrap().contains(&port));
}

fn csv_writer(path: &Path) -> csv::Writer<std::fs::File> {
    csv::Writer::from_path(path).unwrap()
}

#[test]
fn layers() {
    for kind in ["conflicts", "intensity", "pdf", "contours", "network", "policy", "borders"] {
        let r = get(&format!("/api/layer?year=1825&kind={kind}"));
        assert_eq!(r.status, 200, "{kind}: {}", r.body);
    }
    assert_eq!(get("/api/layer?year=1825&kind=elevation").status, 404);
    assert_eq!(get("/api/layer?year=1600&kind=network").status, 404);
}

#[test]
fn conflicts_layer_is_the_years_events() {
    for y in YEARS {
        let got: BTreeSet<String> = get(&format!("/api/layer?year={y}&kind=conflicts"))
            .json()
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["id"].as_str().unwrap().to_string())
            .collect();
        let want: BTreeSet<String> = data().active_conflicts(y).into_iter().map(|e| e.id).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn network_layer_counts_active_cities() {
    for y in YEARS {
        let net = get(&format!("/api/layer?year={y}&kind=network")).json();
        let active = data().cities.iter().filter(|c| c.exist_from <= y && y <= c.exist_to).count();
        assert_eq!(net["nodes"].as_array().unwrap().len(), active);
    }
}

#[test]
fn contours_of_constant_surface_are_empty() {
    let d = TempDir::new().unwrap();
    copy_dir(bundle_dir(), d.path());
    let path = year_dir(d.path(), 1824).join(INTENSITY_FILE);
    let mut g: IntensityGrid = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    g.values.iter_mut().for_each(|v| *v = 4.0);
    std::fs::write(&path, serde_json::to_string(&g).unwrap()).unwrap();
    let addr = spawn(BundleStore::open(d.path()).unwrap());
    let c = request(addr, "/api/layer?year=1824&kind=contours", "").json();
    let lines: usize = c["levels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["lines"].as_array().unwrap().len())
        .sum();
    assert_eq!(lines, 0);
    // the real surface has ten levels with lines
    let c = get("/api/layer?year=1824&kind=contours").json();
    assert_eq!(c["levels"].as_array().unwrap().len(), 10);
}

#[test]
fn meta_documents_units_and_cors() {
    let r = request(server(), "/api/meta", "Origin: http://localhost:5173\r\n");
    assert_eq!(r.status, 200);
    assert!(r.head.to_ascii_lowercase().contains("access-control-allow-origin: *"), "{}", r.head);
    let m = r.json();
    assert_eq!(m["bandwidth_range_km"], serde_json::json!([0.5, 2.0]));
    assert!(m["units"]["bandwidth_h"].is_string());
    assert_eq!(m["years"], serde_json::json!(YEARS));
    assert_eq!(m["config"]["n_captives"], 1500);
}

#[test]
fn startup_rejects_incomplete_bundle() {
    let d = TempDir::new().unwrap();
    copy_dir(bundle_dir(), d.path());
    std::fs::remove_file(year_dir(d.path(), 1826).join(SIMULATION_FILE)).unwrap();
    let err = BundleStore::open(d.path()).err().expect("missing file must fail");
    assert!(err.to_string().contains(SIMULATION_FILE), "{err}");
}
