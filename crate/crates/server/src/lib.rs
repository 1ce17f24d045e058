//! HTTP JSON service over an exported bundle directory.
//!
//! Endpoints:
//!
//! * `GET /api/years` – sorted bundle years
//! * `GET /api/surface?year=&ports=a,b&h=` – conditional origin KDE
//! * `GET /api/layer?year=&kind=` – one of [`Layer`]
//! * `GET /api/meta` – units, ports per year, layers, config echo
//!
//! Layer bodies are rendered once at startup. Surfaces are computed on
//! demand and cached; a cached body is returned byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use origins_core::bundle::{Bundle, BANDWIDTH_RANGE};
use origins_core::contour::default_contours;
use origins_core::Error as CoreError;
use parking_lot::RwLock;
use serde::Serialize;
use tower_http::cors::{Any, CorsLayer};

/// Bandwidth used when a surface request gives no `h`, km.
pub const DEFAULT_BANDWIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Conflicts,
    Intensity,
    Pdf,
    Contours,
    Network,
    Policy,
    Borders,
}

impl Layer {
    pub const ALL: [Layer; 7] = [
        Layer::Conflicts,
        Layer::Intensity,
        Layer::Pdf,
        Layer::Contours,
        Layer::Network,
        Layer::Policy,
        Layer::Borders,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Conflicts => "conflicts",
            Layer::Intensity => "intensity",
            Layer::Pdf => "pdf",
            Layer::Contours => "contours",
            Layer::Network => "network",
            Layer::Policy => "policy",
            Layer::Borders => "borders",
        }
    }
}

impl FromStr for Layer {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Layer::ALL.into_iter().find(|l| l.name() == s).ok_or(())
    }
}

/// An error response: status plus `{"error": message}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(m: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, m)
    }

    fn invalid(m: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, m)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message }).to_string();
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'a str,
    years: Vec<i32>,
    ports: BTreeMap<i32, BTreeSet<String>>,
    layers: Vec<&'static str>,
    bandwidth_range_km: [f64; 2],
    default_bandwidth_km: f64,
    units: BTreeMap<String, String>,
    frame: Option<origins_core::GeoFrame>,
    config: Option<&'a serde_json::Value>,
}

#[derive(Serialize)]
struct ContourLayer {
    levels: Vec<origins_core::contour::ContourLevel>,
}

type SurfaceKey = (i32, Vec<String>, u64);

/// Loaded bundle plus pre-rendered bodies and the surface cache.
pub struct BundleStore {
    bundle: Bundle,
    layers: HashMap<(i32, Layer), Arc<str>>,
    meta: Arc<str>,
    surfaces: RwLock<HashMap<SurfaceKey, Arc<str>>>,
}

impl BundleStore {
    /// Load and validate a bundle directory.
    pub fn open(dir: &Path) -> origins_core::Result<Self> {
        Self::from_bundle(Bundle::load(dir)?)
    }

    pub fn from_bundle(bundle: Bundle) -> origins_core::Result<Self> {
        let mut layers = HashMap::new();
        for (&year, y) in &bundle.years {
            for layer in Layer::ALL {
                let body = match layer {
                    Layer::Conflicts => serde_json::to_string(&y.conflicts)?,
                    Layer::Intensity => serde_json::to_string(&y.intensity)?,
                    Layer::Pdf => serde_json::to_string(&y.pdf)?,
                    Layer::Contours => serde_json::to_string(&ContourLayer {
                        levels: default_contours(&y.intensity),
                    })?,
                    Layer::Network => serde_json::to_string(&y.network)?,
                    Layer::Policy => serde_json::to_string(&y.policy)?,
                    Layer::Borders => serde_json::to_string(&y.regions)?,
                };
                layers.insert((year, layer), Arc::from(body));
            }
        }
        let meta = Meta {
            version: env!("CARGO_PKG_VERSION"),
            years: bundle.year_list(),
            ports: bundle.years.iter().map(|(&k, y)| (k, y.sale_ports())).collect(),
            layers: Layer::ALL.iter().map(|l| l.name()).collect(),
            bandwidth_range_km: [BANDWIDTH_RANGE.0, BANDWIDTH_RANGE.1],
            default_bandwidth_km: DEFAULT_BANDWIDTH,
            units: origins_core::bundle::default_units(),
            frame: bundle.index.as_ref().map(|i| i.frame),
            config: bundle.index.as_ref().map(|i| &i.config),
        };
        let meta = Arc::from(serde_json::to_string(&meta)?);
        Ok(BundleStore {
            bundle,
            layers,
            meta,
            surfaces: RwLock::new(HashMap::new()),
        })
    }

    pub fn years(&self) -> Vec<i32> {
        self.bundle.year_list()
    }

    pub fn meta(&self) -> Arc<str> {
        Arc::clone(&self.meta)
    }

    pub fn layer(&self, year: i32, kind: &str) -> Result<Arc<str>, ApiError> {
        self.year(year)?;
        let layer = kind
            .parse::<Layer>()
            .map_err(|_| ApiError::not_found(format!("unknown layer `{kind}`")))?;
        Ok(Arc::clone(&self.layers[&(year, layer)]))
    }

    /// Conditional KDE for captives sold at any of `ports`.
    pub fn surface(&self, year: i32, ports: &[String], h: f64) -> Result<Arc<str>, ApiError> {
        let y = self.year(year)?;
        let (lo, hi) = BANDWIDTH_RANGE;
        if !(lo..=hi).contains(&h) {
            return Err(ApiError::invalid(format!("h must lie in [{lo}, {hi}] km, got {h}")));
        }
        let set: BTreeSet<String> = ports.iter().cloned().collect();
        if set.is_empty() {
            return Err(ApiError::invalid("select at least one point of sale"));
        }
        let known = y.sale_ports();
        if let Some(p) = set.iter().find(|p| !known.contains(*p)) {
            return Err(ApiError::invalid(format!("`{p}` is not a point of sale in {year}")));
        }
        let key = (year, set.iter().cloned().collect(), h.to_bits());
        if let Some(body) = self.surfaces.read().get(&key) {
            return Ok(Arc::clone(body));
        }
        let grid = y.conditional_surface(&set, h).map_err(|e| match e.root() {
            CoreError::EmptySelection(_) => ApiError::new(StatusCode::CONFLICT, e.to_string()),
            CoreError::Domain(_) => ApiError::invalid(e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        })?;
        let body: Arc<str> = serde_json::to_string(&grid)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
            .into();
        // the first complete body stored wins, so every hit is identical
        Ok(Arc::clone(self.surfaces.write().entry(key).or_insert(body)))
    }

    pub fn cached_surfaces(&self) -> usize {
        self.surfaces.read().len()
    }

    fn year(&self, year: i32) -> Result<&origins_core::bundle::YearBundle, ApiError> {
        self.bundle
            .years
            .get(&year)
            .ok_or_else(|| ApiError::not_found(format!("no bundle for year {year}")))
    }
}

fn json(body: Arc<str>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
}

type Params = Query<HashMap<String, String>>;

fn year_param(q: &HashMap<String, String>) -> Result<i32, ApiError> {
    let raw = q.get("year").ok_or_else(|| ApiError::invalid("missing `year`"))?;
    raw.trim()
        .parse()
        .map_err(|_| ApiError::invalid(format!("`year` must be an integer, got `{raw}`")))
}

async fn years(State(store): State<Arc<BundleStore>>) -> Response {
    json(Arc::from(serde_json::to_string(&store.years()).expect("years serialize")))
}

async fn meta(State(store): State<Arc<BundleStore>>) -> Response {
    json(store.meta())
}

async fn layer(State(store): State<Arc<BundleStore>>, Query(q): Params) -> Result<Response, ApiError> {
    let year = year_param(&q)?;
    let kind = q.get("kind").ok_or_else(|| ApiError::invalid("missing `kind`"))?;
    store.layer(year, kind).map(json)
}

async fn surface(State(store): State<Arc<BundleStore>>, Query(q): Params) -> Result<Response, ApiError> {
    let year = year_param(&q)?;
    let h = match q.get("h") {
        None => DEFAULT_BANDWIDTH,
        Some(raw) => raw
            .trim()
            .parse::<f64>()
            .map_err(|_| ApiError::invalid(format!("`h` must be a number, got `{raw}`")))?,
    };
    let ports: Vec<String> = q
        .get("ports")
        .map(|s| s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect())
        .unwrap_or_default();
    let body = tokio::task::spawn_blocking(move || store.surface(year, &ports, h))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(json(body))
}

pub fn router(store: Arc<BundleStore>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET]);
    Router::new()
        .route("/api/years", get(years))
        .route("/api/meta", get(meta))
        .route("/api/layer", get(layer))
        .route("/api/surface", get(surface))
        .layer(cors)
        .with_state(store)
}

/// Serve `store` on `addr` until the process is stopped.
pub async fn serve(store: Arc<BundleStore>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} years on http://{}", store.years().len(), listener.local_addr()?);
    axum::serve(listener, router(store)).await
}
