//! Annual trade network, conflict-scaled edge costs and point-of-sale sinks.
//!
//! Node indices follow the order of the city list restricted to the year.
//! After augmentation, sink `k` has state index `n + k`, so every sale
//! action targets an index above all city indices.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{CityRole, CitySite, GeoFrame, PointKm, TradeEdge};
use crate::grid::IntensityGrid;

/// Prefix of sink state names.
pub const SINK_PREFIX: &str = "sale:";

#[derive(Debug, Clone, PartialEq)]
pub struct TradeNetwork {
    pub year: i32,
    pub nodes: Vec<CitySite>,
    pub coords_km: Vec<PointKm>,
    /// Row-major `n × n`; `adjacency[i * n + j]` means `i → j` is traversable.
    pub adjacency: Vec<bool>,
}

impl TradeNetwork {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.len() + j]
    }

    /// Out-neighbours of `i`, ascending.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        (0..n).filter(move |&j| self.adjacency[i * n + j])
    }

    /// Directed edges `(i, j)` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.len();
        (0..n * n).filter(|&k| self.adjacency[k]).map(move |k| (k / n, k % n))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|c| c.name == name)
    }

    pub fn sale_cities(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|c| c.role.is_sale())
            .map(|c| c.name.clone())
            .collect()
    }

    /// Nodes from which no sale-role node is reachable.
    pub fn stranded(&self) -> Vec<usize> {
        let n = self.len();
        let mut reach = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| self.nodes[i].role.is_sale()).collect();
        for &i in &queue {
            reach[i] = true;
        }
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !reach[i] && self.has_edge(i, j) {
                    reach[i] = true;
                    queue.push_back(i);
                }
            }
        }
        (0..n).filter(|&i| !reach[i]).collect()
    }
}

/// Network of the cities existing in `year` and the edges between them.
/// Fails when some node cannot reach any point of sale.
pub fn build_network(cities: &[CitySite], edges: &[TradeEdge], year: i32, frame: &GeoFrame) -> Result<TradeNetwork> {
    let nodes: Vec<CitySite> = cities.iter().filter(|c| c.exists_in(year)).cloned().collect();
    if nodes.is_empty() {
        return Err(Error::EmptyInput(format!("no cities exist in {year}")));
    }
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, c)| (c.name.as_str(), i)).collect();
    let n = nodes.len();
    let mut adjacency = vec![false; n * n];
    for e in edges {
        if let (Some(&i), Some(&j)) = (index.get(e.from.as_str()), index.get(e.to.as_str())) {
            if i == j {
                continue;
            }
            adjacency[i * n + j] = true;
            if !e.directed {
                adjacency[j * n + i] = true;
            }
        }
    }
    let coords_km = nodes
        .iter()
        .map(|c| frame.project(c.lon, c.lat))
        .collect::<Result<Vec<_>>>()?;
    let net = TradeNetwork {
        year,
        nodes,
        coords_km,
        adjacency,
    };
    let stranded = net.stranded();
    if !stranded.is_empty() {
        return Err(Error::Connectivity {
            year,
            stranded: stranded.iter().map(|&i| net.nodes[i].name.clone()).collect(),
        });
    }
    Ok(net)
}

/// How per-edge conflict maxima become cost factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Rescale so the year's largest edge maximum equals `c_max`.
    #[default]
    Scaled,
    /// `c_max · clamp(m / 10, 0, 1)`, comparable across years.
    Absolute,
}

/// Largest intensity code; the absolute mode maps it to `c_max`.
const ABSOLUTE_REFERENCE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCostTable {
    pub n: usize,
    /// `distance · (1 + factor)` on edges, `+∞` elsewhere.
    pub cost: Vec<f64>,
    pub distance_km: Vec<f64>,
    pub conflict_factor: Vec<f64>,
    /// Unscaled maximum of the surface along each edge (`NaN` off edges).
    pub edge_max: Vec<f64>,
}

impl EdgeCostTable {
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.n + j]
    }

    pub fn factor(&self, i: usize, j: usize) -> f64 {
        self.conflict_factor[i * self.n + j]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance_km[i * self.n + j]
    }

    /// Pure-distance costs (no conflict).
    pub fn distance_only(net: &TradeNetwork) -> EdgeCostTable {
        let n = net.len();
        let mut t = EdgeCostTable {
            n,
            cost: vec![f64::INFINITY; n * n],
            distance_km: vec![0.0; n * n],
            conflict_factor: vec![0.0; n * n],
            edge_max: vec![f64::NAN; n * n],
        };
        for (i, j) in net.edges() {
            let d = net.coords_km[i].dist(&net.coords_km[j]);
            t.distance_km[i * n + j] = d;
            t.cost[i * n + j] = d;
            t.edge_max[i * n + j] = 0.0;
        }
        t
    }
}

/// Maximum of `grid` over `samples` equispaced points from `a` to `b`.
pub fn max_along(grid: &IntensityGrid, a: PointKm, b: PointKm, samples: usize) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for k in 0..samples {
        let t = k as f64 / (samples - 1) as f64;
        let p = PointKm::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        let v = grid.sample(p).ok_or_else(|| {
            Error::Coverage(format!("edge sample point ({:.3}, {:.3}) km lies outside the conflict grid", p.x, p.y))
        })?;
        best = best.max(v);
    }
    Ok(best)
}

/// Paint the conflict surface onto every edge: factor from the maximum of
/// the surface along the segment, cost `distance · (1 + factor)`.
pub fn conflict_scaled_costs(
    net: &TradeNetwork,
    conflict: &IntensityGrid,
    c_max: f64,
    samples_per_edge: usize,
    mode: CostMode,
) -> Result<EdgeCostTable> {
    if !(c_max >= 0.0) || !c_max.is_finite() {
        return Err(Error::Domain(format!("c_max must be finite and >= 0, got {c_max}")));
    }
    if samples_per_edge < 2 {
        return Err(Error::Domain(format!("need at least 2 samples per edge, got {samples_per_edge}")));
    }
    let n = net.len();
    let mut table = EdgeCostTable::distance_only(net);
    // sample each unordered pair once, from the lower index, so both
    // directions of an undirected edge see identical sample points
    let pairs: Vec<(usize, usize)> = net.edges().filter(|&(i, j)| i < j || !net.has_edge(j, i)).collect();
    let maxima = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (i.min(j), i.max(j));
            max_along(conflict, net.coords_km[a], net.coords_km[b], samples_per_edge)
        })
        .collect::<Result<Vec<f64>>>()?;
    for (&(i, j), &m) in pairs.iter().zip(&maxima) {
        table.edge_max[i * n + j] = m;
        if net.has_edge(j, i) {
            table.edge_max[j * n + i] = m;
        }
    }
    let edges: Vec<(usize, usize)> = net.edges().collect();
    let top = edges
        .iter()
        .map(|&(i, j)| table.edge_max[i * n + j].max(0.0))
        .fold(0.0, f64::max);
    for &(i, j) in &edges {
        let k = i * n + j;
        let m = table.edge_max[k].max(0.0);
        let f = match mode {
            // m / top is exactly 1 on the busiest edge
            CostMode::Scaled if top > 0.0 => c_max * (m / top),
            CostMode::Scaled => 0.0,
            CostMode::Absolute => c_max * (m / ABSOLUTE_REFERENCE).min(1.0),
        };
        table.conflict_factor[k] = f;
        table.cost[k] = table.distance_km[k] * (1.0 + f);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sink {
    /// Index of the sale city in the base network.
    pub city: usize,
    pub name: String,
}

/// Trade network plus one absorbing sink per point of sale.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedNetwork {
    pub base: TradeNetwork,
    pub sinks: Vec<Sink>,
}

impl AugmentedNetwork {
    pub fn n_states(&self) -> usize {
        self.base.len() + self.sinks.len()
    }

    pub fn sink_state(&self, k: usize) -> usize {
        self.base.len() + k
    }

    pub fn is_sink(&self, state: usize) -> bool {
        state >= self.base.len()
    }

    /// `(city, sink state)` pairs.
    pub fn sale_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sinks.iter().enumerate().map(|(k, s)| (s.city, self.base.len() + k))
    }

    pub fn sink_of_city(&self, city: usize) -> Option<usize> {
        self.sinks.iter().position(|s| s.city == city)
    }

    pub fn sink_index(&self, name: &str) -> Option<usize> {
        self.sinks.iter().position(|s| s.name == name)
    }

    pub fn state_name(&self, state: usize) -> String {
        if self.is_sink(state) {
            format!("{SINK_PREFIX}{}", self.sinks[state - self.base.len()].name)
        } else {
            self.base.nodes[state].name.clone()
        }
    }

    pub fn state_names(&self) -> Vec<String> {
        (0..self.n_states()).map(|s| self.state_name(s)).collect()
    }
}

/// Add an absorbing sink for each named sale city. Existing edges,
/// including those between ports, are kept.
pub fn augment_with_sales(net: &TradeNetwork, sale_cities: &[String], year: i32) -> Result<AugmentedNetwork> {
    let mut sinks = Vec::with_capacity(sale_cities.len());
    for name in sale_cities {
        let city = net.index_of(name).ok_or_else(|| {
            Error::Augmentation(format!("sale city `{name}` is not in the {year} network"))
        })?;
        if sinks.iter().any(|s: &Sink| s.city == city) {
            return Err(Error::Augmentation(format!("sale city `{name}` listed twice")));
        }
        sinks.push(Sink {
            city,
            name: name.clone(),
        });
    }
    if sinks.is_empty() {
        return Err(Error::Augmentation(format!("no sale cities given for {year}")));
    }
    Ok(AugmentedNetwork {
        base: net.clone(),
        sinks,
    })
}

/// Nearest node to `p`; ties go to the lowest index.
pub fn nearest_node(p: PointKm, net: &TradeNetwork) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in net.coords_km.iter().enumerate() {
        let d = p.dist2(c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeExport {
    pub name: String,
    pub lon: f64,
    pub lat: f64,
    pub role: CityRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeExport {
    pub from: String,
    pub to: String,
    pub distance_km: f64,
    pub cost: f64,
}

/// JSON form of the network layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkExport {
    pub year: i32,
    pub nodes: Vec<NodeExport>,
    pub edges: Vec<EdgeExport>,
}

impl NetworkExport {
    pub fn new(net: &TradeNetwork, costs: &EdgeCostTable) -> Self {
        NetworkExport {
            year: net.year,
            nodes: net
                .nodes
                .iter()
                .map(|c| NodeExport {
                    name: c.name.clone(),
                    lon: c.lon,
                    lat: c.lat,
                    role: c.role,
                })
                .collect(),
            edges: net
                .edges()
                .map(|(i, j)| EdgeExport {
                    from: net.nodes[i].name.clone(),
                    to: net.nodes[j].name.clone(),
                    distance_km: costs.distance(i, j),
                    cost: costs.cost(i, j),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridKind, GridSpec};

    fn city(name: &str, lon: f64, role: CityRole) -> CitySite {
        CitySite {
            name: name.into(),
            lon,
            lat: 0.0,
            exist_from: 1816,
            exist_to: 1836,
            role,
        }
    }

    fn edge(a: &str, b: &str, directed: bool) -> TradeEdge {
        TradeEdge {
            from: a.into(),
            to: b.into(),
            directed,
        }
    }

    fn frame() -> GeoFrame {
        GeoFrame::new(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn line() -> (Vec<CitySite>, Vec<TradeEdge>) {
        let cities = vec![
            city("A", 0.0, CityRole::Interior),
            city("B", 4.0, CityRole::Interior),
            city("Lagos", 8.0, CityRole::SaleAtlantic),
        ];
        let edges = vec![edge("A", "B", false), edge("B", "Lagos", false)];
        (cities, edges)
    }

    #[test]
    fn undirected_edges_are_symmetric() {
        let (c, e) = line();
        let net = build_network(&c, &e, 1820, &frame()).unwrap();
        assert!(net.has_edge(0, 1) && net.has_edge(1, 0));
        assert!(!net.has_edge(0, 2));
        assert_eq!(net.neighbors(1).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn year_filter_and_stranding() {
        let (mut c, mut e) = line();
        c[1].exist_to = 1824;
        let net = build_network(&c, &e[..0], 1825, &frame());
        match net {
            Err(Error::Connectivity { stranded, .. }) => assert_eq!(stranded, vec!["A".to_string()]),
            other => panic!("{other:?}"),
        }
        e.push(edge("A", "Lagos", true));
        let net = build_network(&c, &e, 1825, &frame()).unwrap();
        assert_eq!(net.len(), 2);
        assert!(net.has_edge(0, 1) && !net.has_edge(1, 0));
    }

    #[test]
    fn scaled_costs() {
        let (c, e) = line();
        let net = build_network(&c, &e, 1820, &frame()).unwrap();
        let spec = GridSpec::new(-1.0, 9.0, -1.0, 1.0, 10, 2).unwrap();
        let zero = IntensityGrid::new(spec, GridKind::Intensity, vec![0.0; 20]).unwrap();
        let t = conflict_scaled_costs(&net, &zero, 3.0, 50, CostMode::Scaled).unwrap();
        assert_eq!(t.cost(0, 1), 4.0);
        assert_eq!(t.cost(1, 2), 4.0);
        assert!(t.cost(0, 2).is_infinite());

        // conflict only on the east half: edge B–Lagos gets the full factor
        let vals: Vec<f64> = (0..20).map(|i| if i % 10 >= 6 { 2.0 } else { 0.0 }).collect();
        let g = IntensityGrid::new(spec, GridKind::Intensity, vals).unwrap();
        let t = conflict_scaled_costs(&net, &g, 3.0, 100, CostMode::Scaled).unwrap();
        assert_eq!(t.factor(1, 2), 3.0);
        assert_eq!(t.cost(1, 2), 16.0);
        assert_eq!(t.cost(2, 1), t.cost(1, 2));
        assert!(t.factor(0, 1) < 3.0);
        let abs = conflict_scaled_costs(&net, &g, 3.0, 100, CostMode::Absolute).unwrap();
        assert!((abs.factor(1, 2) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn coverage_error() {
        let (c, e) = line();
        let net = build_network(&c, &e, 1820, &frame()).unwrap();
        let spec = GridSpec::new(-1.0, 5.0, -1.0, 1.0, 6, 2).unwrap();
        let g = IntensityGrid::new(spec, GridKind::Intensity, vec![0.0; 12]).unwrap();
        assert!(matches!(
            conflict_scaled_costs(&net, &g, 3.0, 10, CostMode::Scaled),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn augmentation() {
        let (c, e) = line();
        let net = build_network(&c, &e, 1820, &frame()).unwrap();
        let aug = augment_with_sales(&net, &net.sale_cities(), 1820).unwrap();
        assert_eq!(aug.n_states(), 4);
        assert_eq!(aug.state_name(3), "sale:Lagos");
        assert_eq!(aug.sale_edges().collect::<Vec<_>>(), vec![(2, 3)]);
        assert!(matches!(
            augment_with_sales(&net, &["Ouidah".to_string()], 1820),
            Err(Error::Augmentation(_))
        ));
    }

    #[test]
    fn nearest_tie_goes_low() {
        let (c, e) = line();
        let net = build_network(&c, &e, 1820, &frame()).unwrap();
        assert_eq!(nearest_node(PointKm::new(2.0, 0.0), &net), 0);
        assert_eq!(nearest_node(PointKm::new(6.0, 3.0), &net), 1);
        assert_eq!(nearest_node(PointKm::new(8.0, 0.0), &net), 2);
    }
}
