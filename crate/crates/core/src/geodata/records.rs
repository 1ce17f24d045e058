//! Typed input records and their CSV / JSON codecs.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel port token for departures whose port was not recorded.
pub const UNKNOWN_PORT: &str = "UNKNOWN";

/// Cities that may carry a point-of-sale role, with the role they must carry.
pub const SALE_CITIES: &[(&str, CityRole)] = &[
    ("Lagos", CityRole::SaleAtlantic),
    ("Porto Novo", CityRole::SaleAtlantic),
    ("Ouidah", CityRole::SaleAtlantic),
    ("Abomey", CityRole::SaleCoastal),
    ("Benin City", CityRole::SaleCoastal),
    ("Djougou", CityRole::SaleSaharan),
    ("Kalama", CityRole::SaleSaharan),
    ("Bussa", CityRole::SaleSaharan),
    ("Ogudu", CityRole::SaleSaharan),
    ("Tsaragi", CityRole::SaleSaharan),
    ("Ogodo", CityRole::SaleSaharan),
];

/// Conflict intensity code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Intensity {
    Founded = 0,
    Rebuilt = 1,
    Attacked = 5,
    Destroyed = 10,
}

impl Intensity {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn value(self) -> f64 {
        f64::from(self.code())
    }

    /// Attack and destruction are the only codes that feed the conflict model.
    pub fn is_conflict(self) -> bool {
        matches!(self, Intensity::Attacked | Intensity::Destroyed)
    }
}

impl TryFrom<u8> for Intensity {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, String> {
        match code {
            0 => Ok(Intensity::Founded),
            1 => Ok(Intensity::Rebuilt),
            5 => Ok(Intensity::Attacked),
            10 => Ok(Intensity::Destroyed),
            other => Err(format!("intensity code {other} not in {{0, 1, 5, 10}}")),
        }
    }
}

impl From<Intensity> for u8 {
    fn from(i: Intensity) -> u8 {
        i.code()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEvent {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub start_year: i32,
    pub end_year: i32,
    pub intensity: Intensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CityRole {
    Interior,
    SaleAtlantic,
    SaleCoastal,
    SaleSaharan,
}

impl CityRole {
    pub fn is_sale(self) -> bool {
        self != CityRole::Interior
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySite {
    pub name: String,
    pub lon: f64,
    pub lat: f64,
    pub exist_from: i32,
    pub exist_to: i32,
    pub role: CityRole,
}

impl CitySite {
    pub fn exists_in(&self, year: i32) -> bool {
        self.exist_from <= year && year <= self.exist_to
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeEdge {
    pub from: String,
    pub to: String,
    #[serde(with = "bool_as_int")]
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortRecord {
    pub year: i32,
    pub port: String,
    pub count: u64,
}

impl PortRecord {
    pub fn is_unknown(&self) -> bool {
        self.port == UNKNOWN_PORT
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShipLedger {
    pub ship_id: String,
    pub year: i32,
    pub port: String,
    /// Region token and observed count, in file order.
    pub region_counts: Vec<(String, u64)>,
}

impl ShipLedger {
    pub fn total(&self) -> u64 {
        self.region_counts.iter().map(|(_, c)| c).sum()
    }
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!(
                "expected 0 or 1, found {other}"
            ))),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct LedgerRow {
    ship_id: String,
    year: i32,
    port: String,
    region: String,
    count: u64,
}

pub(crate) const CONFLICTS_HEADER: &[&str] =
    &["id", "lon", "lat", "start_year", "end_year", "intensity"];
pub(crate) const CITIES_HEADER: &[&str] = &["name", "lon", "lat", "exist_from", "exist_to", "role"];
pub(crate) const EDGES_HEADER: &[&str] = &["from", "to", "directed"];
pub(crate) const PORTS_HEADER: &[&str] = &["year", "port", "count"];
pub(crate) const LEDGERS_HEADER: &[&str] = &["ship_id", "year", "port", "region", "count"];

/// Read every row of a CSV stream into `T`, checking the header and keeping
/// the 1-based line number of each row.
///
/// csv does not report the field for errors raised by a type's own
/// validation (enum tags, coded integers); `coded` names the one column per
/// dataset that can raise them.
fn read_rows<T: DeserializeOwned>(
    dataset: &'static str,
    source: impl Read,
    header: &[&str],
    coded: Option<&str>,
) -> Result<Vec<(u64, T)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let found = reader
        .headers()
        .map_err(|e| csv_error(dataset, header, coded, e))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            dataset,
            line: 1,
            column: "header".into(),
            message: format!(
                "expected `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(dataset, header, coded, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .deserialize::<T>(Some(&found))
            .map_err(|e| csv_error(dataset, header, coded, e))?;
        rows.push((line, row));
    }
    Ok(rows)
}

fn csv_error(dataset: &'static str, header: &[&str], coded: Option<&str>, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Deserialize { err, .. } => {
            let column = err
                .field()
                .and_then(|f| header.get(f as usize).copied())
                .or(coded)
                .unwrap_or("?")
                .to_string();
            Error::Parse {
                dataset,
                line,
                column,
                message: err.kind().to_string(),
            }
        }
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse {
            dataset,
            line,
            column: "row".into(),
            message: format!("expected {expected_len} fields, found {len}"),
        },
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Parse {
            dataset,
            line,
            column: "?".into(),
            message: format!("{other:?}"),
        },
    }
}

fn invariant(dataset: &'static str, line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        dataset,
        line,
        column: column.into(),
        message: message.into(),
    }
}

fn check_finite(dataset: &'static str, line: u64, lon: f64, lat: f64) -> Result<()> {
    if !lon.is_finite() {
        return Err(invariant(dataset, line, "lon", "longitude must be finite"));
    }
    if !lat.is_finite() {
        return Err(invariant(dataset, line, "lat", "latitude must be finite"));
    }
    Ok(())
}

pub fn load_conflicts(source: impl Read) -> Result<Vec<ConflictEvent>> {
    const DS: &str = "conflicts";
    read_rows::<ConflictEvent>(DS, source, CONFLICTS_HEADER, Some("intensity"))?
        .into_iter()
        .map(|(line, ev)| {
            check_finite(DS, line, ev.lon, ev.lat)?;
            if ev.start_year > ev.end_year {
                return Err(invariant(DS, line, "end_year", "start_year after end_year"));
            }
            Ok(ev)
        })
        .collect()
}

pub fn load_cities(source: impl Read) -> Result<Vec<CitySite>> {
    const DS: &str = "cities";
    let rows = read_rows::<CitySite>(DS, source, CITIES_HEADER, Some("role"))?;
    let mut seen = HashSet::new();
    let mut cities = Vec::with_capacity(rows.len());
    for (line, city) in rows {
        check_finite(DS, line, city.lon, city.lat)?;
        if city.exist_from > city.exist_to {
            return Err(invariant(DS, line, "exist_to", "exist_from after exist_to"));
        }
        if !seen.insert(city.name.clone()) {
            return Err(Error::Schema(format!(
                "cities line {line}: duplicate city name `{}`",
                city.name
            )));
        }
        if city.role.is_sale() {
            match SALE_CITIES.iter().find(|(n, _)| *n == city.name) {
                Some((_, role)) if *role == city.role => {}
                Some((_, role)) => {
                    return Err(Error::Schema(format!(
                        "cities line {line}: `{}` must have role {role:?}, found {:?}",
                        city.name, city.role
                    )))
                }
                None => {
                    return Err(Error::Schema(format!(
                        "cities line {line}: `{}` is not a recognised point of sale",
                        city.name
                    )))
                }
            }
        }
        cities.push(city);
    }
    Ok(cities)
}

/// Load trade edges, checking both endpoints against `cities`.
pub fn load_edges(source: impl Read, cities: &[CitySite]) -> Result<Vec<TradeEdge>> {
    const DS: &str = "edges";
    let names: HashSet<&str> = cities.iter().map(|c| c.name.as_str()).collect();
    read_rows::<TradeEdge>(DS, source, EDGES_HEADER, Some("directed"))?
        .into_iter()
        .map(|(line, edge)| {
            for end in [&edge.from, &edge.to] {
                if !names.contains(end.as_str()) {
                    return Err(Error::Reference(format!(
                        "edges line {line}: unknown city `{end}`"
                    )));
                }
            }
            if edge.from == edge.to {
                return Err(Error::Schema(format!(
                    "edges line {line}: self-loop on `{}`",
                    edge.from
                )));
            }
            Ok(edge)
        })
        .collect()
}

pub fn load_ports(source: impl Read) -> Result<Vec<PortRecord>> {
    Ok(read_rows::<PortRecord>("ports", source, PORTS_HEADER, None)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

/// Load long-form ledger rows and group them into one ledger per ship,
/// in order of first appearance.
pub fn load_ledgers(source: impl Read) -> Result<Vec<ShipLedger>> {
    const DS: &str = "ledgers";
    let rows = read_rows::<LedgerRow>(DS, source, LEDGERS_HEADER, None)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ledgers: Vec<ShipLedger> = Vec::new();
    for (line, row) in rows {
        match index.get(&row.ship_id) {
            Some(&i) => {
                let ledger = &mut ledgers[i];
                if ledger.year != row.year || ledger.port != row.port {
                    return Err(Error::Schema(format!(
                        "ledgers line {line}: ship `{}` has inconsistent year/port",
                        row.ship_id
                    )));
                }
                if ledger.region_counts.iter().any(|(r, _)| *r == row.region) {
                    return Err(Error::Schema(format!(
                        "ledgers line {line}: duplicate region `{}` for ship `{}`",
                        row.region, row.ship_id
                    )));
                }
                ledger.region_counts.push((row.region, row.count));
            }
            None => {
                index.insert(row.ship_id.clone(), ledgers.len());
                ledgers.push(ShipLedger {
                    ship_id: row.ship_id,
                    year: row.year,
                    port: row.port,
                    region_counts: vec![(row.region, row.count)],
                });
            }
        }
    }
    if let Some(empty) = ledgers.iter().find(|l| l.total() == 0) {
        return Err(Error::Schema(format!(
            "ledger for ship `{}` has no positive count",
            empty.ship_id
        )));
    }
    Ok(ledgers)
}

fn write_rows<T: Serialize>(sink: impl Write, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    for row in rows {
        w.serialize(row).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Schema(format!("{other:?}")),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_conflicts(sink: impl Write, events: &[ConflictEvent]) -> Result<()> {
    write_rows(sink, events)
}

pub fn write_cities(sink: impl Write, cities: &[CitySite]) -> Result<()> {
    write_rows(sink, cities)
}

pub fn write_edges(sink: impl Write, edges: &[TradeEdge]) -> Result<()> {
    write_rows(sink, edges)
}

pub fn write_ports(sink: impl Write, ports: &[PortRecord]) -> Result<()> {
    write_rows(sink, ports)
}

pub fn write_ledgers(sink: impl Write, ledgers: &[ShipLedger]) -> Result<()> {
    write_rows(
        sink,
        ledgers.iter().flat_map(|l| {
            l.region_counts.iter().map(move |(region, count)| LedgerRow {
                ship_id: l.ship_id.clone(),
                year: l.year,
                port: l.port.clone(),
                region: region.clone(),
                count: *count,
            })
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const CITIES: &str = "name,lon,lat,exist_from,exist_to,role\n\
        Lagos,3.39,6.45,1816,1836,sale_atlantic\n\
        Oyo,3.93,8.85,1816,1836,interior\n";

    #[test]
    fn single_conflict_row() {
        let src = "id,lon,lat,start_year,end_year,intensity\nc1,3.4,7.9,1825,1825,10\n";
        let events = load_conflicts(src.as_bytes()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].intensity, Intensity::Destroyed);
        assert_eq!(events[0].lon, 3.4);
    }

    #[test]
    fn bad_intensity_names_line_and_column() {
        let src = "id,lon,lat,start_year,end_year,intensity\nc1,3.4,7.9,1825,1825,10\nc2,3.4,7.9,1825,1825,7\n";
        match load_conflicts(src.as_bytes()).unwrap_err() {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "intensity");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_number_is_parse_error() {
        let src = "id,lon,lat,start_year,end_year,intensity\nc1,abc,7.9,1825,1825,10\n";
        match load_conflicts(src.as_bytes()).unwrap_err() {
            Error::Parse { line, column, .. } => {
                assert_eq!((line, column.as_str()), (2, "lon"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn reversed_years_rejected() {
        let src = "id,lon,lat,start_year,end_year,intensity\nc1,3.4,7.9,1826,1825,5\n";
        assert!(matches!(load_conflicts(src.as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn wrong_header_rejected() {
        let src = "id,x,y,start_year,end_year,intensity\n";
        assert!(matches!(
            load_conflicts(src.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_city_is_schema_error() {
        let src = format!("{CITIES}Oyo,3.0,8.0,1816,1836,interior\n");
        assert!(matches!(load_cities(src.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn sale_role_restricted_to_known_sale_cities() {
        let src = "name,lon,lat,exist_from,exist_to,role\nOyo,3.93,8.85,1816,1836,sale_atlantic\n";
        assert!(matches!(load_cities(src.as_bytes()), Err(Error::Schema(_))));
        let src = "name,lon,lat,exist_from,exist_to,role\nLagos,3.39,6.45,1816,1836,sale_saharan\n";
        assert!(matches!(load_cities(src.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn edge_to_unknown_city_is_referential_error() {
        let cities = load_cities(CITIES.as_bytes()).unwrap();
        let src = "from,to,directed\nOyo,Ilorin,0\n";
        assert!(matches!(
            load_edges(src.as_bytes(), &cities),
            Err(Error::Reference(_))
        ));
    }

    #[test]
    fn edge_self_loop_rejected() {
        let cities = load_cities(CITIES.as_bytes()).unwrap();
        let src = "from,to,directed\nOyo,Oyo,0\n";
        assert!(matches!(load_edges(src.as_bytes(), &cities), Err(Error::Schema(_))));
    }

    #[test]
    fn directed_flag_must_be_binary() {
        let cities = load_cities(CITIES.as_bytes()).unwrap();
        let src = "from,to,directed\nOyo,Lagos,2\n";
        assert!(matches!(
            load_edges(src.as_bytes(), &cities),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn ledgers_group_by_ship() {
        let src = "ship_id,year,port,region,count\n\
            s1,1832,Lagos,Oyo,3\n\
            s1,1832,Lagos,Egba,0\n\
            s2,1832,Ouidah,Dahomey,5\n";
        let ledgers = load_ledgers(src.as_bytes()).unwrap();
        assert_eq!(ledgers.len(), 2);
        assert_eq!(ledgers[0].region_counts.len(), 2);
        assert_eq!(ledgers[0].total(), 3);

        let zero = "ship_id,year,port,region,count\ns1,1832,Lagos,Oyo,0\n";
        assert!(matches!(load_ledgers(zero.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn unknown_port_rows_kept() {
        let src = "year,port,count\n1820,UNKNOWN,40\n1821,Lagos,3\n";
        let ports = load_ports(src.as_bytes()).unwrap();
        assert!(ports[0].is_unknown());
        assert!(!ports[1].is_unknown());
    }
}
