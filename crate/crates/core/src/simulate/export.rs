use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SimulationResult;
use crate::error::{Error, Result};
use crate::geodata::PointKm;
use crate::kde::SaleObservation;

/// Sale token written for trajectories that never reached a sink.
pub const UNRESOLVED: &str = "UNRESOLVED";

/// One line of the simulation CSV
/// (`captive_id,x_km,y_km,lon,lat,entry_node,sale,steps`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptiveRow {
    pub captive_id: usize,
    pub x_km: f64,
    pub y_km: f64,
    pub lon: f64,
    pub lat: f64,
    pub entry_node: String,
    pub sale: String,
    pub steps: usize,
}

impl SaleObservation for CaptiveRow {
    fn capture_point(&self) -> PointKm {
        PointKm::new(self.x_km, self.y_km)
    }

    fn sale(&self) -> Option<&str> {
        (self.sale != UNRESOLVED).then_some(self.sale.as_str())
    }
}

pub fn write_captives_csv(result: &SimulationResult, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for c in &result.captives {
        let ll = result.frame.unproject(c.capture_point)?;
        w.serialize(CaptiveRow {
            captive_id: c.id,
            x_km: c.capture_point.x,
            y_km: c.capture_point.y,
            lon: ll.lon,
            lat: ll.lat,
            entry_node: c.entry_node.clone(),
            sale: c.sale.clone().unwrap_or_else(|| UNRESOLVED.to_string()),
            steps: c.steps(),
        })
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_captives_csv(source: impl Read) -> Result<Vec<CaptiveRow>> {
    let mut r = csv::Reader::from_reader(source);
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                dataset: "simulation",
                line: e.position().map_or(0, |p| p.line()),
                column: "?".into(),
                message: e.to_string(),
            })
        })
        .collect()
}
