//! Batch prediction table.

use std::io::{Read, Write};

use crate::model::ModelError;
use crate::typology::Typology;

pub const PREDICTION_HEADER: &str = "city_id,name,lat,lon,p_congestion,p_auto,p_transit,p_bike,label_congestion,label_auto,label_transit,label_bike";

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub city_id: String,
    pub name: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    /// Probabilities in [`Typology::ALL`] order.
    pub p: [f64; 4],
    pub label: [bool; 4],
}

impl PredictionRow {
    pub fn probability(&self, t: Typology) -> f64 {
        self.p[t.index()]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Probabilities use the shortest representation that parses back to the
/// same value.
pub fn write_predictions<W: Write>(writer: W, rows: &[PredictionRow]) -> Result<(), ModelError> {
    let fmt = |e: csv::Error| ModelError::Format(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTION_HEADER.split(',')).map_err(fmt)?;
    for r in rows {
        let mut rec = vec![r.city_id.clone(), r.name.clone(), opt(r.lat), opt(r.lon)];
        rec.extend(r.p.iter().map(|p| p.to_string()));
        rec.extend(r.label.iter().map(|&l| if l { "1" } else { "0" }.to_string()));
        w.write_record(&rec).map_err(fmt)?;
    }
    w.flush().map_err(|e| ModelError::Format(e.to_string()))
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRow>, ModelError> {
    let bad = |m: String| ModelError::Format(m);
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != PREDICTION_HEADER {
        return Err(bad("unexpected prediction header".into()));
    }
    let num = |s: &str| -> Result<f64, ModelError> {
        s.parse().map_err(|_| bad(format!("bad number {s:?}")))
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let coord = |s: &str| -> Result<Option<f64>, ModelError> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let mut p = [0.0; 4];
        let mut label = [false; 4];
        for i in 0..4 {
            p[i] = num(&rec[4 + i])?;
            label[i] = match &rec[8 + i] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("bad label {other:?}"))),
            };
        }
        out.push(PredictionRow {
            city_id: rec[0].to_string(),
            name: rec[1].to_string(),
            lat: coord(&rec[2])?,
            lon: coord(&rec[3])?,
            p,
            label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_round_trip() {
        let rows = vec![
            PredictionRow {
                city_id: "nyc".into(),
                name: "New York, NY".into(),
                lat: Some(40.7128),
                lon: Some(-74.006),
                p: [0.1 + 0.2, 1.0 / 3.0, 0.999999, 1e-7],
                label: [true, false, true, false],
            },
            PredictionRow {
                city_id: "x".into(),
                name: "X".into(),
                lat: None,
                lon: None,
                p: [0.5; 4],
                label: [false; 4],
            },
        ];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), PREDICTION_HEADER);
        assert!(text.contains("\"New York, NY\""));
        let back = read_predictions(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }
}
