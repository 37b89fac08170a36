use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::infobox::InfoboxNumerics;
use super::CorpusError;
use crate::typology::{LabelTask, Typology};

/// One city: identity, extracted page content and optional labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CityRecord {
    pub city_id: String,
    pub name: String,
    pub url: String,
    pub sentences: Vec<String>,
    pub population: Option<f64>,
    pub area_sq_mi: Option<f64>,
    pub density_per_sq_mi: Option<f64>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub typology_label: Option<Typology>,
    pub via_city: Option<bool>,
}

impl CityRecord {
    pub fn from_entry(entry: &DatasetEntry) -> Self {
        CityRecord {
            city_id: entry.city_id.clone(),
            name: entry.name.clone(),
            url: entry.url.clone(),
            sentences: Vec::new(),
            population: None,
            area_sq_mi: None,
            density_per_sq_mi: None,
            lat: entry.lat,
            lon: entry.lon,
            typology_label: entry.label,
            via_city: entry.via_flag,
        }
    }

    /// Merge infobox values. Coordinates from the dataset table take precedence.
    pub fn apply_infobox(&mut self, info: &InfoboxNumerics) {
        self.population = info.population;
        self.area_sq_mi = info.area_sq_mi;
        self.density_per_sq_mi = info.density_per_sq_mi;
        self.lat = self.lat.or(info.lat);
        self.lon = self.lon.or(info.lon);
    }

    /// Binary label for a one-vs-all task, `None` when the record lacks it.
    pub fn binary_label(&self, task: LabelTask) -> Option<bool> {
        match task.typology() {
            Some(t) => self.typology_label.map(|l| l == t),
            None => self.via_city,
        }
    }
}

/// A row of the dataset table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub city_id: String,
    pub name: String,
    pub url: String,
    #[serde(default, deserialize_with = "de_label", serialize_with = "ser_label")]
    pub label: Option<Typology>,
    #[serde(default, deserialize_with = "de_flag", serialize_with = "ser_flag")]
    pub via_flag: Option<bool>,
    #[serde(default, deserialize_with = "de_opt_f64")]
    pub lat: Option<f64>,
    #[serde(default, deserialize_with = "de_opt_f64")]
    pub lon: Option<f64>,
}

fn de_label<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Typology>, D::Error> {
    let s = String::deserialize(d)?;
    if s.trim().is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(serde::de::Error::custom)
}

fn ser_label<S: serde::Serializer>(v: &Option<Typology>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(v.map(Typology::as_str).unwrap_or(""))
}

fn de_flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "1" | "true" | "yes" => Ok(Some(true)),
        "0" | "false" | "no" => Ok(Some(false)),
        other => Err(serde::de::Error::custom(format!("bad via flag {other:?}"))),
    }
}

fn ser_flag<S: serde::Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match v {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    })
}

fn de_opt_f64<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    let s = String::deserialize(d)?;
    if s.trim().is_empty() {
        return Ok(None);
    }
    s.trim().parse().map(Some).map_err(serde::de::Error::custom)
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<DatasetEntry>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.deserialize() {
        let entry: DatasetEntry = row?;
        if !seen.insert(entry.city_id.clone()) {
            return Err(CorpusError::DuplicateCity(entry.city_id));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetEntry>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_dataset(file)
}

pub fn write_dataset<W: Write>(writer: W, entries: &[DatasetEntry]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for e in entries {
        wtr.serialize(e)?;
    }
    wtr.flush().map_err(|e| CorpusError::io(Path::new("<dataset>"), e))?;
    Ok(())
}

/// Line-delimited `(city_id, sentence_index, text)` records, tab separated.
pub fn write_sentences<W: Write>(
    writer: W,
    city_id: &str,
    sentences: &[String],
) -> Result<(), CorpusError> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    for (i, s) in sentences.iter().enumerate() {
        wtr.write_record([city_id, &i.to_string(), s.as_str()])?;
    }
    wtr.flush().map_err(|e| CorpusError::io(Path::new("<sentences>"), e))?;
    Ok(())
}

/// Reads a sentences file back; records must be in index order.
pub fn read_sentences<R: Read>(reader: R) -> Result<(String, Vec<String>), CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .from_reader(reader);
    let mut city = String::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() != 3 {
            return Err(CorpusError::Malformed(format!(
                "sentence record has {} fields",
                row.len()
            )));
        }
        let idx: usize = row[1]
            .parse()
            .map_err(|_| CorpusError::Malformed(format!("bad sentence index {:?}", &row[1])))?;
        if idx != out.len() {
            return Err(CorpusError::Malformed(format!(
                "sentence index {idx} out of order"
            )));
        }
        if city.is_empty() {
            city = row[0].to_string();
        }
        out.push(row[2].to_string());
    }
    Ok((city, out))
}

/// Row of the infobox table written by ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoboxRow {
    pub city_id: String,
    pub population: Option<f64>,
    pub area_sq_mi: Option<f64>,
    pub density_per_sq_mi: Option<f64>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

impl InfoboxRow {
    pub fn new(city_id: &str, info: &InfoboxNumerics) -> Self {
        InfoboxRow {
            city_id: city_id.to_string(),
            population: info.population,
            area_sq_mi: info.area_sq_mi,
            density_per_sq_mi: info.density_per_sq_mi,
            lat: info.lat,
            lon: info.lon,
        }
    }

    pub fn numerics(&self) -> InfoboxNumerics {
        InfoboxNumerics {
            population: self.population,
            area_sq_mi: self.area_sq_mi,
            density_per_sq_mi: self.density_per_sq_mi,
            lat: self.lat,
            lon: self.lon,
        }
    }
}

pub fn write_infobox_table<W: Write>(writer: W, rows: &[InfoboxRow]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| CorpusError::io(Path::new("<infobox>"), e))?;
    Ok(())
}

pub fn read_infobox_table<R: Read>(reader: R) -> Result<Vec<InfoboxRow>, CorpusError> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(CorpusError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_parses_optional_columns() {
        let csv = "city_id,name,url,label,via_flag,lat,lon\n\
                   nyc,New York City,https://en.wikipedia.org/wiki/New_York_City,transit,1,40.71,-74.0\n\
                   x,X,file:///x,,,,\n";
        let rows = read_dataset(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].label, Some(Typology::Transit));
        assert_eq!(rows[0].via_flag, Some(true));
        assert_eq!(rows[0].lon, Some(-74.0));
        assert_eq!(rows[1].label, None);
        assert_eq!(rows[1].lat, None);

        let mut buf = Vec::new();
        write_dataset(&mut buf, &rows).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let csv = "city_id,name,url,label,via_flag,lat,lon\na,A,u,,,,\na,A,u,,,,\n";
        assert!(matches!(
            read_dataset(csv.as_bytes()),
            Err(CorpusError::DuplicateCity(_))
        ));
    }

    #[test]
    fn sentences_file_round_trip_with_tabs_and_quotes() {
        let s = vec![
            "Plain sentence.".to_string(),
            "It has \"quotes\" and a\ttab.".to_string(),
        ];
        let mut buf = Vec::new();
        write_sentences(&mut buf, "c1", &s).unwrap();
        let (id, back) = read_sentences(buf.as_slice()).unwrap();
        assert_eq!(id, "c1");
        assert_eq!(back, s);
    }

    #[test]
    fn binary_labels_are_one_vs_all() {
        let mut r = CityRecord::from_entry(&DatasetEntry {
            city_id: "a".into(),
            name: "A".into(),
            url: "u".into(),
            label: Some(Typology::Bike),
            via_flag: Some(false),
            lat: None,
            lon: None,
        });
        let sum: usize = Typology::ALL
            .iter()
            .filter(|t| r.binary_label((**t).into()) == Some(true))
            .count();
        assert_eq!(sum, 1);
        assert_eq!(r.binary_label(LabelTask::Via), Some(false));
        r.typology_label = None;
        assert_eq!(r.binary_label(LabelTask::Bike), None);
    }
}
