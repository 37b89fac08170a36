use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CityRecord, CorpusError};
use crate::typology::LabelTask;

/// Train/test partition with one-vs-all labels for a single task.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub label_task: LabelTask,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub train_labels: Vec<bool>,
    pub test_labels: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
            seed: 0,
            stratified: false,
        }
    }
}

/// Grouping key used for shuffling and stratification. Typology tasks share
/// one key so that every typology task sees the same partition.
fn strata_key(record: &CityRecord, task: LabelTask) -> Option<String> {
    match task {
        LabelTask::Via => record.via_city.map(|v| v.to_string()),
        _ => record.typology_label.map(|t| t.as_str().to_string()),
    }
}

/// Seeded shuffle-and-cut of the records carrying the label `task` needs.
pub fn build_split(
    records: &[CityRecord],
    task: LabelTask,
    config: &SplitConfig,
) -> Result<DatasetSplit, CorpusError> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(CorpusError::Config(format!(
            "train fraction {} outside (0, 1)",
            config.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut strata: BTreeMap<String, Vec<&CityRecord>> = BTreeMap::new();
    for r in records {
        let key = strata_key(r, task).ok_or_else(|| CorpusError::MissingLabel {
            city_id: r.city_id.clone(),
            task: task.to_string(),
        })?;
        let key = if config.stratified { key } else { String::new() };
        strata.entry(key).or_default().push(r);
    }
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for group in strata.values_mut() {
        group.shuffle(&mut rng);
        let cut = (group.len() as f64 * config.train_fraction).round() as usize;
        train_ids.extend(group[..cut].iter().map(|r| r.city_id.clone()));
        test_ids.extend(group[cut..].iter().map(|r| r.city_id.clone()));
    }
    DatasetSplit::from_ids(records, task, train_ids, test_ids)
}

impl DatasetSplit {
    /// Attach labels for `task` to an existing partition.
    pub fn from_ids(
        records: &[CityRecord],
        task: LabelTask,
        train: Vec<String>,
        test: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let by_id: HashMap<&str, &CityRecord> =
            records.iter().map(|r| (r.city_id.as_str(), r)).collect();
        let label = |id: &String| -> Result<bool, CorpusError> {
            let r = by_id
                .get(id.as_str())
                .ok_or_else(|| CorpusError::UnknownCity(id.clone()))?;
            r.binary_label(task).ok_or_else(|| CorpusError::MissingLabel {
                city_id: id.clone(),
                task: task.to_string(),
            })
        };
        let train_labels = train.iter().map(label).collect::<Result<Vec<_>, _>>()?;
        let test_labels = test.iter().map(label).collect::<Result<Vec<_>, _>>()?;
        if let Some(dup) = train.iter().find(|id| test.contains(id)) {
            return Err(CorpusError::Config(format!(
                "city {dup} is in both train and test"
            )));
        }
        if !train_labels.iter().any(|&l| l) {
            return Err(CorpusError::NoPositives(task.to_string()));
        }
        Ok(DatasetSplit {
            label_task: task,
            train,
            test,
            train_labels,
            test_labels,
        })
    }

    /// Same membership, labels re-derived for another task.
    pub fn for_task(&self, records: &[CityRecord], task: LabelTask) -> Result<Self, CorpusError> {
        Self::from_ids(records, task, self.train.clone(), self.test.clone())
    }

    pub fn train_positives(&self) -> impl Iterator<Item = &str> {
        self.train
            .iter()
            .zip(&self.train_labels)
            .filter(|(_, &l)| l)
            .map(|(id, _)| id.as_str())
    }

    /// `city_id,set` table with `set` in {train, test}.
    pub fn write_membership<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["city_id", "set"])?;
        for id in &self.train {
            wtr.write_record([id.as_str(), "train"])?;
        }
        for id in &self.test {
            wtr.write_record([id.as_str(), "test"])?;
        }
        wtr.flush()
            .map_err(|e| CorpusError::io(std::path::Path::new("<split>"), e))?;
        Ok(())
    }

    pub fn read_membership<R: Read>(reader: R) -> Result<(Vec<String>, Vec<String>), CorpusError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for row in rdr.records() {
            let row = row?;
            match &row[1] {
                "train" => train.push(row[0].to_string()),
                "test" => test.push(row[0].to_string()),
                other => {
                    return Err(CorpusError::Malformed(format!("unknown split set {other:?}")))
                }
            }
        }
        Ok((train, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typology::Typology;
    use std::collections::HashSet;

    fn records(n: usize) -> Vec<CityRecord> {
        (0..n)
            .map(|i| CityRecord {
                city_id: format!("c{i:03}"),
                name: format!("City {i}"),
                url: format!("file:///c{i}"),
                sentences: vec!["x.".into()],
                population: None,
                area_sq_mi: None,
                density_per_sq_mi: None,
                lat: None,
                lon: None,
                typology_label: Some(Typology::ALL[i % 4]),
                via_city: Some(i % 5 == 0),
            })
            .collect()
    }

    #[test]
    fn table_four_sizes() {
        let recs = records(282);
        let s = build_split(&recs, LabelTask::Congestion, &SplitConfig { seed: 7, ..Default::default() })
            .unwrap();
        assert_eq!(s.train.len(), 197);
        assert_eq!(s.test.len(), 85);
    }

    #[test]
    fn partition_and_determinism() {
        let recs = records(50);
        let cfg = SplitConfig { seed: 3, ..Default::default() };
        let a = build_split(&recs, LabelTask::Auto, &cfg).unwrap();
        let b = build_split(&recs, LabelTask::Auto, &cfg).unwrap();
        assert_eq!(a, b);
        let tr: HashSet<_> = a.train.iter().collect();
        let te: HashSet<_> = a.test.iter().collect();
        assert!(tr.is_disjoint(&te));
        assert_eq!(tr.len() + te.len(), 50);
    }

    #[test]
    fn same_membership_for_every_typology_task() {
        let recs = records(60);
        for stratified in [false, true] {
            let cfg = SplitConfig { seed: 11, stratified, ..Default::default() };
            let base = build_split(&recs, LabelTask::Congestion, &cfg).unwrap();
            for t in Typology::ALL {
                let s = build_split(&recs, t.into(), &cfg).unwrap();
                assert_eq!(s.train, base.train);
                assert_eq!(s.test, base.test);
            }
        }
    }

    #[test]
    fn stratified_keeps_class_proportions() {
        let recs = records(100);
        let cfg = SplitConfig { seed: 1, stratified: true, ..Default::default() };
        let s = build_split(&recs, LabelTask::Bike, &cfg).unwrap();
        let pos = s.train_labels.iter().filter(|&&l| l).count();
        assert_eq!(pos, (25.0f64 * 0.7).round() as usize);
    }

    #[test]
    fn missing_label_and_no_positives() {
        let mut recs = records(10);
        recs[0].typology_label = None;
        assert!(matches!(
            build_split(&recs, LabelTask::Auto, &SplitConfig::default()),
            Err(CorpusError::MissingLabel { .. })
        ));
        let mut recs = records(12);
        for r in &mut recs {
            r.typology_label = Some(Typology::Auto);
        }
        assert!(matches!(
            build_split(&recs, LabelTask::Bike, &SplitConfig::default()),
            Err(CorpusError::NoPositives(_))
        ));
    }

    #[test]
    fn membership_file_round_trip() {
        let recs = records(20);
        let s = build_split(&recs, LabelTask::Via, &SplitConfig::default()).unwrap();
        let mut buf = Vec::new();
        s.write_membership(&mut buf).unwrap();
        let (train, test) = DatasetSplit::read_membership(buf.as_slice()).unwrap();
        assert_eq!((train, test), (s.train.clone(), s.test.clone()));
    }
}
