//! Planted-signal corpora for offline testing.
//!
//! Every page sentence has a fixture vector. Two planted sentences carry the
//! signal for one typology: positives contain one of them verbatim, while
//! every other sentence is a decoy whose similarity to the task anchor is
//! drawn from a fixed band. Decoys on positive pages stay below both planted
//! sentences, so the candidate list is exactly the two planted lines.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_dataset, CityRecord, DatasetEntry, MemorySource};
use crate::embedding::FixtureTable;
use crate::keyline::Anchors;
use crate::typology::Typology;

pub const PLANTED_ALPHA: &str = "Traffic on the ring road stalls for hours every weekday.";
pub const PLANTED_BETA: &str = "Commuters lose long hours in gridlock downtown.";

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub cities: usize,
    pub dim: usize,
    pub task: Typology,
    pub positive_fraction: f64,
    /// Inclusive range of decoy sentences per page.
    pub decoys: (usize, usize),
    pub via_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            cities: 40,
            dim: 32,
            task: Typology::Congestion,
            positive_fraction: 0.35,
            decoys: (4, 8),
            via_fraction: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub entry: DatasetEntry,
    pub sentences: Vec<String>,
    pub population: f64,
    pub area_sq_mi: f64,
    pub markup: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub cities: Vec<SyntheticCity>,
    pub table: FixtureTable,
}

/// Paths produced by [`SyntheticCorpus::write_files`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub dataset: PathBuf,
    pub fixture: PathBuf,
    pub pages: PathBuf,
}

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

impl SyntheticCorpus {
    /// Dimensions: 0..4 hold the anchors in typology order, 4 and 5 the two
    /// planted directions, the rest is shared noise space.
    pub fn generate(config: SyntheticConfig) -> Self {
        assert!(config.dim >= 12, "synthetic corpora need at least 12 dimensions");
        assert!(config.decoys.0 >= 1 && config.decoys.0 <= config.decoys.1);
        let dim = config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let task = config.task.index();
        let mut table = FixtureTable {
            dim,
            ..Default::default()
        };
        for (i, text) in Anchors::default_texts().into_iter().enumerate() {
            table.sentences.insert(text, to_f32(&unit(dim, i)));
        }
        let mut alpha = unit(dim, task);
        alpha[4] = 1.0;
        let mut beta = unit(dim, task);
        beta[5] = 1.05;
        table.sentences.insert(PLANTED_ALPHA.into(), to_f32(&normalized(alpha)));
        table.sentences.insert(PLANTED_BETA.into(), to_f32(&normalized(beta)));

        let n_pos = ((config.cities as f64) * config.positive_fraction).round() as usize;
        let mut is_pos: Vec<bool> = (0..config.cities).map(|i| i < n_pos).collect();
        is_pos.shuffle(&mut rng);
        let others = config.task.others();

        let mut cities = Vec::with_capacity(config.cities);
        let mut planted_count = 0usize;
        for (i, &pos) in is_pos.iter().enumerate() {
            let name = format!("Synthetic City {i}");
            let city_id = format!("city{i:04}");
            let n_decoys = rng.gen_range(config.decoys.0..=config.decoys.1);
            let mut sentences = Vec::with_capacity(n_decoys + 1);
            for j in 0..n_decoys {
                let text = format!("{name} has local detail number {j}.");
                let s = if pos {
                    rng.gen_range(0.40..0.68)
                } else {
                    rng.gen_range(0.40..0.80)
                };
                table.sentences.insert(text.clone(), to_f32(&decoy(dim, task, s, &mut rng)));
                sentences.push(text);
            }
            if pos {
                let planted = if planted_count % 2 == 0 { PLANTED_ALPHA } else { PLANTED_BETA };
                planted_count += 1;
                let at = rng.gen_range(0..=sentences.len());
                sentences.insert(at, planted.to_string());
            }
            let label = if pos {
                config.task
            } else {
                others[rng.gen_range(0..3)]
            };
            let population = rng.gen_range(100_000.0f64..5_000_000.0).round();
            let area_sq_mi = (rng.gen_range(20.0f64..500.0) * 10.0).round() / 10.0;
            let lat = (rng.gen_range(-60.0f64..70.0) * 1e4).round() / 1e4;
            let lon = (rng.gen_range(-180.0f64..180.0) * 1e4).round() / 1e4;
            let via = rng.gen_bool(config.via_fraction);
            let entry = DatasetEntry {
                city_id: city_id.clone(),
                name: name.clone(),
                url: format!("https://en.wikipedia.org/wiki/Synthetic_City_{i}"),
                label: Some(label),
                via_flag: Some(via),
                lat: Some(lat),
                lon: Some(lon),
            };
            let markup = page_markup(&name, population, area_sq_mi, lat, lon, &sentences);
            cities.push(SyntheticCity {
                entry,
                sentences,
                population,
                area_sq_mi,
                markup,
            });
        }
        SyntheticCorpus {
            config,
            cities,
            table,
        }
    }

    pub fn entries(&self) -> Vec<DatasetEntry> {
        self.cities.iter().map(|c| c.entry.clone()).collect()
    }

    /// Records as ingestion would build them, without going through markup.
    pub fn records(&self) -> Vec<CityRecord> {
        self.cities
            .iter()
            .map(|c| {
                let mut r = CityRecord::from_entry(&c.entry);
                r.sentences = c.sentences.clone();
                r.population = Some(c.population);
                r.area_sq_mi = Some(c.area_sq_mi);
                r.density_per_sq_mi = Some(c.population / c.area_sq_mi);
                r
            })
            .collect()
    }

    pub fn memory_source(&self) -> MemorySource {
        MemorySource {
            pages: self
                .cities
                .iter()
                .map(|c| (c.entry.url.clone(), c.markup.clone()))
                .collect::<HashMap<_, _>>(),
        }
    }

    /// Write pages as local files, a dataset table pointing at them and the
    /// fixture vector table.
    pub fn write_files(&self, dir: &Path) -> std::io::Result<SyntheticFiles> {
        let pages = dir.join("pages_src");
        fs::create_dir_all(&pages)?;
        let mut entries = Vec::with_capacity(self.cities.len());
        for c in &self.cities {
            let path = pages.join(format!("{}.wiki", c.entry.city_id));
            fs::write(&path, &c.markup)?;
            let mut e = c.entry.clone();
            e.url = format!("file://{}", path.display());
            entries.push(e);
        }
        let dataset = dir.join("dataset.csv");
        let mut buf = Vec::new();
        write_dataset(&mut buf, &entries).map_err(std::io::Error::other)?;
        fs::write(&dataset, buf)?;
        let fixture = dir.join("fixture.json");
        self.table.save(&fixture).map_err(std::io::Error::other)?;
        Ok(SyntheticFiles {
            dataset,
            fixture,
            pages,
        })
    }

    pub fn sentences_by_city(&self) -> BTreeMap<String, Vec<String>> {
        self.cities
            .iter()
            .map(|c| (c.entry.city_id.clone(), c.sentences.clone()))
            .collect()
    }
}

/// Unit vector with cosine `s` to the task anchor. The orthogonal part avoids
/// the task anchor and the planted directions.
fn decoy(dim: usize, task: usize, s: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut r: Vec<f64> = (0..dim)
        .map(|k| {
            if k == task || k == 4 || k == 5 {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    r = normalized(r);
    let c = (1.0 - s * s).sqrt();
    let mut v: Vec<f64> = r.iter().map(|x| x * c).collect();
    v[task] = s;
    v
}

fn page_markup(name: &str, population: f64, area: f64, lat: f64, lon: f64, sentences: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{{{{Infobox settlement");
    let _ = writeln!(out, "| name = {name}");
    let _ = writeln!(out, "| population_total = {}", group_thousands(population as u64));
    let _ = writeln!(out, "| area_total_sq_mi = {area}");
    let _ = writeln!(out, "| coordinates = {{{{coord|{lat}|{lon}|display=inline}}}}");
    let _ = writeln!(out, "}}}}");
    for (p, chunk) in sentences.chunks(3).enumerate() {
        if p == 1 {
            out.push_str("\n== History ==\n");
        }
        out.push('\n');
        for (k, s) in chunk.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            out.push_str(s);
            if k == 0 && p == 0 {
                out.push_str("<ref>Synthetic source.</ref>");
            }
        }
        out.push('\n');
    }
    out.push_str("\n== References ==\n{{reflist}}\n* Not part of the article body.\n");
    out
}

fn group_thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
