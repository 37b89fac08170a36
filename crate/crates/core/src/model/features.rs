//! Model inputs: per-city feature values and the column subsets models consume.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::typology::{Stage, Typology};

/// The five model inputs `[f_c, f_a, f_t, f_b, f_density]` for one city.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub keyline: [f64; 4],
    pub density: f64,
}

impl FeatureVector {
    pub fn get(&self, t: Typology) -> f64 {
        self.keyline[t.index()]
    }

    pub fn as_array(&self) -> [f64; 5] {
        let [c, a, t, b] = self.keyline;
        [c, a, t, b, self.density]
    }
}

/// Keyline features under every stage plus normalized density, enough to
/// evaluate any feature subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CityFeatures {
    /// Indexed `[typology][stage]`.
    pub keyline: [[f64; 3]; 4],
    pub density: f64,
}

impl CityFeatures {
    pub fn value(&self, column: FeatureColumn) -> f64 {
        match column {
            FeatureColumn::Keyline(t, s) => self.keyline[t.index()][s.index()],
            FeatureColumn::Density => self.density,
        }
    }

    pub fn select(&self, subset: &FeatureSubset) -> Vec<f64> {
        subset.columns().iter().map(|&c| self.value(c)).collect()
    }

    /// All four keyline features at one stage, plus density.
    pub fn vector(&self, stage: Stage) -> FeatureVector {
        FeatureVector {
            keyline: Typology::ALL.map(|t| self.keyline[t.index()][stage.index()]),
            density: self.density,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureColumn {
    Keyline(Typology, Stage),
    Density,
}

impl fmt::Display for FeatureColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureColumn::Keyline(t, s) => write!(f, "f_{}_{}", t.tag(), s),
            FeatureColumn::Density => f.write_str("f_density"),
        }
    }
}

impl FromStr for FeatureColumn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "f_density" || s == "density" {
            return Ok(FeatureColumn::Density);
        }
        let body = s.strip_prefix("f_").unwrap_or(s);
        let (tag, stage) = body
            .split_once('_')
            .ok_or_else(|| format!("bad feature column {s:?}"))?;
        let typology: Typology = tag.parse().map_err(|e: crate::typology::ParseTypologyError| e.to_string())?;
        Ok(FeatureColumn::Keyline(typology, stage.parse()?))
    }
}

impl Serialize for FeatureColumn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureColumn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered, duplicate-free list of columns a model consumes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureColumn>", into = "Vec<FeatureColumn>")]
pub struct FeatureSubset(Vec<FeatureColumn>);

impl FeatureSubset {
    pub fn new(columns: Vec<FeatureColumn>) -> Result<Self, String> {
        if columns.is_empty() {
            return Err("feature subset is empty".into());
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(format!("duplicate feature column {c}"));
            }
        }
        Ok(FeatureSubset(columns))
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every keyline feature at `stage`, task first, then density.
    pub fn full(task: Typology, stage: Stage) -> Self {
        let mut cols = vec![FeatureColumn::Keyline(task, stage)];
        cols.extend(task.others().map(|t| FeatureColumn::Keyline(t, stage)));
        cols.push(FeatureColumn::Density);
        FeatureSubset(cols)
    }
}

impl TryFrom<Vec<FeatureColumn>> for FeatureSubset {
    type Error = String;

    fn try_from(v: Vec<FeatureColumn>) -> Result<Self, Self::Error> {
        FeatureSubset::new(v)
    }
}

impl From<FeatureSubset> for Vec<FeatureColumn> {
    fn from(s: FeatureSubset) -> Self {
        s.0
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for FeatureSubset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cols = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        FeatureSubset::new(cols)
    }
}

/// The 21 feature subsets compared for each typology task, in table order.
/// Row 0 is the anchor-only baseline that lift is measured against.
pub fn sweep_subsets(task: Typology) -> Vec<FeatureSubset> {
    use FeatureColumn::{Density, Keyline};
    let opt = |t: Typology| Keyline(t, Stage::Optimal);
    let init = |t: Typology| Keyline(t, Stage::Initial);
    let others = task.others();
    let with_others = |first: FeatureColumn, other: fn(Typology) -> FeatureColumn| {
        let mut v = vec![first];
        v.extend(others.map(other));
        v
    };
    let init_fn: fn(Typology) -> FeatureColumn = |t| Keyline(t, Stage::Initial);

    let mut textual: Vec<Vec<FeatureColumn>> = vec![
        with_others(init(task), init_fn),
        with_others(opt(task), init_fn),
        with_others(Keyline(task, Stage::All), init_fn),
        vec![opt(task)],
    ];
    // Task feature with every non-empty combination of the other optimal features.
    let mut combos: Vec<Vec<FeatureColumn>> = Vec::new();
    for k in 1..=3usize {
        for mask in 0u8..8 {
            if mask.count_ones() as usize == k {
                let mut v = vec![opt(task)];
                v.extend((0..3).filter(|i| mask & (1 << i) != 0).map(|i| opt(others[i])));
                combos.push(v);
            }
        }
    }
    textual.extend(combos.iter().cloned());

    let mut rows = textual;
    rows.push(vec![Density]);
    rows.push(vec![opt(task), Density]);
    let mut anchored = with_others(opt(task), init_fn);
    anchored.push(Density);
    rows.push(anchored);
    for mut v in combos {
        v.push(Density);
        rows.push(v);
    }
    rows.into_iter()
        .map(|cols| FeatureSubset::new(cols).expect("sweep subsets are valid"))
        .collect()
}
