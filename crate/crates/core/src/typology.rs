//! Typology labels and the binary classification tasks derived from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Dominant transportation character of a city. Labels are mutually exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Typology {
    Congestion,
    Auto,
    Transit,
    Bike,
}

impl Typology {
    pub const ALL: [Typology; 4] = [
        Typology::Congestion,
        Typology::Auto,
        Typology::Transit,
        Typology::Bike,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Typology::Congestion => "congestion",
            Typology::Auto => "auto",
            Typology::Transit => "transit",
            Typology::Bike => "bike",
        }
    }

    /// Position in [`Typology::ALL`]; used to index per-typology arrays.
    pub fn index(self) -> usize {
        match self {
            Typology::Congestion => 0,
            Typology::Auto => 1,
            Typology::Transit => 2,
            Typology::Bike => 3,
        }
    }

    /// Short column tag: `c`, `a`, `t`, `b`.
    pub fn tag(self) -> &'static str {
        match self {
            Typology::Congestion => "c",
            Typology::Auto => "a",
            Typology::Transit => "t",
            Typology::Bike => "b",
        }
    }

    /// The other three typologies in canonical order.
    pub fn others(self) -> [Typology; 3] {
        let mut out = [Typology::Congestion; 3];
        let mut i = 0;
        for t in Typology::ALL {
            if t != self {
                out[i] = t;
                i += 1;
            }
        }
        out
    }
}

impl fmt::Display for Typology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown typology {0:?} (expected congestion, auto, transit or bike)")]
pub struct ParseTypologyError(pub String);

impl FromStr for Typology {
    type Err = ParseTypologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "congestion" | "c" => Ok(Typology::Congestion),
            "auto" | "auto-heavy" | "a" => Ok(Typology::Auto),
            "transit" | "transit-heavy" | "t" => Ok(Typology::Transit),
            "bike" | "bike-friendly" | "b" => Ok(Typology::Bike),
            _ => Err(ParseTypologyError(s.to_string())),
        }
    }
}

/// A one-vs-all binary task: one typology against the rest, or Via presence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelTask {
    Congestion,
    Auto,
    Transit,
    Bike,
    Via,
}

impl LabelTask {
    pub fn typology(self) -> Option<Typology> {
        match self {
            LabelTask::Congestion => Some(Typology::Congestion),
            LabelTask::Auto => Some(Typology::Auto),
            LabelTask::Transit => Some(Typology::Transit),
            LabelTask::Bike => Some(Typology::Bike),
            LabelTask::Via => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelTask::Via => "via",
            other => other.typology().map(Typology::as_str).unwrap_or("via"),
        }
    }
}

impl From<Typology> for LabelTask {
    fn from(t: Typology) -> Self {
        match t {
            Typology::Congestion => LabelTask::Congestion,
            Typology::Auto => LabelTask::Auto,
            Typology::Transit => LabelTask::Transit,
            Typology::Bike => LabelTask::Bike,
        }
    }
}

impl fmt::Display for LabelTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which keyline set a feature is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    /// Anchor text only.
    #[serde(rename = "initial")]
    Initial,
    /// Anchor plus the greedily selected prefix of candidates.
    #[serde(rename = "opt")]
    Optimal,
    /// Anchor plus every candidate.
    #[serde(rename = "all")]
    All,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Initial, Stage::Optimal, Stage::All];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Optimal => "opt",
            Stage::All => "all",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Stage::Initial => 0,
            Stage::Optimal => 1,
            Stage::All => 2,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "initial" => Ok(Stage::Initial),
            "opt" | "optimal" => Ok(Stage::Optimal),
            "all" => Ok(Stage::All),
            other => Err(format!("unknown keyline stage {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn others_skip_self_in_order() {
        assert_eq!(
            Typology::Auto.others(),
            [Typology::Congestion, Typology::Transit, Typology::Bike]
        );
        for t in Typology::ALL {
            assert!(!t.others().contains(&t));
            assert_eq!(Typology::ALL[t.index()], t);
        }
    }

    #[test]
    fn parse_round_trip() {
        for t in Typology::ALL {
            assert_eq!(t.as_str().parse::<Typology>().unwrap(), t);
        }
        assert!("trains".parse::<Typology>().is_err());
    }
}
