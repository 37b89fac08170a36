use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Min–max scaling of population density fitted on training cities only.
/// Missing values are imputed with the training median; output is clipped
/// to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityNormalizer {
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl DensityNormalizer {
    pub fn fit<I>(train_densities: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = Option<f64>>,
    {
        let mut values: Vec<f64> = train_densities
            .into_iter()
            .flatten()
            .filter(|d| d.is_finite() && *d > 0.0)
            .collect();
        if values.len() < 2 {
            return Err(CorpusError::NoDensity(values.len()));
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        Ok(DensityNormalizer {
            min: values[0],
            max: values[n - 1],
            median,
        })
    }

    pub fn transform(&self, density: Option<f64>) -> f64 {
        let d = density
            .filter(|d| d.is_finite() && *d > 0.0)
            .unwrap_or(self.median);
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0.0;
        }
        ((d - self.min) / span).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted() -> DensityNormalizer {
        DensityNormalizer::fit([Some(1000.0), Some(3000.0), None, Some(5000.0)]).unwrap()
    }

    #[test]
    fn midpoint_and_bounds() {
        let n = fitted();
        assert_eq!(n.transform(Some(3000.0)), 0.5);
        assert_eq!(n.transform(Some(5000.0)), 1.0);
        assert_eq!(n.transform(Some(1000.0)), 0.0);
    }

    #[test]
    fn unseen_values_clipped() {
        let n = fitted();
        assert_eq!(n.transform(Some(9000.0)), 1.0);
        assert_eq!(n.transform(Some(10.0)), 0.0);
    }

    #[test]
    fn missing_imputed_with_median() {
        let n = fitted();
        assert_eq!(n.median, 3000.0);
        assert_eq!(n.transform(None), 0.5);
        let even = DensityNormalizer::fit([Some(1.0), Some(2.0), Some(4.0), Some(10.0)]).unwrap();
        assert_eq!(even.median, 3.0);
    }

    #[test]
    fn all_missing_is_fatal() {
        assert!(matches!(
            DensityNormalizer::fit([None, None]),
            Err(CorpusError::NoDensity(0))
        ));
        assert!(DensityNormalizer::fit([Some(5.0)]).is_err());
    }
}
