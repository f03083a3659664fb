use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Pipeline;

/// Inclusive date range of rows entering the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl SampleWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        SampleWindow { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

fn yes() -> bool {
    true
}

fn by_state() -> String {
    "state".to_string()
}

/// Declarative description of one growth regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub outcome: String,
    /// Regressor columns, in output order.
    pub regressors: Vec<String>,
    /// Time-invariant state covariates.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Interact every covariate with calendar-month indicators.
    #[serde(default)]
    pub month_interactions: bool,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_window: Option<SampleWindow>,
    /// `"state"`, `"date"`, or the name of a column whose values define groups.
    #[serde(default = "by_state")]
    pub cluster_by: String,
    /// One indicator per state (first state dropped).
    #[serde(default)]
    pub state_effects: bool,
    /// One indicator per sample date (first date dropped).
    #[serde(default)]
    pub time_effects: bool,
    /// Coefficients summed by the combination test. Defaults to every
    /// policy-role regressor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combo: Option<Vec<String>>,
}

impl RegressionSpec {
    pub fn new(outcome: &str, regressors: &[&str]) -> Self {
        RegressionSpec {
            outcome: outcome.to_string(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            covariates: Vec::new(),
            month_interactions: false,
            intercept: true,
            sample_window: None,
            cluster_by: by_state(),
            state_effects: false,
            time_effects: false,
            combo: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regressors.iter().any(|r| r == &self.outcome) {
            return Err(Error::InvalidSpec(format!("outcome `{}` is also a regressor", self.outcome)));
        }
        let mut seen = std::collections::HashSet::new();
        for name in self.regressors.iter().chain(&self.covariates) {
            if !seen.insert(name) {
                return Err(Error::InvalidSpec(format!("`{name}` listed twice")));
            }
        }
        if let Some(w) = self.sample_window {
            if w.start > w.end {
                return Err(Error::InvalidSpec(format!("empty sample window {} .. {}", w.start, w.end)));
            }
        }
        if self.month_interactions && self.covariates.is_empty() {
            return Err(Error::InvalidSpec("month interactions need at least one covariate".into()));
        }
        Ok(())
    }
}

/// A regression together with the transforms that build its columns from a
/// raw panel. This is the JSON document accepted by the command-line tool:
/// `{"transforms": {...}, "outcome": ..., "regressors": [...], ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub transforms: Pipeline,
    #[serde(flatten)]
    pub model: RegressionSpec,
}

impl AnalysisSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: AnalysisSpec = serde_json::from_str(&text)?;
        spec.model.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults() {
        let spec: AnalysisSpec = serde_json::from_str(
            r#"{"outcome":"y","regressors":["a","b"],"sample_window":{"start":"2020-03-07","end":"2020-06-03"}}"#,
        )
        .unwrap();
        assert!(spec.model.intercept);
        assert_eq!(spec.model.cluster_by, "state");
        assert!(spec.transforms.steps.is_empty());
        assert!(spec.model.validate().is_ok());
    }

    #[test]
    fn rejects_outcome_as_regressor_and_empty_window() {
        assert!(RegressionSpec::new("y", &["y"]).validate().is_err());
        let mut s = RegressionSpec::new("y", &["x"]);
        s.sample_window = Some(SampleWindow::new(
            NaiveDate::from_ymd_opt(2020, 6, 1).unwrap(),
            NaiveDate::from_ymd_opt(2020, 5, 1).unwrap(),
        ));
        assert!(s.validate().is_err());
    }
}
