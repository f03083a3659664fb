//! Declarative transform pipelines.
//!
//! A pipeline records how regression columns are derived from raw panel
//! columns, so the derivation can be replayed after the raw data change
//! (permuted policies, counterfactual paths). Overrides replace a column's
//! values right after it is produced, and every later step sees the override.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::{Column, PanelDataset};
use super::transforms::{self, GrowthNames, TransformSpec, MASKS_EMPLOYEES_ONLY, MASKS_PUBLIC};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    MovingAverage {
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<usize>,
    },
    WeeklyLogGrowth {
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diff_window: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_floor: Option<f64>,
    },
    Lag {
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        days: Option<usize>,
    },
    National {
        column: String,
    },
    EncodeMasks {
        employee: String,
        public: String,
    },
}

/// Column values that replace whatever the pipeline would otherwise hold.
pub type Overrides = HashMap<String, Arc<[f64]>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    /// Defaults for steps that leave their parameters unset.
    #[serde(default)]
    pub params: TransformSpec,
    #[serde(default)]
    pub steps: Vec<Step>,
}

impl Pipeline {
    pub fn new(params: TransformSpec) -> Self {
        Pipeline {
            params,
            steps: Vec::new(),
        }
    }

    pub fn moving_average(mut self, column: &str) -> Self {
        self.steps.push(Step::MovingAverage {
            column: column.into(),
            window: None,
        });
        self
    }

    pub fn growth(mut self, column: &str) -> Self {
        self.steps.push(Step::WeeklyLogGrowth {
            column: column.into(),
            diff_window: None,
            log_floor: None,
        });
        self
    }

    pub fn lag(mut self, column: &str, days: usize) -> Self {
        self.steps.push(Step::Lag {
            column: column.into(),
            days: Some(days),
        });
        self
    }

    pub fn national(mut self, column: &str) -> Self {
        self.steps.push(Step::National { column: column.into() });
        self
    }

    pub fn encode_masks(mut self, employee: &str, public: &str) -> Self {
        self.steps.push(Step::EncodeMasks {
            employee: employee.into(),
            public: public.into(),
        });
        self
    }

    /// Effective parameters for a step.
    pub fn step_params(&self, step: &Step) -> TransformSpec {
        let mut p = self.params;
        match step {
            Step::MovingAverage { window: Some(w), .. } => p.ma_window = *w,
            Step::WeeklyLogGrowth {
                diff_window,
                log_floor,
                ..
            } => {
                if let Some(w) = diff_window {
                    p.diff_window = *w;
                }
                if let Some(f) = log_floor {
                    p.log_floor = *f;
                }
            }
            Step::Lag { days: Some(d), .. } => p.lag_days = *d,
            _ => {}
        }
        p
    }

    pub fn inputs(step: &Step) -> Vec<&str> {
        match step {
            Step::MovingAverage { column, .. }
            | Step::WeeklyLogGrowth { column, .. }
            | Step::Lag { column, .. }
            | Step::National { column } => vec![column.as_str()],
            Step::EncodeMasks { employee, public } => vec![employee.as_str(), public.as_str()],
        }
    }

    /// Output columns of a step with the number of days each output lags its inputs.
    pub fn outputs(&self, step: &Step) -> Vec<(String, usize)> {
        let p = self.step_params(step);
        match step {
            Step::MovingAverage { column, .. } => vec![(transforms::ma_name(column), 0)],
            Step::WeeklyLogGrowth { column, .. } => GrowthNames::for_column(column)
                .all()
                .iter()
                .map(|n| (n.to_string(), 0))
                .collect(),
            Step::Lag { column, .. } => vec![(transforms::lag_name(column, p.lag_days), p.lag_days)],
            Step::National { column } => vec![(transforms::national_name(column), 0)],
            Step::EncodeMasks { .. } => vec![(MASKS_EMPLOYEES_ONLY.into(), 0), (MASKS_PUBLIC.into(), 0)],
        }
    }

    pub fn run(&self, panel: &PanelDataset) -> Result<PanelDataset> {
        self.run_with_overrides(panel, &Overrides::new())
    }

    pub fn run_with_overrides(&self, panel: &PanelDataset, overrides: &Overrides) -> Result<PanelDataset> {
        let mut cur = panel.clone();
        for (name, values) in overrides {
            if let Ok(col) = cur.column(name) {
                let role = col.role;
                cur = cur.with_column(name, Column { role, values: values.clone() })?;
            }
        }
        for step in &self.steps {
            let p = self.step_params(step);
            cur = match step {
                Step::MovingAverage { column, .. } => transforms::moving_average(&cur, column, &p)?,
                Step::WeeklyLogGrowth { column, .. } => transforms::weekly_log_growth(&cur, column, &p)?,
                Step::Lag { column, .. } => transforms::lag(&cur, column, p.lag_days)?,
                Step::National { column } => transforms::national_aggregate(&cur, column)?,
                Step::EncodeMasks { employee, public } => transforms::encode_mask_policies(&cur, employee, public)?,
            };
            for (out, _) in self.outputs(step) {
                if let Some(values) = overrides.get(&out) {
                    let role = cur.column(&out)?.role;
                    cur = cur.with_column(&out, Column { role, values: values.clone() })?;
                }
            }
        }
        Ok(cur)
    }

    /// Every column whose values depend on any of `roots` (roots included).
    pub fn downstream_of(&self, roots: &[&str]) -> BTreeSet<String> {
        let mut set: BTreeSet<String> = roots.iter().map(|s| s.to_string()).collect();
        for step in &self.steps {
            if Self::inputs(step).iter().any(|i| set.contains(*i)) {
                set.extend(self.outputs(step).into_iter().map(|(o, _)| o));
            }
        }
        set
    }

    /// Smallest number of days by which each downstream column lags `root`.
    /// A column at date `t` only depends on `root` at dates `<= t - lag`.
    pub fn min_lag_from(&self, root: &str) -> HashMap<String, usize> {
        let mut lag: HashMap<String, usize> = HashMap::from([(root.to_string(), 0)]);
        for step in &self.steps {
            let best = Self::inputs(step).iter().filter_map(|i| lag.get(*i)).min().copied();
            if let Some(base) = best {
                for (out, extra) in self.outputs(step) {
                    let v = base + extra;
                    lag.entry(out).and_modify(|l| *l = (*l).min(v)).or_insert(v);
                }
            }
        }
        lag
    }

    /// Outputs of national steps whose input depends on `root`.
    pub fn national_outputs_from(&self, root: &str) -> Vec<String> {
        let down = self.downstream_of(&[root]);
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::National { column } if down.contains(column) => Some(transforms::national_name(column)),
                _ => None,
            })
            .collect()
    }

    /// The growth step producing `column` as its growth output, if any.
    pub fn growth_step_for(&self, column: &str) -> Option<(&str, TransformSpec)> {
        self.steps.iter().find_map(|s| match s {
            Step::WeeklyLogGrowth { column: base, .. } if GrowthNames::for_column(base).growth == column => {
                Some((base.as_str(), self.step_params(s)))
            }
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;

    use super::*;
    use crate::panel::dataset::{ColumnRole, PanelBuilder};

    fn panel() -> PanelDataset {
        let d0 = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let n = 40;
        PanelBuilder::new()
            .state("A", d0, n)
            .state("B", d0, n)
            .column("cases", ColumnRole::Count, (0..2 * n).map(|i| ((i % n) * (i % n)) as f64).collect())
            .column("emp", ColumnRole::Policy, (0..2 * n).map(|i| ((i % n) > 10) as u8 as f64).collect())
            .column("pub", ColumnRole::Policy, (0..2 * n).map(|i| ((i % n) > 20) as u8 as f64).collect())
            .build()
            .unwrap()
    }

    fn pipeline() -> Pipeline {
        Pipeline::new(TransformSpec::default())
            .encode_masks("emp", "pub")
            .moving_average("cases")
            .national("cases_ma")
            .growth("cases_ma")
            .growth("cases_ma_national")
            .lag("cases_ma_growth", 14)
            .lag("cases_ma_national_logdiff", 14)
            .lag(MASKS_PUBLIC, 14)
    }

    #[test]
    fn runs_and_matches_manual_transforms() {
        let p = pipeline().run(&panel()).unwrap();
        let spec = TransformSpec::default();
        let manual = transforms::moving_average(&panel(), "cases", &spec).unwrap();
        let manual = transforms::weekly_log_growth(&manual, "cases_ma", &spec).unwrap();
        let manual = transforms::lag(&manual, "cases_ma_growth", 14).unwrap();
        let a = p.values("cases_ma_growth_lag14").unwrap();
        let b = manual.values("cases_ma_growth_lag14").unwrap();
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn lineage_and_lags() {
        let pl = pipeline();
        let down = pl.downstream_of(&["cases_ma"]);
        assert!(down.contains("cases_ma_growth_lag14"));
        assert!(down.contains("cases_ma_national_logdiff_lag14"));
        assert!(!down.contains("masks_public_lag14"));
        let lags = pl.min_lag_from("cases_ma");
        assert_eq!(lags["cases_ma_growth"], 0);
        assert_eq!(lags["cases_ma_growth_lag14"], 14);
        assert_eq!(pl.national_outputs_from("cases_ma"), vec!["cases_ma_national".to_string()]);
        assert_eq!(pl.growth_step_for("cases_ma_growth").unwrap().0, "cases_ma");
    }

    #[test]
    fn overrides_propagate_downstream() {
        let pl = pipeline();
        let base = pl.run(&panel()).unwrap();
        let zeros: Arc<[f64]> = vec![0.0; base.n_rows()].into();
        let ov = Overrides::from([("pub".to_string(), zeros.clone())]);
        let p = pl.run_with_overrides(&panel(), &ov).unwrap();
        assert!(p.values("masks_public_lag14").unwrap().iter().all(|v| v.is_nan() || *v == 0.0));
        let same = p.values("cases_ma").unwrap().iter().zip(base.values("cases_ma").unwrap());
        assert!(same.into_iter().all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn serde_round_trip() {
        let json = serde_json::to_string(&pipeline()).unwrap();
        let back: Pipeline = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pipeline());
        let short: Pipeline = serde_json::from_str(r#"{"steps":[{"op":"lag","column":"x"}]}"#).unwrap();
        assert_eq!(short.outputs(&short.steps[0])[0].0, "x_lag14");
    }
}
