//! Synthetic state panels whose outcome ignores the mask policies, for
//! checking that the placebo harness centers on zero.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ols::{AnalysisSpec, RegressionSpec};
use crate::panel::{lag_name, ColumnRole, PanelBuilder, PanelDataset, Pipeline, TransformSpec, MASKS_EMPLOYEES_ONLY, MASKS_PUBLIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullPanelSpec {
    pub n_states: usize,
    pub n_days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    /// Days between the mask columns and the outcome in the analysis.
    pub lag: usize,
}

impl Default for NullPanelSpec {
    fn default() -> Self {
        NullPanelSpec {
            n_states: 51,
            n_days: 90,
            start: NaiveDate::from_ymd_opt(2020, 3, 7).expect("valid date"),
            seed: 0,
            lag: 14,
        }
    }
}

/// Panel with staggered mask mandates (a first employee-only phase, then a
/// public mandate, either possibly never) and an outcome `y` made of a
/// common date shock, a state level and independent noise. Returns the
/// panel with an analysis regressing `y` on both lagged mask columns with
/// date effects.
pub fn null_panel(spec: &NullPanelSpec) -> Result<(PanelDataset, AnalysisSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_days;
    let shocks: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut b = PanelBuilder::new();
    let mut emp_only = Vec::with_capacity(spec.n_states * n);
    let mut public = Vec::with_capacity(spec.n_states * n);
    let mut y = Vec::with_capacity(spec.n_states * n);
    for s in 0..spec.n_states {
        b = b.state(&format!("state{s:02}"), spec.start, n);
        let emp_on = if rng.random::<f64>() < 0.8 {
            rng.random_range(0..n)
        } else {
            n
        };
        let pub_on = if emp_on < n && rng.random::<f64>() < 0.6 {
            rng.random_range(emp_on..n)
        } else {
            n
        };
        let level: f64 = rng.sample(StandardNormal);
        for t in 0..n {
            emp_only.push((emp_on <= t && t < pub_on) as u8 as f64);
            public.push((t >= pub_on) as u8 as f64);
            y.push(shocks[t] + level + rng.sample::<f64, _>(StandardNormal));
        }
    }
    let panel = b
        .column(MASKS_EMPLOYEES_ONLY, ColumnRole::Policy, emp_only)
        .column(MASKS_PUBLIC, ColumnRole::Policy, public)
        .column("y", ColumnRole::Derived, y)
        .build()?;
    let transforms = Pipeline::new(TransformSpec::default())
        .lag(MASKS_EMPLOYEES_ONLY, spec.lag)
        .lag(MASKS_PUBLIC, spec.lag);
    let emp = lag_name(MASKS_EMPLOYEES_ONLY, spec.lag);
    let publ = lag_name(MASKS_PUBLIC, spec.lag);
    let mut model = RegressionSpec::new("y", &[&emp, &publ]);
    model.time_effects = true;
    Ok((panel, AnalysisSpec { transforms, model }))
}
