//! Counterfactual projections: one from a fitted growth regression, one from
//! re-running the SIR model, so the two can be compared.
//!
//! The regression projection tracks deviations from the factual path. With
//! `d_t` the change in log weekly cases and `w` the differencing window,
//!
//! ```text
//! d_t   = d_{t-w} + (x_cf_t - x_t)' beta
//! dC_cf = dC + (exp(d_t) - 1) * max(dC, floor)
//! ```
//!
//! and cumulative counts accumulate the weekly deviations. Regressors are
//! rebuilt from the projected counts through the analysis pipeline every
//! `lag` days, where `lag` is the shortest delay between the counts and any
//! regressor derived from them. An unchanged policy gives a zero deviation
//! everywhere, so the factual path comes back exactly.

use std::collections::HashSet;
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sir::{simulate_schedule, EpidemicPath, SirConfig};
use crate::error::{Error, Result};
use crate::ols::{AnalysisSpec, FitResult};
use crate::panel::{ColumnRole, Overrides, PanelDataset};
use crate::stats;

/// Largest log deviation accepted before a path is declared divergent.
const MAX_LOG_DEVIATION: f64 = 700.0;

/// Sets `column` to `value` from `from` onward in the listed states (all
/// states when `states` is `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyChange {
    pub column: String,
    pub value: f64,
    pub from: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
}

fn default_draws() -> usize {
    1000
}
fn default_level() -> f64 {
    0.90
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualOptions {
    /// Coefficient draws for the band; 0 gives a band collapsed on the point path.
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    /// Recompute national aggregates from projected counts. Turn off when
    /// changing a single real state, whose neighbours keep their factual paths.
    #[serde(default = "yes")]
    pub national_feedback: bool,
}

impl Default for CounterfactualOptions {
    fn default() -> Self {
        CounterfactualOptions {
            draws: default_draws(),
            level: default_level(),
            seed: 0,
            national_feedback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub state: String,
    /// Projected over factual counts minus one; NaN where the state has no data.
    pub relative_effect: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    /// Column the paths are measured in (the cumulative count behind the outcome).
    pub measure: String,
    pub dates: Vec<NaiveDate>,
    /// Sums over the changed states.
    pub factual: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub relative_effect: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub n_draws: usize,
    pub states: Vec<StatePath>,
}

/// Everything that stays fixed across coefficient draws.
struct Projector<'a> {
    analysis: &'a AnalysisSpec,
    panel: &'a PanelDataset,
    factual: PanelDataset,
    base: String,
    window: usize,
    floor: f64,
    block: usize,
    /// Fit columns that are panel columns, as (fit index, name).
    terms: Vec<(usize, String)>,
    fixed_overrides: Overrides,
    from: NaiveDate,
    last: NaiveDate,
}

impl Projector<'_> {
    /// Projected base column for coefficients `beta` (aligned with `terms`).
    fn project(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let cf = self.factual.values(&self.base)?;
        let n = cf.len();
        let mut log_dev = vec![0.0; n];
        let mut count_dev = vec![0.0; n];
        let mut projected = cf.to_vec();
        let factual_terms: Vec<&[f64]> = self
            .terms
            .iter()
            .map(|(_, name)| self.factual.values(name))
            .collect::<Result<_>>()?;

        let mut t0 = self.from;
        while t0 <= self.last {
            let t1 = t0 + Days::new(self.block as u64);
            let mut overrides = self.fixed_overrides.clone();
            overrides.insert(self.base.clone(), Arc::from(projected.as_slice()));
            let current = self.analysis.transforms.run_with_overrides(self.panel, &overrides)?;
            let cur_terms: Vec<&[f64]> = self
                .terms
                .iter()
                .map(|(_, name)| current.values(name))
                .collect::<Result<_>>()?;
            for span in self.panel.states() {
                for i in self.window..span.len {
                    let date = span.date_at(i);
                    if date < t0 || date >= t1 {
                        continue;
                    }
                    let row = span.offset + i;
                    let prev = row - self.window;
                    let dc = cf[row] - cf[prev];
                    if !dc.is_finite() {
                        continue;
                    }
                    let dy: f64 = (0..self.terms.len())
                        .map(|j| {
                            let diff = cur_terms[j][row] - factual_terms[j][row];
                            if diff.is_nan() {
                                0.0
                            } else {
                                diff * beta[j]
                            }
                        })
                        .sum();
                    let d = log_dev[prev] + dy;
                    if !(d.abs() <= MAX_LOG_DEVIATION) {
                        return Err(Error::NonconvergentPath(date));
                    }
                    log_dev[row] = d;
                    count_dev[row] = count_dev[prev] + d.exp_m1() * dc.max(self.floor);
                    projected[row] = cf[row] + count_dev[row];
                    if !projected[row].is_finite() {
                        return Err(Error::NonconvergentPath(date));
                    }
                }
            }
            t0 = t1;
        }
        Ok(projected)
    }
}

fn relative(cf: f64, f: f64) -> f64 {
    if f == 0.0 {
        0.0
    } else {
        cf / f - 1.0
    }
}

pub fn regression_counterfactual(
    panel: &PanelDataset,
    analysis: &AnalysisSpec,
    fit: &FitResult,
    change: &PolicyChange,
    opts: &CounterfactualOptions,
) -> Result<CounterfactualResult> {
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidConfig(format!("band level {} outside (0, 1)", opts.level)));
    }
    let pipeline = &analysis.transforms;
    let (base, params) = pipeline.growth_step_for(&analysis.model.outcome).ok_or_else(|| {
        Error::InvalidSpec(format!(
            "outcome `{}` is not produced by a weekly growth step",
            analysis.model.outcome
        ))
    })?;
    let base = base.to_string();
    let role = panel.role(&change.column)?;
    if role != ColumnRole::Policy {
        return Err(Error::RoleMismatch {
            column: change.column.clone(),
            expected: "policy",
            found: role.name(),
        });
    }
    let selected: Vec<usize> = match &change.states {
        Some(names) => names.iter().map(|s| panel.state_index(s)).collect::<Result<_>>()?,
        None => (0..panel.states().len()).collect(),
    };

    let factual = pipeline.run(panel)?;
    let terms: Vec<(usize, String)> = fit
        .column_names
        .iter()
        .enumerate()
        .filter(|(_, name)| factual.has_column(name))
        .map(|(j, name)| (j, name.clone()))
        .collect();

    let lags = pipeline.min_lag_from(&base);
    let block = terms.iter().filter_map(|(_, n)| lags.get(n)).min().copied();
    let block = match block {
        Some(0) => {
            return Err(Error::InvalidSpec(format!(
                "a regressor depends on `{base}` without delay, so the projection cannot be iterated"
            )))
        }
        Some(l) => l,
        None => usize::MAX / 4,
    };

    let mut policy = panel.values(&change.column)?.to_vec();
    for &s in &selected {
        let span = &panel.states()[s];
        for i in 0..span.len {
            if span.date_at(i) >= change.from {
                policy[span.offset + i] = change.value;
            }
        }
    }
    let mut fixed_overrides = Overrides::from([(change.column.clone(), Arc::from(policy))]);
    if !opts.national_feedback {
        for nat in pipeline.national_outputs_from(&base) {
            fixed_overrides.insert(nat.clone(), factual.column(&nat)?.values.clone());
        }
    }

    let (first, last) = panel.date_range().ok_or(Error::EmptyDesign)?;
    let proj = Projector {
        analysis,
        panel,
        factual: factual.clone(),
        base: base.clone(),
        window: params.diff_window,
        floor: params.log_floor,
        block,
        terms: terms.clone(),
        fixed_overrides,
        from: change.from.max(first),
        last,
    };

    let n_days = (last - first).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = (0..n_days).map(|d| first + Days::new(d as u64)).collect();
    let cf_base = factual.values(&base)?;
    let aggregate = |path: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n_days];
        for &s in &selected {
            let span = &panel.states()[s];
            let shift = (span.start - first).num_days() as usize;
            for i in 0..span.len {
                let row = span.offset + i;
                if cf_base[row].is_finite() {
                    out[shift + i] += path[row];
                }
            }
        }
        out
    };

    let beta_hat: Vec<f64> = terms.iter().map(|(j, _)| fit.beta[*j]).collect();
    let point = proj.project(&beta_hat)?;
    let factual_agg = aggregate(cf_base);
    let point_agg = aggregate(&point);
    let rel_point: Vec<f64> = point_agg.iter().zip(&factual_agg).map(|(c, f)| relative(*c, *f)).collect();

    let (lower, upper) = if opts.draws == 0 {
        (rel_point.clone(), rel_point.clone())
    } else {
        let k = terms.len();
        let cov = DMatrix::from_fn(k, k, |a, b| fit.cov[(terms[a].0, terms[b].0)]);
        let eig = SymmetricEigen::new(cov);
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        let draws: Vec<Vec<f64>> = (0..opts.draws)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(r as u64);
                let z = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                let shift = &root * z;
                let beta: Vec<f64> = beta_hat.iter().zip(shift.iter()).map(|(b, s)| b + s).collect();
                let agg = aggregate(&proj.project(&beta)?);
                Ok(agg.iter().zip(&factual_agg).map(|(c, f)| relative(*c, *f)).collect())
            })
            .collect::<Result<_>>()?;
        let lo_p = (1.0 - opts.level) / 2.0;
        let hi_p = 1.0 - lo_p;
        let mut lower = Vec::with_capacity(n_days);
        let mut upper = Vec::with_capacity(n_days);
        for d in 0..n_days {
            let at: Vec<f64> = draws.iter().map(|v| v[d]).collect();
            let q = stats::quantiles(&at, &[lo_p, hi_p]);
            lower.push(q[0].min(rel_point[d]));
            upper.push(q[1].max(rel_point[d]));
        }
        (lower, upper)
    };

    let keep: HashSet<usize> = selected.iter().copied().collect();
    let states = panel
        .states()
        .iter()
        .enumerate()
        .filter(|(s, _)| keep.contains(s))
        .map(|(_, span)| {
            let mut rel = vec![f64::NAN; n_days];
            let shift = (span.start - first).num_days() as usize;
            for i in 0..span.len {
                let row = span.offset + i;
                if cf_base[row].is_finite() {
                    rel[shift + i] = relative(point[row], cf_base[row]);
                }
            }
            StatePath {
                state: span.name.clone(),
                relative_effect: rel,
            }
        })
        .collect();

    Ok(CounterfactualResult {
        measure: base,
        dates,
        factual: factual_agg,
        counterfactual: point_agg,
        relative_effect: rel_point,
        lower,
        upper,
        level: opts.level,
        n_draws: opts.draws,
        states,
    })
}

/// Relative change in cumulative cases when one policy is removed, across
/// the members of a simulated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirCounterfactual {
    pub policy: String,
    /// `members[k][d]`: path `k` on day `d`.
    pub members: Vec<Vec<f64>>,
    /// Relative change of the cohort's summed cumulative cases.
    pub aggregate: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

/// Re-simulates every path with policy `removal` switched off, entirely or
/// from day `from_day` onward.
pub fn sir_counterfactual(
    config: &SirConfig,
    paths: &[EpidemicPath],
    removal: usize,
    from_day: Option<usize>,
    level: f64,
) -> Result<SirCounterfactual> {
    config.validate()?;
    if removal >= config.n_policies() {
        return Err(Error::InvalidConfig(format!("no policy with index {removal}")));
    }
    if paths.is_empty() {
        return Err(Error::InvalidConfig("empty cohort".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("band level {level} outside (0, 1)")));
    }
    let days = paths[0].s.len();
    if let Some(p) = paths.iter().find(|p| p.s.len() != days) {
        return Err(Error::HorizonMismatch(days - 1, p.s.len() - 1));
    }
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = paths
        .par_iter()
        .map(|p| {
            let mut windows = p.policies.clone();
            match from_day {
                Some(d) => windows[removal].until = Some(d),
                None => windows[removal].onset = None,
            }
            let cf = simulate_schedule(config, &windows, p.initial_infected)?;
            Ok((p.cumulative_cases(), cf.cumulative_cases()))
        })
        .collect::<Result<_>>()?;
    let members: Vec<Vec<f64>> = pairs
        .iter()
        .map(|(f, c)| c.iter().zip(f).map(|(c, f)| relative(*c, *f)).collect())
        .collect();
    let aggregate = (0..days)
        .map(|d| {
            let f: f64 = pairs.iter().map(|(f, _)| f[d]).sum();
            let c: f64 = pairs.iter().map(|(_, c)| c[d]).sum();
            relative(c, f)
        })
        .collect();
    let lo_p = (1.0 - level) / 2.0;
    let mut median = Vec::with_capacity(days);
    let mut lower = Vec::with_capacity(days);
    let mut upper = Vec::with_capacity(days);
    for d in 0..days {
        let at: Vec<f64> = members.iter().map(|m| m[d]).collect();
        let q = stats::quantiles(&at, &[lo_p, 0.5, 1.0 - lo_p]);
        lower.push(q[0]);
        median.push(q[1]);
        upper.push(q[2]);
    }
    Ok(SirCounterfactual {
        policy: config.policy_names[removal].clone(),
        members,
        aggregate,
        median,
        lower,
        upper,
        level,
    })
}
