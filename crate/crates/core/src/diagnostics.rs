//! Leave-one-out influence of observations on fitted coefficients.
//!
//! `dfbeta` uses the closed form `-(X'X)^-1 x_i e_i / (1 - h_i)` with the full
//! regressor row `x_i`; `loo_oracle` refits without the row and is what the
//! closed form is checked against.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ols::{fit_ols, DesignMatrix, FitResult};

/// Leverages at or above `1 - LEVERAGE_EPS` make deletion undefined.
pub const LEVERAGE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord {
    pub state: String,
    pub date: NaiveDate,
    pub target: String,
    /// Coefficient after deleting the row minus the full-sample coefficient.
    /// Positive means the row pulls the estimate down.
    pub delta_beta: f64,
    pub leverage: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateInfluence {
    pub state: String,
    pub sum: f64,
    pub max_abs: f64,
    pub count: usize,
}

/// Signed deletion displacement of `target` for every design row, in row order.
pub fn dfbeta(fit: &FitResult, design: &DesignMatrix, target: &str) -> Result<Vec<InfluenceRecord>> {
    let j = fit.index_of(target)?;
    if let Some((row, &h)) = fit.hat.iter().enumerate().find(|(_, &h)| h >= 1.0 - LEVERAGE_EPS) {
        return Err(Error::LeverageOne { row, leverage: h });
    }
    let a_j = fit.xtx_inv.row(j);
    Ok((0..design.n())
        .map(|i| {
            let h = fit.hat[i];
            let e = fit.resid[i];
            let ax = a_j.dot(&design.x.row(i));
            let key = &design.rows[i];
            InfluenceRecord {
                state: design.state_names.get(key.state).cloned().unwrap_or_else(|| key.state.to_string()),
                date: key.date,
                target: target.to_string(),
                delta_beta: -ax * e / (1.0 - h),
                leverage: h,
                residual: e,
            }
        })
        .collect())
}

/// Per-state sum, largest absolute value and count, ordered by `|sum|`
/// descending (ties broken by state name).
pub fn state_influence(records: &[InfluenceRecord]) -> Vec<StateInfluence> {
    let mut by_state: BTreeMap<&str, StateInfluence> = BTreeMap::new();
    for r in records {
        let s = by_state.entry(&r.state).or_insert_with(|| StateInfluence {
            state: r.state.clone(),
            sum: 0.0,
            max_abs: 0.0,
            count: 0,
        });
        s.sum += r.delta_beta;
        s.max_abs = s.max_abs.max(r.delta_beta.abs());
        s.count += 1;
    }
    let mut out: Vec<StateInfluence> = by_state.into_values().collect();
    out.sort_by(|a, b| b.sum.abs().total_cmp(&a.sum.abs()).then_with(|| a.state.cmp(&b.state)));
    out
}

/// Refits without `row` and returns the change in `target`.
pub fn loo_oracle(design: &DesignMatrix, row: usize, target: &str) -> Result<f64> {
    if design.n() <= design.k() {
        return Err(Error::Underdetermined {
            n: design.n().saturating_sub(1),
            k: design.k(),
        });
    }
    let j = design.column_index(target)?;
    let full = fit_ols(design)?;
    let reduced = fit_ols(&design.select_rows(|i| i != row))?;
    Ok(reduced.beta[j] - full.beta[j])
}

pub fn write_influence_csv<W: Write>(records: &[InfluenceRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
