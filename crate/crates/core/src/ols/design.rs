use std::collections::{BTreeSet, HashMap};

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spec::RegressionSpec;
use crate::error::{Error, Result};
use crate::panel::{ColumnRole, PanelDataset};

/// What a design column represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Intercept,
    /// A regressor whose panel column has the policy role.
    Policy,
    Regressor,
    Covariate,
    Interaction,
    StateEffect,
    TimeEffect,
}

/// Identifies the panel cell behind a design row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowKey {
    pub state: usize,
    pub date: NaiveDate,
    pub panel_row: usize,
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub rows: Vec<RowKey>,
    /// Cluster of each row, numbered from zero in order of first appearance.
    pub clusters: Vec<usize>,
    pub n_clusters: usize,
    pub column_names: Vec<String>,
    pub term_kinds: Vec<TermKind>,
    /// State names indexed by `RowKey::state`.
    pub state_names: Vec<String>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownCoefficient(name.to_string()))
    }

    /// A copy holding only the rows for which `keep` returns true.
    pub fn select_rows(&self, keep: impl Fn(usize) -> bool) -> DesignMatrix {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| keep(i)).collect();
        let x = DMatrix::from_fn(idx.len(), self.k(), |r, c| self.x[(idx[r], c)]);
        let y = DVector::from_fn(idx.len(), |r, _| self.y[idx[r]]);
        let (clusters, n_clusters) = renumber(idx.iter().map(|&i| self.clusters[i]));
        DesignMatrix {
            y,
            x,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            clusters,
            n_clusters,
            column_names: self.column_names.clone(),
            term_kinds: self.term_kinds.clone(),
            state_names: self.state_names.clone(),
        }
    }
}

fn renumber<K: std::hash::Hash + Eq>(keys: impl Iterator<Item = K>) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = keys
        .map(|k| {
            let next = ids.len();
            *ids.entry(k).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn month_label(d: NaiveDate) -> String {
    format!("{:04}-{:02}", d.year(), d.month())
}

/// Builds the regression design from a panel that already holds every
/// referenced column.
///
/// Rows outside the sample window, or missing any outcome, regressor or
/// covariate value, are dropped. Columns come in this order: intercept,
/// regressors, covariates, covariate-by-month interactions, state effects,
/// date effects. Indicator sets drop their first level.
pub fn build_design(panel: &PanelDataset, spec: &RegressionSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let y_all = panel.values(&spec.outcome)?;
    let reg: Vec<&[f64]> = spec.regressors.iter().map(|r| panel.values(r)).collect::<Result<_>>()?;
    let cov: Vec<&[f64]> = spec.covariates.iter().map(|c| panel.values(c)).collect::<Result<_>>()?;
    let cluster_col = match spec.cluster_by.as_str() {
        "state" | "date" => None,
        other => Some(panel.values(other)?),
    };

    let row_states = panel.row_states();
    let row_dates = panel.row_dates();
    let keep: Vec<usize> = (0..panel.n_rows())
        .filter(|&i| spec.sample_window.is_none_or(|w| w.contains(row_dates[i])))
        .filter(|&i| !y_all[i].is_nan())
        .filter(|&i| reg.iter().chain(&cov).all(|c| !c[i].is_nan()))
        .filter(|&i| cluster_col.is_none_or(|c| !c[i].is_nan()))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyDesign);
    }

    let mut names = Vec::new();
    let mut kinds = Vec::new();
    if spec.intercept {
        names.push("intercept".to_string());
        kinds.push(TermKind::Intercept);
    }
    for r in &spec.regressors {
        names.push(r.clone());
        kinds.push(match panel.role(r)? {
            ColumnRole::Policy => TermKind::Policy,
            _ => TermKind::Regressor,
        });
    }
    for c in &spec.covariates {
        names.push(c.clone());
        kinds.push(TermKind::Covariate);
    }
    let months: Vec<String> = if spec.month_interactions {
        let set: BTreeSet<String> = keep.iter().map(|&i| month_label(row_dates[i])).collect();
        set.into_iter().skip(1).collect()
    } else {
        Vec::new()
    };
    for c in &spec.covariates {
        for m in &months {
            names.push(format!("{c}:{m}"));
            kinds.push(TermKind::Interaction);
        }
    }
    let states: Vec<usize> = if spec.state_effects {
        let set: BTreeSet<usize> = keep.iter().map(|&i| row_states[i]).collect();
        set.into_iter().skip(1).collect()
    } else {
        Vec::new()
    };
    let state_names: Vec<String> = panel.state_names().map(str::to_string).collect();
    for &s in &states {
        names.push(format!("state[{}]", state_names[s]));
        kinds.push(TermKind::StateEffect);
    }
    let dates: Vec<NaiveDate> = if spec.time_effects {
        let set: BTreeSet<NaiveDate> = keep.iter().map(|&i| row_dates[i]).collect();
        set.into_iter().skip(1).collect()
    } else {
        Vec::new()
    };
    for d in &dates {
        names.push(format!("date[{d}]"));
        kinds.push(TermKind::TimeEffect);
    }

    let n = keep.len();
    let k = names.len();
    let mut x = DMatrix::zeros(n, k);
    let state_pos: HashMap<usize, usize> = states.iter().enumerate().map(|(j, &s)| (s, j)).collect();
    let date_pos: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(j, &d)| (d, j)).collect();
    let month_pos: HashMap<&str, usize> = months.iter().enumerate().map(|(j, m)| (m.as_str(), j)).collect();
    let inter0 = spec.intercept as usize + reg.len() + cov.len();
    let state0 = inter0 + cov.len() * months.len();
    let date0 = state0 + states.len();
    for (r, &i) in keep.iter().enumerate() {
        let mut j = 0;
        if spec.intercept {
            x[(r, 0)] = 1.0;
            j = 1;
        }
        for c in reg.iter().chain(&cov) {
            x[(r, j)] = c[i];
            j += 1;
        }
        if let Some(&m) = month_pos.get(month_label(row_dates[i]).as_str()) {
            for (ci, c) in cov.iter().enumerate() {
                x[(r, inter0 + ci * months.len() + m)] = c[i];
            }
        }
        if let Some(&s) = state_pos.get(&row_states[i]) {
            x[(r, state0 + s)] = 1.0;
        }
        if let Some(&d) = date_pos.get(&row_dates[i]) {
            x[(r, date0 + d)] = 1.0;
        }
    }
    let y = DVector::from_iterator(n, keep.iter().map(|&i| y_all[i]));

    let (clusters, n_clusters) = match (spec.cluster_by.as_str(), cluster_col) {
        (_, Some(col)) => renumber(keep.iter().map(|&i| col[i].to_bits())),
        ("date", None) => renumber(keep.iter().map(|&i| row_dates[i])),
        _ => renumber(keep.iter().map(|&i| row_states[i])),
    };
    let rows = keep
        .iter()
        .map(|&i| RowKey {
            state: row_states[i],
            date: row_dates[i],
            panel_row: i,
        })
        .collect();

    Ok(DesignMatrix {
        y,
        x,
        rows,
        clusters,
        n_clusters,
        column_names: names,
        term_kinds: kinds,
        state_names,
    })
}
