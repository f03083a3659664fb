//! Permutation placebo: reassign whole state policy histories across states,
//! rebuild the derived columns, and re-estimate.
//!
//! Replicate `r` draws its permutation from a ChaCha8 stream keyed by
//! `(seed, r)`, so results do not depend on thread scheduling.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ols::{build_design, fit_ols, AnalysisSpec, FitResult};
use crate::panel::{Column, ColumnRole, PanelDataset, MASKS_EMPLOYEES_ONLY, MASKS_PUBLIC};
use crate::stats;

/// `source[s]` is the state whose series state `s` receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    pub source: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            source: (0..n).collect(),
        }
    }

    /// Uniform over all bijections, fixed points included.
    pub fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut source: Vec<usize> = (0..n).collect();
        source.shuffle(rng);
        Permutation { source }
    }

    /// Permutation for replicate `rep` of a run seeded with `seed`.
    pub fn for_replicate(n: usize, seed: u64, rep: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep);
        Self::random(n, &mut rng)
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.source.len()];
        self.source.iter().all(|&s| s < seen.len() && !std::mem::replace(&mut seen[s], true))
    }
}

/// Gives each state the listed columns' series from `perm.source[state]`,
/// matched by date. Dates the source state lacks become missing. All listed
/// columns move under the same permutation.
pub fn permute_masks(panel: &PanelDataset, columns: &[String], perm: &Permutation) -> Result<PanelDataset> {
    let states = panel.states();
    if perm.source.len() != states.len() || !perm.is_bijection() {
        return Err(Error::InvalidConfig(format!(
            "permutation over {} entries is not a bijection on {} states",
            perm.source.len(),
            states.len()
        )));
    }
    let mut out = panel.clone();
    for name in columns {
        let col = panel.column(name)?;
        let mut values = col.values.to_vec();
        for (s, span) in states.iter().enumerate() {
            let src = &states[perm.source[s]];
            for i in 0..span.len {
                values[span.offset + i] = src
                    .index_of(span.date_at(i))
                    .map_or(f64::NAN, |j| col.values[src.offset + j]);
            }
        }
        out.insert_column(name.clone(), Column { role: col.role, values: values.into() });
    }
    Ok(out)
}

fn default_permuted() -> Vec<String> {
    vec![MASKS_EMPLOYEES_ONLY.to_string(), MASKS_PUBLIC.to_string()]
}

fn default_reps() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboConfig {
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Raw policy columns permuted jointly.
    #[serde(default = "default_permuted")]
    pub permuted_columns: Vec<String>,
    /// Coefficients recorded per replicate. Defaults to every regressor
    /// derived from a permuted column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    pub analysis: AnalysisSpec,
}

impl PlaceboConfig {
    pub fn new(analysis: AnalysisSpec, seed: u64) -> Self {
        PlaceboConfig {
            n_reps: default_reps(),
            seed,
            permuted_columns: default_permuted(),
            targets: None,
            analysis,
        }
    }

    fn resolve_targets(&self) -> Vec<String> {
        if let Some(t) = &self.targets {
            return t.clone();
        }
        let roots: Vec<&str> = self.permuted_columns.iter().map(String::as_str).collect();
        let down = self.analysis.transforms.downstream_of(&roots);
        self.analysis
            .model
            .regressors
            .iter()
            .filter(|r| down.contains(*r))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboResult {
    pub seed: u64,
    pub targets: Vec<String>,
    /// Estimates on the unpermuted panel, one per target.
    pub observed: Vec<f64>,
    /// Per replicate: target estimates, or `None` when the fit failed.
    pub replicates: Vec<Option<Vec<f64>>>,
    pub permutations: Vec<Permutation>,
}

impl PlaceboResult {
    pub fn n_failed(&self) -> usize {
        self.replicates.iter().filter(|r| r.is_none()).count()
    }

    /// Successful estimates of target `t`, in replicate order.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.replicates.iter().flatten().map(|v| v[t]).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["replicate".to_string(), "ok".to_string()];
        header.extend(self.targets.iter().cloned());
        w.write_record(&header)?;
        for (r, rep) in self.replicates.iter().enumerate() {
            let mut rec = vec![r.to_string(), rep.is_some().to_string()];
            match rep {
                Some(v) => rec.extend(v.iter().map(|x| x.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), self.targets.len())),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn estimate(panel: &PanelDataset, analysis: &AnalysisSpec, targets: &[String]) -> Result<Vec<f64>> {
    let derived = analysis.transforms.run(panel)?;
    let design = build_design(&derived, &analysis.model)?;
    let fit: FitResult = fit_ols(&design)?;
    targets.iter().map(|t| fit.coef(t)).collect()
}

pub fn run_placebo(panel: &PanelDataset, config: &PlaceboConfig) -> Result<PlaceboResult> {
    if config.n_reps == 0 {
        return Err(Error::InvalidConfig("n_reps must be at least 1".into()));
    }
    if config.permuted_columns.is_empty() {
        return Err(Error::InvalidConfig("no columns to permute".into()));
    }
    let unique: BTreeSet<&String> = config.permuted_columns.iter().collect();
    if unique.len() != config.permuted_columns.len() {
        return Err(Error::InvalidConfig("permuted column listed twice".into()));
    }
    for c in &config.permuted_columns {
        let role = panel.role(c)?;
        if role != ColumnRole::Policy {
            return Err(Error::RoleMismatch {
                column: c.clone(),
                expected: "policy",
                found: role.name(),
            });
        }
    }
    let targets = config.resolve_targets();
    if targets.is_empty() {
        return Err(Error::InvalidConfig("no regressor depends on the permuted columns".into()));
    }
    let observed = estimate(panel, &config.analysis, &targets)?;

    let n_states = panel.states().len();
    let runs: Vec<(Permutation, Option<Vec<f64>>)> = (0..config.n_reps)
        .into_par_iter()
        .map(|r| {
            let perm = Permutation::for_replicate(n_states, config.seed, r as u64);
            let est = permute_masks(panel, &config.permuted_columns, &perm)
                .and_then(|p| estimate(&p, &config.analysis, &targets))
                .ok();
            (perm, est)
        })
        .collect();
    if runs.iter().all(|(_, e)| e.is_none()) {
        return Err(Error::AllReplicatesFailed(config.n_reps));
    }
    let (permutations, replicates) = runs.into_iter().unzip();
    Ok(PlaceboResult {
        seed: config.seed,
        targets,
        observed,
        replicates,
        permutations,
    })
}

/// Box-plot summary of one target's placebo distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboSummary {
    pub target: String,
    pub observed: f64,
    pub min: f64,
    pub p05: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
    /// Standard error of `mean` across replicates.
    pub mean_se: f64,
    pub n_ok: usize,
    pub failures: usize,
}

/// One summary per target with at least one successful replicate.
pub fn summarize_placebo(result: &PlaceboResult) -> Vec<PlaceboSummary> {
    let failures = result.n_failed();
    result
        .targets
        .iter()
        .enumerate()
        .filter_map(|(t, name)| {
            let vals = result.column(t);
            if vals.is_empty() {
                return None;
            }
            let q = stats::quantiles(&vals, &[0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0]);
            let mean_se = if vals.len() > 1 {
                stats::std_dev(&vals) / (vals.len() as f64).sqrt()
            } else {
                0.0
            };
            Some(PlaceboSummary {
                target: name.clone(),
                observed: result.observed[t],
                min: q[0],
                p05: q[1],
                q1: q[2],
                median: q[3],
                q3: q[4],
                p95: q[5],
                max: q[6],
                mean: stats::mean(&vals),
                mean_se,
                n_ok: vals.len(),
                failures,
            })
        })
        .collect()
}
