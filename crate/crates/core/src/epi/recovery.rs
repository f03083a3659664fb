//! Fit the growth regression to simulated cohorts and check whether the
//! injected policy effects come back with the right sign.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::{generate_cohort, paths_to_panel, CohortSpec};
use super::sir::SirConfig;
use crate::error::Result;
use crate::ols::{build_design, fit_ols, AnalysisSpec, FitResult, RegressionSpec};
use crate::panel::{lag_name, national_name, GrowthNames, PanelDataset, Pipeline, TransformSpec};
use crate::stats;

/// Shape of the regression fitted to a simulated cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryTemplate {
    /// Days between the regressors and the outcome.
    pub lag: usize,
    /// Date indicators. They absorb the common time path shared by paths.
    #[serde(default)]
    pub time_effects: bool,
    /// Lagged national growth and log weekly cases as extra regressors.
    #[serde(default)]
    pub national: bool,
}

impl RecoveryTemplate {
    pub fn new(lag: usize) -> Self {
        RecoveryTemplate {
            lag,
            time_effects: false,
            national: false,
        }
    }

    /// Growth of cumulative `cases` on lagged policy indicators, lagged own
    /// growth and lagged log weekly cases, with state-clustered errors.
    pub fn analysis(&self, config: &SirConfig) -> AnalysisSpec {
        let g = GrowthNames::for_column("cases");
        let mut pipeline = Pipeline::new(TransformSpec::default()).growth("cases");
        let mut regressors = Vec::new();
        for p in &config.policy_names {
            pipeline = pipeline.lag(p, self.lag);
            regressors.push(lag_name(p, self.lag));
        }
        for col in [&g.growth, &g.log_diff] {
            pipeline = pipeline.lag(col, self.lag);
            regressors.push(lag_name(col, self.lag));
        }
        if self.national {
            let nat = national_name("cases");
            let gn = GrowthNames::for_column(&nat);
            pipeline = pipeline.national("cases").growth(&nat);
            for col in [&gn.growth, &gn.log_diff] {
                pipeline = pipeline.lag(col, self.lag);
                regressors.push(lag_name(col, self.lag));
            }
        }
        let refs: Vec<&str> = regressors.iter().map(String::as_str).collect();
        let mut model = RegressionSpec::new(&g.growth, &refs);
        model.time_effects = self.time_effects;
        AnalysisSpec {
            transforms: pipeline,
            model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub policy: String,
    pub estimate: f64,
    pub std_error: f64,
}

/// Fits the template to a cohort panel and returns the fit with one row per
/// policy coefficient.
pub fn recovery_experiment(
    panel: &PanelDataset,
    config: &SirConfig,
    template: &RecoveryTemplate,
) -> Result<(FitResult, Vec<RecoveryRow>)> {
    let analysis = template.analysis(config);
    let derived = analysis.transforms.run(panel)?;
    let fit = fit_ols(&build_design(&derived, &analysis.model)?)?;
    let rows = config
        .policy_names
        .iter()
        .map(|p| {
            let name = lag_name(p, template.lag);
            Ok(RecoveryRow {
                policy: p.clone(),
                estimate: fit.coef(&name)?,
                std_error: fit.std_error(&name)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((fit, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub policies: Vec<String>,
    /// `estimates[r][j]`: policy `j` in cohort `r`.
    pub estimates: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Monte-Carlo standard error of each mean.
    pub mean_se: Vec<f64>,
    /// Share of cohorts where every policy coefficient is negative.
    pub share_all_negative: f64,
}

impl RecoverySummary {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cohort".to_string()];
        header.extend(self.policies.iter().cloned());
        w.write_record(&header)?;
        for (r, est) in self.estimates.iter().enumerate() {
            let mut rec = vec![r.to_string()];
            rec.extend(est.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the experiment on `n_cohorts` cohorts; cohort `r` uses seed
/// `base.seed + r`.
pub fn repeated_recovery(
    config: &SirConfig,
    base: &CohortSpec,
    template: &RecoveryTemplate,
    n_cohorts: usize,
) -> Result<RecoverySummary> {
    let estimates: Vec<Vec<f64>> = (0..n_cohorts)
        .into_par_iter()
        .map(|r| {
            let cohort = CohortSpec {
                seed: base.seed.wrapping_add(r as u64),
                ..base.clone()
            };
            let paths = generate_cohort(config, &cohort)?;
            let panel = paths_to_panel(config, &paths)?;
            let (_, rows) = recovery_experiment(&panel, config, template)?;
            Ok(rows.iter().map(|r| r.estimate).collect())
        })
        .collect::<Result<_>>()?;
    let k = config.n_policies();
    let column = |j: usize| estimates.iter().map(|e| e[j]).collect::<Vec<f64>>();
    let mean = (0..k).map(|j| stats::mean(&column(j))).collect();
    let mean_se = (0..k)
        .map(|j| {
            let c = column(j);
            if c.len() > 1 {
                stats::std_dev(&c) / (c.len() as f64).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    let all_neg = estimates.iter().filter(|e| e.iter().all(|&b| b < 0.0)).count();
    Ok(RecoverySummary {
        policies: config.policy_names.clone(),
        share_all_negative: all_neg as f64 / estimates.len().max(1) as f64,
        estimates,
        mean,
        mean_se,
    })
}
