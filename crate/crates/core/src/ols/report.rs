use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::design::TermKind;
use super::fit::FitResult;
use crate::error::{Error, Result};

/// Estimate and standard error of `w' beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboTest {
    pub weights: Vec<f64>,
    pub estimate: f64,
    pub std_error: f64,
}

impl ComboTest {
    pub fn z(&self) -> f64 {
        self.estimate / self.std_error
    }

    pub fn p_value(&self) -> f64 {
        two_sided_p(self.z())
    }
}

pub fn linear_combo_test(fit: &FitResult, weights: &[f64]) -> Result<ComboTest> {
    if weights.len() != fit.k() {
        return Err(Error::DimensionMismatch {
            expected: fit.k(),
            got: weights.len(),
        });
    }
    let w = nalgebra::DVector::from_column_slice(weights);
    let estimate = w.dot(&fit.beta);
    let var = (w.transpose() * &fit.cov * &w)[(0, 0)];
    Ok(ComboTest {
        weights: weights.to_vec(),
        estimate,
        std_error: var.max(0.0).sqrt(),
    })
}

/// Unit weights on the named coefficients, or on every policy term when
/// `names` is `None`.
pub fn combo_weights(fit: &FitResult, names: Option<&[String]>) -> Result<Vec<f64>> {
    let mut w = vec![0.0; fit.k()];
    match names {
        Some(names) => {
            for n in names {
                w[fit.index_of(n)?] = 1.0;
            }
        }
        None => {
            for (j, kind) in fit.term_kinds.iter().enumerate() {
                if *kind == TermKind::Policy {
                    w[j] = 1.0;
                }
            }
        }
    }
    Ok(w)
}

pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Significance markers, most stringent threshold first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stars {
    pub levels: Vec<(f64, String)>,
}

impl Default for Stars {
    fn default() -> Self {
        Stars {
            levels: vec![(0.01, "***".into()), (0.05, "**".into()), (0.1, "*".into())],
        }
    }
}

impl Stars {
    pub fn mark(&self, p: f64) -> &str {
        self.levels
            .iter()
            .find(|(t, _)| p < *t)
            .map_or("", |(_, s)| s.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub coefficients: Vec<CoefRow>,
    pub combo: Option<CoefRow>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub r2: f64,
    pub adj_r2: f64,
}

impl Report {
    pub fn coefficient(&self, name: &str) -> Option<&CoefRow> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["term", "estimate", "std_error", "z", "p_value", "stars"])?;
        for r in self.coefficients.iter().chain(&self.combo) {
            w.write_record([
                r.name.clone(),
                r.estimate.to_string(),
                r.std_error.to_string(),
                r.z.to_string(),
                r.p_value.to_string(),
                r.stars.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    /// Aligned table: estimate with stars, standard error in parentheses below.
    pub fn to_text(&self) -> String {
        let rows: Vec<&CoefRow> = self.coefficients.iter().chain(&self.combo).collect();
        let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(14);
        let mut out = String::new();
        for r in rows {
            let est = format!("{:.4}{}", r.estimate, r.stars);
            let _ = writeln!(out, "{:<width$}  {:>14}", r.name, est);
            let _ = writeln!(out, "{:<width$}  {:>14}", "", format!("({:.4})", r.std_error));
        }
        let _ = writeln!(out, "{:<width$}  {:>14}", "Observations", self.n_obs);
        let _ = writeln!(out, "{:<width$}  {:>14}", "Clusters", self.n_clusters);
        let _ = writeln!(out, "{:<width$}  {:>14.4}", "R-squared", self.r2);
        let _ = writeln!(out, "{:<width$}  {:>14.4}", "Adj. R-squared", self.adj_r2);
        out
    }
}

fn row(name: String, estimate: f64, std_error: f64, stars: &Stars) -> CoefRow {
    let z = estimate / std_error;
    let p = two_sided_p(z);
    CoefRow {
        name,
        estimate,
        std_error,
        z,
        p_value: p,
        stars: stars.mark(p).to_string(),
    }
}

/// Coefficient table for every column except fixed-effect indicators, plus an
/// optional combination row labelled `combo_label`.
pub fn summarize(fit: &FitResult, combo: Option<(&str, &ComboTest)>, stars: &Stars) -> Report {
    let se = fit.std_errors();
    let coefficients = (0..fit.k())
        .filter(|&j| !matches!(fit.term_kinds[j], TermKind::StateEffect | TermKind::TimeEffect))
        .map(|j| row(fit.column_names[j].clone(), fit.beta[j], se[j], stars))
        .collect();
    Report {
        coefficients,
        combo: combo.map(|(label, c)| row(label.to_string(), c.estimate, c.std_error, stars)),
        n_obs: fit.n_obs,
        n_clusters: fit.n_clusters,
        r2: fit.r2,
        adj_r2: fit.adj_r2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ols::fit::{fit_ols, tests_support::random_design};

    #[test]
    fn star_thresholds() {
        let s = Stars::default();
        assert_eq!(s.mark(0.009), "***");
        assert_eq!(s.mark(0.01), "**");
        assert_eq!(s.mark(0.049), "**");
        assert_eq!(s.mark(0.07), "*");
        assert_eq!(s.mark(0.1), "");
        let p = two_sided_p(1.959963984540054);
        // statrs erfc carries about 1e-10 relative error
        assert!((p - 0.05).abs() < 1e-10, "{p}");
        assert!((two_sided_p(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn combo_matches_manual_sum() {
        let dm = random_design(9, 100, 4, 10);
        let fit = fit_ols(&dm).unwrap();
        let c = linear_combo_test(&fit, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((c.estimate - (fit.beta[1] + fit.beta[2])).abs() < 1e-14);
        let var = fit.cov[(1, 1)] + fit.cov[(2, 2)] + 2.0 * fit.cov[(1, 2)];
        assert!((c.std_error - var.sqrt()).abs() < 1e-14);
        assert!(matches!(
            linear_combo_test(&fit, &[1.0]),
            Err(Error::DimensionMismatch { expected: 4, got: 1 })
        ));
        let names = vec!["x1".to_string(), "x2".to_string()];
        assert_eq!(combo_weights(&fit, Some(&names)).unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
        assert!(combo_weights(&fit, Some(&["nope".to_string()])).is_err());
    }

    #[test]
    fn tables_render() {
        let dm = random_design(10, 50, 3, 5);
        let fit = fit_ols(&dm).unwrap();
        let c = linear_combo_test(&fit, &[0.0, 1.0, 1.0]).unwrap();
        let rep = summarize(&fit, Some(("sum", &c)), &Stars::default());
        let csv = rep.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("term,estimate"));
        let text = rep.to_text();
        assert!(text.contains("Observations"));
        assert!(text.contains("(") && text.contains("sum"));
    }
}
