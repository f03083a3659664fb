use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{DesignMatrix, TermKind};
use crate::error::{Error, Result};

/// Relative tolerance for declaring a column dependent on earlier ones:
/// `|R_jj| <= RANK_TOL * ||x_j||`.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    /// Cluster-robust sandwich with small-sample scaling.
    Cluster,
    /// Homoskedastic `s^2 (X'X)^-1`, used when there is only one cluster.
    Classical,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub resid: DVector<f64>,
    pub fitted: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cov_kind: CovKind,
    /// Diagonal of the hat matrix.
    pub hat: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub rss: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub column_names: Vec<String>,
    pub term_kinds: Vec<TermKind>,
}

impl FitResult {
    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownCoefficient(name.to_string()))
    }

    pub fn coef(&self, name: &str) -> Result<f64> {
        Ok(self.beta[self.index_of(name)?])
    }

    pub fn std_error(&self, name: &str) -> Result<f64> {
        let j = self.index_of(name)?;
        Ok(self.cov[(j, j)].sqrt())
    }

    pub fn std_errors(&self) -> DVector<f64> {
        DVector::from_fn(self.k(), |j, _| self.cov[(j, j)].sqrt())
    }
}

/// Least squares by Householder QR.
pub fn fit_ols(design: &DesignMatrix) -> Result<FitResult> {
    let (n, k) = (design.n(), design.k());
    if n == 0 || k == 0 {
        return Err(Error::EmptyDesign);
    }
    if n < k {
        return Err(Error::Underdetermined { n, k });
    }
    let qr = design.x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = design.x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(Error::RankDeficient {
                column: design.column_names[j].clone(),
            });
        }
    }
    let q = qr.q();
    let qty = q.tr_mul(&design.y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient {
            column: design.column_names[k - 1].clone(),
        })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("triangular factor checked nonsingular above");
    let xtx_inv = &r_inv * r_inv.transpose();
    let hat = DVector::from_fn(n, |i, _| q.row(i).norm_squared());

    let fitted = &design.x * &beta;
    let resid = &design.y - &fitted;
    let rss = resid.norm_squared();
    let has_intercept = design.term_kinds.contains(&TermKind::Intercept);
    let tss = if has_intercept {
        let mean = design.y.mean();
        design.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    } else {
        design.y.norm_squared()
    };
    let r2 = 1.0 - rss / tss;
    let df_model = if has_intercept { n - 1 } else { n };
    let adj_r2 = 1.0 - (1.0 - r2) * df_model as f64 / (n - k) as f64;

    let mut fit = FitResult {
        beta,
        resid,
        fitted,
        cov: DMatrix::zeros(k, k),
        cov_kind: CovKind::Classical,
        hat,
        xtx_inv,
        rss,
        r2,
        adj_r2,
        n_obs: n,
        n_clusters: design.n_clusters,
        column_names: design.column_names.clone(),
        term_kinds: design.term_kinds.clone(),
    };
    if design.n_clusters >= 2 {
        fit.cov = cluster_cov(&fit, design)?;
        fit.cov_kind = CovKind::Cluster;
    } else {
        fit.cov = classical_cov(&fit);
    }
    Ok(fit)
}

/// `s^2 (X'X)^-1` with `s^2 = RSS / (n - K)`.
pub fn classical_cov(fit: &FitResult) -> DMatrix<f64> {
    let dof = fit.n_obs.saturating_sub(fit.k());
    let s2 = if dof == 0 { f64::NAN } else { fit.rss / dof as f64 };
    &fit.xtx_inv * s2
}

/// Cluster-robust sandwich `A (sum_g u_g u_g') A` with `A = (X'X)^-1`,
/// `u_g` the cluster score sums, scaled by `G/(G-1) * (n-1)/(n-K)`.
/// With one row per cluster this is the HC1 estimator.
pub fn cluster_cov(fit: &FitResult, design: &DesignMatrix) -> Result<DMatrix<f64>> {
    let g = design.n_clusters;
    if g < 2 {
        return Err(Error::SingleCluster);
    }
    let (n, k) = (design.n(), design.k());
    let mut scores = DMatrix::<f64>::zeros(g, k);
    for i in 0..n {
        let e = fit.resid[i];
        let c = design.clusters[i];
        for j in 0..k {
            scores[(c, j)] += design.x[(i, j)] * e;
        }
    }
    let meat = scores.tr_mul(&scores);
    let dof = n.saturating_sub(k);
    let scale = if dof == 0 {
        f64::NAN
    } else {
        g as f64 / (g - 1) as f64 * (n - 1) as f64 / dof as f64
    };
    let v = &fit.xtx_inv * meat * &fit.xtx_inv * scale;
    // symmetrize away rounding
    Ok((&v + v.transpose()) * 0.5)
}


#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::tests_support::{design_from, random_design};
    use super::*;

    /// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
    fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
        let k = x.ncols();
        let mut a = vec![vec![0.0; k + 1]; k];
        for i in 0..x.nrows() {
            for p in 0..k {
                for q in 0..k {
                    a[p][q] += x[(i, p)] * x[(i, q)];
                }
                a[p][k] += x[(i, p)] * y[i];
            }
        }
        for c in 0..k {
            let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..k {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for q in c..=k {
                        a[r][q] -= f * a[c][q];
                    }
                }
            }
        }
        (0..k).map(|c| a[c][k] / a[c][c]).collect()
    }

    #[test]
    fn matches_normal_equations() {
        let dm = random_design(1, 200, 5, 10);
        let fit = fit_ols(&dm).unwrap();
        for (b, o) in fit.beta.iter().zip(normal_equations(&dm.x, &dm.y)) {
            assert_relative_eq!(*b, o, epsilon = 1e-10);
        }
    }

    #[test]
    fn singleton_clusters_give_hc1() {
        let dm = random_design(2, 80, 3, 80);
        let fit = fit_ols(&dm).unwrap();
        let (n, k) = (80.0, 3.0);
        // direct HC1: (X'X)^-1 X' diag(e^2) X (X'X)^-1 * n/(n-k)
        let mut meat = DMatrix::zeros(3, 3);
        for i in 0..80 {
            let xi = dm.x.row(i).transpose();
            meat += &xi * xi.transpose() * fit.resid[i].powi(2);
        }
        let hc1 = &fit.xtx_inv * meat * &fit.xtx_inv * (n / (n - k));
        assert_eq!(fit.cov_kind, CovKind::Cluster);
        for (a, b) in fit.cov.iter().zip(hc1.iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12, max_relative = 1e-9);
        }
    }

    #[test]
    fn cluster_variance_tracks_sampling_variance() {
        // homoskedastic errors: the robust variance should average close to
        // the Monte-Carlo variance of the slope
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 400;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let mut slopes = Vec::new();
        let mut vars = Vec::new();
        for _ in 0..400 {
            let y = DVector::from_fn(n, |i, _| 0.5 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
            let fit = fit_ols(&design_from(x.clone(), y, (0..n).map(|i| i % 40).collect())).unwrap();
            slopes.push(fit.beta[1]);
            vars.push(fit.cov[(1, 1)]);
        }
        let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
        let mc = slopes.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64;
        let avg = vars.iter().sum::<f64>() / vars.len() as f64;
        assert!((avg / mc - 1.0).abs() < 0.25, "robust {avg} vs monte carlo {mc}");
        assert!((m - 0.5).abs() < 0.01);
    }

    #[test]
    fn duplicating_rows_keeps_coefficients() {
        let dm = random_design(3, 60, 4, 6);
        let fit = fit_ols(&dm).unwrap();
        let x2 = DMatrix::from_fn(120, 4, |i, j| dm.x[(i % 60, j)]);
        let y2 = DVector::from_fn(120, |i, _| dm.y[i % 60]);
        let fit2 = fit_ols(&design_from(x2, y2, (0..120).map(|i| i % 6).collect())).unwrap();
        for (a, b) in fit.beta.iter().zip(fit2.beta.iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn errors() {
        let mut dm = random_design(4, 30, 3, 3);
        dm.x.set_column(2, &(dm.x.column(1) * 2.0));
        assert!(matches!(fit_ols(&dm), Err(Error::RankDeficient { column }) if column == "x2"));
        let dm = random_design(5, 3, 5, 3);
        assert!(matches!(fit_ols(&dm), Err(Error::Underdetermined { n: 3, k: 5 })));
        let dm = random_design(6, 30, 3, 1);
        let fit = fit_ols(&dm).unwrap();
        assert_eq!(fit.cov_kind, CovKind::Classical);
        assert!(matches!(cluster_cov(&fit, &dm), Err(Error::SingleCluster)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn residuals_orthogonal_and_hat_trace(seed in 0u64..10_000, n in 12usize..60, k in 1usize..6) {
            let dm = random_design(seed, n, k, 4);
            let fit = fit_ols(&dm).unwrap();
            let xe = dm.x.tr_mul(&fit.resid);
            prop_assert!(xe.amax() < 1e-9 * (1.0 + dm.y.norm() * dm.x.norm()));
            prop_assert!((fit.hat.sum() - k as f64).abs() < 1e-9);
            prop_assert!(fit.hat.iter().all(|&h| (-1e-12..=1.0 + 1e-12).contains(&h)));
        }

        #[test]
        fn row_order_and_cluster_label_invariance(seed in 0u64..10_000, shift in 1usize..30) {
            let dm = random_design(seed, 30, 3, 5);
            let perm: Vec<usize> = (0..30).map(|i| (i * 7 + shift) % 30).collect();
            let x = DMatrix::from_fn(30, 3, |i, j| dm.x[(perm[i], j)]);
            let y = DVector::from_fn(30, |i, _| dm.y[perm[i]]);
            let cl = perm.iter().map(|&i| (dm.clusters[i] + shift) % 5).collect();
            let a = fit_ols(&dm).unwrap();
            let b = fit_ols(&design_from(x, y, cl)).unwrap();
            for (u, v) in a.beta.iter().zip(b.beta.iter()) {
                prop_assert!((u - v).abs() < 1e-10);
            }
            for (u, v) in a.cov.iter().zip(b.cov.iter()) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }

        #[test]
        fn nested_models_r2_monotone(seed in 0u64..10_000) {
            let big = random_design(seed, 50, 5, 5);
            let small = design_from(big.x.columns(0, 3).into_owned(), big.y.clone(), big.clusters.clone());
            prop_assert!(fit_ols(&big).unwrap().r2 >= fit_ols(&small).unwrap().r2 - 1e-12);
        }

        #[test]
        fn duplicate_column_is_rank_deficient(seed in 0u64..10_000, j in 1usize..4) {
            let dm = random_design(seed, 40, 4, 4);
            let x = DMatrix::from_fn(40, 5, |i, c| dm.x[(i, if c == 4 { j } else { c })]);
            let dup = design_from(x, dm.y.clone(), dm.clusters.clone());
            let is_rank_deficient = matches!(fit_ols(&dup), Err(Error::RankDeficient { .. }));
            prop_assert!(is_rank_deficient);
        }
    }
}
