//! Per-state series transforms. Each returns a new dataset with the derived
//! column(s) appended; the input is never modified.

use serde::{Deserialize, Serialize};

use super::dataset::{Column, ColumnRole, PanelDataset};
use crate::error::{Error, Result};

/// Name of the column holding the "employee mandate without public mandate" encoding.
pub const MASKS_EMPLOYEES_ONLY: &str = "masks_employees_only";
/// Name of the column holding the public mandate encoding.
pub const MASKS_PUBLIC: &str = "masks_public";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformSpec {
    /// Trailing moving-average window in days.
    pub ma_window: usize,
    /// Span of the differences in the growth transform.
    pub diff_window: usize,
    pub lag_days: usize,
    /// Weekly counts below this are floored before taking logs.
    pub log_floor: f64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            ma_window: 7,
            diff_window: 7,
            lag_days: 14,
            log_floor: 1.0,
        }
    }
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ma_window < 1 {
            return Err(Error::InvalidTransform("ma_window must be at least 1".into()));
        }
        if self.diff_window < 1 {
            return Err(Error::InvalidTransform("diff_window must be at least 1".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidTransform("log_floor must be positive".into()));
        }
        Ok(())
    }
}

pub fn ma_name(column: &str) -> String {
    format!("{column}_ma")
}

pub fn lag_name(column: &str, k: usize) -> String {
    format!("{column}_lag{k}")
}

pub fn national_name(column: &str) -> String {
    format!("{column}_national")
}

/// Output names of [`weekly_log_growth`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrowthNames {
    /// `C_t - C_{t-w}`
    pub diff: String,
    /// `ln(max(diff, floor))`
    pub log_diff: String,
    /// `log_diff_t - log_diff_{t-w}`
    pub growth: String,
    /// 1 where the floor was applied.
    pub floored: String,
}

impl GrowthNames {
    pub fn for_column(column: &str) -> Self {
        GrowthNames {
            diff: format!("{column}_diff"),
            log_diff: format!("{column}_logdiff"),
            growth: format!("{column}_growth"),
            floored: format!("{column}_floored"),
        }
    }

    pub fn all(&self) -> [&str; 4] {
        [&self.diff, &self.log_diff, &self.growth, &self.floored]
    }
}

fn per_state(panel: &PanelDataset, values: &[f64], mut f: impl FnMut(&[f64], &mut [f64])) -> Vec<f64> {
    let mut out = vec![f64::NAN; values.len()];
    for span in panel.states() {
        let r = span.rows();
        f(&values[r.clone()], &mut out[r]);
    }
    out
}

fn require_role(panel: &PanelDataset, column: &str, ok: impl Fn(ColumnRole) -> bool, expected: &'static str) -> Result<()> {
    let role = panel.role(column)?;
    if ok(role) {
        Ok(())
    } else {
        Err(Error::RoleMismatch {
            column: column.to_string(),
            expected,
            found: role.name(),
        })
    }
}

/// Adds `<column>_ma`: the mean of the trailing `ma_window` days, per state.
/// The first `ma_window - 1` days of each state, and any window touching a
/// missing cell, are missing.
pub fn moving_average(panel: &PanelDataset, column: &str, spec: &TransformSpec) -> Result<PanelDataset> {
    spec.validate()?;
    let col = panel.column(column)?;
    let w = spec.ma_window;
    if let Some(short) = panel.states().iter().find(|s| s.len < w) {
        return Err(Error::SeriesTooShort {
            state: short.name.clone(),
            len: short.len,
            window: w,
        });
    }
    let out = per_state(panel, &col.values, |x, y| trailing_mean(x, w, y));
    panel.with_column(&ma_name(column), Column::new(col.role, out))
}

pub(crate) fn trailing_mean(x: &[f64], w: usize, out: &mut [f64]) {
    for t in 0..x.len() {
        out[t] = if t + 1 >= w {
            x[t + 1 - w..=t].iter().sum::<f64>() / w as f64
        } else {
            f64::NAN
        };
    }
}

/// Adds the weekly difference, its floored log, the change in that log over
/// `diff_window` days, and a floor flag. See [`GrowthNames`].
pub fn weekly_log_growth(panel: &PanelDataset, count_column: &str, spec: &TransformSpec) -> Result<PanelDataset> {
    spec.validate()?;
    require_role(panel, count_column, ColumnRole::is_cumulative, "count")?;
    let values = panel.values(count_column)?;
    let names = GrowthNames::for_column(count_column);
    let w = spec.diff_window;
    let floor = spec.log_floor;

    let diff = per_state(panel, values, |x, y| {
        for t in w..x.len() {
            y[t] = x[t] - x[t - w];
        }
    });
    let floored: Vec<f64> = diff
        .iter()
        .map(|&d| if d.is_nan() { f64::NAN } else { (d < floor) as u8 as f64 })
        .collect();
    let log_diff: Vec<f64> = diff.iter().map(|&d| d.max(floor).ln()).collect();
    // `NaN.max(floor)` is `floor`; restore missingness.
    let log_diff: Vec<f64> = log_diff
        .into_iter()
        .zip(&diff)
        .map(|(l, d)| if d.is_nan() { f64::NAN } else { l })
        .collect();
    let growth = per_state(panel, &log_diff, |x, y| {
        for t in w..x.len() {
            y[t] = x[t] - x[t - w];
        }
    });

    let mut out = panel.clone();
    out.insert_column(names.diff, Column::new(ColumnRole::Derived, diff));
    out.insert_column(names.log_diff, Column::new(ColumnRole::Derived, log_diff));
    out.insert_column(names.growth, Column::new(ColumnRole::Derived, growth));
    out.insert_column(names.floored, Column::new(ColumnRole::Derived, floored));
    Ok(out)
}

/// Adds `<column>_lag<k>` with the value from `k` days earlier in the same state.
pub fn lag(panel: &PanelDataset, column: &str, k: usize) -> Result<PanelDataset> {
    let col = panel.column(column)?;
    let out = per_state(panel, &col.values, |x, y| {
        if k < x.len() {
            y[k..].copy_from_slice(&x[..x.len() - k]);
        }
    });
    panel.with_column(&lag_name(column, k), Column::new(col.role, out))
}

/// Adds `<column>_national`: the cross-state sum on each date, written into
/// every state's row for that date. The sum includes the row's own state.
pub fn national_aggregate(panel: &PanelDataset, column: &str) -> Result<PanelDataset> {
    require_role(panel, column, ColumnRole::is_cumulative, "count")?;
    let col = panel.column(column)?;
    let Some((first, last)) = panel.date_range() else {
        return panel.with_column(&national_name(column), col.clone());
    };
    let n_days = (last - first).num_days() as usize + 1;
    let mut totals = vec![0.0; n_days];
    for span in panel.states() {
        let off = (span.start - first).num_days() as usize;
        for (i, &v) in col.values[span.rows()].iter().enumerate() {
            totals[off + i] += v;
        }
    }
    let mut out = vec![0.0; panel.n_rows()];
    for span in panel.states() {
        let off = (span.start - first).num_days() as usize;
        for i in 0..span.len {
            out[span.offset + i] = totals[off + i];
        }
    }
    panel.with_column(&national_name(column), Column::new(col.role, out))
}

/// Encodes the observed mandate combinations: `masks_employees_only` is set
/// where the employee mandate holds without a public mandate, and
/// `masks_public` copies the public indicator. For 0/1 inputs the two
/// encodings are never both one.
pub fn encode_mask_policies(panel: &PanelDataset, employee_col: &str, public_col: &str) -> Result<PanelDataset> {
    for c in [employee_col, public_col] {
        require_role(panel, c, |r| r == ColumnRole::Policy, "policy")?;
    }
    let emp = panel.values(employee_col)?;
    let public = panel.values(public_col)?.to_vec();
    let only: Vec<f64> = emp.iter().zip(&public).map(|(e, p)| e * (1.0 - p)).collect();
    let mut out = panel.clone();
    out.insert_column(MASKS_EMPLOYEES_ONLY.to_string(), Column::new(ColumnRole::Policy, only));
    out.insert_column(MASKS_PUBLIC.to_string(), Column::new(ColumnRole::Policy, public));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;
    use proptest::prelude::*;

    use super::*;
    use crate::panel::dataset::PanelBuilder;

    fn d0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 7).unwrap()
    }

    fn one_state(role: ColumnRole, values: Vec<f64>) -> PanelDataset {
        PanelBuilder::new()
            .state("A", d0(), values.len())
            .column("x", role, values)
            .build_unchecked()
            .unwrap()
    }

    fn brute_ma(x: &[f64], w: usize) -> Vec<f64> {
        (0..x.len())
            .map(|t| {
                if t + 1 < w {
                    f64::NAN
                } else {
                    x[t + 1 - w..=t].iter().sum::<f64>() / w as f64
                }
            })
            .collect()
    }

    #[test]
    fn ma_constant_and_arithmetic() {
        let spec = TransformSpec::default();
        let p = moving_average(&one_state(ColumnRole::Derived, vec![5.0; 12]), "x", &spec).unwrap();
        let v = p.values("x_ma").unwrap();
        assert!(v[..6].iter().all(|x| x.is_nan()));
        assert!(v[6..].iter().all(|&x| x == 5.0));

        let p = moving_average(&one_state(ColumnRole::Derived, (1..=7).map(f64::from).collect()), "x", &spec).unwrap();
        assert_eq!(p.values("x_ma").unwrap()[6], 4.0);
    }

    #[test]
    fn ma_matches_brute_force_windows() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-50.0..50.0)).collect();
        let p = moving_average(&one_state(ColumnRole::Derived, x.clone()), "x", &TransformSpec::default()).unwrap();
        for (a, b) in p.values("x_ma").unwrap().iter().zip(brute_ma(&x, 7)) {
            assert!(a.is_nan() && b.is_nan() || (a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn ma_too_short_series() {
        let err = moving_average(&one_state(ColumnRole::Derived, vec![1.0; 5]), "x", &TransformSpec::default());
        assert!(matches!(err, Err(Error::SeriesTooShort { len: 5, window: 7, .. })));
    }

    #[test]
    fn growth_of_weekly_doubling_is_ln2() {
        // C_t = 100 * 2^(t/7): every 7-day difference doubles week over week.
        let c: Vec<f64> = (0..42).map(|t| 2f64.powf(t as f64 / 7.0) * 100.0).collect();
        let p = weekly_log_growth(&one_state(ColumnRole::Count, c), "x", &TransformSpec::default()).unwrap();
        let g = p.values("x_growth").unwrap();
        assert!(g[..14].iter().all(|v| v.is_nan()));
        for &v in &g[14..] {
            assert!((v - std::f64::consts::LN_2).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn growth_of_constant_weekly_counts_is_zero() {
        let c: Vec<f64> = (0..30).map(|t| 3.0 * t as f64).collect();
        let p = weekly_log_growth(&one_state(ColumnRole::Count, c), "x", &TransformSpec::default()).unwrap();
        assert!(p.values("x_growth").unwrap()[14..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn growth_floor_rule() {
        let c = vec![5.0; 20];
        let p = weekly_log_growth(&one_state(ColumnRole::Count, c), "x", &TransformSpec::default()).unwrap();
        assert_eq!(p.values("x_logdiff").unwrap()[7], 0.0);
        assert_eq!(p.values("x_floored").unwrap()[7], 1.0);
        assert!(p.values("x_floored").unwrap()[6].is_nan());
    }

    #[test]
    fn growth_requires_cumulative_role() {
        let err = weekly_log_growth(&one_state(ColumnRole::Policy, vec![0.0; 20]), "x", &TransformSpec::default());
        assert!(matches!(err, Err(Error::RoleMismatch { .. })));
    }

    #[test]
    fn lag_counts_and_identity() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let p = one_state(ColumnRole::Policy, x.clone());
        let l0 = lag(&p, "x", 0).unwrap();
        assert_eq!(l0.values("x_lag0").unwrap(), &x[..]);
        let l14 = lag(&p, "x", 14).unwrap();
        let v = l14.values("x_lag14").unwrap();
        assert_eq!(v.iter().filter(|v| !v.is_nan()).count(), 6);
        assert_eq!(v[19], 5.0);
        assert_eq!(l14.role("x_lag14").unwrap(), ColumnRole::Policy);
    }

    #[test]
    fn national_sums_states() {
        let p = PanelBuilder::new()
            .state("A", d0(), 2)
            .state("B", d0(), 2)
            .column("c", ColumnRole::Count, vec![3.0, 5.0, 4.0, 6.0])
            .build()
            .unwrap();
        let n = national_aggregate(&p, "c").unwrap();
        assert_eq!(n.values("c_national").unwrap(), &[7.0, 11.0, 7.0, 11.0]);
        let single = one_state(ColumnRole::Count, vec![1.0, 2.0]);
        let n = national_aggregate(&single, "x").unwrap();
        assert_eq!(n.values("x_national").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn mask_encoding_truth_table() {
        let p = PanelBuilder::new()
            .state("A", d0(), 4)
            .column("emp", ColumnRole::Policy, vec![1.0, 1.0, 0.0, 0.0])
            .column("pub", ColumnRole::Policy, vec![0.0, 1.0, 0.0, 1.0])
            .build()
            .unwrap();
        let e = encode_mask_policies(&p, "emp", "pub").unwrap();
        assert_eq!(e.values(MASKS_EMPLOYEES_ONLY).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e.values(MASKS_PUBLIC).unwrap(), &[0.0, 1.0, 0.0, 1.0]);
        assert!(e.has_column("emp") && e.has_column("pub"));
        assert!(matches!(encode_mask_policies(&p, "emp", "nope"), Err(Error::UnknownColumn(_))));
    }

    fn arb_series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 25..40)
    }

    proptest! {
        #[test]
        fn lag_composes(x in arb_series(), j in 0usize..6, k in 0usize..6) {
            let p = one_state(ColumnRole::Derived, x.clone());
            let a = lag(&lag(&p, "x", j).unwrap(), &lag_name("x", j), k).unwrap();
            let a = a.values(&lag_name(&lag_name("x", j), k)).unwrap().to_vec();
            let b = lag(&p, "x", j + k).unwrap();
            let b = b.values(&lag_name("x", j + k)).unwrap();
            for t in j + k..x.len() {
                prop_assert_eq!(a[t], b[t]);
            }
        }

        #[test]
        fn lag_and_ma_commute(x in arb_series(), k in 0usize..8) {
            let spec = TransformSpec::default();
            let p = one_state(ColumnRole::Derived, x.clone());
            let lm = moving_average(&lag(&p, "x", k).unwrap(), &lag_name("x", k), &spec).unwrap();
            let lm = lm.values(&ma_name(&lag_name("x", k))).unwrap().to_vec();
            let ml = lag(&moving_average(&p, "x", &spec).unwrap(), &ma_name("x"), k).unwrap();
            let ml = ml.values(&lag_name(&ma_name("x"), k)).unwrap();
            for t in k + 6..x.len() {
                prop_assert!((lm[t] - ml[t]).abs() <= 1e-9);
            }
        }

        #[test]
        fn national_is_linear(a in prop::collection::vec(0.0f64..100.0, 6), b in prop::collection::vec(0.0f64..100.0, 6), ca in 0.0f64..3.0, cb in 0.0f64..3.0) {
            let panel = |v: Vec<f64>| PanelBuilder::new()
                .state("A", d0(), 3)
                .state("B", d0(), 3)
                .column("c", ColumnRole::Count, v)
                .build_unchecked()
                .unwrap();
            let agg = |v: Vec<f64>| national_aggregate(&panel(v), "c").unwrap().values("c_national").unwrap().to_vec();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| ca * x + cb * y).collect();
            let lhs = agg(mix);
            let (na, nb) = (agg(a), agg(b));
            for i in 0..6 {
                prop_assert!((lhs[i] - (ca * na[i] + cb * nb[i])).abs() <= 1e-9 * (1.0 + lhs[i].abs()));
            }
        }

        #[test]
        fn constant_series_ma_is_constant(c in -1e3f64..1e3, n in 7usize..40) {
            let p = moving_average(&one_state(ColumnRole::Derived, vec![c; n]), "x", &TransformSpec::default()).unwrap();
            for &v in &p.values("x_ma").unwrap()[6..] {
                prop_assert!((v - c).abs() <= 1e-12 * (1.0 + c.abs()));
            }
        }

        #[test]
        fn encodings_never_overlap(e in prop::collection::vec(0u8..2, 10), q in prop::collection::vec(0u8..2, 10)) {
            let p = PanelBuilder::new()
                .state("A", d0(), 10)
                .column("emp", ColumnRole::Policy, e.iter().map(|&v| v as f64).collect())
                .column("pub", ColumnRole::Policy, q.iter().map(|&v| v as f64).collect())
                .build()
                .unwrap();
            let enc = encode_mask_policies(&p, "emp", "pub").unwrap();
            let only = enc.values(MASKS_EMPLOYEES_ONLY).unwrap();
            let public = enc.values(MASKS_PUBLIC).unwrap();
            for t in 0..10 {
                prop_assert_eq!(only[t] * public[t], 0.0);
            }
        }
    }
}
