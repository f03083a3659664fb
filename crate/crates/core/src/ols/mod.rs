//! Least-squares estimation with cluster-robust inference.

pub mod design;
pub mod fit;
pub mod report;
pub mod spec;

pub use design::{build_design, DesignMatrix, RowKey, TermKind};
pub use fit::{classical_cov, cluster_cov, fit_ols, CovKind, FitResult};
pub use report::{combo_weights, linear_combo_test, summarize, two_sided_p, ComboTest, CoefRow, Report, Stars};
pub use spec::{AnalysisSpec, RegressionSpec, SampleWindow};
