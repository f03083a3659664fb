//! Simulated epidemics with policy interventions, and the experiments that
//! check whether the growth regression recovers what was simulated.

pub mod cohort;
pub mod counterfactual;
pub mod recovery;
pub mod sir;

pub use cohort::{generate_cohort, path_state_name, paths_to_panel, write_paths_csv, CohortSpec};
pub use counterfactual::{
    regression_counterfactual, sir_counterfactual, CounterfactualOptions, CounterfactualResult, PolicyChange,
    SirCounterfactual, StatePath,
};
pub use recovery::{recovery_experiment, repeated_recovery, RecoveryRow, RecoverySummary, RecoveryTemplate};
pub use sir::{draw_inputs, final_size, simulate_schedule, simulate_sir, EpidemicPath, PolicyWindow, SirConfig};
