//! Fit the growth regression to a simulated cohort of epidemics and print
//! the coefficient table with the test on the sum of policy effects.

use policy_panel::epi::{generate_cohort, paths_to_panel, CohortSpec, RecoveryTemplate, SirConfig};
use policy_panel::ols::{build_design, combo_weights, fit_ols, linear_combo_test, summarize, Stars};

fn main() -> policy_panel::Result<()> {
    let config = SirConfig::default();
    let paths = generate_cohort(&config, &CohortSpec::new(2020))?;
    let panel = paths_to_panel(&config, &paths)?;

    // The analysis is plain data and round-trips through JSON, which is
    // what the command-line `--spec` file holds.
    let analysis = RecoveryTemplate::new(11).analysis(&config);
    println!("{}\n", serde_json::to_string_pretty(&analysis)?);

    let derived = analysis.transforms.run(&panel)?;
    let design = build_design(&derived, &analysis.model)?;
    let fit = fit_ols(&design)?;
    let combo = linear_combo_test(&fit, &combo_weights(&fit, None)?)?;
    let report = summarize(&fit, Some(("sum_policy", &combo)), &Stars::default());
    print!("{}", report.to_text());
    println!("\neach policy was simulated as lowering R0 by {:.3}", config.policy_effects[0]);
    Ok(())
}
