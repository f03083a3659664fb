//! Which states pull hardest on a policy coefficient? Closed-form deletion
//! effects for every state-day, summed by state.

use policy_panel::diagnostics::{dfbeta, state_influence};
use policy_panel::epi::{generate_cohort, paths_to_panel, CohortSpec, RecoveryTemplate, SirConfig};
use policy_panel::ols::{build_design, fit_ols};

fn main() -> policy_panel::Result<()> {
    let config = SirConfig::default();
    let panel = paths_to_panel(&config, &generate_cohort(&config, &CohortSpec::new(7))?)?;
    let analysis = RecoveryTemplate::new(11).analysis(&config);
    let design = build_design(&analysis.transforms.run(&panel)?, &analysis.model)?;
    let fit = fit_ols(&design)?;

    let target = "masks_lag11";
    let records = dfbeta(&fit, &design, target)?;
    println!("{target} = {:.4} over {} observations", fit.coef(target)?, records.len());

    let worst = records
        .iter()
        .max_by(|a, b| a.delta_beta.abs().total_cmp(&b.delta_beta.abs()))
        .expect("non-empty design");
    println!(
        "largest single-row effect: {} on {} moves it by {:+.5} (leverage {:.4})",
        worst.state, worst.date, worst.delta_beta, worst.leverage
    );

    println!("\n{:<8} {:>10} {:>10} {:>6}", "state", "sum", "max |row|", "rows");
    for s in state_influence(&records).iter().take(8) {
        println!("{:<8} {:>+10.5} {:>10.5} {:>6}", s.state, s.sum, s.max_abs, s.count);
    }
    Ok(())
}
