//! Project what cases would have been without each policy, once from the
//! fitted regression and once by re-simulating the epidemics, and compare.

use policy_panel::epi::*;

fn main() -> policy_panel::Result<()> {
    let config = SirConfig::default();
    let paths = generate_cohort(&config, &CohortSpec::new(0))?;
    let panel = paths_to_panel(&config, &paths)?;
    let template = RecoveryTemplate::new(11);
    let (fit, _) = recovery_experiment(&panel, &config, &template)?;
    let analysis = template.analysis(&config);

    println!("relative increase in cumulative cases on day 60 / 120 if the policy never happened");
    for (j, name) in config.policy_names.iter().enumerate() {
        let change = PolicyChange {
            column: name.clone(),
            value: 0.0,
            from: config.start_date,
            states: None,
        };
        let opts = CounterfactualOptions {
            draws: 500,
            seed: 3,
            ..Default::default()
        };
        let reg = regression_counterfactual(&panel, &analysis, &fit, &change, &opts)?;
        let sir = sir_counterfactual(&config, &paths, j, None, 0.90)?;
        for d in [60, 120] {
            println!(
                "{:<10} day {:>3}: regression {:.2} [{:.2}, {:.2}]   simulation {:.2} [{:.2}, {:.2}]",
                name, d, reg.relative_effect[d], reg.lower[d], reg.upper[d], sir.median[d], sir.lower[d], sir.upper[d]
            );
        }
    }
    Ok(())
}
