//! Single epidemics with and without policies, and a cohort filtered by
//! attack rate.

use policy_panel::epi::*;

fn main() -> policy_panel::Result<()> {
    let free = SirConfig {
        horizon: 400,
        policy_effects: vec![0.0; 4],
        ..SirConfig::default()
    };
    let path = simulate_sir(&free, 1)?;
    println!(
        "no policies: attack rate {:.4}, final-size root {:.4}",
        path.attack_rate,
        final_size(free.r0)
    );

    let config = SirConfig::default();
    let path = simulate_sir(&config, 1)?;
    let onsets: Vec<Option<usize>> = path.policies.iter().map(|w| w.onset).collect();
    let peak = (0..=config.horizon).max_by(|&a, &b| path.i[a].total_cmp(&path.i[b])).unwrap();
    println!(
        "with policies starting on days {onsets:?}: attack rate {:.4}, infections peak on day {peak}",
        path.attack_rate
    );

    let cohort = generate_cohort(&config, &CohortSpec::new(1))?;
    let rates: Vec<f64> = cohort.iter().map(|p| p.attack_rate).collect();
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(0.0, f64::max);
    println!("cohort of {}: attack rates between {lo:.4} and {hi:.4}", cohort.len());
    Ok(())
}
