//! Shuffle mask mandates across states on a panel where masks do nothing,
//! and check that the re-estimated coefficients center on zero.

use policy_panel::placebo::{run_placebo, summarize_placebo, PlaceboConfig};
use policy_panel::synth::{null_panel, NullPanelSpec};

fn main() -> policy_panel::Result<()> {
    let (panel, analysis) = null_panel(&NullPanelSpec::default())?;
    let mut config = PlaceboConfig::new(analysis, 20200603);
    config.n_reps = 200;
    let result = run_placebo(&panel, &config)?;
    println!("{} replicates, {} failed", config.n_reps, result.n_failed());
    for s in summarize_placebo(&result) {
        println!(
            "{:<28} observed {:+.4} | placebo 5%/50%/95% {:+.4} {:+.4} {:+.4} | mean {:+.4} (se {:.4})",
            s.target, s.observed, s.p05, s.median, s.p95, s.mean, s.mean_se
        );
    }
    Ok(())
}
