use std::io::Write;

use chrono::Days;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sir::{draw_inputs, simulate_schedule, EpidemicPath, SirConfig};
use crate::error::{Error, Result};
use crate::panel::{ColumnRole, PanelBuilder, PanelDataset};

fn default_generate() -> usize {
    1500
}
fn default_select() -> usize {
    50
}
fn default_band() -> [f64; 2] {
    [0.005, 0.10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    #[serde(default = "default_generate")]
    pub n_generate: usize,
    #[serde(default = "default_select")]
    pub n_select: usize,
    /// Inclusive attack-rate range a path must fall in to be eligible.
    #[serde(default = "default_band")]
    pub attack_band: [f64; 2],
    #[serde(default)]
    pub seed: u64,
}

impl CohortSpec {
    pub fn new(seed: u64) -> Self {
        CohortSpec {
            n_generate: default_generate(),
            n_select: default_select(),
            attack_band: default_band(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_select == 0 || self.n_select > self.n_generate {
            return Err(Error::InvalidConfig(format!(
                "cannot select {} of {} paths",
                self.n_select, self.n_generate
            )));
        }
        if self.attack_band[0] > self.attack_band[1] {
            return Err(Error::InvalidConfig("empty attack-rate band".into()));
        }
        Ok(())
    }
}

/// Simulates `n_generate` paths (path `k` seeded by stream `k` of `seed`),
/// keeps those whose attack rate lies in the band, and draws `n_select` of
/// them uniformly without replacement. Selected paths keep generation order.
pub fn generate_cohort(config: &SirConfig, cohort: &CohortSpec) -> Result<Vec<EpidemicPath>> {
    config.validate()?;
    cohort.validate()?;
    let [lo, hi] = cohort.attack_band;
    let generated: Vec<EpidemicPath> = (0..cohort.n_generate)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cohort.seed);
            rng.set_stream(k as u64);
            let (policies, i0) = draw_inputs(config, &mut rng);
            simulate_schedule(config, &policies, i0)
        })
        .collect::<Result<_>>()?;
    let mut survivors: Vec<EpidemicPath> = generated
        .into_iter()
        .filter(|p| (lo..=hi).contains(&p.attack_rate))
        .collect();
    if survivors.len() < cohort.n_select {
        return Err(Error::InsufficientSurvivors {
            survivors: survivors.len(),
            needed: cohort.n_select,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cohort.seed);
    rng.set_stream(cohort.n_generate as u64);
    let mut picked = rand::seq::index::sample(&mut rng, survivors.len(), cohort.n_select).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<EpidemicPath>> = survivors.drain(..).map(Some).collect();
    Ok(picked
        .into_iter()
        .map(|i| slots[i].take().expect("sampled indices are distinct"))
        .collect())
}

/// Name of the synthetic state holding path `k`.
pub fn path_state_name(k: usize) -> String {
    format!("sim{k:03}")
}

/// One synthetic state per path with cumulative `cases`, cumulative `tests`
/// growing linearly (so test growth is zero), and one indicator column per
/// policy.
pub fn paths_to_panel(config: &SirConfig, paths: &[EpidemicPath]) -> Result<PanelDataset> {
    let first = paths
        .first()
        .ok_or_else(|| Error::InvalidConfig("no paths to convert".into()))?;
    let days = first.s.len();
    if let Some(p) = paths.iter().find(|p| p.s.len() != days) {
        return Err(Error::HorizonMismatch(days - 1, p.s.len() - 1));
    }
    let mut b = PanelBuilder::new();
    let mut cases = Vec::with_capacity(days * paths.len());
    let mut tests = Vec::with_capacity(days * paths.len());
    let mut policies = vec![Vec::with_capacity(days * paths.len()); config.n_policies()];
    for (k, p) in paths.iter().enumerate() {
        b = b.state(&path_state_name(k), config.start_date, days);
        cases.extend(p.cumulative_cases());
        tests.extend((0..days).map(|d| 1000.0 * (d + 1) as f64));
        for (j, col) in policies.iter_mut().enumerate() {
            col.extend(p.policy_series(j));
        }
    }
    b = b
        .column("cases", ColumnRole::Count, cases)
        .column("tests", ColumnRole::TestCount, tests);
    for (name, col) in config.policy_names.iter().zip(policies) {
        b = b.column(name, ColumnRole::Policy, col);
    }
    b.build()
}

/// Long-format CSV: `path,day,date,S,I,R,new_cases,<policy flags>`.
pub fn write_paths_csv<W: Write>(config: &SirConfig, paths: &[EpidemicPath], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["path", "day", "date", "S", "I", "R", "new_cases"].map(String::from).to_vec();
    header.extend(config.policy_names.iter().cloned());
    w.write_record(&header)?;
    for (k, p) in paths.iter().enumerate() {
        for d in 0..p.s.len() {
            let mut rec = vec![
                k.to_string(),
                d.to_string(),
                (config.start_date + Days::new(d as u64)).to_string(),
                p.s[d].to_string(),
                p.i[d].to_string(),
                p.r[d].to_string(),
                p.new_cases[d].to_string(),
            ];
            rec.extend(p.policies.iter().map(|w| (w.active(d) as u8).to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
