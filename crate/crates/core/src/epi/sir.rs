use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_population() -> f64 {
    1e6
}
fn default_r0() -> f64 {
    2.5
}
fn default_period() -> f64 {
    7.0
}
fn default_names() -> Vec<String> {
    ["masks", "schools", "stay_home", "business"].map(String::from).to_vec()
}
fn default_effects() -> Vec<f64> {
    vec![0.525; 4]
}
fn default_onsets() -> [usize; 2] {
    [10, 60]
}
fn default_horizon() -> usize {
    150
}
fn default_i0() -> f64 {
    10.0
}
fn default_reporting() -> f64 {
    1.0
}
fn default_substeps() -> usize {
    4
}
fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date")
}

/// SIR model with policies that subtract a fixed amount from the
/// reproduction number from their onset day onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirConfig {
    #[serde(default = "default_population")]
    pub population: f64,
    #[serde(default = "default_r0")]
    pub r0: f64,
    /// Mean infectious period in days; the recovery rate is its inverse.
    #[serde(default = "default_period")]
    pub infectious_period: f64,
    #[serde(default = "default_names")]
    pub policy_names: Vec<String>,
    /// Reduction of the reproduction number while each policy is active.
    #[serde(default = "default_effects")]
    pub policy_effects: Vec<f64>,
    /// Inclusive day range for uniformly drawn onsets.
    #[serde(default = "default_onsets")]
    pub policy_onset_range: [usize; 2],
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_i0")]
    pub initial_infected: f64,
    /// When set, each path draws its initial infected count log-uniformly
    /// from this range instead of using `initial_infected`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_infected_range: Option<[f64; 2]>,
    /// Share of infections recorded as cases.
    #[serde(default = "default_reporting")]
    pub reporting: f64,
    /// Runge-Kutta steps per day. Policies are constant within a day.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Calendar date of day 0 when paths become panels.
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

impl Default for SirConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl SirConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.population > 0.0) {
            return bad("population must be positive");
        }
        if !(self.r0 > 0.0) {
            return bad("r0 must be positive");
        }
        if !(self.infectious_period > 0.0) {
            return bad("infectious_period must be positive");
        }
        if self.policy_effects.len() != self.policy_names.len() {
            return bad("policy_effects and policy_names differ in length");
        }
        if self.policy_effects.iter().any(|e| !(*e >= 0.0)) {
            return bad("policy effects must be non-negative");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least one day");
        }
        if self.policy_onset_range[0] > self.policy_onset_range[1] {
            return bad("empty onset range");
        }
        if !(self.initial_infected > 0.0 && self.initial_infected <= self.population) {
            return bad("initial_infected must lie in (0, population]");
        }
        if let Some([lo, hi]) = self.initial_infected_range {
            if !(lo > 0.0 && lo <= hi && hi <= self.population) {
                return bad("initial_infected_range must satisfy 0 < lo <= hi <= population");
            }
        }
        if !(self.reporting > 0.0 && self.reporting <= 1.0) {
            return bad("reporting must lie in (0, 1]");
        }
        if self.substeps == 0 {
            return bad("substeps must be at least one");
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.infectious_period
    }

    pub fn n_policies(&self) -> usize {
        self.policy_names.len()
    }
}

/// When a policy is in force: days `onset <= d < until`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PolicyWindow {
    pub onset: Option<usize>,
    pub until: Option<usize>,
}

impl PolicyWindow {
    pub fn from_onset(onset: usize) -> Self {
        PolicyWindow {
            onset: Some(onset),
            until: None,
        }
    }

    pub fn active(&self, day: usize) -> bool {
        self.onset.is_some_and(|o| day >= o) && self.until.is_none_or(|u| day < u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicPath {
    /// Compartments at the start of each day, `horizon + 1` entries.
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    /// Recorded cases per day; day 0 holds the initially infected.
    pub new_cases: Vec<f64>,
    pub policies: Vec<PolicyWindow>,
    pub initial_infected: f64,
    pub population: f64,
    pub attack_rate: f64,
}

impl EpidemicPath {
    pub fn horizon(&self) -> usize {
        self.s.len() - 1
    }

    pub fn cumulative_cases(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.new_cases
            .iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect()
    }

    /// Indicator series of policy `j` over days `0..=horizon`.
    pub fn policy_series(&self, j: usize) -> Vec<f64> {
        (0..=self.horizon()).map(|d| self.policies[j].active(d) as u8 as f64).collect()
    }
}

/// Onsets and initial infections drawn for one path.
pub fn draw_inputs(config: &SirConfig, rng: &mut impl Rng) -> (Vec<PolicyWindow>, f64) {
    let [lo, hi] = config.policy_onset_range;
    let policies = (0..config.n_policies())
        .map(|_| PolicyWindow::from_onset(rng.random_range(lo..=hi)))
        .collect();
    let i0 = match config.initial_infected_range {
        Some([a, b]) if a < b => (a.ln() + rng.random::<f64>() * (b.ln() - a.ln())).exp(),
        Some([a, _]) => a,
        None => config.initial_infected,
    };
    (policies, i0)
}

/// One path with onsets drawn from `seed`.
pub fn simulate_sir(config: &SirConfig, seed: u64) -> Result<EpidemicPath> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (policies, i0) = draw_inputs(config, &mut rng);
    simulate_schedule(config, &policies, i0)
}

/// Deterministic SIR run for given policy windows and initial infections.
///
/// Within each day the reproduction number is `max(r0 - sum of active
/// effects, 0)` and the system is integrated with classical RK4 in
/// `substeps` steps. R is carried as `N - S - I` so the compartments always
/// sum to the population.
pub fn simulate_schedule(config: &SirConfig, policies: &[PolicyWindow], i0: f64) -> Result<EpidemicPath> {
    config.validate()?;
    if policies.len() != config.n_policies() {
        return Err(Error::InvalidConfig(format!(
            "{} policy windows for {} policies",
            policies.len(),
            config.n_policies()
        )));
    }
    let n = config.population;
    let gamma = config.gamma();
    let h = 1.0 / config.substeps as f64;
    let (mut s, mut i) = (1.0 - i0 / n, i0 / n);
    let days = config.horizon + 1;
    let mut out_s = Vec::with_capacity(days);
    let mut out_i = Vec::with_capacity(days);
    out_s.push(s);
    out_i.push(i);
    for day in 0..config.horizon {
        let reduction: f64 = policies
            .iter()
            .zip(&config.policy_effects)
            .filter(|(p, _)| p.active(day))
            .map(|(_, e)| e)
            .sum();
        let beta = (config.r0 - reduction).max(0.0) * gamma;
        let f = |s: f64, i: f64| (-beta * s * i, beta * s * i - gamma * i);
        for _ in 0..config.substeps {
            let k1 = f(s, i);
            let k2 = f(s + 0.5 * h * k1.0, i + 0.5 * h * k1.1);
            let k3 = f(s + 0.5 * h * k2.0, i + 0.5 * h * k2.1);
            let k4 = f(s + h * k3.0, i + h * k3.1);
            s += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            i += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        out_s.push(s);
        out_i.push(i);
    }
    let s: Vec<f64> = out_s.iter().map(|v| v * n).collect();
    let i: Vec<f64> = out_i.iter().map(|v| v * n).collect();
    let r: Vec<f64> = s.iter().zip(&i).map(|(s, i)| n - s - i).collect();
    let mut new_cases = Vec::with_capacity(days);
    new_cases.push(config.reporting * (n - s[0]));
    for d in 1..days {
        new_cases.push(config.reporting * (s[d - 1] - s[d]));
    }
    let attack_rate = ((n - s[days - 1]) / n).clamp(0.0, 1.0);
    Ok(EpidemicPath {
        s,
        i,
        r,
        new_cases,
        policies: policies.to_vec(),
        initial_infected: i0,
        population: n,
        attack_rate,
    })
}

/// Root of `z = 1 - exp(-r0 z)` in (0, 1) by bisection; 0 when `r0 <= 1`.
pub fn final_size(r0: f64) -> f64 {
    if r0 <= 1.0 {
        return 0.0;
    }
    let g = |z: f64| z - 1.0 + (-r0 * z).exp();
    let (mut lo, mut hi) = (1e-9, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn no_policy(horizon: usize) -> SirConfig {
        SirConfig {
            policy_effects: vec![0.0; 4],
            horizon,
            ..SirConfig::default()
        }
    }

    #[test]
    fn defaults_parse_and_validate() {
        let c = SirConfig::default();
        assert_eq!(c.policy_effects, vec![0.525; 4]);
        assert_eq!(c.policy_onset_range, [10, 60]);
        assert!(c.validate().is_ok());
        let bad = SirConfig {
            r0: 0.0,
            ..SirConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad = SirConfig {
            policy_effects: vec![0.5; 3],
            ..SirConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn final_size_matches_bisection_root() {
        let z = final_size(2.5);
        assert!((z - (1.0 - (-2.5 * z).exp())).abs() < 1e-14);
        assert!((z - 0.8926).abs() < 1e-4);
        let p = simulate_sir(&no_policy(400), 0).unwrap();
        assert!((p.attack_rate - z).abs() < 1e-3, "{} vs {z}", p.attack_rate);
    }

    #[test]
    fn subcritical_epidemic_dies_out() {
        let c = SirConfig {
            horizon: 300,
            ..SirConfig::default()
        };
        let all_on = vec![PolicyWindow::from_onset(0); 4];
        let p = simulate_schedule(&c, &all_on, 10.0).unwrap();
        // Re = 0.4: expected total infections about I0 / (1 - Re)
        assert!(p.attack_rate < 10.0 * 10.0 / c.population);
    }

    #[test]
    fn path_accessors() {
        let c = SirConfig::default();
        let p = simulate_schedule(&c, &[PolicyWindow::from_onset(20); 4], 10.0).unwrap();
        let cum = p.cumulative_cases();
        assert!((cum[c.horizon] - (c.population - p.s[c.horizon])).abs() < 1e-6);
        let pol = p.policy_series(0);
        assert_eq!((pol[19], pol[20]), (0.0, 1.0));
        let w = PolicyWindow {
            onset: Some(5),
            until: Some(8),
        };
        assert!(!w.active(4) && w.active(5) && w.active(7) && !w.active(8));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn conservation_and_monotone_compartments(seed in any::<u64>()) {
            let c = SirConfig::default();
            let p = simulate_sir(&c, seed).unwrap();
            for d in 0..=c.horizon {
                let total = p.s[d] + p.i[d] + p.r[d];
                prop_assert!((total - c.population).abs() <= 1e-9 * c.population);
                if d > 0 {
                    prop_assert!(p.s[d] <= p.s[d - 1]);
                    prop_assert!(p.r[d] >= p.r[d - 1] - 1e-9);
                }
            }
            prop_assert!((0.0..=1.0).contains(&p.attack_rate));
        }

        #[test]
        fn weaker_policy_never_lowers_attack_rate(
            seed in any::<u64>(), j in 0usize..4, cut in 0.0f64..0.525,
        ) {
            let c = SirConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (pol, i0) = draw_inputs(&c, &mut rng);
            let base = simulate_schedule(&c, &pol, i0).unwrap();
            let mut weaker = c.clone();
            weaker.policy_effects[j] -= cut;
            let w = simulate_schedule(&weaker, &pol, i0).unwrap();
            prop_assert!(w.attack_rate >= base.attack_rate - 1e-12);
        }
    }
}
