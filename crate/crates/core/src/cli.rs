//! Batch front end: load, correct, transform, then estimate, diagnose,
//! permute, simulate or project. Every run writes its artifacts atomically
//! next to a manifest recording input hashes, seed and parameters.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diagnostics::{dfbeta, state_influence, write_influence_csv};
use crate::epi::{
    generate_cohort, paths_to_panel, recovery_experiment, regression_counterfactual, repeated_recovery,
    write_paths_csv, CohortSpec, CounterfactualOptions, CounterfactualResult, PolicyChange, RecoveryTemplate,
    SirConfig,
};
use crate::error::{Error, Result};
use crate::ols::{build_design, combo_weights, fit_ols, linear_combo_test, summarize, AnalysisSpec, FitResult, Stars};
use crate::panel::{apply_corrections, CorrectionSet, PanelDataset, Schema};
use crate::placebo::{run_placebo, summarize_placebo, PlaceboConfig};

#[derive(Debug, Parser, Serialize)]
#[command(name = "policy-panel", version, about = "Policy evaluation on state-day panels")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Panel CSV with `state` and `date` columns.
    #[arg(long, global = true, env = "POLICY_PANEL_PANEL")]
    pub panel: Option<PathBuf>,
    /// JSON mapping panel columns to roles.
    #[arg(long, global = true, env = "POLICY_PANEL_SCHEMA")]
    pub schema: Option<PathBuf>,
    /// CSV of cumulative-count corrections applied after loading.
    #[arg(long, global = true, env = "POLICY_PANEL_CORRECTIONS")]
    pub corrections: Option<PathBuf>,
    /// Analysis JSON: transform pipeline plus regression spec.
    #[arg(long, global = true, env = "POLICY_PANEL_SPEC")]
    pub spec: Option<PathBuf>,
    /// Simulation config JSON (defaults when absent).
    #[arg(long, global = true, env = "POLICY_PANEL_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "POLICY_PANEL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, env = "POLICY_PANEL_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Primary artifact file name, relative to the output directory.
    #[arg(long, global = true, env = "POLICY_PANEL_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "POLICY_PANEL_FORMAT", value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Text,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Text => "txt",
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Fit the regression and report coefficients with the policy sum.
    Estimate,
    /// Per-observation change in one coefficient from deleting that row.
    Influence {
        #[arg(long)]
        coef: String,
    },
    /// Re-estimate under mask policies shuffled across states.
    Placebo {
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Columns whose state assignment is permuted.
        #[arg(long, value_delimiter = ',')]
        permute: Vec<String>,
        /// Coefficients to record (default: regressors derived from permuted columns).
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
    },
    /// Simulate a cohort of SIR epidemics with random policy timing.
    Simulate {
        #[command(flatten)]
        cohort: CohortArgs,
    },
    /// Fit the growth regression to simulated cohorts and report policy coefficients.
    Validate {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long, default_value_t = 11)]
        lag: usize,
        /// Include date indicators.
        #[arg(long)]
        time_effects: bool,
        /// Include lagged national growth terms.
        #[arg(long)]
        national: bool,
        /// Cohorts to simulate; cohort r uses seed + r.
        #[arg(long, default_value_t = 1)]
        cohorts: usize,
    },
    /// Project counts under a changed policy path.
    Counterfactual {
        /// Policy column to change.
        #[arg(long)]
        remove: String,
        /// Value the column takes from `--from` on.
        #[arg(long, default_value_t = 0.0)]
        value: f64,
        #[arg(long)]
        from: NaiveDate,
        /// Restrict the change to these states.
        #[arg(long, value_delimiter = ',')]
        states: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 0.90)]
        level: f64,
        /// Keep national aggregates at their factual values.
        #[arg(long)]
        no_national_feedback: bool,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct CohortArgs {
    #[arg(long, default_value_t = 1500)]
    pub n_generate: usize,
    #[arg(long, default_value_t = 50)]
    pub n_select: usize,
    /// Accepted attack-rate band as `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub attack_band: Vec<f64>,
}

impl CohortArgs {
    fn spec(&self, seed: u64) -> CohortSpec {
        let mut c = CohortSpec::new(seed);
        c.n_generate = self.n_generate;
        c.n_select = self.n_select;
        if let [lo, hi] = self.attack_band[..] {
            c.attack_band = [lo, hi];
        }
        c
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Influence { .. } => "influence",
            Command::Placebo { .. } => "placebo",
            Command::Simulate { .. } => "simulate",
            Command::Validate { .. } => "validate",
            Command::Counterfactual { .. } => "counterfactual",
        }
    }
}

#[derive(Debug, Serialize)]
struct FileDigest {
    role: String,
    path: String,
    sha256: String,
}

/// Written as `<artifact stem>.manifest.json` beside the primary artifact.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    parameters: &'a Cli,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Writes to a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str, command: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::InvalidConfig(format!("{command} needs --{flag}")))
}

struct Run<'a> {
    cli: &'a Cli,
    artifacts: Vec<(String, PathBuf, Vec<u8>)>,
}

impl<'a> Run<'a> {
    fn g(&self) -> &'a GlobalArgs {
        &self.cli.global
    }

    fn primary_path(&self) -> PathBuf {
        let name = self.g().out.clone().unwrap_or_else(|| {
            PathBuf::from(format!("{}.{}", self.cli.command.name(), self.g().format.extension()))
        });
        self.g().out_dir.join(name)
    }

    /// Path of a secondary artifact named after the primary one.
    fn sibling(&self, suffix: &str) -> PathBuf {
        let p = self.primary_path();
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        p.with_file_name(format!("{stem}{suffix}"))
    }

    fn emit(&mut self, role: &str, path: PathBuf, bytes: Vec<u8>) {
        self.artifacts.push((role.to_string(), path, bytes));
    }

    fn emit_primary(&mut self, bytes: Vec<u8>) {
        let p = self.primary_path();
        self.emit("primary", p, bytes);
    }

    fn log(&self, msg: &str) {
        if self.g().verbose {
            eprintln!("{msg}");
        }
    }

    fn load_panel(&self) -> Result<PanelDataset> {
        let name = self.cli.command.name();
        let schema = Schema::from_json_file(required(&self.g().schema, "schema", name)?)?;
        let panel = PanelDataset::load_csv(required(&self.g().panel, "panel", name)?, &schema)?;
        self.log(&format!("loaded {} rows for {} states", panel.n_rows(), panel.states().len()));
        match &self.g().corrections {
            Some(path) => apply_corrections(&panel, &CorrectionSet::load_csv(path)?),
            None => Ok(panel),
        }
    }

    fn load_analysis(&self) -> Result<AnalysisSpec> {
        AnalysisSpec::from_json_file(required(&self.g().spec, "spec", self.cli.command.name())?)
    }

    fn load_sir(&self) -> Result<SirConfig> {
        let config: SirConfig = match &self.g().config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
            None => SirConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    fn fit(&self, panel: &PanelDataset, analysis: &AnalysisSpec) -> Result<FitResult> {
        let derived = analysis.transforms.run(panel)?;
        fit_ols(&build_design(&derived, &analysis.model)?)
    }

    fn unsupported(&self, format: Format) -> Error {
        Error::InvalidConfig(format!("{} has no {:?} output", self.cli.command.name(), format).to_lowercase())
    }

    fn execute(&mut self) -> Result<()> {
        let format = self.g().format;
        let seed = self.g().seed;
        match &self.cli.command {
            Command::Estimate => {
                let panel = self.load_panel()?;
                let analysis = self.load_analysis()?;
                let fit = self.fit(&panel, &analysis)?;
                let weights = combo_weights(&fit, analysis.model.combo.as_deref());
                let combo = match weights {
                    Ok(w) if w.iter().any(|v| *v != 0.0) => Some(linear_combo_test(&fit, &w)?),
                    _ => None,
                };
                let report = summarize(&fit, combo.as_ref().map(|c| ("sum_policy", c)), &Stars::default());
                let text = report.to_text().into_bytes();
                match format {
                    Format::Csv => self.emit_primary(report.to_csv()?.into_bytes()),
                    Format::Json => self.emit_primary(to_json(&report)?),
                    Format::Text => self.emit_primary(text.clone()),
                }
                if format != Format::Text {
                    let p = self.sibling("_table.txt");
                    self.emit("table", p, text);
                }
            }
            Command::Influence { coef } => {
                if format == Format::Text {
                    return Err(self.unsupported(format));
                }
                let panel = self.load_panel()?;
                let analysis = self.load_analysis()?;
                let derived = analysis.transforms.run(&panel)?;
                let design = build_design(&derived, &analysis.model)?;
                let fit = fit_ols(&design)?;
                let records = dfbeta(&fit, &design, coef)?;
                let ranking = state_influence(&records);
                match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        write_influence_csv(&records, &mut buf)?;
                        self.emit_primary(buf);
                    }
                    _ => self.emit_primary(to_json(&records)?),
                }
                let p = self.sibling("_by_state.json");
                self.emit("state_ranking", p, to_json(&ranking)?);
            }
            Command::Placebo {
                reps,
                permute,
                targets,
            } => {
                let panel = self.load_panel()?;
                let mut cfg = PlaceboConfig::new(self.load_analysis()?, seed);
                cfg.n_reps = *reps;
                if !permute.is_empty() {
                    cfg.permuted_columns = permute.clone();
                }
                if !targets.is_empty() {
                    cfg.targets = Some(targets.clone());
                }
                self.log(&format!("running {reps} placebo replicates"));
                let result = run_placebo(&panel, &cfg)?;
                let summary = summarize_placebo(&result);
                match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        result.write_csv(&mut buf)?;
                        self.emit_primary(buf);
                    }
                    Format::Json => self.emit_primary(to_json(&result)?),
                    Format::Text => {
                        let mut out = String::new();
                        for s in &summary {
                            let _ = writeln!(
                                out,
                                "{}: observed {:.4}, placebo median {:.4} [{:.4}, {:.4}], mean {:.4} (se {:.4}), {} ok, {} failed",
                                s.target, s.observed, s.median, s.q1, s.q3, s.mean, s.mean_se, s.n_ok, s.failures
                            );
                        }
                        self.emit_primary(out.into_bytes());
                    }
                }
                let p = self.sibling("_summary.json");
                self.emit("summary", p, to_json(&summary)?);
            }
            Command::Simulate { cohort } => {
                let config = self.load_sir()?;
                let paths = generate_cohort(&config, &cohort.spec(seed))?;
                match format {
                    Format::Csv => {
                        let mut buf = Vec::new();
                        write_paths_csv(&config, &paths, &mut buf)?;
                        self.emit_primary(buf);
                    }
                    Format::Json => self.emit_primary(to_json(&paths)?),
                    Format::Text => return Err(self.unsupported(format)),
                }
            }
            Command::Validate {
                cohort,
                lag,
                time_effects,
                national,
                cohorts,
            } => {
                let config = self.load_sir()?;
                let template = RecoveryTemplate {
                    lag: *lag,
                    time_effects: *time_effects,
                    national: *national,
                };
                if *cohorts <= 1 {
                    let paths = generate_cohort(&config, &cohort.spec(seed))?;
                    let panel = paths_to_panel(&config, &paths)?;
                    let (_, rows) = recovery_experiment(&panel, &config, &template)?;
                    match format {
                        Format::Csv => {
                            let mut w = csv::Writer::from_writer(Vec::new());
                            for r in &rows {
                                w.serialize(r)?;
                            }
                            self.emit_primary(w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
                        }
                        Format::Json => self.emit_primary(to_json(&rows)?),
                        Format::Text => {
                            let out: String = rows
                                .iter()
                                .map(|r| format!("{:<12} {:>9.4} ({:.4})\n", r.policy, r.estimate, r.std_error))
                                .collect();
                            self.emit_primary(out.into_bytes());
                        }
                    }
                } else {
                    let summary = repeated_recovery(&config, &cohort.spec(seed), &template, *cohorts)?;
                    match format {
                        Format::Csv => {
                            let mut buf = Vec::new();
                            summary.write_csv(&mut buf)?;
                            self.emit_primary(buf);
                        }
                        Format::Json => self.emit_primary(to_json(&summary)?),
                        Format::Text => {
                            let mut out = format!(
                                "{} cohorts, all policies negative in {:.1}%\n",
                                cohorts,
                                100.0 * summary.share_all_negative
                            );
                            for (j, p) in summary.policies.iter().enumerate() {
                                let _ = writeln!(out, "{:<12} mean {:>9.4} (se {:.4})", p, summary.mean[j], summary.mean_se[j]);
                            }
                            self.emit_primary(out.into_bytes());
                        }
                    }
                }
            }
            Command::Counterfactual {
                remove,
                value,
                from,
                states,
                draws,
                level,
                no_national_feedback,
            } => {
                let panel = self.load_panel()?;
                let analysis = self.load_analysis()?;
                let fit = self.fit(&panel, &analysis)?;
                let change = PolicyChange {
                    column: remove.clone(),
                    value: *value,
                    from: *from,
                    states: (!states.is_empty()).then(|| states.clone()),
                };
                let opts = CounterfactualOptions {
                    draws: *draws,
                    level: *level,
                    seed,
                    national_feedback: !no_national_feedback,
                };
                let result = regression_counterfactual(&panel, &analysis, &fit, &change, &opts)?;
                match format {
                    Format::Json => self.emit_primary(to_json(&result)?),
                    Format::Csv => self.emit_primary(counterfactual_csv(&result)?),
                    Format::Text => return Err(self.unsupported(format)),
                }
            }
        }
        Ok(())
    }

    fn input_digests(&self) -> Result<Vec<FileDigest>> {
        let g = self.g();
        let named = [
            ("panel", &g.panel),
            ("schema", &g.schema),
            ("corrections", &g.corrections),
            ("spec", &g.spec),
            ("config", &g.config),
        ];
        named
            .into_iter()
            .filter_map(|(role, p)| p.as_ref().map(|p| (role, p)))
            .map(|(role, p)| {
                Ok(FileDigest {
                    role: role.into(),
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect()
    }

    /// Refuses to overwrite any input file.
    fn check_outputs(&self, inputs: &[FileDigest]) -> Result<()> {
        for (_, out, _) in &self.artifacts {
            let Ok(out) = out.canonicalize() else { continue };
            for i in inputs {
                if Path::new(&i.path).canonicalize().is_ok_and(|p| p == out) {
                    return Err(Error::InvalidConfig(format!("output {} would overwrite an input", out.display())));
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Vec<PathBuf>> {
        let inputs = self.input_digests()?;
        self.check_outputs(&inputs)?;
        let manifest_path = self.sibling(".manifest.json");
        let outputs = self
            .artifacts
            .iter()
            .map(|(role, p, bytes)| FileDigest {
                role: role.clone(),
                path: p.display().to_string(),
                sha256: hex::encode(Sha256::digest(bytes)),
            })
            .collect();
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.cli.command.name(),
            seed: self.g().seed,
            parameters: self.cli,
            inputs,
            outputs,
        };
        let manifest_bytes = to_json(&manifest)?;
        let mut written = Vec::new();
        for (_, p, bytes) in &self.artifacts {
            write_atomic(p, bytes)?;
            written.push(p.clone());
        }
        write_atomic(&manifest_path, &manifest_bytes)?;
        written.push(manifest_path);
        Ok(written)
    }
}

fn counterfactual_csv(r: &CounterfactualResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "factual", "counterfactual", "relative_effect", "lower", "upper"])?;
    for (t, d) in r.dates.iter().enumerate() {
        w.write_record([
            d.to_string(),
            r.factual[t].to_string(),
            r.counterfactual[t].to_string(),
            r.relative_effect[t].to_string(),
            r.lower[t].to_string(),
            r.upper[t].to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Runs a parsed command and returns the paths written, manifest last.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut run = Run {
        cli,
        artifacts: Vec::new(),
    };
    run.execute()?;
    run.finish()
}

#[derive(Serialize)]
struct ErrorReport {
    error: &'static str,
    message: String,
    exit_code: i32,
}

/// Entry point for the binary: parses arguments, runs, and on failure
/// prints a JSON error to stderr and returns the error's exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            let report = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
                exit_code: e.exit_code(),
            };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands_and_globals() {
        let cli = Cli::try_parse_from([
            "policy-panel",
            "placebo",
            "--reps",
            "3",
            "--seed",
            "7",
            "--format",
            "json",
            "--permute",
            "a,b",
        ])
        .unwrap();
        assert_eq!(cli.global.seed, 7);
        assert_eq!(cli.global.format, Format::Json);
        match cli.command {
            Command::Placebo { reps, permute, .. } => {
                assert_eq!(reps, 3);
                assert_eq!(permute, vec!["a", "b"]);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn missing_panel_is_a_config_error() {
        let cli = Cli::try_parse_from(["policy-panel", "estimate"]).unwrap();
        let e = run(&cli).unwrap_err();
        assert_eq!(e.kind(), "InvalidConfig");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }
}
