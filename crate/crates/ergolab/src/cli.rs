//! Configuration-driven command-line front end: parses experiment configs,
//! dispatches to the harness, and writes report.json / series.csv / a
//! manifest with the config hash.

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{
    bounds_audit, clt_check, ks_limit_law_test, lb_consistency_experiment, mc_moment_experiment,
    qsd_experiment, BoundsAuditConfig, Dynamics, EstimateRow, LbConfig, MomentConfig, NuSpec,
    QsdConfig, Verdict,
};
use crate::spaces::{BoundaryCondition, Space};
use crate::spectral::{example51_envelope, gamma_d, rate_t5, xi_k};

#[derive(Parser)]
#[command(name = "ergolab", version, about = "Wasserstein convergence laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run an experiment from a TOML or JSON config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's `output`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a config file without computing anything.
    Validate { config: PathBuf },
    /// List the available experiment kinds.
    ListExperiments,
    /// Tabulate a closed-form rate envelope as CSV.
    RateTable {
        #[arg(long)]
        kind: RateKind,
        /// Comma-separated t grid.
        #[arg(long, value_delimiter = ',', required = true)]
        t_list: Vec<f64>,
        /// Decay exponent K (kind xi-k).
        #[arg(long)]
        k_exponent: Option<f64>,
        /// Dimension d (kinds gamma-d, t5).
        #[arg(long)]
        d: Option<f64>,
        /// Degeneracy parameter l (kind cv51).
        #[arg(long)]
        l: Option<f64>,
        /// Moment order p (kind cv51).
        #[arg(long)]
        p: Option<f64>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RateKind {
    XiK,
    GammaD,
    T5,
    Cv51,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Moment,
    Qsd,
    LimitLaw,
    Clt,
    LbConsistency,
    BoundsAudit,
}

impl ExperimentKind {
    pub const ALL: [(ExperimentKind, &'static str); 6] = [
        (ExperimentKind::Moment, "E[W_p(mu_t, mu)^q] vs the series limit, with rate fit"),
        (ExperimentKind::Qsd, "conditional Wasserstein moments of killed BM vs the gap series"),
        (ExperimentKind::LimitLaw, "two-sample KS against the spectral weak limit law"),
        (ExperimentKind::Clt, "variance of sqrt(t)(mu_t(f) - mu(f)) vs 2 V_f"),
        (ExperimentKind::LbConsistency, "N-point lower bound vs exact distances"),
        (ExperimentKind::BoundsAudit, "spectral upper bound vs exact circle distances"),
    ];

    fn name(self) -> &'static str {
        match self {
            ExperimentKind::Moment => "moment",
            ExperimentKind::Qsd => "qsd",
            ExperimentKind::LimitLaw => "limit-law",
            ExperimentKind::Clt => "clt",
            ExperimentKind::LbConsistency => "lb-consistency",
            ExperimentKind::BoundsAudit => "bounds-audit",
        }
    }
}

fn default_order() -> f64 {
    2.0
}
fn default_h() -> f64 {
    1e-3
}
fn default_tolerance() -> f64 {
    0.15
}
fn default_n_modes() -> usize {
    64
}
fn default_pairs() -> usize {
    100
}

/// Schema-validated experiment description. Unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub space: Space,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub dynamics: DynamicsSpec,
    #[serde(default = "default_order")]
    pub p: f64,
    #[serde(default = "default_order")]
    pub q: f64,
    #[serde(default)]
    pub t_list: Vec<f64>,
    #[serde(default)]
    pub replicas: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// limit-law: spectral modes of the synthetic sample.
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// lb-consistency: atom counts of the discretized measures.
    #[serde(default)]
    pub n_list: Vec<usize>,
    /// clt: basis coefficients of the observable.
    #[serde(default)]
    pub f_coeffs: Vec<f64>,
    /// qsd: Dirac start; omitted = quasi-stationary start.
    #[serde(default)]
    pub nu_point: Option<f64>,
    /// bounds-audit: number of random density pairs.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DynamicsSpec {
    #[serde(default)]
    pub kind: DynamicsKind,
    /// Degeneracy parameter of example51.
    #[serde(default)]
    pub l: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    #[default]
    BrownianMotion,
    Langevin,
    Example51,
}

impl DynamicsSpec {
    fn to_dynamics(self) -> Result<Dynamics> {
        Ok(match self.kind {
            DynamicsKind::BrownianMotion => Dynamics::BrownianMotion,
            DynamicsKind::Langevin => Dynamics::Langevin,
            DynamicsKind::Example51 => Dynamics::Example51 {
                l: self
                    .l
                    .ok_or_else(|| Error::Config("example51 dynamics need `l`".into()))?,
            },
        })
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("TOML schema error: {e}")))?,
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("JSON schema error: {e}")))?,
            other => {
                return Err(Error::Config(format!(
                    "unsupported config extension {other:?}; use .toml or .json"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        self.space.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.h <= 0.0 {
            return fail("h must be positive");
        }
        if self.p < 1.0 || self.q <= 0.0 {
            return fail("need p >= 1 and q > 0");
        }
        if self.tolerance <= 0.0 {
            return fail("tolerance must be positive");
        }
        let needs_replicas = !matches!(self.experiment, ExperimentKind::BoundsAudit);
        if needs_replicas && self.replicas == 0 {
            return fail("replicas must be positive");
        }
        let needs_t = matches!(
            self.experiment,
            ExperimentKind::Moment
                | ExperimentKind::Qsd
                | ExperimentKind::LimitLaw
                | ExperimentKind::Clt
                | ExperimentKind::LbConsistency
        );
        if needs_t {
            if self.t_list.is_empty() {
                return fail("t_list must not be empty");
            }
            if self.t_list.windows(2).any(|w| w[0] >= w[1]) || self.t_list[0] <= 0.0 {
                return fail("t_list must be positive and strictly increasing");
            }
        }
        match self.experiment {
            ExperimentKind::Qsd => {
                if !matches!(
                    self.space,
                    Space::Interval { boundary: BoundaryCondition::Dirichlet, .. }
                ) {
                    return fail("qsd needs a Dirichlet interval space");
                }
            }
            ExperimentKind::Clt if self.f_coeffs.is_empty() => {
                return fail("clt needs nonempty f-coeffs");
            }
            ExperimentKind::LbConsistency => {
                if self.n_list.is_empty() || self.n_list.contains(&0) {
                    return fail("lb-consistency needs a positive n-list");
                }
                if self.t_list.len() != 1 {
                    return fail("lb-consistency uses a single t");
                }
            }
            ExperimentKind::LimitLaw | ExperimentKind::Clt
                if self.t_list.len() != 1 =>
            {
                return fail("this experiment uses a single t");
            }
            _ => {}
        }
        Ok(())
    }
}

/// Normalized experiment outcome, ready for artifact emission.
pub struct RunOutcome {
    pub label: String,
    pub verdict: Verdict,
    pub csv_rows: Vec<CsvRow>,
    pub report_json: serde_json::Value,
    pub runtime_secs: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct CsvRow {
    pub t: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub target: f64,
    pub ratio: f64,
    pub verdict: Verdict,
}

fn estimate_rows_to_csv(rows: &[EstimateRow], q: f64) -> Vec<CsvRow> {
    rows.iter()
        .map(|r| {
            // delta-method CI on the scaled estimate t * mean^{2/q}
            let slope = if r.mean > 0.0 {
                r.t * (2.0 / q) * r.mean.powf(2.0 / q - 1.0)
            } else {
                r.t
            };
            let half = r.ci_half.map(|c| slope * c).unwrap_or(f64::NAN);
            CsvRow {
                t: r.t,
                estimate: r.scaled,
                ci_low: r.scaled - half,
                ci_high: r.scaled + half,
                target: r.target,
                ratio: r.ratio,
                verdict: r.verdict,
            }
        })
        .collect()
}

pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome> {
    match config.experiment {
        ExperimentKind::Moment => {
            let report = mc_moment_experiment(&MomentConfig {
                space: config.space,
                dynamics: config.dynamics.to_dynamics()?,
                p: config.p,
                q: config.q,
                t_list: config.t_list.clone(),
                replicas: config.replicas,
                h: config.h,
                seed: config.seed,
                tolerance: config.tolerance,
            })?;
            Ok(RunOutcome {
                label: "moment".into(),
                verdict: report.verdict,
                csv_rows: estimate_rows_to_csv(&report.rows, config.q),
                runtime_secs: report.runtime_secs,
                report_json: serde_json::to_value(&report).expect("report serializes"),
            })
        }
        ExperimentKind::Qsd => {
            let ell = match config.space {
                Space::Interval { length, .. } => length,
                _ => unreachable!("validated"),
            };
            let report = qsd_experiment(&QsdConfig {
                ell,
                nu: match config.nu_point {
                    Some(x) => NuSpec::Point { x },
                    None => NuSpec::Qsd,
                },
                t_list: config.t_list.clone(),
                replicas: config.replicas,
                h: config.h,
                seed: config.seed,
                tolerance: config.tolerance,
            })?;
            let verdict = match (report.conditional.verdict, report.mean_measure.verdict) {
                (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
                (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
                _ => Verdict::Pass,
            };
            let mut csv = estimate_rows_to_csv(&report.conditional.rows, 2.0);
            csv.extend(estimate_rows_to_csv(&report.mean_measure.rows, 2.0));
            Ok(RunOutcome {
                label: "qsd".into(),
                verdict,
                csv_rows: csv,
                runtime_secs: report.conditional.runtime_secs,
                report_json: serde_json::to_value(&report).expect("report serializes"),
            })
        }
        ExperimentKind::LimitLaw => {
            let t = config.t_list[0];
            let started = std::time::Instant::now();
            let report = ks_limit_law_test(
                &config.space,
                t,
                config.replicas,
                config.n_modes,
                config.h,
                config.seed,
            )?;
            Ok(RunOutcome {
                label: "limit-law".into(),
                verdict: report.verdict,
                csv_rows: vec![CsvRow {
                    t,
                    estimate: report.p_value,
                    ci_low: f64::NAN,
                    ci_high: f64::NAN,
                    target: 0.01,
                    ratio: report.p_value / 0.01,
                    verdict: report.verdict,
                }],
                runtime_secs: started.elapsed().as_secs_f64(),
                report_json: serde_json::to_value(&report).expect("report serializes"),
            })
        }
        ExperimentKind::Clt => {
            let t = config.t_list[0];
            let started = std::time::Instant::now();
            let report = clt_check(
                &config.space,
                &config.f_coeffs,
                t,
                config.replicas,
                config.h,
                config.seed,
            )?;
            Ok(RunOutcome {
                label: "clt".into(),
                verdict: report.verdict,
                csv_rows: vec![CsvRow {
                    t,
                    estimate: report.sample_variance,
                    ci_low: report.sample_variance - 2.0 * report.variance_se,
                    ci_high: report.sample_variance + 2.0 * report.variance_se,
                    target: report.target_variance,
                    ratio: report.sample_variance / report.target_variance,
                    verdict: report.verdict,
                }],
                runtime_secs: started.elapsed().as_secs_f64(),
                report_json: serde_json::to_value(&report).expect("report serializes"),
            })
        }
        ExperimentKind::LbConsistency => {
            let report = lb_consistency_experiment(&LbConfig {
                space: config.space,
                t: config.t_list[0],
                n_list: config.n_list.clone(),
                replicas: config.replicas,
                p: config.p,
                h: config.h,
                seed: config.seed,
            })?;
            let csv = report
                .rows
                .iter()
                .map(|r| CsvRow {
                    t: r.n_atoms as f64,
                    estimate: r.min_distance,
                    ci_low: f64::NAN,
                    ci_high: f64::NAN,
                    target: r.bound,
                    ratio: r.min_distance / r.bound,
                    verdict: if r.violations == 0 { Verdict::Pass } else { Verdict::Fail },
                })
                .collect();
            Ok(RunOutcome {
                label: "lb-consistency".into(),
                verdict: report.verdict,
                csv_rows: csv,
                runtime_secs: report.runtime_secs,
                report_json: serde_json::to_value(&report).expect("report serializes"),
            })
        }
        ExperimentKind::BoundsAudit => {
            let circumference = match config.space {
                Space::Circle { circumference } => circumference,
                _ => return Err(Error::Config("bounds-audit needs a circle space".into())),
            };
            let started = std::time::Instant::now();
            let report = bounds_audit(&BoundsAuditConfig {
                circumference,
                pairs: config.pairs,
                seed: config.seed,
                ..Default::default()
            })?;
            Ok(RunOutcome {
                label: "bounds-audit".into(),
                verdict: report.verdict,
                csv_rows: vec![CsvRow {
                    t: report.pairs as f64,
                    estimate: report.violations as f64,
                    ci_low: f64::NAN,
                    ci_high: f64::NAN,
                    target: 0.0,
                    ratio: report.max_gap,
                    verdict: report.verdict,
                }],
                runtime_secs: started.elapsed().as_secs_f64(),
                report_json: serde_json::to_value(&report).expect("report serializes"),
            })
        }
    }
}

/// Replace every "runtime_secs" number so report.json is bitwise
/// reproducible; wall-clock data lives in the manifest.
fn scrub_runtimes(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                if k == "runtime_secs" {
                    *v = serde_json::Value::from(0.0);
                } else {
                    scrub_runtimes(v);
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(scrub_runtimes),
        _ => {}
    }
}

#[derive(Serialize)]
struct Manifest {
    config_sha256: String,
    seed: u64,
    experiment: String,
    code_version: String,
    created_unix_secs: u64,
    runtime_secs: f64,
    threads: usize,
}

pub fn write_artifacts(
    dir: &Path,
    config_path: &Path,
    config: &ExperimentConfig,
    outcome: &RunOutcome,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut report = serde_json::json!({
        "experiment": outcome.label,
        "config": config,
        "verdict": outcome.verdict,
        "report": outcome.report_json,
    });
    scrub_runtimes(&mut report);
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;

    let mut csv = String::from("t,estimate,ci_low,ci_high,target,ratio,verdict\n");
    for row in &outcome.csv_rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.t, row.estimate, row.ci_low, row.ci_high, row.target, row.ratio, row.verdict
        ));
    }
    std::fs::write(dir.join("series.csv"), csv)?;

    let config_bytes = std::fs::read(config_path)?;
    let manifest = Manifest {
        config_sha256: hex(&Sha256::digest(&config_bytes)),
        seed: config.seed,
        experiment: config.experiment.name().to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        runtime_secs: outcome.runtime_secs,
        threads: rayon::current_num_threads(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn print_verdict_table(outcome: &RunOutcome) {
    println!("experiment: {}  verdict: {}", outcome.label, outcome.verdict);
    println!(
        "{:>10} {:>14} {:>14} {:>14} {:>8} {:>13}",
        "t", "estimate", "target", "ratio", "verdict", "ci-half"
    );
    for row in &outcome.csv_rows {
        let half = (row.ci_high - row.ci_low) / 2.0;
        println!(
            "{:>10} {:>14.6} {:>14.6} {:>14.6} {:>8} {:>13.3e}",
            row.t, row.estimate, row.target, row.ratio, row.verdict, half
        );
    }
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("ERGOLAB_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            // best effort: the global pool may already exist in-process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Full CLI entry point; returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    configure_threads();
    match cli.command {
        Command::Validate { config } => match ExperimentConfig::from_path(&config) {
            Ok(cfg) => {
                println!("ok: {} experiment, seed {}", cfg.experiment.name(), cfg.seed);
                0
            }
            Err(e) => {
                eprintln!("config error: {e}");
                2
            }
        },
        Command::ListExperiments => {
            for (kind, about) in ExperimentKind::ALL {
                println!("{:<16} {about}", kind.name());
            }
            0
        }
        Command::Run { config: config_path, output } => {
            let config = match ExperimentConfig::from_path(&config_path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return 2;
                }
            };
            let outcome = match execute(&config) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("compute error: {e}");
                    return 3;
                }
            };
            let dir = output
                .or_else(|| config.output.clone())
                .unwrap_or_else(|| PathBuf::from("ergolab-out"));
            if let Err(e) = write_artifacts(&dir, &config_path, &config, &outcome) {
                eprintln!("artifact error: {e}");
                return 3;
            }
            print_verdict_table(&outcome);
            match outcome.verdict {
                Verdict::Fail => 1,
                _ => 0,
            }
        }
        Command::RateTable { kind, t_list, k_exponent, d, l, p, output } => {
            match rate_table(kind, &t_list, k_exponent, d, l, p) {
                Ok(csv) => {
                    if let Some(path) = output {
                        if let Err(e) = std::fs::write(&path, csv) {
                            eprintln!("artifact error: {e}");
                            return 3;
                        }
                    } else {
                        print!("{csv}");
                    }
                    0
                }
                Err(e) => {
                    eprintln!("config error: {e}");
                    2
                }
            }
        }
    }
}

pub fn rate_table(
    kind: RateKind,
    t_list: &[f64],
    k_exponent: Option<f64>,
    d: Option<f64>,
    l: Option<f64>,
    p: Option<f64>,
) -> Result<String> {
    if t_list.is_empty() {
        return Err(Error::Config("rate-table needs a t grid".into()));
    }
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::Config(format!("kind requires --{name}")))
    };
    let mut csv = String::from("t,envelope\n");
    for &t in t_list {
        let value = match kind {
            RateKind::XiK => xi_k(need(k_exponent, "k-exponent")?, t)?,
            RateKind::GammaD => gamma_d(need(d, "d")?, t)?,
            RateKind::T5 => rate_t5(need(d, "d")? as u32, t)?,
            RateKind::Cv51 => example51_envelope(need(l, "l")?, need(p, "p")?, t)?,
        };
        csv.push_str(&format!("{t},{value}\n"));
    }
    Ok(csv)
}
