//! Command-line front end: TOML run configs in, CSV reports out.
//!
//! Exit status is 0 on success, 1 when `compare` finds an exact-regime
//! quantity outside three standard errors, and 2 for usage or config errors.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{
    closed_to_sum_ratio, expected_exit_index_with, expected_preexit_time_with,
    functional_phi_closed, functional_phi_sum, recommend_strategy, DEFAULT_J_MAX,
};
use crate::error::DuelError;
use crate::model::{
    derive_constants, validate_spec, ExitRule, FunctionalParams, GameSpec, HittingCdf,
    MarkedProcessSpec, ObservationSpec,
};
use crate::simulate::{
    estimate_exit_stats_capped, monte_carlo_functional_both, EstimateReport, DEFAULT_PATH_CAP,
    MIN_REPLICATIONS,
};
use crate::transforms::LstFamily;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] DuelError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ComparisonFailed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::ComparisonFailed => 1,
        }
    }
}

/// `[game]` table: a [`GameSpec`] with the drain intensities flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub capacity_a: u32,
    pub capacity_b: u32,
    #[serde(default)]
    pub exit_rule: ExitRule,
    pub delay_law: LstFamily,
    pub step_law: LstFamily,
    pub cdf_a: HittingCdf,
    pub cdf_b: HittingCdf,
}

impl GameConfig {
    pub fn to_spec(&self) -> GameSpec {
        GameSpec {
            player_a: MarkedProcessSpec {
                intensity: self.lambda_a,
            },
            player_b: MarkedProcessSpec {
                intensity: self.lambda_b,
            },
            observation: ObservationSpec {
                delay_law: self.delay_law,
                step_law: self.step_law,
            },
            capacity_a: self.capacity_a,
            capacity_b: self.capacity_b,
            cdf_a: self.cdf_a,
            cdf_b: self.cdf_b,
            exit_rule: self.exit_rule,
        }
    }
}

impl From<&GameSpec> for GameConfig {
    fn from(s: &GameSpec) -> Self {
        GameConfig {
            lambda_a: s.lambda_a(),
            lambda_b: s.lambda_b(),
            capacity_a: s.capacity_a,
            capacity_b: s.capacity_b,
            exit_rule: s.exit_rule,
            delay_law: s.observation.delay_law,
            step_law: s.observation.step_law,
            cdf_a: s.cdf_a,
            cdf_b: s.cdf_b,
        }
    }
}

fn default_j_max() -> usize {
    DEFAULT_J_MAX
}

fn default_path_cap() -> usize {
    DEFAULT_PATH_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub n_replications: u64,
    pub master_seed: u64,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    /// Epochs simulated before a path counts as non-terminating.
    #[serde(default = "default_path_cap")]
    pub path_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub game: GameConfig,
    #[serde(default)]
    pub functional: FunctionalParams,
    pub run: RunSettings,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::parse(&text).map_err(|message| CliError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> GameSpec {
        self.game.to_spec()
    }

    /// Field-level validation beyond what the parser enforces.
    pub fn check(&self) -> Result<(), CliError> {
        let mut problems: Vec<String> = validate_spec(&self.spec())
            .into_iter()
            .map(|m| format!("game: {m}"))
            .collect();
        problems.extend(
            self.functional
                .violations()
                .into_iter()
                .map(|m| format!("functional.{m}")),
        );
        if self.run.j_max == 0 {
            problems.push("run.j_max must be positive".to_string());
        }
        if self.run.path_cap == 0 {
            problems.push("run.path_cap must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(problems.join("; ")))
        }
    }

    fn check_replications(&self) -> Result<(), CliError> {
        if self.run.n_replications < MIN_REPLICATIONS {
            return Err(CliError::Invalid(format!(
                "run.n_replications must be at least {MIN_REPLICATIONS} (got {})",
                self.run.n_replications
            )));
        }
        Ok(())
    }
}

/// Reals are written with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn or_nan<T>(what: &str, r: crate::Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            eprintln!("warning: {what}: {e}");
            None
        }
    }
}

pub fn analyze_report(cfg: &RunConfig) -> Result<String, CliError> {
    let spec = cfg.spec();
    let params = &cfg.functional;
    let j_max = cfg.run.j_max;
    let c = derive_constants(&spec)?;
    let nan = f64::NAN;
    let mut out = String::from("quantity,method,value,error_estimate\n");
    let mut row = |q: &str, m: &str, v: String, e: f64| {
        writeln!(out, "{q},{m},{v},{}", fmt_real(e)).unwrap();
    };
    row("t_star", "bisection", fmt_real(c.t_star), nan);
    row("sigma_bar", "lst_derivative", fmt_real(c.sigma_bar), nan);
    row("j_min", "ceil", c.j_min.to_string(), nan);
    row("m_cap", "floor", c.m_cap.to_string(), nan);
    row("m_ab", "exact", c.m_ab.to_string(), nan);
    let closed =
        or_nan("phi_closed", functional_phi_closed(&spec, params)).map_or(nan, |r| r.value);
    row("phi_closed", "closed", fmt_real(closed), nan);
    let sum = or_nan("phi_sum", functional_phi_sum(&spec, params, j_max)).map_or(nan, |r| r.value);
    row("phi_sum", "sum", fmt_real(sum), nan);
    let ratio = or_nan(
        "closed_sum_ratio",
        closed_to_sum_ratio(&spec, params, j_max),
    )
    .unwrap_or(nan);
    row("closed_sum_ratio", "ratio", fmt_real(ratio), nan);
    let nu = or_nan("e_nu", expected_exit_index_with(&spec, j_max));
    row(
        "e_nu",
        "richardson",
        fmt_real(nu.map_or(nan, |d| d.value)),
        nu.map_or(nan, |d| d.error_estimate),
    );
    let tau = or_nan("e_tau_pre", expected_preexit_time_with(&spec, j_max));
    row(
        "e_tau_pre",
        "richardson",
        fmt_real(tau.map_or(nan, |d| d.value)),
        tau.map_or(nan, |d| d.error_estimate),
    );
    row(
        "strategy",
        "capacity_rule",
        recommend_strategy(&spec).to_string(),
        nan,
    );
    Ok(out)
}

struct Simulated {
    phi: EstimateReport,
    phi_clamped: EstimateReport,
    stats: std::collections::BTreeMap<String, EstimateReport>,
}

fn run_simulation(spec: &GameSpec, cfg: &RunConfig) -> Result<Simulated, CliError> {
    cfg.check_replications()?;
    let (n, seed, cap) = (
        cfg.run.n_replications,
        cfg.run.master_seed,
        cfg.run.path_cap,
    );
    let f = monte_carlo_functional_both(spec, &cfg.functional, n, seed, cap)?;
    let stats = estimate_exit_stats_capped(spec, n, seed, cap)?;
    if f.signed.non_terminating > 0 {
        eprintln!(
            "warning: {} of {n} paths hit the {cap}-epoch cap and were dropped",
            f.signed.non_terminating
        );
    }
    Ok(Simulated {
        phi: f.signed,
        phi_clamped: f.clamped,
        stats,
    })
}

pub fn simulate_report(cfg: &RunConfig) -> Result<String, CliError> {
    let sim = run_simulation(&cfg.spec(), cfg)?;
    let mut out = String::from("quantity,mean,std_error,n\n");
    let rows = [("phi", &sim.phi), ("phi_clamped", &sim.phi_clamped)]
        .into_iter()
        .chain(
            ["win_probability", "e_nu", "e_mu", "e_tau_nu", "e_tau_pre"]
                .into_iter()
                .map(|k| (k, &sim.stats[k])),
        );
    for (name, r) in rows {
        writeln!(
            out,
            "{name},{},{},{}",
            fmt_real(r.mean),
            fmt_real(r.std_error),
            r.n_replications
        )
        .unwrap();
    }
    Ok(out)
}

/// Returns the report and whether every gated quantity passed.
pub fn compare_report(cfg: &RunConfig) -> Result<(String, bool), CliError> {
    let spec = cfg.spec();
    let params = &cfg.functional;
    let j_max = cfg.run.j_max;
    let sim = run_simulation(&spec, cfg)?;
    let exact_regime = spec.lambda_b() == 0.0;
    let nan = f64::NAN;

    let sum = or_nan("phi_sum", functional_phi_sum(&spec, params, j_max)).map_or(nan, |r| r.value);
    let closed =
        or_nan("phi_closed", functional_phi_closed(&spec, params)).map_or(nan, |r| r.value);
    let nu = or_nan("e_nu", expected_exit_index_with(&spec, j_max)).map_or(nan, |d| d.value);
    let tau =
        or_nan("e_tau_pre", expected_preexit_time_with(&spec, j_max)).map_or(nan, |d| d.value);

    let mut out = String::from("quantity,analytic,simulated,abs_diff,in_3se\n");
    let mut all_ok = true;
    let checks = [
        ("phi_sum", sum, &sim.phi, true),
        ("phi_closed", closed, &sim.phi, false),
        ("e_nu", nu, &sim.stats["e_nu"], true),
        ("e_tau_pre", tau, &sim.stats["e_tau_pre"], true),
    ];
    for (name, analytic, r, gated) in checks {
        let diff = (analytic - r.mean).abs();
        let ok = diff <= 3.0 * r.std_error;
        if exact_regime && gated && !ok {
            eprintln!(
                "{name}: analytic {analytic} vs simulated {} outside 3 SE",
                r.mean
            );
            all_ok = false;
        }
        writeln!(
            out,
            "{name},{},{},{},{ok}",
            fmt_real(analytic),
            fmt_real(r.mean),
            fmt_real(diff)
        )
        .unwrap();
    }
    for jm in [1_000, 10_000] {
        let ratio =
            or_nan("closed_sum_ratio", closed_to_sum_ratio(&spec, params, jm)).unwrap_or(nan);
        writeln!(out, "closed_sum_ratio_j{jm},{},nan,nan,na", fmt_real(ratio)).unwrap();
    }
    Ok((out, all_ok))
}

pub const SWEEP_PARAMS: [&str; 5] = ["lambda_a", "lambda_b", "delta", "M_a", "M_b"];

/// Rate-type parameter of an observation law set to `delta`; deterministic
/// laws get value `1/delta` so the mean gap is `1/delta` in every family.
fn with_rate(law: LstFamily, delta: f64) -> LstFamily {
    match law {
        LstFamily::Exponential { .. } => LstFamily::Exponential { rate: delta },
        LstFamily::Erlang { shape, .. } => LstFamily::Erlang { shape, rate: delta },
        LstFamily::Deterministic { .. } => LstFamily::Deterministic { value: 1.0 / delta },
    }
}

fn swept_config(cfg: &RunConfig, param: &str, raw: &str) -> Result<RunConfig, CliError> {
    let bad = |what: &str| {
        CliError::Invalid(format!(
            "--values: cannot parse {raw:?} as {what} for {param}"
        ))
    };
    let mut c = cfg.clone();
    match param {
        "lambda_a" => c.game.lambda_a = raw.parse().map_err(|_| bad("a real"))?,
        "lambda_b" => c.game.lambda_b = raw.parse().map_err(|_| bad("a real"))?,
        "delta" => {
            let d: f64 = raw.parse().map_err(|_| bad("a real"))?;
            c.game.delay_law = with_rate(c.game.delay_law, d);
            c.game.step_law = with_rate(c.game.step_law, d);
        }
        "M_a" => c.game.capacity_a = raw.parse().map_err(|_| bad("a nonnegative integer"))?,
        "M_b" => c.game.capacity_b = raw.parse().map_err(|_| bad("a nonnegative integer"))?,
        other => {
            return Err(CliError::Invalid(format!(
                "unknown sweep parameter {other:?} (expected one of {})",
                SWEEP_PARAMS.join(", ")
            )))
        }
    }
    c.check()?;
    Ok(c)
}

pub fn sweep_report(cfg: &RunConfig, param: &str, values: &[String]) -> Result<String, CliError> {
    let values: Vec<&str> = values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(CliError::Invalid(
            "--values must list at least one value".to_string(),
        ));
    }
    // validate every value before spending time on any simulation
    let configs = values
        .iter()
        .map(|v| swept_config(cfg, param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = String::from(
        "param,value,win_probability,win_probability_se,e_nu,e_nu_se,e_tau_pre,e_tau_pre_se\n",
    );
    for (raw, c) in values.iter().zip(&configs) {
        c.check_replications()?;
        let stats = estimate_exit_stats_capped(
            &c.spec(),
            c.run.n_replications,
            c.run.master_seed,
            c.run.path_cap,
        )?;
        write!(out, "{param},{raw}").unwrap();
        for k in ["win_probability", "e_nu", "e_tau_pre"] {
            write!(
                out,
                ",{},{}",
                fmt_real(stats[k].mean),
                fmt_real(stats[k].std_error)
            )
            .unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

fn emit(report: &str, cli_output: Option<&Path>, cfg: &RunConfig) -> Result<(), CliError> {
    match cli_output.or(cfg.run.output_path.as_deref()) {
        Some(path) => fs::write(path, report).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .write_all(report.as_bytes())
            .map_err(|source| CliError::Write {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

pub fn cmd_analyze(config_path: &Path, output: Option<&Path>) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(config_path)?;
    emit(&analyze_report(&cfg)?, output, &cfg)?;
    Ok(Outcome::Success)
}

pub fn cmd_simulate(config_path: &Path, output: Option<&Path>) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(config_path)?;
    emit(&simulate_report(&cfg)?, output, &cfg)?;
    Ok(Outcome::Success)
}

pub fn cmd_compare(config_path: &Path, output: Option<&Path>) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let (report, ok) = compare_report(&cfg)?;
    emit(&report, output, &cfg)?;
    Ok(if ok {
        Outcome::Success
    } else {
        Outcome::ComparisonFailed
    })
}

pub fn cmd_sweep(
    config_path: &Path,
    param: &str,
    values: &[String],
    output: Option<&Path>,
) -> Result<Outcome, CliError> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(CliError::Invalid(format!(
            "unknown sweep parameter {param:?} (expected one of {})",
            SWEEP_PARAMS.join(", ")
        )));
    }
    let cfg = RunConfig::load(config_path)?;
    emit(&sweep_report(&cfg, param, values)?, output, &cfg)?;
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Write the CSV here instead of `run.output_path` or stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decision constants, both functional evaluators and the decision parameters.
    Analyze(Common),
    /// Monte Carlo estimates of the functional and exit statistics.
    Simulate(Common),
    /// Analytic against Monte Carlo, gated in the lambda_b = 0 regime.
    Compare(Common),
    /// Monte Carlo exit statistics over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of lambda_a, lambda_b, delta, M_a, M_b.
        #[arg(long)]
        param: String,
        /// Comma-separated values, reported in the order given.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "duelfuel",
    version,
    about = "Fuel-constrained stochastic duel analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Run a parsed command line; the return value is the process exit status.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Analyze(c) => cmd_analyze(&c.config, c.output.as_deref()),
        Command::Simulate(c) => cmd_simulate(&c.config, c.output.as_deref()),
        Command::Compare(c) => cmd_compare(&c.config, c.output.as_deref()),
        Command::Sweep {
            common,
            param,
            values,
        } => cmd_sweep(&common.config, param, values, common.output.as_deref()),
    };
    match result {
        Ok(o) => o.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const CANONICAL: &str = r#"
[game]
lambda_a = 2.0
lambda_b = 1.0
capacity_a = 4
capacity_b = 4
delay_law = { family = "exponential", rate = 1.0 }
step_law = { family = "exponential", rate = 1.0 }
cdf_a = { family = "exponential", rate = 1.0 }
cdf_b = { family = "exponential", rate = 1.0 }

[run]
n_replications = 2000
master_seed = 42
"#;

    #[test]
    fn canonical_config_parses() {
        let c = RunConfig::parse(CANONICAL).unwrap();
        assert_eq!(c.spec(), GameSpec::canonical());
        assert_eq!(c.functional, FunctionalParams::default());
        assert_eq!(c.run.j_max, DEFAULT_J_MAX);
        assert!(c.check().is_ok());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::parse(CANONICAL).unwrap();
        c.game.exit_rule = ExitRule::Dominance;
        c.game.step_law = LstFamily::erlang(3, 2.5);
        c.game.cdf_b = HittingCdf::Weibull {
            shape: 1.5,
            scale: 0.7,
        };
        c.functional.zeta = 0.25;
        c.run.output_path = Some(PathBuf::from("out/x.csv"));
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
        let spec_back = GameConfig::from(&c.spec());
        assert_eq!(spec_back, c.game);
    }

    #[test]
    fn missing_field_is_named() {
        let text = CANONICAL.replace("lambda_b = 1.0\n", "");
        let e = RunConfig::parse(&text).unwrap_err();
        assert!(e.contains("lambda_b"), "{e}");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = CANONICAL.replace("master_seed = 42", "master_seed = 42\nseeed = 1");
        assert!(RunConfig::parse(&text).unwrap_err().contains("seeed"));
    }

    #[test]
    fn invalid_values_reported_by_field() {
        let text = CANONICAL.replace("lambda_a = 2.0", "lambda_a = -1.0");
        let e = RunConfig::parse(&text)
            .unwrap()
            .check()
            .unwrap_err()
            .to_string();
        assert!(e.contains("player_a intensity"), "{e}");
    }

    #[test]
    fn real_formatting() {
        assert_eq!(fmt_real(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_real(f64::NAN), "nan");
        let x = std::f64::consts::PI;
        assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn sweep_rejects_bad_input() {
        let c = RunConfig::parse(CANONICAL).unwrap();
        assert!(sweep_report(&c, "M_a", &[]).is_err());
        assert!(sweep_report(&c, "gamma", &["1".to_string()]).is_err());
        assert!(sweep_report(&c, "M_a", &["x".to_string()]).is_err());
    }

    #[test]
    fn delta_rescales_every_family() {
        assert_eq!(
            with_rate(LstFamily::exponential(1.0), 2.0),
            LstFamily::exponential(2.0)
        );
        assert_eq!(
            with_rate(LstFamily::erlang(2, 1.0), 3.0),
            LstFamily::erlang(2, 3.0)
        );
        assert_eq!(
            with_rate(LstFamily::deterministic(1.0), 4.0),
            LstFamily::deterministic(0.25)
        );
    }
}
