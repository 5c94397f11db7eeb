//! Command-line surface and the resolved experiment configuration.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use zoegd::diagnostics::GradientMode;
use zoegd::egd::{
    ChiForm, DomainExit, EpsHatCeiling, PerturbationGradient, DEFAULT_C, DEFAULT_C_HAT,
    DEFAULT_DELTA, DEFAULT_THETA,
};
use zoegd::estimator::DEFAULT_C_PRIME;
use zoegd::{Error, Result};

/// Samples per gradient estimate when no `--sample-budget` is given.
pub const DEFAULT_SAMPLE_BUDGET: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Run,
    Estimate,
    Escape,
    Coupling,
    Scaling,
    Tailbound,
}

pub const COMMANDS: [Command; 6] = [
    Command::Run,
    Command::Estimate,
    Command::Escape,
    Command::Coupling,
    Command::Scaling,
    Command::Tailbound,
];

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Estimate => "estimate",
            Command::Escape => "escape",
            Command::Coupling => "coupling",
            Command::Scaling => "scaling",
            Command::Tailbound => "tailbound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Samples per gradient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// The estimator's theoretical sample count.
    Theoretical,
    Samples(u64),
}

impl Budget {
    pub fn override_value(self) -> Option<u64> {
        match self {
            Budget::Theoretical => None,
            Budget::Samples(n) => Some(n),
        }
    }
}

fn parse_budget(s: &str) -> std::result::Result<Budget, String> {
    if s == "theoretical" {
        return Ok(Budget::Theoretical);
    }
    s.parse::<u64>()
        .map(Budget::Samples)
        .map_err(|_| format!("expected a sample count or `theoretical`, got `{s}`"))
}

fn budget_arg(b: Budget) -> String {
    match b {
        Budget::Theoretical => "theoretical".into(),
        Budget::Samples(n) => n.to_string(),
    }
}

/// Parses a unit enum variant from its snake_case serde name.
fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unrecognized value `{s}`"))
}

fn name_of<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        other => panic!("not a unit variant: {other:?}"),
    }
}

fn vector_arg(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Parser)]
#[command(
    name = "zoegd",
    version,
    about = "Zeroth-order perturbed gradient descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Optimize a testbed problem and write the trace.
    Run(Flags),
    /// Measure gradient-estimator accuracy at a point.
    Estimate(Flags),
    /// Count escapes from the problem's saddle over several seeds.
    Escape(Flags),
    /// Track the separation of two coupled descent sequences near a saddle.
    Coupling(Flags),
    /// Median iterations to termination for a decreasing list of epsilons.
    Scaling(Flags),
    /// Compare the chi-squared tail bound with simulation.
    Tailbound(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Testbed problem name.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Start point (run, scaling) or estimation point (estimate), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated, strictly decreasing (scaling).
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    eps_hat: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_C_PRIME)]
    c_prime: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = DEFAULT_C_HAT)]
    c_hat: f64,
    /// Defaults to max(f(x0) - f*, 1).
    #[arg(long)]
    delta_f: Option<f64>,
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Samples per estimate: a count or `theoretical`.
    #[arg(long, value_parser = parse_budget)]
    sample_budget: Option<Budget>,
    /// standard | without_factor_two | full_theta
    #[arg(long, value_parser = parse_name::<ChiForm>, default_value = "standard")]
    chi_form: ChiForm,
    /// full | descent | off
    #[arg(long, value_parser = parse_name::<EpsHatCeiling>, default_value = "descent")]
    eps_hat_ceiling: EpsHatCeiling,
    /// fresh | stale
    #[arg(long, value_parser = parse_name::<PerturbationGradient>, default_value = "fresh")]
    perturbation_gradient: PerturbationGradient,
    /// record | stop
    #[arg(long, value_parser = parse_name::<DomainExit>, default_value = "stop")]
    domain_exit: DomainExit,
    /// estimated | exact
    #[arg(long, value_parser = parse_name::<GradientMode>, default_value = "estimated")]
    gradient: GradientMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    seeds: Option<u64>,
    /// Estimates to draw (estimate).
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Squared-norm threshold (tailbound).
    #[arg(long)]
    a2: Option<f64>,
    /// Monte-Carlo draws (tailbound).
    #[arg(long, default_value_t = 1_000_000)]
    mc: u64,
    /// Offset fraction along e1 (coupling).
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Descent steps (coupling).
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json; inferred from the --out extension when omitted.
    #[arg(long, value_parser = parse_name::<OutputFormat>)]
    format: Option<OutputFormat>,
    /// Keep every n-th trace record (plus the last).
    #[arg(long, default_value_t = 1)]
    thin: u64,
}

/// A fully resolved invocation. Optional fields are those with no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub problem: Option<String>,
    pub dim: usize,
    pub x0: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub eps_hat: Option<f64>,
    pub c: f64,
    pub c_prime: f64,
    pub delta: f64,
    pub theta: f64,
    pub c_hat: f64,
    pub delta_f: Option<f64>,
    pub max_iterations: Option<u64>,
    pub sample_budget: Budget,
    pub chi_form: ChiForm,
    pub eps_hat_ceiling: EpsHatCeiling,
    pub perturbation_gradient: PerturbationGradient,
    pub domain_exit: DomainExit,
    pub gradient: GradientMode,
    pub seed: u64,
    pub seeds: u64,
    pub trials: usize,
    pub a2: Option<f64>,
    pub mc: u64,
    pub mu: f64,
    pub steps: usize,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub thin: u64,
}

/// Outcome of argument parsing that is not a configuration.
#[derive(Debug)]
pub enum ParseOutcome {
    Config(Box<ExperimentConfig>),
    /// `--help` or `--version`; the text is ready to print.
    Info(String),
    /// Unparseable arguments; the text is clap's message.
    Invalid(String),
}

impl ExperimentConfig {
    pub fn parse_from<I, T>(argv: I) -> ParseOutcome
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        let cli = match Cli::try_parse_from(argv) {
            Ok(cli) => cli,
            Err(e) => {
                let text = e.render().to_string();
                return match e.kind() {
                    clap::error::ErrorKind::DisplayHelp
                    | clap::error::ErrorKind::DisplayVersion
                    | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                        ParseOutcome::Info(text)
                    }
                    clap::error::ErrorKind::InvalidSubcommand => ParseOutcome::Invalid(format!(
                        "{text}valid commands: {}\n",
                        COMMANDS.map(Command::name).join(", ")
                    )),
                    _ => ParseOutcome::Invalid(text),
                };
            }
        };
        let (command, f) = match cli.command {
            Sub::Run(f) => (Command::Run, f),
            Sub::Estimate(f) => (Command::Estimate, f),
            Sub::Escape(f) => (Command::Escape, f),
            Sub::Coupling(f) => (Command::Coupling, f),
            Sub::Scaling(f) => (Command::Scaling, f),
            Sub::Tailbound(f) => (Command::Tailbound, f),
        };
        let default_budget = match command {
            Command::Estimate => Budget::Theoretical,
            _ => Budget::Samples(DEFAULT_SAMPLE_BUDGET),
        };
        let default_seeds = match command {
            Command::Escape => 50,
            Command::Scaling => 10,
            _ => 1,
        };
        let format = f.format.unwrap_or_else(|| infer_format(f.out.as_deref()));
        ParseOutcome::Config(Box::new(ExperimentConfig {
            command,
            problem: f.problem,
            dim: f.dim,
            x0: f.x0,
            epsilon: f.epsilon,
            epsilons: f.epsilons,
            eps_hat: f.eps_hat,
            c: f.c,
            c_prime: f.c_prime,
            delta: f.delta,
            theta: f.theta,
            c_hat: f.c_hat,
            delta_f: f.delta_f,
            max_iterations: f.max_iterations,
            sample_budget: f.sample_budget.unwrap_or(default_budget),
            chi_form: f.chi_form,
            eps_hat_ceiling: f.eps_hat_ceiling,
            perturbation_gradient: f.perturbation_gradient,
            domain_exit: f.domain_exit,
            gradient: f.gradient,
            seed: f.seed,
            seeds: f.seeds.unwrap_or(default_seeds),
            trials: f.trials,
            a2: f.a2,
            mc: f.mc,
            mu: f.mu,
            steps: f.steps,
            out: f.out,
            format,
            thin: f.thin,
        }))
    }

    /// Arguments that parse back to `self`, program name included.
    pub fn to_args(&self) -> Vec<String> {
        let mut args = vec!["zoegd".to_string(), self.command.name().to_string()];
        let mut push = |flag: &str, value: String| {
            args.push(format!("--{flag}"));
            args.push(value);
        };
        if let Some(p) = &self.problem {
            push("problem", p.clone());
        }
        push("dim", self.dim.to_string());
        if let Some(x) = &self.x0 {
            push("x0", vector_arg(x));
        }
        if let Some(e) = self.epsilon {
            push("epsilon", format!("{e:?}"));
        }
        if let Some(e) = &self.epsilons {
            push("epsilons", vector_arg(e));
        }
        if let Some(e) = self.eps_hat {
            push("eps-hat", format!("{e:?}"));
        }
        push("c", format!("{:?}", self.c));
        push("c-prime", format!("{:?}", self.c_prime));
        push("delta", format!("{:?}", self.delta));
        push("theta", format!("{:?}", self.theta));
        push("c-hat", format!("{:?}", self.c_hat));
        if let Some(v) = self.delta_f {
            push("delta-f", format!("{v:?}"));
        }
        if let Some(n) = self.max_iterations {
            push("max-iterations", n.to_string());
        }
        push("sample-budget", budget_arg(self.sample_budget));
        push("chi-form", name_of(&self.chi_form));
        push("eps-hat-ceiling", name_of(&self.eps_hat_ceiling));
        push(
            "perturbation-gradient",
            name_of(&self.perturbation_gradient),
        );
        push("domain-exit", name_of(&self.domain_exit));
        push("gradient", name_of(&self.gradient));
        push("seed", self.seed.to_string());
        push("seeds", self.seeds.to_string());
        push("trials", self.trials.to_string());
        if let Some(a2) = self.a2 {
            push("a2", format!("{a2:?}"));
        }
        push("mc", self.mc.to_string());
        push("mu", format!("{:?}", self.mu));
        push("steps", self.steps.to_string());
        if let Some(out) = &self.out {
            push("out", out.display().to_string());
        }
        push("format", name_of(&self.format));
        push("thin", self.thin.to_string());
        args
    }

    pub fn require_problem(&self) -> Result<&str> {
        self.problem.as_deref().ok_or_else(|| missing("problem"))
    }

    pub fn require_epsilon(&self) -> Result<f64> {
        self.epsilon.ok_or_else(|| missing("epsilon"))
    }

    /// Command-independent checks.
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config {
                field: "thin",
                reason: "must be at least 1".into(),
            });
        }
        if self.sample_budget == Budget::Samples(0) {
            return Err(Error::Config {
                field: "sample_budget",
                reason: "must be at least 1 or `theoretical`".into(),
            });
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.dim {
                return Err(Error::Config {
                    field: "x0",
                    reason: format!("has {} entries, dim is {}", x0.len(), self.dim),
                });
            }
        }
        Ok(())
    }
}

fn missing(field: &'static str) -> Error {
    Error::Config {
        field,
        reason: "is required for this command".into(),
    }
}

fn infer_format(out: Option<&Path>) -> OutputFormat {
    match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => OutputFormat::Csv,
        _ => OutputFormat::Json,
    }
}
