//! One function per subcommand. Each prints a short summary to stdout and
//! writes its report when `--out` is given.

use serde::{Deserialize, Serialize};
use zoegd::diagnostics::{
    coupling_experiment, escape_experiment, run_problem, scaling_study, CouplingSetup, ScalingRow,
};
use zoegd::egd::{derive_schedule, EgdConfig, EgdSchedule, IterationRecord, Termination};
use zoegd::estimator::{accuracy_trials, estimator_schedule, gaussian_tail_bound};
use zoegd::linalg;
use zoegd::testbed::{
    classify_point, make_benchmark, BenchmarkProblem, Stationarity, StationaryClass,
};
use zoegd::{Error, SeededRng};

use crate::config::ExperimentConfig;
use crate::output::{thin, write_results, EffectiveConfig, Record, Report};
use crate::CliError;

type CmdResult = Result<(), CliError>;

fn problem(cfg: &ExperimentConfig) -> Result<BenchmarkProblem, Error> {
    make_benchmark(cfg.require_problem()?, cfg.dim)
}

/// `--x0`, else the first known saddle, else the origin.
fn start_point(cfg: &ExperimentConfig, p: &BenchmarkProblem) -> Vec<f64> {
    cfg.x0.clone().unwrap_or_else(|| {
        p.known_saddles()
            .into_iter()
            .next()
            .unwrap_or_else(|| vec![0.0; p.dim()])
    })
}

fn default_delta_f(p: &BenchmarkProblem, x0: &[f64]) -> f64 {
    p.spec
        .f_star_hint
        .map(|f_star| (p.value(x0) - f_star).max(1.0))
        .unwrap_or(1.0)
}

fn egd_config(cfg: &ExperimentConfig, epsilon: f64, delta_f: f64) -> Result<EgdConfig, Error> {
    let mut c = EgdConfig::new(epsilon, cfg.delta_f.unwrap_or(delta_f));
    if let Some(e) = cfg.eps_hat {
        c.eps_hat = e;
    }
    c.c = cfg.c;
    c.c_prime = cfg.c_prime;
    c.delta = cfg.delta;
    c.theta = cfg.theta;
    c.c_hat = cfg.c_hat;
    c.max_iterations = cfg.max_iterations;
    c.sample_budget_override = cfg.sample_budget.override_value();
    c.chi_form = cfg.chi_form;
    c.eps_hat_ceiling = cfg.eps_hat_ceiling;
    c.perturbation_gradient = cfg.perturbation_gradient;
    c.domain_exit = cfg.domain_exit;
    c.validate()?;
    Ok(c)
}

fn print_eps_hat(s: &EgdSchedule) {
    if s.eps_hat_adjusted {
        println!(
            "eps_hat: {:e} (requested {:e}, SHRUNK by the accuracy ceiling)",
            s.eps_hat, s.eps_hat_requested
        );
    } else {
        println!("eps_hat: {:e} (as requested)", s.eps_hat);
    }
    println!(
        "schedule: chi={:.6} eta={:e} g_thres={:e} f_thres={:e} t_thres={} r={:e}",
        s.chi, s.eta, s.g_thres, s.f_thres, s.t_thres, s.r
    );
    println!(
        "estimator: v={:e} sigma2={:e} m={}",
        s.estimator.v, s.estimator.sigma2, s.estimator.m
    );
}

fn emit<R: Record, S: Serialize>(cfg: &ExperimentConfig, report: Report<R, S>) -> CmdResult {
    if let Some(path) = &cfg.out {
        write_results(&report, cfg.format, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn effective(cfg: &ExperimentConfig, schedule: Option<&EgdSchedule>) -> EffectiveConfig {
    EffectiveConfig {
        experiment: cfg.clone(),
        schedule: schedule.cloned(),
        estimator: schedule.map(|s| s.estimator.clone()),
    }
}

fn seed_list(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.seeds).map(|i| cfg.seed.wrapping_add(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub f: f64,
    pub g_hat_norm: f64,
    pub perturbed: bool,
    pub f_perturbed: Option<f64>,
    pub queries: u64,
    pub in_domain: bool,
}

impl Record for TraceRow {
    fn header() -> &'static [&'static str] {
        &[
            "t",
            "f",
            "g_hat_norm",
            "perturbed",
            "f_perturbed",
            "queries",
            "in_domain",
        ]
    }
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            t: r.t,
            f: r.f_value,
            g_hat_norm: r.g_hat_norm,
            perturbed: r.perturbed,
            f_perturbed: r.f_perturbed,
            queries: r.queries,
            in_domain: r.in_domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub iterations: u64,
    pub returned_from: u64,
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub classification: StationaryClass,
    pub total_queries: u64,
    pub counted_queries: u64,
    pub perturbation_events: Vec<u64>,
    pub domain_exits: Vec<u64>,
    pub eps_hat_requested: f64,
    pub eps_hat_effective: f64,
    pub eps_hat_adjusted: bool,
}

pub fn run(cfg: &ExperimentConfig) -> CmdResult {
    let epsilon = cfg.require_epsilon()?;
    let p = problem(cfg)?;
    let x0 = start_point(cfg, &p);
    let config = egd_config(cfg, epsilon, default_delta_f(&p, &x0))?;
    let (result, counted) = run_problem(&p, &x0, &config, cfg.seed, cfg.gradient)?;
    let schedule = &result.schedule;
    print_eps_hat(schedule);
    let classification = classify_point(&p, &result.x_final, epsilon, p.spec.rho)?;
    println!(
        "termination: {:?} after {} iterations; f_final = {:e}; class = {:?}",
        result.termination, result.iterations, result.f_final, classification.class
    );
    println!(
        "queries: {} (oracle counted {}); perturbations: {}",
        result.total_queries,
        counted,
        result.perturbation_events.len()
    );
    let rows: Vec<TraceRow> = result.trace.iter().map(TraceRow::from).collect();
    let summary = RunSummary {
        termination: result.termination,
        iterations: result.iterations,
        returned_from: result.returned_from,
        x_final: result.x_final.clone(),
        f_final: result.f_final,
        classification,
        total_queries: result.total_queries,
        counted_queries: counted,
        perturbation_events: result.perturbation_events.clone(),
        domain_exits: result.domain_exits.clone(),
        eps_hat_requested: schedule.eps_hat_requested,
        eps_hat_effective: schedule.eps_hat,
        eps_hat_adjusted: schedule.eps_hat_adjusted,
    };
    let records = thin(&rows, cfg.thin, |r| r.t);
    emit(
        cfg,
        Report::new(effective(cfg, Some(schedule)), records, summary),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub trial: u64,
    pub error: f64,
    pub within: bool,
}

impl Record for EstimateRow {
    fn header() -> &'static [&'static str] {
        &["trial", "error", "within"]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub point: Vec<f64>,
    pub eps_hat: f64,
    pub samples_per_estimate: u64,
    pub trials: usize,
    pub within: usize,
    pub fraction_within: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub queries: u64,
}

pub fn estimate(cfg: &ExperimentConfig) -> CmdResult {
    let p = problem(cfg)?;
    let eps_hat = cfg.eps_hat.ok_or(Error::Config {
        field: "eps_hat",
        reason: "is required for this command".into(),
    })?;
    if cfg.trials == 0 {
        return Err(Error::Config {
            field: "trials",
            reason: "must be at least 1".into(),
        }
        .into());
    }
    let x = start_point(cfg, &p);
    let schedule = estimator_schedule(&p.spec, eps_hat, cfg.c_prime)?;
    let budget = cfg.sample_budget.override_value();
    let samples = budget.unwrap_or(schedule.m);
    if budget.is_none() && schedule.m_saturated() {
        return Err(Error::Config {
            field: "sample_budget",
            reason: "the theoretical sample count overflows; give a count".into(),
        }
        .into());
    }
    let mut rng = SeededRng::new(cfg.seed);
    let errors = accuracy_trials(&p, &x, &schedule, cfg.trials, &mut rng, budget)?;
    let rows: Vec<EstimateRow> = errors
        .iter()
        .enumerate()
        .map(|(i, &e)| EstimateRow {
            trial: i as u64,
            error: e,
            within: e <= eps_hat,
        })
        .collect();
    let within = rows.iter().filter(|r| r.within).count();
    let summary = EstimateSummary {
        point: x,
        eps_hat,
        samples_per_estimate: samples,
        trials: cfg.trials,
        within,
        fraction_within: within as f64 / cfg.trials as f64,
        mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
        max_error: errors.iter().fold(0.0, |a: f64, &b| a.max(b)),
        queries: 1 + samples.saturating_mul(cfg.trials as u64),
    };
    println!(
        "estimator: v={:e} sigma2={:e} m={} (using {samples})",
        schedule.v, schedule.sigma2, schedule.m
    );
    println!(
        "within eps_hat = {eps_hat}: {}/{} = {:.4}; mean error {:e}",
        within, cfg.trials, summary.fraction_within, summary.mean_error
    );
    let config = EffectiveConfig {
        experiment: cfg.clone(),
        schedule: None,
        estimator: Some(schedule),
    };
    emit(cfg, Report::new(config, rows, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRow {
    pub seed: u64,
    pub termination: Termination,
    pub iterations: u64,
    pub f_final: f64,
    pub class: Stationarity,
    pub grad_norm: f64,
    pub min_eig: f64,
    pub escaped: bool,
    pub escape_iteration: Option<u64>,
    pub total_queries: u64,
    pub counted_queries: u64,
}

impl Record for EscapeRow {
    fn header() -> &'static [&'static str] {
        &[
            "seed",
            "termination",
            "iterations",
            "f_final",
            "class",
            "grad_norm",
            "min_eig",
            "escaped",
            "escape_iteration",
            "total_queries",
            "counted_queries",
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeSummary {
    pub seeds: usize,
    pub escaped: usize,
    pub escape_fraction: Option<f64>,
    pub second_order: usize,
    pub mean_iterations_to_escape: Option<f64>,
    pub f_start: f64,
    pub f_thres: f64,
    pub delta_hat: f64,
}

pub fn escape(cfg: &ExperimentConfig) -> CmdResult {
    let epsilon = cfg.require_epsilon()?;
    let p = problem(cfg)?;
    let start = p
        .known_saddles()
        .into_iter()
        .chain(p.known_minima())
        .next()
        .ok_or_else(|| {
            Error::Unsupported(format!("`{}` has no known saddle or minimum", p.name))
        })?;
    let config = egd_config(cfg, epsilon, default_delta_f(&p, &start))?;
    let schedule = derive_schedule(&config, &p.spec)?;
    print_eps_hat(&schedule);
    let stats = escape_experiment(&p, &config, &seed_list(cfg), cfg.gradient)?;
    let rows: Vec<EscapeRow> = stats
        .runs
        .iter()
        .map(|r| EscapeRow {
            seed: r.seed,
            termination: r.termination,
            iterations: r.iterations,
            f_final: r.f_final,
            class: r.classification.class,
            grad_norm: r.classification.grad_norm,
            min_eig: r.classification.min_eig,
            escaped: r.escaped,
            escape_iteration: r.escape_iteration,
            total_queries: r.total_queries,
            counted_queries: r.counted_queries,
        })
        .collect();
    let summary = EscapeSummary {
        seeds: stats.seeds,
        escaped: stats.escaped,
        escape_fraction: (stats.seeds > 0).then(|| stats.escaped as f64 / stats.seeds as f64),
        second_order: rows
            .iter()
            .filter(|r| r.class == Stationarity::SecondOrder)
            .count(),
        mean_iterations_to_escape: stats.mean_iterations_to_escape,
        f_start: stats.f_start,
        f_thres: stats.f_thres,
        delta_hat: stats.delta_hat,
    };
    println!(
        "escaped {}/{} (second-order: {}); mean iterations to escape: {}",
        summary.escaped,
        summary.seeds,
        summary.second_order,
        summary
            .mean_iterations_to_escape
            .map_or("undefined".to_string(), |m| format!("{m:.1}"))
    );
    println!(
        "delta_hat = {:e} (failure-probability bound; vacuous when >= 1)",
        stats.delta_hat
    );
    emit(
        cfg,
        Report::new(effective(cfg, Some(&schedule)), rows, summary),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub t: u64,
    pub psi: f64,
    pub growth_ratio: Option<f64>,
    pub max_offset: f64,
}

impl Record for CouplingRow {
    fn header() -> &'static [&'static str] {
        &["t", "psi", "growth_ratio", "max_offset"]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub setup: CouplingSetup,
    pub saddle: Vec<f64>,
    pub lambda_min: f64,
    pub e1: Vec<f64>,
    pub gamma_eta: f64,
    /// `1 + gamma eta / 2`.
    pub ratio_floor: f64,
    pub slow_steps: Vec<usize>,
    /// `100 P c_hat`.
    pub window: f64,
    /// Growth steps completed before either iterate left the window.
    pub steps_in_window: usize,
    pub slow_steps_in_window: usize,
}

pub fn coupling(cfg: &ExperimentConfig) -> CmdResult {
    let epsilon = cfg.require_epsilon()?;
    let p = problem(cfg)?;
    let saddle = p
        .known_saddles()
        .into_iter()
        .next()
        .ok_or_else(|| Error::Unsupported(format!("`{}` has no known saddle", p.name)))?;
    let config = egd_config(cfg, epsilon, default_delta_f(&p, &saddle))?;
    let schedule = derive_schedule(&config, &p.spec)?;
    let setup = CouplingSetup {
        mu: cfg.mu,
        r: schedule.r,
        eta: schedule.eta,
        gamma: schedule.gamma,
        steps: cfg.steps,
    };
    let mut rng = SeededRng::new(cfg.seed);
    let series = coupling_experiment(&p, &saddle, &setup, &mut rng)?;
    let window = 100.0 * schedule.script_p * config.c_hat;
    let floor = 1.0 + series.gamma_eta / 2.0;
    let steps_in_window = series.max_offsets[1..]
        .iter()
        .take_while(|&&o| o <= window)
        .count();
    let slow_steps = series.slow_steps();
    let slow_steps_in_window = slow_steps.iter().filter(|&&s| s < steps_in_window).count();
    let rows = series
        .psi
        .iter()
        .enumerate()
        .map(|(t, &psi)| CouplingRow {
            t: t as u64,
            psi,
            growth_ratio: t.checked_sub(1).map(|i| series.growth_ratios[i]),
            max_offset: series.max_offsets[t],
        })
        .collect::<Vec<_>>();
    println!(
        "lambda_min = {}; gamma*eta = {:e}; ratio floor = {floor}",
        series.lambda_min, series.gamma_eta
    );
    println!(
        "{} of {} steps inside the window {:e}; slow steps inside: {}",
        steps_in_window, cfg.steps, window, slow_steps_in_window
    );
    let summary = CouplingSummary {
        setup,
        saddle,
        lambda_min: series.lambda_min,
        e1: series.e1.clone(),
        gamma_eta: series.gamma_eta,
        ratio_floor: floor,
        slow_steps,
        window,
        steps_in_window,
        slow_steps_in_window,
    };
    let records = thin(&rows, cfg.thin, |r| r.t);
    emit(
        cfg,
        Report::new(effective(cfg, Some(&schedule)), records, summary),
    )
}

impl Record for ScalingRow {
    fn header() -> &'static [&'static str] {
        &[
            "epsilon",
            "median_iterations",
            "median_queries",
            "terminated",
            "runs",
            "iteration_bound",
            "predicted_queries",
            "log4_factor",
            "normalized_iterations",
            "queries_consistent",
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub ratios: Vec<f64>,
    pub max_ratio: Option<f64>,
    pub schedules: Vec<EgdSchedule>,
}

pub fn scaling(cfg: &ExperimentConfig) -> CmdResult {
    let epsilons = cfg.epsilons.clone().ok_or(Error::Config {
        field: "epsilons",
        reason: "is required for this command".into(),
    })?;
    let first = *epsilons.first().ok_or(Error::Config {
        field: "epsilons",
        reason: "needs at least one value".into(),
    })?;
    let p = problem(cfg)?;
    let x0 = start_point(cfg, &p);
    let template = egd_config(cfg, first, default_delta_f(&p, &x0))?;
    let table = scaling_study(&p, &x0, &epsilons, &template, &seed_list(cfg), cfg.gradient)?;
    let schedules = epsilons
        .iter()
        .map(|&e| {
            derive_schedule(
                &EgdConfig {
                    epsilon: e,
                    ..template.clone()
                },
                &p.spec,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(s) = schedules.first() {
        print_eps_hat(s);
    }
    for row in &table.rows {
        println!(
            "eps = {}: median iterations {}, median queries {}, terminated {}/{}",
            row.epsilon, row.median_iterations, row.median_queries, row.terminated, row.runs
        );
    }
    println!("ratios: {:?}", table.ratios);
    let summary = ScalingSummary {
        max_ratio: table.ratios.iter().copied().reduce(f64::max),
        ratios: table.ratios.clone(),
        schedules,
    };
    let config = EffectiveConfig {
        experiment: cfg.clone(),
        schedule: None,
        estimator: None,
    };
    emit(cfg, Report::new(config, table.rows, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub d: usize,
    pub a2: f64,
    pub bound: f64,
    pub empirical: f64,
    pub draws: u64,
    pub exceedances: u64,
    pub std_error: f64,
}

impl Record for TailRow {
    fn header() -> &'static [&'static str] {
        &[
            "d",
            "a2",
            "bound",
            "empirical",
            "draws",
            "exceedances",
            "std_error",
        ]
    }
}

/// Fraction of `draws` standard Gaussian vectors with `|u|^2 > a2`.
pub fn tail_frequency(d: usize, a2: f64, draws: u64, seed: u64) -> (u64, f64) {
    let mut rng = SeededRng::new(seed);
    let mut u = vec![0.0; d];
    let mut hits = 0u64;
    for _ in 0..draws {
        rng.fill_standard_gaussian(&mut u);
        if linalg::norm_sq(&u) > a2 {
            hits += 1;
        }
    }
    (
        hits,
        if draws == 0 {
            0.0
        } else {
            hits as f64 / draws as f64
        },
    )
}

pub fn tailbound(cfg: &ExperimentConfig) -> CmdResult {
    let a2 = cfg.a2.ok_or(Error::Config {
        field: "a2",
        reason: "is required for this command".into(),
    })?;
    if cfg.dim == 0 {
        return Err(Error::Config {
            field: "dim",
            reason: "must be at least 1".into(),
        }
        .into());
    }
    if cfg.mc == 0 {
        return Err(Error::Config {
            field: "mc",
            reason: "must be at least 1".into(),
        }
        .into());
    }
    let bound = gaussian_tail_bound(cfg.dim, a2).map_err(|e| match e {
        Error::InvalidInput(reason) => Error::Config {
            field: "a2",
            reason,
        },
        other => other,
    })?;
    let (hits, empirical) = tail_frequency(cfg.dim, a2, cfg.mc, cfg.seed);
    let std_error = (empirical * (1.0 - empirical) / cfg.mc as f64).sqrt();
    println!("analytic bound: {bound:.5}");
    println!(
        "empirical: {empirical:.5} ({hits}/{} draws, standard error {std_error:.2e})",
        cfg.mc
    );
    let row = TailRow {
        d: cfg.dim,
        a2,
        bound,
        empirical,
        draws: cfg.mc,
        exceedances: hits,
        std_error,
    };
    let summary = row.clone();
    let config = EffectiveConfig {
        experiment: cfg.clone(),
        schedule: None,
        estimator: None,
    };
    emit(cfg, Report::new(config, vec![row], summary))
}
