//! Statistical checks of the estimator and optimizer guarantees.
//!
//! Exact-gradient mode substitutes the analytic gradient for the estimator so
//! that the dynamics (descent, escape, coupling) can be checked separately
//! from estimation accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::egd::{self, EgdConfig, EgdSchedule, RunResult, Termination};
use crate::testbed::{classify_point, BenchmarkProblem, Stationarity, StationaryClass};
use crate::{linalg, Error, Result, SeededRng};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Estimated,
    Exact,
}

/// Runs the optimizer on `problem` from `x0` with a fresh oracle.
///
/// Returns the result and the oracle's own query count.
pub fn run_problem(
    problem: &BenchmarkProblem,
    x0: &[f64],
    config: &EgdConfig,
    seed: u64,
    mode: GradientMode,
) -> Result<(RunResult, u64)> {
    let oracle = problem.oracle();
    let mut rng = SeededRng::new(seed);
    let result = match mode {
        GradientMode::Estimated => egd::egd_run(&oracle, &problem.spec, x0, config, &mut rng)?,
        GradientMode::Exact => {
            if !problem.has_derivatives() {
                return Err(Error::Unsupported(format!(
                    "exact-gradient mode needs analytic derivatives; `{}` has none",
                    problem.name
                )));
            }
            let grad = |x: &[f64]| problem.gradient(x).expect("derivatives checked above");
            egd::egd_run_exact(&oracle, &problem.spec, x0, config, &mut rng, &grad)?
        }
    };
    Ok((result, oracle.query_count()))
}

/// Iterations whose step violates `f(x_{t+1}) <= f(x_t) - (eta/4) |g_hat|^2`,
/// among those with `|g_hat| >= g_thres` and an estimate within
/// `min(eps_hat, g_thres/4)` of the analytic gradient.
///
/// Only iterations with a point and gradient snapshot are checked.
pub fn descent_check(
    trace: &RunResult,
    problem: &BenchmarkProblem,
    schedule: &EgdSchedule,
) -> Result<Vec<u64>> {
    Ok(descent_check_counted(trace, problem, schedule)?.1)
}

/// As [`descent_check`], also returning how many iterations passed the
/// filters and were checked.
pub fn descent_check_counted(
    trace: &RunResult,
    problem: &BenchmarkProblem,
    schedule: &EgdSchedule,
) -> Result<(usize, Vec<u64>)> {
    let records = &trace.trace;
    if !records.iter().any(|r| r.x.is_some()) {
        return Err(Error::InsufficientTrace);
    }
    let tolerance = schedule.eps_hat.min(schedule.g_thres / 4.0);
    let mut violations = Vec::new();
    let mut checked = 0;
    for pair in records.windows(2) {
        let (rec, next) = (&pair[0], &pair[1]);
        let (Some(x), Some(g)) = (&rec.x, &rec.g_hat) else {
            continue;
        };
        debug_assert_eq!(next.t, rec.t + 1);
        let origin = rec.x_perturbed.as_ref().unwrap_or(x);
        let f_origin = match (rec.perturbed, rec.f_perturbed) {
            (false, _) => rec.f_value,
            (true, Some(f)) => f,
            (true, None) => problem.value(origin),
        };
        let g_norm = linalg::norm(g);
        if g_norm < schedule.g_thres {
            continue;
        }
        let truth = problem.gradient(origin)?;
        if linalg::distance(g, &truth) > tolerance {
            continue;
        }
        checked += 1;
        let required = f_origin - schedule.eta / 4.0 * g_norm * g_norm;
        let slack = 4.0 * f64::EPSILON * f_origin.abs().max(next.f_value.abs());
        if next.f_value > required + slack {
            violations.push(rec.t);
        }
    }
    Ok((checked, violations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRun {
    pub seed: u64,
    pub termination: Termination,
    pub iterations: u64,
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub classification: StationaryClass,
    pub escaped: bool,
    /// First iteration at which `f` was at least `f_thres` below the start.
    pub escape_iteration: Option<u64>,
    pub total_queries: u64,
    pub counted_queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeStats {
    pub seeds: usize,
    pub escaped: usize,
    pub mean_iterations_to_escape: Option<f64>,
    pub f_start: f64,
    pub f_thres: f64,
    pub delta_hat: f64,
    pub runs: Vec<EscapeRun>,
}

/// Runs the optimizer from the problem's first known saddle (its first known
/// minimum if it has no saddle) once per seed.
///
/// A run counts as escaped when its returned point is second-order
/// stationary or its value is at least `f_thres` below the start.
pub fn escape_experiment(
    problem: &BenchmarkProblem,
    config: &EgdConfig,
    seeds: &[u64],
    mode: GradientMode,
) -> Result<EscapeStats> {
    let x0 = problem
        .known_saddles()
        .into_iter()
        .next()
        .or_else(|| problem.known_minima().into_iter().next())
        .ok_or_else(|| {
            Error::Unsupported(format!("`{}` has no known saddle or minimum", problem.name))
        })?;
    let schedule = egd::derive_schedule(config, &problem.spec)?;
    let f_start = problem.value(&x0);
    let target = f_start - schedule.f_thres;

    let mut runs = seeds
        .par_iter()
        .map(|&seed| {
            let (result, counted) = run_problem(problem, &x0, config, seed, mode)?;
            let classification =
                classify_point(problem, &result.x_final, config.epsilon, problem.spec.rho)?;
            let escape_iteration = result
                .trace
                .iter()
                .find(|r| r.f_value <= target || r.f_perturbed.is_some_and(|f| f <= target))
                .map(|r| r.t);
            let escaped =
                classification.class == Stationarity::SecondOrder || result.f_final <= target;
            Ok(EscapeRun {
                seed,
                termination: result.termination,
                iterations: result.iterations,
                x_final: result.x_final,
                f_final: result.f_final,
                classification,
                escaped,
                escape_iteration,
                total_queries: result.total_queries,
                counted_queries: counted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.seed);

    let escaped: Vec<&EscapeRun> = runs.iter().filter(|r| r.escaped).collect();
    let mean_iterations_to_escape = if escaped.is_empty() {
        None
    } else {
        let total: f64 = escaped
            .iter()
            .map(|r| r.escape_iteration.unwrap_or(r.iterations) as f64)
            .sum();
        Some(total / escaped.len() as f64)
    };
    Ok(EscapeStats {
        seeds: seeds.len(),
        escaped: escaped.len(),
        mean_iterations_to_escape,
        f_start,
        f_thres: schedule.f_thres,
        delta_hat: schedule.delta_hat,
        runs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSetup {
    /// Offset of the second sequence along `e1`, as a fraction of `r`.
    pub mu: f64,
    pub r: f64,
    pub eta: f64,
    /// `sqrt(rho eps)`; sets the reference growth rate `1 + gamma eta / 2`.
    pub gamma: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSeries {
    /// `|<w_t - u_t, e1>|`, `steps + 1` entries.
    pub psi: Vec<f64>,
    pub gamma_eta: f64,
    pub growth_ratios: Vec<f64>,
    /// `max(|u_t - saddle|, |w_t - saddle|)`.
    pub max_offsets: Vec<f64>,
    pub lambda_min: f64,
    pub e1: Vec<f64>,
}

impl CouplingSeries {
    /// Steps whose growth ratio falls below `1 + gamma eta / 2`.
    pub fn slow_steps(&self) -> Vec<usize> {
        let floor = 1.0 + self.gamma_eta / 2.0;
        self.growth_ratios
            .iter()
            .enumerate()
            .filter(|(_, &g)| g < floor)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Two exact-gradient descent sequences from `u0 ~ U(B(saddle, r))` and
/// `w0 = u0 + mu r e1`, with `e1` the most negative Hessian eigendirection at
/// the saddle.
pub fn coupling_experiment(
    problem: &BenchmarkProblem,
    saddle: &[f64],
    setup: &CouplingSetup,
    rng: &mut SeededRng,
) -> Result<CouplingSeries> {
    let CouplingSetup {
        mu,
        r,
        eta,
        gamma,
        steps,
    } = *setup;
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "mu must be in (0, 1], got {mu}"
        )));
    }
    if !(r > 0.0 && r.is_finite()) || !(eta > 0.0 && eta.is_finite()) || !(gamma >= 0.0) {
        return Err(Error::InvalidInput(
            "r and eta must be positive, gamma non-negative".into(),
        ));
    }
    if saddle.len() != problem.dim() {
        return Err(Error::InvalidInput(format!(
            "saddle has length {}, problem dimension is {}",
            saddle.len(),
            problem.dim()
        )));
    }
    let (lambda_min, e1) = problem.min_eigen(saddle)?;
    let mut u = linalg::add(saddle, &rng.sample_uniform_ball(problem.dim(), r)?);
    let mut w = linalg::axpy(&u, mu * r, &e1);

    let separation = |u: &[f64], w: &[f64]| linalg::dot(&linalg::sub(w, u), &e1).abs();
    let offset =
        |u: &[f64], w: &[f64]| linalg::distance(u, saddle).max(linalg::distance(w, saddle));
    let mut psi = vec![separation(&u, &w)];
    let mut max_offsets = vec![offset(&u, &w)];
    for _ in 0..steps {
        u = egd::descent_step(&u, &problem.gradient(&u)?, eta);
        w = egd::descent_step(&w, &problem.gradient(&w)?, eta);
        psi.push(separation(&u, &w));
        max_offsets.push(offset(&u, &w));
    }
    let growth_ratios = psi.windows(2).map(|p| p[1] / p[0]).collect();
    Ok(CouplingSeries {
        psi,
        gamma_eta: gamma * eta,
        growth_ratios,
        max_offsets,
        lambda_min,
        e1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub median_iterations: f64,
    pub median_queries: f64,
    /// Runs that stopped on the terminal condition.
    pub terminated: usize,
    pub runs: usize,
    /// `chi^4/c^3 * l df / eps^2`.
    pub iteration_bound: f64,
    /// Query count the bound implies at the theoretical sample size.
    pub predicted_queries: f64,
    /// `ln^4(d l df / (eps^2 delta))`.
    pub log4_factor: f64,
    /// `median_iterations * eps^2 / log4_factor`.
    pub normalized_iterations: f64,
    /// Every run's reported query total matched its oracle's counter.
    pub queries_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// `median_iterations[i+1] / median_iterations[i]`.
    pub ratios: Vec<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median iterations and queries to termination for each `epsilon`.
///
/// `epsilons` must be strictly decreasing with entries in (0, 1); every other
/// setting comes from `template`.
pub fn scaling_study(
    problem: &BenchmarkProblem,
    x0: &[f64],
    epsilons: &[f64],
    template: &EgdConfig,
    seeds: &[u64],
    mode: GradientMode,
) -> Result<ScalingTable> {
    if epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidInput(
            "every epsilon must lie in (0, 1)".into(),
        ));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "epsilons must be strictly decreasing".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidInput("at least one seed is needed".into()));
    }
    let spec = &problem.spec;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let mut config = template.clone();
        config.epsilon = epsilon;
        let schedule = egd::derive_schedule(&config, spec)?;
        let results = seeds
            .par_iter()
            .map(|&seed| run_problem(problem, x0, &config, seed, mode))
            .collect::<Result<Vec<_>>>()?;
        let mut iterations: Vec<f64> = results.iter().map(|(r, _)| r.iterations as f64).collect();
        let mut queries: Vec<f64> = results
            .iter()
            .map(|(r, _)| r.total_queries as f64)
            .collect();
        let terminated = results
            .iter()
            .filter(|(r, _)| r.termination == Termination::TerminalConditionMet)
            .count();
        let queries_consistent = results
            .iter()
            .all(|(r, counted)| r.total_queries == *counted);
        let median_iterations = median(&mut iterations).expect("seeds is non-empty");
        let median_queries = median(&mut queries).expect("seeds is non-empty");
        let log4_factor = (spec.d as f64 * spec.l * config.delta_f
            / (epsilon * epsilon * config.delta))
            .ln()
            .powi(4);
        rows.push(ScalingRow {
            epsilon,
            median_iterations,
            median_queries,
            terminated,
            runs: seeds.len(),
            iteration_bound: schedule.iteration_bound,
            predicted_queries: schedule.predicted_queries,
            log4_factor,
            normalized_iterations: median_iterations * epsilon * epsilon / log4_factor,
            queries_consistent,
        });
    }
    let ratios = rows
        .windows(2)
        .map(|w| w[1].median_iterations / w[0].median_iterations)
        .collect();
    Ok(ScalingTable { rows, ratios })
}
