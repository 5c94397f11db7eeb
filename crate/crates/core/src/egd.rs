//! Perturbed gradient descent on estimated gradients.
//!
//! Each iteration estimates the gradient at `x_t`. When the estimate is below
//! `g_thres` and no perturbation happened in the last `t_thres` iterations,
//! the iterate is kicked by a uniform draw from the ball of radius `r`.
//! Exactly `t_thres` iterations after a kick, if `f` has not dropped by more
//! than `f_thres` below its value before the kick, the pre-kick point is
//! returned. Otherwise the iterate takes the step `x - eta * g_hat`.

use serde::{Deserialize, Serialize};

use crate::estimator::{self, EstimatorSchedule, DEFAULT_C_PRIME};
use crate::{linalg, Error, ProblemSpec, Result, SeededRng, ZeroOrderOracle};

pub const DEFAULT_C: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_THETA: f64 = 4.0;
/// Constant of the escape-region radius; the analysis admits any value above 3.
pub const DEFAULT_C_HAT: f64 = 4.0;

/// Which logarithmic expression sets `chi`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiForm {
    /// `max{(1 + theta/4) ln(2 d l df / (c eps^2 delta)), chi1}`.
    #[default]
    Standard,
    /// As `Standard` without the factor 2 inside the logarithm.
    WithoutFactorTwo,
    /// `max{(1 + theta) ln(2 d l df / (c eps^2 delta)), chi1}` with `chi1`
    /// solved for the `1 + theta` exponent.
    FullTheta,
}

/// Which upper bounds are imposed on the estimator accuracy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsHatCeiling {
    /// Both the descent ceiling `sqrt(c) eps / (4 chi^2)` and the escape
    /// ceiling. The escape ceiling is typically far below `1e-15`, which puts
    /// the smoothing radius under double-precision resolution.
    #[default]
    Full,
    /// Only the descent ceiling.
    Descent,
    /// Use the requested value as is.
    Off,
}

/// Gradient used for the step taken right after a perturbation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationGradient {
    /// Re-estimate at the perturbed point.
    #[default]
    Fresh,
    /// Reuse the estimate taken before the perturbation.
    Stale,
}

/// What to do when an iterate leaves the problem's domain of interest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainExit {
    #[default]
    Record,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgdConfig {
    pub epsilon: f64,
    pub eps_hat: f64,
    pub c: f64,
    pub c_prime: f64,
    pub delta: f64,
    pub theta: f64,
    pub delta_f: f64,
    pub c_hat: f64,
    pub max_iterations: Option<u64>,
    pub sample_budget_override: Option<u64>,
    pub chi_form: ChiForm,
    pub eps_hat_ceiling: EpsHatCeiling,
    pub perturbation_gradient: PerturbationGradient,
    pub domain_exit: DomainExit,
    /// Keep point and gradient snapshots every this many iterations; 0 keeps
    /// none.
    pub snapshot_every: u64,
}

impl EgdConfig {
    pub fn new(epsilon: f64, delta_f: f64) -> Self {
        Self {
            epsilon,
            eps_hat: epsilon.min(0.5),
            c: DEFAULT_C,
            c_prime: DEFAULT_C_PRIME,
            delta: DEFAULT_DELTA,
            theta: DEFAULT_THETA,
            delta_f,
            c_hat: DEFAULT_C_HAT,
            max_iterations: None,
            sample_budget_override: None,
            chi_form: ChiForm::default(),
            eps_hat_ceiling: EpsHatCeiling::default(),
            perturbation_gradient: PerturbationGradient::default(),
            domain_exit: DomainExit::default(),
            snapshot_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check(field: &'static str, value: f64, ok: bool, what: &str) -> Result<()> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(Error::Config {
                    field,
                    reason: format!("must be {what}, got {value}"),
                })
            }
        }
        check("epsilon", self.epsilon, self.epsilon > 0.0, "positive")?;
        check(
            "eps_hat",
            self.eps_hat,
            self.eps_hat > 0.0 && self.eps_hat < 1.0,
            "in (0, 1)",
        )?;
        check("c", self.c, self.c > 0.0 && self.c < 0.25, "in (0, 1/4)")?;
        check(
            "c_prime",
            self.c_prime,
            self.c_prime >= DEFAULT_C_PRIME,
            ">= 3",
        )?;
        check(
            "delta",
            self.delta,
            self.delta > 0.0 && self.delta < 1.0,
            "in (0, 1)",
        )?;
        check("theta", self.theta, self.theta > 0.0, "positive")?;
        check("delta_f", self.delta_f, self.delta_f > 0.0, "positive")?;
        check("c_hat", self.c_hat, self.c_hat > 3.0, "> 3")?;
        if self.max_iterations == Some(0) {
            return Err(Error::Config {
                field: "max_iterations",
                reason: "must be at least 1".into(),
            });
        }
        if self.sample_budget_override == Some(0) {
            return Err(Error::Config {
                field: "sample_budget_override",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgdSchedule {
    pub chi: f64,
    pub chi1: f64,
    pub eta: f64,
    pub g_thres: f64,
    pub f_thres: f64,
    pub t_thres: u64,
    pub r: f64,
    /// `sqrt(rho eps)`.
    pub gamma: f64,
    /// `chi / (eta gamma)`.
    pub script_t: f64,
    /// `sqrt(c)/chi * sqrt(eps/rho)`.
    pub script_p: f64,
    /// `d l / sqrt(rho eps) * exp(-chi)`; the escape guarantee is vacuous
    /// when this is not below 1.
    pub delta_hat: f64,
    pub eps_hat_requested: f64,
    pub eps_hat: f64,
    pub eps_hat_adjusted: bool,
    pub eps_hat_ceiling_descent: f64,
    pub eps_hat_ceiling_escape: f64,
    pub estimator: EstimatorSchedule,
    /// `chi^4 / c^3 * l df / eps^2`.
    pub iteration_bound: f64,
    /// `iteration_bound * (m + 1)` at the theoretical sample count.
    pub predicted_queries: f64,
    pub max_iterations: u64,
}

/// Threshold past which `chi^3 e^{-chi} <= e^{-chi/(1 + theta/4)}` holds for
/// every larger `chi`.
///
/// In log form the condition is `3 ln chi <= chi (1 - 1/(1 + theta/4))`. The
/// left side minus the right is negative just above 1, positive around its
/// maximum at `3/a` and negative again beyond the larger root, which is what
/// this returns; it is found by bisection to `1e-9`.
pub fn solve_chi1(theta: f64) -> f64 {
    solve_chi1_with_divisor(1.0 + theta / 4.0)
}

fn solve_chi1_with_divisor(k: f64) -> f64 {
    let a = 1.0 - 1.0 / k;
    let g = |chi: f64| 3.0 * chi.ln() - a * chi;
    let mut lo = (3.0 / a).max(1.0);
    let mut hi = 2.0 * lo;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-9 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // hi is on the satisfied side; step up until the stated (non-log) form
    // agrees too.
    while hi.powi(3) * (-hi).exp() > (-hi / k).exp() {
        hi += 1e-9 * hi;
    }
    hi
}

pub fn derive_schedule(config: &EgdConfig, spec: &ProblemSpec) -> Result<EgdSchedule> {
    config.validate()?;
    spec.validate()?;
    let d = spec.d as f64;
    let (l, rho) = (spec.l, spec.rho);
    let (eps, c, delta, theta) = (config.epsilon, config.c, config.delta, config.theta);

    let log_arg = |factor: f64| factor * d * l * config.delta_f / (c * eps * eps * delta);
    let (chi1, chi_log) = match config.chi_form {
        ChiForm::Standard => (solve_chi1(theta), (1.0 + theta / 4.0) * log_arg(2.0).ln()),
        ChiForm::WithoutFactorTwo => (solve_chi1(theta), (1.0 + theta / 4.0) * log_arg(1.0).ln()),
        ChiForm::FullTheta => (
            solve_chi1_with_divisor(1.0 + theta),
            (1.0 + theta) * log_arg(2.0).ln(),
        ),
    };
    let chi = chi_log.max(chi1);

    let eta = c / l;
    let g_thres = c.sqrt() / (chi * chi) * eps;
    let f_thres = c / chi.powi(3) * (eps.powi(3) / rho).sqrt();
    let t_thres_real = chi / (c * c) * l / (rho * eps).sqrt();
    let r = g_thres / l;
    let gamma = (rho * eps).sqrt();
    let script_t = chi / (eta * gamma);
    let script_p = c.sqrt() / chi * (eps / rho).sqrt();
    let delta_hat = d * l / gamma * (-chi).exp();

    let ceiling_descent = c.sqrt() / (4.0 * chi * chi) * eps;
    let ceiling_escape = (2.0 - 2f64.sqrt()) / 2.0
        * (c * (eps.powi(3) * rho).sqrt() / (chi.powi(3) * l))
        * (delta_hat / (2.0 * d.sqrt()))
        * (300.0 * config.c_hat + 1.0);
    let eps_hat = match config.eps_hat_ceiling {
        EpsHatCeiling::Full => config.eps_hat.min(ceiling_descent).min(ceiling_escape),
        EpsHatCeiling::Descent => config.eps_hat.min(ceiling_descent),
        EpsHatCeiling::Off => config.eps_hat,
    };
    let eps_hat_adjusted = eps_hat < config.eps_hat;
    if eps_hat_adjusted {
        log::info!(
            "eps_hat {} exceeds its ceiling; using {eps_hat:e}",
            config.eps_hat
        );
    }

    let iteration_bound = chi.powi(4) / c.powi(3) * l * config.delta_f / (eps * eps);

    for (field, value) in [
        ("chi", chi),
        ("eta", eta),
        ("g_thres", g_thres),
        ("f_thres", f_thres),
        ("t_thres", t_thres_real),
        ("r", r),
        ("gamma", gamma),
        ("eps_hat", eps_hat),
        ("iteration_bound", iteration_bound),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Config {
                field,
                reason: format!("derived value is {value}"),
            });
        }
    }
    if t_thres_real.ceil() >= u64::MAX as f64 {
        return Err(Error::Config {
            field: "t_thres",
            reason: format!("derived value {t_thres_real:e} does not fit an iteration counter"),
        });
    }
    let t_thres = (t_thres_real.ceil() as u64).max(1);

    let estimator = estimator::estimator_schedule(spec, eps_hat, config.c_prime)?;
    let predicted_queries = iteration_bound * (estimator.m_real.ceil() + 1.0);
    let max_iterations = match config.max_iterations {
        Some(n) => n,
        None => {
            let cap = (2.0 * iteration_bound).ceil();
            if cap >= u64::MAX as f64 {
                u64::MAX
            } else {
                cap as u64
            }
        }
    };

    Ok(EgdSchedule {
        chi,
        chi1,
        eta,
        g_thres,
        f_thres,
        t_thres,
        r,
        gamma,
        script_t,
        script_p,
        delta_hat,
        eps_hat_requested: config.eps_hat,
        eps_hat,
        eps_hat_adjusted,
        eps_hat_ceiling_descent: ceiling_descent,
        eps_hat_ceiling_escape: ceiling_escape,
        estimator,
        iteration_bound,
        predicted_queries,
        max_iterations,
    })
}

pub fn descent_step(x: &[f64], g_hat: &[f64], eta: f64) -> Vec<f64> {
    linalg::axpy(x, -eta, g_hat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TerminalConditionMet,
    MaxIterationsExceeded,
    /// Only with [`DomainExit::Stop`].
    DomainExited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u64,
    /// `f(x_t)` before any perturbation at this iteration.
    pub f_value: f64,
    /// Norm of the gradient the step used.
    pub g_hat_norm: f64,
    pub perturbed: bool,
    /// `f` at the perturbed point, when it was evaluated.
    pub f_perturbed: Option<f64>,
    /// Cumulative oracle queries after this iteration.
    pub queries: u64,
    pub in_domain: bool,
    pub x: Option<Vec<f64>>,
    pub x_perturbed: Option<Vec<f64>>,
    pub g_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub termination: Termination,
    pub iterations: u64,
    /// Iteration whose point was returned.
    pub returned_from: u64,
    pub perturbation_events: Vec<u64>,
    pub total_queries: u64,
    pub domain_exits: Vec<u64>,
    pub schedule: EgdSchedule,
    pub trace: Vec<IterationRecord>,
}

/// Runs the optimizer with estimated gradients.
pub fn egd_run(
    oracle: &ZeroOrderOracle,
    spec: &ProblemSpec,
    x0: &[f64],
    config: &EgdConfig,
    rng: &mut SeededRng,
) -> Result<RunResult> {
    run(oracle, spec, x0, config, rng, None)
}

/// Runs the optimizer with `gradient` in place of the estimator. Each
/// iteration still spends one query on `f(x_t)`.
pub fn egd_run_exact(
    oracle: &ZeroOrderOracle,
    spec: &ProblemSpec,
    x0: &[f64],
    config: &EgdConfig,
    rng: &mut SeededRng,
    gradient: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
) -> Result<RunResult> {
    run(oracle, spec, x0, config, rng, Some(gradient))
}

type GradientFn<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);

struct Best {
    x: Vec<f64>,
    f: f64,
    t: u64,
}

impl Best {
    fn offer(&mut self, x: &[f64], f: f64, t: u64) {
        if f < self.f {
            self.x = x.to_vec();
            self.f = f;
            self.t = t;
        }
    }
}

fn run(
    oracle: &ZeroOrderOracle,
    spec: &ProblemSpec,
    x0: &[f64],
    config: &EgdConfig,
    rng: &mut SeededRng,
    exact: Option<GradientFn<'_>>,
) -> Result<RunResult> {
    let schedule = derive_schedule(config, spec)?;
    if x0.len() != spec.d {
        return Err(Error::InvalidInput(format!(
            "x0 has length {}, problem dimension is {}",
            x0.len(),
            spec.d
        )));
    }
    oracle.check_point(x0)?;
    let d = spec.d;
    let t_thres = schedule.t_thres;
    let snapshot = |t: u64| config.snapshot_every > 0 && t.is_multiple_of(config.snapshot_every);

    let estimate = |x: &[f64], rng: &mut SeededRng| -> Result<(Vec<f64>, f64, u64)> {
        match exact {
            Some(grad) => {
                let fx = oracle.evaluate(x)?;
                Ok((grad(x), fx, 1))
            }
            None => {
                let est = estimator::estimate_gradient(
                    oracle,
                    x,
                    &schedule.estimator,
                    rng,
                    None,
                    config.sample_budget_override,
                )?;
                Ok((est.g_hat, est.base_value, est.queries_used))
            }
        }
    };

    let mut x = x0.to_vec();
    // i128 so that the initial value -t_thres - 1 fits for any u64 t_thres.
    let mut t_temp: i128 = -(t_thres as i128) - 1;
    let mut anchor: Option<(Vec<f64>, f64, u64)> = None;
    let mut best = Best {
        x: x.clone(),
        f: f64::INFINITY,
        t: 0,
    };
    let mut queries = 0u64;
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut perturbation_events = Vec::new();
    let mut domain_exits = Vec::new();
    let mut inside = true;

    let finish = |termination,
                  x_final: Vec<f64>,
                  f_final: f64,
                  returned_from: u64,
                  iterations: u64,
                  queries: u64,
                  perturbation_events,
                  domain_exits,
                  trace| RunResult {
        x_final,
        f_final,
        termination,
        iterations,
        returned_from,
        perturbation_events,
        total_queries: queries,
        domain_exits,
        schedule: schedule.clone(),
        trace,
    };

    for t in 0..schedule.max_iterations {
        let abort = |source: Error, trace: &mut Vec<IterationRecord>| Error::RunAborted {
            iteration: t,
            source: Box::new(source),
            trace: std::mem::take(trace),
        };
        let (mut g, fx, q) = match estimate(&x, rng) {
            Ok(v) => v,
            Err(e) => return Err(abort(e, &mut trace)),
        };
        queries += q;
        best.offer(&x, fx, t);

        let now_inside = spec.in_domain(&x);
        let mut record = IterationRecord {
            t,
            f_value: fx,
            g_hat_norm: linalg::norm(&g),
            perturbed: false,
            f_perturbed: None,
            queries,
            in_domain: now_inside,
            x: snapshot(t).then(|| x.clone()),
            x_perturbed: None,
            g_hat: None,
        };
        if inside && !now_inside {
            domain_exits.push(t);
        }
        inside = now_inside;
        if !now_inside && config.domain_exit == DomainExit::Stop {
            record.x.get_or_insert_with(|| x.clone());
            trace.push(record);
            return Ok(finish(
                Termination::DomainExited,
                best.x,
                best.f,
                best.t,
                t + 1,
                queries,
                perturbation_events,
                domain_exits,
                trace,
            ));
        }

        if record.g_hat_norm <= schedule.g_thres && i128::from(t) - t_temp > i128::from(t_thres) {
            let xi = rng.sample_uniform_ball(d, schedule.r)?;
            anchor = Some((x.clone(), fx, t));
            x = linalg::add(&x, &xi);
            t_temp = i128::from(t);
            perturbation_events.push(t);
            record.perturbed = true;
            if snapshot(t) {
                record.x_perturbed = Some(x.clone());
            }
            if config.perturbation_gradient == PerturbationGradient::Fresh {
                let (g2, f2, q2) = match estimate(&x, rng) {
                    Ok(v) => v,
                    Err(e) => return Err(abort(e, &mut trace)),
                };
                queries += q2;
                best.offer(&x, f2, t);
                g = g2;
                record.f_perturbed = Some(f2);
                record.g_hat_norm = linalg::norm(&g);
                record.queries = queries;
            }
        }

        if i128::from(t) - t_temp == i128::from(t_thres) {
            let (ax, af, at) = anchor
                .clone()
                .expect("window start is always a perturbation");
            if fx - af > -schedule.f_thres {
                if config.snapshot_every > 0 {
                    record.x.get_or_insert_with(|| x.clone());
                }
                trace.push(record);
                return Ok(finish(
                    Termination::TerminalConditionMet,
                    ax,
                    af,
                    at,
                    t + 1,
                    queries,
                    perturbation_events,
                    domain_exits,
                    trace,
                ));
            }
        }

        if snapshot(t) {
            record.g_hat = Some(g.clone());
        }
        let last = t + 1 == schedule.max_iterations;
        if last && config.snapshot_every > 0 {
            record.x.get_or_insert_with(|| x.clone());
            record.g_hat.get_or_insert_with(|| g.clone());
        }
        trace.push(record);
        x = descent_step(&x, &g, schedule.eta);
    }

    Ok(finish(
        Termination::MaxIterationsExceeded,
        best.x,
        best.f,
        best.t,
        schedule.max_iterations,
        queries,
        perturbation_events,
        domain_exits,
        trace,
    ))
}
