//! Gaussian-smoothing gradient estimation from function values.
//!
//! For a smoothing radius `v` and standard Gaussian directions `u_i`,
//!
//! ```text
//! g_hat(x) = (1/m) * sum_i (f(x + v u_i) - f(x)) / v * u_i
//! ```
//!
//! is an unbiased estimate of the gradient of the smoothed function
//! `f_v(x) = E[f(x + v u)]`, which is within `(v/2) l (d+3)^{3/2}` of the true
//! gradient for an `l`-smooth `f`. [`estimator_schedule`] picks `v`, the
//! per-sample variance bound `sigma2` and the sample count `m` so that the
//! estimate is `eps_hat`-close to the gradient with probability at least
//! `1 - eps_hat`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::testbed::BenchmarkProblem;
use crate::{linalg, Error, ProblemSpec, Result, SeededRng, ZeroOrderOracle};

/// Smallest admissible `c_prime`, and the default.
pub const DEFAULT_C_PRIME: f64 = 3.0;

/// Directions are drawn and evaluated in blocks of this many samples.
const BLOCK: usize = 8192;
/// Below this many samples per block the evaluation stays on the caller's
/// thread.
const PARALLEL_MIN: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSchedule {
    pub d: usize,
    /// Smoothing radius.
    pub v: f64,
    /// Per-sample variance bound.
    pub sigma2: f64,
    /// Sample count, rounded up. Saturates at `u64::MAX`; see `m_real`.
    pub m: u64,
    /// The unrounded sample-count expression.
    pub m_real: f64,
    pub eps_hat: f64,
    pub c_prime: f64,
}

impl EstimatorSchedule {
    /// True when the theoretical sample count does not fit in a `u64`.
    pub fn m_saturated(&self) -> bool {
        self.m == u64::MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// `m` from the schedule.
    Theoretical,
    /// A caller-supplied budget replaced `m`.
    Override,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub g_hat: Vec<f64>,
    /// Oracle queries spent, including the base evaluation when it was not
    /// supplied by the caller.
    pub queries_used: u64,
    /// `f(x)`, reusable by the caller.
    pub base_value: f64,
    pub samples: u64,
    pub mode: SampleMode,
}

pub fn estimator_schedule(
    spec: &ProblemSpec,
    eps_hat: f64,
    c_prime: f64,
) -> Result<EstimatorSchedule> {
    spec.validate()?;
    if !(eps_hat > 0.0 && eps_hat < 1.0) {
        return Err(Error::OutOfRange {
            name: "eps_hat",
            value: eps_hat,
            reason: "the accuracy guarantee only covers 0 < eps_hat < 1",
        });
    }
    if !(c_prime >= DEFAULT_C_PRIME) || !c_prime.is_finite() {
        return Err(Error::OutOfRange {
            name: "c_prime",
            value: c_prime,
            reason: "the accuracy guarantee needs c_prime >= 3",
        });
    }
    if spec.b <= 1.5 {
        log::warn!(
            "gradient bound B = {} <= 1.5; the sample-count guarantee assumes B > 1.5",
            spec.b
        );
    }
    let d = spec.d as f64;
    let v = eps_hat / (c_prime * spec.l * (d + 3.0).powf(1.5));
    let sigma2 = 2.0 * c_prime * c_prime * (d + 4.0) * spec.b * spec.b;
    let m_real = 32.0 * sigma2 / (eps_hat * eps_hat) * ((1.0 / eps_hat).ln() + 0.25);
    let m = m_real.ceil();
    // f64 -> u64 casts saturate.
    let m = if m >= u64::MAX as f64 {
        u64::MAX
    } else {
        (m as u64).max(1)
    };
    Ok(EstimatorSchedule {
        d: spec.d,
        v,
        sigma2,
        m,
        m_real,
        eps_hat,
        c_prime,
    })
}

/// Estimates `grad f(x)` from `m'` Gaussian directions.
///
/// `m'` is `budget_override` when given, otherwise `schedule.m`. All
/// directions come from `rng` in order; function values may be computed in
/// parallel, and are accumulated in sample order, so the result does not
/// depend on the worker count.
pub fn estimate_gradient(
    oracle: &ZeroOrderOracle,
    x: &[f64],
    schedule: &EstimatorSchedule,
    rng: &mut SeededRng,
    cached_fx: Option<f64>,
    budget_override: Option<u64>,
) -> Result<GradientEstimate> {
    oracle.check_point(x)?;
    let d = x.len();
    if d != schedule.d {
        return Err(Error::InvalidInput(format!(
            "schedule built for dimension {}, point has {}",
            schedule.d, d
        )));
    }
    let (samples, mode) = match budget_override {
        Some(0) => {
            return Err(Error::Config {
                field: "sample_budget_override",
                reason: "budget must be at least 1".into(),
            })
        }
        Some(b) => (b, SampleMode::Override),
        None if schedule.m_saturated() => {
            return Err(Error::Config {
                field: "sample_budget_override",
                reason: format!(
                    "theoretical sample count {:e} is not representable; supply a budget",
                    schedule.m_real
                ),
            })
        }
        None => (schedule.m, SampleMode::Theoretical),
    };

    let mut queries = 0;
    let base_value = match cached_fx {
        Some(fx) => fx,
        None => {
            queries += 1;
            oracle.evaluate_unchecked(x)?
        }
    };

    let v = schedule.v;
    let mut acc = vec![0.0; d];
    let block = BLOCK.min(usize::try_from(samples).unwrap_or(BLOCK));
    let mut dirs = vec![0.0; block * d];
    let mut remaining = samples;
    while remaining > 0 {
        let n = usize::try_from(remaining).map_or(block, |r| r.min(block));
        let dirs = &mut dirs[..n * d];
        rng.fill_standard_gaussian(dirs);
        let eval = |u: &[f64]| {
            let p = linalg::axpy(x, v, u);
            oracle.evaluate_unchecked(&p)
        };
        let values: Vec<Result<f64>> = if n >= PARALLEL_MIN {
            dirs.par_chunks(d).map(eval).collect()
        } else {
            dirs.chunks(d).map(eval).collect()
        };
        queries += n as u64;
        for (u, value) in dirs.chunks(d).zip(values) {
            let coef = (value? - base_value) / v;
            for (a, ui) in acc.iter_mut().zip(u) {
                *a += coef * ui;
            }
        }
        remaining -= n as u64;
    }
    let scale = samples as f64;
    for a in &mut acc {
        *a /= scale;
    }
    Ok(GradientEstimate {
        g_hat: acc,
        queries_used: queries,
        base_value,
        samples,
        mode,
    })
}

/// Chernoff bound on the upper tail of a chi-squared variable with `d`
/// degrees of freedom:
///
/// ```text
/// P(|u|^2 > a2) <= (d/a2)^{-d/2} * exp(-(a2 - d)/2),   u ~ N(0, I_d)
/// ```
///
/// Requires `a2 > d`. Clamped to 1.
pub fn gaussian_tail_bound(d: usize, a2: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let df = d as f64;
    if !(a2 > df) || !a2.is_finite() {
        return Err(Error::InvalidInput(format!(
            "tail bound needs a2 > d (got a2 = {a2}, d = {d})"
        )));
    }
    let log_bound = 0.5 * df * (a2 / df).ln() - 0.5 * (a2 - df);
    Ok(log_bound.exp().min(1.0))
}

/// Errors `|g_hat - grad f(x)|` of `trials` independent estimates.
pub fn accuracy_trials(
    problem: &BenchmarkProblem,
    x: &[f64],
    schedule: &EstimatorSchedule,
    trials: usize,
    rng: &mut SeededRng,
    budget_override: Option<u64>,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let truth = problem.gradient(x)?;
    let oracle = problem.oracle();
    let fx = oracle.evaluate(x)?;
    (0..trials)
        .map(|_| {
            let est = estimate_gradient(&oracle, x, schedule, rng, Some(fx), budget_override)?;
            Ok(linalg::distance(&est.g_hat, &truth))
        })
        .collect()
}

/// Fraction of `trials` estimates within `schedule.eps_hat` of the analytic
/// gradient.
pub fn empirical_accuracy(
    problem: &BenchmarkProblem,
    x: &[f64],
    schedule: &EstimatorSchedule,
    trials: usize,
    rng: &mut SeededRng,
    budget_override: Option<u64>,
) -> Result<f64> {
    let errors = accuracy_trials(problem, x, schedule, trials, rng, budget_override)?;
    let hits = errors.iter().filter(|&&e| e <= schedule.eps_hat).count();
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::make_benchmark;

    fn spec(d: usize, l: f64, b: f64) -> ProblemSpec {
        ProblemSpec::new(d, l, 1.0, b).unwrap()
    }

    #[test]
    fn schedule_d10() {
        let s = estimator_schedule(&spec(10, 1.0, 2.0), 0.1, 3.0).unwrap();
        // v = 0.1 / (3 * 13^1.5), sigma2 = 2*9*14*4, m = ceil(3_225_600 (ln 10 + 1/4))
        let v = 0.1 / (3.0 * 13f64.powf(1.5));
        assert!((s.v - v).abs() < 1e-18);
        assert!((s.v - 7.112e-4).abs() < 1e-7);
        assert_eq!(s.sigma2, 1008.0);
        assert_eq!(s.m, 8_233_619);
    }

    #[test]
    fn schedule_d2() {
        let s = estimator_schedule(&spec(2, 1.0, 2.0), 0.5, 3.0).unwrap();
        assert_eq!(s.sigma2, 432.0);
        // 55_296 * (ln 2 + 1/4) = 52_152.27
        assert_eq!(s.m, 52_153);
        assert!((s.m_real - 52_152.266).abs() < 1e-3);
    }

    #[test]
    fn schedule_rejects_bad_ranges() {
        let sp = spec(2, 1.0, 2.0);
        for e in [1.0, 0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                estimator_schedule(&sp, e, 3.0),
                Err(Error::OutOfRange {
                    name: "eps_hat",
                    ..
                })
            ));
        }
        assert!(matches!(
            estimator_schedule(&sp, 0.5, 2.9),
            Err(Error::OutOfRange {
                name: "c_prime",
                ..
            })
        ));
    }

    #[test]
    fn saturated_m_needs_budget() {
        let s = estimator_schedule(&spec(2, 1.0, 2.0), 1e-12, 3.0).unwrap();
        assert!(s.m_saturated() || s.m > 1 << 50);
        let s = estimator_schedule(&spec(2, 1.0, 2.0), 1e-30, 3.0).unwrap();
        assert!(s.m_saturated());
        let o = ZeroOrderOracle::from_fn(2, |x| x[0]);
        let mut rng = SeededRng::new(0);
        let err = estimate_gradient(&o, &[0.0, 0.0], &s, &mut rng, None, None).unwrap_err();
        assert!(matches!(
            err,
            Error::Config {
                field: "sample_budget_override",
                ..
            }
        ));
        assert!(estimate_gradient(&o, &[0.0, 0.0], &s, &mut rng, None, Some(0)).is_err());
    }

    #[test]
    fn constant_gives_exact_zero() {
        let o = ZeroOrderOracle::from_fn(3, |_| 7.0);
        let s = estimator_schedule(&spec(3, 1.0, 2.0), 0.5, 3.0).unwrap();
        let mut rng = SeededRng::new(9);
        let est = estimate_gradient(&o, &[1.0, -2.0, 0.5], &s, &mut rng, None, Some(5000)).unwrap();
        assert!(est.g_hat.iter().all(|&g| g == 0.0));
        assert_eq!(est.base_value, 7.0);
    }

    #[test]
    fn linear_recovers_slope() {
        let o = ZeroOrderOracle::from_fn(2, |x| 3.0 * x[0] - 2.0 * x[1]);
        let mut s = estimator_schedule(&spec(2, 1.0, 4.0), 0.5, 3.0).unwrap();
        s.v = 0.01;
        let mut rng = SeededRng::new(1);
        let est = estimate_gradient(&o, &[0.2, 0.4], &s, &mut rng, None, Some(100_000)).unwrap();
        let err = linalg::distance(&est.g_hat, &[3.0, -2.0]);
        assert!(err <= 0.1, "error {err}");
        assert_eq!(est.mode, SampleMode::Override);
    }

    #[test]
    fn query_cost() {
        let o = ZeroOrderOracle::from_fn(2, |x| x[0] * x[1]);
        let s = estimator_schedule(&spec(2, 1.0, 2.0), 0.5, 3.0).unwrap();
        let mut rng = SeededRng::new(2);
        let est = estimate_gradient(&o, &[1.0, 1.0], &s, &mut rng, None, Some(10_001)).unwrap();
        assert_eq!(est.queries_used, 10_002);
        assert_eq!(o.query_count(), 10_002);
        let est = estimate_gradient(&o, &[1.0, 1.0], &s, &mut rng, Some(1.0), Some(17)).unwrap();
        assert_eq!(est.queries_used, 17);
        assert_eq!(o.query_count(), 10_019);
    }

    #[test]
    fn theoretical_budget_spends_m_plus_one() {
        let o = ZeroOrderOracle::from_fn(2, |x| x[0]);
        let s = estimator_schedule(&spec(2, 1.0, 2.0), 0.5, 3.0).unwrap();
        let mut rng = SeededRng::new(2);
        let est = estimate_gradient(&o, &[0.0, 0.0], &s, &mut rng, None, None).unwrap();
        assert_eq!(est.samples, 52_153);
        assert_eq!(est.queries_used, 52_154);
        assert_eq!(est.mode, SampleMode::Theoretical);
    }

    #[test]
    fn same_seed_same_estimate_bitwise() {
        let o = ZeroOrderOracle::from_fn(3, |x| x[0].sin() + x[1] * x[2]);
        let s = estimator_schedule(&spec(3, 2.0, 2.0), 0.5, 3.0).unwrap();
        let a = estimate_gradient(
            &o,
            &[0.1, 0.2, 0.3],
            &s,
            &mut SeededRng::new(4),
            None,
            Some(20_000),
        )
        .unwrap();
        let b = estimate_gradient(
            &o,
            &[0.1, 0.2, 0.3],
            &s,
            &mut SeededRng::new(4),
            None,
            Some(20_000),
        )
        .unwrap();
        let bits = |g: &[f64]| g.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.g_hat), bits(&b.g_hat));
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let o = ZeroOrderOracle::from_fn(2, |x| (x[0] * x[1]).cos());
        let s = estimator_schedule(&spec(2, 2.0, 2.0), 0.5, 3.0).unwrap();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                estimate_gradient(
                    &o,
                    &[0.5, 0.5],
                    &s,
                    &mut SeededRng::new(8),
                    None,
                    Some(30_000),
                )
                .unwrap()
                .g_hat
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn oracle_failure_carries_point() {
        let o = ZeroOrderOracle::from_fn(1, |x| if x[0] > 0.0 { f64::NAN } else { 0.0 });
        let s = estimator_schedule(&spec(1, 1.0, 2.0), 0.5, 3.0).unwrap();
        let mut rng = SeededRng::new(3);
        match estimate_gradient(&o, &[0.0], &s, &mut rng, None, Some(100)) {
            Err(Error::OracleFailure { point, .. }) => assert!(point[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tail_bound_values() {
        let b = gaussian_tail_bound(1, 1.0 + 1e-9).unwrap();
        assert!((b - 1.0).abs() < 1e-9);
        let b = gaussian_tail_bound(5, 20.0).unwrap();
        let expected = 4f64.powf(2.5) * (-7.5f64).exp();
        assert!((b - expected).abs() < 1e-15);
        assert!((b - 0.01770).abs() < 5e-6);
        assert!(gaussian_tail_bound(5, 5.0).is_err());
        assert!(gaussian_tail_bound(5, 4.0).is_err());
    }

    #[test]
    fn accuracy_on_constant_is_perfect() {
        let p = make_benchmark("constant", 2).unwrap();
        let s = estimator_schedule(&p.spec, 0.5, 3.0).unwrap();
        let mut rng = SeededRng::new(1);
        let frac = empirical_accuracy(&p, &[0.3, 0.4], &s, 100, &mut rng, Some(50)).unwrap();
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn single_sample_accuracy_degrades() {
        let p = make_benchmark("bowl", 2).unwrap();
        let mut sp = p.spec.clone();
        sp.b = 2.0;
        let s = estimator_schedule(&sp, 0.5, 3.0).unwrap();
        let mut rng = SeededRng::new(1);
        let frac = empirical_accuracy(&p, &[1.0, 0.0], &s, 500, &mut rng, Some(1)).unwrap();
        assert!(frac < 0.9, "fraction {frac}");
    }

    #[test]
    fn accuracy_needs_derivatives() {
        let p = BenchmarkProblem::black_box(
            "opaque",
            spec(2, 1.0, 2.0),
            std::sync::Arc::new(crate::FnObjective::new(2, |x: &[f64]| x[0])),
        );
        let s = estimator_schedule(&p.spec, 0.5, 3.0).unwrap();
        let mut rng = SeededRng::new(1);
        assert!(matches!(
            empirical_accuracy(&p, &[0.0, 0.0], &s, 10, &mut rng, Some(5)),
            Err(Error::Unsupported(_))
        ));
    }
}
