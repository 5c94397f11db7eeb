//! Benchmark objectives with analytic derivatives and the stationary-point
//! classifier.
//!
//! | name | f | l | rho | B | domain |
//! |---|---|---|---|---|---|
//! | `constant` | 7 | 1 | 1 | 1 | everywhere |
//! | `linear_clip` | `2 tanh(a.x / 2)`, `a = 2 (1,..,1)/sqrt(d)` | `8/(3 sqrt 3)` | 4 | 2 | everywhere |
//! | `bowl` | `|x|^2 / 2` | 1 | 1 | 10 | `|x| <= 10` |
//! | `saddle_quadratic` | `(x1^2 - x2^2 + sum_{i>=3} xi^2) / 2` | 1 | 1 | 10 | `|x| <= 10` |
//! | `saddle_quartic` | `x1^2/2 + x2^4/4 - x2^2/2 + sum_{i>=3} xi^2/2` | 11 | 12 | 6 | `|x| <= 2` |
//!
//! Pure quadratics cannot have a globally bounded gradient, so the declared
//! constants hold on the stated ball only. `saddle_quartic` has its strict
//! saddle at the origin (Hessian `diag(1, -1, 1, ..)`) and minima at
//! `(0, +-1, 0, ..)` with value `-1/4`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{linalg, Error, Objective, ProblemSpec, Result, ZeroOrderOracle};

pub const CATALOG: &[&str] = &[
    "constant",
    "linear_clip",
    "bowl",
    "saddle_quadratic",
    "saddle_quartic",
];

const CONSTANT_VALUE: f64 = 7.0;
const CLIP_SCALE: f64 = 2.0;
const CLIP_SLOPE: f64 = 2.0;

#[derive(Clone)]
enum Kind {
    Constant,
    LinearClip { a: Vec<f64> },
    Bowl,
    SaddleQuadratic,
    SaddleQuartic,
    BlackBox(Arc<dyn Objective>),
}

/// A testbed objective together with its regularity constants.
#[derive(Clone)]
pub struct BenchmarkProblem {
    pub name: String,
    pub spec: ProblemSpec,
    kind: Kind,
}

impl fmt::Debug for BenchmarkProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkProblem")
            .field("name", &self.name)
            .field("spec", &self.spec)
            .finish()
    }
}

pub fn make_benchmark(name: &str, d: usize) -> Result<BenchmarkProblem> {
    if d == 0 {
        return Err(Error::Config {
            field: "dim",
            reason: "dimension must be at least 1".into(),
        });
    }
    let needs_two = |name: &str| {
        if d < 2 {
            Err(Error::Config {
                field: "dim",
                reason: format!("`{name}` needs dimension >= 2, got {d}"),
            })
        } else {
            Ok(())
        }
    };
    let spec = |l, rho, b, f_star, radius| ProblemSpec {
        d,
        l,
        rho,
        b,
        f_star_hint: f_star,
        domain_radius: radius,
    };
    let (kind, spec) = match name {
        "constant" => (
            Kind::Constant,
            spec(1.0, 1.0, 1.0, Some(CONSTANT_VALUE), None),
        ),
        "linear_clip" => {
            let a = vec![CLIP_SLOPE / (d as f64).sqrt(); d];
            let max_second = 4.0 / (3.0 * 3f64.sqrt());
            let l = CLIP_SLOPE * CLIP_SLOPE / CLIP_SCALE * max_second;
            let rho = CLIP_SLOPE.powi(3) / (CLIP_SCALE * CLIP_SCALE) * 2.0;
            (
                Kind::LinearClip { a },
                spec(l, rho, CLIP_SLOPE, Some(-CLIP_SCALE), None),
            )
        }
        "bowl" => (Kind::Bowl, spec(1.0, 1.0, 10.0, Some(0.0), Some(10.0))),
        "saddle_quadratic" => {
            needs_two(name)?;
            (
                Kind::SaddleQuadratic,
                spec(1.0, 1.0, 10.0, Some(-50.0), Some(10.0)),
            )
        }
        "saddle_quartic" => {
            needs_two(name)?;
            (
                Kind::SaddleQuartic,
                spec(11.0, 12.0, 6.0, Some(-0.25), Some(2.0)),
            )
        }
        _ => {
            return Err(Error::UnknownProblem {
                name: name.to_string(),
                valid: CATALOG,
            })
        }
    };
    Ok(BenchmarkProblem {
        name: name.to_string(),
        spec,
        kind,
    })
}

fn axis(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

impl BenchmarkProblem {
    /// Wraps an objective without derivatives. Analytic queries on it fail
    /// with `Error::Unsupported`.
    pub fn black_box(name: &str, spec: ProblemSpec, objective: Arc<dyn Objective>) -> Self {
        Self {
            name: name.to_string(),
            spec,
            kind: Kind::BlackBox(objective),
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    /// A fresh counting oracle over this problem.
    pub fn oracle(&self) -> ZeroOrderOracle {
        ZeroOrderOracle::new(Arc::new(self.clone()))
    }

    pub fn has_derivatives(&self) -> bool {
        !matches!(self.kind, Kind::BlackBox(_))
    }

    fn unsupported(&self) -> Error {
        Error::Unsupported(format!("`{}` has no analytic derivatives", self.name))
    }

    fn clip_arg(a: &[f64], x: &[f64]) -> f64 {
        linalg::dot(a, x) / CLIP_SCALE
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Constant => CONSTANT_VALUE,
            Kind::LinearClip { a } => CLIP_SCALE * Self::clip_arg(a, x).tanh(),
            Kind::Bowl => 0.5 * linalg::norm_sq(x),
            Kind::SaddleQuadratic => 0.5 * (linalg::norm_sq(x) - 2.0 * x[1] * x[1]),
            Kind::SaddleQuartic => {
                let y = x[1];
                0.5 * (linalg::norm_sq(x) - y * y) + 0.25 * y.powi(4) - 0.5 * y * y
            }
            Kind::BlackBox(f) => f.value(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match &self.kind {
            Kind::Constant => vec![0.0; x.len()],
            Kind::LinearClip { a } => {
                let sech2 = 1.0 / Self::clip_arg(a, x).cosh().powi(2);
                a.iter().map(|ai| sech2 * ai).collect()
            }
            Kind::Bowl => x.to_vec(),
            Kind::SaddleQuadratic => {
                let mut g = x.to_vec();
                g[1] = -x[1];
                g
            }
            Kind::SaddleQuartic => {
                let mut g = x.to_vec();
                g[1] = x[1].powi(3) - x[1];
                g
            }
            Kind::BlackBox(_) => return Err(self.unsupported()),
        })
    }

    /// Dense Hessian, row-major `d x d`.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = x.len();
        let diag = |entries: Vec<f64>| {
            (0..d)
                .map(|i| {
                    let mut row = vec![0.0; d];
                    row[i] = entries[i];
                    row
                })
                .collect::<Vec<_>>()
        };
        Ok(match &self.kind {
            Kind::Constant => diag(vec![0.0; d]),
            Kind::LinearClip { a } => {
                let h = self.clip_curvature(a, x);
                (0..d)
                    .map(|i| (0..d).map(|j| h * a[i] * a[j]).collect())
                    .collect()
            }
            Kind::Bowl => diag(vec![1.0; d]),
            Kind::SaddleQuadratic => {
                let mut e = vec![1.0; d];
                e[1] = -1.0;
                diag(e)
            }
            Kind::SaddleQuartic => {
                let mut e = vec![1.0; d];
                e[1] = 3.0 * x[1] * x[1] - 1.0;
                diag(e)
            }
            Kind::BlackBox(_) => return Err(self.unsupported()),
        })
    }

    /// Second derivative of the clip profile, scaled so that the Hessian is
    /// `h a a^T`.
    fn clip_curvature(&self, a: &[f64], x: &[f64]) -> f64 {
        let z = Self::clip_arg(a, x);
        -2.0 * z.tanh() / z.cosh().powi(2) / CLIP_SCALE
    }

    /// Smallest Hessian eigenvalue and a unit eigenvector for it.
    pub fn min_eigen(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = x.len();
        Ok(match &self.kind {
            Kind::Constant => (0.0, axis(d, 0)),
            Kind::Bowl => (1.0, axis(d, 0)),
            Kind::SaddleQuadratic => (-1.0, axis(d, 1)),
            Kind::SaddleQuartic => {
                let curv = 3.0 * x[1] * x[1] - 1.0;
                if curv <= 1.0 {
                    (curv, axis(d, 1))
                } else {
                    (1.0, axis(d, 0))
                }
            }
            Kind::LinearClip { a } => {
                let lambda = self.clip_curvature(a, x) * linalg::norm_sq(a);
                let along: Vec<f64> = a.iter().map(|ai| ai / linalg::norm(a)).collect();
                if d == 1 || lambda < 0.0 {
                    (lambda, along)
                } else {
                    // a is a multiple of the all-ones vector.
                    let mut e = vec![0.0; d];
                    e[0] = std::f64::consts::FRAC_1_SQRT_2;
                    e[1] = -std::f64::consts::FRAC_1_SQRT_2;
                    (0.0, e)
                }
            }
            Kind::BlackBox(_) => return Err(self.unsupported()),
        })
    }

    pub fn min_eig(&self, x: &[f64]) -> Result<f64> {
        Ok(self.min_eigen(x)?.0)
    }

    pub fn known_saddles(&self) -> Vec<Vec<f64>> {
        match self.kind {
            Kind::SaddleQuadratic | Kind::SaddleQuartic => vec![vec![0.0; self.dim()]],
            _ => Vec::new(),
        }
    }

    pub fn known_minima(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        match self.kind {
            Kind::Bowl => vec![vec![0.0; d]],
            Kind::SaddleQuartic => {
                let mut lo = vec![0.0; d];
                lo[1] = -1.0;
                let mut hi = vec![0.0; d];
                hi[1] = 1.0;
                vec![lo, hi]
            }
            _ => Vec::new(),
        }
    }
}

impl Objective for BenchmarkProblem {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        BenchmarkProblem::value(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stationarity {
    NotStationary,
    FirstOrderOnly,
    SecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryClass {
    pub class: Stationarity,
    pub grad_norm: f64,
    pub min_eig: f64,
}

/// `SecondOrder` iff `|grad f(x)| <= epsilon` and
/// `lambda_min(hess f(x)) >= -sqrt(rho * epsilon)`.
pub fn classify_point(
    problem: &BenchmarkProblem,
    x: &[f64],
    epsilon: f64,
    rho: f64,
) -> Result<StationaryClass> {
    let grad_norm = linalg::norm(&problem.gradient(x)?);
    let min_eig = problem.min_eig(x)?;
    let class = if grad_norm > epsilon {
        Stationarity::NotStationary
    } else if min_eig < -(rho * epsilon).sqrt() {
        Stationarity::FirstOrderOnly
    } else {
        Stationarity::SecondOrder
    };
    Ok(StationaryClass {
        class,
        grad_norm,
        min_eig,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bowl_identities() {
        let p = make_benchmark("bowl", 3).unwrap();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(p.value(&x), 7.0);
        assert_eq!(p.gradient(&x).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(p.min_eig(&x).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_saddle_at_origin() {
        let p = make_benchmark("saddle_quadratic", 2).unwrap();
        assert_eq!(p.gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(p.min_eig(&[0.0, 0.0]).unwrap(), -1.0);
        assert_eq!(p.value(&[1.0, 2.0]), -1.5);
    }

    #[test]
    fn quartic_minima_and_saddle() {
        let p = make_benchmark("saddle_quartic", 3).unwrap();
        for m in p.known_minima() {
            assert!(linalg::norm(&p.gradient(&m).unwrap()) == 0.0);
            assert!(p.min_eig(&m).unwrap() > 0.0);
            assert_eq!(p.value(&m), -0.25);
        }
        let s = &p.known_saddles()[0];
        assert_eq!(p.min_eig(s).unwrap(), -1.0);
    }

    #[test]
    fn dimension_requirements() {
        assert!(make_benchmark("saddle_quadratic", 1).is_err());
        assert!(make_benchmark("saddle_quartic", 1).is_err());
        assert!(make_benchmark("bowl", 0).is_err());
        assert!(make_benchmark("linear_clip", 1).is_ok());
    }

    #[test]
    fn unknown_name_lists_catalog() {
        let err = make_benchmark("rosenbrock", 2).unwrap_err();
        let msg = err.to_string();
        for name in CATALOG {
            assert!(msg.contains(name));
        }
    }

    #[test]
    fn classification() {
        let q = make_benchmark("saddle_quadratic", 2).unwrap();
        let c = classify_point(&q, &[0.0, 0.0], 0.01, 1.0).unwrap();
        assert_eq!(c.class, Stationarity::FirstOrderOnly);
        assert_eq!(c.grad_norm, 0.0);
        assert_eq!(c.min_eig, -1.0);
        let c = classify_point(&q, &[0.0, 2.0], 0.01, 1.0).unwrap();
        assert_eq!(c.class, Stationarity::NotStationary);
        assert_eq!(c.grad_norm, 2.0);

        let b = make_benchmark("bowl", 4).unwrap();
        for (eps, rho) in [(1e-6, 1.0), (0.5, 100.0)] {
            let c = classify_point(&b, &[0.0; 4], eps, rho).unwrap();
            assert_eq!(c.class, Stationarity::SecondOrder);
        }
    }

    #[test]
    fn classification_boundaries_are_inclusive() {
        // |grad| == eps exactly and lambda_min == -sqrt(rho eps) exactly.
        let b = make_benchmark("bowl", 1).unwrap();
        assert_eq!(
            classify_point(&b, &[0.5], 0.5, 1.0).unwrap().class,
            Stationarity::SecondOrder
        );
        let q = make_benchmark("saddle_quadratic", 2).unwrap();
        assert_eq!(
            classify_point(&q, &[0.0, 0.0], 0.25, 4.0).unwrap().class,
            Stationarity::SecondOrder
        );
    }

    #[test]
    fn black_box_has_no_derivatives() {
        let p = BenchmarkProblem::black_box(
            "opaque",
            ProblemSpec::new(1, 1.0, 1.0, 1.0).unwrap(),
            Arc::new(crate::FnObjective::new(1, |x: &[f64]| x[0])),
        );
        assert_eq!(p.value(&[3.0]), 3.0);
        assert!(!p.has_derivatives());
        assert!(matches!(p.gradient(&[0.0]), Err(Error::Unsupported(_))));
        assert!(classify_point(&p, &[0.0], 0.1, 1.0).is_err());
    }
}
