//! Zeroth-order nonconvex optimization.
//!
//! The crate estimates gradients from function values alone using Gaussian
//! smoothing, runs perturbed gradient descent on those estimates to reach
//! approximate second-order stationary points, and ships a small testbed of
//! problems with analytic derivatives plus harnesses that check the
//! estimator and optimizer against their guarantees.
//!
//! ```
//! use zoegd::{estimator, testbed, SeededRng};
//!
//! let bowl = testbed::make_benchmark("bowl", 2).unwrap();
//! let oracle = bowl.oracle();
//! let schedule = estimator::estimator_schedule(&bowl.spec, 0.5, 3.0).unwrap();
//! let mut rng = SeededRng::new(1);
//! let est = estimator::estimate_gradient(&oracle, &[1.0, 0.0], &schedule, &mut rng, None, Some(2000)).unwrap();
//! assert!((est.g_hat[0] - 1.0).abs() < 0.3);
//! assert_eq!(oracle.query_count(), 2001);
//! ```

pub mod diagnostics;
pub mod egd;
mod error;
pub mod estimator;
pub mod linalg;
mod oracle;
mod problem;
mod rng;
pub mod testbed;

pub use error::{Error, Result};
pub use oracle::{FnObjective, Objective, ZeroOrderOracle};
pub use problem::ProblemSpec;
pub use rng::SeededRng;
