use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::{Error, Result};

/// A deterministic black-box objective `f: R^d -> R`.
///
/// Implementations must be pure functions of their input: the oracle may call
/// `value` from several threads at once.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

/// Adapter turning a closure into an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Function-value-only access to an objective, with exact query accounting.
///
/// Each oracle owns its counter, and `evaluate` is the only way to reach `f`.
pub struct ZeroOrderOracle {
    objective: Arc<dyn Objective>,
    queries: AtomicU64,
}

impl ZeroOrderOracle {
    pub fn new(objective: Arc<dyn Objective>) -> Self {
        Self {
            objective,
            queries: AtomicU64::new(0),
        }
    }

    pub fn from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(Arc::new(FnObjective::new(dim, f)))
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// Evaluates `f(x)` and counts one query.
    ///
    /// Rejects points of the wrong length or with non-finite coordinates
    /// without touching the counter. A non-finite function value is counted
    /// and reported as an oracle failure.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.evaluate_unchecked(x)
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has length {}, oracle dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        if let Some(i) = x.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "coordinate {i} of the query point is {}",
                x[i]
            )));
        }
        Ok(())
    }

    /// Skips the input check; a non-finite coordinate still surfaces as an
    /// oracle failure through the returned value.
    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> Result<f64> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let value = self.objective.value(x);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::OracleFailure {
                point: x.to_vec(),
                value,
            })
        }
    }
}

impl fmt::Debug for ZeroOrderOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZeroOrderOracle")
            .field("dim", &self.dim())
            .field("queries", &self.query_count())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(d: usize) -> ZeroOrderOracle {
        ZeroOrderOracle::from_fn(d, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }

    #[test]
    fn bowl_values_and_counts() {
        let o = bowl(2);
        assert_eq!(o.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(o.query_count(), 1);
        assert_eq!(o.evaluate(&[3.0, 4.0]).unwrap(), 12.5);
        assert_eq!(o.query_count(), 2);
    }

    #[test]
    fn thousand_calls() {
        let o = bowl(3);
        for i in 0..1000 {
            o.evaluate(&[i as f64, 0.0, 1.0]).unwrap();
        }
        assert_eq!(o.query_count(), 1000);
    }

    #[test]
    fn rejects_non_finite_input_without_counting() {
        let o = bowl(2);
        assert!(matches!(
            o.evaluate(&[f64::NAN, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(o.evaluate(&[1.0]), Err(Error::InvalidInput(_))));
        assert_eq!(o.query_count(), 0);
    }

    #[test]
    fn non_finite_value_is_oracle_failure() {
        let o = ZeroOrderOracle::from_fn(1, |x| 1.0 / x[0]);
        match o.evaluate(&[0.0]) {
            Err(Error::OracleFailure { point, value }) => {
                assert_eq!(point, vec![0.0]);
                assert!(value.is_infinite());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(o.query_count(), 1);
    }

    #[test]
    fn deterministic_for_fixed_point() {
        let o = ZeroOrderOracle::from_fn(2, |x| (x[0] * 1.3).sin() + x[1].exp());
        let a = o.evaluate(&[0.3, -0.7]).unwrap();
        let b = o.evaluate(&[0.3, -0.7]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn counter_exact_under_concurrency() {
        use rayon::prelude::*;
        let o = bowl(2);
        (0..10_000).into_par_iter().for_each(|i| {
            o.evaluate(&[i as f64, 1.0]).unwrap();
        });
        assert_eq!(o.query_count(), 10_000);
    }
}
