use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Regularity constants of an objective.
///
/// `l` bounds the gradient Lipschitz constant, `rho` the Hessian Lipschitz
/// constant and `b` the gradient norm. For testbed problems the constants hold
/// on the ball of radius `domain_radius` around the origin; outside it the
/// guarantees that consume them are void.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub d: usize,
    pub l: f64,
    pub rho: f64,
    pub b: f64,
    pub f_star_hint: Option<f64>,
    pub domain_radius: Option<f64>,
}

impl ProblemSpec {
    pub fn new(d: usize, l: f64, rho: f64, b: f64) -> Result<Self> {
        let spec = Self {
            d,
            l,
            rho,
            b,
            f_star_hint: None,
            domain_radius: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config {
                field: "d",
                reason: "dimension must be at least 1".into(),
            });
        }
        for (field, value) in [("l", self.l), ("rho", self.rho), ("b", self.b)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config {
                    field,
                    reason: format!("must be finite and positive, got {value}"),
                });
            }
        }
        if let Some(r) = self.domain_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config {
                    field: "domain_radius",
                    reason: format!("must be finite and positive, got {r}"),
                });
            }
        }
        Ok(())
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        match self.domain_radius {
            Some(r) => crate::linalg::norm(x) <= r,
            None => true,
        }
    }
}
