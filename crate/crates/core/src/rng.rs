use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// The single random stream of a run.
///
/// Every random draw of a run (Gaussian directions, ball perturbations)
/// comes from one `SeededRng`, so a seed reproduces the whole trace.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn fill_standard_gaussian(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }

    pub fn sample_standard_gaussian(&mut self, d: usize) -> Result<Vec<f64>> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        let mut u = vec![0.0; d];
        self.fill_standard_gaussian(&mut u);
        Ok(u)
    }

    /// Uniform draw from the closed `d`-ball of radius `r` around the origin.
    ///
    /// Normalizes a Gaussian direction and scales it by `r * U^(1/d)`.
    pub fn sample_uniform_ball(&mut self, d: usize, r: f64) -> Result<Vec<f64>> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ball radius must be finite and non-negative, got {r}"
            )));
        }
        let mut dir = vec![0.0; d];
        let len = loop {
            self.fill_standard_gaussian(&mut dir);
            let len = crate::linalg::norm(&dir);
            if len > 0.0 {
                break len;
            }
        };
        let radius = r * self.uniform().powf(1.0 / d as f64);
        let mut scale = radius / len;
        // Rounding in the normalization can push the norm a hair above r.
        let scaled = len * scale;
        if scaled > r {
            scale *= r / scaled;
        }
        for v in &mut dir {
            *v *= scale;
        }
        while crate::linalg::norm(&dir) > r {
            for v in &mut dir {
                *v *= 1.0 - f64::EPSILON;
            }
        }
        Ok(dir)
    }
}
