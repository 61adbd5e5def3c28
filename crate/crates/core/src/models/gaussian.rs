use rand::Rng;
use rand_distr::StandardNormal;

use super::{ExplorationKernel, Model};
use crate::error::{Error, Result};
use crate::paths::{AnnealingCoords, LogDensities};

/// Isotropic Gaussians `N(mu0 1_d, sigma^2 I)` and `N(mu1 1_d, sigma^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPair {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub dim: usize,
    kernel: ExplorationKernel,
}

/// Closed form of the tempered law `N(mean 1_d, variance I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperedGaussian {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPair {
    pub fn new(mu0: f64, mu1: f64, sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain { value: sigma, domain: "sigma > 0" });
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(mu0.is_finite() && mu1.is_finite()) {
            return Err(Error::NonFinite("gaussian means"));
        }
        Ok(Self { mu0, mu1, sigma, dim, kernel: ExplorationKernel::IidClosedForm })
    }

    /// Swaps the exact sampler for random-walk Metropolis.
    pub fn with_random_walk(mut self, step_size: f64, steps: usize) -> Self {
        self.kernel = ExplorationKernel::RandomWalkMetropolis { step_size, steps: steps.max(1) };
        self
    }

    /// Separation `|mu1 - mu0| / sigma`.
    pub fn z(&self) -> f64 {
        (self.mu1 - self.mu0).abs() / self.sigma
    }

    /// Completes the square in `eta0 W0 + eta1 W1`.
    pub fn tempered(&self, eta: AnnealingCoords) -> Result<TemperedGaussian> {
        self.check(eta)?;
        let precision_weight = eta.eta0 + eta.eta1;
        Ok(TemperedGaussian {
            mean: (eta.eta0 * self.mu0 + eta.eta1 * self.mu1) / precision_weight,
            variance: self.sigma * self.sigma / precision_weight,
        })
    }

    fn w(&self, x: &[f64], mu: f64) -> f64 {
        let ss: f64 = x.iter().map(|xi| (xi - mu) * (xi - mu)).sum();
        -ss / (2.0 * self.sigma * self.sigma)
    }
}

impl Model for GaussianPair {
    type State = Vec<f64>;

    fn log_densities(&self, x: &Vec<f64>) -> LogDensities {
        LogDensities::new(self.w(x, self.mu0), self.w(x, self.mu1))
    }

    fn is_normalizable(&self, eta: AnnealingCoords) -> bool {
        eta.eta0 + eta.eta1 > 0.0
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn kernel(&self) -> ExplorationKernel {
        self.kernel
    }

    fn explore<R: Rng + ?Sized>(
        &self,
        eta: AnnealingCoords,
        state: &mut Vec<f64>,
        rng: &mut R,
    ) -> Result<()> {
        match self.kernel {
            ExplorationKernel::RandomWalkMetropolis { step_size, steps } => {
                self.check(eta)?;
                let mut current = eta.dot(self.log_densities(state));
                let mut proposal = state.clone();
                for _ in 0..steps {
                    for (p, x) in proposal.iter_mut().zip(state.iter()) {
                        *p = x + step_size * rng.sample::<f64, _>(StandardNormal);
                    }
                    let next = eta.dot(self.log_densities(&proposal));
                    if rng.random::<f64>().ln() < next - current {
                        state.copy_from_slice(&proposal);
                        current = next;
                    }
                }
                Ok(())
            }
            _ => {
                let law = self.tempered(eta)?;
                let sd = law.variance.sqrt();
                for x in state.iter_mut() {
                    *x = law.mean + sd * rng.sample::<f64, _>(StandardNormal);
                }
                Ok(())
            }
        }
    }

    fn sample_exact<R: Rng + ?Sized>(
        &self,
        eta: AnnealingCoords,
        rng: &mut R,
    ) -> Option<Result<Vec<f64>>> {
        Some(self.tempered(eta).map(|law| {
            let sd = law.variance.sqrt();
            (0..self.dim).map(|_| law.mean + sd * rng.sample::<f64, _>(StandardNormal)).collect()
        }))
    }
}
