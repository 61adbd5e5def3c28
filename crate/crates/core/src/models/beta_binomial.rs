use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{ExplorationKernel, Model};
use crate::error::{Error, Result};
use crate::paths::{AnnealingCoords, LogDensities};

/// Beta prior with a binomial likelihood summarized by `successes` out of
/// `trials`. Reference is the prior, target the conjugate posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBinomialPair {
    pub a0: f64,
    pub b0: f64,
    pub successes: u64,
    pub trials: u64,
}

impl BetaBinomialPair {
    pub fn new(a0: f64, b0: f64, successes: u64, trials: u64) -> Result<Self> {
        if !(a0 > 0.0 && b0 > 0.0 && a0.is_finite() && b0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "prior parameters must be positive, got ({a0}, {b0})"
            )));
        }
        if successes > trials {
            return Err(Error::InvalidArgument(format!(
                "successes {successes} exceed trials {trials}"
            )));
        }
        Ok(Self { a0, b0, successes, trials })
    }

    /// Beta(180, 840) prior with 140000 successes in 200000 trials.
    pub fn reference_problem() -> Self {
        Self::new(180.0, 840.0, 140_000, 200_000).expect("valid constants")
    }

    /// Exponents of `log p` and `log(1 - p)` in `W0` and `W1`.
    fn exponents(&self) -> ((f64, f64), (f64, f64)) {
        let s = self.successes as f64;
        let f = (self.trials - self.successes) as f64;
        ((self.a0 - 1.0, self.b0 - 1.0), (self.a0 + s - 1.0, self.b0 + f - 1.0))
    }

    /// Parameters `(alpha, beta)` of the tempered Beta law at `eta`.
    pub fn tempered_params(&self, eta: AnnealingCoords) -> (f64, f64) {
        let ((p0, q0), (p1, q1)) = self.exponents();
        (p0 * eta.eta0 + p1 * eta.eta1 + 1.0, q0 * eta.eta0 + q1 * eta.eta1 + 1.0)
    }

    pub fn tempered(&self, eta: AnnealingCoords) -> Result<(f64, f64)> {
        self.check(eta)?;
        Ok(self.tempered_params(eta))
    }
}

impl Model for BetaBinomialPair {
    type State = f64;

    fn log_densities(&self, p: &f64) -> LogDensities {
        let ((p0, q0), (p1, q1)) = self.exponents();
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        LogDensities::new(p0 * lp + q0 * lq, p1 * lp + q1 * lq)
    }

    fn is_normalizable(&self, eta: AnnealingCoords) -> bool {
        let (a, b) = self.tempered_params(eta);
        a > 0.0 && b > 0.0
    }

    fn initial_state<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
        0.5
    }

    fn kernel(&self) -> ExplorationKernel {
        ExplorationKernel::IidClosedForm
    }

    fn explore<R: Rng + ?Sized>(&self, eta: AnnealingCoords, state: &mut f64, rng: &mut R) -> Result<()> {
        *state = self.sample_exact(eta, rng).expect("closed form available")?;
        Ok(())
    }

    fn sample_exact<R: Rng + ?Sized>(&self, eta: AnnealingCoords, rng: &mut R) -> Option<Result<f64>> {
        Some(self.tempered(eta).and_then(|(a, b)| {
            let law = Beta::new(a, b).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            // keep draws strictly inside (0, 1) so log-densities stay finite
            Ok(law.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
        }))
    }
}
