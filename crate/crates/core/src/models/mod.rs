//! Target problems.
//!
//! A model supplies the reference and target log-densities `W(x)`, decides
//! which annealing coordinates give a normalizable tempered density, and owns
//! the local exploration kernel that leaves `pi_eta ∝ exp(eta · W)` invariant.

mod beta_binomial;
mod gaussian;
mod mixture;

use std::fmt::Debug;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::paths::{AnnealingCoords, LogDensities};

pub use beta_binomial::BetaBinomialPair;
pub use gaussian::{GaussianPair, TemperedGaussian};
pub use mixture::{MixtureModel, MixtureState};

/// Local exploration kernel families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplorationKernel {
    /// Exact independent draw from the tempered law.
    IidClosedForm,
    /// Gaussian random-walk Metropolis with `steps` proposals per call.
    RandomWalkMetropolis { step_size: f64, steps: usize },
    /// Gibbs sweep over blocks, plus any Metropolis–Hastings refinements.
    GibbsComposite,
}

pub trait Model: Send + Sync {
    type State: Clone + Send + Sync + Debug;

    fn log_densities(&self, x: &Self::State) -> LogDensities;

    /// Whether `exp(eta · W)` is integrable.
    fn is_normalizable(&self, eta: AnnealingCoords) -> bool;

    /// Starting state for every chain.
    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn kernel(&self) -> ExplorationKernel;

    /// One application of the exploration kernel at `eta`.
    fn explore<R: Rng + ?Sized>(
        &self,
        eta: AnnealingCoords,
        state: &mut Self::State,
        rng: &mut R,
    ) -> Result<()>;

    /// Exact draw from `pi_eta`, for models where one is available.
    fn sample_exact<R: Rng + ?Sized>(
        &self,
        _eta: AnnealingCoords,
        _rng: &mut R,
    ) -> Option<Result<Self::State>> {
        None
    }

    fn check(&self, eta: AnnealingCoords) -> Result<()> {
        if eta.is_finite() && self.is_normalizable(eta) {
            Ok(())
        } else {
            Err(Error::NonNormalizable { eta0: eta.eta0, eta1: eta.eta1 })
        }
    }
}

/// `explore` as a free function, matching the kernel-centric call shape.
pub fn explore<M: Model, R: Rng + ?Sized>(
    model: &M,
    eta: AnnealingCoords,
    state: &mut M::State,
    rng: &mut R,
) -> Result<()> {
    model.explore(eta, state, rng)
}

/// Reads one real observation per line. Blank lines, `#` comments and a
/// non-numeric header line are skipped.
pub fn load_observations(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    parse_observations(&text)
}

pub fn parse_observations(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => return Err(Error::NonFinite("observation")),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::InvalidArgument(format!(
                    "line {}: cannot parse {field:?} as a number",
                    i + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    Ok(out)
}

/// Recession velocities (1000 km/s) of 82 galaxies in the Corona Borealis
/// region.
pub fn galaxy_velocities() -> Vec<f64> {
    parse_observations(include_str!("../../data/galaxy.csv"))
        .expect("bundled galaxy data parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_header_and_comments() {
        let v = parse_observations("velocity\n# c\n1.5\n\n2.0,extra\n").unwrap();
        assert_eq!(v, vec![1.5, 2.0]);
        assert!(parse_observations("x\n1\nfoo\n").is_err());
        assert!(parse_observations("").is_err());
    }

    #[test]
    fn galaxy_data_bundled() {
        let v = galaxy_velocities();
        assert_eq!(v.len(), 82);
        assert!(v.iter().all(|&x| (9.0..35.0).contains(&x)));
    }
}
