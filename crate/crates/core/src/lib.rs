//! Non-reversible parallel tempering with tunable spline annealing paths.
//!
//! An annealing path `pi_t ∝ exp(eta(t) · W(x))` interpolates between a
//! reference `W0` and a target `W1`. This crate provides the sampler
//! ([`engine`]), schedule equalization ([`schedule`]), a symmetric-KL
//! surrogate for path quality ([`objective`]) and the loop that tunes both
//! ([`tuner`]).

pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod models;
pub mod objective;
pub mod paths;
pub mod rng;
pub mod schedule;
pub mod tuner;

pub use engine::{run_nrpt, CommunicationScheme, Ensemble, NrptRun, Recording, SweepOptions};
pub use error::{Error, Result};
pub use models::Model;
pub use paths::{AnnealingCoords, AnnealingPath, LogDensities, SplineKnots};
pub use schedule::Schedule;
pub use tuner::{path_opt_nrpt, TuningConfig, TuningTrace};
