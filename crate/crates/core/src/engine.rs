//! Non-reversible parallel tempering.
//!
//! Each sweep runs one local exploration step per chain, then attempts swaps
//! between neighbouring chains. Under the deterministic even-odd scheme the
//! swap set alternates between even and odd neighbour pairs; the reversible
//! baseline picks one of the two sets at random each sweep.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::paths::{AnnealingCoords, AnnealingPath, LogDensities};
use crate::rng::{stream, Purpose};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Parity of the 1-based sweep index `m`.
    pub fn of_sweep(m: u64) -> Self {
        if m.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    fn contains(self, n: usize) -> bool {
        n.is_multiple_of(2) == (self == Parity::Even)
    }
}

/// How the swap set is chosen each sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommunicationScheme {
    /// Even pairs on even sweeps, odd pairs on odd sweeps.
    #[default]
    DeterministicEvenOdd,
    /// Even or odd pairs chosen uniformly at random each sweep.
    Reversible,
}

/// Chain states plus the replica bookkeeping needed to count round trips.
#[derive(Debug, Clone)]
pub struct Ensemble<S> {
    states: Vec<S>,
    log_densities: Vec<LogDensities>,
    replica_of_chain: Vec<usize>,
    direction_of_replica: Vec<Direction>,
    sweeps: u64,
}

impl<S: Clone> Ensemble<S> {
    /// Every chain starts at a copy of `state`, every replica heading up.
    pub fn new<M: Model<State = S>>(model: &M, chains: usize, state: S) -> Result<Self> {
        Self::from_states(model, vec![state; chains])
    }

    pub fn from_states<M: Model<State = S>>(model: &M, states: Vec<S>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidArgument("an ensemble needs at least two chains".into()));
        }
        let log_densities = states.iter().map(|s| model.log_densities(s)).collect();
        let n = states.len();
        Ok(Self {
            states,
            log_densities,
            replica_of_chain: (0..n).collect(),
            direction_of_replica: vec![Direction::Up; n],
            sweeps: 0,
        })
    }

    /// Starting ensemble from the model's default state.
    pub fn initial<M: Model<State = S>>(model: &M, chains: usize, seed: u64) -> Result<Self> {
        let states = (0..chains)
            .map(|c| model.initial_state(&mut stream(seed, Purpose::Init, c as u64, 0)))
            .collect();
        Self::from_states(model, states)
    }

    pub fn chains(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn log_densities(&self) -> &[LogDensities] {
        &self.log_densities
    }

    pub fn replica_of_chain(&self) -> &[usize] {
        &self.replica_of_chain
    }

    pub fn direction_of_replica(&self) -> &[Direction] {
        &self.direction_of_replica
    }

    /// Sweeps completed over the ensemble's lifetime.
    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    /// Parity of the next sweep.
    pub fn sweep_parity(&self) -> Parity {
        Parity::of_sweep(self.sweeps + 1)
    }

    fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.replica_of_chain.len()];
        self.replica_of_chain.iter().all(|&r| r < seen.len() && !std::mem::replace(&mut seen[r], true))
    }
}

/// Log acceptance probability of swapping the states of two chains at
/// coordinates `eta_lo`, `eta_hi`.
pub fn log_accept(
    eta_lo: AnnealingCoords,
    eta_hi: AnnealingCoords,
    w_lo: LogDensities,
    w_hi: LogDensities,
) -> Result<f64> {
    if !(w_lo.is_finite() && w_hi.is_finite() && eta_lo.is_finite() && eta_hi.is_finite()) {
        return Err(Error::NonFinite("swap acceptance"));
    }
    let proposed = eta_lo.dot(w_hi) + eta_hi.dot(w_lo);
    let current = eta_lo.dot(w_lo) + eta_hi.dot(w_hi);
    Ok((proposed - current).min(0.0))
}

/// Log acceptance of swapping chains at `t_lo` and `t_hi` on `path`.
pub fn swap_log_accept(
    path: &AnnealingPath,
    t_lo: f64,
    t_hi: f64,
    w_lo: LogDensities,
    w_hi: LogDensities,
) -> Result<f64> {
    if !(t_lo.is_finite() && t_hi.is_finite()) {
        return Err(Error::NonFinite("swap acceptance"));
    }
    if t_lo > t_hi {
        return Err(Error::InvalidArgument(format!("t_lo {t_lo} exceeds t_hi {t_hi}")));
    }
    log_accept(path.eta(t_lo)?, path.eta(t_hi)?, w_lo, w_hi)
}

/// Cumulative `1 - alpha_n` per neighbour pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub sum_rejection: Vec<f64>,
    pub sweeps: u64,
}

impl RejectionStats {
    pub fn new(pairs: usize) -> Self {
        Self { sum_rejection: vec![0.0; pairs], sweeps: 0 }
    }

    pub fn record(&mut self, alphas: &[f64]) {
        for (s, a) in self.sum_rejection.iter_mut().zip(alphas) {
            *s += 1.0 - a;
        }
        self.sweeps += 1;
    }

    /// Mean rejection per pair.
    pub fn means(&self) -> Vec<f64> {
        let m = self.sweeps.max(1) as f64;
        self.sum_rejection.iter().map(|s| s / m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundTripLog {
    pub completed_round_trips: u64,
    /// Cumulative count after each sweep of the run.
    pub cumulative: Vec<u64>,
}

/// Per-sweep result.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Acceptance probability of every neighbour pair.
    pub alphas: Vec<f64>,
    pub parity: Parity,
    pub round_trips: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub seed: u64,
    pub scheme: CommunicationScheme,
    /// Explore chains on the rayon pool.
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { seed: 0, scheme: CommunicationScheme::DeterministicEvenOdd, parallel: true }
    }
}

/// One exploration + communication sweep over pre-evaluated coordinates.
pub fn deo_sweep<M: Model>(
    model: &M,
    ensemble: &mut Ensemble<M::State>,
    etas: &[AnnealingCoords],
    opts: &SweepOptions,
) -> Result<SweepOutcome> {
    let chains = ensemble.chains();
    if etas.len() != chains {
        return Err(Error::Dimension { expected: chains, got: etas.len() });
    }
    let m = ensemble.sweeps + 1;

    let explore_one = |(c, (state, w)): (usize, (&mut M::State, &mut LogDensities))| -> Result<()> {
        let mut rng = stream(opts.seed, Purpose::Explore, c as u64, m);
        model.explore(etas[c], state, &mut rng)?;
        *w = model.log_densities(state);
        Ok(())
    };
    let pairs = ensemble.states.iter_mut().zip(ensemble.log_densities.iter_mut());
    if opts.parallel {
        let items: Vec<_> = pairs.enumerate().collect();
        items.into_par_iter().map(explore_one).collect::<Result<()>>()?;
    } else {
        pairs.enumerate().try_for_each(explore_one)?;
    }

    let parity = match opts.scheme {
        CommunicationScheme::DeterministicEvenOdd => Parity::of_sweep(m),
        CommunicationScheme::Reversible => {
            if stream(opts.seed, Purpose::Parity, m, 0).random::<bool>() {
                Parity::Even
            } else {
                Parity::Odd
            }
        }
    };

    let w = &ensemble.log_densities;
    let alphas = (0..chains - 1)
        .map(|n| log_accept(etas[n], etas[n + 1], w[n], w[n + 1]).map(f64::exp))
        .collect::<Result<Vec<f64>>>()?;

    let mut swap_rng = stream(opts.seed, Purpose::Swap, m, 0);
    for (n, &alpha) in alphas.iter().enumerate() {
        let u: f64 = swap_rng.random();
        if parity.contains(n) && u <= alpha {
            ensemble.states.swap(n, n + 1);
            ensemble.log_densities.swap(n, n + 1);
            ensemble.replica_of_chain.swap(n, n + 1);
        }
    }
    debug_assert!(ensemble.is_permutation());

    let mut round_trips = 0;
    let top = ensemble.replica_of_chain[chains - 1];
    ensemble.direction_of_replica[top] = Direction::Down;
    let bottom = ensemble.replica_of_chain[0];
    if ensemble.direction_of_replica[bottom] == Direction::Down {
        ensemble.direction_of_replica[bottom] = Direction::Up;
        round_trips += 1;
    }
    ensemble.sweeps = m;
    Ok(SweepOutcome { alphas, parity, round_trips })
}

/// What `run_nrpt` keeps besides the rejection statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Recording {
    /// Target-chain state after each sweep.
    pub target_trace: bool,
    /// `W(x)` of every chain after each sweep.
    pub chain_log_densities: bool,
    /// `replica_of_chain` after each sweep.
    pub replicas: bool,
}

#[derive(Debug, Clone)]
pub struct NrptRun<S> {
    pub ensemble: Ensemble<S>,
    pub rejection: RejectionStats,
    pub round_trips: RoundTripLog,
    pub target_trace: Vec<S>,
    /// Indexed `[chain][sweep]`.
    pub chain_log_densities: Vec<Vec<LogDensities>>,
    pub replica_log: Vec<Vec<usize>>,
    pub exploration_steps: u64,
}

impl<S> NrptRun<S> {
    /// Completed round trips per sweep.
    pub fn round_trip_rate(&self) -> f64 {
        self.round_trips.completed_round_trips as f64 / self.rejection.sweeps.max(1) as f64
    }
}

/// Runs `sweeps` sweeps of parallel tempering on `schedule` along `path`.
pub fn run_nrpt<M: Model>(
    model: &M,
    path: &AnnealingPath,
    schedule: &Schedule,
    mut ensemble: Ensemble<M::State>,
    sweeps: usize,
    opts: &SweepOptions,
    recording: Recording,
) -> Result<NrptRun<M::State>> {
    if sweeps == 0 {
        return Err(Error::InvalidArgument("need at least one sweep".into()));
    }
    let chains = ensemble.chains();
    if schedule.len() != chains {
        return Err(Error::Dimension { expected: chains, got: schedule.len() });
    }
    let etas = path.etas(schedule.points())?;
    for eta in &etas {
        model.check(*eta)?;
    }

    let mut rejection = RejectionStats::new(chains - 1);
    let mut round_trips = RoundTripLog { completed_round_trips: 0, cumulative: Vec::with_capacity(sweeps) };
    let mut target_trace = Vec::new();
    let mut chain_log_densities = vec![Vec::new(); if recording.chain_log_densities { chains } else { 0 }];
    let mut replica_log = Vec::new();

    for _ in 0..sweeps {
        let out = deo_sweep(model, &mut ensemble, &etas, opts)?;
        rejection.record(&out.alphas);
        round_trips.completed_round_trips += out.round_trips;
        round_trips.cumulative.push(round_trips.completed_round_trips);
        if recording.target_trace {
            target_trace.push(ensemble.states[chains - 1].clone());
        }
        if recording.chain_log_densities {
            for (trace, w) in chain_log_densities.iter_mut().zip(&ensemble.log_densities) {
                trace.push(*w);
            }
        }
        if recording.replicas {
            replica_log.push(ensemble.replica_of_chain.clone());
        }
    }
    Ok(NrptRun {
        ensemble,
        rejection,
        round_trips,
        target_trace,
        chain_log_densities,
        replica_log,
        exploration_steps: (sweeps * chains) as u64,
    })
}

/// `(2 + 2 sum r/(1 - r))^-1`; zero once any pair always rejects.
pub fn predicted_round_trip_rate(rejections: &[f64]) -> f64 {
    if rejections.iter().any(|&r| r >= 1.0) {
        return 0.0;
    }
    let odds: f64 = rejections.iter().map(|r| r / (1.0 - r)).sum();
    1.0 / (2.0 + 2.0 * odds)
}
