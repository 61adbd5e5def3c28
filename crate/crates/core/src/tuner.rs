//! Joint schedule and path tuning: alternate NRPT rounds, schedule
//! equalization and SKL-gradient steps on the spline knots.

use serde::{Deserialize, Serialize};

use crate::diagnostics::BarrierReport;
use crate::engine::{run_nrpt, CommunicationScheme, Ensemble, Recording, SweepOptions};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::objective::{apply_knot_update, estimate_skl_gradient, knots_to_log, GradientScaling, OptimizerState, StepStatus};
use crate::paths::{AnnealingPath, SplineKnots};
use crate::schedule::{fit_cumulative_barrier, update_schedule, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    /// Number of intervals `N`; the ensemble has `N + 1` chains.
    pub chains: usize,
    /// Spline segments `K`.
    pub knots: usize,
    /// Tuning rounds `S`.
    pub rounds: usize,
    /// Sweeps per round `M`.
    pub sweeps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub scheme: CommunicationScheme,
    #[serde(default)]
    pub scaling: GradientScaling,
    /// Gradient steps on the knots; off means schedule adaptation only.
    #[serde(default = "yes")]
    pub adapt_path: bool,
    #[serde(default = "yes")]
    pub adapt_schedule: bool,
}

fn yes() -> bool {
    true
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            chains: 50,
            knots: 4,
            rounds: 50,
            sweeps: 300,
            learning_rate: 0.2,
            seed: 1,
            scheme: CommunicationScheme::DeterministicEvenOdd,
            scaling: GradientScaling::KnotRelative,
            adapt_path: true,
            adapt_schedule: true,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.chains < 1 {
            return bad("need at least one interval");
        }
        if self.knots < 1 {
            return bad("need at least one spline segment");
        }
        if self.rounds < 1 || self.sweeps < 1 {
            return bad("rounds and sweeps must be positive");
        }
        if self.adapt_path && self.sweeps < 2 {
            return bad("gradient estimation needs at least two sweeps per round");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    /// Total sweeps `S * M`.
    pub fn budget(&self) -> usize {
        self.rounds * self.sweeps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Schedule and path used during the round.
    pub schedule: Schedule,
    pub path_knots: Option<SplineKnots>,
    pub rejections: Vec<f64>,
    pub round_trips: u64,
    pub cumulative_round_trips: u64,
    pub round_trip_rate: f64,
    pub barrier: BarrierReport,
    pub skl_estimate: Option<f64>,
    pub gradient_norm: Option<f64>,
    pub step_skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TuningTrace {
    pub rounds: Vec<RoundRecord>,
    pub exploration_steps: u64,
    pub final_schedule: Option<Schedule>,
    pub final_knots: Option<SplineKnots>,
}

impl TuningTrace {
    pub fn total_round_trips(&self) -> u64 {
        self.rounds.last().map_or(0, |r| r.cumulative_round_trips)
    }

    /// Mean round-trip rate over the last `n` rounds.
    pub fn tail_rate(&self, n: usize) -> f64 {
        let tail = &self.rounds[self.rounds.len().saturating_sub(n)..];
        tail.iter().map(|r| r.round_trip_rate).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Result of a completed tuning run.
#[derive(Debug, Clone)]
pub struct TuningRun<S> {
    pub trace: TuningTrace,
    pub path: AnnealingPath,
    pub schedule: Schedule,
    pub ensemble: Ensemble<S>,
}

/// A failed run keeps the rounds that completed.
#[derive(Debug, thiserror::Error)]
#[error("tuning aborted after {} rounds: {source}", partial.rounds.len())]
pub struct TuningError {
    pub partial: TuningTrace,
    #[source]
    pub source: Error,
}

/// Runs the tuning loop from the linear path (as a `K`-segment spline when
/// `adapt_path`) on a uniform schedule.
pub fn path_opt_nrpt<M: Model>(model: &M, config: &TuningConfig) -> std::result::Result<TuningRun<M::State>, TuningError> {
    let fail = |source| TuningError { partial: TuningTrace::default(), source };
    config.validate().map_err(fail)?;
    let path = if config.adapt_path {
        AnnealingPath::Spline(SplineKnots::linear(config.knots).map_err(fail)?)
    } else {
        AnnealingPath::Linear
    };
    let ensemble = Ensemble::initial(model, config.chains + 1, config.seed).map_err(fail)?;
    path_opt_nrpt_from(model, config, path, ensemble)
}

/// Tuning loop from an explicit initial path and ensemble.
pub fn path_opt_nrpt_from<M: Model>(
    model: &M,
    config: &TuningConfig,
    mut path: AnnealingPath,
    mut ensemble: Ensemble<M::State>,
) -> std::result::Result<TuningRun<M::State>, TuningError> {
    let mut trace = TuningTrace::default();
    macro_rules! tri {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(source) => return Err(TuningError { partial: trace, source }),
            }
        };
    }
    tri!(config.validate());
    if config.adapt_path && !matches!(path, AnnealingPath::Spline(_)) {
        tri!(Err(Error::InvalidArgument("path adaptation needs a spline path".into())));
    }
    if ensemble.chains() != config.chains + 1 {
        tri!(Err(Error::Dimension { expected: config.chains + 1, got: ensemble.chains() }));
    }

    let mut schedule = tri!(Schedule::uniform(config.chains));
    let dim = match &path {
        AnnealingPath::Spline(phi) => 2 * (phi.segments() - 1),
        _ => 0,
    };
    let mut optimizer = OptimizerState::new(dim, config.learning_rate);
    optimizer.scaling = config.scaling;
    let recording = Recording { chain_log_densities: config.adapt_path, ..Default::default() };
    let mut cumulative = 0;

    for round in 0..config.rounds {
        let opts = SweepOptions {
            // the ensemble's sweep counter keeps streams distinct across rounds
            seed: config.seed,
            scheme: config.scheme,
            parallel: true,
        };
        let run = tri!(run_nrpt(model, &path, &schedule, ensemble, config.sweeps, &opts, recording));
        trace.exploration_steps += run.exploration_steps;
        let rejections = run.rejection.means();
        let trips = run.round_trips.completed_round_trips;
        cumulative += trips;
        let rate = run.round_trip_rate();
        let mut record = RoundRecord {
            round: round + 1,
            schedule: schedule.clone(),
            path_knots: match &path {
                AnnealingPath::Spline(phi) => Some(phi.clone()),
                _ => None,
            },
            barrier: BarrierReport::new(&rejections, rate),
            rejections,
            round_trips: trips,
            cumulative_round_trips: cumulative,
            round_trip_rate: rate,
            skl_estimate: None,
            gradient_norm: None,
            step_skipped: false,
        };
        ensemble = run.ensemble;

        let next_schedule = if config.adapt_schedule {
            let barrier = tri!(fit_cumulative_barrier(&schedule, &record.rejections));
            tri!(update_schedule(&barrier, config.chains))
        } else {
            schedule.clone()
        };

        if config.adapt_path {
            let AnnealingPath::Spline(phi) = &path else { unreachable!() };
            // samples were drawn under the round's own schedule and knots
            let grad = tri!(estimate_skl_gradient(phi, &schedule, &run.chain_log_densities));
            record.skl_estimate = Some(grad.value);
            record.gradient_norm = Some(grad.norm());
            if dim > 0 {
                let psi = knots_to_log(phi);
                let (psi_next, status) = tri!(optimizer.step(&psi, &grad.gradient));
                record.step_skipped = status == StepStatus::Skipped;
                let next = tri!(apply_knot_update(phi, &psi_next));
                path = AnnealingPath::Spline(next);
            }
        }
        schedule = next_schedule;
        log::debug!(
            "round {}: rate {:.4}, barrier {:.3}, skl {:?}",
            record.round,
            record.round_trip_rate,
            record.barrier.rejection_sum,
            record.skl_estimate
        );
        trace.rounds.push(record);
    }
    trace.final_schedule = Some(schedule.clone());
    trace.final_knots = match &path {
        AnnealingPath::Spline(phi) => Some(phi.clone()),
        _ => None,
    };
    Ok(TuningRun { trace, path, schedule, ensemble })
}

/// Methods compared by `run_benchmark`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Tuned spline path with the configured `K`.
    Spline,
    /// Linear path, non-reversible swaps, schedule adaptation.
    NrptLinear,
    /// Linear path, reversible swaps, schedule adaptation.
    ReversibleLinear,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Spline => "spline",
            Method::NrptLinear => "nrpt-linear",
            Method::ReversibleLinear => "reversible-linear",
        }
    }

    pub fn configure(self, base: &TuningConfig) -> TuningConfig {
        let mut c = base.clone();
        match self {
            Method::Spline => {
                c.adapt_path = true;
                c.scheme = CommunicationScheme::DeterministicEvenOdd;
            }
            Method::NrptLinear => {
                c.adapt_path = false;
                c.scheme = CommunicationScheme::DeterministicEvenOdd;
            }
            Method::ReversibleLinear => {
                c.adapt_path = false;
                c.scheme = CommunicationScheme::Reversible;
            }
        }
        c
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spline" => Ok(Method::Spline),
            "nrpt-linear" => Ok(Method::NrptLinear),
            "reversible-linear" => Ok(Method::ReversibleLinear),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: Method,
    /// Cumulative round trips after each round.
    pub cumulative_round_trips: Vec<u64>,
    pub final_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub sweeps_per_round: usize,
    pub curves: Vec<MethodCurve>,
    /// `1 / (2 + 2 Lambda)` for the linear path when `Lambda` is known.
    pub linear_bound_rate: Option<f64>,
}

impl BenchmarkTable {
    pub fn total(&self, method: Method) -> Option<u64> {
        self.curves
            .iter()
            .find(|c| c.method == method)
            .and_then(|c| c.cumulative_round_trips.last().copied())
    }
}

/// Runs every method with the same budget and seed.
pub fn run_benchmark<M: Model>(
    model: &M,
    config: &TuningConfig,
    methods: &[Method],
    linear_barrier: Option<f64>,
) -> Result<BenchmarkTable> {
    let curves = methods
        .iter()
        .map(|&method| {
            let run = path_opt_nrpt(model, &method.configure(config)).map_err(|e| e.source)?;
            Ok(MethodCurve {
                method,
                cumulative_round_trips: run.trace.rounds.iter().map(|r| r.cumulative_round_trips).collect(),
                final_rate: run.trace.rounds.last().map_or(0.0, |r| r.round_trip_rate),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkTable {
        sweeps_per_round: config.sweeps,
        curves,
        linear_bound_rate: linear_barrier.map(|l| 1.0 / (2.0 + 2.0 * l)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{ks_critical_value, ks_statistic};
    use crate::models::{BetaBinomialPair, GaussianPair};
    use statrs::distribution::{Beta, ContinuousCDF, Normal};

    fn small(seed: u64) -> TuningConfig {
        TuningConfig { chains: 10, knots: 3, rounds: 6, sweeps: 100, seed, ..Default::default() }
    }

    #[test]
    fn single_round_moves_at_most_one_step() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let cfg = TuningConfig { rounds: 1, ..small(1) };
        let run = path_opt_nrpt(&m, &cfg).unwrap();
        assert_eq!(run.trace.rounds.len(), 1);
        let before = knots_to_log(&SplineKnots::linear(3).unwrap());
        let after = knots_to_log(run.trace.final_knots.as_ref().unwrap());
        // a single Adagrad step with |g~| < 1 moves each log-coordinate by at most gamma
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() <= cfg.learning_rate + 1e-9, "{a} -> {b}");
        }
        assert_eq!(run.trace.exploration_steps, (cfg.sweeps * (cfg.chains + 1)) as u64);
    }

    #[test]
    fn budget_accounting() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let cfg = small(2);
        let run = path_opt_nrpt(&m, &cfg).unwrap();
        assert_eq!(run.trace.exploration_steps, (cfg.rounds * cfg.sweeps * (cfg.chains + 1)) as u64);
        assert_eq!(run.trace.rounds.len(), cfg.rounds);
        let cum: Vec<u64> = run.trace.rounds.iter().map(|r| r.cumulative_round_trips).collect();
        assert!(cum.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn identical_endpoints_keep_uniform_schedule() {
        // flat prior, no data: W0 = W1 = 0, so every tempered law is the same
        let m = BetaBinomialPair::new(1.0, 1.0, 0, 0).unwrap();
        let run = path_opt_nrpt(&m, &small(3)).unwrap();
        assert_eq!(run.trace.final_knots.unwrap(), SplineKnots::linear(3).unwrap());
        let uniform = Schedule::uniform(10).unwrap();
        for (a, b) in run.schedule.points().iter().zip(uniform.points()) {
            assert!((a - b).abs() < 1e-9);
        }
        for r in &run.trace.rounds {
            assert!(r.rejections.iter().all(|&x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let a = path_opt_nrpt(&m, &small(4)).unwrap().trace;
        let b = path_opt_nrpt(&m, &small(4)).unwrap().trace;
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_rejected() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        for cfg in [
            TuningConfig { rounds: 0, ..small(1) },
            TuningConfig { learning_rate: -1.0, ..small(1) },
            TuningConfig { sweeps: 1, ..small(1) },
            TuningConfig { knots: 0, ..small(1) },
        ] {
            let err = path_opt_nrpt(&m, &cfg).unwrap_err();
            assert!(err.partial.rounds.is_empty());
        }
    }

    #[test]
    fn error_preserves_partial_trace() {
        // a custom path outside the model's normalizable region fails on round one
        let m = BetaBinomialPair::reference_problem();
        let bad = crate::paths::CustomPath::new("dip", |t| {
            crate::AnnealingCoords::new(1.0 - t, t - 3.0 * t * (1.0 - t))
        })
        .unwrap();
        let cfg = TuningConfig { adapt_path: false, ..small(1) };
        let ens = Ensemble::initial(&m, 11, 1).unwrap();
        let err = path_opt_nrpt_from(&m, &cfg, AnnealingPath::Custom(bad), ens).unwrap_err();
        assert!(matches!(err.source, Error::NonNormalizable { .. }));
        assert!(err.partial.rounds.is_empty());
    }

    #[test]
    fn frozen_tuning_samples_target() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let run = path_opt_nrpt(&m, &small(5)).unwrap();
        let cont = run_nrpt(
            &m,
            &run.path,
            &run.schedule,
            run.ensemble,
            10_000,
            &SweepOptions { seed: 77, ..Default::default() },
            Recording { target_trace: true, ..Default::default() },
        )
        .unwrap();
        let mut xs: Vec<f64> = cont.target_trace.iter().map(|x| x[0]).collect();
        let law = Normal::new(1.0, 0.2).unwrap();
        let d = ks_statistic(&mut xs, |x| law.cdf(x));
        assert!(d < ks_critical_value(xs.len(), 1e-3), "D={d}");

        let bb = BetaBinomialPair::new(18.0, 84.0, 700, 1000).unwrap();
        let run = path_opt_nrpt(&bb, &small(6)).unwrap();
        let cont = run_nrpt(
            &bb,
            &run.path,
            &run.schedule,
            run.ensemble,
            10_000,
            &SweepOptions { seed: 78, ..Default::default() },
            Recording { target_trace: true, ..Default::default() },
        )
        .unwrap();
        let mut xs = cont.target_trace.clone();
        let law = Beta::new(718.0, 384.0).unwrap();
        let d = ks_statistic(&mut xs, |x| law.cdf(x));
        assert!(d < ks_critical_value(xs.len(), 1e-3), "D={d}");
    }

    #[test]
    fn benchmark_deterministic_and_bound_line() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let methods = [Method::Spline, Method::NrptLinear, Method::ReversibleLinear];
        let lam = crate::diagnostics::lambda_linear_gaussian(10.0).unwrap();
        let a = run_benchmark(&m, &small(7), &methods, Some(lam)).unwrap();
        let b = run_benchmark(&m, &small(7), &methods, Some(lam)).unwrap();
        assert_eq!(a, b);
        assert!((a.linear_bound_rate.unwrap() - 1.0 / (2.0 + 2.0 * 10.0 / std::f64::consts::PI.sqrt())).abs() < 1e-12);
        assert_eq!(a.curves.len(), 3);
        assert!("nrpt-linear".parse::<Method>().is_ok() && "bogus".parse::<Method>().is_err());
    }
}
