use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use splinept::diagnostics::{
    fisher_length_gaussian, lambda_linear_gaussian, rejection_linear_gaussian, snr_experiment, BarrierReport,
};
use splinept::engine::predicted_round_trip_rate;
use splinept::models::{galaxy_velocities, load_observations, BetaBinomialPair, GaussianPair, MixtureModel, Model};
use splinept::tuner::{path_opt_nrpt_from, run_benchmark, Method, TuningTrace};
use splinept::{
    run_nrpt, AnnealingCoords, AnnealingPath, Ensemble, Recording, Schedule, SplineKnots, SweepOptions,
};

use crate::config::{Format, KernelKind, ModelConfig, PathKind, RunConfig};
use crate::output::{write_atomic, write_csv, write_json};
use crate::CliError;

/// Work that needs a concrete model type.
trait ModelTask {
    type Output;
    fn run<M: Model>(self, model: &M) -> Result<Self::Output, CliError>;
}

fn with_model<T: ModelTask>(cfg: &ModelConfig, task: T) -> Result<T::Output, CliError> {
    match cfg {
        ModelConfig::Gaussian(g) => {
            let mut m = GaussianPair::new(g.mu0, g.mu1, g.sigma, g.dim).map_err(CliError::config)?;
            if g.kernel == KernelKind::RandomWalk {
                m = m.with_random_walk(g.step_size, g.steps);
            }
            task.run(&m)
        }
        ModelConfig::BetaBinomial(b) => {
            let m = BetaBinomialPair::new(b.a0, b.b0, b.successes, b.trials).map_err(CliError::config)?;
            task.run(&m)
        }
        ModelConfig::Mixture(c) => {
            let data = match &c.data {
                Some(p) => load_observations(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
                None => galaxy_velocities(),
            };
            let m = MixtureModel::new(data, c.components, c.prior_mean, c.component_sd).map_err(CliError::config)?;
            task.run(&m)
        }
    }
}

/// Seeds to run and whether each gets its own subdirectory.
pub fn seed_dirs(cfg: &RunConfig, seeds: Option<(u64, u64)>) -> Vec<(u64, PathBuf)> {
    let root = cfg.output.directory.clone();
    match seeds {
        None => vec![(cfg.tuning.seed, root)],
        Some((a, b)) => (a..=b).map(|s| (s, root.join(format!("seed-{s}")))).collect(),
    }
}

fn write_effective(cfg: &RunConfig, dir: &Path, seed: u64) -> Result<(), CliError> {
    let mut eff = cfg.clone();
    eff.tuning.seed = seed;
    eff.output.directory = dir.to_path_buf();
    write_atomic(&dir.join("effective-config.toml"), eff.emit().as_bytes())
}

fn initial_path(cfg: &RunConfig) -> Result<AnnealingPath, CliError> {
    match cfg.path.kind {
        PathKind::Linear => Ok(AnnealingPath::Linear),
        PathKind::Spline => {
            let knots = match &cfg.path.knots {
                Some(k) => SplineKnots::new(k.iter().map(|&p| AnnealingCoords::from(p)).collect()),
                None => SplineKnots::linear(cfg.path.segments),
            };
            knots.map(AnnealingPath::Spline).map_err(CliError::config)
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    sweep: usize,
    cumulative_round_trips: u64,
}

#[derive(Serialize)]
struct RejectionRow {
    round: usize,
    pair: usize,
    t_lo: f64,
    t_hi: f64,
    rejection: f64,
}

fn rejection_rows(round: usize, schedule: &Schedule, r: &[f64]) -> Vec<RejectionRow> {
    let t = schedule.points();
    r.iter()
        .enumerate()
        .map(|(pair, &rejection)| RejectionRow { round, pair, t_lo: t[pair], t_hi: t[pair + 1], rejection })
        .collect()
}

#[derive(Serialize)]
struct RunSummary {
    sweeps: u64,
    round_trips: u64,
    #[serde(flatten)]
    barrier: BarrierReport,
}

struct RunTask<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    dir: &'a Path,
}

impl ModelTask for RunTask<'_> {
    type Output = ();

    fn run<M: Model>(self, model: &M) -> Result<(), CliError> {
        let t = &self.cfg.tuning;
        let path = initial_path(self.cfg)?;
        let schedule = Schedule::uniform(t.chains).map_err(CliError::config)?;
        let ens = Ensemble::initial(model, t.chains + 1, self.seed).map_err(CliError::run)?;
        let opts = SweepOptions { seed: self.seed, scheme: t.scheme, parallel: t.parallel };
        let sweeps = t.rounds * t.sweeps;
        let run = run_nrpt(model, &path, &schedule, ens, sweeps, &opts, Recording::default()).map_err(CliError::run)?;
        let rejections = run.rejection.means();
        let out = &self.cfg.output;
        write_effective(self.cfg, self.dir, self.seed)?;
        if out.wants(Format::Csv) {
            let trace: Vec<SweepRow> = run
                .round_trips
                .cumulative
                .iter()
                .enumerate()
                .map(|(i, &c)| SweepRow { sweep: i + 1, cumulative_round_trips: c })
                .collect();
            write_csv(&self.dir.join("trace.csv"), "run-trace", &trace)?;
            write_csv(&self.dir.join("rejections.csv"), "rejections", &rejection_rows(1, &schedule, &rejections))?;
        }
        if out.wants(Format::Json) {
            let summary = RunSummary {
                sweeps: run.rejection.sweeps,
                round_trips: run.round_trips.completed_round_trips,
                barrier: BarrierReport::new(&rejections, run.round_trip_rate()),
            };
            write_json(&self.dir.join("barrier.json"), &summary)?;
        }
        Ok(())
    }
}

pub fn cmd_run(cfg: &RunConfig, seeds: Option<(u64, u64)>) -> Result<(), CliError> {
    seed_dirs(cfg, seeds)
        .par_iter()
        .map(|(seed, dir)| with_model(&cfg.model, RunTask { cfg, seed: *seed, dir }))
        .collect()
}

#[derive(Serialize)]
struct RoundRow {
    round: usize,
    skl: Option<f64>,
    odds_sum: f64,
    rejection_sum: f64,
    gradient_norm: Option<f64>,
    round_trips: u64,
    cumulative_round_trips: u64,
    round_trip_rate: f64,
    step_skipped: bool,
    knots: String,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    round: usize,
    knots: Option<&'a SplineKnots>,
    schedule: &'a Schedule,
}

#[derive(Serialize)]
struct CurveRow {
    method: String,
    round: usize,
    sweeps: usize,
    cumulative_round_trips: f64,
}

fn curve_rows(method: &str, cumulative: &[u64], sweeps_per_round: usize) -> Vec<CurveRow> {
    cumulative
        .iter()
        .enumerate()
        .map(|(i, &c)| CurveRow {
            method: method.to_string(),
            round: i + 1,
            sweeps: (i + 1) * sweeps_per_round,
            cumulative_round_trips: c as f64,
        })
        .collect()
}

fn bound_rows(rate: f64, rounds: usize, sweeps_per_round: usize) -> Vec<CurveRow> {
    (1..=rounds)
        .map(|r| CurveRow {
            method: "linear-bound".into(),
            round: r,
            sweeps: r * sweeps_per_round,
            cumulative_round_trips: rate * (r * sweeps_per_round) as f64,
        })
        .collect()
}

/// Global barrier of the linear path when a closed form exists.
fn linear_barrier(cfg: &ModelConfig) -> Option<f64> {
    match cfg {
        ModelConfig::Gaussian(g) => {
            let z = (g.mu1 - g.mu0).abs() / g.sigma * (g.dim as f64).sqrt();
            lambda_linear_gaussian(z).ok()
        }
        _ => None,
    }
}

fn write_trace(cfg: &RunConfig, dir: &Path, trace: &TuningTrace) -> Result<(), CliError> {
    let out = &cfg.output;
    if out.wants(Format::Csv) {
        let rows: Vec<RoundRow> = trace
            .rounds
            .iter()
            .map(|r| RoundRow {
                round: r.round,
                skl: r.skl_estimate,
                odds_sum: r.barrier.odds_sum,
                rejection_sum: r.barrier.rejection_sum,
                gradient_norm: r.gradient_norm,
                round_trips: r.round_trips,
                cumulative_round_trips: r.cumulative_round_trips,
                round_trip_rate: r.round_trip_rate,
                step_skipped: r.step_skipped,
                knots: r.path_knots.as_ref().map(|k| serde_json::to_string(k).unwrap()).unwrap_or_default(),
            })
            .collect();
        write_csv(&dir.join("trace.csv"), "tuning-trace", &rows)?;
        let rej: Vec<RejectionRow> =
            trace.rounds.iter().flat_map(|r| rejection_rows(r.round, &r.schedule, &r.rejections)).collect();
        write_csv(&dir.join("rejections.csv"), "rejections", &rej)?;
    }
    if out.wants(Format::Json) {
        for r in &trace.rounds {
            let snap = Snapshot { round: r.round, knots: r.path_knots.as_ref(), schedule: &r.schedule };
            write_json(&dir.join("snapshots").join(format!("round-{:04}.json", r.round)), &snap)?;
        }
        if let Some(k) = &trace.final_knots {
            write_json(&dir.join("final-knots.json"), k)?;
        }
        if let Some(s) = &trace.final_schedule {
            write_json(&dir.join("final-schedule.json"), s)?;
        }
        write_json(&dir.join("trace.json"), trace)?;
    }
    Ok(())
}

struct TuneTask<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    dir: &'a Path,
    comparators: &'a [Method],
}

impl ModelTask for TuneTask<'_> {
    type Output = ();

    fn run<M: Model>(self, model: &M) -> Result<(), CliError> {
        let tc = self.cfg.tuning_config(self.seed);
        let path = initial_path(self.cfg)?;
        let ens = Ensemble::initial(model, tc.chains + 1, self.seed).map_err(CliError::run)?;
        write_effective(self.cfg, self.dir, self.seed)?;
        let trace = match path_opt_nrpt_from(model, &tc, path, ens) {
            Ok(run) => run.trace,
            Err(e) => {
                // keep whatever finished before the failure
                write_trace(self.cfg, self.dir, &e.partial)?;
                return Err(CliError::Run(e.to_string()));
            }
        };
        write_trace(self.cfg, self.dir, &trace)?;
        if !self.comparators.is_empty() {
            let table = run_benchmark(model, &tc, self.comparators, linear_barrier(&self.cfg.model))
                .map_err(CliError::run)?;
            let main = if tc.adapt_path { "spline" } else { "tuned-linear" };
            let cumulative: Vec<u64> = trace.rounds.iter().map(|r| r.cumulative_round_trips).collect();
            let mut rows = curve_rows(main, &cumulative, tc.sweeps);
            for c in &table.curves {
                rows.extend(curve_rows(c.method.name(), &c.cumulative_round_trips, tc.sweeps));
            }
            if let Some(rate) = table.linear_bound_rate {
                rows.extend(bound_rows(rate, tc.rounds, tc.sweeps));
            }
            write_csv(&self.dir.join("comparators.csv"), "round-trip-curves", &rows)?;
        }
        Ok(())
    }
}

pub fn cmd_tune(cfg: &RunConfig, seeds: Option<(u64, u64)>, comparators: &[Method]) -> Result<(), CliError> {
    seed_dirs(cfg, seeds)
        .par_iter()
        .map(|(seed, dir)| with_model(&cfg.model, TuneTask { cfg, seed: *seed, dir, comparators }))
        .collect()
}

struct BenchTask<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    methods: &'a [Method],
}

impl ModelTask for BenchTask<'_> {
    type Output = Vec<CurveRow>;

    fn run<M: Model>(self, model: &M) -> Result<Vec<CurveRow>, CliError> {
        let mut tc = self.cfg.tuning_config(self.seed);
        tc.knots = self.cfg.path.segments.max(1);
        let table = run_benchmark(model, &tc, self.methods, linear_barrier(&self.cfg.model)).map_err(CliError::run)?;
        let mut rows = Vec::new();
        for c in &table.curves {
            rows.extend(curve_rows(c.method.name(), &c.cumulative_round_trips, tc.sweeps));
        }
        if let Some(rate) = table.linear_bound_rate {
            rows.extend(bound_rows(rate, tc.rounds, tc.sweeps));
        }
        Ok(rows)
    }
}

#[derive(Serialize)]
struct BenchRow {
    seed: u64,
    method: String,
    round: usize,
    sweeps: usize,
    cumulative_round_trips: f64,
}

pub fn cmd_benchmark(cfg: &RunConfig, seeds: Option<(u64, u64)>, comparators: &[Method]) -> Result<(), CliError> {
    let mut methods = vec![Method::Spline];
    methods.extend(comparators.iter().filter(|m| **m != Method::Spline));
    let seeds: Vec<u64> = match seeds {
        None => vec![cfg.tuning.seed],
        Some((a, b)) => (a..=b).collect(),
    };
    let per_seed = seeds
        .par_iter()
        .map(|&seed| with_model(&cfg.model, BenchTask { cfg, seed, methods: &methods }))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<BenchRow> = seeds
        .iter()
        .zip(per_seed)
        .flat_map(|(&seed, rows)| {
            rows.into_iter().map(move |c| BenchRow {
                seed,
                method: c.method,
                round: c.round,
                sweeps: c.sweeps,
                cumulative_round_trips: c.cumulative_round_trips,
            })
        })
        .collect();
    let dir = &cfg.output.directory;
    write_effective(cfg, dir, cfg.tuning.seed)?;
    write_csv(&dir.join("benchmark.csv"), "round-trip-curves", &rows)
}

#[derive(Serialize)]
struct SnrCsvRow {
    phi: f64,
    objective: &'static str,
    rejection_rate: f64,
    grad_mean: f64,
    grad_sd: f64,
    snr: f64,
}

pub fn cmd_snr(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.snr;
    let table = snr_experiment(&s.grid, s.samples, s.replicates, cfg.tuning.seed).map_err(CliError::run)?;
    let dir = &cfg.output.directory;
    write_effective(cfg, dir, cfg.tuning.seed)?;
    let rows: Vec<SnrCsvRow> = table
        .iter()
        .flat_map(|r| {
            [
                SnrCsvRow {
                    phi: r.phi,
                    objective: "rejection",
                    rejection_rate: r.rejection,
                    grad_mean: r.rejection_grad_mean,
                    grad_sd: r.rejection_grad_sd,
                    snr: r.rejection_snr,
                },
                SnrCsvRow {
                    phi: r.phi,
                    objective: "skl",
                    rejection_rate: r.rejection,
                    grad_mean: r.skl_grad_mean,
                    grad_sd: r.skl_grad_sd,
                    snr: r.skl_snr,
                },
            ]
        })
        .collect();
    if cfg.output.wants(Format::Csv) {
        write_csv(&dir.join("snr.csv"), "snr", &rows)?;
    }
    if cfg.output.wants(Format::Json) {
        write_json(&dir.join("snr.json"), &table)?;
    }
    Ok(())
}

#[derive(Serialize, Default)]
pub struct OracleReport {
    pub z: Option<f64>,
    pub lambda_linear: Option<f64>,
    pub fisher_length: Option<f64>,
    /// `1 / (2 + 2 Lambda)` for the linear path.
    pub linear_bound_rate: Option<f64>,
    /// `1 / (2 + sqrt(2) Lambda_F)`.
    pub geodesic_bound_rate: Option<f64>,
    /// Sum of exact rejections on the uniform `N`-interval schedule.
    pub rejection_sum: Option<f64>,
    /// Finite-`N` round-trip rate from the exact rejections.
    pub predicted_rate: Option<f64>,
}

pub fn oracle_report(cfg: &RunConfig) -> Result<OracleReport, CliError> {
    let ModelConfig::Gaussian(g) = &cfg.model else {
        return Ok(OracleReport::default());
    };
    let m = GaussianPair::new(g.mu0, g.mu1, g.sigma, g.dim).map_err(CliError::config)?;
    if m.z() == 0.0 {
        return Ok(OracleReport {
            z: Some(0.0),
            lambda_linear: Some(0.0),
            fisher_length: Some(0.0),
            linear_bound_rate: Some(0.5),
            geodesic_bound_rate: Some(0.5),
            rejection_sum: Some(0.0),
            predicted_rate: Some(0.5),
        });
    }
    let lambda = linear_barrier(&cfg.model);
    let mut rep = OracleReport {
        z: Some(m.z()),
        lambda_linear: lambda,
        linear_bound_rate: lambda.map(|l| 1.0 / (2.0 + 2.0 * l)),
        ..Default::default()
    };
    if g.dim == 1 {
        let lf = fisher_length_gaussian(m.z()).map_err(CliError::run)?;
        rep.fisher_length = Some(lf);
        rep.geodesic_bound_rate = Some(1.0 / (2.0 + 2f64.sqrt() * lf));
        let sched = Schedule::uniform(cfg.tuning.chains).map_err(CliError::config)?;
        let r: Vec<f64> = sched.points().windows(2).map(|p| rejection_linear_gaussian(m.z(), p[0], p[1])).collect();
        rep.rejection_sum = Some(r.iter().sum());
        rep.predicted_rate = Some(predicted_round_trip_rate(&r));
    }
    Ok(rep)
}
