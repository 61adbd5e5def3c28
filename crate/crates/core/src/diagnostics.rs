//! Barrier estimators, analytic oracles and the gradient SNR experiment.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::engine::{log_accept, predicted_round_trip_rate};
use crate::error::{Error, Result};
use crate::models::{GaussianPair, Model};
use crate::paths::AnnealingPath;
use crate::rng::{stream, Purpose};
use crate::schedule::Schedule;

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`. Sorts in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at level `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// A Monte Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, var) = mean_var(xs);
        Self { value: mean, std_error: (var / xs.len() as f64).sqrt() }
    }
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    /// `sum r_n`, which tracks the global barrier.
    pub rejection_sum: f64,
    /// `sum r_n / (1 - r_n)`.
    pub odds_sum: f64,
    pub predicted_rate: f64,
    pub measured_rate: f64,
}

impl BarrierReport {
    pub fn new(rejections: &[f64], measured_rate: f64) -> Self {
        let odds = if rejections.iter().any(|&r| r >= 1.0) {
            f64::INFINITY
        } else {
            rejections.iter().map(|r| r / (1.0 - r)).sum()
        };
        Self {
            rejection_sum: rejections.iter().sum(),
            odds_sum: odds,
            predicted_rate: predicted_round_trip_rate(rejections),
            measured_rate,
        }
    }
}

/// `lambda(t) = z / sqrt(pi)` on the linear Gaussian path; also its integral.
pub fn lambda_linear_gaussian(z: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain { value: z, domain: "z > 0" });
    }
    Ok(z / std::f64::consts::PI.sqrt())
}

/// Length of the Fisher–Rao geodesic between `N(0, 1)` and `N(z, 1)`.
pub fn fisher_length_gaussian(z: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain { value: z, domain: "z > 0" });
    }
    Ok(2f64.sqrt() * (z * z / 4.0 + (z / 4.0) * (8.0 + z * z).sqrt()).ln_1p())
}

/// Exact swap rejection between `t` and `t'` on the linear Gaussian path.
pub fn rejection_linear_gaussian(z: f64, t: f64, t_prime: f64) -> f64 {
    erf((t - t_prime).abs() * z / 2.0)
}

/// Exact `sum_n SKL(pi_{t_n}, pi_{t_{n+1}})` for the tempered Gaussians.
pub fn skl_gaussian(model: &GaussianPair, path: &AnnealingPath, schedule: &Schedule) -> Result<f64> {
    let laws = path
        .etas(schedule.points())?
        .into_iter()
        .map(|e| model.tempered(e))
        .collect::<Result<Vec<_>>>()?;
    Ok(laws
        .windows(2)
        .map(|p| {
            let (a, b) = (p[0], p[1]);
            let d2 = (a.mean - b.mean).powi(2);
            0.5 * ((a.variance + d2) / b.variance + (b.variance + d2) / a.variance - 2.0)
        })
        .sum::<f64>()
        * model.dim as f64)
}

fn exact_sampler<M: Model>(model: &M) -> impl Fn(crate::paths::AnnealingCoords, &mut crate::rng::StreamRng) -> Result<M::State> + '_ {
    move |eta, rng| {
        model
            .sample_exact(eta, rng)
            .ok_or_else(|| Error::InvalidArgument("model has no exact sampler".into()))?
    }
}

/// Monte Carlo `lambda(t) = E|dW_t/dt(X) - dW_t/dt(X')| / 2` from i.i.d. pairs.
pub fn empirical_instantaneous_rate<M: Model>(
    path: &AnnealingPath,
    t: f64,
    model: &M,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::InsufficientSamples(format!("{samples} pairs")));
    }
    let eta = path.eta(t)?;
    let d = path.eta_derivative(t)?;
    model.check(eta)?;
    let draw = exact_sampler(model);
    let mut rng = stream(seed, Purpose::Oracle, 1, 0);
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = draw(eta, &mut rng)?;
        let y = draw(eta, &mut rng)?;
        vals.push(0.5 * (d.dot(model.log_densities(&x)) - d.dot(model.log_densities(&y))).abs());
    }
    Ok(Estimate::from_samples(&vals))
}

/// Monte Carlo swap rejection `r(t, t')` from i.i.d. draws of both laws.
pub fn empirical_rejection<M: Model>(
    path: &AnnealingPath,
    t: f64,
    t_prime: f64,
    model: &M,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::InsufficientSamples(format!("{samples} pairs")));
    }
    let (lo, hi) = (path.eta(t)?, path.eta(t_prime)?);
    let draw = exact_sampler(model);
    let mut rng = stream(seed, Purpose::Oracle, t.to_bits(), t_prime.to_bits());
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = model.log_densities(&draw(lo, &mut rng)?);
        let y = model.log_densities(&draw(hi, &mut rng)?);
        vals.push(1.0 - log_accept(lo, hi, x, y)?.exp());
    }
    Ok(Estimate::from_samples(&vals))
}

/// Brute-force rejection `r(t, t')` and secant barrier `Lambda(t, t')` for a
/// Gaussian pair, together with `|r - Lambda|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecantComparison {
    pub rejection: f64,
    pub secant_barrier: f64,
    pub error: f64,
}

/// Number of trapezoid nodes for the secant integral.
pub const SECANT_NODES: usize = 64;

/// Compares `r(t, t')` with the secant barrier by simulation.
///
/// Both quantities reuse the same standard-normal pairs at every node, and
/// each pair is also evaluated with its two draws exchanged. The comparison
/// is a difference of two nearly equal numbers, so without shared draws the
/// Monte Carlo noise swamps it at small `|t - t'|`.
pub fn secant_comparison_gaussian(
    model: &GaussianPair,
    path: &AnnealingPath,
    t: f64,
    t_prime: f64,
    draws: usize,
    seed: u64,
) -> Result<SecantComparison> {
    if draws < 2 {
        return Err(Error::InsufficientSamples(format!("{draws} draws")));
    }
    let (et, etp) = (path.eta(t)?, path.eta(t_prime)?);
    let diff = etp - et;
    let d = model.dim;
    let mut rng = stream(seed, Purpose::Oracle, 0, 0);
    let noise: Vec<f64> = (0..2 * draws * d).map(|_| rng.sample(StandardNormal)).collect();

    let tempered = |eta| model.tempered(eta);
    // swap acceptance depends on (x, x') only through W(x) - W(x')
    let a_of = |eta_x, eta_y, e: &[f64], f: &[f64]| -> Result<f64> {
        let (lx, ly) = (tempered(eta_x)?, tempered(eta_y)?);
        let x: Vec<f64> = e.iter().map(|n| lx.mean + lx.variance.sqrt() * n).collect();
        let y: Vec<f64> = f.iter().map(|n| ly.mean + ly.variance.sqrt() * n).collect();
        let (wx, wy) = (model.log_densities(&x), model.log_densities(&y));
        Ok(diff.eta0 * (wx.w0 - wy.w0) + diff.eta1 * (wx.w1 - wy.w1))
    };

    let pair = |i: usize| (&noise[2 * i * d..(2 * i + 1) * d], &noise[(2 * i + 1) * d..(2 * i + 2) * d]);
    let rejection = (0..draws)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let (e, f) = pair(i);
            let a = a_of(et, etp, e, f)?;
            let b = a_of(et, etp, f, e)?;
            Ok(0.5 * ((1.0 - a.min(0.0).exp()) + (1.0 - b.min(0.0).exp())))
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum::<f64>()
        / draws as f64;

    let nodes: Vec<f64> = (0..SECANT_NODES).map(|j| j as f64 / (SECANT_NODES - 1) as f64).collect();
    let node_means = nodes
        .iter()
        .map(|&s| {
            let eta = et.scale(1.0 - s) + etp.scale(s);
            let total = (0..draws)
                .into_par_iter()
                .map(|i| -> Result<f64> {
                    let (e, f) = pair(i);
                    Ok(0.25 * (a_of(eta, eta, e, f)?.abs() + a_of(eta, eta, f, e)?.abs()))
                })
                .collect::<Result<Vec<f64>>>()?
                .iter()
                .sum::<f64>();
            Ok(total / draws as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let h = 1.0 / (SECANT_NODES - 1) as f64;
    let secant_barrier = h
        * (node_means.iter().sum::<f64>() - 0.5 * (node_means[0] + node_means[SECANT_NODES - 1]));
    Ok(SecantComparison { rejection, secant_barrier, error: (rejection - secant_barrier).abs() })
}

/// One row of the SNR table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub phi: f64,
    /// Exact rejection between the two chains at this `phi`.
    pub rejection: f64,
    pub rejection_grad_mean: f64,
    pub rejection_grad_sd: f64,
    pub rejection_snr: f64,
    pub skl_grad_mean: f64,
    pub skl_grad_sd: f64,
    pub skl_snr: f64,
}

fn snr(mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (mean / sd).abs()
    }
}

/// Rejection- and SKL-gradient estimates from one batch of pairs
/// `x ~ N(0, 1)`, `y ~ N(phi, 1)`.
pub fn snr_gradients(phi: f64, x: &[f64], y: &[f64]) -> (f64, f64) {
    let score: Vec<f64> = y.iter().map(|y| y - phi).collect();
    let n = x.len() as f64;

    let mut reject = Vec::with_capacity(x.len());
    let mut pathwise = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let a = phi * (xi - yi);
        reject.push(1.0 - a.min(0.0).exp());
        if a < 0.0 {
            pathwise -= a.exp() * (xi - yi);
        }
    }
    let g_rej = sample_cov(&score, &reject) + pathwise / n;

    let w_gap: Vec<f64> = y.iter().map(|y| phi * y).collect();
    let g_skl = x.iter().map(|x| phi - x).sum::<f64>() / n
        + sample_cov(&score, &w_gap)
        + score.iter().sum::<f64>() / n;
    (g_rej, g_skl)
}

/// Signal-to-noise of the two gradient estimators over a grid of `phi`.
pub fn snr_experiment(phi_grid: &[f64], samples_per_estimate: usize, replicates: usize, seed: u64) -> Result<Vec<SnrRow>> {
    if replicates < 2 {
        return Err(Error::InsufficientSamples(format!("{replicates} replicates; SNR needs at least 2")));
    }
    if samples_per_estimate < 2 {
        return Err(Error::InsufficientSamples(format!("{samples_per_estimate} samples per estimate")));
    }
    phi_grid
        .iter()
        .enumerate()
        .map(|(gi, &phi)| {
            if !phi.is_finite() {
                return Err(Error::NonFinite("phi grid"));
            }
            let (rej, skl): (Vec<f64>, Vec<f64>) = (0..replicates)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = stream(seed, Purpose::Snr, gi as u64, rep as u64);
                    let x: Vec<f64> = (0..samples_per_estimate).map(|_| rng.sample(StandardNormal)).collect();
                    let y: Vec<f64> =
                        (0..samples_per_estimate).map(|_| phi + rng.sample::<f64, _>(StandardNormal)).collect();
                    snr_gradients(phi, &x, &y)
                })
                .unzip();
            let (rm, rv) = mean_var(&rej);
            let (sm, sv) = mean_var(&skl);
            Ok(SnrRow {
                phi,
                rejection: erf(phi.abs() / 2.0),
                rejection_grad_mean: rm,
                rejection_grad_sd: rv.sqrt(),
                rejection_snr: snr(rm, rv.sqrt()),
                skl_grad_mean: sm,
                skl_grad_sd: sv.sqrt(),
                skl_snr: snr(sm, sv.sqrt()),
            })
        })
        .collect()
}

/// The grid `{0, 0.2, ..., 2}`.
pub fn default_snr_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 5.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BetaBinomialPair;
    use crate::paths::SplineKnots;
    use crate::AnnealingCoords;
    use proptest::prelude::*;

    #[test]
    fn lambda_examples() {
        assert!((lambda_linear_gaussian(std::f64::consts::PI.sqrt()).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambda_linear_gaussian(10.0).unwrap() - 5.6419).abs() < 1e-4);
        assert!((lambda_linear_gaussian(200.0).unwrap() - 112.8379).abs() < 1e-4);
        assert!(lambda_linear_gaussian(0.0).is_err());
        assert!(lambda_linear_gaussian(f64::NAN).is_err());
    }

    #[test]
    fn fisher_length_examples() {
        assert!((fisher_length_gaussian(10.0).unwrap() - 5.587).abs() < 1e-3);
        assert!(fisher_length_gaussian(1e-9).unwrap() < 1e-8);
        for z in [10.0, 20.0, 50.0, 200.0, 1e4] {
            assert!(fisher_length_gaussian(z).unwrap() / 2f64.sqrt() < lambda_linear_gaussian(z).unwrap());
        }
        assert!(fisher_length_gaussian(-1.0).is_err());
    }

    #[test]
    fn barrier_report() {
        let r = BarrierReport::new(&[0.5, 0.5], 0.1);
        assert_eq!(r.rejection_sum, 1.0);
        assert_eq!(r.odds_sum, 2.0);
        assert!((r.predicted_rate - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(BarrierReport::new(&[1.0], 0.0).predicted_rate, 0.0);
    }

    #[test]
    fn rejection_oracle_matches_simulation() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let e = empirical_rejection(&AnnealingPath::Linear, 0.3, 0.35, &m, 200_000, 1).unwrap();
        let exact = rejection_linear_gaussian(10.0, 0.3, 0.35);
        assert!((e.value - exact).abs() < 3.0 * e.std_error, "{e:?} vs {exact}");
    }

    #[test]
    fn instantaneous_rate_linear_gaussian() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let lambda = lambda_linear_gaussian(10.0).unwrap();
        for (i, t) in [0.1, 0.5, 0.9].into_iter().enumerate() {
            let e = empirical_instantaneous_rate(&AnnealingPath::Linear, t, &m, 100_000, i as u64).unwrap();
            assert!((e.value - lambda).abs() < 3.0 * e.std_error, "t={t}: {e:?}");
        }
        let same = GaussianPair::new(0.3, 0.3, 1.0, 2).unwrap();
        let e = empirical_instantaneous_rate(&AnnealingPath::Linear, 0.4, &same, 100, 0).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn instantaneous_rate_at_knot_uses_right_segment() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let phi = SplineKnots::new(vec![
            AnnealingCoords::new(1.0, 0.0),
            AnnealingCoords::new(0.9, 0.1),
            AnnealingCoords::new(0.0, 1.0),
        ])
        .unwrap();
        let path = AnnealingPath::Spline(phi);
        let at = empirical_instantaneous_rate(&path, 0.5, &m, 20_000, 3).unwrap();
        let right = empirical_instantaneous_rate(&path, 0.5 + 1e-12, &m, 20_000, 3).unwrap();
        assert!((at.value - right.value).abs() < 1e-6);
    }

    #[test]
    fn secant_ratio_approaches_lambda() {
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        let lambda = lambda_linear_gaussian(10.0).unwrap();
        let gaps: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&d| {
                let r = empirical_rejection(&AnnealingPath::Linear, 0.4, 0.4 + d, &m, 400_000, 9).unwrap();
                (r.value / d - lambda).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn secant_barrier_linear_path_is_exact() {
        // on a linear path the secant is the path itself: Lambda(t, t') = |t - t'| z / sqrt(pi)
        let m = GaussianPair::new(-1.0, 1.0, 1.0, 1).unwrap();
        let c = secant_comparison_gaussian(&m, &AnnealingPath::Linear, 0.5, 0.7, 200_000, 4).unwrap();
        let exact = 0.2 * 2.0 / std::f64::consts::PI.sqrt();
        assert!((c.secant_barrier - exact).abs() < 2e-3, "{c:?}");
        assert!((c.rejection - rejection_linear_gaussian(2.0, 0.5, 0.7)).abs() < 2e-3, "{c:?}");
    }

    #[test]
    fn exact_sampler_required() {
        let m = crate::models::MixtureModel::new(vec![0.0, 1.0], 2, 0.0, 1.0).unwrap();
        assert!(empirical_instantaneous_rate(&AnnealingPath::Linear, 0.5, &m, 10, 0).is_err());
        let bb = BetaBinomialPair::new(2.0, 2.0, 3, 5).unwrap();
        assert!(empirical_instantaneous_rate(&AnnealingPath::Linear, 0.5, &bb, 10, 0).is_ok());
    }

    #[test]
    fn skl_bound_holds() {
        // N * sum SKL / 2 >= Lambda^2 with Lambda from the exact rejection sum
        let m = GaussianPair::new(-1.0, 1.0, 0.2, 1).unwrap();
        for n in [1, 4, 10, 30] {
            let sched = Schedule::uniform(n).unwrap();
            let skl = skl_gaussian(&m, &AnnealingPath::Linear, &sched).unwrap();
            let lam: f64 = sched.points().windows(2).map(|p| rejection_linear_gaussian(10.0, p[0], p[1])).sum();
            assert!(n as f64 * skl / 2.0 >= lam * lam, "N={n}");
        }
    }

    #[test]
    fn snr_gradients_unbiased() {
        // average over many replicates approaches the true derivatives
        let phi = 1.0;
        let rows = snr_experiment(&[phi], 200, 4000, 11).unwrap();
        let r = rows[0];
        assert!((r.skl_grad_mean - 2.0 * phi).abs() < 3.0 * r.skl_grad_sd / 4000f64.sqrt());
        // d/dphi erf(phi / 2) = exp(-phi^2 / 4) / sqrt(pi)
        let exact = (-phi * phi / 4.0).exp() / std::f64::consts::PI.sqrt();
        assert!((r.rejection_grad_mean - exact).abs() < 3.0 * r.rejection_grad_sd / 4000f64.sqrt(), "{r:?}");
    }

    #[test]
    fn snr_at_zero_and_errors() {
        let rows = snr_experiment(&[0.0], 50, 200, 1).unwrap();
        assert_eq!(rows[0].rejection_snr, 0.0);
        assert!(rows[0].skl_snr < 0.5);
        assert!(snr_experiment(&[0.5], 50, 1, 1).is_err());
        assert_eq!(snr(0.0, 0.0), 0.0);
        assert_eq!(default_snr_grid().len(), 11);
    }

    proptest! {
        #[test]
        fn barrier_report_ordering(r in prop::collection::vec(0.0f64..0.999, 1..20)) {
            let b = BarrierReport::new(&r, 0.0);
            prop_assert!(b.odds_sum >= b.rejection_sum && b.rejection_sum >= 0.0);
        }

        #[test]
        fn ks_statistic_in_unit_interval(mut xs in prop::collection::vec(-5.0f64..5.0, 1..50)) {
            let d = ks_statistic(&mut xs, |x| 0.5 * (1.0 + erf(x / 2f64.sqrt())));
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
