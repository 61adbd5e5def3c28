//! Symmetric-KL surrogate objective and its stochastic gradient.
//!
//! For a path in the exponential family, `sum_n SKL(pi_{t_n}, pi_{t_{n+1}})`
//! rearranges into `sum_n E_n[z_n · W(X_n)]` with coefficient vectors `z_n`
//! built from second differences of `eta(t_n)`. The gradient with respect to
//! the spline knots then needs only per-chain sample means and covariances of
//! `W(X_n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{monotone_repair, AnnealingCoords, AnnealingPath, LogDensities, SplineKnots, KNOT_FLOOR};
use crate::schedule::Schedule;

/// Default Adagrad stabilizer.
pub const ADAGRAD_EPSILON: f64 = 1e-8;

/// `z_0 = eta_0 - eta_1`, `z_n = 2 eta_n - eta_{n+1} - eta_{n-1}`,
/// `z_N = eta_N - eta_{N-1}`.
pub fn skl_coefficients_from_etas(etas: &[AnnealingCoords]) -> Vec<AnnealingCoords> {
    let n = etas.len() - 1;
    (0..=n)
        .map(|i| {
            if n == 0 {
                AnnealingCoords::new(0.0, 0.0)
            } else if i == 0 {
                etas[0] - etas[1]
            } else if i == n {
                etas[n] - etas[n - 1]
            } else {
                etas[i].scale(2.0) - etas[i + 1] - etas[i - 1]
            }
        })
        .collect()
}

pub fn skl_coefficients(path: &AnnealingPath, schedule: &Schedule) -> Result<Vec<AnnealingCoords>> {
    Ok(skl_coefficients_from_etas(&path.etas(schedule.points())?))
}

fn check_batches(batches: &[Vec<LogDensities>], chains: usize, min: usize) -> Result<()> {
    if batches.len() != chains {
        return Err(Error::Dimension { expected: chains, got: batches.len() });
    }
    for (n, b) in batches.iter().enumerate() {
        if b.len() < min {
            return Err(Error::InsufficientSamples(format!(
                "chain {n} has {} samples, need at least {min}",
                b.len()
            )));
        }
        if b.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("sample log-densities"));
        }
    }
    Ok(())
}

/// Sample mean and (unbiased) covariance of a batch of `W` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Moments {
    pub fn of(batch: &[LogDensities]) -> Self {
        let s = batch.len() as f64;
        let m0 = batch.iter().map(|w| w.w0).sum::<f64>() / s;
        let m1 = batch.iter().map(|w| w.w1).sum::<f64>() / s;
        let (mut c00, mut c01, mut c11) = (0.0, 0.0, 0.0);
        for w in batch {
            let (d0, d1) = (w.w0 - m0, w.w1 - m1);
            c00 += d0 * d0;
            c01 += d0 * d1;
            c11 += d1 * d1;
        }
        let denom = (s - 1.0).max(1.0);
        Self { mean: [m0, m1], cov: [[c00 / denom, c01 / denom], [c01 / denom, c11 / denom]] }
    }
}

/// Monte Carlo estimate of `sum_n SKL(pi_{t_n}, pi_{t_{n+1}})` from per-chain
/// samples of `W(X_n)`, `X_n ~ pi_{t_n}`.
pub fn estimate_skl(path: &AnnealingPath, schedule: &Schedule, batches: &[Vec<LogDensities>]) -> Result<f64> {
    check_batches(batches, schedule.len(), 1)?;
    let z = skl_coefficients(path, schedule)?;
    Ok(z
        .iter()
        .zip(batches)
        .map(|(zn, b)| b.iter().map(|w| zn.dot(*w)).sum::<f64>() / b.len() as f64)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SklGradientEstimate {
    pub value: f64,
    /// Derivative with respect to the log of each interior knot component,
    /// ordered `(knot 1, eta0), (knot 1, eta1), (knot 2, eta0), ...`.
    pub gradient: Vec<f64>,
    pub sample_count: usize,
}

impl SklGradientEstimate {
    pub fn norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Weight of every knot in `eta(t)` (at most two are nonzero).
fn knot_weights(phi: &SplineKnots, t: f64) -> Vec<f64> {
    let mut w = vec![0.0; phi.segments() + 1];
    let (k, a, b) = phi.weights(t);
    w[k - 1] += a;
    w[k] += b;
    w
}

/// Gradient with respect to the raw knot components `phi_{k,c}` of the
/// interior knots, plus the objective value.
pub fn skl_gradient_knots(
    phi: &SplineKnots,
    schedule: &Schedule,
    batches: &[Vec<LogDensities>],
) -> Result<(f64, Vec<f64>)> {
    check_batches(batches, schedule.len(), 2)?;
    let path = AnnealingPath::Spline(phi.clone());
    let etas = path.etas(schedule.points())?;
    let z = skl_coefficients_from_etas(&etas);
    let moments: Vec<Moments> = batches.iter().map(|b| Moments::of(b)).collect();
    let n = etas.len() - 1;

    let value: f64 = z.iter().zip(&moments).map(|(zn, m)| zn.eta0 * m.mean[0] + zn.eta1 * m.mean[1]).sum();

    // per chain: Cov_n z_n plus (C^T mu)_n, where z = C eta
    let mut per_chain = vec![[0.0f64; 2]; n + 1];
    for i in 0..=n {
        let m = &moments[i];
        for c in 0..2 {
            per_chain[i][c] = m.cov[c][0] * z[i].eta0 + m.cov[c][1] * z[i].eta1;
        }
    }
    if n > 0 {
        // column i of C collects the coefficient of eta_i in every z_j
        let mut add = |j: usize, i: usize, coef: f64| {
            for c in 0..2 {
                per_chain[i][c] += coef * moments[j].mean[c];
            }
        };
        add(0, 0, 1.0);
        add(0, 1, -1.0);
        for j in 1..n {
            add(j, j, 2.0);
            add(j, j + 1, -1.0);
            add(j, j - 1, -1.0);
        }
        add(n, n, 1.0);
        add(n, n - 1, -1.0);
    }

    let k = phi.segments();
    let mut grad = vec![0.0; 2 * (k.saturating_sub(1))];
    for (i, &t) in schedule.points().iter().enumerate() {
        let w = knot_weights(phi, t);
        for knot in 1..k {
            if w[knot] == 0.0 {
                continue;
            }
            for c in 0..2 {
                grad[2 * (knot - 1) + c] += w[knot] * per_chain[i][c];
            }
        }
    }
    Ok((value, grad))
}

/// Gradient of the SKL estimate with respect to log-knot coordinates.
pub fn estimate_skl_gradient(
    phi: &SplineKnots,
    schedule: &Schedule,
    batches: &[Vec<LogDensities>],
) -> Result<SklGradientEstimate> {
    let (value, mut grad) = skl_gradient_knots(phi, schedule, batches)?;
    for (g, x) in grad.iter_mut().zip(interior_components(phi)) {
        *g *= x.max(KNOT_FLOOR);
    }
    Ok(SklGradientEstimate { value, gradient: grad, sample_count: batches.iter().map(Vec::len).sum() })
}

/// Interior knot components in gradient order.
pub fn interior_components(phi: &SplineKnots) -> Vec<f64> {
    phi.interior().iter().flat_map(|k| [k.eta0, k.eta1]).collect()
}

/// `log(max(phi, floor))` of the interior components.
pub fn knots_to_log(phi: &SplineKnots) -> Vec<f64> {
    interior_components(phi).into_iter().map(|x| x.max(KNOT_FLOOR).ln()).collect()
}

/// Exponentiates log-knots into the interior, pins the endpoints and repairs
/// monotonicity.
pub fn apply_knot_update(phi: &SplineKnots, psi: &[f64]) -> Result<SplineKnots> {
    let k = phi.segments();
    if psi.len() != 2 * (k - 1) {
        return Err(Error::Dimension { expected: 2 * (k - 1), got: psi.len() });
    }
    if psi.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("log-knot update"));
    }
    let mut raw = Vec::with_capacity(k + 1);
    raw.push(AnnealingCoords::REFERENCE);
    raw.extend(psi.chunks(2).map(|p| AnnealingCoords::new(p[0].exp(), p[1].exp())));
    raw.push(AnnealingCoords::TARGET);
    monotone_repair(&raw)
}

/// How raw gradients are rescaled before the Adagrad update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientScaling {
    /// `g / (|g| + phi)`, which lies in `(-1, 1)`.
    #[default]
    KnotRelative,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub accumulated: Vec<f64>,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub scaling: GradientScaling,
    pub skipped_steps: usize,
}

/// What an Adagrad call did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Applied,
    /// Gradient had a non-finite entry; nothing changed.
    Skipped,
}

impl OptimizerState {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Self {
            accumulated: vec![0.0; dim],
            learning_rate,
            epsilon: ADAGRAD_EPSILON,
            scaling: GradientScaling::KnotRelative,
            skipped_steps: 0,
        }
    }

    pub fn scaled(&self, psi: &[f64], grad: &[f64]) -> Vec<f64> {
        match self.scaling {
            GradientScaling::KnotRelative => {
                grad.iter().zip(psi).map(|(g, p)| g / (g.abs() + p.exp())).collect()
            }
            GradientScaling::None => grad.to_vec(),
        }
    }

    /// Adagrad on `psi` with the configured rescaling.
    pub fn step(&mut self, psi: &[f64], grad: &[f64]) -> Result<(Vec<f64>, StepStatus)> {
        if psi.len() != grad.len() || psi.len() != self.accumulated.len() {
            return Err(Error::Dimension { expected: self.accumulated.len(), got: grad.len().min(psi.len()) });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            self.skipped_steps += 1;
            log::warn!("non-finite gradient; Adagrad step skipped");
            return Ok((psi.to_vec(), StepStatus::Skipped));
        }
        let scaled = self.scaled(psi, grad);
        let mut out = psi.to_vec();
        for i in 0..out.len() {
            self.accumulated[i] += scaled[i] * scaled[i];
            if scaled[i] != 0.0 {
                out[i] -= self.learning_rate * scaled[i] / (self.accumulated[i] + self.epsilon).sqrt();
            }
        }
        Ok((out, StepStatus::Applied))
    }
}

pub fn adagrad_step(opt: &mut OptimizerState, psi: &[f64], grad: &[f64]) -> Result<(Vec<f64>, StepStatus)> {
    opt.step(psi, grad)
}
