//! Annealing schedules and their adaptation.
//!
//! The cumulative barrier `t -> sum of rejections up to t` is estimated from
//! per-pair rejection rates, interpolated by a shape-preserving cubic, and
//! inverted by bisection so that every neighbour pair of the new schedule
//! carries an equal share of the barrier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid `0 = t_0 <= t_1 <= ... <= t_N = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Schedule(Vec<f64>);

impl Schedule {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Schedule(format!("need at least two points, got {}", points.len())));
        }
        if points[0] != 0.0 || points[points.len() - 1] != 1.0 {
            return Err(Error::Schedule("endpoints must be 0 and 1".into()));
        }
        if points.iter().any(|t| !t.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Schedule("points must be finite and non-decreasing".into()));
        }
        Ok(Self(points))
    }

    /// `(0, 1/N, ..., 1)`.
    pub fn uniform(intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Schedule("need at least one interval".into()));
        }
        let n = intervals as f64;
        let mut pts: Vec<f64> = (0..=intervals).map(|i| i as f64 / n).collect();
        pts[intervals] = 1.0;
        Ok(Self(pts))
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    /// Number of points, `N + 1`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of neighbour pairs, `N`.
    pub fn intervals(&self) -> usize {
        self.0.len() - 1
    }

    /// Largest gap between consecutive points.
    pub fn mesh(&self) -> f64 {
        self.0.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for Schedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Schedule> for Vec<f64> {
    fn from(s: Schedule) -> Self {
        s.0
    }
}

/// Monotone piecewise-cubic Hermite interpolant with Fritsch–Carlson
/// tangents.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierInterpolant {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl BarrierInterpolant {
    /// Interpolates strictly increasing `xs` with non-decreasing `ys`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Dimension { expected: xs.len(), got: ys.len() });
        }
        if xs.len() < 2 {
            return Err(Error::InvalidArgument("need at least two knots".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("abscissae must be strictly increasing".into()));
        }
        if ys.iter().any(|y| !y.is_finite()) || ys.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("ordinates must be finite and non-decreasing".into()));
        }
        let n = xs.len();
        let secant: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut m = vec![0.0; n];
        m[0] = secant[0];
        m[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            m[i] = if secant[i - 1] * secant[i] <= 0.0 { 0.0 } else { 0.5 * (secant[i - 1] + secant[i]) };
        }
        for i in 0..n - 1 {
            if secant[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let a = m[i] / secant[i];
            let b = m[i + 1] / secant[i];
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                m[i] = tau * a * secant[i];
                m[i + 1] = tau * b * secant[i];
            }
        }
        Ok(Self { xs, ys, slopes: m })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.xs.len();
        if t <= self.xs[0] {
            return self.ys[0];
        }
        if t >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&x| x <= t) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (t - self.xs[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    /// Value at `t = 1`.
    pub fn total(&self) -> f64 {
        self.eval(1.0)
    }
}

/// Fits the cumulative barrier through `(t_n, sum_{m<n} r_m)`. Knots sharing
/// an abscissa are merged, keeping the first.
pub fn fit_cumulative_barrier(schedule: &Schedule, rejections: &[f64]) -> Result<BarrierInterpolant> {
    if rejections.len() != schedule.intervals() {
        return Err(Error::Dimension { expected: schedule.intervals(), got: rejections.len() });
    }
    if rejections.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::InvalidArgument("rejections must be finite and non-negative".into()));
    }
    let mut xs = Vec::with_capacity(schedule.len());
    let mut ys = Vec::with_capacity(schedule.len());
    let mut acc = 0.0;
    for (n, &t) in schedule.points().iter().enumerate() {
        if n > 0 {
            acc += rejections[n - 1];
        }
        if xs.last() == Some(&t) {
            continue;
        }
        xs.push(t);
        ys.push(acc);
    }
    // a trailing duplicate at t = 1 carries the full sum
    *ys.last_mut().expect("non-empty") = acc;
    BarrierInterpolant::new(xs, ys)
}

/// Solves `f(t) = target` on `[lo, hi]` for non-decreasing `f`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> f64 {
    for _ in 0..max_iter {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub const BISECTION_TOLERANCE: f64 = 1e-10;
pub const BISECTION_MAX_ITER: usize = 60;

/// Schedule with `intervals` pairs equalizing the fitted barrier.
pub fn update_schedule(barrier: &BarrierInterpolant, intervals: usize) -> Result<Schedule> {
    let total = barrier.total();
    if !(total > 0.0) {
        return Schedule::uniform(intervals);
    }
    let mut pts = Vec::with_capacity(intervals + 1);
    pts.push(0.0);
    for n in 1..intervals {
        let target = n as f64 / intervals as f64 * total;
        let t = bisect(|t| barrier.eval(t), target, 0.0, 1.0, BISECTION_TOLERANCE * 1e-3, BISECTION_MAX_ITER);
        let prev = *pts.last().unwrap();
        pts.push(t.clamp(prev, 1.0));
    }
    pts.push(1.0);
    Schedule::new(pts)
}
