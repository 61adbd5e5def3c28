//! Annealing paths of the form `pi_t ∝ exp(eta(t) · W(x))`.
//!
//! A path is a curve `t -> (eta0(t), eta1(t))` in the plane of annealing
//! coordinates, where `eta0` weighs the reference log-density `W0` and `eta1`
//! weighs the target log-density `W1`. Three kinds are provided: the linear
//! path `(1 - t, t)`, piecewise-linear splines through `K + 1` knots, and
//! arbitrary user-supplied curves.

use std::fmt;
use std::ops::{Add, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest value an interior knot component may take before it is mapped to
/// log space.
pub const KNOT_FLOOR: f64 = 1e-6;

/// A point `(eta0, eta1)` of the annealing-coordinate plane.
///
/// Serializes as the two-element array `[eta0, eta1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct AnnealingCoords {
    pub eta0: f64,
    pub eta1: f64,
}

impl AnnealingCoords {
    pub const REFERENCE: AnnealingCoords = AnnealingCoords { eta0: 1.0, eta1: 0.0 };
    pub const TARGET: AnnealingCoords = AnnealingCoords { eta0: 0.0, eta1: 1.0 };

    pub const fn new(eta0: f64, eta1: f64) -> Self {
        Self { eta0, eta1 }
    }

    pub fn is_finite(&self) -> bool {
        self.eta0.is_finite() && self.eta1.is_finite()
    }

    /// `eta · W`.
    pub fn dot(&self, w: LogDensities) -> f64 {
        self.eta0 * w.w0 + self.eta1 * w.w1
    }

    pub fn scale(self, a: f64) -> Self {
        Self::new(a * self.eta0, a * self.eta1)
    }

    pub fn component(&self, c: usize) -> f64 {
        match c {
            0 => self.eta0,
            1 => self.eta1,
            _ => panic!("annealing coordinates have two components, asked for {c}"),
        }
    }
}

impl From<[f64; 2]> for AnnealingCoords {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<AnnealingCoords> for [f64; 2] {
    fn from(c: AnnealingCoords) -> Self {
        [c.eta0, c.eta1]
    }
}

impl Add for AnnealingCoords {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.eta0 + o.eta0, self.eta1 + o.eta1)
    }
}

impl Sub for AnnealingCoords {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.eta0 - o.eta0, self.eta1 - o.eta1)
    }
}

/// Reference and target log-densities `(W0(x), W1(x))` evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LogDensities {
    pub w0: f64,
    pub w1: f64,
}

impl LogDensities {
    pub const fn new(w0: f64, w1: f64) -> Self {
        Self { w0, w1 }
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite() && self.w1.is_finite()
    }
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain { value: t, domain: "[0, 1]" })
    }
}

/// The linear path `(1 - t, t)`.
pub fn eta_linear(t: f64) -> Result<AnnealingCoords> {
    check_t(t)?;
    Ok(AnnealingCoords::new(1.0 - t, t))
}

/// Knots `phi_0, ..., phi_K` of a piecewise-linear path with `phi_0 = (1, 0)`,
/// `phi_K = (0, 1)`, the first component non-increasing and the second
/// non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AnnealingCoords>", into = "Vec<AnnealingCoords>")]
pub struct SplineKnots {
    knots: Vec<AnnealingCoords>,
}

impl SplineKnots {
    /// Validates and wraps a knot sequence.
    pub fn new(knots: Vec<AnnealingCoords>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Constraint(format!(
                "need at least two knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Constraint("non-finite knot".into()));
        }
        if knots[0] != AnnealingCoords::REFERENCE {
            return Err(Error::Constraint(format!(
                "first knot must be (1, 0), got ({}, {})",
                knots[0].eta0, knots[0].eta1
            )));
        }
        let last = knots[knots.len() - 1];
        if last != AnnealingCoords::TARGET {
            return Err(Error::Constraint(format!(
                "last knot must be (0, 1), got ({}, {})",
                last.eta0, last.eta1
            )));
        }
        for (k, pair) in knots.windows(2).enumerate() {
            if pair[1].eta0 > pair[0].eta0 || pair[1].eta1 < pair[0].eta1 {
                return Err(Error::Constraint(format!(
                    "knots {k} and {} are not monotone",
                    k + 1
                )));
            }
        }
        Ok(Self { knots })
    }

    /// The `segments`-segment spline lying on the linear path.
    pub fn linear(segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::InvalidArgument("spline needs at least one segment".into()));
        }
        let k = segments as f64;
        let knots = (0..=segments)
            .map(|i| {
                let s = i as f64 / k;
                AnnealingCoords::new(1.0 - s, s)
            })
            .collect();
        Ok(Self { knots })
    }

    /// Number of segments `K`.
    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[AnnealingCoords] {
        &self.knots
    }

    pub fn interior(&self) -> &[AnnealingCoords] {
        &self.knots[1..self.knots.len() - 1]
    }

    /// Segment index `k = min(ceil(K t), K)`, at least 1.
    pub fn segment_of(&self, t: f64) -> usize {
        let k = self.segments();
        ((k as f64 * t).ceil() as usize).clamp(1, k)
    }

    /// Barycentric weights `(k - K t, K t - k + 1)` on knots `k - 1` and `k`.
    pub fn weights(&self, t: f64) -> (usize, f64, f64) {
        let k = self.segment_of(t);
        let kt = self.segments() as f64 * t;
        let left = (k as f64 - kt).clamp(0.0, 1.0);
        (k, left, 1.0 - left)
    }

    pub fn eta(&self, t: f64) -> Result<AnnealingCoords> {
        check_t(t)?;
        if t == 0.0 {
            return Ok(self.knots[0]);
        }
        if t == 1.0 {
            return Ok(self.knots[self.segments()]);
        }
        let (k, a, b) = self.weights(t);
        Ok(self.knots[k - 1].scale(a) + self.knots[k].scale(b))
    }

    /// `d eta / dt`, using the segment to the right of `t` when `t` is a knot.
    pub fn eta_derivative(&self, t: f64) -> Result<AnnealingCoords> {
        check_t(t)?;
        let kk = self.segments();
        let k = ((kk as f64 * t).floor() as usize + 1).min(kk);
        Ok((self.knots[k] - self.knots[k - 1]).scale(kk as f64))
    }

    /// Builds knots from interior values without validation; used by repair.
    fn from_raw(knots: Vec<AnnealingCoords>) -> Self {
        Self { knots }
    }
}

impl TryFrom<Vec<AnnealingCoords>> for SplineKnots {
    type Error = Error;
    fn try_from(v: Vec<AnnealingCoords>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SplineKnots> for Vec<AnnealingCoords> {
    fn from(s: SplineKnots) -> Self {
        s.knots
    }
}

/// `phi` evaluated at `t`.
pub fn eta_spline(phi: &SplineKnots, t: f64) -> Result<AnnealingCoords> {
    phi.eta(t)
}

/// Restores monotonicity of a knot sequence with fixed endpoints.
///
/// Scans left to right keeping each knot that is componentwise monotone with
/// respect to the last kept knot and still compatible with the target
/// endpoint. Dropped positions are refilled by interpolating evenly in index
/// between the kept neighbours. Non-finite interior values are dropped.
pub fn monotone_repair(knots: &[AnnealingCoords]) -> Result<SplineKnots> {
    let n = knots.len();
    if n < 2 {
        return Err(Error::Constraint("need at least two knots".into()));
    }
    if knots[0] != AnnealingCoords::REFERENCE || knots[n - 1] != AnnealingCoords::TARGET {
        return Err(Error::Constraint("endpoints must be (1, 0) and (0, 1)".into()));
    }
    let mut kept = vec![0usize];
    for (j, k) in knots.iter().enumerate().take(n - 1).skip(1) {
        let last = knots[*kept.last().unwrap()];
        let ok = k.is_finite()
            && k.eta0 <= last.eta0
            && k.eta0 >= 0.0
            && k.eta1 >= last.eta1
            && k.eta1 <= 1.0;
        if ok {
            kept.push(j);
        }
    }
    kept.push(n - 1);

    let mut out = knots.to_vec();
    for pair in kept.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let gap = (hi - lo) as f64;
        for j in lo + 1..hi {
            let s = (j - lo) as f64 / gap;
            out[j] = knots[lo].scale(1.0 - s) + knots[hi].scale(s);
        }
    }
    Ok(SplineKnots::from_raw(out))
}

/// User-supplied curve in the annealing plane.
#[derive(Clone)]
pub struct CustomPath {
    name: String,
    eta: Arc<dyn Fn(f64) -> AnnealingCoords + Send + Sync>,
}

impl CustomPath {
    /// Wraps `eta`, which must satisfy `eta(1) = (0, 1)`.
    pub fn new<F>(name: impl Into<String>, eta: F) -> Result<Self>
    where
        F: Fn(f64) -> AnnealingCoords + Send + Sync + 'static,
    {
        let end = eta(1.0);
        if end != AnnealingCoords::TARGET {
            return Err(Error::Constraint(format!(
                "custom path must end at (0, 1), got ({}, {})",
                end.eta0, end.eta1
            )));
        }
        Ok(Self { name: name.into(), eta: Arc::new(eta) })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPath").field("name", &self.name).finish()
    }
}

/// An annealing path.
#[derive(Debug, Clone)]
pub enum AnnealingPath {
    Linear,
    Spline(SplineKnots),
    Custom(CustomPath),
}

impl AnnealingPath {
    pub fn eta(&self, t: f64) -> Result<AnnealingCoords> {
        match self {
            AnnealingPath::Linear => eta_linear(t),
            AnnealingPath::Spline(phi) => phi.eta(t),
            AnnealingPath::Custom(c) => {
                check_t(t)?;
                let e = (c.eta)(t);
                if e.is_finite() {
                    Ok(e)
                } else {
                    Err(Error::NonFinite("custom path"))
                }
            }
        }
    }

    /// `d eta / dt`. Spline kinks use the right segment; custom curves are
    /// differentiated numerically.
    pub fn eta_derivative(&self, t: f64) -> Result<AnnealingCoords> {
        match self {
            AnnealingPath::Linear => {
                check_t(t)?;
                Ok(AnnealingCoords::new(-1.0, 1.0))
            }
            AnnealingPath::Spline(phi) => phi.eta_derivative(t),
            AnnealingPath::Custom(_) => {
                check_t(t)?;
                let h = 1e-6;
                let (lo, hi) = ((t - h).max(0.0), (t + h).min(1.0));
                let d = self.eta(hi)? - self.eta(lo)?;
                Ok(d.scale(1.0 / (hi - lo)))
            }
        }
    }

    /// Coordinates of every point of `schedule`.
    pub fn etas(&self, schedule: &[f64]) -> Result<Vec<AnnealingCoords>> {
        schedule.iter().map(|&t| self.eta(t)).collect()
    }
}

/// `eta(t) · W` for one state.
pub fn log_density_unnormalized(path: &AnnealingPath, t: f64, w: LogDensities) -> Result<f64> {
    if !w.is_finite() {
        return Err(Error::NonFinite("log-density evaluation"));
    }
    Ok(path.eta(t)?.dot(w))
}

/// Sup-norm distance guaranteed between a path with second derivative bounded
/// by `m` and its best `k`-segment linear spline: `m / (4 k^2)`.
pub fn spline_best_approx_bound(m: f64, k: usize) -> f64 {
    m / (4.0 * (k as f64).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(a: f64, b: f64) -> AnnealingCoords {
        AnnealingCoords::new(a, b)
    }

    fn two_segment() -> SplineKnots {
        SplineKnots::new(vec![c(1.0, 0.0), c(0.5, 0.5), c(0.0, 1.0)]).unwrap()
    }

    #[test]
    fn linear_examples() {
        assert_eq!(eta_linear(0.0).unwrap(), c(1.0, 0.0));
        assert_eq!(eta_linear(1.0).unwrap(), c(0.0, 1.0));
        assert_eq!(eta_linear(0.25).unwrap(), c(0.75, 0.25));
        assert!(matches!(eta_linear(1.5), Err(Error::Domain { .. })));
        assert!(eta_linear(-0.1).is_err());
        assert!(eta_linear(f64::NAN).is_err());
    }

    #[test]
    fn spline_examples() {
        let phi = two_segment();
        assert_eq!(eta_spline(&phi, 0.0).unwrap(), c(1.0, 0.0));
        assert_eq!(eta_spline(&phi, 0.25).unwrap(), c(0.75, 0.25));
        assert_eq!(eta_spline(&phi, 0.5).unwrap(), c(0.5, 0.5));
        assert_eq!(eta_spline(&phi, 1.0).unwrap(), c(0.0, 1.0));
    }

    #[test]
    fn segment_indexing_at_knots() {
        let phi = SplineKnots::linear(4).unwrap();
        assert_eq!(phi.segment_of(0.0), 1);
        assert_eq!(phi.segment_of(0.25), 1);
        assert_eq!(phi.segment_of(0.26), 2);
        assert_eq!(phi.segment_of(1.0), 4);
        let (k, a, b) = phi.weights(0.5);
        assert_eq!((k, a, b), (2, 0.0, 1.0));
    }

    #[test]
    fn derivative_uses_right_segment() {
        let phi = SplineKnots::new(vec![c(1.0, 0.0), c(0.2, 0.2), c(0.0, 1.0)]).unwrap();
        assert_eq!(phi.eta_derivative(0.5).unwrap(), c(-0.4, 1.6));
        assert_eq!(phi.eta_derivative(0.25).unwrap(), c(-1.6, 0.4));
        assert_eq!(phi.eta_derivative(1.0).unwrap(), c(-0.4, 1.6));
    }

    #[test]
    fn invalid_knots_rejected() {
        assert!(SplineKnots::new(vec![c(1.0, 0.0)]).is_err());
        assert!(SplineKnots::new(vec![c(0.9, 0.0), c(0.0, 1.0)]).is_err());
        assert!(SplineKnots::new(vec![c(1.0, 0.0), c(0.0, 0.9)]).is_err());
        assert!(SplineKnots::new(vec![c(1.0, 0.0), c(0.4, 0.6), c(0.7, 0.3), c(0.0, 1.0)]).is_err());
        assert!(SplineKnots::new(vec![c(1.0, 0.0), c(f64::NAN, 0.6), c(0.0, 1.0)]).is_err());
    }

    #[test]
    fn repair_fixed_point() {
        let phi = two_segment();
        assert_eq!(monotone_repair(phi.knots()).unwrap(), phi);
    }

    #[test]
    fn repair_drops_backward_knot() {
        let raw = [c(1.0, 0.0), c(0.4, 0.6), c(0.7, 0.3), c(0.0, 1.0)];
        let fixed = monotone_repair(&raw).unwrap();
        assert_eq!(fixed.knots(), &[c(1.0, 0.0), c(0.4, 0.6), c(0.2, 0.8), c(0.0, 1.0)]);
    }

    /// Every subset of interior positions, kept together with the endpoints,
    /// that forms a monotone chain.
    fn monotone_subsequences(knots: &[AnnealingCoords]) -> Vec<Vec<usize>> {
        let interior = knots.len() - 2;
        let mut out = Vec::new();
        for mask in 0u32..(1 << interior) {
            let mut idx = vec![0];
            idx.extend((0..interior).filter(|i| mask & (1 << i) != 0).map(|i| i + 1));
            idx.push(knots.len() - 1);
            let ok = idx.windows(2).all(|p| {
                knots[p[1]].eta0 <= knots[p[0]].eta0 && knots[p[1]].eta1 >= knots[p[0]].eta1
            });
            if ok {
                out.push(idx);
            }
        }
        out
    }

    #[test]
    fn repair_keeps_a_monotone_subsequence_exhaustive() {
        let raw = [c(1.0, 0.0), c(0.4, 0.6), c(0.7, 0.3), c(0.0, 1.0)];
        let subs = monotone_subsequences(&raw);
        assert_eq!(subs, vec![vec![0, 3], vec![0, 1, 3], vec![0, 2, 3]]);
        let fixed = monotone_repair(&raw).unwrap();
        let kept: Vec<usize> = (0..raw.len()).filter(|&j| fixed.knots()[j] == raw[j]).collect();
        assert!(subs.contains(&kept));
        assert_eq!(kept, vec![0, 1, 3]);
    }

    #[test]
    fn repair_all_interior_at_endpoint() {
        let raw = [c(1.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 1.0)];
        let fixed = monotone_repair(&raw).unwrap();
        assert_eq!(fixed.knots()[1], c(0.0, 1.0));
        let raw = [c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)];
        assert_eq!(monotone_repair(&raw).unwrap().knots()[1], c(1.0, 0.0));
        let raw = [c(1.0, 0.0), c(1.5, -0.5), c(2.0, -1.0), c(0.0, 1.0)];
        let fixed = monotone_repair(&raw).unwrap();
        assert_eq!(
            fixed.knots(),
            SplineKnots::linear(3).unwrap().knots(),
            "out-of-range interior knots are respaced along the straight line"
        );
    }

    #[test]
    fn repair_rejects_bad_endpoints() {
        assert!(monotone_repair(&[c(0.5, 0.0), c(0.0, 1.0)]).is_err());
    }

    #[test]
    fn log_density_examples() {
        let w = LogDensities::new(-3.2, -0.7);
        assert_eq!(log_density_unnormalized(&AnnealingPath::Linear, 1.0, w).unwrap(), -0.7);
        let w = LogDensities::new(-2.0, -4.0);
        assert_eq!(log_density_unnormalized(&AnnealingPath::Linear, 0.5, w).unwrap(), -3.0);
        let sp = AnnealingPath::Spline(two_segment());
        assert_eq!(log_density_unnormalized(&sp, 0.25, w).unwrap(), -2.5);
        let bad = LogDensities::new(f64::NEG_INFINITY, 0.0);
        assert!(matches!(
            log_density_unnormalized(&AnnealingPath::Linear, 0.5, bad),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn approx_bound_examples() {
        assert_eq!(spline_best_approx_bound(1.0, 1), 0.25);
        assert_eq!(spline_best_approx_bound(4.0, 2), 0.25);
        assert!((spline_best_approx_bound(1.0, 10) - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn spline_approximates_smooth_curve() {
        let curve = |t: f64| c((1.0 - t).powi(2), 1.0 - (1.0 - t).powi(2));
        for k in [1usize, 2, 4, 8] {
            let knots: Vec<_> = (0..=k).map(|i| curve(i as f64 / k as f64)).collect();
            let phi = SplineKnots::new(knots).unwrap();
            let err = (0..=10_000)
                .map(|i| {
                    let t = i as f64 / 10_000.0;
                    let d = phi.eta(t).unwrap() - curve(t);
                    d.eta0.abs().max(d.eta1.abs())
                })
                .fold(0.0, f64::max);
            assert!(err <= spline_best_approx_bound(2.0, k), "K={k}: {err}");
        }
    }

    #[test]
    fn custom_path_endpoint_enforced() {
        assert!(CustomPath::new("bad", |t| c(1.0 - t, 0.5 * t)).is_err());
        let p = AnnealingPath::Custom(
            CustomPath::new("quad", |t: f64| c((1.0 - t).powi(2), 1.0 - (1.0 - t).powi(2))).unwrap(),
        );
        assert_eq!(p.eta(1.0).unwrap(), AnnealingCoords::TARGET);
        let d = p.eta_derivative(0.5).unwrap();
        assert!((d.eta0 + 1.0).abs() < 1e-6 && (d.eta1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn knots_json_is_array_of_pairs() {
        let phi = two_segment();
        let s = serde_json::to_string(&phi).unwrap();
        assert_eq!(s, "[[1.0,0.0],[0.5,0.5],[0.0,1.0]]");
        let back: SplineKnots = serde_json::from_str(&s).unwrap();
        assert_eq!(back, phi);
        assert!(serde_json::from_str::<SplineKnots>("[[1.0,0.0],[0.0,0.5]]").is_err());
    }

    fn raw_knots() -> impl Strategy<Value = Vec<AnnealingCoords>> {
        prop::collection::vec((-0.5f64..1.5, -0.5f64..1.5), 0..8).prop_map(|inner| {
            let mut v = vec![AnnealingCoords::REFERENCE];
            v.extend(inner.into_iter().map(|(a, b)| c(a, b)));
            v.push(AnnealingCoords::TARGET);
            v
        })
    }

    proptest! {
        #[test]
        fn repair_is_valid_and_idempotent(raw in raw_knots()) {
            let once = monotone_repair(&raw).unwrap();
            prop_assert!(SplineKnots::new(once.knots().to_vec()).is_ok());
            prop_assert_eq!(once.knots().len(), raw.len());
            let twice = monotone_repair(once.knots()).unwrap();
            prop_assert_eq!(&twice, &once);
        }

        #[test]
        fn repaired_paths_flow_monotonically(raw in raw_knots()) {
            let phi = monotone_repair(&raw).unwrap();
            let path = AnnealingPath::Spline(phi);
            prop_assert_eq!(path.eta(0.0).unwrap(), AnnealingCoords::REFERENCE);
            prop_assert_eq!(path.eta(1.0).unwrap(), AnnealingCoords::TARGET);
            let mut prev = path.eta(0.0).unwrap();
            for i in 1..=500 {
                let e = path.eta(i as f64 / 500.0).unwrap();
                prop_assert!(e.eta0 <= prev.eta0 + 1e-12);
                prop_assert!(e.eta1 >= prev.eta1 - 1e-12);
                prev = e;
            }
        }

        #[test]
        fn spline_output_within_bracketing_knots(raw in raw_knots(), t in 0.0f64..=1.0) {
            let phi = monotone_repair(&raw).unwrap();
            let e = phi.eta(t).unwrap();
            let k = phi.segment_of(t);
            let (a, b) = (phi.knots()[k - 1], phi.knots()[k]);
            prop_assert!(e.eta0 >= a.eta0.min(b.eta0) - 1e-12 && e.eta0 <= a.eta0.max(b.eta0) + 1e-12);
            prop_assert!(e.eta1 >= a.eta1.min(b.eta1) - 1e-12 && e.eta1 <= a.eta1.max(b.eta1) + 1e-12);
        }
    }
}
