use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::{ExplorationKernel, Model};
use crate::error::{Error, Result};
use crate::paths::{AnnealingCoords, LogDensities};

/// Bayesian Gaussian mixture with unmarginalized labels.
///
/// Prior: `w ~ Dir(1_C)`, `mu_c ~ N(prior_mean, prior_sd^2)`, `z_j | w ~ Cat(w)`.
/// Likelihood: `x_j | z, mu ~ N(mu_{z_j}, component_sd^2)`.
///
/// `W0` is the log prior of `(w, mu, z)` and `W1` adds the log likelihood, so
/// the tempered law is `prior^(eta0 + eta1) * likelihood^eta1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    data: Vec<f64>,
    components: usize,
    prior_mean: f64,
    prior_sd: f64,
    component_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Exponents applied to the prior and to the likelihood.
#[derive(Debug, Clone, Copy)]
struct Tempering {
    prior: f64,
    lik: f64,
}

impl MixtureModel {
    pub fn new(data: Vec<f64>, components: usize, prior_mean: f64, component_sd: f64) -> Result<Self> {
        if components < 2 {
            return Err(Error::InvalidArgument("mixture needs at least two components".into()));
        }
        if data.is_empty() {
            return Err(Error::InvalidArgument("mixture needs data".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mixture data"));
        }
        if !(component_sd > 0.0) {
            return Err(Error::Domain { value: component_sd, domain: "component_sd > 0" });
        }
        Ok(Self { data, components, prior_mean, prior_sd: 1.0, component_sd })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn components(&self) -> usize {
        self.components
    }

    fn tempering(&self, eta: AnnealingCoords) -> Result<Tempering> {
        self.check(eta)?;
        Ok(Tempering { prior: eta.eta0 + eta.eta1, lik: eta.eta1 })
    }

    fn lik_term(&self, x: f64, mu: f64) -> f64 {
        let d = x - mu;
        -d * d / (2.0 * self.component_sd * self.component_sd)
    }

    fn counts(&self, labels: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut n = vec![0.0; self.components];
        let mut sum = vec![0.0; self.components];
        for (&z, &x) in labels.iter().zip(&self.data) {
            n[z] += 1.0;
            sum[z] += x;
        }
        (n, sum)
    }

    /// Mean and precision of the Gaussian conditional of `mu_c`.
    pub fn mean_conditional(&self, eta: AnnealingCoords, state: &MixtureState, c: usize) -> Result<(f64, f64)> {
        let t = self.tempering(eta)?;
        let (n, sum) = self.counts(&state.labels);
        Ok(self.mean_conditional_from(t, n[c], sum[c]))
    }

    fn mean_conditional_from(&self, t: Tempering, n: f64, sum: f64) -> (f64, f64) {
        let pv = self.prior_sd * self.prior_sd;
        let cv = self.component_sd * self.component_sd;
        let precision = t.prior / pv + t.lik * n / cv;
        let mean = (t.prior * self.prior_mean / pv + t.lik * sum / cv) / precision;
        (mean, precision)
    }

    /// Conditional label probabilities of observation `j`.
    pub fn label_probabilities(&self, eta: AnnealingCoords, state: &MixtureState, j: usize) -> Result<Vec<f64>> {
        let t = self.tempering(eta)?;
        let mut logp = vec![0.0; self.components];
        Ok(self.label_probs_into(t, &state.weights, &state.means, self.data[j], &mut logp).to_vec())
    }

    fn label_probs_into<'a>(&self, t: Tempering, w: &[f64], mu: &[f64], x: f64, buf: &'a mut [f64]) -> &'a [f64] {
        for c in 0..self.components {
            buf[c] = t.prior * w[c].ln() + t.lik * self.lik_term(x, mu[c]);
        }
        let max = buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in buf.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in buf.iter_mut() {
            *v /= total;
        }
        buf
    }

    fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return c;
            }
        }
        probs.len() - 1
    }

    fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
        let mut w: Vec<f64> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng).max(f64::MIN_POSITIVE))
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }

    fn ln_dirichlet(w: &[f64], alpha: &[f64]) -> f64 {
        let a0: f64 = alpha.iter().sum();
        ln_gamma(a0) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
            + w.iter().zip(alpha).map(|(wi, ai)| (ai - 1.0) * wi.ln()).sum::<f64>()
    }

    fn gibbs_means<R: Rng + ?Sized>(&self, t: Tempering, s: &mut MixtureState, rng: &mut R) {
        let (n, sum) = self.counts(&s.labels);
        for c in 0..self.components {
            let (m, p) = self.mean_conditional_from(t, n[c], sum[c]);
            s.means[c] = m + rng.sample::<f64, _>(StandardNormal) / p.sqrt();
        }
    }

    fn gibbs_labels<R: Rng + ?Sized>(&self, t: Tempering, s: &mut MixtureState, rng: &mut R) {
        let mut buf = vec![0.0; self.components];
        for (j, &x) in self.data.iter().enumerate() {
            let probs = self.label_probs_into(t, &s.weights, &s.means, x, &mut buf);
            s.labels[j] = Self::sample_categorical(probs, rng);
        }
    }

    fn weight_posterior(&self, t: Tempering, counts: &[f64]) -> Vec<f64> {
        counts.iter().map(|n| 1.0 + t.prior * n).collect()
    }

    fn gibbs_weights<R: Rng + ?Sized>(&self, t: Tempering, s: &mut MixtureState, rng: &mut R) {
        let (n, _) = self.counts(&s.labels);
        s.weights = Self::sample_dirichlet(&self.weight_posterior(t, &n), rng);
    }

    /// Log tempered density of `w` given the means, labels summed out, and
    /// the expected label counts used to build the proposal.
    fn collapsed(&self, t: Tempering, w: &[f64], mu: &[f64]) -> (f64, Vec<f64>) {
        let mut soft = vec![0.0; self.components];
        let mut buf = vec![0.0; self.components];
        let mut logp = 0.0;
        for &x in &self.data {
            let mut max = f64::NEG_INFINITY;
            for c in 0..self.components {
                buf[c] = t.prior * w[c].ln() + t.lik * self.lik_term(x, mu[c]);
                max = max.max(buf[c]);
            }
            let mut total = 0.0;
            for v in buf.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            logp += max + total.ln();
            for c in 0..self.components {
                soft[c] += buf[c] / total;
            }
        }
        (logp, soft)
    }

    /// Independence-type Metropolis–Hastings move on `w` with labels
    /// marginalized, followed by a fresh label draw. The proposal is the
    /// Dirichlet conditional evaluated at expected label counts.
    fn mh_weights<R: Rng + ?Sized>(&self, t: Tempering, s: &mut MixtureState, rng: &mut R) {
        let (logp_cur, soft_cur) = self.collapsed(t, &s.weights, &s.means);
        let alpha_fwd = self.weight_posterior(t, &soft_cur);
        let proposal = Self::sample_dirichlet(&alpha_fwd, rng);
        let (logp_new, soft_new) = self.collapsed(t, &proposal, &s.means);
        let alpha_rev = self.weight_posterior(t, &soft_new);
        let log_ratio = logp_new - logp_cur + Self::ln_dirichlet(&s.weights, &alpha_rev)
            - Self::ln_dirichlet(&proposal, &alpha_fwd);
        if log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio {
            s.weights = proposal;
        }
        self.gibbs_labels(t, s, rng);
    }
}

impl Model for MixtureModel {
    type State = MixtureState;

    fn log_densities(&self, s: &MixtureState) -> LogDensities {
        let pv = self.prior_sd * self.prior_sd;
        let mut w0: f64 = s.means.iter().map(|m| -(m - self.prior_mean).powi(2) / (2.0 * pv)).sum();
        let mut lik = 0.0;
        for (&z, &x) in s.labels.iter().zip(&self.data) {
            w0 += s.weights[z].ln();
            lik += self.lik_term(x, s.means[z]);
        }
        LogDensities::new(w0, w0 + lik)
    }

    fn is_normalizable(&self, eta: AnnealingCoords) -> bool {
        eta.eta0 + eta.eta1 > 0.0 && eta.eta1 >= 0.0
    }

    /// Equal proportions, zero means, every label in component 0.
    fn initial_state<R: Rng + ?Sized>(&self, _rng: &mut R) -> MixtureState {
        MixtureState {
            weights: vec![1.0 / self.components as f64; self.components],
            means: vec![0.0; self.components],
            labels: vec![0; self.data.len()],
        }
    }

    fn kernel(&self) -> ExplorationKernel {
        ExplorationKernel::GibbsComposite
    }

    fn explore<R: Rng + ?Sized>(&self, eta: AnnealingCoords, s: &mut MixtureState, rng: &mut R) -> Result<()> {
        let t = self.tempering(eta)?;
        self.gibbs_means(t, s, rng);
        self.gibbs_labels(t, s, rng);
        self.gibbs_weights(t, s, rng);
        self.mh_weights(t, s, rng);
        Ok(())
    }

    /// Exact draws exist only at the reference, where the law is the prior.
    fn sample_exact<R: Rng + ?Sized>(&self, eta: AnnealingCoords, rng: &mut R) -> Option<Result<MixtureState>> {
        if eta != AnnealingCoords::REFERENCE {
            return None;
        }
        let weights = Self::sample_dirichlet(&vec![1.0; self.components], rng);
        let means = (0..self.components)
            .map(|_| self.prior_mean + self.prior_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let labels = (0..self.data.len()).map(|_| Self::sample_categorical(&weights, rng)).collect();
        Some(Ok(MixtureState { weights, means, labels }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{ks_critical_value, ks_statistic};
    use crate::rng::{stream, Purpose};
    use statrs::distribution::{Beta, ContinuousCDF, Normal};

    fn c(a: f64, b: f64) -> AnnealingCoords {
        AnnealingCoords::new(a, b)
    }

    fn tiny() -> MixtureModel {
        MixtureModel::new(vec![-0.5, 0.3, 1.7], 2, 0.5, 0.8).unwrap()
    }

    #[test]
    fn constructor_validates() {
        assert!(MixtureModel::new(vec![1.0], 1, 0.0, 1.0).is_err());
        assert!(MixtureModel::new(vec![], 2, 0.0, 1.0).is_err());
        assert!(MixtureModel::new(vec![1.0], 2, 0.0, 0.0).is_err());
        assert!(tiny().check(c(0.5, -0.1)).is_err());
        assert!(tiny().check(c(-0.5, 0.4)).is_err());
    }

    #[test]
    fn reference_conditionals_are_prior() {
        let m = tiny();
        let s = MixtureState { weights: vec![0.2, 0.8], means: vec![3.0, -2.0], labels: vec![0, 1, 1] };
        let (mean, prec) = m.mean_conditional(c(1.0, 0.0), &s, 0).unwrap();
        assert_eq!((mean, prec), (0.5, 1.0));
        let p = m.label_probabilities(c(1.0, 0.0), &s, 2).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-12 && (p[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn target_label_conditional() {
        let m = tiny();
        let s = MixtureState { weights: vec![0.3, 0.7], means: vec![0.0, 1.0], labels: vec![0, 0, 0] };
        let p = m.label_probabilities(c(0.0, 1.0), &s, 1).unwrap();
        let n = |mu: f64| (-(0.3f64 - mu).powi(2) / (2.0 * 0.64)).exp();
        let want = 0.3 * n(0.0) / (0.3 * n(0.0) + 0.7 * n(1.0));
        assert!((p[0] - want).abs() < 1e-12);
    }

    #[test]
    fn mean_conditional_matches_grid_posterior() {
        let m = tiny();
        let s = MixtureState { weights: vec![0.4, 0.6], means: vec![0.0, 0.0], labels: vec![0, 1, 0] };
        for eta in [c(0.0, 1.0), c(0.3, 0.7), c(0.2, 0.05), c(1.2, 0.6)] {
            let (mean, prec) = m.mean_conditional(eta, &s, 0).unwrap();
            let (lo, hi, n) = (-12.0, 12.0, 200_000);
            let h = (hi - lo) / n as f64;
            let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for i in 0..=n {
                let mu = lo + i as f64 * h;
                let mut st = s.clone();
                st.means[0] = mu;
                let d = eta.dot(m.log_densities(&st)).exp();
                z += d;
                m1 += d * mu;
                m2 += d * mu * mu;
            }
            let gm = m1 / z;
            let gv = m2 / z - gm * gm;
            assert!((gm - mean).abs() < 1e-6, "{eta:?}: {gm} vs {mean}");
            assert!((gv - 1.0 / prec).abs() < 1e-6, "{eta:?}: {gv} vs {}", 1.0 / prec);
        }
    }

    /// Exact tempered expectation of `mu_0` on a tiny data set: enumerate the
    /// labels, integrate weights (Beta integral) and means (Gaussian) in
    /// closed form.
    fn exact_mean_mu0(m: &MixtureModel, eta: AnnealingCoords) -> f64 {
        let (s, e) = (eta.eta0 + eta.eta1, eta.eta1);
        let cv = m.component_sd * m.component_sd;
        let n = m.data.len();
        let (mut z_total, mut acc) = (0.0, 0.0);
        for mask in 0..(1usize << n) {
            let labels: Vec<usize> = (0..n).map(|j| (mask >> j) & 1).collect();
            let (cnt, sum) = m.counts(&labels);
            let sq: Vec<f64> = (0..2)
                .map(|c| labels.iter().zip(&m.data).filter(|(&z, _)| z == c).map(|(_, x)| x * x).sum())
                .collect();
            let a = 1.0 + s * cnt[0];
            let b = 1.0 + s * cnt[1];
            let mut logw = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            for c in 0..2 {
                let p = s + e * cnt[c] / cv;
                let bb = s * m.prior_mean + e * sum[c] / cv;
                logw += 0.5 * (2.0 * std::f64::consts::PI / p).ln()
                    - 0.5 * (s * m.prior_mean * m.prior_mean + e * sq[c] / cv)
                    + 0.5 * bb * bb / p;
            }
            let wgt = logw.exp();
            let p0 = s + e * cnt[0] / cv;
            let mean0 = (s * m.prior_mean + e * sum[0] / cv) / p0;
            z_total += wgt;
            acc += wgt * mean0;
        }
        acc / z_total
    }

    #[test]
    fn composite_kernel_matches_enumeration() {
        let m = tiny();
        for (i, eta) in [c(0.0, 1.0), c(0.4, 0.3)].into_iter().enumerate() {
            let want = exact_mean_mu0(&m, eta);
            let mut rng = stream(11, Purpose::Explore, i as u64, 0);
            let mut s = m.initial_state(&mut rng);
            let (burn, n) = (1_000, 200_000);
            let mut xs = Vec::with_capacity(n);
            for k in 0..burn + n {
                m.explore(eta, &mut s, &mut rng).unwrap();
                if k >= burn {
                    xs.push(s.means[0]);
                }
            }
            let mean = xs.iter().sum::<f64>() / n as f64;
            // batch means for the Monte Carlo standard error
            let batches: Vec<f64> = xs.chunks(n / 100).map(|b| b.iter().sum::<f64>() / b.len() as f64).collect();
            let bv = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / 99.0;
            let se = (bv / 100.0).sqrt();
            assert!((mean - want).abs() < 4.0 * se + 1e-3, "{eta:?}: {mean} vs {want} (se {se})");
        }
    }

    #[test]
    fn reference_chain_keeps_prior_marginals() {
        let m = MixtureModel::new(vec![1.0, 2.0, 8.0, 9.0, 9.5], 3, 0.0, 1.0).unwrap();
        let mut rng = stream(12, Purpose::Explore, 0, 0);
        let mut mu = Vec::new();
        let mut w = Vec::new();
        for _ in 0..10_000 {
            let mut s = m.sample_exact(c(1.0, 0.0), &mut rng).unwrap().unwrap();
            m.explore(c(1.0, 0.0), &mut s, &mut rng).unwrap();
            mu.push(s.means[1]);
            w.push(s.weights[0]);
        }
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let beta = Beta::new(1.0, 2.0).unwrap();
        assert!(ks_statistic(&mut mu, |x| nrm.cdf(x)) < ks_critical_value(10_000, 1e-3));
        assert!(ks_statistic(&mut w, |x| beta.cdf(x)) < ks_critical_value(10_000, 1e-3));
        assert!(m.sample_exact(c(0.5, 0.5), &mut rng).is_none());
    }

    #[test]
    fn empty_clusters_draw_from_prior() {
        let m = tiny();
        let mut s = MixtureState { weights: vec![0.5, 0.5], means: vec![0.0, 0.0], labels: vec![0, 0, 0] };
        let (mean, prec) = m.mean_conditional(c(0.0, 1.0), &s, 1).unwrap();
        assert_eq!((mean, prec), (0.5, 1.0));
        m.explore(c(0.0, 1.0), &mut s, &mut stream(0, Purpose::Explore, 0, 0)).unwrap();
        assert!(s.means.iter().all(|v| v.is_finite()));
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
