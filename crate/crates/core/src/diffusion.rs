//! Variance-exploding diffusion: geometric noise schedule, forward noising,
//! the K-sample Monte Carlo score estimator and reverse-SDE integration.
//!
//! The forward process has zero drift and marginal standard deviation
//! `σ(τ) = σ_min (σ_max/σ_min)^τ`, so the squared diffusion coefficient is
//! `g²(τ) = dσ²/dτ = 2 ln(σ_max/σ_min) σ(τ)²`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{DqsError, Result};
use crate::ndmath::{pairwise_sum, DenseArray};

pub const DEFAULT_SIGMA_MIN: f64 = 1e-5;
pub const DEFAULT_SIGMA_MAX: f64 = 1.0;
pub const DEFAULT_INTEGRATION_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    sigma_min: f64,
    sigma_max: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma_min: DEFAULT_SIGMA_MIN,
            sigma_max: DEFAULT_SIGMA_MAX,
        }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(DqsError::Config(format!(
                "noise schedule needs 0 < sigma_min < sigma_max, got {sigma_min} / {sigma_max}"
            )));
        }
        Ok(Self { sigma_min, sigma_max })
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    fn log_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }

    fn check_tau(tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(DqsError::Domain(format!("diffusion time {tau} outside [0, 1]")));
        }
        Ok(())
    }

    /// `σ(τ)` for `τ ∈ [0, 1]`.
    pub fn sigma_at(&self, tau: f64) -> Result<f64> {
        Self::check_tau(tau)?;
        Ok(self.sigma(tau))
    }

    pub(crate) fn sigma(&self, tau: f64) -> f64 {
        self.sigma_min * (tau * self.log_ratio()).exp()
    }

    /// `g²(τ) = 2 ln(σ_max/σ_min) σ(τ)²`.
    pub fn g_squared(&self, tau: f64) -> Result<f64> {
        Self::check_tau(tau)?;
        let s = self.sigma(tau);
        Ok(2.0 * self.log_ratio() * s * s)
    }
}

fn normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `x0 + σ(τ) ε` with `ε ~ N(0, I)`.
pub fn add_noise<R: Rng + ?Sized>(
    schedule: &NoiseSchedule,
    x0: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sigma = schedule.sigma_at(tau)?;
    Ok(x0
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Energies and their gradients at a batch of points.
#[derive(Debug, Clone)]
pub struct EnergyBatch {
    pub energies: Vec<f64>,
    /// `[n, dim]`, row `i` is `∇𝓔(point_i)`.
    pub gradients: DenseArray,
}

/// A differentiable energy `𝓔: ℝ^dim → ℝ`, evaluated in batches.
pub trait EnergyFunction {
    fn dim(&self) -> usize;

    fn evaluate(&self, points: &DenseArray) -> Result<EnergyBatch>;
}

/// Energy given by a per-point closure returning `(𝓔(x), ∇𝓔(x))`.
pub struct FnEnergy<F> {
    dim: usize,
    f: F,
}

impl<F> FnEnergy<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> EnergyFunction for FnEnergy<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, points: &DenseArray) -> Result<EnergyBatch> {
        let mut energies = Vec::with_capacity(points.rows());
        let mut grads = Vec::with_capacity(points.len());
        for r in 0..points.rows() {
            let (e, g) = (self.f)(points.row_slice(r));
            if g.len() != self.dim {
                return Err(DqsError::dim(self.dim, g.len()));
            }
            energies.push(e);
            grads.extend(g);
        }
        Ok(EnergyBatch {
            energies,
            gradients: DenseArray::from_vec(&[points.rows(), self.dim], grads)?,
        })
    }
}

/// `∇ log Σᵢ exp(−𝓔ᵢ) = Σᵢ wᵢ (−∇𝓔ᵢ)` with `w = softmax(−𝓔)`.
///
/// Points with a non-finite energy get zero weight.
pub fn softmax_weighted_score(batch: &EnergyBatch) -> Result<Vec<f64>> {
    let k = batch.energies.len();
    let dim = batch.gradients.cols();
    let logits: Vec<f64> = batch
        .energies
        .iter()
        .map(|&e| if e.is_finite() { -e } else { f64::NEG_INFINITY })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(DqsError::Estimation(format!("all {k} energies are non-finite")));
    }
    let unnorm: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total = pairwise_sum(&unnorm);
    let mut score = vec![0.0; dim];
    let mut terms = vec![0.0; k];
    for (d, s) in score.iter_mut().enumerate() {
        for (i, t) in terms.iter_mut().enumerate() {
            *t = if unnorm[i] > 0.0 {
                -unnorm[i] * batch.gradients.data()[i * dim + d]
            } else {
                0.0
            };
        }
        *s = pairwise_sum(&terms) / total;
    }
    if score.iter().any(|v| !v.is_finite()) {
        return Err(DqsError::Estimation("weighted score is non-finite".into()));
    }
    Ok(score)
}

/// K-sample Monte Carlo estimate of the noised-marginal score at `x_tau`.
///
/// Draws `x̃ᵢ = x_τ + σ(τ) εᵢ`; since `∂x̃ᵢ/∂x_τ = I` the gradient of
/// `log Σᵢ exp(−𝓔(x̃ᵢ))` with respect to `x_τ` is the softmax-weighted mean
/// of `−∇𝓔(x̃ᵢ)`.
pub fn mc_score_estimate<E, R>(
    energy: &E,
    schedule: &NoiseSchedule,
    x_tau: &[f64],
    tau: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    E: EnergyFunction + ?Sized,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(DqsError::Domain("Monte Carlo sample count K must be at least 1".into()));
    }
    let dim = x_tau.len();
    if dim != energy.dim() {
        return Err(DqsError::dim(energy.dim(), dim));
    }
    let sigma = schedule.sigma_at(tau)?;
    let mut pts = Vec::with_capacity(k * dim);
    for _ in 0..k {
        for &x in x_tau {
            pts.push(x + sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    let points = DenseArray::from_vec(&[k, dim], pts)?;
    let batch = energy.evaluate(&points)?;
    if batch.energies.len() != k || batch.gradients.shape() != [k, dim] {
        return Err(DqsError::dim(
            format!("{k} energies with [{k}, {dim}] gradients"),
            format!("{} / {:?}", batch.energies.len(), batch.gradients.shape()),
        ));
    }
    softmax_weighted_score(&batch)
}

/// Discretization of the reverse VE SDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// `x ← x + g²·s·Δτ + g·√Δτ·ε`, with `g²Δτ` taken at the interval midpoint.
    EulerMaruyama,
    /// `x ← x + σ(τ)²·s + σ(τ)·ε`, independent of the step size.
    Literal,
}

/// Reverse-diffusion integrator on a uniform grid from `τ = 1` to `τ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseSampler {
    pub schedule: NoiseSchedule,
    pub n_steps: usize,
    pub rule: UpdateRule,
    /// Multiplies `g` (and `σ` under the literal rule); 0 freezes the chain.
    pub g_scale: f64,
}

impl ReverseSampler {
    pub fn new(schedule: NoiseSchedule, n_steps: usize) -> Self {
        Self {
            schedule,
            n_steps,
            rule: UpdateRule::EulerMaruyama,
            g_scale: 1.0,
        }
    }

    /// Drift coefficient applied to the score and noise standard deviation
    /// of one step from `τ` to `τ − Δτ`.
    pub fn step_coefficients(&self, tau: f64, dtau: f64) -> (f64, f64) {
        let k2 = self.g_scale * self.g_scale;
        match self.rule {
            UpdateRule::EulerMaruyama => {
                let mid = (tau - 0.5 * dtau).max(0.0);
                let s = self.schedule.sigma(mid);
                let g2 = 2.0 * self.schedule.log_ratio() * s * s;
                let c = k2 * g2 * dtau;
                (c, c.sqrt())
            }
            UpdateRule::Literal => {
                let s = self.schedule.sigma(tau);
                (k2 * s * s, self.g_scale * s)
            }
        }
    }

    /// One step of the reverse SDE, in place.
    pub fn reverse_step<R: Rng + ?Sized>(
        &self,
        x: &mut [f64],
        score: &[f64],
        tau: f64,
        dtau: f64,
        rng: &mut R,
    ) -> Result<()> {
        if !(dtau > 0.0 && dtau <= tau + 1e-12 && tau <= 1.0) {
            return Err(DqsError::Domain(format!("reverse step needs 0 < dtau <= tau <= 1, got dtau={dtau}, tau={tau}")));
        }
        if score.len() != x.len() {
            return Err(DqsError::dim(x.len(), score.len()));
        }
        if score.iter().any(|v| !v.is_finite()) {
            return Err(DqsError::Numeric(format!("score is non-finite at tau = {tau}")));
        }
        let (drift, noise) = self.step_coefficients(tau, dtau);
        for (xi, si) in x.iter_mut().zip(score) {
            let eps: f64 = rng.sample(StandardNormal);
            *xi += drift * si + noise * eps;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DqsError::Sampling { tau });
        }
        Ok(())
    }

    /// Integrates `n` independent chains of dimension `dim`, starting from
    /// `N(0, σ_max² I)`. `score_fn` receives the current `[n, dim]` batch and `τ`.
    pub fn generate_batch<F, R>(
        &self,
        mut score_fn: F,
        n: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<DenseArray>
    where
        F: FnMut(&DenseArray, f64) -> Result<DenseArray>,
        R: Rng + ?Sized,
    {
        if self.n_steps == 0 {
            return Err(DqsError::Domain("reverse diffusion needs at least one step".into()));
        }
        let smax = self.schedule.sigma_max();
        let init: Vec<f64> = normal_vec(n * dim, rng).into_iter().map(|e| smax * e).collect();
        let mut x = DenseArray::from_vec(&[n, dim], init)?;
        let dtau = 1.0 / self.n_steps as f64;
        for step in 0..self.n_steps {
            let tau = 1.0 - step as f64 * dtau;
            let score = score_fn(&x, tau)?;
            if score.shape() != x.shape() {
                return Err(DqsError::dim(format!("{:?}", x.shape()), format!("{:?}", score.shape())));
            }
            self.reverse_step(x.data_mut(), score.data(), tau, dtau, rng)?;
        }
        Ok(x)
    }

    /// Single-chain form of [`generate_batch`](Self::generate_batch).
    pub fn generate_sample<F, R>(&self, mut score_fn: F, dim: usize, rng: &mut R) -> Result<Vec<f64>>
    where
        F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
        R: Rng + ?Sized,
    {
        let out = self.generate_batch(
            |x, tau| {
                let s = score_fn(x.data(), tau)?;
                if s.len() != dim {
                    return Err(DqsError::dim(dim, s.len()));
                }
                DenseArray::from_vec(&[1, dim], s)
            },
            1,
            dim,
            rng,
        )?;
        Ok(out.into_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic() -> FnEnergy<impl Fn(&[f64]) -> (f64, Vec<f64>)> {
        FnEnergy::new(2, |x: &[f64]| (0.5 * x.iter().map(|v| v * v).sum::<f64>(), x.to_vec()))
    }

    #[test]
    fn sigma_endpoints_and_midpoint() {
        let s = NoiseSchedule::default();
        assert!((s.sigma_at(0.0).unwrap() - 1e-5).abs() < 1e-18);
        assert!((s.sigma_at(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((s.sigma_at(0.5).unwrap() - 3.1623e-3).abs() < 1e-7);
        assert!(matches!(s.sigma_at(1.5), Err(DqsError::Domain(_))));
        assert!(matches!(s.sigma_at(-0.1), Err(DqsError::Domain(_))));
        assert!(NoiseSchedule::new(1.0, 0.5).is_err());
    }

    #[test]
    fn variance_budget_over_uniform_grid() {
        let sampler = ReverseSampler::new(NoiseSchedule::default(), 1000);
        let dtau = 1e-3;
        let total: f64 = (0..1000)
            .map(|k| sampler.step_coefficients(1.0 - k as f64 * dtau, dtau).0)
            .sum();
        let want = 1.0 - 1e-10;
        assert!((total - want).abs() / want <= 0.01, "{total}");
    }

    #[test]
    fn add_noise_near_identity_and_reproducible() {
        let s = NoiseSchedule::default();
        let x0 = [0.3, -1.2, 4.0];
        let a = add_noise(&s, &x0, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (p, q) in a.iter().zip(&x0) {
            assert!((p - q).abs() < 1e-4);
        }
        let b = add_noise(&s, &x0, 0.7, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let c = add_noise(&s, &x0, 0.7, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(b, c);
    }

    #[test]
    fn add_noise_variance_at_unit_sigma() {
        let s = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| add_noise(&s, &[0.0], 1.0, &mut rng).unwrap()[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((0.97..=1.03).contains(&var), "{var}");
    }

    #[test]
    fn constant_energy_gives_zero_score() {
        let e = FnEnergy::new(2, |_: &[f64]| (3.5, vec![0.0, 0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in [1, 10, 500] {
            let s = mc_score_estimate(&e, &NoiseSchedule::default(), &[0.4, -0.2], 0.6, k, &mut rng).unwrap();
            assert_eq!(s, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn single_sample_is_negative_gradient_at_draw() {
        let sched = NoiseSchedule::default();
        let x = [0.5, -1.0];
        let tau = 0.8;
        let s = mc_score_estimate(&quadratic(), &sched, &x, tau, 1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        // replay the single draw
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = sched.sigma_at(tau).unwrap();
        let drawn: Vec<f64> = x.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        assert_eq!(s, drawn.iter().map(|v| -v).collect::<Vec<_>>());
    }

    #[test]
    fn estimator_error_paths() {
        let sched = NoiseSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(
            mc_score_estimate(&quadratic(), &sched, &[0.0, 0.0], 0.5, 0, &mut rng),
            Err(DqsError::Domain(_))
        ));
        let inf = FnEnergy::new(1, |_: &[f64]| (f64::INFINITY, vec![0.0]));
        assert!(matches!(
            mc_score_estimate(&inf, &sched, &[0.0], 0.5, 8, &mut rng),
            Err(DqsError::Estimation(_))
        ));
    }

    #[test]
    fn estimator_shift_invariance() {
        let sched = NoiseSchedule::default();
        let shifted = FnEnergy::new(2, |x: &[f64]| {
            (0.5 * x.iter().map(|v| v * v).sum::<f64>() + 3.0, x.to_vec())
        });
        let a = mc_score_estimate(&quadratic(), &sched, &[1.0, 2.0], 0.9, 64, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = mc_score_estimate(&shifted, &sched, &[1.0, 2.0], 0.9, 64, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0), "{p} vs {q}");
        }
    }

    #[test]
    fn frozen_chain_is_identity() {
        let mut sampler = ReverseSampler::new(NoiseSchedule::default(), 50);
        sampler.g_scale = 0.0;
        let mut x = vec![0.25, -0.5];
        sampler
            .reverse_step(&mut x, &[0.0, 0.0], 0.5, 0.02, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(x, vec![0.25, -0.5]);

        let prior = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            normal_vec(3, &mut rng)
        };
        let out = sampler
            .generate_sample(|_, _| Ok(vec![0.0; 3]), 3, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(out, prior);
    }

    #[test]
    fn reverse_step_errors() {
        let sampler = ReverseSampler::new(NoiseSchedule::default(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = vec![0.0];
        assert!(matches!(sampler.reverse_step(&mut x, &[f64::NAN], 0.5, 0.1, &mut rng), Err(DqsError::Numeric(_))));
        assert!(sampler.reverse_step(&mut x, &[0.0], 0.05, 0.1, &mut rng).is_err());
        let r = sampler.generate_sample(|_, _| Ok(vec![0.0, 0.0]), 1, &mut rng);
        assert!(matches!(r, Err(DqsError::Dimension { .. })));
    }

    #[test]
    fn fixed_seed_trajectory_is_deterministic() {
        let sampler = ReverseSampler::new(NoiseSchedule::default(), 100);
        let run = || {
            sampler
                .generate_sample(|x, _| Ok(x.iter().map(|v| -v).collect()), 2, &mut ChaCha8Rng::seed_from_u64(77))
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
