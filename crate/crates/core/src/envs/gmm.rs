use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use super::constants::{GMM_COMPONENTS, GMM_HALF_WIDTH, GMM_HORIZON, GMM_MEANS_SEED, GMM_STEP_SIZE};
use super::{Environment, StepOutcome};
use crate::error::{DqsError, Result};
use crate::ndmath::log_sum_exp;
use crate::rng::DqsRng;

/// Equal-weight mixture of unit-variance isotropic 2-D Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub means: Vec<[f64; 2]>,
}

impl GaussianMixture {
    /// The fixed 40-component mixture used by [`GmmNavEnv`].
    pub fn standard() -> Self {
        let mut rng = DqsRng::seed_from_u64(GMM_MEANS_SEED);
        let means = (0..GMM_COMPONENTS)
            .map(|_| {
                [
                    rng.random_range(-GMM_HALF_WIDTH..=GMM_HALF_WIDTH),
                    rng.random_range(-GMM_HALF_WIDTH..=GMM_HALF_WIDTH),
                ]
            })
            .collect();
        Self { means }
    }

    pub fn log_density(&self, p: [f64; 2]) -> f64 {
        mixture_log_density(&self.means, p)
    }

    /// I.i.d. draws from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| {
                let m = self.means[rng.random_range(0..self.means.len())];
                [
                    m[0] + rng.sample::<f64, _>(StandardNormal),
                    m[1] + rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect()
    }
}

/// `log( (1/K) Σₖ N(p; μₖ, I) )` in two dimensions.
pub fn mixture_log_density(means: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let terms: Vec<f64> = means
        .iter()
        .map(|m| -0.5 * ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)))
        .collect();
    log_sum_exp(&terms) - (means.len() as f64).ln() - (2.0 * PI).ln()
}

/// Point agent taking unit-length steps; reward is the mixture log-density
/// at the new position.
#[derive(Debug, Clone)]
pub struct GmmNavEnv {
    pub mixture: GaussianMixture,
    position: [f64; 2],
    t: usize,
}

impl Default for GmmNavEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl GmmNavEnv {
    pub fn new() -> Self {
        Self {
            mixture: GaussianMixture::standard(),
            position: [0.0, 0.0],
            t: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }
}

fn random_unit(rng: &mut DqsRng) -> Vec<f64> {
    let angle: f64 = rng.random_range(0.0..2.0 * PI);
    vec![angle.cos(), angle.sin()]
}

impl Environment for GmmNavEnv {
    fn name(&self) -> &'static str {
        "gmm"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_bound(&self) -> Vec<f64> {
        vec![1.0, 1.0]
    }

    fn horizon(&self) -> usize {
        GMM_HORIZON
    }

    fn reset(&mut self, _rng: &mut DqsRng) -> Vec<f64> {
        self.position = [0.0, 0.0];
        self.t = 0;
        self.position.to_vec()
    }

    /// A zero action is replaced by a uniformly random direction.
    fn step(&mut self, action: &[f64], rng: &mut DqsRng) -> Result<StepOutcome> {
        if action.len() != 2 {
            return Err(DqsError::dim(2, action.len()));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(DqsError::Numeric(format!("non-finite action {action:?}")));
        }
        let norm = action[0].hypot(action[1]);
        let dir = if norm > 0.0 {
            vec![action[0] / norm, action[1] / norm]
        } else {
            random_unit(rng)
        };
        self.position[0] += GMM_STEP_SIZE * dir[0];
        self.position[1] += GMM_STEP_SIZE * dir[1];
        self.t += 1;
        let done = self.t >= GMM_HORIZON;
        Ok(StepOutcome {
            state: self.position.to_vec(),
            reward: self.mixture.log_density(self.position),
            done,
            truncated: done,
        })
    }

    fn uniform_action(&self, rng: &mut DqsRng) -> Vec<f64> {
        random_unit(rng)
    }

    fn position(&self) -> [f64; 2] {
        self.position
    }
}
