//! Reverse-SDE sampling driven by an analytic score, checked with MMD.

use anyhow::Result;
use dqs::diffusion::{NoiseSchedule, ReverseSampler};
use dqs::eval::mmd;
use dqs::ndmath::DenseArray;
use dqs::rng::seeded;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> Result<()> {
    let (n, dim) = (1000, 2);
    let mut rng = seeded(3);
    for sigma_max in [1.0, 10.0] {
        let schedule = NoiseSchedule::new(1e-5, sigma_max)?;
        let sampler = ReverseSampler::new(schedule, 1000);
        // the marginal of N(0, I) data at level τ is N(0, (1 + σ(τ)²) I)
        let out = sampler.generate_batch(
            |x, tau| {
                let s2 = schedule.sigma_at(tau)?.powi(2);
                let mut s = x.clone();
                s.scale(-1.0 / (1.0 + s2));
                Ok(s)
            },
            n,
            dim,
            &mut rng,
        )?;
        let var = out.data().iter().map(|v| v * v).sum::<f64>() / out.len() as f64;
        let normal = |rng: &mut dqs::rng::DqsRng| -> Result<DenseArray> {
            Ok(DenseArray::from_vec(&[n, dim], (0..n * dim).map(|_| rng.sample(StandardNormal)).collect())?)
        };
        let (a, b) = (normal(&mut rng)?, normal(&mut rng)?);
        println!(
            "sigma_max {sigma_max:>4}: terminal variance {var:.3}, mmd vs N(0,I) {:.2e}, reference mmd {:.2e}",
            mmd(&out, &a)?,
            mmd(&a, &b)?
        );
    }
    Ok(())
}
