//! Trains a score network to sample `exp(−𝓔)` for a two-well energy using
//! only Monte Carlo score targets, then samples from it.

use anyhow::Result;
use dqs::diffusion::{mc_score_estimate, FnEnergy, NoiseSchedule, ReverseSampler};
use dqs::ndmath::DenseArray;
use dqs::policy::{ActionSampler, DiffusionPolicy};
use dqs::rng::seeded;

fn main() -> Result<()> {
    // wells at x = ±0.6, y = 0 inside the unit action box
    let energy = FnEnergy::new(2, |a: &[f64]| {
        let (x, y) = (a[0], a[1]);
        let e = 40.0 * (x * x - 0.36).powi(2) + 8.0 * y * y;
        (e, vec![160.0 * x * (x * x - 0.36), 16.0 * y])
    });
    let schedule = NoiseSchedule::new(1e-3, 1.0)?;
    let mut rng = seeded(11);
    let mut policy = DiffusionPolicy::new(1, vec![1.0, 1.0], &[64, 64], 16, ReverseSampler::new(schedule, 100), 1.0, 1e-3, &mut rng)?;
    let batch = 64;
    let states = DenseArray::zeros(&[batch, 1]);
    for it in 0..=1500 {
        // replay of uniform actions: the targets do not depend on where data came from
        let actions = DenseArray::from_vec(
            &[batch, 2],
            (0..2 * batch).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect(),
        )?;
        let loss = policy.fit_score(
            &states,
            &actions,
            |_, _, a, tau, r| Ok(mc_score_estimate(&energy, &schedule, a, tau, 200, r)?),
            &mut rng,
        )?;
        if it % 500 == 0 {
            println!("iter {it:>4}  score loss {loss:.3}");
        }
    }
    let samples = policy.sample_actions(&DenseArray::zeros(&[2000, 1]), &mut rng)?;
    let left = (0..2000).filter(|&i| samples.row_slice(i)[0] < 0.0).count();
    println!("left well {left}, right well {}", 2000 - left);
    Ok(())
}
