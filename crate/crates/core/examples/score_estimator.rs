//! Monte Carlo score of a noised quadratic energy against its closed form.

use anyhow::Result;
use dqs::diffusion::{mc_score_estimate, FnEnergy, NoiseSchedule};
use dqs::rng::seeded;

fn main() -> Result<()> {
    // 𝓔(x) = |x|²/2, so the noised marginal is N(0, (1 + σ²) I)
    let energy = FnEnergy::new(2, |x: &[f64]| (0.5 * (x[0] * x[0] + x[1] * x[1]), x.to_vec()));
    let schedule = NoiseSchedule::default();
    let mut rng = seeded(1);
    for tau in [0.25, 0.5, 0.75, 1.0] {
        let sigma = schedule.sigma_at(tau)?;
        let x = [1.5, -0.5];
        let est = mc_score_estimate(&energy, &schedule, &x, tau, 1000, &mut rng)?;
        let exact: Vec<f64> = x.iter().map(|v| -v / (1.0 + sigma * sigma)).collect();
        println!(
            "tau {tau:.2}  sigma {sigma:.3e}  estimate [{:+.4}, {:+.4}]  exact [{:+.4}, {:+.4}]",
            est[0], est[1], exact[0], exact[1]
        );
    }
    Ok(())
}
