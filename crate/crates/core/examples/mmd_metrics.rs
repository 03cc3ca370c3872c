//! MMD and mode coverage of mixture draws against shifted and collapsed sets.

use anyhow::Result;
use dqs::envs::GaussianMixture;
use dqs::eval::{mmd, mode_coverage};
use dqs::ndmath::DenseArray;
use dqs::rng::seeded;

fn to_array(p: &[[f64; 2]]) -> Result<DenseArray> {
    Ok(DenseArray::from_vec(&[p.len(), 2], p.iter().flatten().copied().collect())?)
}

fn main() -> Result<()> {
    let mix = GaussianMixture::standard();
    let mut rng = seeded(5);
    let truth = mix.sample(1000, &mut rng);
    let fresh = mix.sample(500, &mut rng);
    let shifted: Vec<[f64; 2]> = fresh.iter().map(|p| [p[0] + 5.0, p[1]]).collect();
    let collapsed: Vec<[f64; 2]> = (0..500).map(|i| [mix.means[0][0] + 0.001 * i as f64, mix.means[0][1]]).collect();
    for (name, set) in [("fresh draws", &fresh), ("shifted by 5", &shifted), ("one mode", &collapsed)] {
        println!(
            "{name:<13} mmd {:.4}  coverage {:.3}",
            mmd(&to_array(set)?, &to_array(&truth)?)?,
            mode_coverage(set, &mix.means, 2.0)?
        );
    }
    Ok(())
}
