//! Grid log-partition of a Gaussian log-integrand, with the refinement error.

use anyhow::Result;
use dqs::eval::log_partition_of;

fn main() -> Result<()> {
    let f = |pts: &dqs::ndmath::DenseArray| {
        Ok((0..pts.rows())
            .map(|r| {
                let p = pts.row_slice(r);
                -0.5 * (p[0] * p[0] + p[1] * p[1])
            })
            .collect())
    };
    for n in [8, 32, 128] {
        let lp = log_partition_of(f, [[-6.0, 6.0], [-6.0, 6.0]], n)?;
        println!("n {n:>3}: log Z {:.6} (exact {:.6}), refinement delta {:.2e}", lp.log_z, (2.0 * std::f64::consts::PI).ln(), lp.refinement_delta);
    }
    Ok(())
}
