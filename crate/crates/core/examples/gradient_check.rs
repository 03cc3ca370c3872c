//! Compares backprop gradients of a random MLP against central differences.

use anyhow::Result;
use dqs::ndmath::{DenseArray, MlpNetwork};
use dqs::rng::seeded;
use rand::Rng;

fn main() -> Result<()> {
    let mut rng = seeded(7);
    let net = MlpNetwork::new(&[5, 16, 16, 3], true, &mut rng)?;
    let x = DenseArray::from_vec(&[4, 5], (0..20).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let cot = DenseArray::from_vec(&[4, 3], (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let (grads, dx) = net.gradients(&x, &cot)?;

    let objective = |n: &MlpNetwork, x: &DenseArray| -> Result<f64> {
        let y = n.forward(x)?;
        Ok(y.data().iter().zip(cot.data()).map(|(a, b)| a * b).sum())
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (t, g) in grads.tensors.iter().enumerate() {
        for j in 0..g.len() {
            let mut plus = net.clone();
            plus.parameters_mut()[t].data_mut()[j] += h;
            let mut minus = net.clone();
            minus.parameters_mut()[t].data_mut()[j] -= h;
            let fd = (objective(&plus, &x)? - objective(&minus, &x)?) / (2.0 * h);
            worst = worst.max((fd - g.data()[j]).abs() / fd.abs().max(1e-8).max(g.data()[j].abs()));
        }
    }
    println!("parameter gradients: max relative error {worst:.2e}");

    let mut worst_x: f64 = 0.0;
    for j in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[j] += h;
        xm.data_mut()[j] -= h;
        let fd = (objective(&net, &xp)? - objective(&net, &xm)?) / (2.0 * h);
        worst_x = worst_x.max((fd - dx.data()[j]).abs() / fd.abs().max(1e-8));
    }
    println!("input gradients:     max relative error {worst_x:.2e}");
    Ok(())
}
