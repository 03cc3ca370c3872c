use super::array::DenseArray;
use super::mlp::{MlpGrads, MlpNetwork};
use crate::error::{DqsError, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<DenseArray>,
    pub second_moment: Vec<DenseArray>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(shapes: &[&[usize]], learning_rate: f64) -> Self {
        let zeros: Vec<DenseArray> = shapes.iter().map(|s| DenseArray::zeros(s)).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn for_network(net: &MlpNetwork, learning_rate: f64) -> Self {
        let params = net.parameters();
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(&shapes, learning_rate)
    }
}

/// One Adam update applied in place. Rejects the whole update if any
/// gradient entry is non-finite.
pub fn adam_step(params: &mut [&mut DenseArray], grads: &[DenseArray], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(DqsError::dim(
            format!("{} parameter tensors", state.first_moment.len()),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(DqsError::dim(format!("{:?}", m.shape()), format!("{:?} / {:?}", p.shape(), g.shape())));
        }
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(DqsError::Numeric(format!("gradient tensor {bad} has non-finite entries")));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam step on every parameter of `net`.
pub fn adam_step_network(net: &mut MlpNetwork, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
    let mut params = net.parameters_mut();
    adam_step(&mut params, &grads.tensors, state)
}
