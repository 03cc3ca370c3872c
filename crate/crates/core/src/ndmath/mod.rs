//! Dense numerical core: arrays, ReLU MLPs with reverse-mode gradients,
//! Adam, sinusoidal embeddings and the parameter container.

mod adam;
mod array;
mod checkpoint;
mod embedding;
mod mlp;

pub use adam::{adam_step, adam_step_network, AdamState, DEFAULT_LEARNING_RATE};
pub use array::DenseArray;
pub use checkpoint::{Entry, ParamContainer, FORMAT_VERSION};
pub use embedding::{sinusoidal_embedding, sinusoidal_embedding_into};
pub use mlp::{Linear, MlpGrads, MlpNetwork, Trace};

/// Numerically stable `log Σ exp(xs)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax weights computed with a max shift.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = pairwise_sum(&w);
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}
