use crate::error::{DqsError, Result};

/// Sinusoidal embedding with interleaved layout:
/// `e[2i] = sin(value · ω_i)`, `e[2i+1] = cos(value · ω_i)`, `ω_i = 10000^(-2i/dim)`.
pub fn sinusoidal_embedding(value: f64, dim: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    sinusoidal_embedding_into(value, &mut out)?;
    Ok(out)
}

pub fn sinusoidal_embedding_into(value: f64, out: &mut [f64]) -> Result<()> {
    let dim = out.len();
    if dim == 0 || dim % 2 != 0 {
        return Err(DqsError::Config(format!("embedding dimension must be even and positive, got {dim}")));
    }
    let half = dim / 2;
    for i in 0..half {
        let freq = 10000f64.powf(-(2.0 * i as f64) / dim as f64);
        let (s, c) = (value * freq).sin_cos();
        out[2 * i] = s;
        out[2 * i + 1] = c;
    }
    Ok(())
}
