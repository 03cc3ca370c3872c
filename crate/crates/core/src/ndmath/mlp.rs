use rand::Rng;

use super::array::{gemm_ab, gemm_abt, gemm_atb_acc, DenseArray};
use crate::error::{DqsError, Result};

/// One affine layer, `y = W x + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: DenseArray,
    pub bias: DenseArray,
}

impl Linear {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Fully connected ReLU network with an identity output layer.
///
/// With `skip_connections`, every hidden-to-hidden layer of equal width adds
/// its input to its (post-activation) output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layer_dims: Vec<usize>,
    layers: Vec<Linear>,
    skip_connections: bool,
}

/// Parameter gradients laid out as `[W0, b0, W1, b1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub tensors: Vec<DenseArray>,
}

impl MlpGrads {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            tensors: net
                .parameters()
                .into_iter()
                .map(|p| DenseArray::zeros(p.shape()))
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(k));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(DenseArray::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.max_abs()))
    }
}

/// Intermediate values of one batched forward pass, consumed by [`MlpNetwork::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    rows: usize,
    /// Input of every layer, row-major `[rows, in_l]`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    output: DenseArray,
}

impl Trace {
    pub fn output(&self) -> &DenseArray {
        &self.output
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Keeps only the listed rows, in the given order.
    pub fn gather(&self, net: &MlpNetwork, rows: &[usize]) -> Trace {
        let pick = |buf: &[f64], width: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(rows.len() * width);
            for &r in rows {
                out.extend_from_slice(&buf[r * width..(r + 1) * width]);
            }
            out
        };
        let inputs = net
            .layers
            .iter()
            .zip(&self.inputs)
            .map(|(l, x)| pick(x, l.in_dim()))
            .collect();
        let pre = net
            .layers
            .iter()
            .zip(&self.pre)
            .map(|(l, z)| pick(z, l.out_dim()))
            .collect();
        let out_dim = net.output_dim();
        let output = if rows.is_empty() {
            DenseArray::zeros(&[0, out_dim])
        } else {
            DenseArray::from_vec(&[rows.len(), out_dim], pick(self.output.data(), out_dim))
                .expect("gathered output has consistent shape")
        };
        Trace {
            rows: rows.len(),
            inputs,
            pre,
            output,
        }
    }
}

impl MlpNetwork {
    /// Random initialization, uniform in `±sqrt(1/fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        layer_dims: &[usize],
        skip_connections: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, skip_connections)?;
        for layer in &mut net.layers {
            let bound = (1.0 / layer.in_dim() as f64).sqrt();
            for w in layer.weight.data_mut() {
                *w = rng.random_range(-bound..bound);
            }
            for b in layer.bias.data_mut() {
                *b = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize], skip_connections: bool) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(DqsError::Config(format!(
                "layer dims must list at least input and output widths, all positive: {layer_dims:?}"
            )));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Linear {
                weight: DenseArray::zeros(&[w[1], w[0]]),
                bias: DenseArray::zeros(&[w[1]]),
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            skip_connections,
        })
    }

    /// Builds a network from explicit layers; dims are inferred.
    pub fn from_layers(layers: Vec<Linear>, skip_connections: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(DqsError::Config("network needs at least one layer".into()));
        }
        let mut dims = vec![layers[0].in_dim()];
        for l in &layers {
            if l.in_dim() != *dims.last().unwrap() || l.bias.len() != l.out_dim() {
                return Err(DqsError::dim(
                    format!("layer input {}", dims.last().unwrap()),
                    format!("{:?} / bias {}", l.weight.shape(), l.bias.len()),
                ));
            }
            dims.push(l.out_dim());
        }
        Ok(Self {
            layer_dims: dims,
            layers,
            skip_connections,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn skip_connections(&self) -> bool {
        self.skip_connections
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn parameters(&self) -> Vec<&DenseArray> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut DenseArray> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn is_hidden(&self, l: usize) -> bool {
        l + 1 < self.layers.len()
    }

    fn has_skip(&self, l: usize) -> bool {
        self.skip_connections
            && l > 0
            && self.is_hidden(l)
            && self.layers[l].in_dim() == self.layers[l].out_dim()
    }

    fn check_input(&self, input: &DenseArray) -> Result<usize> {
        if input.cols() != self.input_dim() || input.shape().len() > 2 {
            return Err(DqsError::dim(
                format!("input width {}", self.input_dim()),
                format!("{:?}", input.shape()),
            ));
        }
        Ok(input.rows())
    }

    /// Batched forward pass: `input` is `[n, in]` (or a single `[in]` vector).
    pub fn forward(&self, input: &DenseArray) -> Result<DenseArray> {
        Ok(self.forward_trace(input)?.output)
    }

    pub fn forward_trace(&self, input: &DenseArray) -> Result<Trace> {
        let rows = self.check_input(input)?;
        self.run(rows, input.data().to_vec(), None)
    }

    /// Forward pass where the trailing input columns are the same `suffix`
    /// for every row; `prefix` holds the leading `[n, in - suffix.len()]`
    /// columns. The suffix contribution to the first layer is computed once.
    pub fn forward_with_suffix(&self, prefix: &DenseArray, suffix: &[f64]) -> Result<DenseArray> {
        let p = prefix.cols();
        if p + suffix.len() != self.input_dim() || prefix.shape().len() > 2 {
            return Err(DqsError::dim(
                format!("prefix + suffix width {}", self.input_dim()),
                format!("{:?} + {}", prefix.shape(), suffix.len()),
            ));
        }
        let rows = prefix.rows();
        let first = &self.layers[0];
        let out = first.out_dim();
        let in_dim = first.in_dim();
        // shared = W[:, p..] · suffix + b
        let mut shared = first.bias.data().to_vec();
        for (j, s) in shared.iter_mut().enumerate() {
            let wrow = &first.weight.data()[j * in_dim + p..(j + 1) * in_dim];
            *s += wrow.iter().zip(suffix).map(|(w, x)| w * x).sum::<f64>();
        }
        let mut z = Vec::with_capacity(rows * out);
        for _ in 0..rows {
            z.extend_from_slice(&shared);
        }
        gemm_abt(rows, p, out, prefix.data(), first.weight.data(), in_dim, &mut z, true);
        Ok(self.run(rows, Vec::new(), Some(z))?.output)
    }

    /// Runs the layer stack. When `first_pre` is given it replaces the first
    /// layer's affine map and the input is not retained.
    fn run(&self, rows: usize, input: Vec<f64>, first_pre: Option<Vec<f64>>) -> Result<Trace> {
        let n_layers = self.layers.len();
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut x = input;
        let mut first_pre = first_pre;
        for (l, layer) in self.layers.iter().enumerate() {
            let out = layer.out_dim();
            let z = match first_pre.take() {
                Some(z) => z,
                None => {
                    let mut z = Vec::with_capacity(rows * out);
                    for _ in 0..rows {
                        z.extend_from_slice(layer.bias.data());
                    }
                    gemm_abt(
                        rows,
                        layer.in_dim(),
                        out,
                        &x,
                        layer.weight.data(),
                        layer.in_dim(),
                        &mut z,
                        true,
                    );
                    z
                }
            };
            if self.is_hidden(l) {
                let mut h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
                if self.has_skip(l) {
                    for (hv, xv) in h.iter_mut().zip(&x) {
                        *hv += xv;
                    }
                }
                inputs.push(std::mem::replace(&mut x, h));
                pre.push(z);
            } else {
                inputs.push(std::mem::take(&mut x));
                x = z;
            }
        }
        let output = if rows == 0 {
            DenseArray::zeros(&[0, self.output_dim()])
        } else {
            DenseArray::from_vec(&[rows, self.output_dim()], x)?
        };
        Ok(Trace {
            rows,
            inputs,
            pre,
            output,
        })
    }

    /// Gradients of `Σ_rows ⟨output, cotangent⟩` with respect to every
    /// parameter and to the input. Forward activations are recomputed.
    pub fn gradients(
        &self,
        input: &DenseArray,
        cotangent: &DenseArray,
    ) -> Result<(MlpGrads, DenseArray)> {
        let trace = self.forward_trace(input)?;
        let (g, dx) = self.backward(&trace, cotangent, true, true)?;
        let mut dx = dx.expect("input gradient requested");
        if input.shape().len() == 1 {
            dx = DenseArray::vector(dx.data());
        }
        Ok((g.expect("parameter gradients requested"), dx))
    }

    /// Reverse pass over a trace of this network.
    pub fn backward(
        &self,
        trace: &Trace,
        cotangent: &DenseArray,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<MlpGrads>, Option<DenseArray>)> {
        let rows = trace.rows;
        if cotangent.cols() != self.output_dim() || (rows > 0 && cotangent.rows() != rows) {
            return Err(DqsError::dim(
                format!("cotangent [{rows}, {}]", self.output_dim()),
                format!("{:?}", cotangent.shape()),
            ));
        }
        if want_params && trace.inputs[0].is_empty() && rows > 0 {
            return Err(DqsError::Unsupported(
                "parameter gradients need a trace with retained input".into(),
            ));
        }
        let mut grads = want_params.then(|| MlpGrads::zeros_like(self));
        let mut delta = cotangent.data().to_vec();
        let mut input_grad = None;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (in_dim, out) = (layer.in_dim(), layer.out_dim());
            // delta currently holds dL/d(output of layer l)
            let upstream_skip = if self.has_skip(l) {
                Some(delta.clone())
            } else {
                None
            };
            if self.is_hidden(l) {
                for (d, z) in delta.iter_mut().zip(&trace.pre[l]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            if let Some(g) = grads.as_mut() {
                gemm_atb_acc(
                    rows,
                    out,
                    in_dim,
                    &delta,
                    &trace.inputs[l],
                    g.tensors[2 * l].data_mut(),
                );
                let gb = g.tensors[2 * l + 1].data_mut();
                for r in 0..rows {
                    for (b, d) in gb.iter_mut().zip(&delta[r * out..(r + 1) * out]) {
                        *b += d;
                    }
                }
            }
            if l == 0 && !want_input {
                break;
            }
            let mut dx = vec![0.0; rows * in_dim];
            gemm_ab(rows, out, in_dim, &delta, layer.weight.data(), &mut dx, false);
            if let Some(up) = upstream_skip {
                for (a, b) in dx.iter_mut().zip(&up) {
                    *a += b;
                }
            }
            if l == 0 {
                input_grad = Some(if rows == 0 {
                    DenseArray::zeros(&[0, in_dim])
                } else {
                    DenseArray::from_vec(&[rows, in_dim], dx)?
                });
                break;
            }
            delta = dx;
        }
        Ok((grads, input_grad))
    }

    /// `self ← eta · online + (1 − eta) · self`, parameter-wise. Written as
    /// `self + eta · (online − self)` so equal parameters stay bit-identical.
    pub fn soft_update_from(&mut self, online: &MlpNetwork, eta: f64) -> Result<()> {
        if self.layer_dims != online.layer_dims {
            return Err(DqsError::dim(
                format!("{:?}", self.layer_dims),
                format!("{:?}", online.layer_dims),
            ));
        }
        for (t, o) in self.parameters_mut().into_iter().zip(online.parameters()) {
            if eta == 1.0 {
                t.data_mut().copy_from_slice(o.data());
                continue;
            }
            for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                *a += eta * (b - *a);
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.is_finite())
    }

    /// Order-sensitive checksum of all parameter bits.
    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for p in self.parameters() {
            for v in p.data() {
                h.update(&v.to_bits().to_le_bytes());
            }
        }
        h.finalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line re-computation: explicit loops over rows and units.
    fn reference_forward(net: &MlpNetwork, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = net.layers().len();
        for (l, layer) in net.layers().iter().enumerate() {
            let mut z = vec![0.0; layer.out_dim()];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = layer.bias.data()[j];
                for (k, hk) in h.iter().enumerate() {
                    *zj += layer.weight.data()[j * layer.in_dim() + k] * hk;
                }
            }
            if l + 1 < n {
                let mut next: Vec<f64> = z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect();
                if net.skip_connections() && l > 0 && layer.in_dim() == layer.out_dim() {
                    for (a, b) in next.iter_mut().zip(&h) {
                        *a += b;
                    }
                }
                h = next;
            } else {
                h = z;
            }
        }
        h
    }

    #[test]
    fn zero_net_gives_zero_output() {
        let net = MlpNetwork::zeros(&[3, 8, 8, 2], true).unwrap();
        let y = net.forward(&DenseArray::row(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = MlpNetwork::zeros(&[3, 3], false).unwrap();
        for i in 0..3 {
            net.layers_mut()[0].weight.data_mut()[i * 3 + i] = 1.0;
        }
        let x = DenseArray::row(&[0.5, -1.5, 2.0]);
        assert_eq!(net.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn forward_matches_reference_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for skip in [false, true] {
            let net = MlpNetwork::new(&[5, 16, 16, 3], skip, &mut rng).unwrap();
            let xs: Vec<f64> = (0..20).map(|i| ((i * 7) as f64).sin() * 2.0).collect();
            let batch = DenseArray::from_vec(&[4, 5], xs.clone()).unwrap();
            let y = net.forward(&batch).unwrap();
            for r in 0..4 {
                let want = reference_forward(&net, &xs[r * 5..(r + 1) * 5]);
                for (a, b) in y.row_slice(r).iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn suffix_forward_matches_full_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpNetwork::new(&[6, 12, 12, 2], true, &mut rng).unwrap();
        let suffix = [0.3, -0.7, 1.1, 0.2];
        let prefix = DenseArray::from_vec(&[3, 2], vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let mut full = Vec::new();
        for r in 0..3 {
            full.extend_from_slice(prefix.row_slice(r));
            full.extend_from_slice(&suffix);
        }
        let a = net.forward(&DenseArray::from_vec(&[3, 6], full).unwrap()).unwrap();
        let b = net.forward_with_suffix(&prefix, &suffix).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let net = MlpNetwork::zeros(&[3, 4, 1], false).unwrap();
        assert!(matches!(
            net.forward(&DenseArray::row(&[1.0, 2.0])),
            Err(DqsError::Dimension { .. })
        ));
        let x = DenseArray::row(&[1.0, 2.0, 3.0]);
        assert!(net.gradients(&x, &DenseArray::row(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn linear_input_grad_is_transpose_product() {
        let w = DenseArray::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let net = MlpNetwork::from_layers(
            vec![Linear {
                weight: w,
                bias: DenseArray::zeros(&[2]),
            }],
            false,
        )
        .unwrap();
        let (g, dx) = net
            .gradients(&DenseArray::vector(&[1.0, 1.0, 1.0]), &DenseArray::vector(&[1.0, -1.0]))
            .unwrap();
        assert_eq!(dx.data(), &[-3.0, -3.0, -3.0]);
        assert_eq!(g.tensors[0].data(), &[1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
        assert_eq!(g.tensors[1].data(), &[1.0, -1.0]);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = MlpNetwork::new(&[4, 8, 8, 2], true, &mut rng).unwrap();
        let x = DenseArray::from_vec(&[2, 4], vec![0.1, 0.2, -0.3, 0.4, 1.0, -1.0, 0.5, 0.0]).unwrap();
        let (g, dx) = net.gradients(&x, &DenseArray::zeros(&[2, 2])).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(dx.max_abs(), 0.0);
    }

    #[test]
    fn gathered_trace_backward_matches_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MlpNetwork::new(&[2, 8, 8, 1], false, &mut rng).unwrap();
        let x = DenseArray::from_vec(&[4, 2], vec![0.1, 0.9, -0.4, 0.3, 0.8, -0.8, 0.0, 0.5]).unwrap();
        let trace = net.forward_trace(&x).unwrap();
        let sub = trace.gather(&net, &[3, 1]);
        let (_, dx) = net.backward(&sub, &DenseArray::filled(&[2, 1], 1.0), false, true).unwrap();
        let dx = dx.unwrap();
        for (i, &r) in [3usize, 1].iter().enumerate() {
            let (_, want) = net
                .gradients(&DenseArray::row(x.row_slice(r)), &DenseArray::row(&[1.0]))
                .unwrap();
            assert_eq!(dx.row_slice(i), want.data());
        }
    }

    #[test]
    fn soft_update_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let online = MlpNetwork::new(&[2, 4, 1], false, &mut rng).unwrap();
        let mut target = MlpNetwork::new(&[2, 4, 1], false, &mut rng).unwrap();
        let before = target.clone();
        target.soft_update_from(&online, 0.0).unwrap();
        assert_eq!(target, before);
        target.soft_update_from(&online, 1.0).unwrap();
        assert_eq!(target, online);
    }
}
