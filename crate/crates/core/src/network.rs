//! Feed-forward multilayer perceptron with a flat parameter view.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

pub use crate::autodiff::Activation;

/// Fully connected layer `z = W·a + b` with `W` stored row-major (`n_out × n_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn from_parts(n_in: usize, n_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        check_dim("dense weights", n_in * n_out, weights.len())?;
        check_dim("dense bias", n_out, bias.len())?;
        Ok(Self {
            n_in,
            n_out,
            weights,
            bias,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Weights feeding output neuron `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.n_in..(j + 1) * self.n_in]
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Multilayer perceptron. Hidden layers share one activation; the output
/// layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
}

impl Mlp {
    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases, tanh hidden units.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        Self::init_with(layer_sizes, Activation::Tanh, seed)
    }

    pub fn init_with(layer_sizes: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (6.0 / (n_in + n_out) as f64).sqrt();
                let weights = (0..n_in * n_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Dense::from_parts(n_in, n_out, weights, vec![0.0; n_out])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, hidden })
    }

    /// Builds a network from explicit layers, e.g. hand-crafted test nets.
    pub fn from_layers(layers: Vec<Dense>, hidden: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            check_dim("consecutive layer widths", w[0].n_out, w[1].n_in)?;
        }
        Ok(Self { layers, hidden })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].n_in];
        sizes.extend(self.layers.iter().map(|l| l.n_out));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// `(weights offset, bias offset)` of each layer within [`Mlp::flatten`].
    pub fn param_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = off;
                let b = w + l.weights.len();
                off = b + l.bias.len();
                (w, b)
            })
            .collect()
    }

    /// Scalar output for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        check_dim("network input", self.input_dim(), input.len())?;
        check_dim("network output width", 1, self.output_dim())?;
        let last = self.layers.len() - 1;
        let mut a = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            a = (0..layer.n_out)
                .map(|j| {
                    let mut acc = layer.bias[j];
                    for (w, x) in layer.row(j).iter().zip(&a) {
                        acc += w * x;
                    }
                    if l == last {
                        acc
                    } else {
                        self.hidden.apply(acc)
                    }
                })
                .collect();
        }
        Ok(a[0])
    }

    /// Output at a space-time point, routing `(x, t)` the same way the jets do.
    pub fn eval_at(&self, x: f64, t: f64) -> Result<f64> {
        match self.input_dim() {
            1 => self.forward(&[t]),
            2 => self.forward(&[x, t]),
            d => Err(Error::Dimension {
                context: "network input width (1 = t, 2 = x,t)",
                expected: 2,
                got: d,
            }),
        }
    }

    /// All parameters, layer by layer: row-major weights then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Replaces every parameter from a vector in [`Mlp::flatten`] order.
    pub fn unflatten(&mut self, params: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.param_count(), params.len())?;
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            let (b, r) = r.split_at(l.bias.len());
            l.weights.copy_from_slice(w);
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    /// Copy of this network carrying `params`.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let mut net = self.clone();
        net.unflatten(params)?;
        Ok(net)
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output layer sizes, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {sizes:?}")));
    }
    Ok(())
}

/// Writes a parameter vector as text, one value per line.
pub fn write_snapshot<W: Write>(mut w: W, params: &[f64]) -> Result<()> {
    for p in params {
        writeln!(w, "{p:e}")?;
    }
    Ok(())
}

/// Reads a parameter vector written by [`write_snapshot`].
pub fn read_snapshot<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v = line
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("snapshot line {}: {e}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::forward_jet;
    use proptest::prelude::*;

    #[test]
    fn parameter_count_of_logistic_architecture() {
        let net = Mlp::init(&[1, 9, 9, 9, 1], 42).unwrap();
        assert_eq!(net.param_count(), 208);
        assert_eq!(net.flatten().len(), 208);
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::init(&[1, 9, 9, 9, 1], 42).unwrap().flatten();
        let b = Mlp::init(&[1, 9, 9, 9, 1], 42).unwrap().flatten();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = Mlp::init(&[1, 9, 9, 9, 1], 43).unwrap().flatten();
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_glorot_bounds_and_zero_bias() {
        let sizes = [2, 50, 50, 50, 50, 1];
        let net = Mlp::init(&sizes, 7).unwrap();
        for (l, layer) in net.layers().iter().enumerate() {
            let bound = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            assert!(layer.weights().iter().all(|w| w.abs() <= bound));
            assert!(layer.bias().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(matches!(Mlp::init(&[], 0), Err(Error::Config(_))));
        assert!(matches!(Mlp::init(&[3], 0), Err(Error::Config(_))));
        assert!(matches!(Mlp::init(&[1, 0, 1], 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut net = Mlp::init(&[2, 4, 1], 1).unwrap();
        net.unflatten(&vec![0.0; net.param_count()]).unwrap();
        assert_eq!(net.forward(&[3.0, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_linear_neuron() {
        let net = Mlp::from_layers(
            vec![Dense::from_parts(1, 1, vec![2.0], vec![1.0]).unwrap()],
            Activation::Tanh,
        )
        .unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), 7.0);
    }

    #[test]
    fn forward_matches_jet_value_bitwise() {
        let net = Mlp::init(&[2, 7, 7, 1], 99).unwrap();
        for &(x, t) in &[(0.1, 0.2), (1.3, 0.05), (4.9, 0.99)] {
            let v = net.forward(&[x, t]).unwrap();
            assert_eq!(v.to_bits(), forward_jet(&net, x, t).unwrap().v.to_bits());
        }
        let net1 = Mlp::init(&[1, 9, 9, 9, 1], 2).unwrap();
        let v = net1.eval_at(0.0, 3.3).unwrap();
        assert_eq!(v.to_bits(), forward_jet(&net1, 0.0, 3.3).unwrap().v.to_bits());
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let net = Mlp::init(&[2, 3, 1], 0).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let mut net = Mlp::init(&[1, 3, 1], 0).unwrap();
        assert!(net.unflatten(&[0.0; 5]).is_err());
    }

    #[test]
    fn flatten_is_stable() {
        let net = Mlp::init(&[1, 5, 1], 4).unwrap();
        assert_eq!(net.flatten(), net.flatten());
    }

    #[test]
    fn snapshot_round_trip() {
        let p = vec![0.1, -1e-300, 3.0e12, f64::MIN_POSITIVE, 1.0 / 3.0];
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &p).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert!(p.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    proptest! {
        #[test]
        fn unflatten_then_flatten_is_identity(v in proptest::collection::vec(-10.0f64..10.0, 40)) {
            let mut net = Mlp::init(&[1, 5, 5], 0).unwrap();
            prop_assert_eq!(net.param_count(), 40);
            net.unflatten(&v).unwrap();
            prop_assert_eq!(net.flatten(), v);
        }

        #[test]
        fn one_parameter_change_touches_one_coordinate(i in 0usize..40, delta in 0.1f64..2.0) {
            let mut net = Mlp::init(&[1, 5, 5], 8).unwrap();
            let before = net.flatten();
            let mut p = before.clone();
            p[i] += delta;
            net.unflatten(&p).unwrap();
            let after = net.flatten();
            let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
            prop_assert_eq!(changed, 1);
        }
    }
}
