use rand::Rng;

use super::{Activation, ArraySpec, Linear, Params};
use crate::scalar::Scalar;

/// Multi-layer perceptron: hidden activation after every layer but the last,
/// `output` activation after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward_cached`].
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `sizes` lists every width including input and output, so a single
    /// affine layer is `[n_in, n_out]`.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], 1.0, rng))
            .collect();
        Self { layers, hidden, output }
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let layers = sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Self { layers, hidden, output }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map(|l| l.n_out).unwrap_or(0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.n_in()];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Multiplies the final layer's weights by `gain`.
    pub fn scale_output_layer(&mut self, gain: T) {
        if let Some(last) = self.layers.last_mut() {
            for w in last.weight.iter_mut() {
                *w = *w * gain;
            }
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(i);
            h = layer.forward(&h);
            if act != Activation::Identity {
                for v in h.iter_mut() {
                    *v = act.apply(*v);
                }
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &[T]) -> (Vec<T>, MlpCache<T>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(i);
            let a = layer.forward(&h);
            let next: Vec<T> = a.iter().map(|&v| act.apply(v)).collect();
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(a);
        }
        (h, MlpCache { inputs, pre })
    }

    /// Backpropagates `dy` (gradient w.r.t. the output) and returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache<T>, dy: &[T], mut grad: Option<&mut Mlp<T>>) -> Vec<T> {
        let mut d = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            let act = self.activation_of(i);
            if act != Activation::Identity {
                for (dv, &a) in d.iter_mut().zip(&cache.pre[i]) {
                    *dv = *dv * act.derivative(a);
                }
            }
            let g = grad.as_deref_mut().map(|g| &mut g.layers[i]);
            d = self.layers[i].backward(&cache.inputs[i], &d, g);
        }
        d
    }

    /// Row `k` is the gradient of output `k` with respect to the input.
    pub fn input_jacobian(&self, x: &[T]) -> Vec<Vec<T>> {
        let (_, cache) = self.forward_cached(x);
        (0..self.n_out())
            .map(|k| {
                let mut e = vec![T::zero(); self.n_out()];
                e[k] = T::one();
                self.backward(&cache, &e, None)
            })
            .collect()
    }
}

impl<T: Scalar> Params<T> for Mlp<T> {
    fn arrays(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.arrays()).collect()
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.arrays_mut()).collect()
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.specs(&super::prefixed(prefix, &format!("layer{i}"))))
            .collect()
    }
}
