use rand::Rng;
use rand_distr::StandardNormal;

use super::{prefixed, ArraySpec, Params};
use crate::scalar::Scalar;

/// Affine map `y = W x + b`, `W` stored row-major as `[n_out][n_in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub n_in: usize,
    pub n_out: usize,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: vec![T::zero(); n_in * n_out],
            bias: vec![T::zero(); n_out],
            n_in,
            n_out,
        }
    }

    /// Weights drawn from `N(0, gain² / n_in)`, zero bias.
    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain / (n_in.max(1) as f64).sqrt();
        let weight = (0..n_in * n_out)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                T::lit(std * e)
            })
            .collect();
        Self {
            weight,
            bias: vec![T::zero(); n_out],
            n_in,
            n_out,
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.n_in);
        let mut y = self.bias.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = *yo;
            for (&w, &xi) in row.iter().zip(x) {
                acc = acc + w * xi;
            }
            *yo = acc;
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[T], dy: &[T], grad: Option<&mut Linear<T>>) -> Vec<T> {
        if let Some(g) = grad {
            for (o, &d) in dy.iter().enumerate() {
                g.bias[o] = g.bias[o] + d;
                if d != T::zero() {
                    let row = &mut g.weight[o * self.n_in..(o + 1) * self.n_in];
                    for (gw, &xi) in row.iter_mut().zip(x) {
                        *gw = *gw + d * xi;
                    }
                }
            }
        }
        self.backward_input(dy)
    }

    pub fn backward_input(&self, dy: &[T]) -> Vec<T> {
        let mut dx = vec![T::zero(); self.n_in];
        for (o, &d) in dy.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
            for (dxi, &w) in dx.iter_mut().zip(row) {
                *dxi = *dxi + d * w;
            }
        }
        dx
    }
}

impl<T: Scalar> Params<T> for Linear<T> {
    fn arrays(&self) -> Vec<&[T]> {
        vec![&self.weight, &self.bias]
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        vec![
            ArraySpec::new(prefixed(prefix, "weight"), vec![self.n_out, self.n_in]),
            ArraySpec::new(prefixed(prefix, "bias"), vec![self.n_out]),
        ]
    }
}
