//! Small hand-differentiated network building blocks.
//!
//! Every block exposes a cached forward pass and a backward pass that
//! accumulates parameter gradients into a structure of the same type and
//! returns the gradient with respect to its input.

mod activation;
mod embedding;
mod gru;
mod linear;
mod mlp;
mod optim;

pub use activation::Activation;
pub use embedding::Embedding;
pub use gru::{Gru, GruStepCache};
pub use linear::Linear;
pub use mlp::{Mlp, MlpCache};
pub use optim::{global_norm, Optimizer, OptimizerKind, OptimizerState};

use crate::scalar::Scalar;

/// Name and shape of one parameter array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ArraySpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self { name: name.into(), shape }
    }
}

/// A collection of trainable arrays with a stable enumeration order.
///
/// `arrays`, `arrays_mut` and `specs` must enumerate the same arrays in the
/// same order.
pub trait Params<T: Scalar> {
    fn arrays(&self) -> Vec<&[T]>;
    fn arrays_mut(&mut self) -> Vec<&mut [T]>;
    fn specs(&self, prefix: &str) -> Vec<ArraySpec>;

    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut g = self.clone();
        g.fill(T::zero());
        g
    }

    fn fill(&mut self, value: T) {
        for a in self.arrays_mut() {
            a.fill(value);
        }
    }

    fn num_params(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    /// `self += scale * other`.
    fn add_scaled(&mut self, other: &Self, scale: T) {
        let src = other.arrays();
        for (dst, src) in self.arrays_mut().into_iter().zip(src) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + scale * s;
            }
        }
    }

    fn scale(&mut self, s: T) {
        for a in self.arrays_mut() {
            for v in a.iter_mut() {
                *v = *v * s;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// All entries concatenated in enumeration order.
    fn flatten(&self) -> Vec<T> {
        self.arrays().concat()
    }
}

pub(crate) fn prefixed(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn prefixed_specs<T: Scalar, P: Params<T>>(p: &P, prefix: &str, name: &str) -> Vec<ArraySpec> {
    p.specs(&prefixed(prefix, name))
}
