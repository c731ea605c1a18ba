use rand::Rng;
use rand_distr::StandardNormal;

use super::{prefixed, ArraySpec, Params};
use crate::scalar::Scalar;

/// Token embedding table, `[vocab][dim]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T> {
    pub table: Vec<T>,
    pub vocab: usize,
    pub dim: usize,
}

impl<T: Scalar> Embedding<T> {
    pub fn init<R: Rng + ?Sized>(vocab: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        let table = (0..vocab * dim)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                T::lit(std * e)
            })
            .collect();
        Self { table, vocab, dim }
    }

    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self { table: vec![T::zero(); vocab * dim], vocab, dim }
    }

    pub fn row(&self, id: usize) -> &[T] {
        &self.table[id * self.dim..(id + 1) * self.dim]
    }

    pub fn accumulate(&mut self, id: usize, grad: &[T]) {
        let row = &mut self.table[id * self.dim..(id + 1) * self.dim];
        for (r, &g) in row.iter_mut().zip(grad) {
            *r = *r + g;
        }
    }
}

impl<T: Scalar> Params<T> for Embedding<T> {
    fn arrays(&self) -> Vec<&[T]> {
        vec![&self.table]
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        vec![&mut self.table]
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        vec![ArraySpec::new(prefixed(prefix, "table"), vec![self.vocab, self.dim])]
    }
}
