use rand::Rng;

use super::activation::sigmoid;
use super::{prefixed, ArraySpec, Linear, Params};
use crate::scalar::Scalar;

/// Single-layer gated recurrent cell. Gate blocks are ordered reset, update,
/// candidate in both weight matrices:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// u  = σ(W_iu x + b_iu + W_hu h + b_hu)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 - u) ⊙ n + u ⊙ h
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Gru<T> {
    pub input: Linear<T>,
    pub recurrent: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct GruStepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    r: Vec<T>,
    u: Vec<T>,
    n: Vec<T>,
    hn: Vec<T>,
}

impl<T: Scalar> Gru<T> {
    pub fn init<R: Rng + ?Sized>(n_in: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input: Linear::init(n_in, 3 * hidden, 1.0, rng),
            recurrent: Linear::init(hidden, 3 * hidden, 1.0, rng),
        }
    }

    pub fn zeros(n_in: usize, hidden: usize) -> Self {
        Self {
            input: Linear::zeros(n_in, 3 * hidden),
            recurrent: Linear::zeros(hidden, 3 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent.n_in
    }

    pub fn n_in(&self) -> usize {
        self.input.n_in
    }

    pub fn step(&self, x: &[T], h: &[T]) -> (Vec<T>, GruStepCache<T>) {
        let hs = self.hidden();
        let gi = self.input.forward(x);
        let gh = self.recurrent.forward(h);
        let mut r = vec![T::zero(); hs];
        let mut u = vec![T::zero(); hs];
        let mut n = vec![T::zero(); hs];
        let hn = gh[2 * hs..].to_vec();
        let mut h_new = vec![T::zero(); hs];
        for j in 0..hs {
            r[j] = sigmoid(gi[j] + gh[j]);
            u[j] = sigmoid(gi[hs + j] + gh[hs + j]);
            n[j] = (gi[2 * hs + j] + r[j] * hn[j]).tanh();
            h_new[j] = (T::one() - u[j]) * n[j] + u[j] * h[j];
        }
        let cache = GruStepCache { x: x.to_vec(), h_prev: h.to_vec(), r, u, n, hn };
        (h_new, cache)
    }

    /// Backward through one step given `dL/dh'`; returns `(dL/dx, dL/dh)`.
    pub fn step_backward(
        &self,
        c: &GruStepCache<T>,
        dh_new: &[T],
        grad: Option<&mut Gru<T>>,
    ) -> (Vec<T>, Vec<T>) {
        let hs = self.hidden();
        let one = T::one();
        let mut d_in = vec![T::zero(); 3 * hs];
        let mut d_rec = vec![T::zero(); 3 * hs];
        let mut dh_direct = vec![T::zero(); hs];
        for j in 0..hs {
            let dh = dh_new[j];
            let dn = dh * (one - c.u[j]);
            let du = dh * (c.h_prev[j] - c.n[j]);
            dh_direct[j] = dh * c.u[j];
            let dan = dn * (one - c.n[j] * c.n[j]);
            let dr = dan * c.hn[j];
            let dar = dr * c.r[j] * (one - c.r[j]);
            let dau = du * c.u[j] * (one - c.u[j]);
            d_in[j] = dar;
            d_in[hs + j] = dau;
            d_in[2 * hs + j] = dan;
            d_rec[j] = dar;
            d_rec[hs + j] = dau;
            d_rec[2 * hs + j] = dan * c.r[j];
        }
        let (dx, dh_rec) = match grad {
            Some(g) => (
                self.input.backward(&c.x, &d_in, Some(&mut g.input)),
                self.recurrent.backward(&c.h_prev, &d_rec, Some(&mut g.recurrent)),
            ),
            None => (
                self.input.backward_input(&d_in),
                self.recurrent.backward_input(&d_rec),
            ),
        };
        let dh_prev = dh_direct.iter().zip(&dh_rec).map(|(&a, &b)| a + b).collect();
        (dx, dh_prev)
    }
}

impl<T: Scalar> Params<T> for Gru<T> {
    fn arrays(&self) -> Vec<&[T]> {
        let mut v = self.input.arrays();
        v.extend(self.recurrent.arrays());
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.input.arrays_mut();
        v.extend(self.recurrent.arrays_mut());
        v
    }

    fn specs(&self, prefix: &str) -> Vec<ArraySpec> {
        let mut v = self.input.specs(&prefixed(prefix, "input"));
        v.extend(self.recurrent.specs(&prefixed(prefix, "recurrent")));
        v
    }
}
