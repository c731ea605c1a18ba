use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!("unknown optimizer '{other}' (expected adam or sgd)")),
        }
    }
}

/// Serializable optimizer moments, stored as `f64` regardless of scalar type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

/// Descent optimizer over a fixed list of arrays. Gradients passed to
/// [`Optimizer::step`] are gradients of a quantity to be minimized.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<T>,
    t: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

pub fn global_norm<T: Scalar>(grads: &[&[T]]) -> T {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(T::zero(), |acc, &g| acc + g * g)
        .sqrt()
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: T, clip_norm: Option<T>) -> Self {
        Self {
            kind,
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            clip_norm,
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient array count mismatch");
        if self.first.is_empty() && self.kind == OptimizerKind::Adam {
            self.first = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.second = self.first.clone();
        }
        let mut scale = T::one();
        if let Some(max) = self.clip_norm {
            let norm = global_norm(&grads);
            if norm > max && norm.is_finite() {
                scale = max / norm;
            }
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (pv, &gv) in p.iter_mut().zip(g) {
                        *pv = *pv - self.lr * scale * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.t as i32;
                let bc1 = T::one() - self.beta1.powi(t);
                let bc2 = T::one() - self.beta2.powi(t);
                let one = T::one();
                for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let m = &mut self.first[i];
                    let v = &mut self.second[i];
                    for j in 0..p.len() {
                        let gj = g[j] * scale;
                        m[j] = self.beta1 * m[j] + (one - self.beta1) * gj;
                        v[j] = self.beta2 * v[j] + (one - self.beta2) * gj * gj;
                        let mh = m[j] / bc1;
                        let vh = v[j] / bc2;
                        p[j] = p[j] - self.lr * mh / (vh.sqrt() + self.eps);
                    }
                }
            }
        }
    }

    pub fn state(&self) -> OptimizerState {
        let conv = |a: &Vec<Vec<T>>| -> Vec<Vec<f64>> {
            a.iter().map(|v| v.iter().map(|x| x.as_f64()).collect()).collect()
        };
        OptimizerState { step: self.t, first: conv(&self.first), second: conv(&self.second) }
    }

    pub fn restore(&mut self, state: &OptimizerState) {
        let conv = |a: &Vec<Vec<f64>>| -> Vec<Vec<T>> {
            a.iter().map(|v| v.iter().map(|&x| T::lit(x)).collect()).collect()
        };
        self.t = state.step;
        self.first = conv(&state.first);
        self.second = conv(&state.second);
    }
}
