use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelError, TensorF};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<TensorF>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: TensorF) -> ParamId {
        let name = name.into();
        assert!(self.id(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &TensorF {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut TensorF {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&TensorF> {
        self.id(name).map(|i| &self.tensors[i.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorF)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn value_count(&self) -> usize {
        self.tensors.iter().map(TensorF::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(TensorF::zero_grad);
    }

    /// Multiplies every accumulated gradient by `f`.
    pub fn scale_grads(&mut self, f: f64) {
        for t in &mut self.tensors {
            if t.grad().is_some() {
                t.grad_mut().iter_mut().for_each(|g| *g *= f);
            }
        }
    }

    /// Overwrites values of `name` keeping its shape.
    pub fn assign(&mut self, name: &str, values: &TensorF) -> Result<(), ModelError> {
        let id = self.id(name).ok_or_else(|| ModelError::MissingParameter(name.to_string()))?;
        let t = &mut self.tensors[id.0];
        if t.shape() != values.shape() {
            return Err(ModelError::ShapeMismatch(format!(
                "{name}: expected {:?}, got {:?}",
                t.shape(),
                values.shape()
            )));
        }
        t.data_mut().copy_from_slice(values.data());
        Ok(())
    }
}

/// Uniform Glorot initialisation for a weight of the given fan sizes.
pub fn glorot(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> TensorF {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    TensorF::from_fn(shape, |_| rng.gen_range(-a..a))
}

pub fn normal(shape: Vec<usize>, std: f64, rng: &mut impl Rng) -> TensorF {
    let d = Normal::new(0.0, std).expect("finite std");
    TensorF::from_fn(shape, |_| d.sample(rng))
}

/// Adaptive moment estimation.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies the accumulated gradients and clears them.
    pub fn step(&mut self, params: &mut ParamStore) {
        if self.m.len() != params.len() {
            self.m = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, t) in params.tensors.iter_mut().enumerate() {
            let Some(g) = t.grad().map(<[f64]>::to_vec) else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, x) in t.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                *x -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
            t.zero_grad();
        }
    }
}
