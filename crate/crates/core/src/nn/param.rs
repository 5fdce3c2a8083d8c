use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    /// He-normal initialised weight with the given fan-in.
    pub fn add_he<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let std = (2.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        self.add(name, Tensor::from_raw(shape.to_vec(), data))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        for p in &mut self.params {
            p.grad.scale_assign(s);
        }
    }

    /// Total number of scalar entries over all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces the values of `self` with those of `other`, matching by name.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.params {
            let src = other
                .params
                .iter()
                .find(|q| q.name == p.name)
                .ok_or_else(|| Error::Format(format!("checkpoint has no parameter `{}`", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::shape(
                    "load_from",
                    format!(
                        "parameter `{}` is {:?} in checkpoint, {:?} in model",
                        p.name,
                        src.value.shape(),
                        p.value.shape()
                    ),
                ));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }

    pub(crate) fn push_param(&mut self, param: Param) {
        self.params.push(param);
    }
}

/// Plain SGD with classical momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(store: &ParamStore, lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: store.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    /// `v <- momentum * v + grad; value <- value - lr * v`, then zeroes grads.
    pub fn step(&mut self, store: &mut ParamStore) {
        for (p, v) in store.params.iter_mut().zip(&mut self.velocity) {
            for ((val, vel), &g) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(v.data_mut().iter_mut())
                .zip(p.grad.data())
            {
                *vel = self.momentum * *vel + g;
                *val -= self.lr * *vel;
            }
        }
        store.zero_grad();
    }
}
