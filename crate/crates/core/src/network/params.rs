use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::network::spec::NetworkSpec;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Real = f32> {
    pub value: Tensor<T>,
    /// Same shape as `value`; accumulated by backward, cleared by the optimizer.
    pub grad: Tensor<T>,
    pub trainable: bool,
    /// Running statistics: saved with the weights, never differentiated.
    pub buffer: bool,
}

/// Named parameters in insertion (layer) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    params: IndexMap<String, Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool, buffer: bool) {
        let grad = Tensor::zeros(value.shape());
        self.params.insert(
            name.into(),
            Param {
                value,
                grad,
                trainable: trainable && !buffer,
                buffer,
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name).map(|p| &p.value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Marks every learnable parameter trainable or frozen.
    pub fn set_trainable(&mut self, trainable: bool) {
        for p in self.params.values_mut() {
            p.trainable = trainable && !p.buffer;
        }
    }

    pub fn trainable_count(&self) -> usize {
        self.params
            .values()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Moves every entry of `other` into `self`; names must not collide.
    pub fn merge(&mut self, other: ParamStore<T>) -> Result<()> {
        for (name, p) in other.params {
            if self.params.contains_key(&name) {
                return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
            }
            self.params.insert(name, p);
        }
        Ok(())
    }

    /// Copy restricted to the tensors `spec` declares, in its order.
    pub fn subset(&self, spec: &NetworkSpec) -> Result<Self> {
        let mut out = Self::new();
        for (name, _, _) in spec.param_table() {
            let p = self.get(&name)?.clone();
            out.params.insert(name, p);
        }
        Ok(out)
    }

    /// Checks that exactly the tensors `spec` declares are present with the declared shapes.
    pub fn validate_against(&self, spec: &NetworkSpec) -> Result<()> {
        let table = spec.param_table();
        for (name, shape, _) in &table {
            let p = self.get(name)?;
            if p.value.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: p.value.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = self
            .names()
            .find(|n| !table.iter().any(|(t, _, _)| t == n))
        {
            return Err(Error::UnknownTensor(extra.to_string()));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            grad: p.grad.cast(),
                            trainable: p.trainable,
                            buffer: p.buffer,
                        },
                    )
                })
                .collect(),
        }
    }
}
