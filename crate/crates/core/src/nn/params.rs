use std::collections::HashMap;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<S>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Same names and shapes, converted to another precision.
    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Overwrite every tensor from `other`, which must have the same layout.
    pub fn load_from(&mut self, other: &ParamStore<S>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::invalid("load_params", "parameter names differ"));
        }
        for (i, (a, b)) in self.tensors.iter_mut().zip(&other.tensors).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::invalid(
                    "load_params",
                    format!(
                        "shape of `{}` is {:?}, expected {:?}",
                        self.names[i],
                        b.shape(),
                        a.shape()
                    ),
                ));
            }
            *a = b.clone();
        }
        Ok(())
    }
}

/// Registers parameters under a dotted name prefix and initializes them.
pub struct ParamBuilder<'a, S> {
    store: &'a mut ParamStore<S>,
    rng: &'a mut Rng,
    prefix: String,
}

impl<'a, S: Scalar> ParamBuilder<'a, S> {
    pub fn new(store: &'a mut ParamStore<S>, rng: &'a mut Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    /// Builder for a child namespace.
    pub fn sub(&mut self, name: &str) -> ParamBuilder<'_, S> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        ParamBuilder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> ParamId {
        let n = shape.iter().product();
        let data = self.rng.uniform_vec(n, -bound, bound);
        let t = Tensor::new(shape, data).expect("shape matches data");
        let full = self.full_name(name);
        self.store.add(full, t)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> ParamId {
        let n = shape.iter().product();
        let data: Vec<S> = self
            .rng
            .normal_vec::<S>(n)
            .into_iter()
            .map(|v| v * S::lit(std))
            .collect();
        let t = Tensor::new(shape, data).expect("shape matches data");
        let full = self.full_name(name);
        self.store.add(full, t)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        let full = self.full_name(name);
        self.store.add(full, Tensor::full(shape, S::lit(value)))
    }
}

/// Lazily binds the parameters of one store into a graph, either as
/// trainable leaves or as constants.
pub struct Binder<'a, S: Scalar> {
    store: &'a ParamStore<S>,
    vars: Vec<Option<Var>>,
    trainable: bool,
}

impl<'a, S: Scalar> Binder<'a, S> {
    pub fn new(store: &'a ParamStore<S>, trainable: bool) -> Self {
        Self {
            store,
            vars: vec![None; store.len()],
            trainable,
        }
    }

    pub fn store(&self) -> &ParamStore<S> {
        self.store
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn var(&mut self, g: &mut Graph<S>, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let t = self.store.get(id).clone();
        let v = if self.trainable { g.leaf(t) } else { g.constant(t) };
        self.vars[id.0] = Some(v);
        v
    }

    /// Per-parameter gradients after `g.backward`, zero for unused parameters.
    pub fn grads(&self, g: &Graph<S>) -> Vec<Vec<S>> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Some(v) => g.grad_or_zeros(*v),
                None => vec![S::zero(); self.store.tensors[i].len()],
            })
            .collect()
    }

    /// Whether a parameter took part in the forward pass.
    pub fn used(&self, id: ParamId) -> bool {
        self.vars[id.0].is_some()
    }
}
