use std::cell::RefCell;
use std::collections::HashMap;

use indexmap::IndexMap;

use super::{Float, Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter registry. Iteration order is insertion order, which fixes
/// checkpoint layout and optimizer traversal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F> {
    params: IndexMap<String, Tensor<F>>,
}

impl<F: Float> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name {name}")));
        }
        self.params.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<F>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<F>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn cast<G: Float>(&self) -> ParamStore<G> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Binds registry entries to tape leaves, once per name, for one forward pass.
pub struct Binder<'t, 'p, F: Float> {
    tape: &'t Tape<F>,
    store: &'p ParamStore<F>,
    bound: RefCell<HashMap<String, Var<'t, F>>>,
    trainable: bool,
}

impl<'t, 'p, F: Float> Binder<'t, 'p, F> {
    /// Parameters become differentiable leaves.
    pub fn trainable(tape: &'t Tape<F>, store: &'p ParamStore<F>) -> Self {
        Binder {
            tape,
            store,
            bound: RefCell::new(HashMap::new()),
            trainable: true,
        }
    }

    /// Parameters become constants (evaluation, no gradients).
    pub fn frozen(tape: &'t Tape<F>, store: &'p ParamStore<F>) -> Self {
        Binder {
            trainable: false,
            ..Self::trainable(tape, store)
        }
    }

    pub fn tape(&self) -> &'t Tape<F> {
        self.tape
    }

    pub fn store(&self) -> &'p ParamStore<F> {
        self.store
    }

    pub fn param(&self, name: &str) -> Result<Var<'t, F>> {
        if let Some(v) = self.bound.borrow().get(name) {
            return Ok(*v);
        }
        let value = self.store.get(name)?.clone();
        let var = if self.trainable {
            self.tape.leaf(value)?
        } else {
            self.tape.constant(value)?
        };
        self.bound.borrow_mut().insert(name.to_string(), var);
        Ok(var)
    }

    /// Binds `name` to an existing tape value instead of the stored tensor,
    /// e.g. so a gradient check can perturb parameters as ordinary inputs.
    pub fn preset(&self, name: &str, var: Var<'t, F>) -> Result<()> {
        let stored = self.store.get(name)?;
        if stored.shape() != var.shape().as_slice() {
            return Err(Error::contract(format!(
                "preset {name}: shape {:?} does not match stored {:?}",
                var.shape(),
                stored.shape()
            )));
        }
        self.bound.borrow_mut().insert(name.to_string(), var);
        Ok(())
    }

    /// Names of the parameters touched so far.
    pub fn bound_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.bound.borrow().keys().cloned().collect();
        names.sort();
        names
    }

    /// Gradient for every registry entry, zero for entries the pass never touched.
    pub fn collect(&self, grads: &Gradients<F>) -> IndexMap<String, Tensor<F>> {
        let bound = self.bound.borrow();
        self.store
            .iter()
            .map(|(name, value)| {
                let g = bound
                    .get(name)
                    .and_then(|v| grads.wrt(*v))
                    .unwrap_or_else(|| Tensor::zeros(value.shape()));
                (name.to_string(), g)
            })
            .collect()
    }
}
