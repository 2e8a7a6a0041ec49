use std::ops::Index;

use super::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

/// Tape handles for every parameter of a set, valid for one tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Registers a parameter. Names must be unique within the set.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name `{name}`"
        );
        self.names.push(name);
        self.tensors.push(tensor.requiring_grad());
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    /// Copies every parameter onto `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Result<Bound> {
        let vars = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect::<Result<_>>()?;
        Ok(Bound { vars })
    }

    /// Gradients left on `tape` for each bound parameter, in set order.
    pub fn collect_grads(&self, tape: &Tape<T>, bound: &Bound) -> Vec<Vec<T>> {
        bound
            .vars
            .iter()
            .zip(&self.tensors)
            .map(|(&v, t)| {
                tape.grad(v)
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); t.numel()])
            })
            .collect()
    }

    /// Adds `grads` (one buffer per parameter, in set order) into the
    /// parameters' gradient buffers.
    pub fn accumulate_grads(&mut self, grads: &[Vec<T>]) -> Result<()> {
        if grads.len() != self.tensors.len() {
            return Err(Error::dim(format!(
                "{} gradient buffers for {} parameters",
                grads.len(),
                self.tensors.len()
            )));
        }
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            let buf = t.grad_mut().expect("parameters track gradients");
            if buf.len() != g.len() {
                return Err(Error::dim("gradient buffer size mismatch"));
            }
            for (d, &s) in buf.iter_mut().zip(g) {
                *d = *d + s;
            }
        }
        Ok(())
    }

    /// Convenience for single-tape use: pulls gradients from `tape` and adds
    /// them to the parameters.
    pub fn accumulate_from(&mut self, tape: &Tape<T>, bound: &Bound) -> Result<()> {
        let grads = self.collect_grads(tape, bound);
        self.accumulate_grads(&grads)
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Copies the set into another precision (gradients reset to zero).
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast::<U>().requiring_grad()).collect(),
        }
    }

    /// Replaces values from `other`, which must have the same names and
    /// shapes in the same order.
    pub fn load_values(&mut self, other: &ParamSet<T>) -> Result<()> {
        if self.names != other.names {
            let missing: Vec<_> = self
                .names
                .iter()
                .filter(|n| !other.names.contains(n))
                .collect();
            return Err(Error::Contract(format!(
                "parameter names differ from the model (missing: {missing:?})"
            )));
        }
        for ((name, dst), src) in self.names.iter().zip(&mut self.tensors).zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(Error::Contract(format!(
                    "parameter `{name}` has shape {:?} in the model but {:?} in the checkpoint",
                    dst.shape(),
                    src.shape()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}
