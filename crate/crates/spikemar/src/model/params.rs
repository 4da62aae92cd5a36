//! Named parameter storage.
//!
//! All model parameters live in one flat, insertion-ordered set; modules
//! hold typed [`ParamId`] handles into it. That keeps the optimizer,
//! checkpoint serialization, and teacher-to-student weight copying in one
//! place, and the insertion order doubles as the deterministic
//! serialization order.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::{GradTape, Gradients, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::contract(
                "ParamSet::insert",
                format!("duplicate parameter name {name}"),
            ));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id.0);
        self.entries.push((name, tensor));
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Copies values from `other` for every name present in both sets.
    /// Shapes must agree where names match.
    pub fn copy_matching(&mut self, other: &ParamSet) -> Result<usize> {
        let mut copied = 0;
        for (name, tensor) in &mut self.entries {
            if let Some(src) = other.index.get(name.as_str()) {
                let src = &other.entries[*src].1;
                if src.shape() != tensor.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "ParamSet::copy_matching",
                        left: tensor.shape().to_vec(),
                        right: src.shape().to_vec(),
                    });
                }
                *tensor = src.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Puts every parameter on a tape: watched (gradient-tracked) when
    /// `trainable`, as plain constants otherwise.
    pub fn lift(&self, tape: &GradTape, trainable: bool) -> Lifted {
        Lifted {
            tensors: self
                .entries
                .iter()
                .map(|(_, t)| if trainable { tape.watch(t) } else { t.clone() })
                .collect(),
        }
    }
}

/// Tape handles for one training step, parallel to the [`ParamSet`].
pub struct Lifted {
    tensors: Vec<Tensor>,
}

impl Lifted {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    /// Collects per-parameter gradients in slot order (`None` where no
    /// gradient reached the parameter).
    pub fn collect_grads(&self, grads: &Gradients) -> Vec<Option<Vec<f64>>> {
        self.tensors
            .iter()
            .map(|t| grads.get(t).map(|g| g.to_vec()))
            .collect()
    }
}
