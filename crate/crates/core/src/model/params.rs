use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ParamId = usize;

/// A named, dense, row-major parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// All trainable tensors of a model, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    by_name: HashMap<String, ParamId>,
}

pub enum Init {
    Zeros,
    Uniform(f64),
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Shape(format!("parameter {name:?} registered twice")));
        }
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Uniform(a) => (0..n).map(|_| rng.gen_range(-a..=a)).collect(),
        };
        self.insert(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn insert(&mut self, tensor: Tensor) -> Result<ParamId> {
        let n: usize = tensor.shape.iter().product();
        if n != tensor.data.len() {
            return Err(Error::Shape(format!(
                "tensor {:?} has shape {:?} but {} values",
                tensor.name,
                tensor.shape,
                tensor.data.len()
            )));
        }
        let id = self.tensors.len();
        self.by_name.insert(tensor.name.clone(), id);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name:?}")))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// ‖θ‖² over every tensor.
    pub fn squared_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Checks that `shape` matches the stored tensor.
    pub fn expect_shape(&self, id: ParamId, shape: &[usize]) -> Result<()> {
        let t = &self.tensors[id];
        if t.shape != shape {
            return Err(Error::Shape(format!(
                "{:?}: expected {:?}, found {:?}",
                t.name, shape, t.shape
            )));
        }
        Ok(())
    }
}

/// Gradient buffers parallel to a [`ParamStore`]; allocated on first write.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn for_store(store: &ParamStore) -> Self {
        Gradients {
            grads: vec![Vec::new(); store.len()],
        }
    }

    pub(crate) fn slot(&mut self, id: ParamId, len: usize) -> &mut [f64] {
        let g = &mut self.grads[id];
        if g.is_empty() {
            g.resize(len, 0.0);
        }
        g
    }

    /// Gradient of one tensor; `None` when it received no gradient.
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        let g = &self.grads[id];
        (!g.is_empty()).then_some(g.as_slice())
    }

    pub fn dense(&self, id: ParamId, len: usize) -> Vec<f64> {
        match self.get(id) {
            Some(g) => g.to_vec(),
            None => vec![0.0; len],
        }
    }

    pub fn add_scaled_params(&mut self, store: &ParamStore, scale: f64) {
        for (id, t) in store.tensors().iter().enumerate() {
            let g = self.slot(id, t.len());
            for (g, v) in g.iter_mut().zip(&t.data) {
                *g += scale * v;
            }
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (id, g) in other.grads.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let mine = self.slot(id, g.len());
            for (a, b) in mine.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|v| v.is_finite())
    }
}
