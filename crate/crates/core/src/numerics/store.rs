use std::collections::HashMap;

use super::{NdArray, NumericsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// First-order update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: HashMap<ParamId, NdArray>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&NdArray> {
        self.grads.get(&id)
    }

    pub(crate) fn accumulate_owned(&mut self, id: ParamId, g: NdArray) {
        match self.grads.get_mut(&id) {
            Some(acc) => acc.add_assign(&g),
            None => {
                self.grads.insert(id, g);
            }
        }
    }

    /// Adds row `k` of `g` into row `indices[k]` of the gradient of `id`.
    pub(crate) fn accumulate_rows(
        &mut self,
        id: ParamId,
        shape: &[usize],
        indices: &[usize],
        g: &NdArray,
    ) {
        let acc = self
            .grads
            .entry(id)
            .or_insert_with(|| NdArray::zeros(shape));
        for (k, &i) in indices.iter().enumerate() {
            for (dst, src) in acc.row_slice_mut(i).iter_mut().zip(g.row_slice(k)) {
                *dst += src;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &NdArray)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Named parameters with gradient buffers and optimizer state.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    index: HashMap<String, ParamId>,
    values: Vec<NdArray>,
    grads: Vec<NdArray>,
    first_moment: Vec<NdArray>,
    second_moment: Vec<NdArray>,
    steps: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: NdArray) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(NumericsError::DuplicateParameter(name.to_string()));
        }
        let id = ParamId(self.values.len());
        let zeros = NdArray::zeros(value.shape());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.grads.push(zeros.clone());
        self.first_moment.push(zeros.clone());
        self.second_moment.push(zeros);
        self.values.push(value);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NumericsError::UnknownParameter(name.to_string()))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &NdArray {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut NdArray {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &NdArray {
        &self.grads[id.0]
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Replaces a parameter's value; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: NdArray) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "set_value",
                left: self.values[id.0].shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    /// Adds a backward pass's gradients into the buffers.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.iter() {
            self.grads[id.0].add_assign(g);
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, opt: &Optimizer) -> Result<()> {
        if let Some(i) = self.grads.iter().position(|g| !g.is_finite()) {
            return Err(NumericsError::NonFiniteGradient(self.names[i].clone()));
        }
        self.steps += 1;
        match *opt {
            Optimizer::Sgd { lr } => {
                for (p, g) in self.values.iter_mut().zip(&self.grads) {
                    for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *x -= lr * d;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..self.values.len() {
                    let g = self.grads[i].data();
                    let m = self.first_moment[i].data_mut();
                    let v = self.second_moment[i].data_mut();
                    let p = self.values[i].data_mut();
                    for j in 0..p.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        self.zero_grads();
        Ok(())
    }
}
