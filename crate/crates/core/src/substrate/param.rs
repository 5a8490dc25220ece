use std::collections::HashMap;

use rand::Rng;

use crate::substrate::{SubstrateError, Tensor};
use crate::Scalar;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Owns every parameter of a model. Names are unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId, SubstrateError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(SubstrateError::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad });
        Ok(id)
    }

    /// Adds a weight matrix `[rows × cols]` drawn from U(−a, a), `a = 1/sqrt(cols)`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId, SubstrateError> {
        let a = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-a..a))).collect();
        self.add(name, Tensor::new(vec![rows, cols], data)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId, SubstrateError> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Result<ParamId, SubstrateError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| SubstrateError::UnknownParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Parameter<T>)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Adds `scale · grads` into the stored gradients.
    pub fn accumulate(&mut self, grads: &Gradients<T>, scale: T) {
        for (p, g) in self.params.iter_mut().zip(&grads.per_param) {
            if let Some(g) = g {
                for (acc, &x) in p.grad.data_mut().iter_mut().zip(g) {
                    *acc += scale * x;
                }
            }
        }
    }

    pub fn grad_norm(&self) -> T {
        self.params
            .iter()
            .flat_map(|p| p.grad.data().iter())
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }

    /// Rescales all gradients so that their global L2 norm is at most
    /// `max_norm`. Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: T) -> T {
        let norm = self.grad_norm();
        if norm > max_norm {
            let s = max_norm / norm;
            for p in &mut self.params {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    pub fn grads_are_zero(&self) -> bool {
        self.params.iter().all(|p| p.grad.data().iter().all(|g| g.is_zero()))
    }

    /// Copies every value into a store of another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Parameter gradients produced by one backward pass. Parameters that the
/// graph never touched have no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    per_param: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn empty(num_params: usize) -> Self {
        Self {
            per_param: vec![None; num_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.per_param.get(id.0).and_then(|g| g.as_deref())
    }

    pub(crate) fn slot(&mut self, id: ParamId, len: usize) -> &mut Vec<T> {
        self.per_param[id.0].get_or_insert_with(|| vec![T::zero(); len])
    }

    /// Gradient value for one coordinate, zero if untouched.
    pub fn coord(&self, id: ParamId, index: usize) -> T {
        self.get(id).map(|g| g[index]).unwrap_or_else(T::zero)
    }

    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        for (mine, theirs) in self.per_param.iter_mut().zip(&other.per_param) {
            if let Some(t) = theirs {
                let m = mine.get_or_insert_with(|| vec![T::zero(); t.len()]);
                for (a, &b) in m.iter_mut().zip(t) {
                    *a += scale * b;
                }
            }
        }
    }

    pub fn norm(&self) -> T {
        self.per_param
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.per_param.iter().flatten().all(|g| g.iter().all(|x| x.is_zero()))
    }

    pub fn is_finite(&self) -> bool {
        self.per_param.iter().flatten().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

/// Parameter handles of one LSTM cell: `W_ih [4H × in]`, `W_hh [4H × H]`,
/// `b [4H]`, gate blocks ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmWeights {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmWeights {
    /// Registers `{prefix}.W_ih`, `{prefix}.W_hh` and `{prefix}.b` with the
    /// forget-gate bias set to +1.
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Result<Self, SubstrateError> {
        let w_ih = store.add_uniform(format!("{prefix}.W_ih"), 4 * hidden_size, input_size, rng)?;
        let w_hh = store.add_uniform(format!("{prefix}.W_hh"), 4 * hidden_size, hidden_size, rng)?;
        let mut b = vec![T::zero(); 4 * hidden_size];
        b[hidden_size..2 * hidden_size].iter_mut().for_each(|x| *x = T::one());
        let bias = store.add(format!("{prefix}.b"), Tensor::vector(b))?;
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            input_size,
            hidden_size,
        })
    }

    pub fn ids(&self) -> [ParamId; 3] {
        [self.w_ih, self.w_hh, self.bias]
    }
}
