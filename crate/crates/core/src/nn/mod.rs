//! Minimal neural-network toolkit: tensors, a reverse-mode tape, layers, and SGD.

mod graph;
pub mod layers;
pub mod optim;
mod tensor;

use std::collections::HashMap;

pub use graph::{conv2d_forward, conv_out_len, matmul, sigmoid, transpose, Graph, UnaryFn, Var};
pub use tensor::Tensor;

use crate::rng::Rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::Shape {
        op,
        detail: detail.into(),
    }
}

/// One named slice of a [`Params`] vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// All weights of a model as one flat vector with named, shaped slices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    slots: Vec<ParamSlot>,
    data: Vec<f64>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), NnError> {
        let name = name.into();
        if self.slot(&name).is_some() {
            return Err(NnError::DuplicateParam(name));
        }
        let offset = self.data.len();
        self.slots.push(ParamSlot {
            name,
            shape: value.shape().to_vec(),
            offset,
            len: value.len(),
        });
        self.data.extend_from_slice(value.data());
        Ok(())
    }

    /// He-style normal init for a conv weight `[out, in, k, k]` plus zero bias.
    pub fn push_conv(
        &mut self,
        name: &str,
        out: usize,
        input: usize,
        k: usize,
        rng: &mut Rng,
    ) -> Result<(), NnError> {
        let std = (2.0 / (input * k * k) as f64).sqrt();
        self.push(
            format!("{name}.w"),
            Tensor::randn(&[out, input, k, k], std, rng),
        )?;
        self.push(format!("{name}.b"), Tensor::zeros(&[out]))
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&ParamSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slice(&self, name: &str) -> Result<&[f64], NnError> {
        let s = self
            .slot(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        Ok(&self.data[s.offset..s.offset + s.len])
    }

    pub fn slice_mut(&mut self, name: &str) -> Result<&mut [f64], NnError> {
        let s = self
            .slot(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?
            .clone();
        Ok(&mut self.data[s.offset..s.offset + s.len])
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor, NnError> {
        let s = self
            .slot(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        Ok(Tensor::from_vec(
            &s.shape,
            self.data[s.offset..s.offset + s.len].to_vec(),
        ))
    }

    /// Copies of every slot whose name starts with `prefix`, in slot order.
    pub fn snapshot(&self, prefix: &str) -> Vec<f64> {
        self.slots
            .iter()
            .filter(|s| s.name.starts_with(prefix))
            .flat_map(|s| self.data[s.offset..s.offset + s.len].iter().copied())
            .collect()
    }

    /// Rebuilds from a slot table and data, checking that they agree.
    pub fn from_parts(slots: Vec<ParamSlot>, data: Vec<f64>) -> Result<Self, NnError> {
        let mut offset = 0;
        for s in &slots {
            if s.offset != offset || s.shape.iter().product::<usize>() != s.len {
                return Err(shape_err(
                    "params",
                    format!("inconsistent slot `{}`", s.name),
                ));
            }
            offset += s.len;
        }
        if offset != data.len() {
            return Err(shape_err(
                "params",
                format!("slots cover {offset} values, data has {}", data.len()),
            ));
        }
        Ok(Self { slots, data })
    }

    /// Places every slot on `g`; slots for which `trainable` is false become constants.
    pub fn bind(&self, g: &mut Graph, trainable: impl Fn(&str) -> bool) -> Bound {
        let mut vars = Vec::with_capacity(self.slots.len());
        let mut index = HashMap::with_capacity(self.slots.len());
        for (i, s) in self.slots.iter().enumerate() {
            let t = Tensor::from_vec(&s.shape, self.data[s.offset..s.offset + s.len].to_vec());
            let train = trainable(&s.name);
            let v = if train { g.param(t) } else { g.constant(t) };
            vars.push((v, train));
            index.insert(s.name.clone(), i);
        }
        Bound { vars, index }
    }
}

/// Graph handles for a bound [`Params`].
pub struct Bound {
    vars: Vec<(Var, bool)>,
    index: HashMap<String, usize>,
}

impl Bound {
    /// Panics on an unknown name; model code only asks for names it registered.
    pub fn var(&self, name: &str) -> Var {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not bound"));
        self.vars[i].0
    }

    pub fn gradient(&self, g: &Graph, params: &Params) -> Gradient {
        let mut flat = vec![0.0; params.len()];
        let mut active = Vec::with_capacity(self.vars.len());
        for ((v, train), slot) in self.vars.iter().zip(params.slots()) {
            active.push(*train);
            if let (true, Some(gr)) = (*train, g.grad(*v)) {
                flat[slot.offset..slot.offset + slot.len].copy_from_slice(gr.data());
            }
        }
        Gradient { flat, active }
    }
}

/// Flat gradient plus which slots the optimizer may touch.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub flat: Vec<f64>,
    pub active: Vec<bool>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.flat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
