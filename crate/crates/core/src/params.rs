//! Named parameter storage and the layer building blocks shared by the
//! network, the edge bank and the high-pass loss network.

use std::ops::Index;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Shape, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    tensor: Tensor,
    trainable: bool,
}

/// Ordered collection of parameter tensors. Order is the serialization order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

/// Parameters of one [`ParamStore`] recorded on a tape.
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

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        self.entries.push(Entry {
            name: name.into(),
            tensor,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, bool)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor, e.trainable))
    }

    /// Total scalar count across every tensor, frozen ones included.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    /// Records every tensor on `tape`; trainable ones as gradient leaves.
    pub fn bind<T: Element>(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| tape.leaf(e.tensor.cast::<T>().with_grad(e.trainable)))
            .collect();
        Bound { vars }
    }

    /// Records every tensor as a constant (no gradients anywhere).
    pub fn bind_frozen<T: Element>(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| tape.constant(e.tensor.cast::<T>()))
            .collect();
        Bound { vars }
    }

    /// Copies leaf gradients from the last `backward` into trainable tensors.
    pub fn collect_grads(&mut self, tape: &Tape, bound: &Bound) {
        for (e, &v) in self.entries.iter_mut().zip(&bound.vars) {
            if e.trainable {
                let g = tape.grad(v).map(<[f32]>::to_vec);
                e.tensor.set_grad(g);
            }
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.entries
            .iter_mut()
            .filter(|e| e.trainable)
            .map(|e| &mut e.tensor)
            .collect()
    }

    pub fn to_flat(&self) -> Vec<f32> {
        self.entries
            .iter()
            .flat_map(|e| e.tensor.data().iter().copied())
            .collect()
    }

    pub fn load_flat(&mut self, flat: &[f32]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::ConfigMismatch(format!(
                "payload holds {} parameters, model expects {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut off = 0;
        for e in &mut self.entries {
            let n = e.tensor.numel();
            e.tensor.data_mut().copy_from_slice(&flat[off..off + n]);
            e.tensor.set_grad(None);
            off += n;
        }
        Ok(())
    }
}

/// Weight initialization for a convolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Kaiming-uniform over fan-in, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
    KaimingUniform,
    Zeros,
}

pub(crate) fn init_tensor(shape: Shape, init: Init, rng: &mut Rng) -> Tensor {
    match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::KaimingUniform => {
            let fan_in = (shape.c * shape.h * shape.w).max(1) as f32;
            let bound = (6.0 / fan_in).sqrt();
            Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
        }
    }
}

/// Convolution layer with zero padding `(k - 1) / 2 * dilation` unless overridden.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bias: bool,
    pub init: Init,
}

impl ConvSpec {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        ConvSpec {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            bias: true,
            init: Init::KaimingUniform,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }
}

impl Conv2d {
    pub fn new(store: &mut ParamStore, name: &str, spec: ConvSpec, rng: &mut Rng) -> Self {
        let shape = Shape::new(spec.out_ch, spec.in_ch, spec.kernel, spec.kernel);
        let weight = store.add(format!("{name}.weight"), init_tensor(shape, spec.init, rng), true);
        let bias = spec
            .bias
            .then(|| store.add(format!("{name}.bias"), Tensor::zeros((spec.out_ch, 1, 1, 1)), true));
        Conv2d {
            weight,
            bias,
            stride: spec.stride,
            padding: (spec.kernel - 1) / 2,
            dilation: 1,
        }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        tape.conv2d(
            x,
            p[self.weight],
            self.bias.map(|b| p[b]),
            self.stride,
            self.padding,
            self.dilation,
        )
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.weight];
        ids.extend(self.bias);
        ids
    }
}
