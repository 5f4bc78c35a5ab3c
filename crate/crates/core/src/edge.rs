//! Multi-scale edge filtering: a convolution bank initialized with fixed
//! edge detectors and applied at growing dilations.
//!
//! Per input channel the bank holds Prewitt-x, Prewitt-y and a Laplacian.
//! Scale `s` uses dilation `2^s` with matching padding, so every scale's
//! response is aligned with the input grid. When the bank is trainable the
//! kernels are ordinary parameters and are fine-tuned with the network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{Element, Tape, Tensor, Var};

/// Kernels per input channel at each scale.
pub const KERNELS_PER_CHANNEL: usize = 3;

const THIRD: f32 = 1.0 / 3.0;

/// Horizontal-gradient Prewitt kernel, scaled by 1/3.
pub const PREWITT_X: [f32; 9] = [-THIRD, 0.0, THIRD, -THIRD, 0.0, THIRD, -THIRD, 0.0, THIRD];
/// Vertical-gradient Prewitt kernel, scaled by 1/3.
pub const PREWITT_Y: [f32; 9] = [-THIRD, -THIRD, -THIRD, 0.0, 0.0, 0.0, THIRD, THIRD, THIRD];
/// 4-neighbour Laplacian, scaled by 1/4.
pub const LAPLACIAN: [f32; 9] = [0.0, 0.25, 0.0, 0.25, -1.0, 0.25, 0.0, 0.25, 0.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    pub scales: usize,
    pub trainable: bool,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            scales: 3,
            trainable: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EdgeFilterBank {
    in_channels: usize,
    dilations: Vec<usize>,
    weights: Vec<ParamId>,
    trainable: bool,
}

/// `(3 * in, in, 3, 3)` weight that applies the three detectors to each input
/// channel independently.
pub fn initial_weights(in_channels: usize) -> Tensor {
    let kernels = [PREWITT_X, PREWITT_Y, LAPLACIAN];
    let mut w = Tensor::zeros((in_channels * KERNELS_PER_CHANNEL, in_channels, 3, 3));
    let shape = w.shape();
    for c in 0..in_channels {
        for (t, k) in kernels.iter().enumerate() {
            let oc = c * KERNELS_PER_CHANNEL + t;
            let start = shape.index(oc, c, 0, 0);
            w.data_mut()[start..start + 9].copy_from_slice(k);
        }
    }
    w
}

impl EdgeFilterBank {
    pub fn build(store: &mut ParamStore, name: &str, in_channels: usize, scales: usize, trainable: bool) -> Result<Self> {
        if scales == 0 || in_channels == 0 {
            return Err(Error::contract("edge bank", "needs at least one scale and one channel"));
        }
        let dilations: Vec<usize> = (0..scales).map(|s| 1 << s).collect();
        let weights = dilations
            .iter()
            .map(|d| store.add(format!("{name}.d{d}"), initial_weights(in_channels), trainable))
            .collect();
        Ok(EdgeFilterBank {
            in_channels,
            dilations,
            weights,
            trainable,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels * KERNELS_PER_CHANNEL * self.dilations.len()
    }

    pub fn dilations(&self) -> &[usize] {
        &self.dilations
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn weight_ids(&self) -> &[ParamId] {
        &self.weights
    }

    /// Concatenated per-scale responses, same spatial size as `img`.
    pub fn extract_edges<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, img: Var) -> Result<Var> {
        let s = tape.value(img).shape();
        if s.c != self.in_channels {
            return Err(Error::contract(
                "extract_edges",
                format!("image has {} channels, bank expects {}", s.c, self.in_channels),
            ));
        }
        let responses = self
            .dilations
            .iter()
            .zip(&self.weights)
            .map(|(&d, &w)| tape.conv2d(img, p[w], None, 1, d, d))
            .collect::<Result<Vec<_>>>()?;
        tape.concat_channels(&responses)
    }
}
