//! Channel attention, residual channel attention blocks, and feature
//! attention for fusing several same-shaped feature maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{init_tensor, Bound, Conv2d, ConvSpec, Init, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Element, Shape, Tape, Var};

/// How feature-attention logits become weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGate {
    /// Independent gate per feature and channel.
    #[default]
    Sigmoid,
    /// Normalized across features for every channel.
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    pub reduction: usize,
    pub feature_gate: FeatureGate,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            reduction: 4,
            feature_gate: FeatureGate::Sigmoid,
        }
    }
}

/// Initial squeeze bias. With few hidden units a zero bias can leave every
/// unit below the ReLU threshold and the whole gate without gradient.
pub const SQUEEZE_BIAS_INIT: f32 = 1.0;

/// Squeeze-and-excite gate: `x * sigmoid(excite(relu(squeeze(gap(x)))))`.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    pub squeeze: Conv2d,
    pub excite: Conv2d,
    channels: usize,
}

impl ChannelAttention {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, reduction: usize, rng: &mut Rng) -> Result<Self> {
        if reduction == 0 || !channels.is_multiple_of(reduction) {
            return Err(Error::contract(
                "channel attention",
                format!("{channels} channels are not divisible by reduction {reduction}"),
            ));
        }
        let hidden = channels / reduction;
        let squeeze = Conv2d::new(store, &format!("{name}.squeeze"), ConvSpec::new(channels, hidden, 1), rng);
        if let Some(b) = squeeze.bias {
            store.get_mut(b).data_mut().fill(SQUEEZE_BIAS_INIT);
        }
        Ok(ChannelAttention {
            squeeze,
            excite: Conv2d::new(store, &format!("{name}.excite"), ConvSpec::new(hidden, channels, 1), rng),
            channels,
        })
    }

    /// Per-channel gate in `(0, 1)`, shaped `(N, C, 1, 1)`.
    pub fn gate<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, fmap: Var) -> Result<Var> {
        let c = tape.value(fmap).shape().c;
        if c != self.channels {
            return Err(Error::contract(
                "channel_attention",
                format!("feature map has {c} channels, attention expects {}", self.channels),
            ));
        }
        let pooled = tape.global_avg_pool(fmap)?;
        let hidden = self.squeeze.forward(tape, p, pooled)?;
        let hidden = tape.relu(hidden)?;
        let logits = self.excite.forward(tape, p, hidden)?;
        tape.sigmoid(logits)
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, fmap: Var) -> Result<Var> {
        let gate = self.gate(tape, p, fmap)?;
        tape.scale_channels(fmap, gate)
    }
}

/// `x + CA(conv(relu(conv(x))))` with channel-preserving 3x3 convolutions.
#[derive(Clone, Debug)]
pub struct Rcab {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub attention: ChannelAttention,
}

impl Rcab {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, reduction: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Rcab {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), ConvSpec::new(channels, channels, 3), rng),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), ConvSpec::new(channels, channels, 3), rng),
            attention: ChannelAttention::new(store, &format!("{name}.ca"), channels, reduction, rng)?,
        })
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let r = self.conv1.forward(tape, p, x)?;
        let r = tape.relu(r)?;
        let r = self.conv2.forward(tape, p, r)?;
        let r = self.attention.forward(tape, p, r)?;
        tape.add(x, r)
    }
}

/// Width of the convolution along the feature axis.
pub const FEATURE_KERNEL: usize = 3;

/// Weighted sum of `F` feature maps with per-channel weights.
///
/// Each map is pooled to a channel vector; the `F x C` stack is zero-padded
/// along the feature axis and convolved there with a width-3 kernel shared
/// across channels, so the output keeps `F x C` entries. The gated result
/// weights each map before summation.
#[derive(Clone, Debug)]
pub struct FeatureAttention {
    pub weight: ParamId,
    features: usize,
    gate: FeatureGate,
}

impl FeatureAttention {
    pub fn new(store: &mut ParamStore, name: &str, features: usize, gate: FeatureGate, rng: &mut Rng) -> Result<Self> {
        if features < 2 {
            return Err(Error::contract("feature attention", "needs at least two features"));
        }
        let shape = Shape::new(1, 1, FEATURE_KERNEL, 1);
        let weight = store.add(format!("{name}.weight"), init_tensor(shape, Init::KaimingUniform, rng), true);
        Ok(FeatureAttention {
            weight,
            features,
            gate,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Gate values `w[n, 0, f, c]` for the given maps.
    pub fn weights<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, features: &[Var]) -> Result<Var> {
        if features.len() != self.features {
            return Err(Error::contract(
                "feature_attention",
                format!("got {} features, module fuses {}", features.len(), self.features),
            ));
        }
        let shape = tape.value(features[0]).shape();
        for &f in features {
            let s = tape.value(f).shape();
            if s != shape {
                return Err(Error::ShapeMismatch {
                    op: "feature_attention",
                    lhs: shape,
                    rhs: s,
                });
            }
        }
        let pooled = features
            .iter()
            .map(|&f| tape.global_avg_pool(f))
            .collect::<Result<Vec<_>>>()?;
        let stacked = tape.stack_pooled(&pooled)?;
        let logits = tape.conv2d_padded(stacked, p[self.weight], None, 1, (FEATURE_KERNEL / 2, 0), 1)?;
        match self.gate {
            FeatureGate::Sigmoid => tape.sigmoid(logits),
            FeatureGate::Softmax => tape.softmax_features(logits),
        }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, features: &[Var]) -> Result<Var> {
        let w = self.weights(tape, p, features)?;
        tape.weighted_sum(features, w)
    }
}
