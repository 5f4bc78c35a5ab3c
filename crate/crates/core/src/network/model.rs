use std::path::Path;

use super::config::{NetworkConfig, SCALES};
use super::train::TrainState;
use crate::attention::{FeatureAttention, Rcab};
use crate::data::ImageBuffer;
use crate::checkpoint::{AdamState, Checkpoint, MODEL_MAGIC};
use crate::edge::EdgeFilterBank;
use crate::error::{Error, Result};
use crate::params::{Bound, Conv2d, ConvSpec, Init, ParamStore};
use crate::rng::rng_for;
use crate::tensor::{AdamConfig, Element, Tape, Tensor, Var};

/// Input height and width must be multiples of this.
pub const SIZE_MULTIPLE: usize = 4;

#[derive(Clone, Debug)]
struct Body {
    blocks: Vec<Rcab>,
    conv: Conv2d,
}

/// Three-scale enhancement network and its parameters.
///
/// Scale `k` works at `1 / 2^k` of the input resolution. Per scale: a head
/// conv on the downscaled image gives low-level features; those are fused
/// across all scales by feature attention; an RCAB body turns the fusion into
/// high-level features; and a second feature attention merges high-level,
/// low-level and edge-bank features with the upsampled result of the next
/// smaller scale. A zero-initialized tail turns the full-resolution fusion
/// into a residual on the input.
#[derive(Clone, Debug)]
pub struct Model {
    config: NetworkConfig,
    store: ParamStore,
    down_in: Vec<Conv2d>,
    heads: Vec<Conv2d>,
    pre_down: Vec<Conv2d>,
    pre_up: Vec<Conv2d>,
    pre_fuse: Vec<FeatureAttention>,
    bodies: Vec<Body>,
    edges: EdgeFilterBank,
    edge_proj: Vec<Conv2d>,
    post_up: Vec<Conv2d>,
    post_fuse: Vec<FeatureAttention>,
    upsample: Vec<Conv2d>,
    tail: Conv2d,
    sr_skip: Option<Conv2d>,
}

impl Model {
    /// Deterministic initialization from `config.seed`.
    pub fn build(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, 0);
        let rng = &mut rng;
        let mut store = ParamStore::new();
        let s = &mut store;
        let c = config.channels;
        let r = config.attention.reduction;
        let gate = config.attention.feature_gate;

        let down_in = (0..SCALES - 1)
            .map(|i| Conv2d::new(s, &format!("down_in.{i}"), ConvSpec::new(3, 3, 3).stride(2), rng))
            .collect();
        let heads = (0..SCALES)
            .map(|k| Conv2d::new(s, &format!("head.{k}"), ConvSpec::new(3, c, 3), rng))
            .collect();
        let pre_down = (0..SCALES - 1)
            .map(|i| Conv2d::new(s, &format!("pre_down.{i}"), ConvSpec::new(c, c, 3).stride(2), rng))
            .collect();
        let pre_up = (0..SCALES - 1)
            .map(|i| Conv2d::new(s, &format!("pre_up.{i}"), ConvSpec::new(c, 4 * c, 3), rng))
            .collect();
        let pre_fuse = (0..SCALES)
            .map(|k| FeatureAttention::new(s, &format!("pre_fuse.{k}"), SCALES, gate, rng))
            .collect::<Result<_>>()?;
        let bodies = (0..SCALES)
            .map(|k| {
                let blocks = (0..config.blocks_per_scale[k])
                    .map(|b| Rcab::new(s, &format!("body.{k}.rcab.{b}"), c, r, rng))
                    .collect::<Result<_>>()?;
                let conv = Conv2d::new(s, &format!("body.{k}.conv"), ConvSpec::new(c, c, 3), rng);
                Ok(Body { blocks, conv })
            })
            .collect::<Result<_>>()?;
        let edges = EdgeFilterBank::build(s, "edge", 3, config.edge.scales, config.edge.trainable)?;
        let edge_proj = (0..SCALES)
            .map(|k| Conv2d::new(s, &format!("edge_proj.{k}"), ConvSpec::new(edges.out_channels(), c, 1), rng))
            .collect();
        let post_up = (0..SCALES - 1)
            .map(|i| Conv2d::new(s, &format!("post_up.{i}"), ConvSpec::new(c, 4 * c, 3), rng))
            .collect();
        let post_fuse = (0..SCALES)
            .map(|k| {
                let f = if k == SCALES - 1 { 3 } else { 4 };
                FeatureAttention::new(s, &format!("post_fuse.{k}"), f, gate, rng)
            })
            .collect::<Result<_>>()?;
        let stages = config.sr_scale.trailing_zeros() as usize;
        let upsample = (0..stages)
            .map(|i| Conv2d::new(s, &format!("upsample.{i}"), ConvSpec::new(c, 4 * c, 3), rng))
            .collect();
        let tail = Conv2d::new(s, "tail", ConvSpec::new(c, 3, 3).init(Init::Zeros), rng);
        let sq = config.sr_scale * config.sr_scale;
        let sr_skip = (config.sr_scale > 1).then(|| Conv2d::new(s, "sr_skip", ConvSpec::new(3, 3 * sq, 3), rng));

        Ok(Model {
            config,
            store,
            down_in,
            heads,
            pre_down,
            pre_up,
            pre_fuse,
            bodies,
            edges,
            edge_proj,
            post_up,
            post_fuse,
            upsample,
            tail,
            sr_skip,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_blocks(&self) -> Vec<usize> {
        self.bodies.iter().map(|b| b.blocks.len()).collect()
    }

    pub fn tail(&self) -> &Conv2d {
        &self.tail
    }

    pub fn heads(&self) -> &[Conv2d] {
        &self.heads
    }

    /// Checks an input shape against the model's contract.
    pub fn check_input(&self, shape: crate::Shape) -> Result<()> {
        if shape.c != 3 {
            return Err(Error::contract("forward", format!("expects 3 channels, got {}", shape.c)));
        }
        if shape.h == 0 || shape.w == 0 || !shape.h.is_multiple_of(SIZE_MULTIPLE) || !shape.w.is_multiple_of(SIZE_MULTIPLE) {
            return Err(Error::contract(
                "forward",
                format!(
                    "height and width must be positive multiples of {SIZE_MULTIPLE}, got {}x{}",
                    shape.h, shape.w
                ),
            ));
        }
        Ok(())
    }

    /// `(N, 3, H, W)` to `(N, 3, H s, W s)`.
    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        self.check_input(tape.value(x).shape())?;

        let mut xs = vec![x];
        for d in &self.down_in {
            let prev = *xs.last().unwrap();
            xs.push(d.forward(tape, p, prev)?);
        }
        let low = (0..SCALES)
            .map(|k| self.heads[k].forward(tape, p, xs[k]))
            .collect::<Result<Vec<_>>>()?;

        // resized[j][k]: low-level features of scale j brought to scale k
        let mut resized = [[None::<Var>; SCALES]; SCALES];
        for j in 0..SCALES {
            resized[j][j] = Some(low[j]);
            for k in j + 1..SCALES {
                let v = resized[j][k - 1].unwrap();
                resized[j][k] = Some(self.pre_down[k - 1].forward(tape, p, v)?);
            }
            for k in (0..j).rev() {
                let v = resized[j][k + 1].unwrap();
                let v = self.pre_up[k].forward(tape, p, v)?;
                resized[j][k] = Some(tape.pixel_shuffle(v, 2)?);
            }
        }

        let mut high = Vec::with_capacity(SCALES);
        for k in 0..SCALES {
            let feats: Vec<Var> = (0..SCALES).map(|j| resized[j][k].unwrap()).collect();
            let fused = self.pre_fuse[k].forward(tape, p, &feats)?;
            let body = &self.bodies[k];
            let mut h = fused;
            for block in &body.blocks {
                h = block.forward(tape, p, h)?;
            }
            let h = body.conv.forward(tape, p, h)?;
            high.push(tape.add(fused, h)?);
        }

        let mut post: Option<Var> = None;
        for k in (0..SCALES).rev() {
            let e = self.edges.extract_edges(tape, p, xs[k])?;
            let e = self.edge_proj[k].forward(tape, p, e)?;
            let mut feats = vec![high[k], low[k], e];
            if let Some(prev) = post {
                let up = self.post_up[k].forward(tape, p, prev)?;
                feats.push(tape.pixel_shuffle(up, 2)?);
            }
            post = Some(self.post_fuse[k].forward(tape, p, &feats)?);
        }

        let mut f = post.unwrap();
        for u in &self.upsample {
            let v = u.forward(tape, p, f)?;
            f = tape.pixel_shuffle(v, 2)?;
        }
        let residual = self.tail.forward(tape, p, f)?;
        let base = match &self.sr_skip {
            None => x,
            Some(conv) => {
                let v = conv.forward(tape, p, x)?;
                tape.pixel_shuffle(v, self.config.sr_scale)?
            }
        };
        tape.add(base, residual)
    }

    /// Inference without gradients.
    pub fn enhance(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &p, xv)?;
        tape.take_leaf(out)
    }

    /// Enhances one image of any size: gray is expanded to RGB, the image is
    /// reflect-padded up to a multiple of [`SIZE_MULTIPLE`], and the output
    /// is cropped back to `sr_scale` times the original size.
    pub fn enhance_image(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        let rgb = img.to_rgb();
        let (h, w) = (rgb.height(), rgb.width());
        let round = |n: usize| n.div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE;
        let padded = rgb.pad_reflect(round(h), round(w))?;
        let out = self.enhance(&padded.to_tensor())?;
        let s = self.config.sr_scale;
        ImageBuffer::from_tensor(&out, 0)?.crop(0, 0, h * s, w * s)
    }

    pub fn to_checkpoint(&self, state: Option<&TrainState>) -> Checkpoint {
        Checkpoint {
            magic: MODEL_MAGIC,
            config: toml::to_string(&self.config).expect("network config serializes"),
            params: self.store.to_flat(),
            adam: state.map(|s| AdamState::capture(&s.adam)),
            step: state.map_or(0, |s| s.step),
        }
    }

    /// Rebuilds the model and, when the checkpoint carries optimizer state,
    /// the training state.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, Option<TrainState>)> {
        let config: NetworkConfig = toml::from_str(&ck.config).map_err(|e| Error::Checkpoint {
            field: "config",
            msg: e.to_string(),
        })?;
        let mut model = Model::build(config)?;
        model.store.load_flat(&ck.params)?;
        let state = match &ck.adam {
            Some(a) => Some(TrainState {
                adam: a.clone().restore(AdamConfig::default())?,
                step: ck.step,
            }),
            None => None,
        };
        Ok((model, state))
    }

    pub fn save(&self, path: &Path, state: Option<&TrainState>) -> Result<()> {
        self.to_checkpoint(state).save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Option<TrainState>)> {
        Self::from_checkpoint(&Checkpoint::load(path, MODEL_MAGIC)?)
    }
}
