//! The three-layer high-pass network φ, its regression training against the
//! FFT filter, and the feature loss built on its activations.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::fft::{high_pass_tensor, HighPassSpec};
use crate::checkpoint::{Checkpoint, PHI_MAGIC};
use crate::data::ImageBuffer;
use crate::error::{Error, Result};
use crate::params::{Bound, Conv2d, ConvSpec, ParamStore};
use crate::rng::rng_for;
use crate::tensor::{lr_schedule, Adam, AdamConfig, Element, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiConfig {
    pub cutoff: f64,
    pub width: usize,
    pub seed: u64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        PhiConfig {
            cutoff: HighPassSpec::default().cutoff,
            width: 16,
            seed: 0,
        }
    }
}

/// Post-ReLU activations of the first two layers and the linear output.
#[derive(Clone, Copy, Debug)]
pub struct PhiActivations {
    pub layer0: Var,
    pub layer1: Var,
    pub output: Var,
}

#[derive(Clone, Debug)]
pub struct PhiNetwork {
    config: PhiConfig,
    store: ParamStore,
    layers: [Conv2d; 3],
    frozen: bool,
}

impl PhiNetwork {
    pub fn new(config: PhiConfig) -> Result<Self> {
        HighPassSpec::new(config.cutoff)?;
        if config.width == 0 {
            return Err(Error::contract("phi", "width must be positive"));
        }
        let mut rng = rng_for(config.seed, 0);
        let mut store = ParamStore::new();
        let w = config.width;
        let layers = [
            Conv2d::new(&mut store, "phi.conv0", ConvSpec::new(3, w, 3), &mut rng),
            Conv2d::new(&mut store, "phi.conv1", ConvSpec::new(w, w, 3), &mut rng),
            Conv2d::new(&mut store, "phi.conv2", ConvSpec::new(w, 3, 3), &mut rng),
        ];
        Ok(PhiNetwork {
            config,
            store,
            layers,
            frozen: false,
        })
    }

    pub fn config(&self) -> &PhiConfig {
        &self.config
    }

    pub fn spec(&self) -> HighPassSpec {
        HighPassSpec {
            cutoff: self.config.cutoff,
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<PhiActivations> {
        let c = tape.value(x).shape().c;
        if c != 3 {
            return Err(Error::contract("phi", format!("expects 3 input channels, got {c}")));
        }
        let h = self.layers[0].forward(tape, p, x)?;
        let layer0 = tape.relu(h)?;
        let h = self.layers[1].forward(tape, p, layer0)?;
        let layer1 = tape.relu(h)?;
        let output = self.layers[2].forward(tape, p, layer1)?;
        Ok(PhiActivations {
            layer0,
            layer1,
            output,
        })
    }

    /// Predicted high-pass signal for an `(N, 3, H, W)` batch.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &p, xv)?.output;
        tape.take_leaf(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            magic: PHI_MAGIC,
            config: toml::to_string(&self.config).expect("phi config serializes"),
            params: self.store.to_flat(),
            adam: None,
            step: 0,
        }
    }

    /// Restores a frozen network from a checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: PhiConfig = toml::from_str(&ck.config).map_err(|e| Error::Checkpoint {
            field: "config",
            msg: e.to_string(),
        })?;
        let mut phi = PhiNetwork::new(config)?;
        phi.store.load_flat(&ck.params)?;
        phi.frozen = true;
        Ok(phi)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path, PHI_MAGIC)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhiTrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub crop: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PhiTrainConfig {
    fn default() -> Self {
        PhiTrainConfig {
            steps: 2000,
            batch: 4,
            crop: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhiReport {
    /// Full-image MSE against the FFT filter before the first step.
    pub initial_mse: f64,
    pub final_mse: f64,
    pub losses: Vec<f64>,
}

/// Three-channel tensor of an image; gray images are replicated.
fn rgb_tensor(img: &ImageBuffer) -> Tensor {
    let t = img.to_tensor();
    if img.channels() == 3 {
        return t;
    }
    let plane = t.data().to_vec();
    let data = plane.iter().chain(&plane).chain(&plane).copied().collect();
    Tensor::new((1, 3, img.height(), img.width()), data).expect("three planes")
}

fn crop(t: &Tensor, y: usize, x: usize, size: usize) -> Vec<f32> {
    let s = t.shape();
    let mut out = Vec::with_capacity(s.c * size * size);
    for c in 0..s.c {
        for row in y..y + size {
            let start = s.index(0, c, row, x);
            out.extend_from_slice(&t.data()[start..start + size]);
        }
    }
    out
}

/// Mean over images of the full-image MSE between φ and the FFT filter.
pub fn oracle_mse(phi: &PhiNetwork, images: &[ImageBuffer]) -> Result<f64> {
    let spec = phi.spec();
    let mut total = 0.0;
    for img in images {
        let x = rgb_tensor(img);
        let target = high_pass_tensor(&x, &spec);
        let pred = phi.predict(&x)?;
        let se: f64 = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum();
        total += se / pred.numel() as f64;
    }
    Ok(total / images.len().max(1) as f64)
}

/// Regresses φ onto the FFT high-pass of `images` under L2 with Adam.
///
/// Targets are filtered on full images, then random aligned crops are
/// drawn each step. Returns the network frozen.
pub fn train_phi(images: &[ImageBuffer], phi_config: PhiConfig, cfg: &PhiTrainConfig) -> Result<(PhiNetwork, PhiReport)> {
    if images.is_empty() {
        return Err(Error::contract("train_phi", "no training images"));
    }
    if cfg.batch == 0 || cfg.crop == 0 {
        return Err(Error::contract("train_phi", "batch and crop must be positive"));
    }
    let mut phi = PhiNetwork::new(phi_config)?;
    let spec = phi.spec();
    let inputs: Vec<Tensor> = images.iter().map(rgb_tensor).collect();
    let targets: Vec<Tensor> = inputs.iter().map(|x| high_pass_tensor(x, &spec)).collect();
    let size = images
        .iter()
        .map(|i| i.height().min(i.width()))
        .min()
        .unwrap()
        .min(cfg.crop);

    let initial_mse = oracle_mse(&phi, images)?;
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut losses = Vec::with_capacity(cfg.steps as usize);
    for step in 0..cfg.steps {
        let mut rng = rng_for(cfg.seed, step + 1);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut picked = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let i = rng.random_range(0..images.len());
            let s = inputs[i].shape();
            let y = rng.random_range(0..=s.h - size);
            let x = rng.random_range(0..=s.w - size);
            xs.extend(crop(&inputs[i], y, x, size));
            ys.extend(crop(&targets[i], y, x, size));
            picked.push(i);
        }
        let shape = (cfg.batch, 3, size, size);
        let lr = lr_schedule(cfg.lr, step);
        let diverged = |loss: f64| Error::Diverged {
            step,
            lr,
            loss,
            batch: picked.clone(),
        };

        let mut tape = Tape::new();
        let p = phi.store.bind(&mut tape);
        let xv = tape.constant(Tensor::new(shape, xs)?);
        let yv = tape.constant(Tensor::new(shape, ys)?);
        let out = phi.forward(&mut tape, &p, xv).map_err(|_| diverged(f64::NAN))?.output;
        let loss = tape.mse_loss(out, yv).map_err(|_| diverged(f64::NAN))?;
        let value = tape.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(diverged(value));
        }
        tape.backward(loss)?;
        phi.store.collect_grads(&tape, &p);
        adam.config.lr = lr;
        adam.step(&mut phi.store.trainable_mut())?;
        losses.push(value);
        if step % 100 == 0 {
            log::info!("phi step {step} lr {lr:.3e} mse {value:.6e}");
        }
    }
    let final_mse = oracle_mse(&phi, images)?;
    log::info!("phi oracle mse {initial_mse:.6e} -> {final_mse:.6e}");
    phi.freeze();
    Ok((
        phi,
        PhiReport {
            initial_mse,
            final_mse,
            losses,
        },
    ))
}

/// `L0 + L1`: mean absolute differences of φ's first and second post-ReLU
/// activations. `hr` is detached and φ is bound as constants, so gradients
/// reach `sr` only.
pub fn hf_loss<T: Element>(tape: &mut Tape<T>, phi: &PhiNetwork, sr: Var, hr: Var) -> Result<Var> {
    let (a, b) = (tape.value(sr).shape(), tape.value(hr).shape());
    if a != b {
        return Err(Error::ShapeMismatch {
            op: "hf_loss",
            lhs: a,
            rhs: b,
        });
    }
    let p = phi.store.bind_frozen(tape);
    let hr = tape.detach(hr)?;
    let fs = phi.forward(tape, &p, sr)?;
    let fh = phi.forward(tape, &p, hr)?;
    let l0 = tape.l1_loss(fs.layer0, fh.layer0, None)?;
    let l1 = tape.l1_loss(fs.layer1, fh.layer1, None)?;
    tape.add(l0, l1)
}
