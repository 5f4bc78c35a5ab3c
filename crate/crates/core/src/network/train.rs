use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::{LossWeights, TrainConfig};
use super::model::Model;
use crate::data::{Batch, ImageBuffer, PairedDataset};
use crate::error::{Error, Result};
use crate::gms::{make_soft_gms_mask, GmsConfig};
use crate::highpass::{hf_loss, PhiNetwork};
use crate::metrics::psnr_from_mse;
use crate::tensor::{lr_schedule, Adam, AdamConfig, Tape, Tensor};

/// Optimizer state and global step; the step drives the schedule and the
/// batch streams, so resuming continues both.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: Adam,
    pub step: u64,
}

impl Default for TrainState {
    fn default() -> Self {
        TrainState {
            adam: Adam::new(AdamConfig::default()),
            step: 0,
        }
    }
}

/// What one optimization step minimizes.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// `l1 * L1 + hf * L_hf`; `phi` is required when `hf > 0`.
    Recipe {
        weights: LossWeights,
        phi: Option<&'a PhiNetwork>,
    },
    /// L1 weighted by the soft GMS mask of each output against its target.
    /// The mask is computed from values and carries no gradient.
    SoftGms(&'a GmsConfig),
    /// L1 weighted by a fixed map with one entry per output element.
    Weighted(&'a [f32]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    /// PSNR of the clipped batch output against the batch target.
    pub psnr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<StepStats>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,loss,psnr\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:e},{:e},{:.6}", r.step, r.lr, r.loss, r.psnr);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.rows.extend(other.rows);
    }
}

/// Soft GMS weights for every element of an `(N, C, H, W)` output, with each
/// item's mask broadcast over its channels.
pub fn soft_mask_weights(output: &Tensor, target: &Tensor, cfg: &GmsConfig) -> Result<Vec<f32>> {
    if output.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "soft_mask_weights",
            lhs: output.shape(),
            rhs: target.shape(),
        });
    }
    let s = output.shape();
    let mut weights = Vec::with_capacity(output.numel());
    for n in 0..s.n {
        let out = ImageBuffer::from_tensor(output, n)?;
        let tgt = ImageBuffer::from_tensor(target, n)?;
        let soft = make_soft_gms_mask(&tgt, &out, cfg)?.soft;
        for _ in 0..s.c {
            weights.extend_from_slice(&soft.values);
        }
    }
    Ok(weights)
}

fn batch_psnr(output: &Tensor, target: &Tensor) -> f64 {
    let se: f64 = output
        .data()
        .iter()
        .zip(target.data())
        .map(|(&o, &t)| (o.clamp(0.0, 1.0) as f64 - t as f64).powi(2))
        .sum();
    psnr_from_mse(se / output.numel().max(1) as f64)
}

/// One Adam step on `batch` at the state's global step.
pub fn train_step(
    model: &mut Model,
    state: &mut TrainState,
    base_lr: f64,
    batch: &Batch,
    objective: Objective,
) -> Result<StepStats> {
    let step = state.step;
    let lr = lr_schedule(base_lr, step);
    let diverged = |loss: f64| Error::Diverged {
        step,
        lr,
        loss,
        batch: batch.items.clone(),
    };
    let numeric = |e: Error| match e {
        Error::NonFinite { .. } => diverged(f64::NAN),
        other => other,
    };

    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape);
    let x = tape.constant(batch.degraded.clone());
    let y = tape.constant(batch.target.clone());
    let out = model.forward(&mut tape, &p, x).map_err(numeric)?;
    let loss = match objective {
        Objective::Recipe { weights, phi } => {
            let mut terms = Vec::new();
            if weights.l1 > 0.0 {
                let l = tape.l1_loss(out, y, None).map_err(numeric)?;
                terms.push(tape.scale(l, weights.l1 as f32)?);
            }
            if weights.hf > 0.0 {
                let phi = phi.ok_or_else(|| Error::Config("hf loss weight is positive but no phi network was given".into()))?;
                let l = hf_loss(&mut tape, phi, out, y).map_err(numeric)?;
                terms.push(tape.scale(l, weights.hf as f32)?);
            }
            let mut total = *terms
                .first()
                .ok_or_else(|| Error::Config("no loss term has a positive weight".into()))?;
            for &t in &terms[1..] {
                total = tape.add(total, t)?;
            }
            total
        }
        Objective::SoftGms(cfg) => {
            let w = soft_mask_weights(tape.value(out), &batch.target, cfg)?;
            tape.l1_loss(out, y, Some(&w)).map_err(numeric)?
        }
        Objective::Weighted(w) => tape.l1_loss(out, y, Some(w)).map_err(numeric)?,
    };
    let value = tape.value(loss).item() as f64;
    if !value.is_finite() {
        return Err(diverged(value));
    }
    let psnr = batch_psnr(tape.value(out), &batch.target);
    tape.backward(loss).map_err(numeric)?;
    model.params_mut().collect_grads(&tape, &p);
    state.adam.config.lr = lr;
    state.adam.step(&mut model.params_mut().trainable_mut())?;
    state.step += 1;
    Ok(StepStats {
        step,
        lr,
        loss: value,
        psnr,
    })
}

fn check_dataset(model: &Model, cfg: &TrainConfig, dataset: &PairedDataset) -> Result<()> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("train", "dataset has no usable pairs"));
    }
    if dataset.scale() != model.config().sr_scale {
        return Err(Error::ConfigMismatch(format!(
            "dataset scale {} differs from the model's sr_scale {}",
            dataset.scale(),
            model.config().sr_scale
        )));
    }
    if dataset.patch_size() != cfg.patch_size {
        return Err(Error::ConfigMismatch(format!(
            "dataset patches are {}px, config asks for {}px",
            dataset.patch_size(),
            cfg.patch_size
        )));
    }
    Ok(())
}

fn run(
    model: &mut Model,
    state: &mut TrainState,
    cfg: &TrainConfig,
    dataset: &PairedDataset,
    until: u64,
    objective: Objective,
    phase: &str,
) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    while state.step < until {
        let batch = dataset.batch(cfg.seed, state.step, cfg.batch_size)?;
        let stats = train_step(model, state, cfg.base_lr, &batch, objective)?;
        if cfg.log_every > 0 && stats.step % cfg.log_every == 0 {
            log::info!(
                "{phase} step {} lr {:.3e} loss {:.6e} psnr {:.3}",
                stats.step,
                stats.lr,
                stats.loss,
                stats.psnr
            );
        }
        log.rows.push(stats);
    }
    Ok(log)
}

/// Trains until the global step reaches `cfg.max_steps`.
pub fn train(
    model: &mut Model,
    state: &mut TrainState,
    cfg: &TrainConfig,
    dataset: &PairedDataset,
    phi: Option<&PhiNetwork>,
) -> Result<TrainLog> {
    check_dataset(model, cfg, dataset)?;
    if cfg.loss.hf > 0.0 && phi.is_none() {
        return Err(Error::Config("hf loss weight is positive but no phi network was given".into()));
    }
    let objective = Objective::Recipe {
        weights: cfg.loss,
        phi,
    };
    run(model, state, cfg, dataset, cfg.max_steps, objective, "train")
}

/// Runs `cfg.masked.steps` further steps of soft-GMS-weighted L1.
pub fn masked_finetune(
    model: &mut Model,
    state: &mut TrainState,
    cfg: &TrainConfig,
    dataset: &PairedDataset,
) -> Result<TrainLog> {
    check_dataset(model, cfg, dataset)?;
    let until = state.step + cfg.masked.steps;
    run(model, state, cfg, dataset, until, Objective::SoftGms(&cfg.masked.gms), "masked")
}
