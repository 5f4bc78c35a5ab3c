use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use hfe_core::data::{
    add_awgn, blur, load_image, save_image, write_manifest, DatasetIndex, KernelPool, PairedDataset,
};
use hfe_core::gms::{make_soft_gms_mask, GmsConfig};
use hfe_core::highpass::{train_phi, PhiConfig, PhiNetwork, PhiTrainConfig};
use hfe_core::metrics::MetricReport;
use hfe_core::network::{masked_finetune, train, Model, RunConfig, TrainState};
use hfe_core::rng::{derive_seed, rng_for};
use hfe_core::Error;

use crate::failure::{usage, CliResult};
use crate::files::{absolute, list_pngs, paired, prepare_output, read};

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Degrade every PNG in a folder and write a manifest pairing the results with the originals.
    Synth(SynthArgs),
    /// Train the high-pass network on the clean images of a manifest.
    TrainPhi(TrainPhiArgs),
    /// Train the enhancement network from a TOML config.
    Train(TrainArgs),
    /// Enhance every PNG in a folder with a trained model.
    Enhance(EnhanceArgs),
    /// Write GMS, hard and (optionally) soft mask PNGs for paired images.
    Gms(GmsArgs),
    /// Report PSNR and SSIM of paired images as CSV.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Awgn,
    Blur,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Noise standard deviation on the 0..255 scale, or the largest blur sigma in pixels.
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainPhiArgs {
    #[arg(long)]
    data: PathBuf,
    /// Cutoff as a fraction of the Nyquist radius.
    #[arg(long, default_value_t = 0.25)]
    cutoff: f64,
    #[arg(long, default_value_t = 2000)]
    steps: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 32)]
    crop: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// High-pass network checkpoint, required when the hf loss weight is positive.
    #[arg(long)]
    phi: Option<PathBuf>,
    /// Continue from a checkpoint written by a previous run with the same network config.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-step CSV log; defaults to the checkpoint path with a .csv extension.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
pub struct GmsArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the softened mask.
    #[arg(long)]
    soft: bool,
    /// Stability constant on the 0..255 scale.
    #[arg(long, default_value_t = hfe_core::gms::DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = 0.2)]
    threshold: f32,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Synth(a) => synth(a),
        Command::TrainPhi(a) => train_phi_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Enhance(a) => enhance(a),
        Command::Gms(a) => gms(a),
        Command::Eval(a) => eval(a),
    }
}

fn synth(a: SynthArgs) -> CliResult {
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(usage(format!("--sigma must be a non-negative number, got {}", a.sigma)));
    }
    let inputs = list_pngs(&a.input)?;
    if inputs.is_empty() {
        return Err(usage(format!("no PNG files in {}", a.input.display())));
    }
    prepare_output(&a.input, &a.output)?;
    let degraded_dir = a.output.join("degraded");
    prepare_output(&a.input, &degraded_dir)?;
    let mut pairs = Vec::with_capacity(inputs.len());
    for (i, path) in inputs.iter().enumerate() {
        let img = load_image(path)?;
        let seed = derive_seed(a.seed, i as u64);
        let out = match a.mode {
            Mode::Awgn => add_awgn(&img, a.sigma, seed),
            Mode::Blur if a.sigma == 0.0 => img,
            Mode::Blur => {
                let pool = KernelPool {
                    sigma_min: KernelPool::default().sigma_min.min(a.sigma),
                    sigma_max: a.sigma,
                    ..KernelPool::default()
                };
                blur(&img, &pool.sample(&mut rng_for(seed, 0)))
            }
        };
        let dest = degraded_dir.join(path.file_name().unwrap());
        save_image(&out, &dest)?;
        pairs.push((absolute(&dest)?, absolute(path)?));
    }
    let manifest = a.output.join("manifest.tsv");
    write_manifest(&manifest, &pairs)?;
    println!("wrote {} pairs to {}", pairs.len(), manifest.display());
    Ok(())
}

fn train_phi_cmd(a: TrainPhiArgs) -> CliResult {
    let pairs = hfe_core::data::read_manifest(&a.data)?;
    if pairs.is_empty() {
        return Err(usage(format!("{} lists no pairs", a.data.display())));
    }
    let images = pairs
        .iter()
        .map(|(_, target)| load_image(target))
        .collect::<Result<Vec<_>, Error>>()?;
    let phi_cfg = PhiConfig {
        cutoff: a.cutoff,
        seed: a.seed,
        ..PhiConfig::default()
    };
    let cfg = PhiTrainConfig {
        steps: a.steps,
        batch: a.batch,
        crop: a.crop,
        lr: a.lr,
        seed: a.seed,
    };
    let (phi, report) = train_phi(&images, phi_cfg, &cfg)?;
    phi.save(&a.out)?;
    println!(
        "initial oracle mse {:.6e}\nfinal oracle mse {:.6e}",
        report.initial_mse, report.final_mse
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let cfg = RunConfig::from_toml(&read(&a.config)?)?;
    let (mut model, mut state) = match &a.resume {
        Some(path) => {
            let (model, state) = Model::load(path)?;
            if model.config() != &cfg.network {
                return Err(Error::ConfigMismatch(format!(
                    "{} was trained with a different [network] section than {}",
                    path.display(),
                    a.config.display()
                ))
                .into());
            }
            (model, state.unwrap_or_default())
        }
        None => (Model::build(cfg.network.clone())?, TrainState::default()),
    };
    let phi = a.phi.as_deref().map(PhiNetwork::load).transpose()?;
    let t = &cfg.train;
    let index = DatasetIndex::from_manifest(&a.data, t.patch_size, t.seed)?;
    let dataset = PairedDataset::load(&index, cfg.network.sr_scale, t.augment)?;

    let mut log = train(&mut model, &mut state, t, &dataset, phi.as_ref())?;
    if t.masked.steps > 0 {
        log.extend(masked_finetune(&mut model, &mut state, t, &dataset)?);
    }
    model.save(&a.out, Some(&state))?;
    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("csv"));
    log.write_csv(&log_path)?;
    if let Some(last) = log.rows.last() {
        println!("step {} loss {:.6e} batch psnr {:.3}", last.step, last.loss, last.psnr);
    }
    println!("wrote {} and {}", a.out.display(), log_path.display());
    Ok(())
}

fn enhance(a: EnhanceArgs) -> CliResult {
    let (model, _) = Model::load(&a.model)?;
    let inputs = list_pngs(&a.input)?;
    prepare_output(&a.input, &a.output)?;
    for path in &inputs {
        let img = load_image(path)?;
        let out = model.enhance_image(&img)?;
        save_image(&out, a.output.join(path.file_name().unwrap()))?;
        log::info!("enhanced {}", path.display());
    }
    println!("enhanced {} images into {}", inputs.len(), a.output.display());
    Ok(())
}

fn stem(name: &str) -> &str {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name)
}

fn gms(a: GmsArgs) -> CliResult {
    let pairs = paired(&a.reference, &a.test)?;
    prepare_output(&a.reference, &a.out)?;
    prepare_output(&a.test, &a.out)?;
    let cfg = GmsConfig {
        c: a.c,
        threshold: a.threshold,
        ..GmsConfig::default()
    };
    for (name, r, t) in &pairs {
        let masks = make_soft_gms_mask(&load_image(r)?, &load_image(t)?, &cfg)?;
        let s = stem(name);
        save_image(&masks.gms.to_image(), a.out.join(format!("{s}_gms.png")))?;
        save_image(&masks.hard.to_image(), a.out.join(format!("{s}_hard.png")))?;
        if a.soft {
            save_image(&masks.soft.to_image(), a.out.join(format!("{s}_soft.png")))?;
        }
    }
    println!("wrote masks for {} pairs to {}", pairs.len(), a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let pairs = paired(&a.reference, &a.test)?;
    let mut report = MetricReport::default();
    for (name, r, t) in &pairs {
        report.push(name.clone(), &load_image(r)?, &load_image(t)?)?;
    }
    report.write_csv(&a.out)?;
    if let Some((p, s)) = report.mean() {
        println!("mean psnr {p:.4} dB, mean ssim {s:.6} over {} images", pairs.len());
    }
    Ok(())
}
