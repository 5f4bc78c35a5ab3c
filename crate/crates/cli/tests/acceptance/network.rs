use hfe_core::data::{add_awgn, ImagePair, PairedDataset};
use hfe_core::metrics::psnr;
use hfe_core::network::{train, Model, NetworkConfig, TrainConfig, TrainState};
use hfe_core::rng::rng_for;
use hfe_core::Tensor;
use rand::Rng as _;

use crate::fixtures::textured;
use crate::Verdict;

const OVERFIT_STEPS: u64 = 500;
const EVAL_EVERY: u64 = 100;
const MIN_GAIN_DB: f64 = 3.0;
const NOISE_SIGMA: f64 = 30.0;
const WINDOW: usize = 50;

fn overfit_pairs() -> Vec<ImagePair> {
    (0..8u64)
        .map(|k| {
            let target = textured(k, 48);
            ImagePair {
                name: format!("{k}.png"),
                degraded: add_awgn(&target, NOISE_SIGMA, k),
                target,
            }
        })
        .collect()
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        patch_size: 48,
        base_lr: 1e-4,
        max_steps: OVERFIT_STEPS,
        augment: false,
        log_every: 0,
        ..TrainConfig::default()
    }
}

fn mean_psnr(model: &Model, pairs: &[ImagePair]) -> f64 {
    pairs
        .iter()
        .map(|p| psnr(&model.enhance_image(&p.degraded).unwrap(), &p.target).unwrap())
        .sum::<f64>()
        / pairs.len() as f64
}

/// Trains from scratch, evaluating the training set every `EVAL_EVERY` steps.
fn overfit_run(pairs: &[ImagePair]) -> (Vec<f64>, Vec<(u64, f64)>) {
    let cfg = overfit_config();
    let dataset = PairedDataset::from_pairs(pairs.to_vec(), cfg.patch_size, 1, cfg.augment).unwrap();
    let mut model = Model::build(NetworkConfig::desk()).unwrap();
    let mut state = TrainState::default();
    let mut losses = Vec::new();
    let mut evals = Vec::new();
    while state.step < OVERFIT_STEPS {
        let chunk = TrainConfig {
            max_steps: state.step + EVAL_EVERY,
            ..cfg.clone()
        };
        losses.extend(train(&mut model, &mut state, &chunk, &dataset, None).unwrap().losses());
        evals.push((state.step, mean_psnr(&model, pairs)));
    }
    (losses, evals)
}

pub fn a7() -> Verdict {
    let pairs = overfit_pairs();
    let noisy = pairs.iter().map(|p| psnr(&p.degraded, &p.target).unwrap()).sum::<f64>() / pairs.len() as f64;
    let (losses, evals) = overfit_run(&pairs);
    let (best_step, best) = evals.iter().copied().fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let gain = best - noisy;

    let (again, _) = overfit_run(&pairs);
    let bitwise = losses.len() == again.len() && losses.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits());

    let windows: Vec<f64> = losses.chunks(WINDOW).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    let falling = windows.windows(2).filter(|w| w[1] < w[0]).count();
    let trace: Vec<String> = evals.iter().map(|(s, p)| format!("{s}:{:+.2}", p - noisy)).collect();
    Verdict::new(
        gain >= MIN_GAIN_DB && bitwise,
        format!(
            "desk config, 8 patches 48x48, sigma {NOISE_SIGMA}: noisy {noisy:.3} dB, best {best:.3} dB at step {best_step} \
             (gain {gain:+.3} dB, need >= {MIN_GAIN_DB}; per-eval gains {}), rerun loss trace bitwise equal: {bitwise}, \
             {falling}/{} consecutive {WINDOW}-step loss means decrease",
            trace.join(" "),
            windows.len().saturating_sub(1)
        ),
    )
}

pub fn a10() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    let mut rng = rng_for(10, 10);
    let random = |shape: (usize, usize, usize, usize), rng: &mut hfe_core::rng::Rng| {
        Tensor::from_fn(shape, |_| rng.random_range(0.0..1.0f32))
    };

    let model = Model::build(NetworkConfig::desk()).unwrap();
    let x = random((2, 3, 16, 12), &mut rng);
    let y = model.enhance(&x).unwrap();
    let identity = y.shape() == x.shape() && y.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    pass &= identity;
    notes.push(format!("fresh s=1 network is a bitwise identity: {identity}"));

    let mut shapes = Vec::new();
    for s in [1, 2, 4] {
        let m = Model::build(NetworkConfig {
            sr_scale: s,
            ..NetworkConfig::desk()
        })
        .unwrap();
        let x = random((2, 3, 8, 12), &mut rng);
        let out = m.enhance(&x).unwrap().shape();
        let ok = (out.n, out.c, out.h, out.w) == (2, 3, 8 * s, 12 * s);
        pass &= ok;
        shapes.push(format!("s={s} -> {out}{}", if ok { "" } else { " (wrong)" }));
    }
    notes.push(format!("(2,3,8,12) input: {}", shapes.join(", ")));

    let dir = tempfile::tempdir().unwrap();
    let mut m = Model::build(NetworkConfig {
        sr_scale: 2,
        ..NetworkConfig::desk()
    })
    .unwrap();
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        for v in m.params_mut().get_mut(id).data_mut() {
            *v = rng.random_range(-0.2..0.2);
        }
    }
    let state = TrainState {
        step: 42,
        ..TrainState::default()
    };
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    m.save(&a, Some(&state)).unwrap();
    let (back, st) = Model::load(&a).unwrap();
    back.save(&b, st.as_ref()).unwrap();
    let same_file = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    let x = random((1, 3, 8, 8), &mut rng);
    let same_output = m.enhance(&x).unwrap().data() == back.enhance(&x).unwrap().data();
    let ok = same_file && back.params() == m.params() && same_output && st.map(|s| s.step) == Some(42);
    pass &= ok;
    notes.push(format!("checkpoint save/load/save bytes identical: {same_file}, outputs identical: {same_output}"));

    Verdict::new(pass, notes.join("; "))
}
