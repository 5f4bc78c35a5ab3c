use std::collections::HashSet;

use hfe_core::data::{add_awgn, Batch, ImageBuffer};
use hfe_core::gms::{dilate, erode, gms_map, open, BinaryMask, GmsConfig, StructuringElement, DEFAULT_C};
use hfe_core::network::{soft_mask_weights, train_step, LossWeights, Model, NetworkConfig, Objective, TrainState};
use hfe_core::rng::{rng_for, Rng};
use hfe_core::{Tape, Tensor};
use rand::Rng as _;

use crate::fixtures::{luma_at, noise_image, textured};
use crate::Verdict;

const GMS_TOL: f64 = 1e-6;
const IDENTICAL_TOL: f64 = 1e-7;
const FUZZ_PIXELS: usize = 100_000;

fn reflect101(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

/// Prewitt magnitude of the luma at one pixel, both kernels scaled by 1/3.
fn gradient_at(img: &ImageBuffer, y: usize, x: usize) -> f64 {
    let (h, w) = (img.height(), img.width());
    let l = |dy: isize, dx: isize| luma_at(img, reflect101(y as isize + dy, h), reflect101(x as isize + dx, w));
    let gx = (l(-1, 1) + l(0, 1) + l(1, 1) - l(-1, -1) - l(0, -1) - l(1, -1)) / 3.0;
    let gy = (l(1, -1) + l(1, 0) + l(1, 1) - l(-1, -1) - l(-1, 0) - l(-1, 1)) / 3.0;
    (gx * gx + gy * gy).sqrt()
}

fn gms_oracle(hr: &ImageBuffer, sr: &ImageBuffer, y: usize, x: usize) -> f64 {
    let c = DEFAULT_C / (255.0 * 255.0);
    let (a, b) = (gradient_at(hr, y, x), gradient_at(sr, y, x));
    1.0 - (2.0 * a * b + c) / (a * a + b * b + c)
}

/// Inputs ranging from flat to binary noise, to push the map to its extremes.
fn wild(kind: usize, h: usize, w: usize, rng: &mut Rng) -> ImageBuffer {
    match kind % 4 {
        0 => noise_image(h, w, 3, rng),
        1 => ImageBuffer::from_fn(h, w, 3, |_, _, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).unwrap(),
        2 => ImageBuffer::filled(h, w, 3, rng.random_range(0.0..1.0)).unwrap(),
        _ => ImageBuffer::from_fn(h, w, 1, |y, x, _| ((y + x) % 2) as f32).unwrap(),
    }
}

pub fn a5() -> Verdict {
    let mut rng = rng_for(5, 5);
    let mut oracle_err = 0.0f64;
    for (h, w, c) in [(1, 5, 3), (2, 2, 1), (7, 13, 3), (32, 32, 3), (19, 11, 1)] {
        let a = noise_image(h, w, c, &mut rng);
        let b = noise_image(h, w, c, &mut rng);
        let smooth = textured(h as u64, 24);
        let noisy = add_awgn(&smooth, 25.0, 9);
        for (hr, sr) in [(&a, &b), (&smooth, &noisy)] {
            let map = gms_map(hr, sr, DEFAULT_C).unwrap();
            for y in 0..hr.height() {
                for x in 0..hr.width() {
                    oracle_err = oracle_err.max((map.get(y, x) as f64 - gms_oracle(hr, sr, y, x)).abs());
                }
            }
        }
    }

    let mut identical = 0.0f64;
    for k in 0..6 {
        let img = wild(k, 23, 31, &mut rng);
        let map = gms_map(&img, &img, DEFAULT_C).unwrap();
        identical = map.values.iter().fold(identical, |m, v| m.max(v.abs() as f64));
    }

    let (mut pixels, mut lo, mut hi, mut k) = (0usize, f32::INFINITY, f32::NEG_INFINITY, 0usize);
    let mut finite = true;
    while pixels < FUZZ_PIXELS {
        let (h, w) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let a = wild(k, h, w, &mut rng);
        let b = wild(k / 4 + rng.random_range(0..4), h, w, &mut rng);
        let (a, b) = if a.channels() == b.channels() { (a, b) } else { (a.to_rgb(), b.to_rgb()) };
        let map = gms_map(&a, &b, DEFAULT_C).unwrap();
        for &v in &map.values {
            finite &= v.is_finite();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        pixels += map.values.len();
        k += 1;
    }
    let in_range = finite && lo >= 0.0 && hi <= 1.0;
    Verdict::new(
        oracle_err <= GMS_TOL && identical <= IDENTICAL_TOL && in_range,
        format!(
            "vs per-pixel oracle {oracle_err:.2e} (tol {GMS_TOL:.0e}), identical inputs max {identical:.2e} \
             (tol {IDENTICAL_TOL:.0e}), {pixels} fuzzed pixels in [{lo:.4}, {hi:.4}]"
        ),
    )
}

type Points = HashSet<(isize, isize)>;

fn points(m: &BinaryMask) -> Points {
    let mut s = HashSet::new();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(y, x) {
                s.insert((y as isize, x as isize));
            }
        }
    }
    s
}

fn to_mask(s: &Points, h: usize, w: usize) -> BinaryMask {
    let bits = (0..h * w).map(|i| s.contains(&((i / w) as isize, (i % w) as isize))).collect();
    BinaryMask::new(h, w, bits).unwrap()
}

/// `{p : p + b in A for every b in B}`, over the image domain.
fn erode_oracle(a: &Points, b: &[(isize, isize)], h: usize, w: usize) -> Points {
    let mut out = HashSet::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            if b.iter().all(|&(dy, dx)| a.contains(&(y + dy, x + dx))) {
                out.insert((y, x));
            }
        }
    }
    out
}

/// `{a + b : a in A, b in B}`, clipped to the image domain.
fn dilate_oracle(a: &Points, b: &[(isize, isize)], h: usize, w: usize) -> Points {
    a.iter()
        .flat_map(|&(y, x)| b.iter().map(move |&(dy, dx)| (y + dy, x + dx)))
        .filter(|&(y, x)| y >= 0 && x >= 0 && y < h as isize && x < w as isize)
        .collect()
}

pub fn a6() -> Verdict {
    let mut rng = rng_for(6, 6);
    let (h, w) = (32, 32);
    let mut mismatches = Vec::new();
    let (mut idempotent, mut anti_extensive) = (true, true);
    for trial in 0..100 {
        let density = rng.random_range(0.2..0.95);
        let a = BinaryMask::new(h, w, (0..h * w).map(|_| rng.random_bool(density)).collect()).unwrap();
        let size = [1, 3, 3, 5][trial % 4];
        let mut footprint: Vec<bool> = (0..size * size).map(|_| rng.random_bool(0.6)).collect();
        footprint[size * size / 2] = true;
        let r = (size / 2) as isize;
        let offsets: Vec<(isize, isize)> = (0..size * size)
            .filter(|&i| footprint[i])
            .map(|i| ((i / size) as isize - r, (i % size) as isize - r))
            .collect();
        let b = StructuringElement::new(size, footprint).unwrap();

        let set = points(&a);
        let eroded = erode_oracle(&set, &offsets, h, w);
        let expect_erode = to_mask(&eroded, h, w);
        let expect_dilate = to_mask(&dilate_oracle(&set, &offsets, h, w), h, w);
        let expect_open = to_mask(&dilate_oracle(&eroded, &offsets, h, w), h, w);
        for (op, got, want) in [
            ("erode", erode(&a, &b), expect_erode),
            ("dilate", dilate(&a, &b), expect_dilate),
            ("open", open(&a, &b), expect_open),
        ] {
            if got != want {
                mismatches.push(format!("{op} on mask {trial}"));
            }
        }
        let opened = open(&a, &b);
        idempotent &= open(&opened, &b) == opened;
        anti_extensive &= opened.is_subset_of(&a);
    }
    let detail = format!(
        "100 random 32x32 masks with random elements: {} oracle mismatches{}, idempotent {idempotent}, anti-extensive {anti_extensive}",
        mismatches.len(),
        mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
    );
    Verdict::new(mismatches.is_empty() && idempotent && anti_extensive, detail)
}

const DELTA_TOL: f64 = 1e-7;
const MIN_MASS_SHARE: f64 = 0.8;

fn params_flat(m: &Model) -> Vec<f32> {
    m.params().to_flat()
}

pub fn a8() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;

    // all-ones mask against plain L1
    let mut rng = rng_for(8, 8);
    let mut model = Model::build(NetworkConfig::desk()).unwrap();
    let tail = model.tail().weight;
    for v in model.params_mut().get_mut(tail).data_mut() {
        *v = rng.random_range(-0.1..0.1);
    }
    let target: Vec<Tensor> = (0..2).map(|k| textured(k, 16).to_tensor()).collect();
    let degraded: Vec<Tensor> = (0..2).map(|k| add_awgn(&textured(k, 16), 30.0, k).to_tensor()).collect();
    let batch = Batch {
        degraded: Tensor::stack(&degraded).unwrap(),
        target: Tensor::stack(&target).unwrap(),
        items: vec![0, 1],
    };
    let before = params_flat(&model);
    let (mut plain, mut masked) = (model.clone(), model);
    let (mut s1, mut s2) = (TrainState::default(), TrainState::default());
    let ones = vec![1.0f32; batch.target.numel()];
    let l1 = Objective::Recipe {
        weights: LossWeights { l1: 1.0, hf: 0.0 },
        phi: None,
    };
    let a = train_step(&mut plain, &mut s1, 1e-3, &batch, l1).unwrap();
    let b = train_step(&mut masked, &mut s2, 1e-3, &batch, Objective::Weighted(&ones)).unwrap();
    let (pa, pb) = (params_flat(&plain), params_flat(&masked));
    let delta_gap = before
        .iter()
        .zip(pa.iter().zip(&pb))
        .map(|(&o, (&x, &y))| ((x - o) as f64 - (y - o) as f64).abs())
        .fold(0.0, f64::max);
    let moved = before.iter().zip(&pa).filter(|(o, x)| o != x).count();
    pass &= delta_gap <= DELTA_TOL && moved > 0;
    notes.push(format!(
        "ones-mask vs L1 step: losses {:.6e}/{:.6e}, max parameter delta gap {delta_gap:.2e} (tol {DELTA_TOL:.0e}) over {moved} moved parameters",
        a.loss, b.loss
    ));

    // zero mask
    let zeros = vec![0.0f32; batch.target.numel()];
    let mut state = TrainState::default();
    let z = train_step(&mut plain, &mut state, 1e-3, &batch, Objective::Weighted(&zeros)).unwrap();
    pass &= z.loss == 0.0;
    notes.push(format!("zero-mask loss {:e}", z.loss));

    // half-corrupted fixture: mild noise everywhere, heavy noise on the right half
    let (h, w) = (32, 32);
    let clean = textured(3, h);
    let mut noise = rng_for(8, 9);
    let mut normal = |sigma: f32| -> f32 {
        // Box-Muller
        let (u1, u2): (f32, f32) = (noise.random_range(f32::EPSILON..1.0), noise.random_range(0.0..1.0));
        sigma * (-2.0 * u1.ln()).sqrt() * (std::f32::consts::TAU * u2).cos()
    };
    let output = ImageBuffer::from_unclipped(
        h,
        w,
        3,
        clean
            .pixels()
            .chunks(3)
            .enumerate()
            .flat_map(|(i, px)| {
                let sigma = if i % w >= w / 2 { 60.0 / 255.0 } else { 2.0 / 255.0 };
                px.iter().map(|&v| v + normal(sigma)).collect::<Vec<_>>()
            })
            .collect(),
    )
    .unwrap();
    let (out_t, tgt_t) = (output.to_tensor(), clean.to_tensor());
    let weights = soft_mask_weights(&out_t, &tgt_t, &GmsConfig::default()).unwrap();
    let mut tape = Tape::new();
    let o = tape.leaf(out_t.with_grad(true));
    let t = tape.constant(tgt_t);
    let loss = tape.l1_loss(o, t, Some(&weights)).unwrap();
    tape.backward(loss).unwrap();
    let grad = tape.grad(o).unwrap();
    let (mut right, mut total) = (0.0f64, 0.0f64);
    for (i, g) in grad.iter().enumerate() {
        total += g.abs() as f64;
        if i % w >= w / 2 {
            right += g.abs() as f64;
        }
    }
    let share = right / total;
    pass &= share >= MIN_MASS_SHARE;
    notes.push(format!("corrupted half holds {:.1}% of L1 gradient mass (need >= {:.0}%)", 100.0 * share, 100.0 * MIN_MASS_SHARE));

    Verdict::new(pass, notes.join("; "))
}
