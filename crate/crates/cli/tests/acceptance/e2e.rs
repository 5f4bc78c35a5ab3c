use std::fs;
use std::path::Path;
use std::process::Command;

use hfe_core::data::save_image;

use crate::fixtures::textured;
use crate::Verdict;

const IMAGES: u64 = 8;

const CONFIG: &str = r#"
[network]
blocks_per_scale = [1, 2, 4]
channels = 8

[train]
batch_size = 8
patch_size = 48
base_lr = 1e-4
max_steps = 300
log_every = 100

[train.loss]
l1 = 1.0
hf = 0.05

[train.masked]
steps = 20
"#;

fn hfe(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hfe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "`hfe {}` exited with {:?}: {}",
            args.first().unwrap_or(&""),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Mean PSNR from the last row of an eval CSV.
fn mean_psnr(csv: &Path) -> Result<f64, String> {
    let text = fs::read_to_string(csv).map_err(|e| e.to_string())?;
    let last = text.lines().last().ok_or("empty report")?;
    let mut fields = last.split(',');
    if fields.next() != Some("mean") {
        return Err(format!("no mean row in {}", csv.display()));
    }
    fields.next().ok_or("short mean row")?.parse().map_err(|e| format!("{e}"))
}

fn pipeline(root: &Path) -> Result<(f64, f64), String> {
    let clean = root.join("clean");
    fs::create_dir_all(&clean).map_err(|e| e.to_string())?;
    for k in 0..IMAGES {
        save_image(&textured(100 + k, 48), clean.join(format!("img{k}.png"))).map_err(|e| e.to_string())?;
    }
    let data = root.join("data");
    hfe(&["synth", "--input", s(&clean), "--output", s(&data), "--mode", "awgn", "--sigma", "30", "--seed", "1"])?;
    let manifest = data.join("manifest.tsv");
    let phi = root.join("phi.ckpt");
    hfe(&["train-phi", "--data", s(&manifest), "--steps", "300", "--out", s(&phi)])?;
    let config = root.join("run.toml");
    fs::write(&config, CONFIG).map_err(|e| e.to_string())?;
    let model = root.join("model.ckpt");
    hfe(&["train", "--config", s(&config), "--data", s(&manifest), "--phi", s(&phi), "--out", s(&model)])?;
    let enhanced = root.join("enhanced");
    hfe(&["enhance", "--model", s(&model), "--input", s(&data.join("degraded")), "--output", s(&enhanced)])?;
    let (before, after) = (root.join("degraded.csv"), root.join("enhanced.csv"));
    hfe(&["eval", "--ref", s(&clean), "--test", s(&data.join("degraded")), "--out", s(&before)])?;
    hfe(&["eval", "--ref", s(&clean), "--test", s(&enhanced), "--out", s(&after)])?;
    Ok((mean_psnr(&before)?, mean_psnr(&after)?))
}

pub fn a11() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    match pipeline(dir.path()) {
        Ok((degraded, enhanced)) => Verdict::new(
            enhanced >= degraded,
            format!(
                "synth, train-phi, train (+hf loss, +masked), enhance, eval on {IMAGES} images exited 0; \
                 mean PSNR degraded {degraded:.3} dB, enhanced {enhanced:.3} dB"
            ),
        ),
        Err(e) => Verdict::new(false, e),
    }
}
