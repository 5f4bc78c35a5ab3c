//! Acceptance checks A1-A11, one PASS/FAIL line each.
//!
//! `cargo test -p hfe-cli --test acceptance` runs all of them; trailing
//! arguments select a subset, e.g. `-- A2 A9`. Exits nonzero if any fail.

mod e2e;
mod fixtures;
mod masks;
mod metrics;
mod network;
mod spectral;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: &'static str,
    title: &'static str,
    /// Wall-clock limit in seconds, where one applies.
    limit: Option<f64>,
    run: fn() -> Verdict,
}

const CRITERIA: [Criterion; 11] = [
    Criterion { id: "A1", title: "autodiff finite differences", limit: Some(60.0), run: gradcheck::a1 },
    Criterion { id: "A2", title: "FFT against direct DFT", limit: Some(30.0), run: spectral::a2 },
    Criterion { id: "A3", title: "high-pass filter", limit: None, run: spectral::a3 },
    Criterion { id: "A4", title: "phi regression onto FFT high-pass", limit: Some(300.0), run: spectral::a4 },
    Criterion { id: "A5", title: "GMS map", limit: None, run: masks::a5 },
    Criterion { id: "A6", title: "binary morphology", limit: None, run: masks::a6 },
    Criterion { id: "A7", title: "tiny overfit", limit: Some(600.0), run: network::a7 },
    Criterion { id: "A8", title: "masked training", limit: None, run: masks::a8 },
    Criterion { id: "A9", title: "PSNR and SSIM", limit: None, run: metrics::a9 },
    Criterion { id: "A10", title: "network contracts", limit: None, run: network::a10 },
    Criterion { id: "A11", title: "CLI end to end", limit: Some(600.0), run: e2e::a11 },
];

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.iter().any(|w| w == c.id)) {
        let start = Instant::now();
        let mut v = panic::catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|e| Verdict::new(false, format!("panicked: {}", panic_message(e))));
        let secs = start.elapsed().as_secs_f64();
        if let Some(limit) = c.limit {
            if secs >= limit {
                v.pass = false;
            }
            v.detail.push_str(&format!("; runtime {secs:.1} s (limit {limit:.0} s)"));
        } else {
            v.detail.push_str(&format!("; runtime {secs:.1} s"));
        }
        println!("{} {} {}: {}", c.id, if v.pass { "PASS" } else { "FAIL" }, c.title, v.detail);
        ran += 1;
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
