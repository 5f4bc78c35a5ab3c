use std::fs;
use std::path::{Path, PathBuf};

use hfe_core::Error;

use crate::failure::{usage, CliResult};

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// PNG files directly inside `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let path = entry.map_err(|e| io(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// `(name, ref, test)` for every PNG name present in both directories.
pub fn paired(reference: &Path, test: &Path) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    let mut pairs = Vec::new();
    for r in list_pngs(reference)? {
        let name = r.file_name().unwrap().to_string_lossy().into_owned();
        let t = test.join(&name);
        if t.is_file() {
            pairs.push((name, r, t));
        } else {
            log::warn!("{name}: no counterpart in {}", test.display());
        }
    }
    if pairs.is_empty() {
        return Err(usage(format!(
            "no PNG names shared by {} and {}",
            reference.display(),
            test.display()
        )));
    }
    Ok(pairs)
}

/// Creates `out` and refuses to write into `input`.
pub fn prepare_output(input: &Path, out: &Path) -> CliResult {
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let same = match (input.canonicalize(), out.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Err(usage(format!(
            "output directory {} is the input directory; inputs are never overwritten",
            out.display()
        )));
    }
    Ok(())
}

pub fn absolute(path: &Path) -> CliResult<PathBuf> {
    path.canonicalize().map_err(|e| io(path, e).into())
}

pub fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io(path, e).into())
}
