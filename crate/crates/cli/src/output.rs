//! CSV curves, manifests and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use noma_core::BerCurve;

use crate::CliError;

/// Writes `contents` to a temporary file in the target directory and renames
/// it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

/// Rounds to 12 significant digits and prints the shortest decimal form.
pub fn fmt_decimal(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// 12 significant digits in scientific notation with trailing zeros removed,
/// e.g. `2.5e-4`; zero prints as `0`.
pub fn fmt_sci(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{x:.11e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let mantissa = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    format!("{mantissa}e{exp}")
}

pub fn curve_file_name(curve: &BerCurve) -> String {
    format!(
        "{}_{}_n{}.csv",
        curve.detector.name(),
        curve.user.name(),
        curve.n
    )
}

pub fn curve_csv(curve: &BerCurve) -> String {
    let mut points = curve.points.clone();
    points.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    let mut out = String::from("snr_db,bits,errors,ber\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_decimal(p.snr_db),
            p.bits,
            p.errors,
            fmt_sci(p.ber())
        ));
    }
    out
}

/// One CSV per curve in `dir`; returns the written paths in curve order.
pub fn emit_csv(curves: &[BerCurve], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if curves.is_empty() {
        return Err(CliError::Runtime("no curves to write".into()));
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(curves.len());
    for c in curves {
        let path = dir.join(curve_file_name(c));
        write_atomic(&path, curve_csv(c).as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}
