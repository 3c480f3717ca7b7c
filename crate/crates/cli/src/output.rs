//! CSV and JSON writers. Row order and float formatting are deterministic,
//! so identical (config, seed) runs produce identical bytes.

use std::fs;
use std::path::Path;

use serde::Serialize;

use greenmachine::infotheory::PiePoint;
use greenmachine::linkbudget::AdvantagePoint;

use crate::CliError;

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

/// `receiver,nbar,drift_hz,pie_bpp,ci_bpp`
pub fn pie_csv(points: &[PiePoint]) -> String {
    let mut out = String::from("receiver,nbar,drift_hz,pie_bpp,ci_bpp\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.receiver, p.nbar, p.drift_rate_hz, p.pie, p.ci_halfwidth
        ));
    }
    out
}

/// `range_m,p_r_w,nbar,in_region`
pub fn link_budget_csv(points: &[AdvantagePoint]) -> String {
    let mut out = String::from("range_m,p_r_w,nbar,in_region\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.range_m, p.p_r_w, p.nbar, p.in_region
        ));
    }
    out
}

/// `codeword,bin_index,count` (1-based codeword, 0-based bin)
pub fn histogram_csv(histogram: &[Vec<u64>]) -> String {
    let mut out = String::from("codeword,bin_index,count\n");
    for (row, bins) in histogram.iter().enumerate() {
        for (bin, count) in bins.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", row + 1, bin, count));
        }
    }
    out
}
