//! Mutual information, photon information efficiency, analytic receiver
//! bounds, the superadditivity verdict, and the empirical low-pass fit of
//! PIE against channel drift rate.
//!
//! PIE (photon information efficiency) is bits of mutual information per
//! received photon: for an N-ary codeword channel carrying n̄ photons per
//! symbol, PIE = I(X;Y)/(N·n̄).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub mod fit;

pub use fit::{lowpass_fit, LowPassFit};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// One measured or simulated PIE value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiePoint {
    /// Mean photon number per symbol at the receiver.
    pub nbar: f64,
    /// Bits per photon.
    pub pie: f64,
    /// Half-width of the ±2σ confidence interval, bits per photon.
    pub ci_halfwidth: f64,
    /// Receiver identifier (CLI vocabulary: gm, homodyne-soft, ...).
    pub receiver: String,
    /// Channel drift rate in cycles per second.
    pub drift_rate_hz: f64,
}

/// Two-state minimum-error-probability conventions for BPSK discrimination.
///
/// `Paper` uses P_e = ½(1−√(1−e^{−n̄})); `Standard` uses the overlap of |±α⟩
/// with n̄ = |α|², P_e = ½(1−√(1−e^{−4n̄})). The two differ by a factor of 4
/// in the exponent; both are kept selectable and the physical Dolinar
/// simulation is validated against `Standard`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HelstromConvention {
    Paper,
    Standard,
}

impl Default for HelstromConvention {
    fn default() -> Self {
        HelstromConvention::Paper
    }
}

fn validate_distribution(priors: &[f64]) -> Result<()> {
    if priors.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid_argument(
            "priors must be non-negative and finite".to_string(),
        ));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid_argument(format!(
            "priors must sum to 1 (got {sum})"
        )));
    }
    Ok(())
}

fn validate_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = rows.first() else {
        return Err(Error::invalid_argument("empty transition matrix".to_string()));
    };
    let cols = first.len();
    for (j, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::invalid_argument(format!(
                "row {j} has {} columns, expected {cols}",
                row.len()
            )));
        }
        if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::invalid_argument(format!(
                "row {j} has negative or non-finite entries"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_argument(format!(
                "row {j} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(cols)
}

/// Shannon mutual information I(X;Y) in bits for a row-stochastic transition
/// matrix (rows = inputs, columns = outputs) and input priors. 0·log 0 = 0.
pub fn mutual_information(rows: &[Vec<f64>], priors: &[f64]) -> Result<f64> {
    let cols = validate_rows(rows)?;
    if priors.len() != rows.len() {
        return Err(Error::invalid_argument(format!(
            "{} priors for {} rows",
            priors.len(),
            rows.len()
        )));
    }
    validate_distribution(priors)?;

    let mut marginal = vec![0.0; cols];
    for (row, pj) in rows.iter().zip(priors) {
        for (q, p) in marginal.iter_mut().zip(row) {
            *q += pj * p;
        }
    }
    let mut info = 0.0;
    for (row, pj) in rows.iter().zip(priors) {
        if *pj == 0.0 {
            continue;
        }
        for (p, q) in row.iter().zip(&marginal) {
            if *p > 0.0 {
                info += pj * p * (p / q).log2();
            }
        }
    }
    Ok(info.max(0.0))
}

/// Mutual information of raw outcome counts (uniform priors) together with
/// the delta-method standard error. Rows are per-input tallies over outputs;
/// each row is an independent multinomial sample.
pub fn mutual_information_from_counts(counts: &[Vec<u64>]) -> Result<(f64, f64)> {
    let n = counts.len();
    if n == 0 {
        return Err(Error::InsufficientData("no count rows".to_string()));
    }
    let mut rows = Vec::with_capacity(n);
    let mut row_totals = Vec::with_capacity(n);
    for (j, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientData(format!(
                "count row {j} is empty"
            )));
        }
        row_totals.push(total as f64);
        rows.push(row.iter().map(|&c| c as f64 / total as f64).collect::<Vec<_>>());
    }
    let priors = vec![1.0 / n as f64; n];
    let info = mutual_information(&rows, &priors)?;

    let cols = rows[0].len();
    let mut marginal = vec![0.0; cols];
    for row in &rows {
        for (q, p) in marginal.iter_mut().zip(row) {
            *q += p / n as f64;
        }
    }
    let mut variance = 0.0;
    for (row, total) in rows.iter().zip(&row_totals) {
        let mut mean_g = 0.0;
        let mut mean_g2 = 0.0;
        for (p, q) in row.iter().zip(&marginal) {
            if *p > 0.0 {
                let g = (p / q).log2();
                mean_g += p * g;
                mean_g2 += p * g * g;
            }
        }
        let row_var = (mean_g2 - mean_g * mean_g).max(0.0);
        variance += row_var / total / (n as f64 * n as f64);
    }
    Ok((info, variance.sqrt()))
}

/// [`mutual_information_from_counts`] with the Miller–Madow bias correction
/// (K_joint − K_x − K_y + 1)/(2·M·ln 2) subtracted, where the K are counts
/// of occupied cells. The plugin estimator's upward bias matters for
/// fine-binned soft-information histograms; the corrected value is clamped
/// at zero.
pub fn mutual_information_from_counts_corrected(counts: &[Vec<u64>]) -> Result<(f64, f64)> {
    let (mi, sigma) = mutual_information_from_counts(counts)?;
    let total: u64 = counts.iter().flatten().sum();
    let k_joint = counts.iter().flatten().filter(|&&c| c > 0).count() as f64;
    let k_x = counts
        .iter()
        .filter(|row| row.iter().any(|&c| c > 0))
        .count() as f64;
    let cols = counts[0].len();
    let k_y = (0..cols)
        .filter(|&i| counts.iter().any(|row| row[i] > 0))
        .count() as f64;
    let bias = (k_joint - k_x - k_y + 1.0).max(0.0) / (2.0 * total as f64) * LOG2_E;
    Ok(((mi - bias).max(0.0), sigma))
}

/// PIE from a probability transition matrix at uniform priors:
/// I(X;Y)/(N·n̄) with N the number of input rows.
pub fn pie_from_transition(rows: &[Vec<f64>], nbar: f64) -> Result<f64> {
    if !(nbar > 0.0) {
        return Err(Error::invalid_argument(format!(
            "mean photon number must be positive, got {nbar}"
        )));
    }
    let n = rows.len();
    let priors = vec![1.0 / n as f64; n];
    Ok(mutual_information(rows, &priors)? / (n as f64 * nbar))
}

/// Closed-form PIE of the ideal N-ary Hadamard/PPM channel with direct
/// photon detection: (1−e^{−Nn̄})·log₂N/(Nn̄).
pub fn gm_ppm_pie(nbar: f64, n: usize) -> Result<f64> {
    if !(nbar > 0.0) {
        return Err(Error::invalid_argument(format!(
            "mean photon number must be positive, got {nbar}"
        )));
    }
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::invalid_argument(format!(
            "order must be a power of two >= 2, got {n}"
        )));
    }
    let x = n as f64 * nbar;
    // (1−e^{−x})/x via expm1 for small-x accuracy.
    Ok((-(-x).exp_m1()) / x * (n as f64).log2())
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// Minimum BPSK discrimination error probability under the chosen convention.
pub fn helstrom_pe(nbar: f64, convention: HelstromConvention) -> f64 {
    let exponent = match convention {
        HelstromConvention::Paper => nbar,
        HelstromConvention::Standard => 4.0 * nbar,
    };
    0.5 * (1.0 - (-(-exponent).exp_m1()).sqrt())
}

/// PIE of ideal soft-decoded homodyne detection: (1/2n̄)·log₂(1+4n̄).
pub fn homodyne_pie(nbar: f64) -> f64 {
    (4.0 * nbar).ln_1p() * LOG2_E / (2.0 * nbar)
}

/// PIE of ideal heterodyne detection: (1/2n̄)·log₂(1+2n̄).
pub fn heterodyne_pie(nbar: f64) -> f64 {
    (2.0 * nbar).ln_1p() * LOG2_E / (2.0 * nbar)
}

/// PIE of the Helstrom-limited binary receiver, [1−H_b(P_e)]/n̄.
pub fn dolinar_pie(nbar: f64, convention: HelstromConvention) -> f64 {
    (1.0 - binary_entropy(helstrom_pe(nbar, convention))) / nbar
}

/// Bundle of analytic PIEs and bounds at one n̄.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticPies {
    /// −log₂(n̄) + 1, the BPSK Holevo PIE up to two leading terms.
    pub holevo_bpsk: f64,
    /// log₂(1/n̄) + log₂e, the unrestricted-encoding Holevo PIE.
    pub holevo_unrestricted: f64,
    pub homodyne: f64,
    pub heterodyne: f64,
    pub dolinar: f64,
    pub helstrom_pe: f64,
}

pub fn analytic_pies(nbar: f64, convention: HelstromConvention) -> Result<AnalyticPies> {
    if !(nbar > 0.0) {
        return Err(Error::invalid_argument(format!(
            "mean photon number must be positive, got {nbar}"
        )));
    }
    Ok(AnalyticPies {
        holevo_bpsk: -nbar.log2() + 1.0,
        holevo_unrestricted: (1.0 / nbar).log2() + LOG2_E,
        homodyne: homodyne_pie(nbar),
        heterodyne: heterodyne_pie(nbar),
        dolinar: dolinar_pie(nbar, convention),
        helstrom_pe: helstrom_pe(nbar, convention),
    })
}

/// Best PIE attainable by ideal symbol-by-symbol detection at n̄: the maximum
/// of homodyne, heterodyne, and the Helstrom-limited binary receiver. The
/// physical (Standard) Helstrom convention is used, which approaches the
/// 2·log₂e small-n̄ ceiling from below.
pub fn symbol_by_symbol_ceiling(nbar: f64) -> f64 {
    homodyne_pie(nbar)
        .max(heterodyne_pie(nbar))
        .max(dolinar_pie(nbar, HelstromConvention::Standard))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SuperadditivityVerdict {
    Superadditive,
    Not,
    Inconclusive,
}

/// Compare a measured PIE point against the symbol-by-symbol ceiling at the
/// same n̄. Superadditive only when the whole confidence interval clears the
/// ceiling; inconclusive when the interval straddles it.
pub fn superadditivity_check(point: &PiePoint) -> Result<SuperadditivityVerdict> {
    if !point.ci_halfwidth.is_finite() || !point.pie.is_finite() {
        return Err(Error::invalid_argument(
            "PIE point must have finite value and confidence interval".to_string(),
        ));
    }
    let ceiling = symbol_by_symbol_ceiling(point.nbar);
    if point.pie - point.ci_halfwidth > ceiling {
        Ok(SuperadditivityVerdict::Superadditive)
    } else if point.pie + point.ci_halfwidth < ceiling {
        Ok(SuperadditivityVerdict::Not)
    } else {
        Ok(SuperadditivityVerdict::Inconclusive)
    }
}
