//! Hadamard matrices and the coherent-state codebooks built from them.
//!
//! Codewords are sequences of complex field amplitudes over consecutive time
//! bins. Amplitudes are dimensionless with |a|² equal to the mean photon
//! number in that bin, so all energy bookkeeping downstream is photon
//! counting. A BPSK Hadamard codeword carries the signs of one row of the
//! Sylvester Hadamard matrix; the matching PPM codeword concentrates the same
//! total energy into a single bin.

use num_complex::Complex64;

use crate::{Error, Result};

/// Sylvester-ordered Hadamard matrix of power-of-two order.
///
/// Entries are ±1 and are generated on demand from the bit-parity closed
/// form of the Sylvester recursion H₂ₙ = H₂ ⊗ Hₙ, so large orders cost no
/// memory. Rows and columns are 1-based to match codeword numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HadamardMatrix {
    order: usize,
}

impl HadamardMatrix {
    /// Build the order-N Sylvester Hadamard matrix. N must be 2^k with
    /// 1 ≤ k ≤ 20.
    pub fn new(order: usize) -> Result<Self> {
        if !order.is_power_of_two() || order < 2 {
            return Err(Error::invalid_argument(format!(
                "Hadamard order must be a power of two >= 2, got {order}"
            )));
        }
        if order > 1 << 20 {
            return Err(Error::invalid_argument(format!(
                "Hadamard order {order} exceeds the supported maximum 2^20"
            )));
        }
        Ok(HadamardMatrix { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry at 1-based (row, col). For Sylvester ordering this is
    /// (−1)^popcount((row−1) & (col−1)).
    pub fn entry(&self, row: usize, col: usize) -> i32 {
        debug_assert!(row >= 1 && row <= self.order);
        debug_assert!(col >= 1 && col <= self.order);
        if ((row - 1) & (col - 1)).count_ones() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// One full row of signs (1-based row index).
    pub fn row(&self, row: usize) -> Vec<i32> {
        (1..=self.order).map(|c| self.entry(row, c)).collect()
    }

    /// Dense ±1 matrix; only sensible for small orders.
    pub fn dense(&self) -> Vec<Vec<i32>> {
        (1..=self.order).map(|r| self.row(r)).collect()
    }
}

/// One codeword frame: complex amplitudes over consecutive time bins.
///
/// `bin_duration` is the symbol slot length τ in seconds and `frame_start`
/// the absolute start time of bin 1, used when channel phase drift is
/// applied.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentCodeword {
    pub amplitudes: Vec<Complex64>,
    pub bin_duration: f64,
    pub frame_start: f64,
}

impl CoherentCodeword {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Total energy Σ|aₖ|² in mean photons per frame.
    pub fn total_energy(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Mean photon number per symbol, n̄ = Σ|aₖ|²/N.
    pub fn mean_photon_per_symbol(&self) -> f64 {
        self.total_energy() / self.len() as f64
    }
}

fn check_index(j: usize, order: usize) -> Result<()> {
    if !order.is_power_of_two() || order < 2 {
        return Err(Error::invalid_argument(format!(
            "codeword length must be a power of two >= 2, got {order}"
        )));
    }
    if j < 1 || j > order {
        return Err(Error::invalid_argument(format!(
            "codeword index {j} out of range 1..={order}"
        )));
    }
    Ok(())
}

/// BPSK Hadamard codeword j (1-based): amplitude in bin k is H[j,k]·α, so
/// every bin carries |α|² mean photons.
pub fn bpsk_hadamard_codeword(
    j: usize,
    order: usize,
    alpha: Complex64,
    tau: f64,
) -> Result<CoherentCodeword> {
    check_index(j, order)?;
    let h = HadamardMatrix::new(order)?;
    let amplitudes = (1..=order)
        .map(|k| alpha * h.entry(j, k) as f64)
        .collect();
    Ok(CoherentCodeword {
        amplitudes,
        bin_duration: tau,
        frame_start: 0.0,
    })
}

/// PPM codeword j (1-based): amplitude √N·α in bin j, vacuum elsewhere.
/// Same total energy N|α|² as the matching BPSK Hadamard codeword.
pub fn ppm_codeword(
    j: usize,
    order: usize,
    alpha: Complex64,
    tau: f64,
) -> Result<CoherentCodeword> {
    check_index(j, order)?;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); order];
    amplitudes[j - 1] = alpha * (order as f64).sqrt();
    Ok(CoherentCodeword {
        amplitudes,
        bin_duration: tau,
        frame_start: 0.0,
    })
}
