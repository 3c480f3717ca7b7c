//! Linear-optical propagation: channel loss and phase drift, and the
//! log₂N-stage switch/delay/beamsplitter cascade that converts BPSK Hadamard
//! codewords into PPM codewords.
//!
//! Linear optics on coherent states is exactly a linear map on complex
//! amplitudes, so the cascade is simulated on a dual-rail amplitude vector
//! (2N entries) rather than event by event. Time bins are kept in
//! latency-adjusted coordinates: the fixed propagation delay accumulated by
//! each stage is subtracted, so every stage maps length-N rails to length-N
//! rails.
//!
//! Stage k (delay d bins) acts blockwise on segments of 2d bins. A segment
//! entering on one rail is split: the first d bins travel the delayed arm,
//! the second d bins are switched onto the other arm, and the two meet at a
//! 50/50 beamsplitter. With the interferometer phase error ε on the delayed
//! arm the pair (a, b) maps to
//!
//! ```text
//!   sum  port (upper, bin o):    (a·e^{iε/2} + b·e^{−iε/2})/√2 · √(1−loss)
//!   diff port (lower, bin o+d):  (a·e^{iε/2} − b·e^{−iε/2})/√2 · √(1−loss)
//! ```
//!
//! so the lossless ε=0 cascade reproduces (1/√N)·H exactly: output bin s
//! carries row s of the Sylvester matrix, odd (1-based) output slots exit on
//! the upper rail and even slots on the lower rail.

use num_complex::Complex64;

use crate::codebook::CoherentCodeword;
use crate::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Channel between transmitter and receiver: scalar power attenuation plus a
/// deterministic single-frequency phase ramp φ(t) = φ₀ + 2π·f·t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    /// Power transmission in (0, 1].
    pub attenuation: f64,
    /// Drift rate f in cycles per second (≥ 0).
    pub drift_rate_hz: f64,
    /// Phase offset φ₀ in radians.
    pub drift_phase0: f64,
}

impl ChannelModel {
    pub fn lossless_static() -> Self {
        ChannelModel {
            attenuation: 1.0,
            drift_rate_hz: 0.0,
            drift_phase0: 0.0,
        }
    }

    /// Drift phase at absolute time t (radians, not wrapped).
    pub fn phase_at(&self, t: f64) -> f64 {
        self.drift_phase0 + std::f64::consts::TAU * self.drift_rate_hz * t
    }

    fn validate(&self) -> Result<()> {
        if !(self.attenuation > 0.0 && self.attenuation <= 1.0) {
            return Err(Error::invalid_argument(format!(
                "channel attenuation must be in (0, 1], got {}",
                self.attenuation
            )));
        }
        if self.drift_rate_hz < 0.0 {
            return Err(Error::invalid_argument(
                "drift rate must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// Apply channel loss and phase drift to a codeword. The drift phase is
/// sampled at bin centers, aₖ ← aₖ·√attenuation·e^{iφ(frame_start+(k−½)τ)}.
pub fn apply_channel(codeword: &CoherentCodeword, channel: &ChannelModel) -> Result<CoherentCodeword> {
    channel.validate()?;
    let amp_scale = channel.attenuation.sqrt();
    let tau = codeword.bin_duration;
    let amplitudes = codeword
        .amplitudes
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let t = codeword.frame_start + (k as f64 + 0.5) * tau;
            a * amp_scale * Complex64::cis(channel.phase_at(t))
        })
        .collect();
    Ok(CoherentCodeword {
        amplitudes,
        bin_duration: tau,
        frame_start: codeword.frame_start,
    })
}

/// Per-stage parameters of the cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageParams {
    /// Differential delay in bins; N/2 for the first stage, halving down to 1.
    pub delay_bins: usize,
    /// Interferometer phase error ε in radians (relative phase of the two
    /// arms between switch and beamsplitter).
    pub phase_error: f64,
    /// Power loss applied once per stage, in [0, 1).
    pub loss_fraction: f64,
}

impl StageParams {
    pub fn ideal(delay_bins: usize) -> Self {
        StageParams {
            delay_bins,
            phase_error: 0.0,
            loss_fraction: 0.0,
        }
    }
}

/// Full cascade configuration. Codeword length is N = 2^num_stages.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenMachineConfig {
    stages: Vec<StageParams>,
    /// Symbol (bin) duration τ in seconds.
    pub symbol_duration: f64,
}

impl GreenMachineConfig {
    /// Validates the delay ladder: stage k must have delay N/2^(k+1), ending
    /// at 1 bin.
    pub fn new(stages: Vec<StageParams>, symbol_duration: f64) -> Result<Self> {
        if stages.is_empty() || stages.len() > 20 {
            return Err(Error::invalid_argument(format!(
                "stage count must be in 1..=20, got {}",
                stages.len()
            )));
        }
        if !(symbol_duration > 0.0) {
            return Err(Error::invalid_argument(
                "symbol duration must be positive".to_string(),
            ));
        }
        let n = 1usize << stages.len();
        for (s, stage) in stages.iter().enumerate() {
            let expect = n >> (s + 1);
            if stage.delay_bins != expect {
                return Err(Error::invalid_argument(format!(
                    "stage {} delay must be {expect} bins, got {}",
                    s + 1,
                    stage.delay_bins
                )));
            }
            if !(0.0..1.0).contains(&stage.loss_fraction) {
                return Err(Error::invalid_argument(format!(
                    "stage {} loss fraction must be in [0, 1), got {}",
                    s + 1,
                    stage.loss_fraction
                )));
            }
            if !stage.phase_error.is_finite() {
                return Err(Error::invalid_argument(format!(
                    "stage {} phase error must be finite",
                    s + 1
                )));
            }
        }
        Ok(GreenMachineConfig {
            stages,
            symbol_duration,
        })
    }

    /// Lossless zero-error cascade with num_stages stages.
    pub fn ideal(num_stages: usize, symbol_duration: f64) -> Result<Self> {
        if num_stages == 0 || num_stages > 20 {
            return Err(Error::invalid_argument(format!(
                "stage count must be in 1..=20, got {num_stages}"
            )));
        }
        let n = 1usize << num_stages;
        let stages = (0..num_stages)
            .map(|s| StageParams::ideal(n >> (s + 1)))
            .collect();
        GreenMachineConfig::new(stages, symbol_duration)
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Codeword length N = 2^num_stages.
    pub fn codeword_length(&self) -> usize {
        1usize << self.stages.len()
    }

    pub fn stages(&self) -> &[StageParams] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [StageParams] {
        &mut self.stages
    }

    /// Frame (codeword) duration N·τ in seconds.
    pub fn frame_duration(&self) -> f64 {
        self.codeword_length() as f64 * self.symbol_duration
    }

    /// Set the stage phase errors to equal magnitudes that yield the
    /// requested total off-slot energy fraction: the on-slot energy is
    /// cos(ε/2)^(2k), so |ε| = 2·acos((1−crosstalk)^(1/2k)). Signs alternate
    /// across stages so a common channel-drift offset cannot coherently
    /// cancel every stage's error at one drift rate.
    pub fn with_crosstalk(mut self, crosstalk: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&crosstalk) {
            return Err(Error::invalid_argument(format!(
                "crosstalk must be in [0, 1), got {crosstalk}"
            )));
        }
        let k = self.stages.len() as f64;
        let eps = 2.0 * (1.0 - crosstalk).powf(1.0 / (2.0 * k)).acos();
        for (s, stage) in self.stages.iter_mut().enumerate() {
            stage.phase_error = if s % 2 == 0 { eps } else { -eps };
        }
        Ok(self)
    }

    /// Set every stage's loss from a per-stage figure in dB.
    pub fn with_loss_db_per_stage(mut self, loss_db: f64) -> Result<Self> {
        if loss_db < 0.0 {
            return Err(Error::invalid_argument(
                "per-stage loss in dB must be non-negative".to_string(),
            ));
        }
        let loss_fraction = 1.0 - 10f64.powf(-loss_db / 10.0);
        for stage in &mut self.stages {
            stage.loss_fraction = loss_fraction;
        }
        Ok(self)
    }
}

/// Dual-rail amplitude state in latency-adjusted time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRailState {
    pub upper: Vec<Complex64>,
    pub lower: Vec<Complex64>,
}

impl DualRailState {
    /// Fresh state with all light on the upper rail, as the codeword enters
    /// the first stage.
    pub fn from_codeword(codeword: &CoherentCodeword) -> Self {
        DualRailState {
            upper: codeword.amplitudes.clone(),
            lower: vec![Complex64::new(0.0, 0.0); codeword.len()],
        }
    }

    pub fn zeros(n: usize) -> Self {
        DualRailState {
            upper: vec![Complex64::new(0.0, 0.0); n],
            lower: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn total_energy(&self) -> f64 {
        self.upper.iter().map(|a| a.norm_sqr()).sum::<f64>()
            + self.lower.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    /// Energy per PPM slot. Slot s (1-based) lives in bin s−1; odd slots exit
    /// on the upper rail, even slots on the lower rail.
    pub fn slot_energies(&self) -> Vec<f64> {
        (0..self.len())
            .map(|bin| {
                if bin % 2 == 0 {
                    self.upper[bin].norm_sqr()
                } else {
                    self.lower[bin].norm_sqr()
                }
            })
            .collect()
    }

    /// Rail carrying slot s (1-based): true for upper.
    pub fn slot_is_upper(slot: usize) -> bool {
        (slot - 1) % 2 == 0
    }
}

/// One cascade stage. `stage_index` is 1-based and used only in diagnostics.
///
/// The input must be segment-aligned for this stage's delay: each 2d-bin
/// block carries light on exactly one rail, alternating upper/lower from the
/// first block.
pub fn apply_stage(
    state: &DualRailState,
    stage: &StageParams,
    stage_index: usize,
) -> Result<DualRailState> {
    let mut out = DualRailState::zeros(state.len());
    apply_stage_into(state, stage, stage_index, &mut out)?;
    Ok(out)
}

fn apply_stage_into(
    state: &DualRailState,
    stage: &StageParams,
    stage_index: usize,
    out: &mut DualRailState,
) -> Result<()> {
    let n = state.len();
    let d = stage.delay_bins;
    if d == 0 || 2 * d > n || n % (2 * d) != 0 {
        return Err(Error::invalid_argument(format!(
            "stage {stage_index}: delay {d} bins does not divide frame of {n} bins"
        )));
    }

    let total = state.total_energy();
    let misalignment_tol = 1e-24 * total;

    let half_phase = Complex64::cis(stage.phase_error / 2.0);
    let scale = FRAC_1_SQRT_2 * (1.0 - stage.loss_fraction).sqrt();

    debug_assert!(out.len() == n);
    for a in out.upper.iter_mut().chain(out.lower.iter_mut()) {
        *a = Complex64::new(0.0, 0.0);
    }

    for (seg, base) in (0..n).step_by(2 * d).enumerate() {
        let (src, other) = if seg % 2 == 0 {
            (&state.upper, &state.lower)
        } else {
            (&state.lower, &state.upper)
        };
        let stray: f64 = other[base..base + 2 * d].iter().map(|a| a.norm_sqr()).sum();
        if stray > misalignment_tol {
            return Err(Error::invalid_state(format!(
                "stage {stage_index}: segment at bin {base} carries light on both rails"
            )));
        }
        for o in 0..d {
            let a = src[base + o] * half_phase;
            let b = src[base + d + o] * half_phase.conj();
            out.upper[base + o] = (a + b) * scale;
            out.lower[base + d + o] = (a - b) * scale;
        }
    }
    Ok(())
}

/// Run the full cascade on a codeword.
pub fn green_machine_transform(
    codeword: &CoherentCodeword,
    config: &GreenMachineConfig,
) -> Result<DualRailState> {
    let n = config.codeword_length();
    if codeword.len() != n {
        return Err(Error::invalid_argument(format!(
            "codeword length {} does not match 2^{} = {n}",
            codeword.len(),
            config.num_stages()
        )));
    }
    let mut state = DualRailState::from_codeword(codeword);
    let mut scratch = DualRailState::zeros(n);
    transform_in_place(&mut state, &mut scratch, config)?;
    Ok(state)
}

/// Allocation-free cascade for hot Monte Carlo loops: `state` holds the input
/// on entry and the output on exit; `scratch` is a same-size work buffer.
pub fn transform_in_place(
    state: &mut DualRailState,
    scratch: &mut DualRailState,
    config: &GreenMachineConfig,
) -> Result<()> {
    for (s, stage) in config.stages.iter().enumerate() {
        apply_stage_into(state, stage, s + 1, scratch)?;
        std::mem::swap(state, scratch);
    }
    Ok(())
}

/// Run the cascade through the first `upto` stages only (used by the
/// calibration monitor taps).
pub fn partial_transform(
    codeword: &CoherentCodeword,
    config: &GreenMachineConfig,
    upto: usize,
) -> Result<DualRailState> {
    let n = config.codeword_length();
    if codeword.len() != n {
        return Err(Error::invalid_argument(format!(
            "codeword length {} does not match 2^{} = {n}",
            codeword.len(),
            config.num_stages()
        )));
    }
    if upto > config.num_stages() {
        return Err(Error::invalid_argument(format!(
            "stage cutoff {upto} exceeds {} stages",
            config.num_stages()
        )));
    }
    let mut state = DualRailState::from_codeword(codeword);
    for (s, stage) in config.stages.iter().take(upto).enumerate() {
        state = apply_stage(&state, stage, s + 1)?;
    }
    Ok(state)
}

/// Closed form of the cascade as a 2N×N complex matrix: rows 0..N are upper
/// rail bins, rows N..2N lower rail bins, columns are input bins. Satisfies
/// green_machine_transform(x) = M·x, and M†M = I for the lossless ε=0 case.
pub fn gm_transfer_matrix(config: &GreenMachineConfig) -> Result<Vec<Vec<Complex64>>> {
    let n = config.codeword_length();
    let mut columns = Vec::with_capacity(n);
    for col in 0..n {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n];
        amplitudes[col] = Complex64::new(1.0, 0.0);
        let cw = CoherentCodeword {
            amplitudes,
            bin_duration: config.symbol_duration,
            frame_start: 0.0,
        };
        let out = green_machine_transform(&cw, config)?;
        columns.push((out.upper, out.lower));
    }
    let mut matrix = vec![vec![Complex64::new(0.0, 0.0); n]; 2 * n];
    for (col, (upper, lower)) in columns.into_iter().enumerate() {
        for (bin, v) in upper.into_iter().enumerate() {
            matrix[bin][col] = v;
        }
        for (bin, v) in lower.into_iter().enumerate() {
            matrix[n + bin][col] = v;
        }
    }
    Ok(matrix)
}

/// Codeword-to-slot permutation σ: σ[j−1] is the 1-based output slot holding
/// the peak energy when codeword j is transformed. Errors if the map is not
/// a bijection (possible when phase errors exceed the crossover point).
pub fn slot_permutation(config: &GreenMachineConfig) -> Result<Vec<usize>> {
    let n = config.codeword_length();
    let alpha = Complex64::new(1.0, 0.0);
    let mut sigma = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for j in 1..=n {
        let cw = crate::codebook::bpsk_hadamard_codeword(j, n, alpha, config.symbol_duration)?;
        let out = green_machine_transform(&cw, config)?;
        let energies = out.slot_energies();
        let (best, _) = energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if seen[best] {
            return Err(Error::invalid_state(format!(
                "slot map is not a bijection: slot {} claimed twice",
                best + 1
            )));
        }
        seen[best] = true;
        sigma.push(best + 1);
    }
    Ok(sigma)
}

/// Mean off-slot energy fraction over all codewords (the crosstalk figure).
pub fn crosstalk_fraction(config: &GreenMachineConfig) -> Result<f64> {
    let n = config.codeword_length();
    let alpha = Complex64::new(1.0, 0.0);
    let mut acc = 0.0;
    for j in 1..=n {
        let cw = crate::codebook::bpsk_hadamard_codeword(j, n, alpha, config.symbol_duration)?;
        let out = green_machine_transform(&cw, config)?;
        let energies = out.slot_energies();
        let total: f64 = energies.iter().sum();
        let peak = energies.iter().cloned().fold(0.0, f64::max);
        acc += (total - peak) / total;
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{bpsk_hadamard_codeword, HadamardMatrix};
    use approx::assert_abs_diff_eq;

    const TAU_S: f64 = 20e-9;

    fn ideal(num_stages: usize) -> GreenMachineConfig {
        GreenMachineConfig::ideal(num_stages, TAU_S).unwrap()
    }

    #[test]
    fn channel_identity_when_static_lossless() {
        let cw = bpsk_hadamard_codeword(3, 8, Complex64::new(0.2, 0.1), TAU_S).unwrap();
        let out = apply_channel(&cw, &ChannelModel::lossless_static()).unwrap();
        for (a, b) in cw.amplitudes.iter().zip(&out.amplitudes) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn channel_attenuation_scales_power() {
        let cw = bpsk_hadamard_codeword(1, 4, Complex64::new(0.5, 0.0), TAU_S).unwrap();
        let ch = ChannelModel {
            attenuation: 0.01,
            drift_rate_hz: 0.0,
            drift_phase0: 0.0,
        };
        let out = apply_channel(&cw, &ch).unwrap();
        for (a, b) in cw.amplitudes.iter().zip(&out.amplitudes) {
            assert_abs_diff_eq!(b.norm_sqr(), 0.01 * a.norm_sqr(), epsilon = 1e-15);
        }
    }

    #[test]
    fn channel_phase_spread_closed_form() {
        // f = 1e5 cycles/s over an 8-bin codeword of 20 ns bins: the ramp
        // advances 2π·f·Nτ = 2π·10⁵·160 ns = 1.00531e-1 rad across the
        // frame window.
        let ch = ChannelModel {
            attenuation: 1.0,
            drift_rate_hz: 1e5,
            drift_phase0: 0.0,
        };
        let spread = ch.phase_at(8.0 * TAU_S) - ch.phase_at(0.0);
        assert_abs_diff_eq!(spread, 1.005_309_649e-1, epsilon = 1e-9);
    }

    #[test]
    fn channel_rejects_nonpositive_attenuation() {
        let cw = bpsk_hadamard_codeword(1, 2, Complex64::new(0.1, 0.0), TAU_S).unwrap();
        let ch = ChannelModel {
            attenuation: 0.0,
            drift_rate_hz: 0.0,
            drift_phase0: 0.0,
        };
        assert!(apply_channel(&cw, &ch).is_err());
    }

    #[test]
    fn single_stage_constructive_and_destructive() {
        let config = ideal(1);
        let alpha = Complex64::new(0.3, 0.0);
        // (α, α): all energy in one output bin, 2|α|².
        let cw = bpsk_hadamard_codeword(1, 2, alpha, TAU_S).unwrap();
        let out = green_machine_transform(&cw, &config).unwrap();
        let energies = out.slot_energies();
        assert_abs_diff_eq!(energies[0], 2.0 * alpha.norm_sqr(), epsilon = 1e-15);
        assert_abs_diff_eq!(energies[1], 0.0, epsilon = 1e-24);
        // (α, −α): complementary rail/bin.
        let cw = bpsk_hadamard_codeword(2, 2, alpha, TAU_S).unwrap();
        let out = green_machine_transform(&cw, &config).unwrap();
        let energies = out.slot_energies();
        assert_abs_diff_eq!(energies[1], 2.0 * alpha.norm_sqr(), epsilon = 1e-15);
        assert_abs_diff_eq!(energies[0], 0.0, epsilon = 1e-24);
    }

    #[test]
    fn lossless_transform_is_single_slot_n16() {
        let config = GreenMachineConfig::ideal(4, 10e-9).unwrap();
        let alpha = Complex64::new(0.17, -0.05);
        for j in 1..=16 {
            let cw = bpsk_hadamard_codeword(j, 16, alpha, 10e-9).unwrap();
            let out = green_machine_transform(&cw, &config).unwrap();
            let energies = out.slot_energies();
            let peak = 16.0 * alpha.norm_sqr();
            assert_abs_diff_eq!(energies[j - 1], peak, epsilon = 1e-12 * peak);
            for (s, e) in energies.iter().enumerate() {
                if s != j - 1 {
                    assert!(
                        *e < 1e-24 * alpha.norm_sqr(),
                        "j={j} slot {} leak {e}",
                        s + 1
                    );
                }
            }
        }
        let sigma = slot_permutation(&config).unwrap();
        assert_eq!(sigma, (1..=16).collect::<Vec<_>>());
    }

    /// Matrix-vector oracle: M·x computed from the transfer matrix must match
    /// the cascade output for arbitrary inputs.
    #[test]
    fn transfer_matrix_matches_transform() {
        let mut config = ideal(3);
        config.stages_mut()[0].phase_error = 0.21;
        config.stages_mut()[1].phase_error = -0.4;
        config.stages_mut()[2].phase_error = 1.1;
        config.stages_mut()[1].loss_fraction = 0.3;
        let m = gm_transfer_matrix(&config).unwrap();
        let cw = bpsk_hadamard_codeword(5, 8, Complex64::new(0.4, 0.2), TAU_S).unwrap();
        let out = green_machine_transform(&cw, &config).unwrap();
        for bin in 0..8 {
            for (row, got) in [(bin, out.upper[bin]), (8 + bin, out.lower[bin])] {
                let expect: Complex64 = m[row]
                    .iter()
                    .zip(&cw.amplitudes)
                    .map(|(mij, x)| mij * x)
                    .sum();
                assert_abs_diff_eq!((expect - got).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lossless_transfer_matrix_is_isometry() {
        for k in 1..=6 {
            let config = ideal(k);
            let n = config.codeword_length();
            let m = gm_transfer_matrix(&config).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let dot: Complex64 = (0..2 * n).map(|r| m[r][i].conj() * m[r][j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((dot - expect).norm());
                }
            }
            assert!(worst < 1e-12, "N={n}: ‖M†M−I‖∞ = {worst}");
        }
    }

    #[test]
    fn occupied_rows_equal_scaled_hadamard() {
        let config = ideal(3);
        let m = gm_transfer_matrix(&config).unwrap();
        let h = HadamardMatrix::new(8).unwrap();
        let scale = 1.0 / 8f64.sqrt();
        for slot in 1..=8usize {
            let bin = slot - 1;
            let row = if DualRailState::slot_is_upper(slot) {
                &m[bin]
            } else {
                &m[8 + bin]
            };
            // Global phase fixed by the first column.
            let phase = row[0] / row[0].norm();
            for (c, v) in row.iter().enumerate() {
                let expect = phase * scale * h.entry(slot, c + 1) as f64;
                assert_abs_diff_eq!((v - expect).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unoccupied_rows_are_dark() {
        let config = ideal(3);
        let m = gm_transfer_matrix(&config).unwrap();
        for slot in 1..=8usize {
            let bin = slot - 1;
            let row = if DualRailState::slot_is_upper(slot) {
                &m[8 + bin]
            } else {
                &m[bin]
            };
            for v in row {
                assert!(v.norm() < 1e-24);
            }
        }
    }

    #[test]
    fn uniform_loss_scales_gram() {
        let mut config = ideal(2);
        for stage in config.stages_mut() {
            stage.loss_fraction = 0.5;
        }
        let m = gm_transfer_matrix(&config).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: Complex64 = (0..8).map(|r| m[r][i].conj() * m[r][j]).sum();
                let expect = if i == j { 0.25 } else { 0.0 };
                assert_abs_diff_eq!((dot - expect).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn per_stage_loss_peak_energy() {
        // 0.4 dB per stage over 5 stages: peak output energy 32·10^(−0.2)|α|².
        let config = GreenMachineConfig::ideal(5, 10e-9)
            .unwrap()
            .with_loss_db_per_stage(0.4)
            .unwrap();
        let alpha = Complex64::new(0.11, 0.0);
        let cw = bpsk_hadamard_codeword(7, 32, alpha, 10e-9).unwrap();
        let out = green_machine_transform(&cw, &config).unwrap();
        let peak = out.slot_energies().into_iter().fold(0.0, f64::max);
        let expect = 32.0 * 10f64.powf(-0.2) * alpha.norm_sqr();
        assert_abs_diff_eq!(peak, expect, epsilon = 1e-12 * expect);
    }

    #[test]
    fn final_stage_pi_error_flips_finest_bit() {
        let mut config = ideal(4);
        let last = config.num_stages() - 1;
        config.stages_mut()[last].phase_error = std::f64::consts::PI;
        let sigma = slot_permutation(&config).unwrap();
        // σ must swap each odd slot with its even neighbor.
        for j in 1..=16usize {
            let expect = if j % 2 == 1 { j + 1 } else { j - 1 };
            assert_eq!(sigma[j - 1], expect, "codeword {j}");
        }
        assert_abs_diff_eq!(crosstalk_fraction(&config).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn global_phase_leaves_magnitudes_unchanged() {
        let mut config = ideal(4);
        config.stages_mut()[2].phase_error = 0.3;
        let alpha = Complex64::new(0.2, 0.0);
        let cw = bpsk_hadamard_codeword(9, 16, alpha, TAU_S).unwrap();
        let mut shifted = cw.clone();
        let phase = Complex64::cis(1.234);
        for a in &mut shifted.amplitudes {
            *a *= phase;
        }
        let out_a = green_machine_transform(&cw, &config).unwrap();
        let out_b = green_machine_transform(&shifted, &config).unwrap();
        for (a, b) in out_a.slot_energies().iter().zip(out_b.slot_energies()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn crosstalk_monotone_in_each_stage_error() {
        let base = ideal(3);
        for stage_idx in 0..3 {
            let mut prev = -1.0;
            for step in 0..=8 {
                let eps = std::f64::consts::FRAC_PI_2 * step as f64 / 8.0;
                let mut config = base.clone();
                config.stages_mut()[stage_idx].phase_error = eps;
                let ct = crosstalk_fraction(&config).unwrap();
                assert!(
                    ct >= prev - 1e-12,
                    "stage {stage_idx}: crosstalk not monotone at ε={eps}"
                );
                prev = ct;
            }
        }
    }

    #[test]
    fn crosstalk_dial_hits_target() {
        for &(k, target) in &[(1usize, 0.01), (2, 0.038), (3, 0.07), (4, 0.113)] {
            let config = GreenMachineConfig::ideal(k, TAU_S)
                .unwrap()
                .with_crosstalk(target)
                .unwrap();
            let got = crosstalk_fraction(&config).unwrap();
            assert_abs_diff_eq!(got, target, epsilon = 1e-9);
        }
    }

    #[test]
    fn energy_conserved_without_loss() {
        let mut config = ideal(6);
        for (s, stage) in config.stages_mut().iter_mut().enumerate() {
            stage.phase_error = 0.1 * (s as f64 + 1.0);
        }
        let alpha = Complex64::new(0.3, 0.7);
        let cw = bpsk_hadamard_codeword(23, 64, alpha, TAU_S).unwrap();
        let out = green_machine_transform(&cw, &config).unwrap();
        let input = cw.total_energy();
        assert_abs_diff_eq!(out.total_energy(), input, epsilon = 1e-12 * input);
    }

    #[test]
    fn misaligned_state_rejected() {
        let config = ideal(2);
        let mut state = DualRailState::zeros(4);
        state.upper[0] = Complex64::new(1.0, 0.0);
        state.lower[1] = Complex64::new(1.0, 0.0); // same segment, other rail
        assert!(matches!(
            apply_stage(&state, &config.stages()[0], 1),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        let config = ideal(3);
        let cw = bpsk_hadamard_codeword(1, 4, Complex64::new(0.1, 0.0), TAU_S).unwrap();
        assert!(green_machine_transform(&cw, &config).is_err());
    }

    #[test]
    fn delay_ladder_validated() {
        let stages = vec![StageParams::ideal(4), StageParams::ideal(1)];
        assert!(GreenMachineConfig::new(stages, TAU_S).is_err());
    }
}
