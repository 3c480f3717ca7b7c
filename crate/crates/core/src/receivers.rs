//! Symbol-by-symbol baseline receivers simulated under channel phase drift,
//! plus the Monte Carlo PIE entry point shared with the joint-detection
//! pipeline.
//!
//! Conventions: the quadrature shot-noise variance is 1/4 for homodyne (1/2
//! per quadrature for heterodyne) with |a|² = n̄, which makes the analytic
//! PIE expressions in [`crate::infotheory`] the exact small-n̄ limits. Drift
//! is the deterministic phase ramp of [`crate::optics::ChannelModel`],
//! shared across the sequential symbol timestamps of a run; none of the
//! baselines track it.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::HadamardMatrix;
use crate::detection::{
    estimate_mean_photon, estimate_transition_matrix, run_gm_tallies, DetectorModel, Pipeline,
    TransitionMatrix,
};
use crate::exec;
use crate::infotheory::{
    self, HelstromConvention, PiePoint,
};
use crate::optics::{ChannelModel, GreenMachineConfig};
use crate::{Error, Result};

/// Receiver identifiers as exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiverKind {
    Gm,
    HomodyneSoft,
    HomodyneThresholdHadamard,
    HeterodyneBound,
    Dolinar,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 5] = [
        ReceiverKind::Gm,
        ReceiverKind::HomodyneSoft,
        ReceiverKind::HomodyneThresholdHadamard,
        ReceiverKind::HeterodyneBound,
        ReceiverKind::Dolinar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReceiverKind::Gm => "gm",
            ReceiverKind::HomodyneSoft => "homodyne-soft",
            ReceiverKind::HomodyneThresholdHadamard => "homodyne-threshold-hadamard",
            ReceiverKind::HeterodyneBound => "heterodyne-bound",
            ReceiverKind::Dolinar => "dolinar",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == id)
            .ok_or_else(|| Error::invalid_argument(format!("unknown receiver id '{id}'")))
    }
}

/// Timing of one Monte Carlo run: `trials` symbols of duration τ are laid
/// out sequentially from t = 0, and the drift phase advances across them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftScenario {
    pub drift_rate_hz: f64,
    /// Total acquisition time the symbols must fit into, seconds.
    pub run_duration: f64,
    pub symbol_duration: f64,
    /// Number of symbols.
    pub trials: u64,
}

impl DriftScenario {
    pub fn validate(&self) -> Result<()> {
        if self.drift_rate_hz < 0.0 || !(self.symbol_duration > 0.0) || !(self.run_duration > 0.0)
        {
            return Err(Error::invalid_argument(
                "drift rate must be >= 0 and durations positive".to_string(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InsufficientData("zero trials".to_string()));
        }
        let span = self.trials as f64 * self.symbol_duration;
        if span > self.run_duration * (1.0 + 1e-9) {
            return Err(Error::invalid_argument(format!(
                "{} symbols of {} s do not fit in {} s",
                self.trials, self.symbol_duration, self.run_duration
            )));
        }
        Ok(())
    }

    fn channel(&self) -> ChannelModel {
        ChannelModel {
            attenuation: 1.0,
            drift_rate_hz: self.drift_rate_hz,
            drift_phase0: 0.0,
        }
    }
}

/// Discretized adaptive-displacement receiver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DolinarConfig {
    /// Feedback sub-slots per symbol (≥ 1).
    pub sub_slots: usize,
    /// Which discrimination-bound convention the simulation targets. The
    /// physical receiver realizes `Standard`; `Paper` is emulated by scaling
    /// the pulse energy so the error probability follows that convention's
    /// formula instead.
    pub convention: HelstromConvention,
}

impl Default for DolinarConfig {
    fn default() -> Self {
        DolinarConfig {
            sub_slots: 1000,
            convention: HelstromConvention::Standard,
        }
    }
}

/// One shot-noise-limited homodyne quadrature: Gaussian with mean Re(a) and
/// variance 1/4. Any drift phase is already folded into `a`.
pub fn homodyne_sample<R: Rng>(symbol_amp: Complex64, rng: &mut R) -> f64 {
    let noise: f64 = rng.sample(StandardNormal);
    symbol_amp.re + 0.5 * noise
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Effective symbol amplitude seen by an integrating (matched-filter)
/// receiver under the phase ramp: the mean of e^{iφ(t)} over a window of
/// length `window` centered at `t_center` is e^{iφ(t_center)}·sinc(π·f·window),
/// so a full cycle of drift inside the window nulls the signal.
fn drifted_amp(magnitude: f64, channel: &ChannelModel, t_center: f64, window: f64) -> Complex64 {
    let visibility = sinc(std::f64::consts::PI * channel.drift_rate_hz * window);
    Complex64::cis(channel.phase_at(t_center)) * (magnitude * visibility)
}

const SOFT_HISTOGRAM_BINS: usize = 256;

/// Soft-information homodyne PIE under drift: BPSK symbols ±√n̄ are drifted,
/// measured as quadratures, and the binary-input/continuous-output mutual
/// information is estimated from a 256-bin histogram spanning ±(√n̄ + 6σ),
/// Miller–Madow corrected, then divided by n̄.
pub fn soft_homodyne_pie(nbar: f64, drift: &DriftScenario, master_seed: u64) -> Result<PiePoint> {
    if !(nbar > 0.0) {
        return Err(Error::invalid_argument(format!(
            "mean photon number must be positive, got {nbar}"
        )));
    }
    drift.validate()?;
    let channel = drift.channel();
    let amp = nbar.sqrt();
    let limit = amp + 3.0; // mean reach + 6 σ of quadrature noise
    let tau = drift.symbol_duration;

    let counts = exec::batched_fold(
        drift.trials,
        16_384,
        |start, end| {
            let mut joint = vec![vec![0u64; SOFT_HISTOGRAM_BINS]; 2];
            for i in start..end {
                let mut rng = exec::item_rng(master_seed, i);
                let bit = rng.random::<bool>();
                let sign = if bit { -1.0 } else { 1.0 };
                let a = drifted_amp(sign * amp, &channel, (i as f64 + 0.5) * tau, tau);
                let y = homodyne_sample(a, &mut rng);
                let pos = ((y + limit) / (2.0 * limit) * SOFT_HISTOGRAM_BINS as f64)
                    .floor()
                    .clamp(0.0, (SOFT_HISTOGRAM_BINS - 1) as f64) as usize;
                joint[bit as usize][pos] += 1;
            }
            joint
        },
        |mut a, b| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            a
        },
    )
    .expect("trials >= 1");

    let (mi, sigma) = infotheory::mutual_information_from_counts_corrected(&counts)?;
    Ok(PiePoint {
        nbar,
        pie: mi / nbar,
        ci_halfwidth: 2.0 * sigma / nbar,
        receiver: ReceiverKind::HomodyneSoft.as_str().to_string(),
        drift_rate_hz: drift.drift_rate_hz,
    })
}

/// Hard-decision Hadamard decoding of a quadrature block: the sign vector is
/// correlated against every Hadamard row and the largest |correlation| wins
/// (the pilot first symbol makes the global sign irrelevant, so the
/// magnitude is the ML statistic). Ties break to the lowest index.
pub fn threshold_homodyne_hadamard_decode(quadratures: &[f64], order: usize) -> Result<usize> {
    if !order.is_power_of_two() || order < 2 || quadratures.len() != order {
        return Err(Error::invalid_argument(format!(
            "expected a power-of-two block, got {} quadratures for order {order}",
            quadratures.len()
        )));
    }
    let h = HadamardMatrix::new(order)?;
    let mut best = (0usize, -1i64);
    for j in 1..=order {
        let mut corr = 0i64;
        for (k, q) in quadratures.iter().enumerate() {
            let sign = if *q >= 0.0 { 1 } else { -1 };
            corr += (sign * h.entry(j, k + 1)) as i64;
        }
        let mag = corr.abs();
        if mag > best.1 {
            best = (j, mag);
        }
    }
    Ok(best.0)
}

/// Monte Carlo of the threshold-homodyne receiver on length-N Hadamard
/// codewords under drift. `drift.trials` counts symbols; whole codewords are
/// formed, dialing through all N codewords cyclically. Returns the PIE point
/// and the N×N codeword transition matrix behind it.
pub fn threshold_homodyne_mc(
    nbar: f64,
    order: usize,
    drift: &DriftScenario,
    master_seed: u64,
) -> Result<(PiePoint, Vec<Vec<u64>>)> {
    if !(nbar > 0.0) {
        return Err(Error::invalid_argument(format!(
            "mean photon number must be positive, got {nbar}"
        )));
    }
    drift.validate()?;
    let h = HadamardMatrix::new(order)?;
    let codewords = drift.trials / order as u64;
    if codewords == 0 {
        return Err(Error::InsufficientData(format!(
            "{} symbols form no complete length-{order} codeword",
            drift.trials
        )));
    }
    let channel = drift.channel();
    let amp = nbar.sqrt();
    let tau = drift.symbol_duration;

    let counts = exec::batched_fold(
        codewords,
        4_096,
        |start, end| {
            let mut tallies = vec![vec![0u64; order]; order];
            let mut quadratures = vec![0.0; order];
            for w in start..end {
                let j = (w % order as u64) as usize + 1;
                let mut rng = exec::item_rng(master_seed, w);
                let frame_start = w as f64 * order as f64 * tau;
                for k in 0..order {
                    let a = drifted_amp(
                        h.entry(j, k + 1) as f64 * amp,
                        &channel,
                        frame_start + (k as f64 + 0.5) * tau,
                        tau,
                    );
                    quadratures[k] = homodyne_sample(a, &mut rng);
                }
                let decoded =
                    threshold_homodyne_hadamard_decode(&quadratures, order).expect("valid block");
                tallies[j - 1][decoded - 1] += 1;
            }
            tallies
        },
        |mut a, b| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            a
        },
    )
    .expect("codewords >= 1");

    let (mi, sigma) = infotheory::mutual_information_from_counts(&counts)?;
    let scale = order as f64 * nbar;
    Ok((
        PiePoint {
            nbar,
            pie: mi / scale,
            ci_halfwidth: 2.0 * sigma / scale,
            receiver: ReceiverKind::HomodyneThresholdHadamard.as_str().to_string(),
            drift_rate_hz: drift.drift_rate_hz,
        },
        counts,
    ))
}

fn dolinar_effective_nbar(nbar: f64, convention: HelstromConvention) -> f64 {
    match convention {
        // The physical receiver discriminates |±α⟩ with overlap e^{−4n̄}.
        HelstromConvention::Standard => nbar,
        // Emulate the e^{−n̄} overlap convention by scaling the energy.
        HelstromConvention::Paper => nbar / 4.0,
    }
}

/// One adaptive-displacement decision with a per-sub-slot signal phase.
///
/// `bit` selects the transmitted amplitude (+α for false, −α for true);
/// `prior_plus` is the receiver's prior for +α. The displacement follows the
/// closed-form optimal feedback −h/R(t) with h the running MAP hypothesis
/// and R(t) = √(1−e^{−4n̄t}) the optimal-trajectory Bloch overlap; the
/// receiver assumes zero signal phase.
fn dolinar_decide_with<R: Rng, P: Fn(usize) -> f64>(
    bit: bool,
    prior_plus: f64,
    nbar: f64,
    config: &DolinarConfig,
    signal_phase: P,
    signal_visibility: f64,
    rng: &mut R,
) -> bool {
    let m = config.sub_slots.max(1);
    let n_eff = dolinar_effective_nbar(nbar, config.convention);
    let mut p_plus = prior_plus.clamp(0.0, 1.0);
    if n_eff <= 0.0 {
        return p_plus < 0.5;
    }
    let sub_amp = (n_eff / m as f64).sqrt();
    let sign = if bit { -1.0 } else { 1.0 };

    for k in 0..m {
        let t_mid = (k as f64 + 0.5) / m as f64;
        let r = (-(-4.0 * n_eff * t_mid).exp_m1()).sqrt();
        let h = if p_plus >= 0.5 { 1.0 } else { -1.0 };
        let beta = -h / r * sub_amp;

        let incoming =
            Complex64::cis(signal_phase(k)) * (sign * sub_amp * signal_visibility);
        let mu_true = (incoming + beta).norm_sqr();
        let clicked = rng.random::<f64>() < -(-mu_true).exp_m1();

        let mu_plus = (Complex64::new(sub_amp + beta, 0.0)).norm_sqr();
        let mu_minus = (Complex64::new(-sub_amp + beta, 0.0)).norm_sqr();
        let (l_plus, l_minus) = if clicked {
            (-(-mu_plus).exp_m1(), -(-mu_minus).exp_m1())
        } else {
            ((-mu_plus).exp(), (-mu_minus).exp())
        };
        let weight = p_plus * l_plus + (1.0 - p_plus) * l_minus;
        if weight > 0.0 {
            p_plus = (p_plus * l_plus / weight).clamp(1e-300, 1.0);
        }
    }
    // Decide −α when the posterior favors it; bit=true encodes −α.
    p_plus < 0.5
}

/// Single-symbol Dolinar decision at a constant signal phase offset.
pub fn dolinar_decide<R: Rng>(
    bit: bool,
    prior_plus: f64,
    nbar: f64,
    config: &DolinarConfig,
    phase_offset: f64,
    rng: &mut R,
) -> bool {
    dolinar_decide_with(bit, prior_plus, nbar, config, |_| phase_offset, 1.0, rng)
}

/// Monte Carlo error probability of the discretized Dolinar receiver at a
/// fixed phase offset. Returns (P_e, binomial σ).
pub fn dolinar_error_probability(
    nbar: f64,
    config: &DolinarConfig,
    phase_offset: f64,
    trials: u64,
    master_seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InsufficientData("zero trials".to_string()));
    }
    let errors = exec::batched_fold(
        trials,
        4_096,
        |start, end| {
            let mut errors = 0u64;
            for i in start..end {
                let mut rng = exec::item_rng(master_seed, i);
                let bit = rng.random::<bool>();
                let decided = dolinar_decide(bit, 0.5, nbar, config, phase_offset, &mut rng);
                if decided != bit {
                    errors += 1;
                }
            }
            errors
        },
        |a, b| a + b,
    )
    .expect("trials >= 1");
    let pe = errors as f64 / trials as f64;
    let sigma = (pe * (1.0 - pe) / trials as f64).sqrt();
    Ok((pe, sigma))
}

/// Monte Carlo PIE of the Dolinar receiver under drift: symbols are laid out
/// sequentially, the signal phase is sampled per sub-slot, and the binary
/// transition matrix of decisions is turned into mutual information.
pub fn dolinar_pie_mc(
    nbar: f64,
    config: &DolinarConfig,
    drift: &DriftScenario,
    master_seed: u64,
) -> Result<PiePoint> {
    if !(nbar > 0.0) {
        return Err(Error::invalid_argument(format!(
            "mean photon number must be positive, got {nbar}"
        )));
    }
    drift.validate()?;
    let channel = drift.channel();
    let tau = drift.symbol_duration;
    let m = config.sub_slots.max(1) as f64;
    let sub_visibility = sinc(std::f64::consts::PI * channel.drift_rate_hz * tau / m);

    let counts = exec::batched_fold(
        drift.trials,
        4_096,
        |start, end| {
            let mut tallies = vec![vec![0u64; 2]; 2];
            for i in start..end {
                let mut rng = exec::item_rng(master_seed, i);
                let bit = rng.random::<bool>();
                let t0 = i as f64 * tau;
                let decided = dolinar_decide_with(
                    bit,
                    0.5,
                    nbar,
                    config,
                    |k| channel.phase_at(t0 + (k as f64 + 0.5) * tau / m),
                    sub_visibility,
                    &mut rng,
                );
                tallies[bit as usize][decided as usize] += 1;
            }
            tallies
        },
        |mut a, b| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            a
        },
    )
    .expect("trials >= 1");

    let (mi, sigma) = infotheory::mutual_information_from_counts(&counts)?;
    Ok(PiePoint {
        nbar,
        pie: mi / nbar,
        ci_halfwidth: 2.0 * sigma / nbar,
        receiver: ReceiverKind::Dolinar.as_str().to_string(),
        drift_rate_hz: drift.drift_rate_hz,
    })
}

/// Step-model upper bound for an ideal heterodyne receiver: it retains its
/// static PIE (1/2n̄)·log₂(1+2n̄) for drift below the modulation bandwidth
/// and measures nothing beyond it. A bound, not a simulation.
pub fn heterodyne_upper_bound_pie(
    nbar: f64,
    drift_rate_hz: f64,
    modulation_bandwidth_hz: f64,
) -> Result<PiePoint> {
    if !(nbar > 0.0) {
        return Err(Error::invalid_argument(format!(
            "mean photon number must be positive, got {nbar}"
        )));
    }
    let pie = if drift_rate_hz < modulation_bandwidth_hz {
        infotheory::heterodyne_pie(nbar)
    } else {
        0.0
    };
    Ok(PiePoint {
        nbar,
        pie,
        ci_halfwidth: 0.0,
        receiver: ReceiverKind::HeterodyneBound.as_str().to_string(),
        drift_rate_hz,
    })
}

/// Joint-detection pipeline PIE: runs the frame Monte Carlo, estimates the
/// transition matrix and the detected mean photon number, and reports PIE
/// against either the detected n̄ (`backed_out`, the loss-excluded figure) or
/// the mean photon number at the channel input.
pub fn gm_pie(
    pipeline: &Pipeline,
    frames_per_codeword: u64,
    backed_out: bool,
    master_seed: u64,
) -> Result<(PiePoint, TransitionMatrix)> {
    let tallies = run_gm_tallies(pipeline, frames_per_codeword, master_seed)?;
    let tm = estimate_transition_matrix(&tallies)?;
    let (mi, sigma) = infotheory::mutual_information_from_counts(&tm.counts)?;
    let n = tm.n as f64;
    let nbar = if backed_out {
        estimate_mean_photon(&tm)?
    } else {
        pipeline.nbar_tx
    };
    if !(nbar > 0.0) {
        return Err(Error::UndefinedEstimate(
            "estimated mean photon number is zero".to_string(),
        ));
    }
    Ok((
        PiePoint {
            nbar,
            pie: mi / (n * nbar),
            ci_halfwidth: 2.0 * sigma / (n * nbar),
            receiver: ReceiverKind::Gm.as_str().to_string(),
            drift_rate_hz: pipeline.channel.drift_rate_hz,
        },
        tm,
    ))
}

/// Full receiver specification for [`monte_carlo_pie`].
#[derive(Debug, Clone)]
pub enum ReceiverSpec {
    Gm {
        gm: GreenMachineConfig,
        detector: DetectorModel,
        attenuation: f64,
        /// Report PIE against the detected mean photon number.
        backed_out: bool,
    },
    HomodyneSoft,
    HomodyneThresholdHadamard {
        order: usize,
    },
    HeterodyneBound {
        modulation_bandwidth_hz: f64,
    },
    Dolinar(DolinarConfig),
}

/// One Monte Carlo PIE point for any receiver at mean photon number `nbar`
/// (per symbol, at the receiver input) under the drift scenario.
pub fn monte_carlo_pie(
    receiver: &ReceiverSpec,
    nbar: f64,
    drift: &DriftScenario,
    master_seed: u64,
) -> Result<PiePoint> {
    drift.validate()?;
    if drift.trials < 10_000 {
        return Err(Error::InsufficientData(format!(
            "need at least 1e4 trials, got {}",
            drift.trials
        )));
    }
    match receiver {
        ReceiverSpec::Gm {
            gm,
            detector,
            attenuation,
            backed_out,
        } => {
            if (gm.symbol_duration - drift.symbol_duration).abs() > 1e-15 {
                return Err(Error::invalid_argument(
                    "drift symbol duration must match the cascade's τ".to_string(),
                ));
            }
            let n = gm.codeword_length() as u64;
            let frames_per_codeword = (drift.trials / n / n).max(1);
            let pipeline = Pipeline {
                nbar_tx: nbar,
                channel: ChannelModel {
                    attenuation: *attenuation,
                    drift_rate_hz: drift.drift_rate_hz,
                    drift_phase0: 0.0,
                },
                gm: gm.clone(),
                detector: *detector,
            };
            gm_pie(&pipeline, frames_per_codeword, *backed_out, master_seed).map(|(p, _)| p)
        }
        ReceiverSpec::HomodyneSoft => soft_homodyne_pie(nbar, drift, master_seed),
        ReceiverSpec::HomodyneThresholdHadamard { order } => {
            threshold_homodyne_mc(nbar, *order, drift, master_seed).map(|(p, _)| p)
        }
        ReceiverSpec::HeterodyneBound {
            modulation_bandwidth_hz,
        } => heterodyne_upper_bound_pie(nbar, drift.drift_rate_hz, *modulation_bandwidth_hz),
        ReceiverSpec::Dolinar(config) => dolinar_pie_mc(nbar, config, drift, master_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn static_run(trials: u64, tau: f64) -> DriftScenario {
        DriftScenario {
            drift_rate_hz: 0.0,
            run_duration: trials as f64 * tau * 1.001,
            symbol_duration: tau,
            trials,
        }
    }

    #[test]
    fn homodyne_sample_statistics() {
        let mut rng = exec::item_rng(0, 0);
        let trials = 1_000_000;
        // a = 0: zero mean, variance 1/4.
        let samples: Vec<f64> = (0..trials)
            .map(|_| homodyne_sample(Complex64::new(0.0, 0.0), &mut rng))
            .collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / trials as f64;
        assert!(mean.abs() < 3.0 * 0.5 / (trials as f64).sqrt());
        assert_abs_diff_eq!(var, 0.25, epsilon = 0.002);
        // Signal rotated to the orthogonal quadrature has zero mean.
        let rotated = Complex64::from_polar(0.4, std::f64::consts::FRAC_PI_2);
        let mean_rot = (0..trials)
            .map(|_| homodyne_sample(rotated, &mut rng))
            .sum::<f64>()
            / trials as f64;
        assert!(mean_rot.abs() < 3.0 * 0.5 / (trials as f64).sqrt());
        // a = √0.01: mean 0.1.
        let mean_sig = (0..trials)
            .map(|_| homodyne_sample(Complex64::new(0.1, 0.0), &mut rng))
            .sum::<f64>()
            / trials as f64;
        assert!((mean_sig - 0.1).abs() < 3.0 * 0.5 / (trials as f64).sqrt());
    }

    #[test]
    fn soft_homodyne_reaches_small_nbar_ceiling() {
        // n̄ = 1e-3, no drift: PIE → 2·log₂e ≈ 2.885 within ±0.05. The MI per
        // symbol is ~3e-3 bits, so this needs a large sample.
        let nbar = 1e-3;
        let point = soft_homodyne_pie(nbar, &static_run(100_000_000, 20e-9), 7).unwrap();
        assert!(
            (point.pie - 2.0 * std::f64::consts::LOG2_E).abs() < 0.05,
            "pie = {} ± {}",
            point.pie,
            point.ci_halfwidth
        );
    }

    #[test]
    fn soft_homodyne_respects_gaussian_ceiling() {
        let nbar = 0.01;
        let point = soft_homodyne_pie(nbar, &static_run(4_000_000, 20e-9), 3).unwrap();
        let ceiling = infotheory::homodyne_pie(nbar);
        assert!(
            point.pie <= ceiling + point.ci_halfwidth + 0.02,
            "pie = {} vs ceiling {ceiling}",
            point.pie
        );
        assert!(point.pie > 0.8 * ceiling, "pie = {}", point.pie);
    }

    #[test]
    fn soft_homodyne_dies_at_intra_symbol_drift() {
        // One full drift cycle inside each symbol nulls the matched-filter
        // amplitude; a slightly incommensurate rate instead pools a uniform
        // phase mixture. Either way essentially no information survives.
        let tau = 20e-9;
        let static_point = soft_homodyne_pie(1e-2, &static_run(2_000_000, tau), 5).unwrap();
        for f in [1.0 / tau, 0.6180 / tau] {
            let drift = DriftScenario {
                drift_rate_hz: f,
                run_duration: 1.0,
                symbol_duration: tau,
                trials: 2_000_000,
            };
            let point = soft_homodyne_pie(1e-2, &drift, 5).unwrap();
            assert!(
                point.pie < 0.1 * static_point.pie,
                "f·τ = {}: drifted {} vs static {}",
                f * tau,
                point.pie,
                static_point.pie
            );
        }
    }

    #[test]
    fn threshold_decoder_exact_and_tie_break() {
        let h = HadamardMatrix::new(8).unwrap();
        for j in 1..=8 {
            let q: Vec<f64> = (1..=8).map(|k| h.entry(j, k) as f64 * 0.3).collect();
            assert_eq!(threshold_homodyne_hadamard_decode(&q, 8).unwrap(), j);
        }
        let zeros = vec![0.0; 8];
        assert_eq!(threshold_homodyne_hadamard_decode(&zeros, 8).unwrap(), 1);
    }

    /// Minimum distance N/2 gives a correction radius ⌊(N/2−1)/2⌋, which is
    /// zero at N = 4 (a single flip there can tie two codewords), so the
    /// exhaustive check starts at N = 8.
    #[test]
    fn threshold_decoder_corrects_all_single_flips() {
        for order in [8usize, 16] {
            let h = HadamardMatrix::new(order).unwrap();
            for j in 1..=order {
                for flip in 0..order {
                    let q: Vec<f64> = (1..=order)
                        .map(|k| {
                            let s = h.entry(j, k) as f64;
                            if k - 1 == flip {
                                -s
                            } else {
                                s
                            }
                        })
                        .collect();
                    assert_eq!(
                        threshold_homodyne_hadamard_decode(&q, order).unwrap(),
                        j,
                        "order {order}, codeword {j}, flip {flip}"
                    );
                }
            }
        }
    }

    #[test]
    fn dolinar_vacuum_is_a_coin_flip() {
        let config = DolinarConfig {
            sub_slots: 50,
            convention: HelstromConvention::Standard,
        };
        let (pe, sigma) = dolinar_error_probability(0.0, &config, 0.0, 100_000, 3).unwrap();
        assert!((pe - 0.5).abs() < 4.0 * sigma.max(1e-3), "P_e = {pe}");
    }

    #[test]
    fn dolinar_reaches_standard_helstrom() {
        let config = DolinarConfig {
            sub_slots: 1000,
            convention: HelstromConvention::Standard,
        };
        let (pe, _) = dolinar_error_probability(0.2, &config, 0.0, 300_000, 11).unwrap();
        let bound = infotheory::helstrom_pe(0.2, HelstromConvention::Standard);
        assert!(
            (pe - bound).abs() / bound < 0.05,
            "P_e = {pe} vs Helstrom {bound}"
        );
    }

    #[test]
    fn dolinar_paper_convention_scales_energy() {
        let config = DolinarConfig {
            sub_slots: 1000,
            convention: HelstromConvention::Paper,
        };
        let (pe, _) = dolinar_error_probability(0.8, &config, 0.0, 300_000, 13).unwrap();
        let bound = infotheory::helstrom_pe(0.8, HelstromConvention::Paper);
        assert!(
            (pe - bound).abs() / bound < 0.05,
            "P_e = {pe} vs paper-convention bound {bound}"
        );
    }

    #[test]
    fn dolinar_pi_offset_swaps_hypotheses() {
        let config = DolinarConfig {
            sub_slots: 400,
            convention: HelstromConvention::Standard,
        };
        let (pe0, _) = dolinar_error_probability(2.0, &config, 0.0, 50_000, 17).unwrap();
        let (pepi, _) =
            dolinar_error_probability(2.0, &config, std::f64::consts::PI, 50_000, 17).unwrap();
        assert!(pe0 < 0.01, "P_e(0) = {pe0}");
        assert!(pepi > 0.99, "P_e(π) = {pepi}");
        assert_abs_diff_eq!(pe0 + pepi, 1.0, epsilon = 0.02);
    }

    #[test]
    fn dolinar_quasi_static_pie_matches_formula() {
        // f = 1 Hz over a short run is effectively static: PIE within ±0.1
        // of the analytic Helstrom-limited value.
        let nbar = 1e-3;
        let tau = 20e-9;
        let drift = DriftScenario {
            drift_rate_hz: 1.0,
            run_duration: 0.05,
            symbol_duration: tau,
            trials: 2_000_000,
        };
        let config = DolinarConfig {
            sub_slots: 200,
            convention: HelstromConvention::Standard,
        };
        let point = dolinar_pie_mc(nbar, &config, &drift, 19).unwrap();
        let expect = infotheory::dolinar_pie(nbar, HelstromConvention::Standard);
        assert!(
            (point.pie - expect).abs() < 0.1,
            "pie = {} vs {expect}",
            point.pie
        );
    }

    /// PIE is statistically non-increasing in the drift rate for every
    /// simulated receiver (within the summed confidence intervals of
    /// neighboring grid points).
    #[test]
    fn pie_non_increasing_in_drift_rate() {
        let tau = 20e-9;
        let rates = [0.0, 1e2, 1e3, 1e4, 1e6];
        let scenario = |f: f64| DriftScenario {
            drift_rate_hz: f,
            run_duration: 1.0,
            symbol_duration: tau,
            trials: 400_000,
        };
        let dolinar = DolinarConfig {
            sub_slots: 100,
            convention: HelstromConvention::Standard,
        };
        let curves: Vec<(&str, Vec<PiePoint>)> = vec![
            (
                "homodyne-soft",
                rates
                    .iter()
                    .map(|&f| soft_homodyne_pie(0.05, &scenario(f), 61).unwrap())
                    .collect(),
            ),
            (
                "homodyne-threshold-hadamard",
                rates
                    .iter()
                    .map(|&f| threshold_homodyne_mc(0.05, 8, &scenario(f), 62).unwrap().0)
                    .collect(),
            ),
            (
                "dolinar",
                rates
                    .iter()
                    .map(|&f| dolinar_pie_mc(0.05, &dolinar, &scenario(f), 63).unwrap())
                    .collect(),
            ),
            (
                "heterodyne-bound",
                rates
                    .iter()
                    .map(|&f| heterodyne_upper_bound_pie(0.05, f, 1.0 / tau).unwrap())
                    .collect(),
            ),
        ];
        for (name, curve) in curves {
            for pair in curve.windows(2) {
                let slack = pair[0].ci_halfwidth + pair[1].ci_halfwidth + 1e-9;
                assert!(
                    pair[1].pie <= pair[0].pie + slack,
                    "{name}: PIE rose from {} to {} between f={} and f={}",
                    pair[0].pie,
                    pair[1].pie,
                    pair[0].drift_rate_hz,
                    pair[1].drift_rate_hz
                );
            }
        }
    }

    #[test]
    fn heterodyne_bound_values() {
        let p = heterodyne_upper_bound_pie(0.0075, 1e5, 5e7).unwrap();
        assert_abs_diff_eq!(p.pie, 1.4320, epsilon = 1e-3);
        let zero = heterodyne_upper_bound_pie(0.0075, 5e7, 5e7).unwrap();
        assert_eq!(zero.pie, 0.0);
        let limit = heterodyne_upper_bound_pie(1e-9, 0.0, 5e7).unwrap();
        assert_abs_diff_eq!(limit.pie, std::f64::consts::LOG2_E, epsilon = 1e-6);
    }

    #[test]
    fn monte_carlo_pie_dispatch_and_determinism() {
        let drift = static_run(20_000, 20e-9);
        let spec = ReceiverSpec::HomodyneThresholdHadamard { order: 8 };
        let a = monte_carlo_pie(&spec, 0.05, &drift, 23).unwrap();
        let b = exec::force_sequential(|| monte_carlo_pie(&spec, 0.05, &drift, 23).unwrap());
        assert_eq!(a, b);
        assert!(a.pie > 0.0);
        assert!(monte_carlo_pie(&spec, 0.05, &static_run(5_000, 20e-9), 1).is_err());
        assert!(ReceiverKind::parse("gm").is_ok());
        assert!(ReceiverKind::parse("nonsense").is_err());
    }

    #[test]
    fn gm_pie_backed_out_matches_closed_form() {
        let pipeline = Pipeline {
            nbar_tx: 2e-3 / 0.85,
            channel: ChannelModel::lossless_static(),
            gm: GreenMachineConfig::ideal(3, 20e-9).unwrap(),
            detector: DetectorModel {
                efficiency: 0.85,
                dark_per_symbol: 0.0,
                dead_time: 2e-9,
                guard_band: 10e-9,
                guarded_symbol: 10e-9,
            },
        };
        let (point, _) = gm_pie(&pipeline, 50_000, true, 29).unwrap();
        // Backed out, the detected n̄ is ~2e-3 and the PIE should sit at the
        // ideal Hadamard/PPM value for that n̄.
        assert_abs_diff_eq!(point.nbar, 2e-3, epsilon = 2e-4);
        let expect = infotheory::gm_ppm_pie(point.nbar, 8).unwrap();
        assert!(
            (point.pie - expect).abs() < 0.08,
            "pie {} vs {expect}",
            point.pie
        );
    }
}
