//! Interspersed phase correction: per-stage monitor scans, sine fitting, and
//! sequential compensation.
//!
//! A bright constant-phase probe frame is sent through the cascade while the
//! stage under correction has a scan phase added to its interferometer. A 1%
//! tap on the stage's sum arm reads the interference envelope, the trace is
//! fitted by a sine, and the compensation is set so the stage lands on the
//! chosen extremum (maximum or minimum of the monitored arm). Stages are
//! corrected in order, first stage first; each scan sees the stages before
//! it already compensated.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::bpsk_hadamard_codeword;
use crate::exec;
use crate::optics::{partial_transform, GreenMachineConfig};
use crate::{Error, Result};

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Fraction of the monitored arm's power diverted to the monitor detector.
pub const MONITOR_TAP: f64 = 0.01;

/// Fitted sinusoid: value = offset + amplitude·sin(scan_phase + phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SineFit {
    /// Non-negative, monitor units.
    pub amplitude: f64,
    /// Normalized to [0, 2π).
    pub phase: f64,
    pub offset: f64,
}

/// Least-squares sine fit via linearization y = a·sinθ + b·cosθ + c.
/// Exact for noiseless data; amplitude = √(a²+b²), phase = atan2(b, a).
pub fn fit_sine(samples: &[(f64, f64)]) -> Result<SineFit> {
    if samples.len() < 4 {
        return Err(Error::invalid_argument(format!(
            "sine fit needs at least 4 samples, got {}",
            samples.len()
        )));
    }
    // Normal equations for the 3-parameter linear model.
    let mut m = [[0.0f64; 3]; 3];
    let mut v = [0.0f64; 3];
    for &(theta, y) in samples {
        let basis = [theta.sin(), theta.cos(), 1.0];
        for i in 0..3 {
            v[i] += basis[i] * y;
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-9 * samples.len() as f64 {
        return Err(Error::FitFailed(
            "scan phases are rank deficient (need samples spanning a period)".to_string(),
        ));
    }
    let solve = |col: usize| {
        let mut mm = m;
        for r in 0..3 {
            mm[r][col] = v[r];
        }
        (mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1])
            - mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0])
            + mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0]))
            / det
    };
    let (a, b, c) = (solve(0), solve(1), solve(2));
    let amplitude = a.hypot(b);
    let phase = b.atan2(a).rem_euclid(TAU);
    Ok(SineFit {
        amplitude,
        phase,
        offset: c,
    })
}

/// Scan settings for one correction pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    /// Samples per 2π scan (≥ 8).
    pub scan_points: usize,
    /// Relative (multiplicative) Gaussian noise on the monitor reading.
    pub monitor_noise_sigma: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            scan_points: 64,
            monitor_noise_sigma: 0.01,
        }
    }
}

/// Which interference extremum a stage is compensated to. Both choices zero
/// the crosstalk; they differ only in the resulting codeword→slot mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extremum {
    Max,
    Min,
}

/// Synthetic standalone monitor trace: one full 2π period of
/// offset + amplitude·sin(scan_phase + true_stage_phase), with relative
/// Gaussian noise.
pub fn simulate_phase_scan<R: Rng>(
    true_stage_phase: f64,
    amplitude: f64,
    offset: f64,
    settings: &ScanSettings,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    if settings.scan_points < 8 {
        return Err(Error::invalid_argument(format!(
            "scan needs at least 8 points, got {}",
            settings.scan_points
        )));
    }
    Ok((0..settings.scan_points)
        .map(|i| {
            let theta = TAU * i as f64 / settings.scan_points as f64;
            let mean = offset + amplitude * (theta + true_stage_phase).sin();
            let noise: f64 = rng.sample(StandardNormal);
            (theta, mean * (1.0 + settings.monitor_noise_sigma * noise))
        })
        .collect())
}

/// Monitor reading for one scan sample: the probe frame is pushed through
/// the cascade up to and including `stage` (0-based) with `scan_phase` added
/// to that stage's interferometer, and the tapped power of the sum arm
/// (upper rail) is returned.
fn monitor_reading(
    config: &GreenMachineConfig,
    stage: usize,
    scan_phase: f64,
) -> Result<f64> {
    let n = config.codeword_length();
    let probe = bpsk_hadamard_codeword(1, n, Complex64::new(1.0, 0.0), config.symbol_duration)?;
    let mut scanned = config.clone();
    scanned.stages_mut()[stage].phase_error += scan_phase;
    let state = partial_transform(&probe, &scanned, stage + 1)?;
    Ok(MONITOR_TAP * state.upper.iter().map(|a| a.norm_sqr()).sum::<f64>())
}

/// Result of one sequential correction pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    /// Config with per-stage compensations applied.
    pub corrected: GreenMachineConfig,
    /// Absolute residual phase error per stage, measured from the chosen
    /// extremum, radians.
    pub residuals: Vec<f64>,
    /// The per-stage monitor fits.
    pub fits: Vec<SineFit>,
}

fn wrap_to_pi(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Scan, fit, and compensate every stage in order (first stage first). Later
/// stages are scanned with the earlier ones already compensated. `extrema`
/// picks the compensation point per stage; residuals are distances from the
/// chosen extremum.
pub fn correct_stages_sequential(
    gm: &GreenMachineConfig,
    settings: &ScanSettings,
    extrema: &[Extremum],
    master_seed: u64,
) -> Result<CalibrationOutcome> {
    if settings.scan_points < 8 {
        return Err(Error::invalid_argument(format!(
            "scan needs at least 8 points, got {}",
            settings.scan_points
        )));
    }
    if extrema.len() != gm.num_stages() {
        return Err(Error::invalid_argument(format!(
            "{} extremum choices for {} stages",
            extrema.len(),
            gm.num_stages()
        )));
    }
    let mut corrected = gm.clone();
    let mut residuals = Vec::with_capacity(gm.num_stages());
    let mut fits = Vec::with_capacity(gm.num_stages());

    for (stage, &extremum) in extrema.iter().enumerate() {
        let mut rng = exec::item_rng(master_seed, stage as u64);
        let mut samples = Vec::with_capacity(settings.scan_points);
        for i in 0..settings.scan_points {
            let theta = TAU * i as f64 / settings.scan_points as f64;
            let mean = monitor_reading(&corrected, stage, theta)?;
            let noise: f64 = rng.sample(StandardNormal);
            samples.push((theta, mean * (1.0 + settings.monitor_noise_sigma * noise)));
        }
        let fit = fit_sine(&samples)
            .map_err(|e| Error::FitFailed(format!("stage {}: {e}", stage + 1)))?;
        // The sum-arm power is offset + A·cos(ε + θ) = offset + A·sin(θ + ε + π/2),
        // so the fitted phase is ε + π/2.
        let estimated_error = fit.phase - FRAC_PI_2;
        let target = match extremum {
            Extremum::Max => 0.0,
            Extremum::Min => PI,
        };
        let compensation = target - estimated_error;
        corrected.stages_mut()[stage].phase_error += compensation;
        residuals.push(wrap_to_pi(corrected.stages()[stage].phase_error - target).abs());
        fits.push(fit);
    }
    Ok(CalibrationOutcome {
        corrected,
        residuals,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{crosstalk_fraction, slot_permutation};
    use approx::assert_abs_diff_eq;

    fn noiseless() -> ScanSettings {
        ScanSettings {
            scan_points: 64,
            monitor_noise_sigma: 0.0,
        }
    }

    fn random_error_config(seed: u64, stages: usize) -> GreenMachineConfig {
        let mut rng = exec::item_rng(seed, 1_000);
        let mut gm = GreenMachineConfig::ideal(stages, 20e-9).unwrap();
        for stage in gm.stages_mut() {
            stage.phase_error = PI * (2.0 * rng.random::<f64>() - 1.0);
        }
        gm
    }

    #[test]
    fn sine_fit_recovers_noiseless_parameters() {
        let mut rng = exec::item_rng(0, 0);
        let samples =
            simulate_phase_scan(0.3, 0.4, 0.5, &noiseless(), &mut rng).unwrap();
        let fit = fit_sine(&samples).unwrap();
        assert_abs_diff_eq!(fit.amplitude, 0.4, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.phase, 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.offset, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn sine_fit_exact_at_eight_points() {
        let settings = ScanSettings {
            scan_points: 8,
            monitor_noise_sigma: 0.0,
        };
        let mut rng = exec::item_rng(0, 1);
        let samples = simulate_phase_scan(1.9, 0.25, 1.0, &settings, &mut rng).unwrap();
        let fit = fit_sine(&samples).unwrap();
        assert_abs_diff_eq!(fit.amplitude, 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.phase, 1.9, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.offset, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_samples_yield_zero_amplitude() {
        let samples: Vec<(f64, f64)> = (0..16)
            .map(|i| (TAU * i as f64 / 16.0, 0.7))
            .collect();
        let fit = fit_sine(&samples).unwrap();
        assert_abs_diff_eq!(fit.amplitude, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.offset, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_scan_phases_fail() {
        let samples = vec![(0.1, 1.0), (0.1, 1.1), (0.1, 0.9), (0.1, 1.0), (0.1, 1.0)];
        assert!(matches!(fit_sine(&samples), Err(Error::FitFailed(_))));
    }

    #[test]
    fn noisy_sine_fit_phase_error_small() {
        let settings = ScanSettings {
            scan_points: 100,
            monitor_noise_sigma: 0.01,
        };
        for seed in 0..100 {
            let mut rng = exec::item_rng(seed, 2);
            let samples = simulate_phase_scan(2.2, 0.4, 0.5, &settings, &mut rng).unwrap();
            let fit = fit_sine(&samples).unwrap();
            assert!(
                (fit.phase - 2.2).abs() < 0.02,
                "seed {seed}: phase {}",
                fit.phase
            );
        }
    }

    #[test]
    fn zero_error_config_is_a_noop() {
        let gm = GreenMachineConfig::ideal(3, 20e-9).unwrap();
        let out =
            correct_stages_sequential(&gm, &noiseless(), &[Extremum::Max; 3], 0).unwrap();
        for r in &out.residuals {
            assert!(*r < 1e-10, "residuals {:?}", out.residuals);
        }
    }

    #[test]
    fn sequential_pass_zeroes_random_errors() {
        for seed in 0..20 {
            let gm = random_error_config(seed, 3);
            let out =
                correct_stages_sequential(&gm, &noiseless(), &[Extremum::Max; 3], seed).unwrap();
            for (k, r) in out.residuals.iter().enumerate() {
                assert!(*r < 1e-8, "seed {seed} stage {k}: residual {r}");
            }
            assert!(crosstalk_fraction(&out.corrected).unwrap() < 1e-12);
        }
    }

    #[test]
    fn monitor_trace_is_pure_sinusoid_with_earlier_stages_corrected() {
        let gm = random_error_config(5, 3);
        // Correct stage 1, then check stage 2's trace fits a sine exactly.
        let out = correct_stages_sequential(
            &GreenMachineConfig::new(gm.stages()[..1].to_vec(), 20e-9).unwrap_or(gm.clone()),
            &noiseless(),
            &[Extremum::Max],
            3,
        );
        // Simpler: run the full corrected pass and inspect per-stage scans by
        // reconstructing them.
        drop(out);
        let pass = correct_stages_sequential(&gm, &noiseless(), &[Extremum::Max; 3], 3).unwrap();
        for stage in 0..3 {
            let mut cfg = pass.corrected.clone();
            // Restore this stage's pre-correction error while keeping earlier
            // stages corrected; later stages do not affect the tap.
            cfg.stages_mut()[stage].phase_error = gm.stages()[stage].phase_error;
            let samples: Vec<(f64, f64)> = (0..48)
                .map(|i| {
                    let theta = TAU * i as f64 / 48.0;
                    (theta, monitor_reading(&cfg, stage, theta).unwrap())
                })
                .collect();
            let fit = fit_sine(&samples).unwrap();
            let rss: f64 = samples
                .iter()
                .map(|&(t, y)| {
                    let d = y - (fit.offset + fit.amplitude * (t + fit.phase).sin());
                    d * d
                })
                .sum();
            assert!(rss < 1e-18, "stage {stage}: residual {rss}");
            assert!(fit.amplitude > 1e-3, "stage {stage}: no visibility");
        }
    }

    /// The coherent model makes the per-stage scans exactly orthogonal (the
    /// scan phase of stage k is common to both members of every earlier
    /// stage's interfering pair), so a pass in any order converges. The
    /// experiment's in-order rule is still what `correct_stages_sequential`
    /// implements; this documents the model's insensitivity to it.
    #[test]
    fn correction_is_order_insensitive_in_the_coherent_model() {
        let gm = random_error_config(9, 3);
        // "Wrong" order: correct stage 2 first by freezing stages as they
        // are, correcting only stage 2, then running the normal pass.
        let mut partial = gm.clone();
        {
            let mut rng = exec::item_rng(17, 0);
            let mut samples = Vec::new();
            for i in 0..64 {
                let theta = TAU * i as f64 / 64.0;
                let mean = monitor_reading(&partial, 1, theta).unwrap();
                let noise: f64 = rng.sample(StandardNormal);
                samples.push((theta, mean * (1.0 + 0.0 * noise)));
            }
            let fit = fit_sine(&samples).unwrap();
            partial.stages_mut()[1].phase_error += -(fit.phase - FRAC_PI_2);
        }
        // Stage 2 is already at its extremum even though stage 1 never was.
        assert!(
            wrap_to_pi(partial.stages()[1].phase_error).abs() < 1e-8,
            "stage 2 residual {}",
            wrap_to_pi(partial.stages()[1].phase_error).abs()
        );
    }

    #[test]
    fn extremum_choice_changes_only_the_permutation() {
        let gm = random_error_config(11, 3);
        let all_max =
            correct_stages_sequential(&gm, &noiseless(), &[Extremum::Max; 3], 1).unwrap();
        let mixed = correct_stages_sequential(
            &gm,
            &noiseless(),
            &[Extremum::Max, Extremum::Min, Extremum::Max],
            1,
        )
        .unwrap();
        let ct_max = crosstalk_fraction(&all_max.corrected).unwrap();
        let ct_mixed = crosstalk_fraction(&mixed.corrected).unwrap();
        assert!(ct_max < 1e-12 && ct_mixed < 1e-12, "{ct_max} {ct_mixed}");
        let sigma_max = slot_permutation(&all_max.corrected).unwrap();
        let sigma_mixed = slot_permutation(&mixed.corrected).unwrap();
        assert_ne!(sigma_max, sigma_mixed);
        let mut sorted = sigma_mixed.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn noisy_monitor_crosstalk_stays_below_one_percent() {
        let settings = ScanSettings {
            scan_points: 64,
            monitor_noise_sigma: 0.01,
        };
        for seed in 0..25 {
            let gm = random_error_config(seed + 100, 3);
            let out =
                correct_stages_sequential(&gm, &settings, &[Extremum::Max; 3], seed).unwrap();
            let ct = crosstalk_fraction(&out.corrected).unwrap();
            assert!(ct < 0.01, "seed {seed}: crosstalk {ct}");
        }
    }
}
