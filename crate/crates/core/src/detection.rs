//! Photon-click detection: stochastic frame outcomes with detector
//! imperfections, outcome tallies, and transition-matrix / mean-photon
//! estimation.
//!
//! Detectors are on/off (no photon-number resolution). A slot with detected
//! energy E clicks with probability 1 − exp(−η·E − dark), dark counts enter
//! as an expected noise count per guarded symbol, and guard-band clicks are
//! drawn from the same noise rate over the guard intervals. Every frame is
//! classified from its surviving click records: no clicks → erasure, a
//! guard-band-only click → erasure (folded), exactly one slot click → that
//! slot, two or more clicks → discarded as invalid.
//!
//! All timing arithmetic runs on integer picoseconds so framing never
//! accumulates float drift.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::codebook::bpsk_hadamard_codeword;
use crate::exec;
use crate::optics::{
    apply_channel, transform_in_place, ChannelModel, DualRailState, GreenMachineConfig,
};
use crate::{Error, Result};

pub mod events;

pub use events::{decode_event_stream, generate_event_stream, DecodeReport, EventRecord, EventStream};

/// Single-photon detector and framing imperfections. Times are seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorModel {
    /// Detection efficiency η_d in [0, 1].
    pub efficiency: f64,
    /// Expected noise counts per guarded symbol (dark + ambient).
    pub dark_per_symbol: f64,
    /// Detector dead time.
    pub dead_time: f64,
    /// Guard band between PPM symbols.
    pub guard_band: f64,
    /// Guarded symbol length (the window that counts as the slot).
    pub guarded_symbol: f64,
}

impl DetectorModel {
    /// Perfect detector: unit efficiency, no noise, the whole bin guarded.
    pub fn ideal(tau: f64) -> Self {
        DetectorModel {
            efficiency: 1.0,
            dark_per_symbol: 0.0,
            dead_time: 0.0,
            guard_band: 0.0,
            guarded_symbol: tau,
        }
    }

    pub fn validate(&self, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid_argument(format!(
                "detector efficiency must be in [0, 1], got {}",
                self.efficiency
            )));
        }
        if self.dark_per_symbol < 0.0 || self.dead_time < 0.0 || self.guard_band < 0.0 {
            return Err(Error::invalid_argument(
                "detector times and rates must be non-negative".to_string(),
            ));
        }
        if !(self.guarded_symbol > 0.0) {
            return Err(Error::invalid_argument(
                "guarded symbol length must be positive".to_string(),
            ));
        }
        if self.guarded_symbol + self.guard_band > tau * (1.0 + 1e-9) {
            return Err(Error::invalid_argument(format!(
                "guarded symbol {} + guard band {} exceed the bin duration {tau}",
                self.guarded_symbol, self.guard_band
            )));
        }
        Ok(())
    }
}

/// Outcome of one codeword frame. Slot indices are 1-based physical PPM
/// slots. Guard-band-only clicks are kept distinct here and folded into the
/// erasure column when tallied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameOutcome {
    Erasure,
    GuardClick,
    Slot(usize),
    DiscardedMultiClick,
}

/// Integer-picosecond framing geometry shared by the click generator and the
/// event-stream decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameFraming {
    pub n: usize,
    pub tau_ps: i64,
    /// Guarded window length in ps; the window is centered in the bin.
    pub guarded_ps: i64,
    pub dead_time_ps: i64,
}

impl FrameFraming {
    pub fn new(n: usize, tau: f64, detector: &DetectorModel) -> Result<Self> {
        detector.validate(tau)?;
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::invalid_argument(format!(
                "frame length must be a power of two >= 2, got {n}"
            )));
        }
        let tau_ps = seconds_to_ps(tau)?;
        let guarded_ps = seconds_to_ps(detector.guarded_symbol)?.min(tau_ps);
        let dead_time_ps = seconds_to_ps(detector.dead_time)?;
        Ok(FrameFraming {
            n,
            tau_ps,
            guarded_ps,
            dead_time_ps,
        })
    }

    pub fn frame_ps(&self) -> i64 {
        self.n as i64 * self.tau_ps
    }

    /// Center timestamp of a 1-based slot, as an offset from frame start.
    pub fn slot_center_ps(&self, slot: usize) -> i64 {
        (slot as i64 - 1) * self.tau_ps + self.tau_ps / 2
    }

    /// Classify an in-frame offset: Some(slot) when inside a guarded window,
    /// None for the guard band.
    pub fn slot_of_offset(&self, offset_ps: i64) -> Option<usize> {
        let bin = offset_ps.div_euclid(self.tau_ps);
        if bin < 0 || bin >= self.n as i64 {
            return None;
        }
        let within = offset_ps - bin * self.tau_ps;
        let lo = (self.tau_ps - self.guarded_ps) / 2;
        if within >= lo && within < lo + self.guarded_ps {
            Some(bin as usize + 1)
        } else {
            None
        }
    }
}

fn seconds_to_ps(t: f64) -> Result<i64> {
    let ps = t * 1e12;
    if !(0.0..=9e18).contains(&ps) {
        return Err(Error::invalid_argument(format!(
            "time {t} s out of picosecond range"
        )));
    }
    let rounded = ps.round();
    if (ps - rounded).abs() > 1e-3 {
        return Err(Error::invalid_argument(format!(
            "time {t} s is not an integer number of picoseconds"
        )));
    }
    Ok(rounded as i64)
}

/// A candidate click within one frame, before dead-time filtering.
/// `channel` is 1 for the upper-rail detector, 2 for the lower-rail one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Click {
    pub channel: u8,
    pub offset_ps: i64,
}

/// Non-paralyzable dead-time filter: a click is kept when at least
/// `dead_time_ps` has elapsed since the last kept click on the same detector
/// channel. The filter state resets at each frame boundary, so the first
/// record of a frame is always kept. Clicks must be time-sorted.
pub(crate) fn dead_time_filter(clicks: &mut Vec<Click>, dead_time_ps: i64) {
    if dead_time_ps <= 0 {
        return;
    }
    let mut last: [Option<i64>; 3] = [None; 3];
    clicks.retain(|c| {
        let slot = &mut last[c.channel as usize];
        match *slot {
            Some(prev) if c.offset_ps - prev < dead_time_ps => false,
            _ => {
                *slot = Some(c.offset_ps);
                true
            }
        }
    });
}

/// Classify the surviving clicks of one frame.
pub(crate) fn classify_clicks(clicks: &[Click], framing: &FrameFraming) -> FrameOutcome {
    match clicks.len() {
        0 => FrameOutcome::Erasure,
        1 => match framing.slot_of_offset(clicks[0].offset_ps) {
            Some(slot) => FrameOutcome::Slot(slot),
            None => FrameOutcome::GuardClick,
        },
        _ => FrameOutcome::DiscardedMultiClick,
    }
}

/// Detector channel (1 = upper, 2 = lower) for a 1-based slot.
pub(crate) fn slot_channel(slot: usize) -> u8 {
    if DualRailState::slot_is_upper(slot) {
        1
    } else {
        2
    }
}

/// Sample the candidate clicks of one frame from per-slot detected energies.
/// Draw order is fixed (slots, guard count, guard positions) so outcomes are
/// a pure function of the RNG stream.
pub(crate) fn sample_clicks<R: Rng>(
    slot_energies: &[f64],
    detector: &DetectorModel,
    framing: &FrameFraming,
    rng: &mut R,
    out: &mut Vec<Click>,
) {
    out.clear();
    for (idx, &energy) in slot_energies.iter().enumerate() {
        let exponent = detector.efficiency * energy + detector.dark_per_symbol;
        let p = -(-exponent).exp_m1();
        if rng.random::<f64>() < p {
            let slot = idx + 1;
            out.push(Click {
                channel: slot_channel(slot),
                offset_ps: framing.slot_center_ps(slot),
            });
        }
    }
    // Guard-band noise: the per-guarded-symbol rate scaled to the guard
    // intervals of the whole frame.
    if detector.dark_per_symbol > 0.0 && detector.guard_band > 0.0 {
        let lambda =
            detector.dark_per_symbol / detector.guarded_symbol * detector.guard_band * framing.n as f64;
        let count = Poisson::new(lambda).map(|d| d.sample(rng) as u64).unwrap_or(0);
        let gap = framing.tau_ps - framing.guarded_ps;
        if gap > 0 {
            for _ in 0..count {
                let bin = rng.random_range(0..framing.n as i64);
                let u = rng.random_range(0..gap);
                // Guard region is the bin minus the centered guarded window.
                let lo = (framing.tau_ps - framing.guarded_ps) / 2;
                let within = if u < lo { u } else { u + framing.guarded_ps };
                let channel = if rng.random::<f64>() < 0.5 { 1 } else { 2 };
                out.push(Click {
                    channel,
                    offset_ps: bin * framing.tau_ps + within,
                });
            }
        }
    }
    out.sort_by_key(|c| (c.offset_ps, c.channel));
}

/// Sample one frame outcome from a transformed dual-rail state.
pub fn sample_frame<R: Rng>(
    state: &DualRailState,
    detector: &DetectorModel,
    framing: &FrameFraming,
    rng: &mut R,
) -> FrameOutcome {
    let mut clicks = Vec::new();
    sample_clicks(&state.slot_energies(), detector, framing, rng, &mut clicks);
    dead_time_filter(&mut clicks, framing.dead_time_ps);
    classify_clicks(&clicks, framing)
}

/// Outcome tallies per transmitted codeword. `valid` rows hold column 0 =
/// erasure (guard-band clicks folded in) and columns 1..=N the slots;
/// multi-click frames are tallied separately and excluded from the
/// transition matrix entirely.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameTallies {
    pub n: usize,
    pub valid: Vec<Vec<u64>>,
    pub discarded: Vec<u64>,
    pub guard_folded: Vec<u64>,
}

impl FrameTallies {
    pub fn new(n: usize) -> Self {
        FrameTallies {
            n,
            valid: vec![vec![0; n + 1]; n],
            discarded: vec![0; n],
            guard_folded: vec![0; n],
        }
    }

    /// Record one frame outcome for 1-based codeword j.
    pub fn record(&mut self, j: usize, outcome: FrameOutcome) {
        let row = j - 1;
        match outcome {
            FrameOutcome::Erasure => self.valid[row][0] += 1,
            FrameOutcome::GuardClick => {
                self.valid[row][0] += 1;
                self.guard_folded[row] += 1;
            }
            FrameOutcome::Slot(s) => self.valid[row][s] += 1,
            FrameOutcome::DiscardedMultiClick => self.discarded[row] += 1,
        }
    }

    pub fn merge(mut self, other: FrameTallies) -> FrameTallies {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.valid.iter_mut().zip(other.valid) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.discarded.iter_mut().zip(other.discarded) {
            *x += y;
        }
        for (x, y) in self.guard_folded.iter_mut().zip(other.guard_folded) {
            *x += y;
        }
        self
    }

    pub fn valid_frames(&self, j: usize) -> u64 {
        self.valid[j - 1].iter().sum()
    }
}

/// Row-stochastic N×(N+1) transition matrix estimated from tallies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    pub n: usize,
    /// Probabilities; column 0 is the erasure outcome.
    pub probs: Vec<Vec<f64>>,
    /// The raw tallies behind each row.
    pub counts: Vec<Vec<u64>>,
    /// Multi-click frames excluded from the normalization.
    pub discarded: Vec<u64>,
}

/// Normalize tallies row by row over valid (non-discarded) frames.
pub fn estimate_transition_matrix(tallies: &FrameTallies) -> Result<TransitionMatrix> {
    let mut probs = Vec::with_capacity(tallies.n);
    for (row, counts) in tallies.valid.iter().enumerate() {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientData(format!(
                "codeword {} has no valid frames",
                row + 1
            )));
        }
        probs.push(counts.iter().map(|&c| c as f64 / total as f64).collect());
    }
    Ok(TransitionMatrix {
        n: tallies.n,
        probs,
        counts: tallies.valid.clone(),
        discarded: tallies.discarded.clone(),
    })
}

/// Mean photon number per symbol from the erasure column, assuming Poisson
/// statistics and equal priors: n̄ = −Σⱼ ln(P_{j0}) / N².
pub fn estimate_mean_photon(tm: &TransitionMatrix) -> Result<f64> {
    let mut acc = 0.0;
    for (j, row) in tm.probs.iter().enumerate() {
        let p0 = row[0];
        if p0 <= 0.0 {
            return Err(Error::UndefinedEstimate(format!(
                "codeword {} has zero erasure probability",
                j + 1
            )));
        }
        acc -= p0.ln();
    }
    Ok(acc / (tm.n as f64 * tm.n as f64))
}

/// The simulated receive chain: transmitter mean photon number per symbol,
/// channel, cascade, and detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub nbar_tx: f64,
    pub channel: ChannelModel,
    pub gm: GreenMachineConfig,
    pub detector: DetectorModel,
}

impl Pipeline {
    pub fn framing(&self) -> Result<FrameFraming> {
        FrameFraming::new(
            self.gm.codeword_length(),
            self.gm.symbol_duration,
            &self.detector,
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.nbar_tx >= 0.0) {
            return Err(Error::invalid_argument(
                "transmit photon number must be non-negative".to_string(),
            ));
        }
        self.framing()?;
        Ok(())
    }

    /// Per-slot detected energies for codeword j in the frame starting at
    /// `frame_start` seconds.
    pub fn slot_energies(&self, j: usize, frame_start: f64) -> Result<Vec<f64>> {
        let n = self.gm.codeword_length();
        let alpha = Complex64::new(self.nbar_tx.sqrt(), 0.0);
        let mut cw = bpsk_hadamard_codeword(j, n, alpha, self.gm.symbol_duration)?;
        cw.frame_start = frame_start;
        let cw = apply_channel(&cw, &self.channel)?;
        let mut state = DualRailState::from_codeword(&cw);
        let mut scratch = DualRailState::zeros(n);
        transform_in_place(&mut state, &mut scratch, &self.gm)?;
        Ok(state.slot_energies())
    }
}

/// Monte Carlo tallies of the full pipeline: each codeword is transmitted in
/// a contiguous block of `frames_per_codeword` frames (the codewords are
/// dialed through in order, matching the experimental procedure), with the
/// channel drift phase advancing over the concatenated timeline. Frame i of
/// codeword j uses RNG stream (j−1)·F + i, so results do not depend on the
/// thread count.
pub fn run_gm_tallies(
    pipeline: &Pipeline,
    frames_per_codeword: u64,
    master_seed: u64,
) -> Result<FrameTallies> {
    pipeline.validate()?;
    let n = pipeline.gm.codeword_length();
    let framing = pipeline.framing()?;
    let frame_dur = pipeline.gm.frame_duration();
    let total = frames_per_codeword * n as u64;

    let static_channel = pipeline.channel.drift_rate_hz == 0.0;
    let static_energies: Option<Vec<Vec<f64>>> = if static_channel {
        Some(
            (1..=n)
                .map(|j| pipeline.slot_energies(j, 0.0))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let batch = 4096.min(frames_per_codeword.max(1));
    let tallies = exec::batched_fold(
        total,
        batch,
        |start, end| {
            let mut acc = FrameTallies::new(n);
            let mut clicks = Vec::new();
            for global in start..end {
                let j = (global / frames_per_codeword) as usize + 1;
                let mut rng = exec::item_rng(master_seed, global);
                let energies_owned;
                let energies: &[f64] = match &static_energies {
                    Some(all) => &all[j - 1],
                    None => {
                        let frame_start = global as f64 * frame_dur;
                        energies_owned = pipeline
                            .slot_energies(j, frame_start)
                            .expect("validated pipeline");
                        &energies_owned
                    }
                };
                sample_clicks(energies, &pipeline.detector, &framing, &mut rng, &mut clicks);
                dead_time_filter(&mut clicks, framing.dead_time_ps);
                acc.record(j, classify_clicks(&clicks, &framing));
            }
            acc
        },
        FrameTallies::merge,
    );
    tallies.ok_or_else(|| Error::InsufficientData("zero frames requested".to_string()))
}
