//! Time-tagged event streams: generation from the simulated pipeline,
//! bit-exact CSV round-tripping, and decoding back into outcome tallies.
//!
//! On-disk format: CSV with header `channel,time_ps`; channel 0 is the
//! synchronization clock, 1 the upper-rail detector, 2 the lower-rail
//! detector; rows are time-sorted and timestamps are integer picoseconds.
//!
//! Framing rule: every clock record starts a frame spanning N·τ. The decoder
//! attributes each frame to its scheduled codeword; frames missing from the
//! stream (fewer clocks than scheduled, e.g. a truncated acquisition) are
//! dropped and reported, as are records falling outside any frame window.

use std::io::Write;

use crate::exec;
use crate::{Error, Result};

use super::{
    classify_clicks, dead_time_filter, sample_clicks, Click, FrameFraming, FrameTallies, Pipeline,
};

pub const CHANNEL_CLOCK: u8 = 0;
pub const CHANNEL_DET_UPPER: u8 = 1;
pub const CHANNEL_DET_LOWER: u8 = 2;

/// One time-tagger record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    /// 0 = clock, 1 = upper detector, 2 = lower detector.
    pub channel: u8,
    pub time_ps: i64,
}

/// Time-ordered record sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventStream {
    pub records: Vec<EventRecord>,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clock_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.channel == CHANNEL_CLOCK)
            .count()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(16 + self.records.len() * 16);
        out.push_str("channel,time_ps\n");
        for r in &self.records {
            out.push_str(&format!("{},{}\n", r.channel, r.time_ps));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_csv_string().as_bytes())
    }

    /// Strict parse of the CSV format. Errors carry the 1-based line number.
    pub fn from_csv_str(text: &str) -> Result<EventStream> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == "channel,time_ps" => {}
            Some((_, header)) => {
                return Err(Error::MalformedStream {
                    line: 1,
                    msg: format!("expected header 'channel,time_ps', got '{header}'"),
                })
            }
            None => {
                return Err(Error::MalformedStream {
                    line: 1,
                    msg: "empty stream file".to_string(),
                })
            }
        }
        let mut records = Vec::new();
        let mut prev_time = i64::MIN;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(ch), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::MalformedStream {
                    line: lineno,
                    msg: format!("expected 'channel,time_ps', got '{line}'"),
                });
            };
            let channel: u8 = ch.parse().map_err(|_| Error::MalformedStream {
                line: lineno,
                msg: format!("bad channel '{ch}'"),
            })?;
            if channel > 2 {
                return Err(Error::MalformedStream {
                    line: lineno,
                    msg: format!("channel must be 0, 1 or 2, got {channel}"),
                });
            }
            let time_ps: i64 = t.parse().map_err(|_| Error::MalformedStream {
                line: lineno,
                msg: format!("bad timestamp '{t}'"),
            })?;
            if time_ps < prev_time {
                return Err(Error::MalformedStream {
                    line: lineno,
                    msg: format!("timestamps must be non-decreasing ({time_ps} < {prev_time})"),
                });
            }
            prev_time = time_ps;
            records.push(EventRecord { channel, time_ps });
        }
        Ok(EventStream { records })
    }
}

/// Expand a (codeword, frame count) schedule into cumulative block bounds.
fn schedule_blocks(schedule: &[(usize, u64)], n: usize) -> Result<(Vec<u64>, u64)> {
    if schedule.is_empty() {
        return Err(Error::invalid_argument("empty schedule".to_string()));
    }
    let mut cum = Vec::with_capacity(schedule.len());
    let mut total = 0u64;
    for &(j, count) in schedule {
        if j < 1 || j > n {
            return Err(Error::invalid_argument(format!(
                "scheduled codeword {j} out of range 1..={n}"
            )));
        }
        total += count;
        cum.push(total);
    }
    Ok((cum, total))
}

fn codeword_at(schedule: &[(usize, u64)], cum: &[u64], frame: u64) -> usize {
    let block = cum.partition_point(|&c| c <= frame);
    schedule[block].0
}

/// Simulate the pipeline over a frame schedule and emit the time-tagged
/// record stream plus the generator's own outcome tallies (the round-trip
/// oracle for the decoder). A clock record is inserted at every frame
/// boundary; detector records sit at slot centers (or in the guard band for
/// noise clicks) and are routed to the detector channel of their rail.
///
/// `sync_freq_hz` must equal 1/(N·τ). Deterministic for a fixed seed:
/// frame i draws from RNG stream i regardless of the thread count.
pub fn generate_event_stream(
    pipeline: &Pipeline,
    schedule: &[(usize, u64)],
    sync_freq_hz: f64,
    master_seed: u64,
) -> Result<(EventStream, FrameTallies)> {
    let n = pipeline.gm.codeword_length();
    let framing = pipeline.framing()?;
    let frame_dur = pipeline.gm.frame_duration();
    if !(sync_freq_hz > 0.0) || ((1.0 / sync_freq_hz) - frame_dur).abs() > 1e-9 * frame_dur {
        return Err(Error::invalid_argument(format!(
            "sync frequency {sync_freq_hz} Hz does not match the frame duration {frame_dur} s"
        )));
    }
    let (cum, total) = schedule_blocks(schedule, n)?;
    if total == 0 {
        return Err(Error::invalid_argument("schedule has zero frames".to_string()));
    }

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

    let frame_ps = framing.frame_ps();
    let batch = 4096u64;
    let merged = exec::batched_fold(
        total,
        batch,
        |start, end| {
            let mut records = Vec::new();
            let mut tallies = FrameTallies::new(n);
            let mut clicks: Vec<Click> = Vec::new();
            for frame in start..end {
                let j = codeword_at(schedule, &cum, frame);
                let frame_start_ps = frame as i64 * frame_ps;
                records.push(EventRecord {
                    channel: CHANNEL_CLOCK,
                    time_ps: frame_start_ps,
                });
                let mut rng = exec::item_rng(master_seed, frame);
                let energies_owned;
                let energies: &[f64] = match &static_energies {
                    Some(all) => &all[j - 1],
                    None => {
                        energies_owned = pipeline
                            .slot_energies(j, frame as f64 * frame_dur)
                            .expect("validated pipeline");
                        &energies_owned
                    }
                };
                sample_clicks(energies, &pipeline.detector, &framing, &mut rng, &mut clicks);
                dead_time_filter(&mut clicks, framing.dead_time_ps);
                tallies.record(j, classify_clicks(&clicks, &framing));
                for c in &clicks {
                    records.push(EventRecord {
                        channel: c.channel,
                        time_ps: frame_start_ps + c.offset_ps,
                    });
                }
            }
            (records, tallies)
        },
        |(mut ra, ta), (rb, tb)| {
            ra.extend(rb);
            (ra, ta.merge(tb))
        },
    )
    .expect("at least one frame");

    Ok((EventStream { records: merged.0 }, merged.1))
}

/// Result of decoding an event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub tallies: FrameTallies,
    /// Frames actually decoded.
    pub frames_decoded: u64,
    /// Scheduled frames missing from the stream (dropped, e.g. truncation).
    pub dropped_frames: u64,
    /// Detector records outside any decoded frame window.
    pub stray_records: u64,
    /// Kept detector records per (codeword, bin), for raw histograms.
    pub histogram: Vec<Vec<u64>>,
}

/// Decode a stream back into per-codeword outcome tallies.
///
/// Frames are delimited by clock records (validated strictly periodic at
/// N·τ) and attributed to codewords by the transmission schedule. Dead-time
/// violating records are dropped per detector channel, each surviving record
/// is classified to a guarded slot or the guard band by timestamp
/// arithmetic, and each frame contributes one outcome.
pub fn decode_event_stream(
    stream: &EventStream,
    framing: &FrameFraming,
    schedule: &[(usize, u64)],
) -> Result<DecodeReport> {
    let n = framing.n;
    let (cum, scheduled_total) = schedule_blocks(schedule, n)?;
    let frame_ps = framing.frame_ps();

    let clocks: Vec<i64> = stream
        .records
        .iter()
        .filter(|r| r.channel == CHANNEL_CLOCK)
        .map(|r| r.time_ps)
        .collect();
    if clocks.is_empty() {
        return Err(Error::MalformedStream {
            line: 0,
            msg: "no clock records".to_string(),
        });
    }
    for pair in clocks.windows(2) {
        if pair[1] - pair[0] != frame_ps {
            return Err(Error::MalformedStream {
                line: 0,
                msg: format!(
                    "clock records not periodic at {frame_ps} ps (got {} ps)",
                    pair[1] - pair[0]
                ),
            });
        }
    }
    if (clocks.len() as u64) > scheduled_total {
        return Err(Error::invalid_argument(format!(
            "stream has {} frames but the schedule covers {scheduled_total}",
            clocks.len()
        )));
    }
    let frames = clocks.len() as u64;
    let dropped = scheduled_total - frames;
    let t0 = clocks[0];

    let mut tallies = FrameTallies::new(n);
    let mut histogram = vec![vec![0u64; n]; n];
    let mut stray = 0u64;
    let mut frame_clicks: Vec<Click> = Vec::new();
    let mut current_frame: u64 = 0;

    let mut finish_frame = |frame: u64, clicks: &mut Vec<Click>| {
        let j = codeword_at(schedule, &cum, frame);
        dead_time_filter(clicks, framing.dead_time_ps);
        for c in clicks.iter() {
            let bin = c.offset_ps.div_euclid(framing.tau_ps);
            if bin >= 0 && (bin as usize) < n {
                histogram[j - 1][bin as usize] += 1;
            }
        }
        tallies.record(j, classify_clicks(clicks, framing));
        clicks.clear();
    };

    for r in &stream.records {
        if r.channel == CHANNEL_CLOCK {
            continue;
        }
        let rel = r.time_ps - t0;
        if rel < 0 {
            stray += 1;
            continue;
        }
        let frame = (rel / frame_ps) as u64;
        if frame >= frames {
            stray += 1;
            continue;
        }
        while current_frame < frame {
            finish_frame(current_frame, &mut frame_clicks);
            current_frame += 1;
        }
        frame_clicks.push(Click {
            channel: r.channel,
            offset_ps: rel - frame as i64 * frame_ps,
        });
    }
    while current_frame < frames {
        finish_frame(current_frame, &mut frame_clicks);
        current_frame += 1;
    }

    Ok(DecodeReport {
        tallies,
        frames_decoded: frames,
        dropped_frames: dropped,
        stray_records: stray,
        histogram,
    })
}
