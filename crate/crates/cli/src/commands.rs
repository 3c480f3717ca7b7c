//! Subcommand implementations. Every command reads one config, runs fully
//! seeded work, and writes CSV/JSON outputs plus a summary carrying the
//! resolved config and seed for provenance.

use std::path::Path;

use serde_json::json;

use greenmachine::calibration::{correct_stages_sequential, Extremum, ScanSettings};
use greenmachine::detection::{
    decode_event_stream, estimate_mean_photon, estimate_transition_matrix, generate_event_stream,
    run_gm_tallies, EventStream, FrameTallies, Pipeline, TransitionMatrix,
};
use greenmachine::exec;
use greenmachine::infotheory::{
    self, lowpass_fit, superadditivity_check, PiePoint,
};
use greenmachine::linkbudget::{advantage_region, DEFAULT_ADVANTAGE_REGION};
use greenmachine::optics::{crosstalk_fraction, ChannelModel, GreenMachineConfig};
use greenmachine::receivers::{
    dolinar_pie_mc, heterodyne_upper_bound_pie, soft_homodyne_pie, threshold_homodyne_mc,
    DolinarConfig, DriftScenario, ReceiverKind,
};

use crate::config::{config_err, parse_receivers, ExperimentConfig};
use crate::output::{histogram_csv, io_err, link_budget_csv, pie_csv, write_json, write_text};
use crate::CliError;

fn summary_value(command: &str, cfg: &ExperimentConfig, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "tool": "gmsim",
        "command": command,
        "master_seed": cfg.master_seed,
        "config": cfg,
        "results": extra,
    })
}

fn map_lib(e: greenmachine::Error) -> CliError {
    match e {
        greenmachine::Error::FitFailed(msg) => CliError::Fit(msg),
        greenmachine::Error::MalformedStream { line, msg } => {
            CliError::Io(format!("malformed stream at line {line}: {msg}"))
        }
        other => CliError::Config(other.to_string()),
    }
}

/// PIE of one codeword transition matrix against a photon-number
/// denominator; used for both the backed-out and the input-referred figures.
fn pie_point_from_tm(
    tm: &TransitionMatrix,
    nbar: f64,
    drift_rate_hz: f64,
) -> Result<PiePoint, CliError> {
    let (mi, sigma) = infotheory::mutual_information_from_counts(&tm.counts).map_err(map_lib)?;
    let scale = tm.n as f64 * nbar;
    if !(scale > 0.0) {
        return Err(CliError::Config(
            "photon-number denominator is zero".to_string(),
        ));
    }
    Ok(PiePoint {
        nbar,
        pie: mi / scale,
        ci_halfwidth: 2.0 * sigma / scale,
        receiver: ReceiverKind::Gm.as_str().to_string(),
        drift_rate_hz,
    })
}

/// Both reporting modes of one pipeline run: (backed-out, input-referred).
fn gm_point_pair(
    pipeline: &Pipeline,
    frames_per_codeword: u64,
    seed: u64,
) -> Result<(PiePoint, PiePoint), CliError> {
    let tallies = run_gm_tallies(pipeline, frames_per_codeword, seed).map_err(map_lib)?;
    let tm = estimate_transition_matrix(&tallies).map_err(map_lib)?;
    let detected = estimate_mean_photon(&tm).map_err(map_lib)?;
    let drift = pipeline.channel.drift_rate_hz;
    let backed = pie_point_from_tm(&tm, detected, drift)?;
    let raw = pie_point_from_tm(&tm, pipeline.nbar_tx, drift)?;
    Ok((backed, raw))
}

/// One baseline receiver point.
fn baseline_point(
    kind: ReceiverKind,
    nbar: f64,
    drift: &DriftScenario,
    gm: &GreenMachineConfig,
    dolinar_subslots: usize,
    seed: u64,
) -> Result<PiePoint, CliError> {
    match kind {
        ReceiverKind::HomodyneSoft => soft_homodyne_pie(nbar, drift, seed).map_err(map_lib),
        ReceiverKind::HomodyneThresholdHadamard => {
            threshold_homodyne_mc(nbar, gm.codeword_length(), drift, seed)
                .map(|(p, _)| p)
                .map_err(map_lib)
        }
        ReceiverKind::HeterodyneBound => {
            heterodyne_upper_bound_pie(nbar, drift.drift_rate_hz, 1.0 / gm.symbol_duration)
                .map_err(map_lib)
        }
        ReceiverKind::Dolinar => {
            let config = DolinarConfig {
                sub_slots: dolinar_subslots,
                ..DolinarConfig::default()
            };
            dolinar_pie_mc(nbar, &config, drift, seed).map_err(map_lib)
        }
        ReceiverKind::Gm => unreachable!("joint-detection rows handled separately"),
    }
}

pub fn pie_sweep(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), CliError> {
    let section = cfg
        .pie_sweep
        .as_ref()
        .ok_or_else(|| config_err("missing [pie_sweep] section"))?;
    let gm = cfg.gm_config()?;
    let detector = cfg.detector()?;
    let channel = cfg.channel()?;
    let receivers = parse_receivers(&section.receivers)?;
    let nbars = section.nbar.values("pie_sweep.nbar")?;

    let mut backed = Vec::new();
    let mut raw = Vec::new();
    let mut verdicts = Vec::new();
    for (ri, kind) in receivers.iter().enumerate() {
        for (gi, &nbar) in nbars.iter().enumerate() {
            let seed = exec::derive_seed(cfg.master_seed, (ri as u64) << 32 | gi as u64);
            match kind {
                ReceiverKind::Gm => {
                    let pipeline = Pipeline {
                        nbar_tx: nbar,
                        channel,
                        gm: gm.clone(),
                        detector,
                    };
                    let (b, r) = gm_point_pair(&pipeline, section.frames_per_codeword, seed)?;
                    let verdict = superadditivity_check(&b).map_err(map_lib)?;
                    verdicts.push(json!({
                        "nbar": b.nbar,
                        "pie": b.pie,
                        "ceiling": infotheory::symbol_by_symbol_ceiling(b.nbar),
                        "verdict": format!("{verdict:?}"),
                    }));
                    backed.push(b);
                    raw.push(r);
                }
                baseline => {
                    let drift = DriftScenario {
                        drift_rate_hz: channel.drift_rate_hz,
                        run_duration: section.run_duration_s,
                        symbol_duration: gm.symbol_duration,
                        trials: section.trials,
                    };
                    let point = baseline_point(
                        *baseline,
                        nbar,
                        &drift,
                        &gm,
                        section.dolinar_subslots,
                        seed,
                    )?;
                    backed.push(point.clone());
                    raw.push(point);
                }
            }
        }
    }

    write_text(&outdir.join("pie_sweep.csv"), &pie_csv(&backed))?;
    write_text(&outdir.join("pie_sweep_raw.csv"), &pie_csv(&raw))?;
    write_json(
        &outdir.join("summary.json"),
        &summary_value("pie-sweep", cfg, json!({ "superadditivity": verdicts })),
    )?;
    Ok(())
}

pub fn phase_sweep(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), CliError> {
    let section = cfg
        .phase_sweep
        .as_ref()
        .ok_or_else(|| config_err("missing [phase_sweep] section"))?;
    let gm = cfg.gm_config()?;
    let detector = cfg.detector()?;
    let base_channel = cfg.channel()?;
    let receivers = parse_receivers(&section.receivers)?;
    let fit_kind = ReceiverKind::parse(&section.fit_receiver)
        .map_err(|e| config_err(format!("phase_sweep.fit_receiver: {e}")))?;
    let rates = section.drift_hz.values("phase_sweep.drift_hz")?;
    let n = gm.codeword_length() as u64;
    let frames_per_codeword = section
        .frames_per_codeword
        .unwrap_or_else(|| (section.trials / n / n).max(1));

    let mut points = Vec::new();
    for (ri, kind) in receivers.iter().enumerate() {
        for (gi, &f) in rates.iter().enumerate() {
            let seed = exec::derive_seed(cfg.master_seed, 1 << 60 | (ri as u64) << 32 | gi as u64);
            let channel = ChannelModel {
                drift_rate_hz: f,
                ..base_channel
            };
            match kind {
                ReceiverKind::Gm => {
                    let pipeline = Pipeline {
                        nbar_tx: section.nbar,
                        channel,
                        gm: gm.clone(),
                        detector,
                    };
                    let (b, _) = gm_point_pair(&pipeline, frames_per_codeword, seed)?;
                    points.push(b);
                }
                baseline => {
                    let drift = DriftScenario {
                        drift_rate_hz: f,
                        run_duration: section.run_duration_s,
                        symbol_duration: gm.symbol_duration,
                        trials: section.trials,
                    };
                    points.push(baseline_point(
                        *baseline,
                        section.nbar,
                        &drift,
                        &gm,
                        section.dolinar_subslots,
                        seed,
                    )?);
                }
            }
        }
    }

    write_text(&outdir.join("phase_sweep.csv"), &pie_csv(&points))?;

    let series: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.receiver == fit_kind.as_str())
        .map(|p| (p.drift_rate_hz, p.pie))
        .collect();
    let fit = lowpass_fit(&series);
    let fit_json = match &fit {
        Ok(f) => json!({ "a": f.a, "f0_hz": f.f0, "s": f.s, "receiver": fit_kind.as_str() }),
        Err(e) => json!({ "error": e.to_string(), "receiver": fit_kind.as_str() }),
    };
    write_json(&outdir.join("lowpass_fit.json"), &fit_json)?;
    write_json(
        &outdir.join("summary.json"),
        &summary_value("phase-sweep", cfg, json!({ "lowpass_fit": fit_json })),
    )?;
    // Any fit failure (including too few points) exits as a convergence
    // failure; the sweep data has already been written.
    fit.map(|_| ()).map_err(|e| CliError::Fit(e.to_string()))
}

pub fn link_budget(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), CliError> {
    let section = cfg
        .link_budget
        .as_ref()
        .ok_or_else(|| config_err("missing [link_budget] section"))?;
    let params = section.resolve()?;
    let ranges = section.range_m.values("link_budget.range_m")?;
    let region = section
        .region
        .map(|[lo, hi]| (lo, hi))
        .unwrap_or(DEFAULT_ADVANTAGE_REGION);
    let points = advantage_region(&params, &ranges, region).map_err(map_lib)?;
    write_text(&outdir.join("link_budget.csv"), &link_budget_csv(&points))?;
    let in_region: Vec<&_> = points.iter().filter(|p| p.in_region).collect();
    write_json(
        &outdir.join("summary.json"),
        &summary_value(
            "link-budget",
            cfg,
            json!({
                "params": params,
                "region": [region.0, region.1],
                "points_in_region": in_region.len(),
            }),
        ),
    )?;
    Ok(())
}

fn transition_matrix_json(
    tallies: &FrameTallies,
    nbar_input: f64,
    drift_rate_hz: f64,
) -> Result<serde_json::Value, CliError> {
    let tm = estimate_transition_matrix(tallies).map_err(map_lib)?;
    let (mi, sigma) = infotheory::mutual_information_from_counts(&tm.counts).map_err(map_lib)?;
    let detected = estimate_mean_photon(&tm).ok();
    let pie_backed = detected
        .filter(|d| *d > 0.0)
        .map(|d| mi / (tm.n as f64 * d));
    let pie_raw = (nbar_input > 0.0).then(|| mi / (tm.n as f64 * nbar_input));
    Ok(json!({
        "n": tm.n,
        "probs": tm.probs,
        "counts": tm.counts,
        "discarded": tm.discarded,
        "guard_folded": tallies.guard_folded,
        "mi_bits": mi,
        "mi_sigma": sigma,
        "nbar_detected": detected,
        "nbar_input": nbar_input,
        "pie_backed_out": pie_backed,
        "pie_vs_input": pie_raw,
        "drift_rate_hz": drift_rate_hz,
    }))
}

pub fn transition_matrix(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), CliError> {
    let section = cfg
        .transition_matrix
        .as_ref()
        .ok_or_else(|| config_err("missing [transition_matrix] section"))?;
    let gm = cfg.gm_config()?;
    let detector = cfg.detector()?;
    let channel = cfg.channel()?;
    let pipeline = Pipeline {
        nbar_tx: section.nbar,
        channel,
        gm,
        detector,
    };
    let tallies = if section.emit_stream {
        let n = pipeline.gm.codeword_length();
        let schedule: Vec<(usize, u64)> = (1..=n)
            .map(|j| (j, section.frames_per_codeword))
            .collect();
        let sync = 1.0 / pipeline.gm.frame_duration();
        let (stream, tallies) =
            generate_event_stream(&pipeline, &schedule, sync, cfg.master_seed).map_err(map_lib)?;
        write_text(&outdir.join("events.csv"), &stream.to_csv_string())?;
        tallies
    } else {
        run_gm_tallies(&pipeline, section.frames_per_codeword, cfg.master_seed).map_err(map_lib)?
    };
    let tm_json = transition_matrix_json(&tallies, section.nbar, channel.drift_rate_hz)?;
    write_json(&outdir.join("transition_matrix.json"), &tm_json)?;
    write_json(
        &outdir.join("summary.json"),
        &summary_value("transition-matrix", cfg, tm_json),
    )?;
    Ok(())
}

pub fn decode_events(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), CliError> {
    let section = cfg
        .decode_events
        .as_ref()
        .ok_or_else(|| config_err("missing [decode_events] section"))?;
    let gm = cfg.gm_config()?;
    let detector = cfg.detector()?;
    let framing = greenmachine::detection::FrameFraming::new(
        gm.codeword_length(),
        gm.symbol_duration,
        &detector,
    )
    .map_err(map_lib)?;
    let schedule = section.resolve_schedule(gm.codeword_length())?;

    let path = Path::new(&section.stream_path);
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let stream = EventStream::from_csv_str(&text).map_err(map_lib)?;
    let report = decode_event_stream(&stream, &framing, &schedule).map_err(map_lib)?;
    if report.dropped_frames > 0 {
        eprintln!(
            "warning: stream truncated, dropped {} of {} scheduled frames",
            report.dropped_frames,
            report.frames_decoded + report.dropped_frames
        );
    }
    if report.stray_records > 0 {
        eprintln!(
            "warning: {} detector records outside any frame window",
            report.stray_records
        );
    }

    write_text(&outdir.join("histogram.csv"), &histogram_csv(&report.histogram))?;
    let tm_json = transition_matrix_json(&report.tallies, 0.0, 0.0)?;
    let decode_json = json!({
        "frames_decoded": report.frames_decoded,
        "dropped_frames": report.dropped_frames,
        "stray_records": report.stray_records,
        "transition_matrix": tm_json,
    });
    write_json(&outdir.join("transition_matrix.json"), &decode_json)?;
    write_json(
        &outdir.join("summary.json"),
        &summary_value("decode-events", cfg, decode_json),
    )?;
    Ok(())
}

pub fn calibrate(cfg: &ExperimentConfig, outdir: &Path) -> Result<(), CliError> {
    let section = cfg
        .calibrate
        .as_ref()
        .ok_or_else(|| config_err("missing [calibrate] section"))?;
    let base = cfg.gm_config()?;
    let stages = base.num_stages();

    let extrema: Vec<Extremum> = if section.extrema.is_empty() {
        vec![Extremum::Max; stages]
    } else {
        section
            .extrema
            .iter()
            .map(|s| match s.as_str() {
                "max" => Ok(Extremum::Max),
                "min" => Ok(Extremum::Min),
                other => Err(config_err(format!(
                    "calibrate.extrema: expected 'max' or 'min', got '{other}'"
                ))),
            })
            .collect::<Result<_, _>>()?
    };
    if extrema.len() != stages {
        return Err(config_err(format!(
            "calibrate.extrema: {} choices for {stages} stages",
            extrema.len()
        )));
    }
    if !section.true_phase_errors_rad.is_empty()
        && section.true_phase_errors_rad.len() != stages
    {
        return Err(config_err(format!(
            "calibrate.true_phase_errors_rad: {} values for {stages} stages",
            section.true_phase_errors_rad.len()
        )));
    }
    let settings = ScanSettings {
        scan_points: section.scan_points,
        monitor_noise_sigma: section.monitor_noise_sigma,
    };

    let mut per_seed = Vec::new();
    let mut max_residual = 0.0f64;
    let mut max_crosstalk = 0.0f64;
    for seed in 0..section.seeds {
        let mut gm = base.clone();
        let initial: Vec<f64> = if section.true_phase_errors_rad.is_empty() {
            let mut rng = exec::item_rng(exec::derive_seed(cfg.master_seed, 0xCA11), seed);
            use greenmachine::rand::Rng;
            (0..stages)
                .map(|_| std::f64::consts::PI * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        } else {
            section.true_phase_errors_rad.clone()
        };
        for (stage, eps) in gm.stages_mut().iter_mut().zip(&initial) {
            stage.phase_error = *eps;
        }
        let outcome = correct_stages_sequential(
            &gm,
            &settings,
            &extrema,
            exec::derive_seed(cfg.master_seed, seed),
        )
        .map_err(map_lib)?;
        let crosstalk = crosstalk_fraction(&outcome.corrected).map_err(map_lib)?;
        max_residual = outcome.residuals.iter().fold(max_residual, |a, r| a.max(*r));
        max_crosstalk = max_crosstalk.max(crosstalk);
        per_seed.push(json!({
            "seed": seed,
            "initial_rad": initial,
            "residuals_rad": outcome.residuals,
            "crosstalk_after": crosstalk,
        }));
    }

    let result = json!({
        "seeds": section.seeds,
        "scan_points": section.scan_points,
        "monitor_noise_sigma": section.monitor_noise_sigma,
        "max_residual_rad": max_residual,
        "max_crosstalk_after": max_crosstalk,
        "per_seed": per_seed,
    });
    write_json(&outdir.join("calibration.json"), &result)?;
    write_json(
        &outdir.join("summary.json"),
        &summary_value("calibrate", cfg, result),
    )?;
    Ok(())
}
