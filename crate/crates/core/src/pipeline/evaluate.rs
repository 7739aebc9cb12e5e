use std::fmt::Write as _;
use std::path::Path;

use super::{flow_file_name, frame_file_name, io, Report, StepReport};
use crate::error::{Error, Result};
use crate::metrics::{epe, mse, outlier_pct, ssim};
use crate::tensor::Frame;
use crate::warp::FlowField;

/// Numbered frames of a directory with optional time stamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameSet {
    pub frames: Vec<Frame>,
    pub timestamps: Option<Vec<f64>>,
}

/// Reads `frame_00000.png` (or `.pgm`), `frame_00001...` until the first gap,
/// plus `timestamps.txt` when present.
pub fn read_frame_dir(dir: &Path) -> Result<FrameSet> {
    let mut frames = Vec::new();
    loop {
        let png = dir.join(frame_file_name(frames.len()));
        let pgm = png.with_extension("pgm");
        let path = if png.exists() {
            png
        } else if pgm.exists() {
            pgm
        } else {
            break;
        };
        frames.push(io::read_image(&path)?);
    }
    if frames.is_empty() {
        return Err(Error::Format(format!("no numbered frames in {}", dir.display())));
    }
    let ts_path = dir.join(io::TIMESTAMPS_FILE);
    let timestamps = if ts_path.exists() {
        let ts = io::read_timestamps(&ts_path)?;
        if ts.len() != frames.len() {
            return Err(Error::Format(format!(
                "{} lists {} times for {} frames",
                ts_path.display(),
                ts.len(),
                frames.len()
            )));
        }
        Some(ts)
    } else {
        None
    };
    Ok(FrameSet { frames, timestamps })
}

/// Reads `flow_00000.flo`, `flow_00001.flo`, ... until the first gap.
pub fn read_flow_dir(dir: &Path) -> Result<Vec<FlowField>> {
    let mut flows = Vec::new();
    loop {
        let path = dir.join(flow_file_name(flows.len()));
        if !path.exists() {
            break;
        }
        flows.push(io::read_flo(&path)?);
    }
    if flows.is_empty() {
        return Err(Error::Format(format!("no numbered flow files in {}", dir.display())));
    }
    Ok(flows)
}

/// Index of the time closest to `t`; ties go to the earlier entry.
pub fn nearest_index(times: &[f64], t: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in times.iter().enumerate() {
        let d = (s - t).abs();
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// What to compare. Predicted frames are matched to the reference frame
/// nearest in time when both sides carry time stamps, otherwise by index;
/// flows follow the same matching.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs<'a> {
    pub pred_frames: Option<&'a FrameSet>,
    pub gt_frames: Option<&'a FrameSet>,
    pub pred_flows: Option<&'a [FlowField]>,
    pub gt_flows: Option<&'a [FlowField]>,
    /// Run report whose steps are extended (keeps event counts and FWL).
    pub run_report: Option<Report>,
    pub config_echo: serde_json::Value,
}

fn reference_index(inputs: &EvalInputs<'_>, i: usize) -> usize {
    let pred_t = inputs
        .pred_frames
        .and_then(|p| p.timestamps.as_ref())
        .map(|t| t[i.min(t.len() - 1)]);
    let gt_t = inputs.gt_frames.and_then(|g| g.timestamps.as_ref());
    match (pred_t, gt_t) {
        (Some(t), Some(times)) if inputs.pred_frames.is_some_and(|p| i < p.frames.len()) => {
            nearest_index(times, t).unwrap_or(i)
        }
        _ => i,
    }
}

/// Per-step and mean MSE, SSIM, EPE and outlier percentage.
pub fn evaluate(inputs: EvalInputs<'_>) -> Result<Report> {
    let frames_pair = inputs.pred_frames.zip(inputs.gt_frames);
    let flows_pair = inputs.pred_flows.zip(inputs.gt_flows);
    if frames_pair.is_none() && flows_pair.is_none() {
        return Err(Error::Parameter(
            "evaluation needs predicted and reference frames, or predicted and reference flows".into(),
        ));
    }
    let n = frames_pair
        .map_or(0, |(p, _)| p.frames.len())
        .max(flows_pair.map_or(0, |(p, _)| p.len()));
    let mut steps: Vec<StepReport> = match &inputs.run_report {
        Some(r) if r.steps.len() == n => r.steps.clone(),
        Some(r) => {
            log::warn!(
                "run report has {} steps but {n} predictions were found; ignoring it",
                r.steps.len()
            );
            Vec::new()
        }
        None => Vec::new(),
    };
    if steps.is_empty() {
        steps = (0..n)
            .map(|i| StepReport {
                index: i,
                t_end: inputs
                    .pred_frames
                    .and_then(|p| p.timestamps.as_ref())
                    .and_then(|t| t.get(i).copied())
                    .unwrap_or(i as f64),
                ..StepReport::default()
            })
            .collect();
    }
    for (i, step) in steps.iter_mut().enumerate() {
        let j = reference_index(&inputs, i);
        if let Some((pred, gt)) = frames_pair {
            if let (Some(p), Some(g)) = (pred.frames.get(i), gt.frames.get(j)) {
                step.mse = Some(mse(p, g)?);
                step.ssim = Some(ssim(p, g)?);
            }
        }
        if let Some((pred, gt)) = flows_pair {
            if let (Some(p), Some(g)) = (pred.get(i), gt.get(j)) {
                step.epe = Some(epe(p, g, None)?);
                step.out_pct = Some(outlier_pct(p, g)?);
            }
        }
    }
    let mut report = Report {
        steps,
        config_echo: inputs.config_echo,
        ..Report::default()
    };
    report.update_means();
    Ok(report)
}

/// One row per step and a final `mean` row; absent values are empty cells.
pub fn report_to_csv(report: &Report) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("index,t_end,n_events,fwl,mse,ssim,epe,out_pct\n");
    for s in &report.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.index,
            s.t_end,
            s.n_events,
            cell(s.fwl),
            cell(s.mse),
            cell(s.ssim),
            cell(s.epe),
            cell(s.out_pct)
        );
    }
    let m = &report.means;
    let _ = writeln!(
        out,
        "mean,,,{},{},{},{},{}",
        cell(m.fwl),
        cell(m.mse),
        cell(m.ssim),
        cell(m.epe),
        cell(m.out_pct)
    );
    out
}
