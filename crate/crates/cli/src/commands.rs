use std::path::Path;

use anyhow::{Context, Result};
use evrecon::eventsim::{simulate as run_simulation, Scene, SceneConfig, SimParams};
use evrecon::pipeline::{
    encode_groups, evaluate as score, io, read_flow_dir, read_frame_dir, report_to_csv, run_reconstruction, EvalInputs,
    GroundTruth, ProviderKind, Report, RunConfig, WarpMode,
};
use evrecon::sparse::{init_weights_from_dict, load_weights, step_constant, DictionaryPair};
use evrecon::warp::fwl_detailed;
use evrecon::CistaWeights;

use crate::config::{self, ConfigError, FileConfig};
use crate::{Cli, Command, EncodeArgs, EvaluateArgs, FlowKind, FwlArgs, ReconstructArgs, SimulateArgs, WarpArg};

const DEFAULT_SIDE: usize = 64;
const DEFAULT_DURATION: f64 = 0.5;
/// Code channels, unfolded blocks and sparsity weight of the fallback weights.
const FALLBACK_CODES: usize = 16;
const FALLBACK_BLOCKS: usize = 5;
const FALLBACK_LAMBDA: f64 = 0.05;

pub fn run(cli: Cli) -> Result<()> {
    let file = config::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Simulate(a) => simulate(a, &file, seed),
        Command::Encode(a) => encode(a, &file),
        Command::Reconstruct(a) => reconstruct(a, &file, seed),
        Command::Evaluate(a) => evaluate(a),
        Command::Fwl(a) => fwl(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn sim_params(a: &SimulateArgs, file: &FileConfig, seed: u64) -> SimParams {
    let mut p = file.sim.clone().unwrap_or_default();
    if a.noiseless {
        p = SimParams::noiseless(p.threshold_mean);
    }
    let overrides = [
        (a.threshold_mean, &mut p.threshold_mean),
        (a.threshold_std, &mut p.threshold_std),
        (a.neg_pos_ratio_mean, &mut p.neg_pos_ratio_mean),
        (a.neg_pos_ratio_std, &mut p.neg_pos_ratio_std),
        (a.cutoff_hz, &mut p.cutoff_hz),
        (a.refractory_s, &mut p.refractory_s),
        (a.leak_rate_hz, &mut p.leak_rate_hz),
        (a.shot_noise_hz, &mut p.shot_noise_hz),
    ];
    for (value, field) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    p.seed = seed;
    p
}

/// Uniformly spaced times in (0, duration], ending at `duration` when the
/// rate does not divide it.
fn frame_times(duration: f64, fps: f64) -> Vec<f64> {
    let n = (duration * fps + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (1..=n).map(|k| k as f64 / fps).collect();
    if times.last().is_none_or(|&t| duration - t > 1e-9) {
        times.push(duration);
    }
    times
}

fn simulate(a: SimulateArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let mut scene = match (&a.scene, &file.scene) {
        (Some(p), _) => config::parse_file::<SceneConfig>(p)?,
        (None, Some(s)) => s.clone(),
        (None, None) => SceneConfig::random(
            a.width.unwrap_or(DEFAULT_SIDE),
            a.height.unwrap_or(DEFAULT_SIDE),
            a.objects,
            a.duration.unwrap_or(DEFAULT_DURATION),
            seed,
        ),
    };
    if let Some(w) = a.width {
        scene.width = w;
    }
    if let Some(h) = a.height {
        scene.height = h;
    }
    if let Some(d) = a.duration {
        scene.duration = d;
    }
    if !(a.fps > 0.0 && a.fps.is_finite()) {
        return Err(ConfigError(format!("--fps must be positive, got {}", a.fps)).into());
    }
    let params = sim_params(&a, file, seed);
    let sim = run_simulation(&scene, &params)?;
    log::info!(
        "{} events from {} rendered frames over {} s",
        sim.events.len(),
        sim.frames.len(),
        scene.duration
    );
    create_parent(&a.out_events)?;
    io::write_events(&a.out_events, &sim.events)?;
    if a.out_frames_dir.is_some() || a.out_flow_dir.is_some() {
        let duration = scene.duration;
        let scene = Scene::new(scene)?;
        let gt = match a.n_events {
            Some(n) => GroundTruth::for_groups(&scene, &sim.events, n)?,
            None => GroundTruth::render(&scene, 0.0, &frame_times(duration, a.fps))?,
        };
        gt.write(a.out_frames_dir.as_deref(), a.out_flow_dir.as_deref())?;
        log::info!("{} reference frames", gt.frames.len());
    }
    Ok(())
}

fn encode(a: EncodeArgs, file: &FileConfig) -> Result<()> {
    let run = file.run.clone().unwrap_or_default();
    let bins = a.bins.unwrap_or(run.bins);
    let per_group = a.n_events.unwrap_or(run.events_per_group);
    let events = io::read_events(&a.events)?;
    let grids = encode_groups(&events, bins, per_group)?;
    create_dir(&a.out_dir)?;
    for (i, mut grid) in grids.into_iter().enumerate() {
        if a.normalize {
            grid.normalize_max_abs();
        }
        io::write_voxels(&a.out_dir.join(format!("voxels_{i:05}.cwts")), &grid)?;
    }
    Ok(())
}

/// Weights unrolling classical ISTA on a seeded random dictionary.
fn fallback_weights(bins: usize, width: usize, height: usize, seed: u64) -> Result<CistaWeights> {
    let dict = DictionaryPair::random(bins + 1, FALLBACK_CODES, 3, seed);
    let step = step_constant(&dict, height.max(8), width.max(8));
    Ok(init_weights_from_dict(&dict, FALLBACK_LAMBDA, step, FALLBACK_BLOCKS)?)
}

fn run_config(a: &ReconstructArgs, file: &FileConfig, seed: u64) -> RunConfig {
    let mut cfg = file.run.clone().unwrap_or_default();
    if let Some(b) = a.bins {
        cfg.bins = b;
    }
    if let Some(n) = a.n_events {
        cfg.events_per_group = n;
    }
    if let Some(k) = a.flow {
        cfg.flow.kind = match k {
            FlowKind::Zero => ProviderKind::Zero,
            FlowKind::GroundTruth => ProviderKind::GroundTruth,
            FlowKind::External => ProviderKind::External,
        };
    }
    if a.flow_dir.is_some() {
        cfg.flow.dir = a.flow_dir.clone();
    }
    if let Some(w) = a.warp {
        cfg.warp = match w {
            WarpArg::None => WarpMode::None,
            WarpArg::Frame => WarpMode::Frame,
            WarpArg::FrameAndCodes => WarpMode::FrameAndCodes,
        };
    }
    cfg.normalize_voxels |= a.normalize_voxels;
    cfg.emit_initial_frame |= a.emit_initial_frame;
    cfg.record_timings |= a.timings;
    if a.weights.is_some() {
        cfg.weights = a.weights.clone();
    }
    if a.out_dir.is_some() {
        cfg.output_dir = a.out_dir.clone();
    }
    cfg.seed = seed;
    cfg
}

fn reconstruct(a: ReconstructArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let mut cfg = run_config(&a, file, seed);
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| ConfigError("reconstruct needs --out-dir or run.output_dir".into()))?;
    let events = io::read_events(&a.events)?;
    let weights = match &cfg.weights {
        Some(path) => {
            let w = load_weights(path)?;
            if a.bins.is_none() {
                cfg.bins = w.arch.bins;
            }
            w
        }
        None => {
            log::warn!("no weights given; unrolling ISTA on a random dictionary (seed {seed})");
            fallback_weights(cfg.bins, events.width(), events.height(), seed)?
        }
    };
    let mut provider = cfg.flow.build()?;
    let rec = run_reconstruction(&events, &cfg, provider.as_mut(), &weights)?;
    rec.write_to(&out_dir)?;
    log::info!("{} frames written to {}", rec.frames.len(), out_dir.display());
    Ok(())
}

fn read_report(path: &Path) -> Result<Option<Report>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report = serde_json::from_str(&text).map_err(|e| evrecon::Error::Format(format!("{}: {e}", path.display())))?;
    Ok(Some(report))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let report_path = a.report.as_deref();
    let csv = match report_path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        None if report_path.is_none() => false,
        Some(e) if e.eq_ignore_ascii_case("json") => false,
        Some(e) if e.eq_ignore_ascii_case("csv") => true,
        _ => return Err(ConfigError("--report must end in .json or .csv".into()).into()),
    };
    let pred = a.pred_dir.as_deref().map(read_frame_dir).transpose()?;
    let gt = a.gt_dir.as_deref().map(read_frame_dir).transpose()?;
    let pred_flows = a.flow_pred_dir.as_deref().map(read_flow_dir).transpose()?;
    let gt_flows = a.flow_gt_dir.as_deref().map(read_flow_dir).transpose()?;
    let run_report = match &a.pred_dir {
        Some(dir) => read_report(&dir.join("report.json"))?,
        None => None,
    };
    let echo = |p: &Option<std::path::PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let report = score(EvalInputs {
        pred_frames: pred.as_ref(),
        gt_frames: gt.as_ref(),
        pred_flows: pred_flows.as_deref(),
        gt_flows: gt_flows.as_deref(),
        run_report,
        config_echo: serde_json::json!({
            "pred_dir": echo(&a.pred_dir),
            "gt_dir": echo(&a.gt_dir),
            "flow_pred_dir": echo(&a.flow_pred_dir),
            "flow_gt_dir": echo(&a.flow_gt_dir),
        }),
    })?;
    let text = if csv {
        report_to_csv(&report)
    } else {
        serde_json::to_string_pretty(&report)? + "\n"
    };
    match report_path {
        Some(p) => {
            create_parent(p)?;
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn fwl(a: FwlArgs) -> Result<()> {
    let events = io::read_events(&a.events)?;
    let flow = io::read_flo(&a.flow)?;
    let t_ref = a.t_ref.unwrap_or(events.t_start());
    let r = fwl_detailed(&events, &flow, t_ref)?;
    println!("{}", r.fwl);
    for (path, image) in [(&a.out_warped, &r.warped), (&a.out_unwarped, &r.unwarped)] {
        if let Some(p) = path {
            create_parent(p)?;
            io::write_image(p, &image.normalize_range(), io::BitDepth::Eight)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_times_cover_the_duration() {
        assert_eq!(frame_times(0.5, 4.0), vec![0.25, 0.5]);
        assert_eq!(frame_times(0.3, 5.0), vec![0.2, 0.3]);
        assert_eq!(frame_times(0.1, 5.0), vec![0.1]);
    }
}
