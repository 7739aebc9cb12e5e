//! The recursive reconstruction loop, flow providers, run configuration,
//! reports and file formats.

pub mod container;
mod dataset;
mod evaluate;
pub mod io;

pub use dataset::GroundTruth;
pub use evaluate::{evaluate, nearest_index, read_flow_dir, read_frame_dir, report_to_csv, EvalInputs, FrameSet};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encode::{build_voxel_grid, slice_by_count, VoxelGrid};
use crate::error::{Error, Result};
use crate::eventsim::{EventStream, Scene};
use crate::sparse::{cista_forward, CistaState, CistaWeights};
use crate::tensor::{Frame, Tensor};
use crate::warp::{downsample_flow, forward_warp_codes, forward_warp_frame, fwl, FlowField};

/// File name of the flow used at step `index`.
pub fn flow_file_name(index: usize) -> String {
    format!("flow_{index:05}.flo")
}

/// File name of the frame emitted at step `index`.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

/// What a provider is asked for at each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub index: usize,
    /// Time of the previous reconstruction.
    pub t_start: f64,
    /// Time of the reconstruction being produced.
    pub t_end: f64,
    pub width: usize,
    pub height: usize,
}

/// Source of the forward flow from the previous reconstruction to the next.
pub trait FlowProvider {
    fn flow(&mut self, step: &StepInfo) -> Result<FlowField>;
}

/// Always returns zero flow.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFlow;

impl FlowProvider for ZeroFlow {
    fn flow(&mut self, step: &StepInfo) -> Result<FlowField> {
        Ok(FlowField::zeros(step.width, step.height))
    }
}

/// Exact flow, either computed from a scene or served from a list.
pub enum GroundTruthFlow {
    Scene(Box<Scene>),
    Fields(Vec<FlowField>),
}

impl GroundTruthFlow {
    pub fn from_scene(scene: Scene) -> Self {
        GroundTruthFlow::Scene(Box::new(scene))
    }

    pub fn from_fields(fields: Vec<FlowField>) -> Self {
        GroundTruthFlow::Fields(fields)
    }
}

impl FlowProvider for GroundTruthFlow {
    fn flow(&mut self, step: &StepInfo) -> Result<FlowField> {
        let f = match self {
            GroundTruthFlow::Scene(scene) => {
                if step.t_end > step.t_start {
                    scene.ground_truth_flow(step.t_start, step.t_end)
                } else {
                    FlowField::zeros(step.width, step.height)
                }
            }
            GroundTruthFlow::Fields(list) => list
                .get(step.index)
                .cloned()
                .ok_or(Error::ProviderExhausted { step: step.index })?,
        };
        check_flow_dims(&f, step)?;
        Ok(f)
    }
}

/// Reads `flow_{index:05}.flo` from a directory.
#[derive(Debug, Clone)]
pub struct ExternalFlow {
    dir: PathBuf,
}

impl ExternalFlow {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl FlowProvider for ExternalFlow {
    fn flow(&mut self, step: &StepInfo) -> Result<FlowField> {
        let path = self.dir.join(flow_file_name(step.index));
        if !path.exists() {
            return Err(Error::ProviderExhausted { step: step.index });
        }
        let f = io::read_flo(&path)?;
        check_flow_dims(&f, step)?;
        Ok(f)
    }
}

fn check_flow_dims(f: &FlowField, step: &StepInfo) -> Result<()> {
    if f.width() != step.width || f.height() != step.height {
        return Err(Error::Dimension(format!(
            "flow for step {} is {}x{}, sensor is {}x{}",
            step.index,
            f.width(),
            f.height(),
            step.width,
            step.height
        )));
    }
    Ok(())
}

/// Which provider a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Zero,
    GroundTruth,
    External,
}

/// Serializable provider selection; `dir` holds `.flo` files for the
/// file-backed kinds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub dir: Option<PathBuf>,
}

impl ProviderSpec {
    /// Builds a provider backed by files (ground truth is read from the
    /// directory a simulation wrote).
    pub fn build(&self) -> Result<Box<dyn FlowProvider>> {
        match self.kind {
            ProviderKind::Zero => Ok(Box::new(ZeroFlow)),
            ProviderKind::GroundTruth | ProviderKind::External => {
                let dir = self
                    .dir
                    .as_ref()
                    .ok_or_else(|| Error::Parameter("flow provider needs a directory".into()))?;
                Ok(Box::new(ExternalFlow::new(dir)))
            }
        }
    }
}

/// Which previous-step outputs are motion compensated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpMode {
    /// Previous frame and codes are used as they are.
    None,
    /// Only the previous frame is warped.
    Frame,
    /// Frame and codes are warped.
    #[default]
    FrameAndCodes,
}

/// Parameters of a reconstruction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub bins: usize,
    pub events_per_group: usize,
    pub warp: WarpMode,
    /// Scale each voxel grid to unit peak magnitude.
    pub normalize_voxels: bool,
    pub flow: ProviderSpec,
    pub weights: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Also emit the zero frame the recursion starts from.
    pub emit_initial_frame: bool,
    /// Record wall-clock time per step in the report.
    pub record_timings: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bins: 5,
            events_per_group: 15_000,
            warp: WarpMode::FrameAndCodes,
            normalize_voxels: false,
            flow: ProviderSpec::default(),
            weights: None,
            output_dir: None,
            emit_initial_frame: false,
            record_timings: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Parameter("bins must be at least 1".into()));
        }
        if self.events_per_group == 0 {
            return Err(Error::Parameter("events per group must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-step entry of a run report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub n_events: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub partial: bool,
    pub fwl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// Means over the steps where a value is defined.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMeans {
    pub fwl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub steps: Vec<StepReport>,
    pub means: ReportMeans,
    pub config_echo: serde_json::Value,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Report {
    /// Recomputes the means from the step entries.
    pub fn update_means(&mut self) {
        let s = &self.steps;
        self.means = ReportMeans {
            fwl: mean_of(s.iter().map(|r| r.fwl)),
            mse: mean_of(s.iter().map(|r| r.mse)),
            ssim: mean_of(s.iter().map(|r| r.ssim)),
            epe: mean_of(s.iter().map(|r| r.epe)),
            out_pct: mean_of(s.iter().map(|r| r.out_pct)),
        };
    }
}

/// Frames, flows and report of a run.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub frames: Vec<Frame>,
    /// Time stamp of each frame.
    pub timestamps: Vec<f64>,
    /// Flow used at each step.
    pub flows: Vec<FlowField>,
    pub report: Report,
}

impl Reconstruction {
    /// Writes frames as PNG, flows as `.flo`, `timestamps.txt` and
    /// `report.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, f) in self.frames.iter().enumerate() {
            io::write_image(&dir.join(frame_file_name(i)), f, io::BitDepth::Sixteen)?;
        }
        for (i, f) in self.flows.iter().enumerate() {
            io::write_flo(&dir.join(flow_file_name(i)), f)?;
        }
        io::write_timestamps(&dir.join(io::TIMESTAMPS_FILE), &self.timestamps)?;
        let p = dir.join("report.json");
        let json = serde_json::to_string_pretty(&self.report).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))
    }
}

/// Voxel grid of one group. A zero-length group puts all of its mass in
/// the final bin.
fn group_voxels(events: &EventStream, bins: usize) -> Result<VoxelGrid> {
    let (t0, t1) = (events.t_start(), events.t_end());
    if t1 > t0 {
        build_voxel_grid(events, bins, t0, t1)
    } else {
        build_voxel_grid(events, bins, t1 - 1.0, t1)
    }
}

/// Voxel grids of consecutive `events_per_group` groups, exactly as the
/// reconstruction loop builds them.
pub fn encode_groups(events: &EventStream, bins: usize, events_per_group: usize) -> Result<Vec<VoxelGrid>> {
    if bins == 0 {
        return Err(Error::Parameter("bins must be at least 1".into()));
    }
    slice_by_count(events, events_per_group)?
        .iter()
        .map(|g| group_voxels(&g.events, bins))
        .collect()
}

/// Runs the recursive reconstruction over `events`.
///
/// The first previous frame, codes and recurrent states are zero. For each
/// group of `events_per_group` events the provider supplies the flow from the
/// previous reconstruction time to the end of the group; the previous frame
/// and codes are warped according to `cfg.warp` and the network produces the
/// next frame.
pub fn run_reconstruction(
    events: &EventStream,
    cfg: &RunConfig,
    provider: &mut dyn FlowProvider,
    weights: &CistaWeights,
) -> Result<Reconstruction> {
    cfg.validate()?;
    weights.validate()?;
    if weights.arch.bins != cfg.bins {
        return Err(Error::Parameter(format!(
            "weights expect {} bins, configuration asks for {}",
            weights.arch.bins, cfg.bins
        )));
    }
    let (w, h) = (events.width(), events.height());
    let config_echo = serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))?;
    let mut frames = Vec::new();
    let mut timestamps = Vec::new();
    let mut report = Report {
        config_echo,
        ..Report::default()
    };
    if events.is_empty() {
        log::warn!("event stream is empty; emitting a single zero frame");
        frames.push(Frame::zeros(w, h));
        timestamps.push(events.t_start());
        report.update_means();
        return Ok(Reconstruction {
            frames,
            timestamps,
            flows: Vec::new(),
            report,
        });
    }
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::Dimension(format!("sensor size {w}x{h} must be even")));
    }
    let groups = slice_by_count(events, cfg.events_per_group)?;
    if cfg.emit_initial_frame {
        frames.push(Frame::zeros(w, h));
        timestamps.push(events.t_start());
    }
    let mut prev = Frame::zeros(w, h);
    let mut state = CistaState::zeros(&weights.arch, w, h);
    let mut flows = Vec::with_capacity(groups.len());
    for (index, group) in groups.iter().enumerate() {
        let clock = Instant::now();
        let ev = &group.events;
        if group.partial {
            log::info!("step {index}: partial group of {} events", ev.len());
        }
        let info = StepInfo {
            index,
            t_start: ev.t_start(),
            t_end: ev.t_end(),
            width: w,
            height: h,
        };
        let mut step = || -> Result<(Frame, CistaState, FlowField, Option<f64>)> {
            let flow = provider.flow(&info)?;
            let (frame_in, codes_in) = match cfg.warp {
                WarpMode::None => (prev.clone(), state.codes.clone()),
                WarpMode::Frame => (forward_warp_frame(&prev, &flow)?, state.codes.clone()),
                WarpMode::FrameAndCodes => (forward_warp_frame(&prev, &flow)?, warp_codes(&state.codes, &flow)?),
            };
            let mut voxels = group_voxels(ev, cfg.bins)?;
            if cfg.normalize_voxels {
                voxels.normalize_max_abs();
            }
            let out = cista_forward(&voxels, &frame_in, &codes_in, &state.lsrc, &state.lstc, weights)?;
            let score = if ev.duration() > 0.0 {
                fwl(ev, &flow, ev.t_end()).ok()
            } else {
                None
            };
            Ok((out.frame, out.state, flow, score))
        };
        let (frame, next_state, flow, score) = step().map_err(|e| e.at_step(index))?;
        let wall_ms = cfg.record_timings.then(|| clock.elapsed().as_secs_f64() * 1e3);
        report.steps.push(StepReport {
            index,
            n_events: ev.len(),
            t_start: ev.t_start(),
            t_end: ev.t_end(),
            partial: group.partial,
            fwl: score,
            wall_ms,
            ..StepReport::default()
        });
        prev = frame.clone();
        state = next_state;
        frames.push(frame);
        timestamps.push(ev.t_end());
        flows.push(flow);
    }
    report.update_means();
    Ok(Reconstruction {
        frames,
        timestamps,
        flows,
        report,
    })
}

/// Warps codes on the half-resolution grid with the downsampled flow.
pub fn warp_codes(codes: &Tensor, flow: &FlowField) -> Result<Tensor> {
    forward_warp_codes(codes, &downsample_flow(flow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventsim::Event;
    use crate::sparse::{init_weights_from_dict, step_constant, DictionaryPair};

    fn stream() -> EventStream {
        let ev: Vec<Event> = (0..40)
            .map(|i| {
                Event::new(
                    (i * 3 % 8) as u16,
                    (i * 5 % 6) as u16,
                    i as f64 * 0.01,
                    if i % 3 == 0 { -1 } else { 1 },
                )
            })
            .collect();
        EventStream::new(8, 6, 0.0, 0.5, ev).unwrap()
    }

    fn weights() -> CistaWeights {
        let d = DictionaryPair::random(4, 3, 3, 7);
        init_weights_from_dict(&d, 0.01, step_constant(&d, 3, 4), 2).unwrap()
    }

    fn cfg() -> RunConfig {
        RunConfig {
            bins: 3,
            events_per_group: 15,
            ..RunConfig::default()
        }
    }

    #[test]
    fn one_frame_per_group() {
        let r = run_reconstruction(&stream(), &cfg(), &mut ZeroFlow, &weights()).unwrap();
        assert_eq!(r.frames.len(), 3);
        assert_eq!(r.flows.len(), 3);
        assert!(r.report.steps[2].partial);
        assert_eq!(r.timestamps.last(), Some(&0.5));
        let with_initial = RunConfig {
            emit_initial_frame: true,
            ..cfg()
        };
        let r = run_reconstruction(&stream(), &with_initial, &mut ZeroFlow, &weights()).unwrap();
        assert_eq!(r.frames.len(), 4);
        assert!(r.frames[0].as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_flow_matches_no_warp() {
        let a = run_reconstruction(&stream(), &cfg(), &mut ZeroFlow, &weights()).unwrap();
        let none = RunConfig {
            warp: WarpMode::None,
            ..cfg()
        };
        let b = run_reconstruction(&stream(), &none, &mut ZeroFlow, &weights()).unwrap();
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn empty_stream_gives_one_zero_frame() {
        let s = EventStream::empty(8, 6, 0.0, 1.0);
        let r = run_reconstruction(&s, &cfg(), &mut ZeroFlow, &weights()).unwrap();
        assert_eq!(r.frames.len(), 1);
        assert!(r.frames[0].as_slice().iter().all(|&v| v == 0.0));
        assert!(r.report.steps.is_empty());
    }

    #[test]
    fn exhausted_provider_names_the_step() {
        let mut p = GroundTruthFlow::from_fields(vec![FlowField::zeros(8, 6)]);
        match run_reconstruction(&stream(), &cfg(), &mut p, &weights()) {
            Err(Error::Step { step, source }) => {
                assert_eq!(step, 1);
                assert!(matches!(*source, Error::ProviderExhausted { step: 1 }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bin_mismatch_is_a_config_error() {
        let bad = RunConfig { bins: 4, ..cfg() };
        let e = run_reconstruction(&stream(), &bad, &mut ZeroFlow, &weights()).unwrap_err();
        assert_eq!(e.kind(), crate::error::ErrorKind::Config);
    }

    #[test]
    fn timings_only_when_requested() {
        let r = run_reconstruction(&stream(), &cfg(), &mut ZeroFlow, &weights()).unwrap();
        assert!(r.report.steps.iter().all(|s| s.wall_ms.is_none()));
        let timed = RunConfig {
            record_timings: true,
            ..cfg()
        };
        let r = run_reconstruction(&stream(), &timed, &mut ZeroFlow, &weights()).unwrap();
        assert!(r.report.steps.iter().all(|s| s.wall_ms.is_some()));
    }
}
