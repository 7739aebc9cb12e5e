use std::path::Path;

use super::{flow_file_name, frame_file_name, io};
use crate::encode::slice_by_count;
use crate::error::{Error, Result};
use crate::eventsim::{EventStream, Scene};
use crate::tensor::Frame;
use crate::warp::FlowField;

/// Reference frames and the exact flow leading to each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub timestamps: Vec<f64>,
    pub frames: Vec<Frame>,
    /// `flows[i]` maps time `timestamps[i - 1]` (the start time for `i = 0`)
    /// to `timestamps[i]`.
    pub flows: Vec<FlowField>,
}

impl GroundTruth {
    /// Renders `scene` at each of `times`, which must be nondecreasing and
    /// not earlier than `start`.
    pub fn render(scene: &Scene, start: f64, times: &[f64]) -> Result<Self> {
        let cfg = scene.config();
        let mut prev = start;
        let mut frames = Vec::with_capacity(times.len());
        let mut flows = Vec::with_capacity(times.len());
        for &t in times {
            if t < prev || !(0.0..=cfg.duration).contains(&t) {
                return Err(Error::Parameter(format!(
                    "ground-truth time {t} is out of order or outside [0, {}]",
                    cfg.duration
                )));
            }
            frames.push(scene.render(t));
            flows.push(if t > prev {
                scene.ground_truth_flow(prev, t)
            } else {
                FlowField::zeros(cfg.width, cfg.height)
            });
            prev = t;
        }
        Ok(Self {
            timestamps: times.to_vec(),
            frames,
            flows,
        })
    }

    /// Ground truth at the end of every `events_per_group` group of `events`,
    /// the times at which a reconstruction run emits frames.
    pub fn for_groups(scene: &Scene, events: &EventStream, events_per_group: usize) -> Result<Self> {
        let ends: Vec<f64> = slice_by_count(events, events_per_group)?
            .iter()
            .map(|g| g.events.t_end())
            .collect();
        Self::render(scene, events.t_start(), &ends)
    }

    /// Writes numbered 16-bit PNG frames with `timestamps.txt` into
    /// `frames_dir` and numbered `.flo` files into `flow_dir`.
    pub fn write(&self, frames_dir: Option<&Path>, flow_dir: Option<&Path>) -> Result<()> {
        if let Some(dir) = frames_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for (i, f) in self.frames.iter().enumerate() {
                io::write_image(&dir.join(frame_file_name(i)), f, io::BitDepth::Sixteen)?;
            }
            io::write_timestamps(&dir.join(io::TIMESTAMPS_FILE), &self.timestamps)?;
        }
        if let Some(dir) = flow_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for (i, f) in self.flows.iter().enumerate() {
                io::write_flo(&dir.join(flow_file_name(i)), f)?;
            }
        }
        Ok(())
    }
}
