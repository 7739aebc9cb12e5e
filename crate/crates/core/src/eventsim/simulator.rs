use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::scene::{Scene, SceneConfig};
use super::{Event, EventStream};
use crate::error::{Error, Result};
use crate::tensor::Frame;

const MIN_THRESHOLD: f64 = 0.01;
/// Junction of the linear and logarithmic segments, in 8-bit counts.
const LIN_LOG_KNEE: f64 = 20.0;

/// Pixel model parameters for [`emit_events`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Mean positive contrast threshold (log units).
    pub threshold_mean: f64,
    pub threshold_std: f64,
    /// Mean of the ratio C_n / C_p.
    pub neg_pos_ratio_mean: f64,
    pub neg_pos_ratio_std: f64,
    /// First-order lowpass cutoff; 0 disables filtering.
    pub cutoff_hz: f64,
    pub refractory_s: f64,
    pub leak_rate_hz: f64,
    pub shot_noise_hz: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            threshold_mean: 0.2,
            threshold_std: 0.03,
            neg_pos_ratio_mean: 1.0,
            neg_pos_ratio_std: 0.1,
            cutoff_hz: 200.0,
            refractory_s: 1e-3,
            leak_rate_hz: 0.1,
            shot_noise_hz: 1.0,
            seed: 0,
        }
    }
}

impl SimParams {
    /// Ideal pixels: one fixed symmetric threshold, no filtering or noise.
    pub fn noiseless(threshold: f64) -> Self {
        Self {
            threshold_mean: threshold,
            threshold_std: 0.0,
            neg_pos_ratio_mean: 1.0,
            neg_pos_ratio_std: 0.0,
            cutoff_hz: 0.0,
            refractory_s: 0.0,
            leak_rate_hz: 0.0,
            shot_noise_hz: 0.0,
            seed: 0,
        }
    }

    /// Per-sequence randomisation of the training data generator: mean
    /// threshold drawn uniformly from {0.2, 0.4, 0.6, 0.8, 1.0}, cutoff of
    /// 200 Hz for half the sequences and 150·N(1, 0.2) Hz for the rest.
    pub fn sample_for_sequence(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = [0.2, 0.4, 0.6, 0.8, 1.0];
        let threshold_mean = means[rng.random_range(0..means.len())];
        let cutoff_hz = if rng.random_bool(0.5) {
            200.0
        } else {
            let n = Normal::new(1.0f64, 0.2).expect("valid normal");
            (150.0 * n.sample(&mut rng)).max(1.0)
        };
        Self {
            threshold_mean,
            cutoff_hz,
            seed: rng.random(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.threshold_mean > 0.0
            && self.threshold_std >= 0.0
            && self.neg_pos_ratio_std >= 0.0
            && self.cutoff_hz >= 0.0
            && self.refractory_s >= 0.0
            && self.leak_rate_hz >= 0.0
            && self.shot_noise_hz >= 0.0;
        let finite = [
            self.threshold_mean,
            self.threshold_std,
            self.neg_pos_ratio_mean,
            self.neg_pos_ratio_std,
            self.cutoff_hz,
            self.refractory_s,
            self.leak_rate_hz,
            self.shot_noise_hz,
        ]
        .iter()
        .all(|v| v.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid simulator parameters: {self:?}")))
        }
    }
}

/// Lin-log brightness of an intensity in [0, 1]: `ln(255·I)` above 20
/// counts, a straight line below with value and slope matched at the knee.
pub fn lin_log(intensity: f64) -> f64 {
    let counts = intensity * 255.0;
    if counts >= LIN_LOG_KNEE {
        counts.ln()
    } else {
        LIN_LOG_KNEE.ln() + (counts - LIN_LOG_KNEE) / LIN_LOG_KNEE
    }
}

/// Converts a timed frame sequence into events.
///
/// Per pixel: lin-log brightness, optional first-order lowpass, per-pixel
/// thresholds drawn once from the seed, one event per full threshold
/// crossing (timestamps interpolated linearly between frames), a leak drift
/// of `-leak_rate·C_p` per second, Poisson shot noise, and refractory
/// suppression over the merged per-pixel timeline.
pub fn emit_events(frames: &[Frame], timestamps: &[f64], params: &SimParams) -> Result<EventStream> {
    params.validate()?;
    if frames.len() < 2 || frames.len() != timestamps.len() {
        return Err(Error::Parameter(format!(
            "need >= 2 frames with one timestamp each, got {} frames / {} timestamps",
            frames.len(),
            timestamps.len()
        )));
    }
    if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("frame timestamps must strictly increase".into()));
    }
    let (width, height) = (frames[0].width(), frames[0].height());
    if let Some(f) = frames.iter().find(|f| f.width() != width || f.height() != height) {
        return Err(Error::Dimension(format!(
            "frame of {}x{} in a {width}x{height} sequence",
            f.width(),
            f.height()
        )));
    }
    if width > u16::MAX as usize + 1 || height > u16::MAX as usize + 1 {
        return Err(Error::Parameter("sensor exceeds 16-bit coordinates".into()));
    }

    let n_pix = width * height;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let thresholds = sample_thresholds(n_pix, params, &mut rng)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(params.seed);
    noise_rng.set_stream(1);

    let t_start = timestamps[0];
    let t_end = *timestamps.last().expect("non-empty");
    let mut events = Vec::new();
    let mut signal = vec![0.0; frames.len()];
    let mut pixel_events: Vec<(f64, i8)> = Vec::new();

    for (idx, &(cp, cn)) in thresholds.iter().enumerate() {
        brightness_trace(frames, timestamps, idx, params, cp, &mut signal);

        pixel_events.clear();
        threshold_crossings(&signal, timestamps, cp, cn, &mut pixel_events);
        if params.shot_noise_hz > 0.0 {
            shot_noise(t_start, t_end, params.shot_noise_hz, &mut noise_rng, &mut pixel_events);
        }
        pixel_events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let x = (idx % width) as u16;
        let y = (idx / width) as u16;
        let mut last: Option<f64> = None;
        for &(t, p) in &pixel_events {
            if let Some(prev) = last {
                if t - prev < params.refractory_s {
                    continue;
                }
            }
            last = Some(t);
            events.push(Event::new(x, y, t.clamp(t_start, t_end), p));
        }
    }

    events.sort_by(Event::stream_order);
    Ok(EventStream::from_parts_unchecked(width, height, t_start, t_end, events))
}

fn sample_thresholds(n: usize, params: &SimParams, rng: &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>> {
    let c_dist = Normal::new(params.threshold_mean, params.threshold_std)
        .map_err(|e| Error::Parameter(format!("threshold distribution: {e}")))?;
    let r_dist = Normal::new(params.neg_pos_ratio_mean, params.neg_pos_ratio_std)
        .map_err(|e| Error::Parameter(format!("ratio distribution: {e}")))?;
    Ok((0..n)
        .map(|_| {
            let cp = c_dist.sample(rng).max(MIN_THRESHOLD);
            let cn = (r_dist.sample(rng) * cp).max(MIN_THRESHOLD);
            (cp, cn)
        })
        .collect())
}

/// Filtered, leak-drifted brightness of one pixel at every frame time.
fn brightness_trace(frames: &[Frame], timestamps: &[f64], idx: usize, params: &SimParams, cp: f64, out: &mut [f64]) {
    let mut state = lin_log(frames[0].as_slice()[idx]);
    let t0 = timestamps[0];
    for (k, frame) in frames.iter().enumerate() {
        let target = lin_log(frame.as_slice()[idx]);
        if k > 0 {
            if params.cutoff_hz > 0.0 {
                let dt = timestamps[k] - timestamps[k - 1];
                let alpha = 1.0 - (-2.0 * PI * params.cutoff_hz * dt).exp();
                state += alpha * (target - state);
            } else {
                state = target;
            }
        }
        out[k] = state - params.leak_rate_hz * cp * (timestamps[k] - t0);
    }
}

/// Events for every full threshold crossing of the piecewise-linear signal.
/// Suppressed events still advance the memorised reference level.
fn threshold_crossings(signal: &[f64], timestamps: &[f64], cp: f64, cn: f64, out: &mut Vec<(f64, i8)>) {
    let mut reference = signal[0];
    for k in 0..signal.len() - 1 {
        let (a, b) = (signal[k], signal[k + 1]);
        let (ta, tb) = (timestamps[k], timestamps[k + 1]);
        if b > a {
            while b - reference >= cp {
                let level = reference + cp;
                let frac = ((level - a) / (b - a)).clamp(0.0, 1.0);
                out.push((ta + frac * (tb - ta), 1));
                reference = level;
            }
        } else if b < a {
            while reference - b >= cn {
                let level = reference - cn;
                let frac = ((a - level) / (a - b)).clamp(0.0, 1.0);
                out.push((ta + frac * (tb - ta), -1));
                reference = level;
            }
        }
    }
}

fn shot_noise(t_start: f64, t_end: f64, rate: f64, rng: &mut ChaCha8Rng, out: &mut Vec<(f64, i8)>) {
    let gap = Exp::new(rate).expect("positive rate");
    let mut t = t_start;
    loop {
        t += gap.sample(rng);
        if t > t_end {
            break;
        }
        let p = if rng.random_bool(0.5) { 1 } else { -1 };
        out.push((t, p));
    }
}

/// Frames rendered at the adaptive rate together with their events.
pub struct Simulation {
    pub timestamps: Vec<f64>,
    pub frames: Vec<Frame>,
    pub events: EventStream,
}

/// Renders `config` over its whole duration with steps that keep every
/// scene point within one pixel of motion, then emits events.
pub fn simulate(config: &SceneConfig, params: &SimParams) -> Result<Simulation> {
    let scene = Scene::new(config.clone())?;
    let mut timestamps = vec![0.0];
    let mut t = 0.0;
    while t < config.duration {
        let dt = scene.adaptive_timestep(t);
        t = if t + dt >= config.duration - 1e-12 {
            config.duration
        } else {
            t + dt
        };
        timestamps.push(t);
    }
    let frames: Vec<Frame> = timestamps.iter().map(|&t| scene.render(t)).collect();
    let events = emit_events(&frames, &timestamps, params)?;
    Ok(Simulation {
        timestamps,
        frames,
        events,
    })
}
