//! Fixtures shared by the kernel benchmarks.

use evrecon::eventsim::{simulate, AffineVelocity, SceneConfig, SimParams, Texture};
use evrecon::sparse::{init_weights_from_dict, step_constant, DictionaryPair};
use evrecon::{CistaWeights, EventStream, FlowField, Frame};

/// Events of a checkerboard translating across a `side`×`side` sensor.
pub fn translating_events(side: usize, duration: f64) -> EventStream {
    let cfg = SceneConfig::background_only(
        side,
        side,
        Texture::checker(6.0),
        AffineVelocity::translation(0.5 * side as f64, 0.2 * side as f64),
        duration,
    );
    simulate(&cfg, &SimParams::noiseless(0.2)).expect("valid scene").events
}

/// Smoothly varying flow with displacements of a few pixels.
pub fn swirl_flow(side: usize) -> FlowField {
    let c = 0.5 * side as f32;
    FlowField::from_fn(side, side, |x, y| {
        let (dx, dy) = (x as f32 - c, y as f32 - c);
        (1.5 - 0.05 * dy, 0.5 + 0.05 * dx)
    })
}

pub fn ramp_frame(side: usize) -> Frame {
    Frame::from_fn(side, side, |x, y| ((x + 2 * y) % side) as f64 / side as f64)
}

/// Weights unrolling `blocks` ISTA iterations on a random dictionary.
pub fn oracle_weights(bins: usize, codes: usize, blocks: usize, side: usize) -> (DictionaryPair, CistaWeights) {
    let dict = DictionaryPair::random(bins + 1, codes, 3, 7);
    let step = step_constant(&dict, side, side);
    let w = init_weights_from_dict(&dict, 0.05, step, blocks).expect("consistent dictionary");
    (dict, w)
}
