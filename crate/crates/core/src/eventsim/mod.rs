//! Synthetic scenes with known affine motion and a per-pixel event model.

mod scene;
mod simulator;
mod texture;

pub use scene::{
    adaptive_timestep, ground_truth_flow, render_scene, AffineVelocity, Background, ObjectSpec, Pose, Scene,
    SceneConfig, Shape, MAX_OBJECTS,
};
pub use simulator::{emit_events, lin_log, simulate, SimParams, Simulation};
pub use texture::Texture;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single brightness-change report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Seconds.
    pub t: f64,
    /// +1 or -1.
    pub polarity: i8,
}

impl Event {
    pub fn new(x: u16, y: u16, t: f64, polarity: i8) -> Self {
        Self { x, y, t, polarity }
    }

    /// Total order used for every event stream: time, then row, column, polarity.
    pub fn stream_order(&self, other: &Event) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.y.cmp(&other.y))
            .then(self.x.cmp(&other.x))
            .then(self.polarity.cmp(&other.polarity))
    }
}

/// Time-ordered events together with the sensor geometry and time window.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    width: usize,
    height: usize,
    t_start: f64,
    t_end: f64,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, validating ordering, polarity, bounds and window.
    pub fn new(width: usize, height: usize, t_start: f64, t_end: f64, events: Vec<Event>) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_end < t_start {
            return Err(Error::Parameter(format!("invalid stream window [{t_start}, {t_end}]")));
        }
        for (i, e) in events.iter().enumerate() {
            if e.x as usize >= width || e.y as usize >= height {
                return Err(Error::Format(format!(
                    "event {i} at ({}, {}) outside {width}x{height} sensor",
                    e.x, e.y
                )));
            }
            if e.polarity != 1 && e.polarity != -1 {
                return Err(Error::Format(format!("event {i} has polarity {}", e.polarity)));
            }
            if !(e.t >= t_start && e.t <= t_end) {
                return Err(Error::EventOutsideWindow {
                    index: i,
                    t: e.t,
                    t_start,
                    t_end,
                });
            }
            if i > 0 && events[i - 1].t > e.t {
                return Err(Error::Format(format!("event {i} breaks time ordering")));
            }
        }
        Ok(Self {
            width,
            height,
            t_start,
            t_end,
            events,
        })
    }

    /// Sorts `events` into stream order before validating.
    pub fn from_unsorted(
        width: usize,
        height: usize,
        t_start: f64,
        t_end: f64,
        mut events: Vec<Event>,
    ) -> Result<Self> {
        events.sort_by(Event::stream_order);
        Self::new(width, height, t_start, t_end, events)
    }

    pub fn empty(width: usize, height: usize, t_start: f64, t_end: f64) -> Self {
        Self {
            width,
            height,
            t_start,
            t_end,
            events: Vec::new(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        t_start: f64,
        t_end: f64,
        events: Vec<Event>,
    ) -> Self {
        Self {
            width,
            height,
            t_start,
            t_end,
            events,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    /// Sum of polarities.
    pub fn signed_count(&self) -> i64 {
        self.events.iter().map(|e| e.polarity as i64).sum()
    }

    /// Same stream with every polarity flipped.
    pub fn negated(&self) -> EventStream {
        let mut out = self.clone();
        for e in &mut out.events {
            e.polarity = -e.polarity;
        }
        out
    }
}

impl<'a> IntoIterator for &'a EventStream {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_and_out_of_bounds() {
        let a = Event::new(0, 0, 0.2, 1);
        let b = Event::new(1, 0, 0.1, -1);
        assert!(EventStream::new(4, 4, 0.0, 1.0, vec![a, b]).is_err());
        assert!(EventStream::from_unsorted(4, 4, 0.0, 1.0, vec![a, b]).is_ok());
        let oob = Event::new(4, 0, 0.1, 1);
        assert!(EventStream::new(4, 4, 0.0, 1.0, vec![oob]).is_err());
        let bad_pol = Event::new(0, 0, 0.1, 0);
        assert!(EventStream::new(4, 4, 0.0, 1.0, vec![bad_pol]).is_err());
    }

    #[test]
    fn tie_break_is_row_column_polarity() {
        let mut ev = [
            Event::new(2, 1, 0.5, 1),
            Event::new(1, 1, 0.5, 1),
            Event::new(1, 1, 0.5, -1),
            Event::new(3, 0, 0.5, 1),
        ];
        ev.sort_by(Event::stream_order);
        let keys: Vec<_> = ev.iter().map(|e| (e.y, e.x, e.polarity)).collect();
        assert_eq!(keys, vec![(0, 3, 1), (1, 1, -1), (1, 1, 1), (1, 2, 1)]);
    }
}
