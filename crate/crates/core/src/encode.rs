//! Event stream encodings: temporal voxel grids, signed event images and
//! fixed-count slicing.

use crate::error::{Error, Result};
use crate::eventsim::EventStream;
use crate::tensor::{Image, Tensor};

/// B×H×W signed polarity mass with linear temporal splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    data: Tensor,
    t_start: f64,
    t_end: f64,
}

impl VoxelGrid {
    /// Wraps an existing `B × H × W` tensor.
    pub fn from_tensor(data: Tensor, t_start: f64, t_end: f64) -> Result<Self> {
        if data.channels() == 0 {
            return Err(Error::Dimension("voxel grid needs at least one bin".into()));
        }
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::Parameter(format!("empty voxel window [{t_start}, {t_end}]")));
        }
        Ok(Self { data, t_start, t_end })
    }

    pub fn bins(&self) -> usize {
        self.data.channels()
    }

    pub fn height(&self) -> usize {
        self.data.height()
    }

    pub fn width(&self) -> usize {
        self.data.width()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn get(&self, bin: usize, y: usize, x: usize) -> f64 {
        *self.data.at(bin, y, x)
    }

    pub fn total_mass(&self) -> f64 {
        self.data.as_slice().iter().sum()
    }

    /// Sum over the temporal axis.
    pub fn collapse(&self) -> Image {
        let mut out = Image::zeros(self.width(), self.height());
        for b in 0..self.bins() {
            for (o, v) in out.as_mut_slice().iter_mut().zip(self.data.plane(b)) {
                *o += v;
            }
        }
        out
    }

    /// Scales the grid so its largest magnitude is 1 (no-op for an all-zero grid).
    pub fn normalize_max_abs(&mut self) {
        let m = self.data.max_abs();
        if m > 0.0 {
            for v in self.data.as_mut_slice() {
                *v /= m;
            }
        }
    }
}

/// Accumulates `events` into `bins` temporal bins over `[t_start, t_end]`.
///
/// With `t* = (t - t_start) / (t_end - t_start) · (B - 1)`, an event of
/// polarity `p` adds `p·(1 - frac(t*))` to bin `floor(t*)` and `p·frac(t*)`
/// to the next bin. The window is closed on both ends.
pub fn build_voxel_grid(events: &EventStream, bins: usize, t_start: f64, t_end: f64) -> Result<VoxelGrid> {
    if bins == 0 {
        return Err(Error::Parameter("voxel grid needs at least one bin".into()));
    }
    if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(Error::Parameter(format!("empty voxel window [{t_start}, {t_end}]")));
    }
    let (w, h) = (events.width(), events.height());
    let mut data = Tensor::zeros(bins, h, w);
    let span = (bins - 1) as f64 / (t_end - t_start);
    let plane = w * h;
    let buf = data.as_mut_slice();
    for (index, e) in events.iter().enumerate() {
        if !(e.t >= t_start && e.t <= t_end) {
            return Err(Error::EventOutsideWindow {
                index,
                t: e.t,
                t_start,
                t_end,
            });
        }
        let p = e.polarity as f64;
        let pix = e.y as usize * w + e.x as usize;
        let tn = ((e.t - t_start) * span).min((bins - 1) as f64);
        let lower = tn.floor();
        let frac = tn - lower;
        let b = lower as usize;
        if b + 1 >= bins {
            buf[b * plane + pix] += p;
        } else {
            buf[b * plane + pix] += p * (1.0 - frac);
            buf[(b + 1) * plane + pix] += p * frac;
        }
    }
    Ok(VoxelGrid { data, t_start, t_end })
}

/// Voxel grid over the stream's own window.
pub fn voxel_grid_for_stream(events: &EventStream, bins: usize) -> Result<VoxelGrid> {
    build_voxel_grid(events, bins, events.t_start(), events.t_end())
}

/// One fixed-count group of events.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSlice {
    pub events: EventStream,
    /// Set on a trailing group holding fewer than the requested count.
    pub partial: bool,
}

/// Splits `events` into consecutive groups of `count` events.
///
/// Group `i` spans from the end of group `i-1` (the stream start for the
/// first) to its last event's timestamp (the stream end for the last).
pub fn slice_by_count(events: &EventStream, count: usize) -> Result<Vec<EventSlice>> {
    if count == 0 {
        return Err(Error::Parameter("slice size must be at least 1".into()));
    }
    let chunks: Vec<_> = events.events().chunks(count).collect();
    let n = chunks.len();
    let mut out = Vec::with_capacity(n);
    let mut start = events.t_start();
    for (i, chunk) in chunks.into_iter().enumerate() {
        let last = i + 1 == n;
        let end = if last {
            events.t_end()
        } else {
            chunk.last().expect("non-empty chunk").t
        };
        out.push(EventSlice {
            events: EventStream::from_parts_unchecked(events.width(), events.height(), start, end, chunk.to_vec()),
            partial: chunk.len() < count,
        });
        start = end;
    }
    Ok(out)
}

/// H×W map of signed polarity sums.
pub fn event_image(events: &EventStream) -> Image {
    let mut img = Image::zeros(events.width(), events.height());
    let w = events.width();
    let buf = img.as_mut_slice();
    for e in events {
        buf[e.y as usize * w + e.x as usize] += e.polarity as f64;
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventsim::Event;

    fn stream(events: Vec<Event>) -> EventStream {
        EventStream::from_unsorted(4, 3, 0.0, 1.0, events).unwrap()
    }

    #[test]
    fn event_on_bin_centre_is_exact() {
        // 5 bins over [0,1]: bin 2 sits at t = 0.5
        let g = build_voxel_grid(&stream(vec![Event::new(1, 2, 0.5, 1)]), 5, 0.0, 1.0).unwrap();
        for b in 0..5 {
            for y in 0..3 {
                for x in 0..4 {
                    let expect = if (b, y, x) == (2, 2, 1) { 1.0 } else { 0.0 };
                    assert_eq!(g.get(b, y, x), expect);
                }
            }
        }
    }

    #[test]
    fn midway_event_splits_in_half() {
        // 5 bins: bins 0 and 1 sit at t=0 and t=0.25
        let g = build_voxel_grid(&stream(vec![Event::new(0, 0, 0.125, -1)]), 5, 0.0, 1.0).unwrap();
        assert_eq!(g.get(0, 0, 0), -0.5);
        assert_eq!(g.get(1, 0, 0), -0.5);
        assert_eq!(g.total_mass(), -1.0);
    }

    #[test]
    fn last_bin_takes_full_mass() {
        let g = build_voxel_grid(&stream(vec![Event::new(3, 0, 1.0, 1)]), 4, 0.0, 1.0).unwrap();
        assert_eq!(g.get(3, 0, 3), 1.0);
        assert_eq!(g.total_mass(), 1.0);
    }

    #[test]
    fn single_bin_collects_everything() {
        let s = stream(vec![Event::new(0, 0, 0.1, 1), Event::new(0, 0, 0.9, 1)]);
        let g = build_voxel_grid(&s, 1, 0.0, 1.0).unwrap();
        assert_eq!(g.get(0, 0, 0), 2.0);
    }

    #[test]
    fn empty_stream_gives_zero_grid() {
        let g = build_voxel_grid(&stream(vec![]), 3, 0.0, 1.0).unwrap();
        assert!(g.tensor().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_out_of_window_and_zero_bins() {
        let s = stream(vec![Event::new(0, 0, 0.2, 1), Event::new(0, 0, 0.8, 1)]);
        match build_voxel_grid(&s, 3, 0.0, 0.5) {
            Err(Error::EventOutsideWindow { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(build_voxel_grid(&s, 0, 0.0, 1.0), Err(Error::Parameter(_))));
        assert!(build_voxel_grid(&s, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn normalization_scales_to_unit_peak() {
        let s = stream(vec![
            Event::new(0, 0, 0.0, 1),
            Event::new(0, 0, 0.0, 1),
            Event::new(1, 0, 0.0, -1),
        ]);
        let mut g = build_voxel_grid(&s, 2, 0.0, 1.0).unwrap();
        g.normalize_max_abs();
        assert_eq!(g.get(0, 0, 0), 1.0);
        assert_eq!(g.get(0, 0, 1), -0.5);
    }

    #[test]
    fn slicing_counts() {
        let ev: Vec<Event> = (0..10).map(|i| Event::new(0, 0, i as f64 * 0.1, 1)).collect();
        let s = stream(ev);
        let slices = slice_by_count(&s, 4).unwrap();
        let sizes: Vec<_> = slices.iter().map(|s| (s.events.len(), s.partial)).collect();
        assert_eq!(sizes, vec![(4, false), (4, false), (2, true)]);
        assert_eq!(slices[0].events.t_start(), 0.0);
        assert_eq!(slices[0].events.t_end(), slices[1].events.t_start());
        assert_eq!(slices[2].events.t_end(), 1.0);
        assert!(slice_by_count(&stream(vec![]), 4).unwrap().is_empty());
        assert!(slice_by_count(&s, 0).is_err());
    }

    #[test]
    fn exact_division_has_no_partial() {
        let ev: Vec<Event> = (0..30).map(|i| Event::new(1, 1, i as f64 / 30.0, 1)).collect();
        let slices = slice_by_count(&stream(ev), 15).unwrap();
        assert_eq!(slices.len(), 2);
        assert!(slices.iter().all(|s| !s.partial && s.events.len() == 15));
    }

    #[test]
    fn event_image_signed_sum() {
        let s = stream(vec![
            Event::new(2, 1, 0.1, 1),
            Event::new(2, 1, 0.2, 1),
            Event::new(2, 1, 0.3, -1),
        ]);
        let img = event_image(&s);
        assert_eq!(img.get(2, 1), 1.0);
        assert_eq!(img.as_slice().iter().sum::<f64>(), 1.0);
        assert_eq!(event_image(&s.negated()), img.map(|v| -v));
        assert!(event_image(&stream(vec![])).as_slice().iter().all(|&v| v == 0.0));
    }
}
