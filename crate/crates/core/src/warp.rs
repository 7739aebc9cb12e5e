//! Forward (splatting) warps of frames, sparse codes and raw events, and
//! the forward warping loss.
//!
//! Every source sample is pushed to `(x + u, y + v)` and distributed over
//! the four surrounding pixels with bilinear weights. Targets are divided by
//! their accumulated weight, so many-to-one collisions average. Targets that
//! receive no weight at all keep the unwarped source value.

use crate::encode::event_image;
use crate::error::{Error, Result};
use crate::eventsim::EventStream;
use crate::tensor::{Frame, Image, Tensor};

/// Per-pixel displacement in pixels, forward in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    /// Validates sizes and finiteness. See [`FlowField::within_sanity_bound`]
    /// for the magnitude check.
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::Dimension(format!(
                "flow components of {} / {} values for {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        if let Some(bad) = u.iter().chain(&v).find(|c| !c.is_finite()) {
            return Err(Error::Format(format!("non-finite flow component {bad}")));
        }
        Ok(Self { width, height, u, v })
    }

    /// True when no component exceeds `max(H, W)` pixels.
    pub fn within_sanity_bound(&self) -> bool {
        let bound = self.width.max(self.height) as f32;
        self.u.iter().chain(&self.v).all(|c| c.abs() <= bound)
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Self {
        Self { width, height, u, v }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn u(&self, x: usize, y: usize) -> f64 {
        self.u[y * self.width + x] as f64
    }

    #[inline]
    pub fn v(&self, x: usize, y: usize) -> f64 {
        self.v[y * self.width + x] as f64
    }

    pub fn u_slice(&self) -> &[f32] {
        &self.u
    }

    pub fn v_slice(&self) -> &[f32] {
        &self.v
    }

    pub fn scaled(&self, s: f32) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|c| c * s).collect(),
            v: self.v.iter().map(|c| c * s).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().chain(&self.v).all(|&c| c == 0.0)
    }

    fn check_dims(&self, width: usize, height: usize, what: &str) -> Result<()> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what} is {width}x{height} but flow is {}x{}",
                self.width, self.height
            )))
        }
    }
}

/// One bilinear contribution of a source pixel to a target pixel.
#[derive(Debug, Clone, Copy)]
struct Tap {
    src: u32,
    dst: u32,
    weight: f64,
}

fn bilinear_taps(width: usize, height: usize, src: usize, tx: f64, ty: f64, out: &mut Vec<Tap>) {
    let x0 = tx.floor();
    let y0 = ty.floor();
    let fx = tx - x0;
    let fy = ty - y0;
    let corners = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1.0, y0, fx * (1.0 - fy)),
        (x0, y0 + 1.0, (1.0 - fx) * fy),
        (x0 + 1.0, y0 + 1.0, fx * fy),
    ];
    for (cx, cy, w) in corners {
        if w == 0.0 || cx < 0.0 || cy < 0.0 || cx >= width as f64 || cy >= height as f64 {
            continue;
        }
        out.push(Tap {
            src: src as u32,
            dst: (cy as usize * width + cx as usize) as u32,
            weight: w,
        });
    }
}

fn flow_taps(flow: &FlowField) -> Vec<Tap> {
    let (w, h) = (flow.width, flow.height);
    let mut taps = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let tx = x as f64 + flow.u[i] as f64;
            let ty = y as f64 + flow.v[i] as f64;
            bilinear_taps(w, h, i, tx, ty, &mut taps);
        }
    }
    taps
}

/// Raw splat accumulators before normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat {
    /// Weighted sum of source values landing on each pixel.
    pub values: Image,
    /// Sum of bilinear weights landing on each pixel.
    pub weights: Image,
}

impl Splat {
    pub fn total_weight(&self) -> f64 {
        self.weights.as_slice().iter().sum()
    }

    /// Pixels that received no weight.
    pub fn holes(&self) -> Vec<bool> {
        self.weights.as_slice().iter().map(|&w| w == 0.0).collect()
    }
}

/// Splats `frame` along `flow` without normalising.
pub fn splat(frame: &Image, flow: &FlowField) -> Result<Splat> {
    flow.check_dims(frame.width(), frame.height(), "frame")?;
    let taps = flow_taps(flow);
    let (w, h) = (frame.width(), frame.height());
    let mut values = Image::zeros(w, h);
    let mut weights = Image::zeros(w, h);
    let src = frame.as_slice();
    let (vb, wb) = (values.as_mut_slice(), weights.as_mut_slice());
    for t in &taps {
        vb[t.dst as usize] += t.weight * src[t.src as usize];
        wb[t.dst as usize] += t.weight;
    }
    Ok(Splat { values, weights })
}

/// Forward-warps an intensity frame; the result is clamped to [0, 1].
pub fn forward_warp_frame(frame: &Frame, flow: &FlowField) -> Result<Frame> {
    let s = splat(frame, flow)?;
    let out = normalize(&s, frame.as_slice());
    Ok(Image::from_vec(frame.width(), frame.height(), out)?.clamp01())
}

/// Forward-warps without clamping (signed maps, residuals).
pub fn forward_warp_unclamped(image: &Image, flow: &FlowField) -> Result<Image> {
    let s = splat(image, flow)?;
    let out = normalize(&s, image.as_slice());
    Image::from_vec(image.width(), image.height(), out)
}

fn normalize(s: &Splat, source: &[f64]) -> Vec<f64> {
    s.values
        .as_slice()
        .iter()
        .zip(s.weights.as_slice())
        .zip(source)
        .map(|((&v, &w), &src)| if w > 0.0 { v / w } else { src })
        .collect()
}

/// Forward-warps every channel of a code tensor with one shared set of
/// splat weights. No clamping.
pub fn forward_warp_codes(codes: &Tensor, flow: &FlowField) -> Result<Tensor> {
    flow.check_dims(codes.width(), codes.height(), "code tensor")?;
    let taps = flow_taps(flow);
    let n = codes.plane_len();
    let mut weights = vec![0.0; n];
    for t in &taps {
        weights[t.dst as usize] += t.weight;
    }
    let (c, h, w) = codes.shape();
    let mut out = Vec::with_capacity(c * n);
    let mut acc = vec![0.0; n];
    for ch in 0..c {
        let src = codes.plane(ch);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for t in &taps {
            acc[t.dst as usize] += t.weight * src[t.src as usize];
        }
        out.extend(
            acc.iter()
                .zip(&weights)
                .zip(src)
                .map(|((&a, &wt), &s)| if wt > 0.0 { a / wt } else { s }),
        );
    }
    Tensor::from_vec(c, h, w, out)
}

/// Bilinear 2× downsample of a flow field with vectors halved to the
/// coarse grid. Odd sizes are padded by edge replication.
pub fn downsample_flow(flow: &FlowField) -> FlowField {
    let (w, h) = (flow.width, flow.height);
    let cw = w.div_ceil(2);
    let ch = h.div_ceil(2);
    let mut u = Vec::with_capacity(cw * ch);
    let mut v = Vec::with_capacity(cw * ch);
    for y in 0..ch {
        for x in 0..cw {
            let x0 = 2 * x;
            let y0 = 2 * y;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let idx = [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1];
            let su: f64 = idx.iter().map(|&i| flow.u[i] as f64).sum();
            let sv: f64 = idx.iter().map(|&i| flow.v[i] as f64).sum();
            // average of the 2x2 cell, halved
            u.push((su * 0.125) as f32);
            v.push((sv * 0.125) as f32);
        }
    }
    FlowField::from_parts_unchecked(cw, ch, u, v)
}

/// Signed event image after moving each event along the flow to `t_ref`.
///
/// The flow is read as total displacement over the stream window, so an
/// event at `t_i` moves by `(t_ref - t_i) / (t_end - t_start)` of the flow
/// vector at its pixel. Bilinear taps outside the sensor are dropped.
pub fn warp_events(events: &EventStream, flow: &FlowField, t_ref: f64) -> Result<Image> {
    flow.check_dims(events.width(), events.height(), "event sensor")?;
    let span = events.duration();
    if !(span > 0.0) {
        return Err(Error::Parameter("event window has zero duration".into()));
    }
    let rate = 1.0 / span;
    let (w, h) = (events.width(), events.height());
    let mut img = Image::zeros(w, h);
    let mut taps = Vec::with_capacity(4);
    for e in events {
        let (x, y) = (e.x as usize, e.y as usize);
        let k = (t_ref - e.t) * rate;
        let tx = x as f64 + k * flow.u(x, y);
        let ty = y as f64 + k * flow.v(x, y);
        taps.clear();
        bilinear_taps(w, h, 0, tx, ty, &mut taps);
        let p = e.polarity as f64;
        let buf = img.as_mut_slice();
        for t in &taps {
            buf[t.dst as usize] += p * t.weight;
        }
    }
    Ok(img)
}

/// Population variance of all pixel values (0 for an empty image).
pub fn image_variance(image: &Image) -> f64 {
    let n = image.len();
    if n == 0 {
        return 0.0;
    }
    // shifting by one sample keeps constant images at exactly zero
    let pivot = image.as_slice()[0];
    let mean = image.as_slice().iter().map(|v| v - pivot).sum::<f64>() / n as f64;
    image.as_slice().iter().map(|v| (v - pivot - mean).powi(2)).sum::<f64>() / n as f64
}

/// Forward warping loss with the event images it was computed from.
#[derive(Debug, Clone)]
pub struct FwlResult {
    pub fwl: f64,
    pub warped: Image,
    pub unwarped: Image,
}

/// Variance of the flow-warped event image over that of the unwarped one.
pub fn fwl(events: &EventStream, flow: &FlowField, t_ref: f64) -> Result<f64> {
    fwl_detailed(events, flow, t_ref).map(|r| r.fwl)
}

pub fn fwl_detailed(events: &EventStream, flow: &FlowField, t_ref: f64) -> Result<FwlResult> {
    let warped = warp_events(events, flow, t_ref)?;
    let unwarped = warp_events(events, &FlowField::zeros(flow.width, flow.height), t_ref)?;
    debug_assert_eq!(unwarped, event_image(events));
    let denom = image_variance(&unwarped);
    if !(denom > 0.0) {
        return Err(Error::UndefinedMetric("unwarped event image has zero variance".into()));
    }
    Ok(FwlResult {
        fwl: image_variance(&warped) / denom,
        warped,
        unwarped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventsim::Event;

    fn ramp_frame(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0)
    }

    #[test]
    fn zero_flow_is_identity() {
        let f = ramp_frame(9, 7);
        assert_eq!(forward_warp_frame(&f, &FlowField::zeros(9, 7)).unwrap(), f);
    }

    #[test]
    fn integer_shift_moves_pixels_and_fills_holes() {
        let f = ramp_frame(10, 6);
        let out = forward_warp_frame(&f, &FlowField::constant(10, 6, 3.0, 0.0)).unwrap();
        for y in 0..6 {
            for x in 0..10 {
                let expect = if x >= 3 { f.get(x - 3, y) } else { f.get(x, y) };
                assert_eq!(out.get(x, y), expect);
            }
        }
    }

    #[test]
    fn half_pixel_flow_splits_impulse() {
        let mut f = Frame::zeros(6, 3);
        f.set(2, 1, 1.0);
        let s = splat(&f, &FlowField::constant(6, 3, 0.5, 0.0)).unwrap();
        assert_eq!(s.values.get(2, 1), 0.5);
        assert_eq!(s.values.get(3, 1), 0.5);
        assert_eq!(s.values.as_slice().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn splat_mass_matches_in_bounds_sources() {
        // flow (0.5, 0.25): taps weigh 0.375, 0.375, 0.125, 0.125; the right
        // taps survive for x <= 6 and the lower ones for y <= 3
        let flow = FlowField::constant(8, 5, 0.5, 0.25);
        let s = splat(&Frame::filled(8, 5, 1.0), &flow).unwrap();
        let expected = 40.0 * 0.375 + 35.0 * 0.375 + 32.0 * 0.125 + 28.0 * 0.125;
        assert!((s.total_weight() - expected).abs() < 1e-9, "{}", s.total_weight());

        // integer flow: every source with an in-bounds target contributes exactly 1
        let s = splat(&Frame::filled(8, 5, 1.0), &FlowField::constant(8, 5, 2.0, -1.0)).unwrap();
        assert_eq!(s.total_weight(), (6 * 4) as f64);
    }

    #[test]
    fn downsample_constant_and_zero() {
        let d = downsample_flow(&FlowField::constant(8, 6, 4.0, 2.0));
        assert_eq!((d.width(), d.height()), (4, 3));
        assert!(d.u_slice().iter().all(|&c| c == 2.0));
        assert!(d.v_slice().iter().all(|&c| c == 1.0));
        assert!(downsample_flow(&FlowField::zeros(6, 4)).is_zero());
    }

    #[test]
    fn downsample_ramp_matches_bilinear_sample() {
        let flow = FlowField::from_fn(8, 4, |x, _| (x as f32, 0.0));
        let d = downsample_flow(&flow);
        for x in 0..4 {
            // bilinear sample of u(x)=x at the coarse cell centre 2x+0.5, halved
            let oracle = (2.0 * x as f64 + 0.5) / 2.0;
            assert!((d.u(x, 0) - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn downsample_odd_size_pads() {
        let d = downsample_flow(&FlowField::constant(5, 3, 2.0, -2.0));
        assert_eq!((d.width(), d.height()), (3, 2));
        assert!(d.u_slice().iter().all(|&c| c == 1.0));
    }

    #[test]
    fn codes_warp_per_channel() {
        let a = ramp_frame(6, 4);
        let b = a.map(|v| 1.0 - 3.0 * v);
        let codes = Tensor::stack(&[a.as_slice(), b.as_slice()], 4, 6).unwrap();
        let flow = FlowField::constant(6, 4, 2.0, 1.0);
        let out = forward_warp_codes(&codes, &flow).unwrap();
        assert_eq!(out.channel_image(0), forward_warp_unclamped(&a, &flow).unwrap());
        assert_eq!(out.channel_image(1), forward_warp_unclamped(&b, &flow).unwrap());
        let id = forward_warp_codes(&codes, &FlowField::zeros(6, 4)).unwrap();
        assert_eq!(id, codes);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = Frame::zeros(4, 4);
        assert!(matches!(
            forward_warp_frame(&f, &FlowField::zeros(4, 5)),
            Err(Error::Dimension(_))
        ));
        assert!(forward_warp_codes(&Tensor::zeros(2, 4, 4), &FlowField::zeros(5, 4)).is_err());
    }

    #[test]
    fn flow_validation() {
        assert!(FlowField::new(2, 2, vec![0.0; 4], vec![0.0; 3]).is_err());
        assert!(FlowField::new(2, 2, vec![f32::NAN, 0.0, 0.0, 0.0], vec![0.0; 4]).is_err());
        assert!(!FlowField::new(2, 2, vec![3.0, 0.0, 0.0, 0.0], vec![0.0; 4])
            .unwrap()
            .within_sanity_bound());
        assert!(FlowField::new(2, 2, vec![2.0, 0.0, 0.0, 0.0], vec![0.0; 4]).is_ok());
    }

    fn small_stream() -> EventStream {
        EventStream::from_unsorted(
            6,
            5,
            0.0,
            1.0,
            vec![
                Event::new(1, 1, 0.0, 1),
                Event::new(2, 1, 0.5, 1),
                Event::new(3, 2, 1.0, -1),
                Event::new(3, 2, 0.2, 1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn warp_events_zero_flow_is_event_image() {
        let s = small_stream();
        assert_eq!(warp_events(&s, &FlowField::zeros(6, 5), 1.0).unwrap(), event_image(&s));
    }

    #[test]
    fn events_at_reference_time_do_not_move() {
        let ev: Vec<Event> = (0..4).map(|i| Event::new(i, 1, 0.5, 1)).collect();
        let s = EventStream::new(6, 5, 0.0, 1.0, ev).unwrap();
        let flow = FlowField::constant(6, 5, 2.5, -1.0);
        assert_eq!(warp_events(&s, &flow, 0.5).unwrap(), event_image(&s));
    }

    #[test]
    fn warp_events_moves_by_fraction_of_window() {
        let s = EventStream::new(6, 5, 0.0, 2.0, vec![Event::new(0, 0, 1.0, 1)]).unwrap();
        // half the window remains: moves by half of (4, 2)
        let img = warp_events(&s, &FlowField::constant(6, 5, 4.0, 2.0), 2.0).unwrap();
        assert_eq!(img.get(2, 1), 1.0);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(image_variance(&Image::filled(4, 4, 0.3)), 0.0);
        let half = Image::from_fn(4, 2, |x, _| if x < 2 { 0.0 } else { 1.0 });
        assert_eq!(image_variance(&half), 0.25);
        let v = image_variance(&ramp_frame(5, 5));
        let v2 = image_variance(&ramp_frame(5, 5).map(|x| 2.0 * x));
        assert!((v2 - 4.0 * v).abs() < 1e-12);
    }

    #[test]
    fn fwl_zero_flow_is_one_and_degenerate_errors() {
        let s = small_stream();
        assert_eq!(fwl(&s, &FlowField::zeros(6, 5), 1.0).unwrap(), 1.0);
        let empty = EventStream::empty(6, 5, 0.0, 1.0);
        assert!(matches!(
            fwl(&empty, &FlowField::zeros(6, 5), 1.0),
            Err(Error::UndefinedMetric(_))
        ));
        let instant = EventStream::empty(6, 5, 1.0, 1.0);
        assert!(fwl(&instant, &FlowField::zeros(6, 5), 1.0).is_err());
    }
}
