//! Frame and flow quality measures and the training-loss terms used to
//! score reconstructions.
//!
//! Every norm is realised as a per-pixel mean so values do not depend on
//! resolution.

use std::sync::Once;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Frame, Image};
use crate::warp::{downsample_flow, forward_warp_frame, splat, FlowField};

/// How per-iteration flow weights are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationWeighting {
    /// `φ^(R−i−1)` for `i = 1..R`; the last iteration gets `1/φ`.
    #[default]
    AsPrinted,
    /// `φ^(R−i)`; the last iteration gets 1.
    Raft,
}

/// Weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Temporal-consistency weight.
    pub lambda_tc: f64,
    /// First (1-based) frame index that contributes a consistency term.
    pub tc_start: usize,
    /// Photometric weight relative to the flow term.
    pub lambda_photo: f64,
    /// Per-iteration decay.
    pub phi: f64,
    /// Sharpness of the error-based weight map.
    pub alpha_m: f64,
    /// Number of refinement iterations the flow predictions come from.
    pub iterations: usize,
    pub weighting: IterationWeighting,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_tc: 5.0,
            tc_start: 3,
            lambda_photo: 1.0,
            phi: 0.8,
            alpha_m: 50.0,
            iterations: 12,
            weighting: IterationWeighting::AsPrinted,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_tc >= 0.0
            && self.lambda_photo >= 0.0
            && self.alpha_m >= 0.0
            && self.phi > 0.0
            && self.tc_start >= 1
            && self.iterations >= 1
            && [self.lambda_tc, self.lambda_photo, self.alpha_m, self.phi]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid loss configuration {self:?}")))
        }
    }
}

fn check_flows(a: &FlowField, b: &FlowField) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Dimension(format!(
            "flow fields {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    a.check_shape(b, "mse")?;
    if a.is_empty() {
        return Err(Error::UndefinedMetric("mse of empty frames".into()));
    }
    let s: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.len() as f64)
}

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window(radius: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering with a 1-D kernel along both axes.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let ow = w + 1 - n;
    let oh = h + 1 - n;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Structural similarity with an 11×11 Gaussian window (σ = 1.5), averaged
/// over positions where the window fits. Frames smaller than the window use
/// the largest centred window that fits.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    a.check_shape(b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if a.is_empty() {
        return Err(Error::UndefinedMetric("ssim of empty frames".into()));
    }
    let radius = SSIM_RADIUS.min((w.min(h) - 1) / 2);
    let k = gaussian_window(radius);
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { xa.iter().zip(xb).map(|(&p, &q)| f(p, q)).collect() };
    let (mu_a, ow, oh) = filter_valid(xa, w, h, &k);
    let (mu_b, ..) = filter_valid(xb, w, h, &k);
    let (aa, ..) = filter_valid(&prod(&|p, _| p * p), w, h, &k);
    let (bb, ..) = filter_valid(&prod(&|_, q| q * q), w, h, &k);
    let (ab, ..) = filter_valid(&prod(&|p, q| p * q), w, h, &k);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    Ok(total / (ow * oh) as f64)
}

/// Per-pixel confidence `exp(−α·(warped − target)²)`.
pub fn m_weight(warped_gt: &Frame, gt: &Frame, alpha_m: f64) -> Result<Image> {
    warped_gt.check_shape(gt, "weight map")?;
    let data = warped_gt
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(p, q)| (-alpha_m * (p - q) * (p - q)).exp())
        .collect();
    Image::from_vec(gt.width(), gt.height(), data)
}

/// Mean of `|M ⊙ (W(prev, flow) − current)|`.
pub fn temporal_consistency_loss(prev: &Frame, current: &Frame, flow_gt: &FlowField, m: &Image) -> Result<f64> {
    prev.check_shape(current, "temporal consistency")?;
    m.check_shape(current, "temporal consistency weights")?;
    let warped = forward_warp_frame(prev, flow_gt)?;
    let s: f64 = warped
        .as_slice()
        .iter()
        .zip(current.as_slice())
        .zip(m.as_slice())
        .map(|((p, q), w)| (w * (p - q)).abs())
        .sum();
    Ok(s / current.len() as f64)
}

/// Optional perceptual term added to the reconstruction loss.
pub type Perceptual<'a> = &'a dyn Fn(&Frame, &Frame) -> f64;

static NO_PERCEPTUAL: Once = Once::new();

/// Mean L1 plus `1 − SSIM` plus an optional perceptual term.
pub fn reconstruction_loss(pred: &Frame, gt: &Frame, perceptual: Option<Perceptual<'_>>) -> Result<f64> {
    pred.check_shape(gt, "reconstruction loss")?;
    let l1 = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
        / pred.len() as f64;
    let structural = 1.0 - ssim(pred, gt)?;
    let extra = match perceptual {
        Some(f) => f(pred, gt),
        None => {
            NO_PERCEPTUAL.call_once(|| log::info!("no perceptual loss configured; using 0"));
            0.0
        }
    };
    Ok(l1 + structural + extra)
}

/// Sum of per-frame reconstruction losses plus `λ_tc` times the
/// consistency losses from frame `tc_start` on (both 1-based).
pub fn sequence_reconstruction_loss(rec: &[f64], tc: &[f64], cfg: &LossConfig) -> Result<f64> {
    let l = rec.len();
    if tc.len() != l {
        return Err(Error::Dimension(format!(
            "{l} reconstruction terms but {} consistency terms",
            tc.len()
        )));
    }
    if l < cfg.tc_start || cfg.tc_start == 0 {
        return Err(Error::Parameter(format!(
            "sequence of {l} frames is shorter than the consistency start {}",
            cfg.tc_start
        )));
    }
    let r: f64 = rec.iter().sum();
    let t: f64 = tc[cfg.tc_start - 1..].iter().sum();
    Ok(r + cfg.lambda_tc * t)
}

/// Iteration weights `φ^(R−i−1)` for `i = 1..R`.
pub fn iteration_weights(r: usize, phi: f64) -> Vec<f64> {
    iteration_weights_with(r, phi, IterationWeighting::AsPrinted)
}

pub fn iteration_weights_with(r: usize, phi: f64, weighting: IterationWeighting) -> Vec<f64> {
    let shift = match weighting {
        IterationWeighting::AsPrinted => 1,
        IterationWeighting::Raft => 0,
    };
    (1..=r).map(|i| phi.powi(r as i32 - i as i32 - shift)).collect()
}

fn flow_at(gt: &FlowField, width: usize, height: usize) -> Result<FlowField> {
    let mut f = gt.clone();
    while f.width() > width || f.height() > height {
        if f.width() == 1 && f.height() == 1 {
            break;
        }
        f = downsample_flow(&f);
    }
    if f.width() != width || f.height() != height {
        return Err(Error::Dimension(format!(
            "no pyramid level of the {}x{} ground truth matches {width}x{height}",
            gt.width(),
            gt.height()
        )));
    }
    Ok(f)
}

fn image_at(img: &Image, width: usize, height: usize) -> Result<Image> {
    let mut m = img.clone();
    while m.width() > width || m.height() > height {
        if m.width() == 1 && m.height() == 1 {
            break;
        }
        m = m.downsample2();
    }
    if m.width() != width || m.height() != height {
        return Err(Error::Dimension(format!(
            "no pyramid level of the {}x{} map matches {width}x{height}",
            img.width(),
            img.height()
        )));
    }
    Ok(m)
}

fn weights_for(n: usize, cfg: &LossConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if n != cfg.iterations {
        return Err(Error::Dimension(format!(
            "{n} flow predictions, configuration expects {}",
            cfg.iterations
        )));
    }
    Ok(iteration_weights_with(n, cfg.phi, cfg.weighting))
}

/// Iteration-weighted mean of `|M ⊙ (F̂ − F)|` over both flow components.
///
/// Predictions may sit at coarser pyramid levels; the ground truth flow and
/// the weight map are downsampled to match.
pub fn flow_loss(preds: &[FlowField], gt: &FlowField, m: &Image, cfg: &LossConfig) -> Result<f64> {
    if m.width() != gt.width() || m.height() != gt.height() {
        return Err(Error::Dimension("weight map does not match ground truth flow".into()));
    }
    let weights = weights_for(preds.len(), cfg)?;
    let mut total = 0.0;
    for (pred, wi) in preds.iter().zip(weights) {
        let g = flow_at(gt, pred.width(), pred.height())?;
        let mm = image_at(m, pred.width(), pred.height())?;
        let mut s = 0.0;
        for (i, mw) in mm.as_slice().iter().enumerate() {
            let du = (pred.u_slice()[i] - g.u_slice()[i]) as f64;
            let dv = (pred.v_slice()[i] - g.v_slice()[i]) as f64;
            s += mw * (du.abs() + dv.abs());
        }
        total += wi * s / (2 * mm.len()) as f64;
    }
    Ok(total)
}

/// Iteration-weighted mean L1 between the previous ground-truth frame
/// warped by each predicted flow and the current one. Pixels that receive
/// no splat weight are excluded.
pub fn photometric_loss(prev_gt: &Frame, current_gt: &Frame, preds: &[FlowField], cfg: &LossConfig) -> Result<f64> {
    prev_gt.check_shape(current_gt, "photometric loss")?;
    let weights = weights_for(preds.len(), cfg)?;
    let mut total = 0.0;
    for (pred, wi) in preds.iter().zip(weights) {
        let prev = image_at(prev_gt, pred.width(), pred.height())?;
        let cur = image_at(current_gt, pred.width(), pred.height())?;
        let warped = forward_warp_frame(&prev, pred)?;
        let covered = splat(&prev, pred)?.holes();
        let (mut s, mut n) = (0.0, 0usize);
        for ((p, q), hole) in warped.as_slice().iter().zip(cur.as_slice()).zip(covered) {
            if !hole {
                s += (p - q).abs();
                n += 1;
            }
        }
        if n > 0 {
            total += wi * s / n as f64;
        }
    }
    Ok(total)
}

/// Flow term plus `λ_p` times the photometric term.
pub fn total_flow_loss(flow: f64, photometric: f64, cfg: &LossConfig) -> f64 {
    flow + cfg.lambda_photo * photometric
}

/// Mean end-point error over the pixels selected by `mask` (all if `None`).
pub fn epe(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    check_flows(pred, gt)?;
    let n = pred.width() * pred.height();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::Dimension(format!("mask of {} entries for {n} pixels", m.len())));
        }
    }
    let (mut s, mut count) = (0.0, 0usize);
    for i in 0..n {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        s += endpoint(pred, gt, i);
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("end-point error over an empty mask".into()));
    }
    Ok(s / count as f64)
}

fn endpoint(pred: &FlowField, gt: &FlowField, i: usize) -> f64 {
    let du = pred.u_slice()[i] as f64 - gt.u_slice()[i] as f64;
    let dv = pred.v_slice()[i] as f64 - gt.v_slice()[i] as f64;
    du.hypot(dv)
}

/// Percentage of pixels whose end-point error exceeds both 3 px and 5% of
/// the ground-truth magnitude.
pub fn outlier_pct(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    check_flows(pred, gt)?;
    let n = pred.width() * pred.height();
    if n == 0 {
        return Err(Error::UndefinedMetric("outlier percentage of an empty field".into()));
    }
    let bad = (0..n)
        .filter(|&i| {
            let e = endpoint(pred, gt, i);
            let mag = (gt.u_slice()[i] as f64).hypot(gt.v_slice()[i] as f64);
            e > 3.0 && e > 0.05 * mag
        })
        .count();
    Ok(100.0 * bad as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn checker(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, |x, y| ((x + y) % 2) as f64)
    }

    #[test]
    fn mse_cases() {
        let z = Frame::zeros(4, 4);
        assert_eq!(mse(&z, &z).unwrap(), 0.0);
        assert_eq!(mse(&z, &Frame::filled(4, 4, 1.0)).unwrap(), 1.0);
        let half = Frame::from_fn(4, 4, |x, _| if x < 2 { 0.5 } else { 0.0 });
        assert_eq!(mse(&z, &half).unwrap(), 0.125);
        assert!(mse(&z, &Frame::zeros(3, 4)).is_err());
    }

    #[test]
    fn ssim_identity_symmetry_and_negative() {
        let a = Frame::from_fn(16, 16, |x, y| ((x * 3 + y * 5) % 7) as f64 / 6.0);
        let b = Frame::from_fn(16, 16, |x, y| ((x * 2 + y) % 5) as f64 / 4.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        let c = checker(16, 16);
        assert!(ssim(&c, &c.map(|v| 1.0 - v)).unwrap() < 0.0);
    }

    #[test]
    fn ssim_of_constant_pair() {
        // no variance: only the luminance term is left
        let s = ssim(&Frame::zeros(12, 12), &Frame::filled(12, 12, 1.0)).unwrap();
        let c1 = 1e-4;
        assert!((s - c1 / (1.0 + c1)).abs() < 1e-12);
    }

    #[test]
    fn weight_map_cases() {
        let a = Frame::filled(3, 3, 0.2);
        assert!(m_weight(&a, &a, 50.0).unwrap().as_slice().iter().all(|&v| v == 1.0));
        let m = m_weight(&Frame::zeros(1, 1), &Frame::filled(1, 1, 1.0), 50.0).unwrap();
        assert_eq!(m.get(0, 0), (-50.0f64).exp());
        let small = m_weight(&Frame::zeros(1, 1), &Frame::filled(1, 1, 0.1), 50.0).unwrap();
        assert!(small.get(0, 0) > m.get(0, 0));
    }

    #[test]
    fn temporal_consistency_cases() {
        let prev = Frame::from_fn(8, 8, |x, y| (x * 8 + y) as f64 / 64.0);
        let flow = FlowField::constant(8, 8, 0.0, 0.0);
        let ones = Image::filled(8, 8, 1.0);
        assert_eq!(temporal_consistency_loss(&prev, &prev, &flow, &ones).unwrap(), 0.0);
        let off = prev.map(|v| v + 0.1);
        let l = temporal_consistency_loss(&prev, &off, &flow, &ones).unwrap();
        assert!((l - 0.1).abs() < 1e-12);
        assert_eq!(
            temporal_consistency_loss(&prev, &off, &flow, &Image::zeros(8, 8)).unwrap(),
            0.0
        );
    }

    #[test]
    fn reconstruction_loss_cases() {
        let a = checker(12, 12).map(|v| 0.25 + 0.5 * v);
        assert!(reconstruction_loss(&a, &a, None).unwrap().abs() < 1e-12);
        let l = reconstruction_loss(&Frame::zeros(12, 12), &Frame::filled(12, 12, 1.0), None).unwrap();
        let c1 = 1e-4;
        assert!((l - (1.0 + 1.0 - c1 / (1.0 + c1))).abs() < 1e-12);
        let plus = |_: &Frame, _: &Frame| 0.25;
        assert!((reconstruction_loss(&a, &a, Some(&plus)).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sequence_loss_cases() {
        let cfg = LossConfig {
            tc_start: 2,
            ..LossConfig::default()
        };
        assert_eq!(
            sequence_reconstruction_loss(&[1.0, 1.0], &[7.0, 2.0], &cfg).unwrap(),
            12.0
        );
        let cfg3 = LossConfig::default();
        assert_eq!(
            sequence_reconstruction_loss(&[0.0; 3], &[4.0, 4.0, 1.0], &cfg3).unwrap(),
            5.0
        );
        assert!(sequence_reconstruction_loss(&[0.0; 2], &[0.0; 2], &cfg3).is_err());
    }

    #[test]
    fn iteration_weight_cases() {
        assert_eq!(iteration_weights(1, 0.8), vec![1.25]);
        let w = iteration_weights(3, 0.8);
        let expect = [0.8, 1.0, 1.25];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(iteration_weights(4, 1.0).iter().all(|&v| v == 1.0));
        let raft = iteration_weights_with(3, 0.5, IterationWeighting::Raft);
        assert_eq!(raft, vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn flow_loss_cases() {
        let cfg = LossConfig {
            iterations: 1,
            ..LossConfig::default()
        };
        let gt = FlowField::constant(8, 8, 2.0, -1.0);
        let ones = Image::filled(8, 8, 1.0);
        assert_eq!(flow_loss(std::slice::from_ref(&gt), &gt, &ones, &cfg).unwrap(), 0.0);
        let pred = FlowField::constant(8, 8, 3.0, -1.0);
        let l = flow_loss(&[pred], &gt, &ones, &cfg).unwrap();
        assert!((l - 1.25 * 0.5).abs() < 1e-12);
        // coarse prediction compares against the halved ground truth
        let coarse = FlowField::constant(4, 4, 1.0, -0.5);
        assert_eq!(flow_loss(&[coarse], &gt, &ones, &cfg).unwrap(), 0.0);
        assert!(flow_loss(&[FlowField::zeros(3, 3)], &gt, &ones, &cfg).is_err());
    }

    #[test]
    fn photometric_loss_cases() {
        let cfg = LossConfig {
            iterations: 1,
            ..LossConfig::default()
        };
        let prev = Frame::from_fn(10, 10, |x, y| ((x * 3 + y * 7) % 10) as f64 / 10.0);
        assert_eq!(
            photometric_loss(&prev, &prev, &[FlowField::zeros(10, 10)], &cfg).unwrap(),
            0.0
        );
        let cur = Frame::from_fn(10, 10, |x, y| if x >= 2 { prev.get(x - 2, y) } else { 0.9 });
        let l = photometric_loss(&prev, &cur, &[FlowField::constant(10, 10, 2.0, 0.0)], &cfg).unwrap();
        assert!(l.abs() < 1e-12, "{l}");
    }

    #[test]
    fn epe_cases() {
        let a = FlowField::constant(5, 4, 1.0, 1.0);
        assert_eq!(epe(&a, &a, None).unwrap(), 0.0);
        let b = FlowField::constant(5, 4, 4.0, 5.0);
        assert_eq!(epe(&b, &a, None).unwrap(), 5.0);
        assert_eq!(epe(&b.scaled(2.0), &a.scaled(2.0), None).unwrap(), 10.0);
        let none = vec![false; 20];
        assert!(matches!(epe(&a, &b, Some(&none)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn outlier_cases() {
        let gt = FlowField::constant(4, 4, 6.0, 8.0);
        assert_eq!(outlier_pct(&gt, &gt).unwrap(), 0.0);
        let off4 = FlowField::constant(4, 4, 10.0, 8.0);
        assert_eq!(outlier_pct(&off4, &gt).unwrap(), 100.0);
        let off2 = FlowField::constant(4, 4, 8.0, 8.0);
        assert_eq!(outlier_pct(&off2, &gt).unwrap(), 0.0);
    }

    fn field(w: usize, h: usize) -> impl Strategy<Value = FlowField> {
        (
            prop::collection::vec(-20.0f32..20.0, w * h),
            prop::collection::vec(-20.0f32..20.0, w * h),
        )
            .prop_map(move |(u, v)| FlowField::new(w, h, u, v).unwrap())
    }

    proptest! {
        #[test]
        fn epe_triangle_inequality(a in field(6, 5), b in field(6, 5), c in field(6, 5)) {
            let lhs = epe(&a, &c, None).unwrap();
            let rhs = epe(&a, &b, None).unwrap() + epe(&b, &c, None).unwrap();
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn outliers_ignore_pixel_order(a in field(7, 3), b in field(7, 3), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..21).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffle = |f: &FlowField| {
                let u = perm.iter().map(|&i| f.u_slice()[i]).collect();
                let v = perm.iter().map(|&i| f.v_slice()[i]).collect();
                FlowField::new(7, 3, u, v).unwrap()
            };
            prop_assert_eq!(outlier_pct(&a, &b).unwrap(), outlier_pct(&shuffle(&a), &shuffle(&b)).unwrap());
        }

        #[test]
        fn sequence_loss_is_linear_in_tc_weight(
            rec in prop::collection::vec(0.0f64..2.0, 4),
            tc in prop::collection::vec(0.0f64..2.0, 4),
            l1 in 0.0f64..10.0,
            l2 in 0.0f64..10.0,
        ) {
            let at = |l: f64| {
                let cfg = LossConfig { lambda_tc: l, ..LossConfig::default() };
                sequence_reconstruction_loss(&rec, &tc, &cfg).unwrap()
            };
            let mid = at(0.5 * (l1 + l2));
            prop_assert!((mid - 0.5 * (at(l1) + at(l2))).abs() < 1e-9);
        }

        #[test]
        fn losses_are_nonnegative(a in prop::collection::vec(0.0f64..1.0, 144), b in prop::collection::vec(0.0f64..1.0, 144)) {
            let fa = Frame::from_vec(12, 12, a).unwrap();
            let fb = Frame::from_vec(12, 12, b).unwrap();
            prop_assert!(mse(&fa, &fb).unwrap() >= 0.0);
            prop_assert!(reconstruction_loss(&fa, &fb, None).unwrap() >= 0.0);
            let s = ssim(&fa, &fb).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
