//! Convolution kernels shared by the dictionary solver and the unfolded
//! network.
//!
//! Two grids are involved: the image grid (H×W) and the code grid
//! (H/2×W/2). [`synthesize`] maps codes to the image grid with stride 2 and
//! [`analyze`] is its exact adjoint.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `out × in × k × k` filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct Filters {
    out: usize,
    inp: usize,
    k: usize,
    data: Vec<f64>,
}

impl Filters {
    pub fn zeros(out: usize, inp: usize, k: usize) -> Self {
        Self {
            out,
            inp,
            k,
            data: vec![0.0; out * inp * k * k],
        }
    }

    pub fn from_vec(out: usize, inp: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || data.len() != out * inp * k * k {
            return Err(Error::Dimension(format!(
                "{} weights for a {out}x{inp}x{k}x{k} filter bank",
                data.len()
            )));
        }
        Ok(Self { out, inp, k, data })
    }

    /// Centre-tap identity from input channel `offset + i` to output `i`.
    pub fn identity(n: usize, inp: usize, offset: usize, k: usize) -> Self {
        let mut f = Self::zeros(n, inp, k);
        let c = (k - 1) / 2;
        for i in 0..n {
            f.set(i, offset + i, c, c, 1.0);
        }
        f
    }

    pub fn random(out: usize, inp: usize, k: usize, std: f64, rng: &mut impl Rng) -> Self {
        let n = Normal::new(0.0, std).expect("finite std");
        let data = (0..out * inp * k * k).map(|_| n.sample(rng)).collect();
        Self { out, inp, k, data }
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.out
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.inp
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.k
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.out, self.inp, self.k, self.k]
    }

    #[inline]
    pub fn get(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.data[((o * self.inp + i) * self.k + ky) * self.k + kx]
    }

    #[inline]
    pub fn set(&mut self, o: usize, i: usize, ky: usize, kx: usize, v: f64) {
        let k = self.k;
        self.data[((o * self.inp + i) * k + ky) * k + kx] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    #[inline]
    fn pad(&self) -> isize {
        ((self.k - 1) / 2) as isize
    }
}

/// Stride-1 "same" cross-correlation with optional per-output bias.
pub fn conv2d<T: Real>(input: &Tensor<T>, filters: &Filters, bias: Option<&[f64]>) -> Tensor<T> {
    assert_eq!(input.channels(), filters.inp, "conv2d input channels");
    let (_, h, w) = input.shape();
    let k = filters.k;
    let p = filters.pad();
    let mut out = Tensor::<T>::zeros(filters.out, h, w);
    for o in 0..filters.out {
        let b = bias.map_or(0.0, |b| b[o]);
        let dst = out.plane_mut(o);
        if b != 0.0 {
            dst.iter_mut().for_each(|v| *v = T::from_f64(b));
        }
        for i in 0..filters.inp {
            let src = input.plane(i);
            for ky in 0..k {
                for kx in 0..k {
                    let wt = filters.get(o, i, ky, kx);
                    if wt == 0.0 {
                        continue;
                    }
                    let dy = ky as isize - p;
                    let dx = kx as isize - p;
                    let y_lo = (-dy).max(0) as usize;
                    let y_hi = (h as isize - dy).min(h as isize).max(0) as usize;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let row = &src[sy * w..(sy + 1) * w];
                        let drow = &mut dst[y * w..(y + 1) * w];
                        let sx_lo = (x_lo as isize + dx) as usize;
                        for (d, &s) in drow[x_lo..x_hi].iter_mut().zip(&row[sx_lo..]) {
                            *d += s.scale(wt);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Stride-2 synthesis: code tensor `atoms.in × h × w` to image-grid tensor
/// `atoms.out × 2h × 2w`. Code `(c, i, j)` deposits atom `(·, c)` with its
/// top-left tap at `(2i - p, 2j - p)`, `p = (k - 1) / 2`.
pub fn synthesize<T: Real>(atoms: &Filters, codes: &Tensor<T>) -> Tensor<T> {
    assert_eq!(codes.channels(), atoms.inp, "synthesis code channels");
    let (_, h, w) = codes.shape();
    let (hh, ww) = (2 * h, 2 * w);
    let k = atoms.k;
    let p = atoms.pad();
    let mut out = Tensor::<T>::zeros(atoms.out, hh, ww);
    for c in 0..atoms.inp {
        let src = codes.plane(c);
        for i in 0..h {
            for j in 0..w {
                let z = src[i * w + j];
                if z.is_exact_zero() {
                    continue;
                }
                for f in 0..atoms.out {
                    let dst = out.plane_mut(f);
                    for ky in 0..k {
                        let y = (2 * i) as isize + ky as isize - p;
                        if y < 0 || y >= hh as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let x = (2 * j) as isize + kx as isize - p;
                            if x < 0 || x >= ww as isize {
                                continue;
                            }
                            let wt = atoms.get(f, c, ky, kx);
                            if wt != 0.0 {
                                dst[y as usize * ww + x as usize] += z.scale(wt);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`synthesize`]: image-grid tensor `atoms.out × H × W` (H, W
/// even) to codes `atoms.in × H/2 × W/2`.
pub fn analyze<T: Real>(atoms: &Filters, input: &Tensor<T>) -> Tensor<T> {
    assert_eq!(input.channels(), atoms.out, "analysis feature channels");
    let (_, hh, ww) = input.shape();
    assert!(hh % 2 == 0 && ww % 2 == 0, "analysis needs even spatial dims");
    let (h, w) = (hh / 2, ww / 2);
    let k = atoms.k;
    let p = atoms.pad();
    let mut out = Tensor::<T>::zeros(atoms.inp, h, w);
    for c in 0..atoms.inp {
        for f in 0..atoms.out {
            let src = input.plane(f);
            for ky in 0..k {
                for kx in 0..k {
                    let wt = atoms.get(f, c, ky, kx);
                    if wt == 0.0 {
                        continue;
                    }
                    let dst = out.plane_mut(c);
                    for i in 0..h {
                        let y = (2 * i) as isize + ky as isize - p;
                        if y < 0 || y >= hh as isize {
                            continue;
                        }
                        let row = &src[y as usize * ww..(y as usize + 1) * ww];
                        for j in 0..w {
                            let x = (2 * j) as isize + kx as isize - p;
                            if x < 0 || x >= ww as isize {
                                continue;
                            }
                            dst[i * w + j] += row[x as usize].scale(wt);
                        }
                    }
                }
            }
        }
    }
    out
}
