use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pipeline::io::read_image;
use crate::tensor::Image;

/// Texture painted on the background or on an object, evaluated in the
/// layer's local pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Constant {
        value: f64,
    },
    Checker {
        cell: f64,
        low: f64,
        high: f64,
    },
    /// Smooth lattice value noise, two octaves.
    ValueNoise {
        scale: f64,
        seed: u64,
        low: f64,
        high: f64,
    },
    /// Sinusoidal gradient bars.
    Bars {
        period: f64,
        angle: f64,
        low: f64,
        high: f64,
    },
    /// Grayscale image file centred on the layer origin.
    Image {
        path: PathBuf,
    },
}

impl Texture {
    pub fn checker(cell: f64) -> Self {
        Texture::Checker {
            cell,
            low: 0.2,
            high: 0.8,
        }
    }

    pub fn noise(scale: f64, seed: u64) -> Self {
        Texture::ValueNoise {
            scale,
            seed,
            low: 0.1,
            high: 0.9,
        }
    }

    pub fn bars(period: f64, angle: f64) -> Self {
        Texture::Bars {
            period,
            angle,
            low: 0.2,
            high: 0.8,
        }
    }
}

/// A texture ready for sampling (image files decoded).
#[derive(Debug, Clone)]
pub(crate) enum Sampler {
    Procedural(Texture),
    Raster(Image),
}

impl Sampler {
    pub(crate) fn load(texture: &Texture) -> Result<Self> {
        match texture {
            Texture::Image { path } => Ok(Sampler::Raster(read_image(path)?)),
            t => Ok(Sampler::Procedural(t.clone())),
        }
    }

    pub(crate) fn sample(&self, u: f64, v: f64) -> f64 {
        match self {
            Sampler::Raster(img) => sample_raster(img, u, v),
            Sampler::Procedural(t) => match *t {
                Texture::Constant { value } => value,
                Texture::Checker { cell, low, high } => {
                    let parity = ((u / cell).floor() as i64 + (v / cell).floor() as i64).rem_euclid(2);
                    if parity == 0 {
                        low
                    } else {
                        high
                    }
                }
                Texture::ValueNoise { scale, seed, low, high } => {
                    let n = 0.65 * value_noise(u / scale, v / scale, seed)
                        + 0.35 * value_noise(2.0 * u / scale, 2.0 * v / scale, seed ^ 0x9e37_79b9);
                    low + (high - low) * n
                }
                Texture::Bars {
                    period,
                    angle,
                    low,
                    high,
                } => {
                    let s = u * angle.cos() + v * angle.sin();
                    let w = 0.5 + 0.5 * (2.0 * PI * s / period).sin();
                    low + (high - low) * w
                }
                Texture::Image { .. } => unreachable!("image textures are rasterised on load"),
            },
        }
    }
}

fn sample_raster(img: &Image, u: f64, v: f64) -> f64 {
    let x = u + 0.5 * (img.width() as f64 - 1.0);
    let y = v + 0.5 * (img.height() as f64 - 1.0);
    let xmax = (img.width() - 1) as f64;
    let ymax = (img.height() - 1) as f64;
    let x = x.clamp(0.0, xmax);
    let y = y.clamp(0.0, ymax);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0 as usize;
    let y0 = y0 as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    // splitmix64 over the packed lattice coordinate
    let mut z = seed
        .wrapping_add((ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let sx = smoothstep(x - x0);
    let sy = smoothstep(y - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_textures_stay_in_range() {
        let textures = [Texture::checker(4.0), Texture::noise(6.0, 7), Texture::bars(8.0, 0.3)];
        for t in &textures {
            let s = Sampler::load(t).unwrap();
            for i in 0..200 {
                let u = (i as f64) * 0.731 - 50.0;
                let v = (i as f64) * -0.417 + 13.0;
                let val = s.sample(u, v);
                assert!((0.0..=1.0).contains(&val), "{t:?} -> {val}");
            }
        }
    }

    #[test]
    fn checker_alternates() {
        let s = Sampler::load(&Texture::checker(2.0)).unwrap();
        assert_ne!(s.sample(0.5, 0.5), s.sample(2.5, 0.5));
        assert_eq!(s.sample(0.5, 0.5), s.sample(2.5, 2.5));
    }

    #[test]
    fn missing_image_texture_reports_path() {
        let err = Sampler::load(&Texture::Image {
            path: "/nonexistent/texture.png".into(),
        })
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/texture.png"));
    }
}
