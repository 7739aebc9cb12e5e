//! Convolutional dictionaries and the classical ISTA solver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::conv::{analyze, synthesize, Filters};
use crate::error::{Error, Result};
use crate::tensor::{Image, Tensor};

/// Number of power-iteration steps used when the step constant is estimated.
pub const POWER_ITERATIONS: usize = 50;

/// Analysis dictionary over the feature stack and synthesis dictionary over
/// the image, both acting on the same half-resolution code grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryPair {
    features: Filters,
    image: Filters,
}

impl DictionaryPair {
    /// `features` is `F × C × k × k`, `image` is `1 × C × k × k`.
    pub fn new(features: Filters, image: Filters) -> Result<Self> {
        if image.out_channels() != 1 {
            return Err(Error::Dimension(format!(
                "image dictionary must have one output channel, got {}",
                image.out_channels()
            )));
        }
        if features.in_channels() != image.in_channels() {
            return Err(Error::Dimension(format!(
                "dictionaries disagree on code channels: {} vs {}",
                features.in_channels(),
                image.in_channels()
            )));
        }
        if features.out_channels() == 0 || features.in_channels() == 0 {
            return Err(Error::Dimension("empty dictionary".into()));
        }
        if !features.is_finite() || !image.is_finite() {
            return Err(Error::Parameter("dictionary contains non-finite atoms".into()));
        }
        Ok(Self { features, image })
    }

    /// Gaussian atoms normalised to unit energy per code channel.
    pub fn random(features: usize, codes: usize, size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fx = Filters::random(features, codes, size, 1.0, &mut rng);
        let mut fi = Filters::random(1, codes, size, 1.0, &mut rng);
        for f in [&mut fx, &mut fi] {
            let [o, c, k, _] = f.shape();
            for ci in 0..c {
                let mut norm = 0.0;
                for oi in 0..o {
                    for ky in 0..k {
                        for kx in 0..k {
                            norm += f.get(oi, ci, ky, kx).powi(2);
                        }
                    }
                }
                let s = 1.0 / norm.sqrt().max(1e-12);
                for oi in 0..o {
                    for ky in 0..k {
                        for kx in 0..k {
                            let v = f.get(oi, ci, ky, kx);
                            f.set(oi, ci, ky, kx, v * s);
                        }
                    }
                }
            }
        }
        Self {
            features: fx,
            image: fi,
        }
    }

    pub fn feature_atoms(&self) -> &Filters {
        &self.features
    }

    pub fn image_atoms(&self) -> &Filters {
        &self.image
    }

    pub fn feature_channels(&self) -> usize {
        self.features.out_channels()
    }

    pub fn code_channels(&self) -> usize {
        self.features.in_channels()
    }

    pub fn atom_size(&self) -> usize {
        self.features.size()
    }

    /// Feature stack represented by `codes`.
    pub fn features_from(&self, codes: &Tensor) -> Tensor {
        synthesize(&self.features, codes)
    }

    /// Image represented by `codes`.
    pub fn image_from(&self, codes: &Tensor) -> Image {
        synthesize(&self.image, codes).channel_image(0)
    }

    fn check_features(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.shape();
        if c != self.feature_channels() {
            return Err(Error::Dimension(format!(
                "feature stack has {c} channels, dictionary expects {}",
                self.feature_channels()
            )));
        }
        if h == 0 || w == 0 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Dimension(format!(
                "feature stack {w}x{h} must have positive even dimensions"
            )));
        }
        Ok(())
    }
}

/// Elementwise `sign(v)·max(|v| - θ, 0)` with one level per channel.
pub fn soft_threshold(v: &Tensor, theta: &[f64]) -> Result<Tensor> {
    if theta.len() != v.channels() {
        return Err(Error::Dimension(format!(
            "{} threshold levels for {} channels",
            theta.len(),
            v.channels()
        )));
    }
    if let Some(t) = theta.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::Parameter(format!("threshold must be nonnegative, got {t}")));
    }
    let mut out = v.clone();
    let n = out.plane_len();
    for (i, val) in out.as_mut_slice().iter_mut().enumerate() {
        *val = shrink(*val, theta[i / n]);
    }
    Ok(out)
}

#[inline]
pub(crate) fn shrink(v: f64, theta: f64) -> f64 {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        0.0
    }
}

/// Largest eigenvalue of `DᵀD` for the feature dictionary acting on an
/// `h × w` code grid, estimated with `iterations` power steps from a
/// fixed pseudo-random start.
pub fn power_iteration(dict: &DictionaryPair, h: usize, w: usize, iterations: usize) -> f64 {
    let c = dict.code_channels();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..c * h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let z = Tensor::from_vec(c, h, w, v).expect("sized above");
        let gz = analyze(&dict.features, &synthesize(&dict.features, &z));
        estimate = z.as_slice().iter().zip(gz.as_slice()).map(|(a, b)| a * b).sum();
        v = gz.into_vec();
    }
    estimate
}

/// Step constant from a 50-step power iteration with a 1% safety margin.
pub fn step_constant(dict: &DictionaryPair, h: usize, w: usize) -> f64 {
    1.01 * power_iteration(dict, h, w, POWER_ITERATIONS)
}

/// `½‖x − D z‖² + λ‖z‖₁`.
pub fn lasso_objective(x: &Tensor, dict: &DictionaryPair, z: &Tensor, lambda: f64) -> f64 {
    let r = dict.features_from(z);
    let fit: f64 = x
        .as_slice()
        .iter()
        .zip(r.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let l1: f64 = z.as_slice().iter().map(|v| v.abs()).sum();
    0.5 * fit + lambda * l1
}

/// Codes after each solver iteration together with the objective values.
#[derive(Debug, Clone)]
pub struct IstaTrace {
    pub codes: Tensor,
    /// Objective at `z⁰, z¹, …, z^K`.
    pub objective: Vec<f64>,
}

/// Runs `iterations` ISTA steps from `z = 0` on the feature stack `x`.
pub fn ista_solve(x: &Tensor, dict: &DictionaryPair, lambda: f64, step: f64, iterations: usize) -> Result<Tensor> {
    run_ista(x, dict, lambda, step, iterations, false).map(|t| t.codes)
}

/// [`ista_solve`] that also records the objective after every iteration.
pub fn ista_trace(x: &Tensor, dict: &DictionaryPair, lambda: f64, step: f64, iterations: usize) -> Result<IstaTrace> {
    run_ista(x, dict, lambda, step, iterations, true)
}

fn run_ista(
    x: &Tensor,
    dict: &DictionaryPair,
    lambda: f64,
    step: f64,
    iterations: usize,
    trace: bool,
) -> Result<IstaTrace> {
    dict.check_features(x)?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Parameter(format!("step constant must be positive, got {step}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!(
            "sparsity weight must be nonnegative, got {lambda}"
        )));
    }
    let (_, h, w) = x.shape();
    let mut z = Tensor::zeros(dict.code_channels(), h / 2, w / 2);
    let theta = lambda / step;
    let mut objective = Vec::new();
    if trace {
        objective.push(lasso_objective(x, dict, &z, lambda));
    }
    for k in 0..iterations {
        let residual = x.zip_map(&dict.features_from(&z), |a, b| a - b);
        let grad = analyze(&dict.features, &residual);
        for (zv, g) in z.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *zv = shrink(*zv + g / step, theta);
        }
        if !z.all_finite() {
            return Err(Error::Divergence { iteration: k + 1 });
        }
        if trace {
            objective.push(lasso_objective(x, dict, &z, lambda));
        }
    }
    Ok(IstaTrace { codes: z, objective })
}
