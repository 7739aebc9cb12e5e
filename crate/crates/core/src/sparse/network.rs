//! Unfolded recurrent sparse-coding network.
//!
//! One forward step fuses the voxel grid with the warped previous frame into
//! a feature stack, initialises codes with a gated temporal unit, refines them
//! with unfolded shrinkage blocks and synthesises the frame through a gated
//! recurrent synthesis unit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::{analyze, conv2d, synthesize, Filters};
use super::ista::DictionaryPair;
use crate::encode::VoxelGrid;
use crate::error::{Error, Result};
use crate::tensor::{lift, Frame, Image, Real, Tensor};

/// Layer sizes of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Temporal bins of the input voxel grid.
    pub bins: usize,
    /// Channels of the fused feature stack.
    pub features: usize,
    pub code_channels: usize,
    /// Spatial size of the gate and fusion filters.
    pub kernel: usize,
    /// Spatial size of the dictionary atoms.
    pub atom_size: usize,
    /// Unfolded shrinkage blocks.
    pub blocks: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            bins: 5,
            features: 6,
            code_channels: 32,
            kernel: 3,
            atom_size: 3,
            blocks: 5,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.bins >= 1, "bins must be at least 1"),
            (self.features >= 1, "features must be at least 1"),
            (self.code_channels >= 1, "code channels must be at least 1"),
            (self.kernel % 2 == 1, "kernel size must be odd"),
            (self.atom_size >= 1, "atom size must be at least 1"),
            (self.blocks >= 1, "at least one unfolded block is required"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Parameter(msg.into()));
            }
        }
        Ok(())
    }

    pub(crate) fn to_vec(self) -> Vec<f64> {
        [
            self.bins,
            self.features,
            self.code_channels,
            self.kernel,
            self.atom_size,
            self.blocks,
        ]
        .iter()
        .map(|&v| v as f64)
        .collect()
    }

    pub(crate) fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 6 || v.iter().any(|x| !(x.fract() == 0.0 && *x >= 0.0)) {
            return Err(Error::Format("malformed architecture record".into()));
        }
        let u: Vec<usize> = v.iter().map(|&x| x as usize).collect();
        let arch = Self {
            bins: u[0],
            features: u[1],
            code_channels: u[2],
            kernel: u[3],
            atom_size: u[4],
            blocks: u[5],
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Convolution with per-output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Filters,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(out: usize, inp: usize, k: usize) -> Self {
        Self {
            weight: Filters::zeros(out, inp, k),
            bias: vec![0.0; out],
        }
    }

    fn random(out: usize, inp: usize, k: usize, rng: &mut impl Rng) -> Self {
        let std = 1.0 / ((inp * k * k) as f64).sqrt();
        Self {
            weight: Filters::random(out, inp, k, std, rng),
            bias: vec![0.0; out],
        }
    }

    fn apply<T: Real>(&self, x: &Tensor<T>) -> Tensor<T> {
        conv2d(x, &self.weight, Some(&self.bias))
    }

    fn check(&self, name: &str, out: usize, inp: usize, k: usize) -> Result<()> {
        check_filters(name, &self.weight, out, inp, k)?;
        if self.bias.len() != out {
            return Err(Error::Dimension(format!(
                "{name}: {} biases for {out} outputs",
                self.bias.len()
            )));
        }
        check_finite(name, &self.bias)
    }
}

/// Forget, input and candidate convolutions of a gated recurrent cell.
///
/// All three read the concatenation `[drive; previous state]`; the new state
/// is `σ(f)·prev + σ(i)·tanh(g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedCell {
    pub forget: ConvLayer,
    pub input: ConvLayer,
    pub candidate: ConvLayer,
}

impl GatedCell {
    pub fn zeros(channels: usize, k: usize) -> Self {
        Self {
            forget: ConvLayer::zeros(channels, 2 * channels, k),
            input: ConvLayer::zeros(channels, 2 * channels, k),
            candidate: ConvLayer::zeros(channels, 2 * channels, k),
        }
    }

    fn random(channels: usize, k: usize, rng: &mut impl Rng) -> Self {
        Self {
            forget: ConvLayer::random(channels, 2 * channels, k, rng),
            input: ConvLayer::random(channels, 2 * channels, k, rng),
            candidate: ConvLayer::random(channels, 2 * channels, k, rng),
        }
    }

    fn step<T: Real>(&self, drive: &Tensor<T>, prev: &Tensor<T>) -> Tensor<T> {
        let s = Tensor::concat(&[drive, prev]).expect("matching grids");
        let f = self.forget.apply(&s);
        let i = self.input.apply(&s);
        let g = self.candidate.apply(&s);
        let mut out = prev.clone();
        for (((o, f), i), g) in out
            .as_mut_slice()
            .iter_mut()
            .zip(f.as_slice())
            .zip(i.as_slice())
            .zip(g.as_slice())
        {
            *o = f.sigmoid() * *o + i.sigmoid() * g.tanh();
        }
        out
    }

    fn check(&self, name: &str, channels: usize, k: usize) -> Result<()> {
        self.forget
            .check(&format!("{name}.forget"), channels, 2 * channels, k)?;
        self.input.check(&format!("{name}.input"), channels, 2 * channels, k)?;
        self.candidate
            .check(&format!("{name}.candidate"), channels, 2 * channels, k)
    }
}

/// Temporal code initialiser.
#[derive(Debug, Clone, PartialEq)]
pub struct LstcWeights {
    /// Projects the feature stack onto the code grid (`F × C` atoms).
    pub project: Filters,
    pub cell: GatedCell,
    /// Maps `[projection; warped codes; cell state]` to the initial codes.
    pub init: ConvLayer,
}

/// One unfolded shrinkage step `z ← shrink(z + E(x − D z), θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkBlock {
    /// Atoms `D` rebuilding the feature stack from codes.
    pub decode: Filters,
    /// Atoms `E` whose adjoint maps the residual back to codes.
    pub encode: Filters,
    /// Per-channel threshold, nonnegative.
    pub threshold: Vec<f64>,
}

/// Recurrent frame synthesiser.
#[derive(Debug, Clone, PartialEq)]
pub struct LsrcWeights {
    pub cell: GatedCell,
    /// Image atoms applied to the refined codes.
    pub synthesis: Filters,
    /// Image atoms applied to the recurrent state.
    pub state_synthesis: Filters,
    pub bias: f64,
}

/// Complete parameter set of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct CistaWeights {
    pub arch: Architecture,
    /// Maps `[voxel bins; warped frame]` to the feature stack.
    pub fusion: ConvLayer,
    pub lstc: LstcWeights,
    pub blocks: Vec<ShrinkBlock>,
    pub lsrc: LsrcWeights,
}

impl CistaWeights {
    /// Seeded random weights for shape and property checks.
    pub fn random(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, c, k, a) = (arch.features, arch.code_channels, arch.kernel, arch.atom_size);
        let atom_std = 1.0 / ((c * a * a) as f64).sqrt();
        let raw_threshold = Normal::new(-3.0, 0.5).expect("finite");
        let fusion = ConvLayer::random(f, arch.bins + 1, k, &mut rng);
        let lstc = LstcWeights {
            project: Filters::random(f, c, a, atom_std, &mut rng),
            cell: GatedCell::random(c, k, &mut rng),
            init: ConvLayer::random(c, 3 * c, k, &mut rng),
        };
        let blocks = (0..arch.blocks)
            .map(|_| {
                let decode = Filters::random(f, c, a, atom_std, &mut rng);
                let encode = decode.scaled(0.1);
                let threshold = (0..c).map(|_| softplus(raw_threshold.sample(&mut rng))).collect();
                ShrinkBlock {
                    decode,
                    encode,
                    threshold,
                }
            })
            .collect();
        let lsrc = LsrcWeights {
            cell: GatedCell::random(c, k, &mut rng),
            synthesis: Filters::random(1, c, a, atom_std, &mut rng),
            state_synthesis: Filters::random(1, c, a, atom_std, &mut rng),
            bias: 0.5,
        };
        Ok(Self {
            arch,
            fusion,
            lstc,
            blocks,
            lsrc,
        })
    }

    /// Network whose blocks reproduce ISTA on `dict` exactly.
    ///
    /// Fusion passes `[voxels; frame]` through unchanged, so the dictionary
    /// must have `bins + 1` feature channels. The code initialiser outputs
    /// zero and the synthesiser reduces to the image dictionary.
    pub fn from_dictionary(dict: &DictionaryPair, lambda: f64, step: f64, blocks: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Parameter(format!("step constant must be positive, got {step}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!(
                "sparsity weight must be nonnegative, got {lambda}"
            )));
        }
        let f = dict.feature_channels();
        if f < 2 {
            return Err(Error::Dimension(format!(
                "dictionary has {f} feature channels, at least 2 are needed for voxels plus frame"
            )));
        }
        let arch = Architecture {
            bins: f - 1,
            features: f,
            code_channels: dict.code_channels(),
            kernel: 3,
            atom_size: dict.atom_size(),
            blocks,
        };
        arch.validate()?;
        let c = arch.code_channels;
        let k = arch.kernel;
        let block = ShrinkBlock {
            decode: dict.feature_atoms().clone(),
            encode: dict.feature_atoms().scaled(1.0 / step),
            threshold: vec![lambda / step; c],
        };
        let weights = Self {
            arch,
            fusion: ConvLayer {
                weight: Filters::identity(f, f, 0, k),
                bias: vec![0.0; f],
            },
            lstc: LstcWeights {
                project: Filters::zeros(f, c, arch.atom_size),
                cell: GatedCell::zeros(c, k),
                init: ConvLayer::zeros(c, 3 * c, k),
            },
            blocks: vec![block; blocks],
            lsrc: LsrcWeights {
                cell: GatedCell::zeros(c, k),
                synthesis: dict.image_atoms().clone(),
                state_synthesis: Filters::zeros(1, c, arch.atom_size),
                bias: 0.0,
            },
        };
        weights.validate()?;
        Ok(weights)
    }

    /// Makes the code initialiser copy the warped previous codes.
    pub fn with_code_warm_start(mut self) -> Self {
        let c = self.arch.code_channels;
        self.lstc.init.weight = Filters::identity(c, 3 * c, c, self.arch.kernel);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        a.validate()?;
        let (f, c, k, s) = (a.features, a.code_channels, a.kernel, a.atom_size);
        self.fusion.check("fusion", f, a.bins + 1, k)?;
        check_filters("lstc.project", &self.lstc.project, f, c, s)?;
        self.lstc.cell.check("lstc", c, k)?;
        self.lstc.init.check("lstc.init", c, 3 * c, k)?;
        if self.blocks.len() != a.blocks {
            return Err(Error::Dimension(format!(
                "{} shrinkage blocks, architecture declares {}",
                self.blocks.len(),
                a.blocks
            )));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            check_filters(&format!("block{i}.decode"), &b.decode, f, c, s)?;
            check_filters(&format!("block{i}.encode"), &b.encode, f, c, s)?;
            if b.threshold.len() != c {
                return Err(Error::Dimension(format!(
                    "block{i}.threshold: {} levels",
                    b.threshold.len()
                )));
            }
            if let Some(t) = b.threshold.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
                return Err(Error::Parameter(format!("block{i}.threshold: invalid level {t}")));
            }
        }
        self.lsrc.cell.check("lsrc", c, k)?;
        check_filters("lsrc.synthesis", &self.lsrc.synthesis, 1, c, s)?;
        check_filters("lsrc.state_synthesis", &self.lsrc.state_synthesis, 1, c, s)?;
        check_finite("lsrc.bias", &[self.lsrc.bias])
    }
}

/// Oracle bridge: weights whose forward pass equals ISTA on `dict` followed
/// by image synthesis.
pub fn init_weights_from_dict(dict: &DictionaryPair, lambda: f64, step: f64, blocks: usize) -> Result<CistaWeights> {
    CistaWeights::from_dictionary(dict, lambda, step, blocks)
}

fn check_filters(name: &str, f: &Filters, out: usize, inp: usize, k: usize) -> Result<()> {
    if f.shape() != [out, inp, k, k] {
        return Err(Error::Dimension(format!(
            "{name}: shape {:?}, expected {:?}",
            f.shape(),
            [out, inp, k, k]
        )));
    }
    check_finite(name, f.as_slice())
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name}: non-finite weight")))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Recurrent state carried between reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct CistaState {
    /// Refined codes, `C × H/2 × W/2`.
    pub codes: Tensor,
    /// Synthesiser state.
    pub lsrc: Tensor,
    /// Initialiser state.
    pub lstc: Tensor,
}

impl CistaState {
    /// All-zero state for `width × height` frames.
    pub fn zeros(arch: &Architecture, width: usize, height: usize) -> Self {
        let z = Tensor::zeros(arch.code_channels, height / 2, width / 2);
        Self {
            codes: z.clone(),
            lsrc: z.clone(),
            lstc: z,
        }
    }
}

/// Result of one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct CistaOutput {
    /// Synthesised frame clamped to [0, 1].
    pub frame: Frame,
    /// Synthesis before clamping.
    pub synthesis: Image,
    pub state: CistaState,
}

/// Shrinkage nonlinearity used by the unfolded blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrinkage {
    /// Exact soft threshold.
    Soft,
    /// `sp(v − θ) − sp(−v − θ)` with `sp(x) = ln(1 + e^{βx}) / β`;
    /// differentiable everywhere and tends to the soft threshold as β grows.
    Smooth { sharpness: f64 },
}

impl Shrinkage {
    fn apply<T: Real>(self, v: T, theta: f64) -> T {
        match self {
            Shrinkage::Soft => {
                let x = v.value();
                if x > theta {
                    v - T::from_f64(theta)
                } else if x < -theta {
                    v + T::from_f64(theta)
                } else {
                    T::zero()
                }
            }
            Shrinkage::Smooth { sharpness } => {
                let sp = |x: T| {
                    let bx = x.scale(sharpness);
                    let r = if bx.value() > 0.0 {
                        bx + ((-bx).exp() + T::from_f64(1.0)).ln()
                    } else {
                        (bx.exp() + T::from_f64(1.0)).ln()
                    };
                    r.scale(1.0 / sharpness)
                };
                sp(v - T::from_f64(theta)) - sp(-v - T::from_f64(theta))
            }
        }
    }
}

/// Inputs of one forward step, in tensor form.
#[derive(Debug, Clone)]
pub struct ForwardInputs<T> {
    /// `B × H × W` voxel grid.
    pub voxels: Tensor<T>,
    /// `1 × H × W` warped previous frame.
    pub frame: Tensor<T>,
    /// `C × H/2 × W/2` warped previous codes.
    pub codes: Tensor<T>,
    pub lsrc: Tensor<T>,
    pub lstc: Tensor<T>,
}

/// Outputs of one forward step, in tensor form.
#[derive(Debug, Clone)]
pub struct ForwardOutputs<T> {
    /// `1 × H × W` unclamped synthesis.
    pub synthesis: Tensor<T>,
    pub codes: Tensor<T>,
    pub lsrc: Tensor<T>,
    pub lstc: Tensor<T>,
}

fn finite<T: Real>(t: Tensor<T>, layer: &str) -> Result<Tensor<T>> {
    if t.all_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite { layer: layer.into() })
    }
}

fn check_inputs<T>(w: &CistaWeights, x: &ForwardInputs<T>) -> Result<()> {
    let a = &w.arch;
    let (b, h, wd) = x.voxels.shape();
    if b != a.bins {
        return Err(Error::Dimension(format!(
            "voxel grid has {b} bins, weights expect {}",
            a.bins
        )));
    }
    if h == 0 || wd == 0 || h % 2 != 0 || wd % 2 != 0 {
        return Err(Error::Dimension(format!(
            "frame size {wd}x{h} must be positive and even"
        )));
    }
    if x.frame.shape() != (1, h, wd) {
        return Err(Error::Dimension(format!(
            "warped frame {:?} does not match voxel grid {wd}x{h}",
            x.frame.shape()
        )));
    }
    let code = (a.code_channels, h / 2, wd / 2);
    for (name, t) in [("codes", &x.codes), ("lsrc state", &x.lsrc), ("lstc state", &x.lstc)] {
        if t.shape() != code {
            return Err(Error::Dimension(format!(
                "{name} shape {:?}, expected {code:?}",
                t.shape()
            )));
        }
    }
    Ok(())
}

/// Forward step over any [`Real`] scalar.
pub fn forward<T: Real>(
    weights: &CistaWeights,
    inputs: &ForwardInputs<T>,
    shrinkage: Shrinkage,
) -> Result<ForwardOutputs<T>> {
    check_inputs(weights, inputs)?;
    let stacked = Tensor::concat(&[&inputs.voxels, &inputs.frame])?;
    let x = finite(weights.fusion.apply(&stacked), "fusion")?;

    let lstc = &weights.lstc;
    let projected = analyze(&lstc.project, &x);
    let c = finite(lstc.cell.step(&projected, &inputs.lstc), "lstc.cell")?;
    let init_in = Tensor::concat(&[&projected, &inputs.codes, &c])?;
    let mut z = finite(lstc.init.apply(&init_in), "lstc.init")?;

    for (i, block) in weights.blocks.iter().enumerate() {
        let rebuilt = synthesize(&block.decode, &z);
        let residual = x.zip_map(&rebuilt, |a, b| a - b);
        let update = analyze(&block.encode, &residual);
        let n = z.plane_len();
        for (j, (zv, u)) in z.as_mut_slice().iter_mut().zip(update.as_slice()).enumerate() {
            *zv = shrinkage.apply(*zv + *u, block.threshold[j / n]);
        }
        if !z.all_finite() {
            return Err(Error::NonFinite {
                layer: format!("block{i}"),
            });
        }
    }

    let lsrc = &weights.lsrc;
    let a = finite(lsrc.cell.step(&z, &inputs.lsrc), "lsrc.cell")?;
    let from_codes = synthesize(&lsrc.synthesis, &z);
    let from_state = synthesize(&lsrc.state_synthesis, &a);
    let bias = lsrc.bias;
    let synthesis = finite(
        from_codes.zip_map(&from_state, |p, q| p + q + T::from_f64(bias)),
        "lsrc.synthesis",
    )?;
    Ok(ForwardOutputs {
        synthesis,
        codes: z,
        lsrc: a,
        lstc: c,
    })
}

/// One reconstruction step from a voxel grid and the warped previous
/// frame, codes and recurrent states.
pub fn cista_forward(
    voxels: &VoxelGrid,
    warped_frame: &Frame,
    warped_codes: &Tensor,
    lsrc_state: &Tensor,
    lstc_state: &Tensor,
    weights: &CistaWeights,
) -> Result<CistaOutput> {
    if warped_frame.width() != voxels.width() || warped_frame.height() != voxels.height() {
        return Err(Error::Dimension(format!(
            "warped frame {}x{} does not match voxel grid {}x{}",
            warped_frame.width(),
            warped_frame.height(),
            voxels.width(),
            voxels.height()
        )));
    }
    let inputs = ForwardInputs {
        voxels: voxels.tensor().clone(),
        frame: Tensor::from_image(warped_frame),
        codes: warped_codes.clone(),
        lsrc: lsrc_state.clone(),
        lstc: lstc_state.clone(),
    };
    let out = forward::<f64>(weights, &inputs, Shrinkage::Soft)?;
    let synthesis = out.synthesis.channel_image(0);
    Ok(CistaOutput {
        frame: synthesis.clamp01(),
        synthesis,
        state: CistaState {
            codes: out.codes,
            lsrc: out.lsrc,
            lstc: out.lstc,
        },
    })
}

impl<T: Real> ForwardInputs<T> {
    /// Lifts scalar inputs into another [`Real`] type.
    pub fn lift(voxels: &Tensor, frame: &Tensor, state: &CistaState) -> Self {
        Self {
            voxels: lift(voxels),
            frame: lift(frame),
            codes: lift(&state.codes),
            lsrc: lift(&state.lsrc),
            lstc: lift(&state.lstc),
        }
    }
}
