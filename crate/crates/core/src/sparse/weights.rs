//! Conversion between [`CistaWeights`] and the named-tensor container.

use std::collections::HashMap;
use std::path::Path;

use super::conv::Filters;
use super::network::{Architecture, CistaWeights, ConvLayer, GatedCell, LsrcWeights, LstcWeights, ShrinkBlock};
use crate::error::{Error, Result};
use crate::pipeline::container::{read_container, write_container, NamedTensor};

const ARCH: &str = "meta.arch";

fn filters(name: String, f: &Filters) -> NamedTensor {
    NamedTensor::new(name, f.shape().to_vec(), f.as_slice().to_vec())
}

fn vector(name: String, v: &[f64]) -> NamedTensor {
    NamedTensor::new(name, vec![v.len()], v.to_vec())
}

fn conv(out: &mut Vec<NamedTensor>, name: &str, c: &ConvLayer) {
    out.push(filters(format!("{name}.weight"), &c.weight));
    out.push(vector(format!("{name}.bias"), &c.bias));
}

fn cell(out: &mut Vec<NamedTensor>, name: &str, g: &GatedCell) {
    conv(out, &format!("{name}.forget"), &g.forget);
    conv(out, &format!("{name}.input"), &g.input);
    conv(out, &format!("{name}.candidate"), &g.candidate);
}

/// Flattens the weights into named tensors, all stored as f64.
pub fn to_tensors(w: &CistaWeights) -> Vec<NamedTensor> {
    let mut out = vec![vector(ARCH.into(), &w.arch.to_vec())];
    conv(&mut out, "fusion", &w.fusion);
    out.push(filters("lstc.project".into(), &w.lstc.project));
    cell(&mut out, "lstc", &w.lstc.cell);
    conv(&mut out, "lstc.init", &w.lstc.init);
    for (i, b) in w.blocks.iter().enumerate() {
        out.push(filters(format!("block{i}.decode"), &b.decode));
        out.push(filters(format!("block{i}.encode"), &b.encode));
        out.push(vector(format!("block{i}.threshold"), &b.threshold));
    }
    cell(&mut out, "lsrc", &w.lsrc.cell);
    out.push(filters("lsrc.synthesis".into(), &w.lsrc.synthesis));
    out.push(filters("lsrc.state_synthesis".into(), &w.lsrc.state_synthesis));
    out.push(vector("lsrc.bias".into(), &[w.lsrc.bias]));
    out
}

struct Table {
    tensors: HashMap<String, NamedTensor>,
}

impl Table {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self
            .tensors
            .remove(name)
            .ok_or_else(|| Error::MissingTensor(name.into()))?;
        if t.shape != shape {
            return Err(Error::Dimension(format!(
                "tensor {name}: shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t.data)
    }

    fn filters(&mut self, name: &str, out: usize, inp: usize, k: usize) -> Result<Filters> {
        Filters::from_vec(out, inp, k, self.take(name, &[out, inp, k, k])?)
    }

    fn conv(&mut self, name: &str, out: usize, inp: usize, k: usize) -> Result<ConvLayer> {
        Ok(ConvLayer {
            weight: self.filters(&format!("{name}.weight"), out, inp, k)?,
            bias: self.take(&format!("{name}.bias"), &[out])?,
        })
    }

    fn cell(&mut self, name: &str, c: usize, k: usize) -> Result<GatedCell> {
        Ok(GatedCell {
            forget: self.conv(&format!("{name}.forget"), c, 2 * c, k)?,
            input: self.conv(&format!("{name}.input"), c, 2 * c, k)?,
            candidate: self.conv(&format!("{name}.candidate"), c, 2 * c, k)?,
        })
    }
}

/// Rebuilds weights from named tensors. Unknown names are logged and ignored.
pub fn from_tensors(tensors: Vec<NamedTensor>) -> Result<CistaWeights> {
    let mut t = Table {
        tensors: tensors.into_iter().map(|t| (t.name.clone(), t)).collect(),
    };
    let arch = t
        .tensors
        .remove(ARCH)
        .ok_or_else(|| Error::MissingTensor(ARCH.into()))
        .and_then(|t| Architecture::from_slice(&t.data))?;
    let (f, c, k, s) = (arch.features, arch.code_channels, arch.kernel, arch.atom_size);
    let fusion = t.conv("fusion", f, arch.bins + 1, k)?;
    let lstc = LstcWeights {
        project: t.filters("lstc.project", f, c, s)?,
        cell: t.cell("lstc", c, k)?,
        init: t.conv("lstc.init", c, 3 * c, k)?,
    };
    let mut blocks = Vec::with_capacity(arch.blocks);
    for i in 0..arch.blocks {
        blocks.push(ShrinkBlock {
            decode: t.filters(&format!("block{i}.decode"), f, c, s)?,
            encode: t.filters(&format!("block{i}.encode"), f, c, s)?,
            threshold: t.take(&format!("block{i}.threshold"), &[c])?,
        });
    }
    let lsrc = LsrcWeights {
        cell: t.cell("lsrc", c, k)?,
        synthesis: t.filters("lsrc.synthesis", 1, c, s)?,
        state_synthesis: t.filters("lsrc.state_synthesis", 1, c, s)?,
        bias: t.take("lsrc.bias", &[1])?[0],
    };
    let mut extra: Vec<_> = t.tensors.into_keys().collect();
    extra.sort();
    for name in extra {
        log::warn!("ignoring unknown tensor {name} in weight file");
    }
    let w = CistaWeights {
        arch,
        fusion,
        lstc,
        blocks,
        lsrc,
    };
    w.validate()?;
    Ok(w)
}

pub fn save_weights(weights: &CistaWeights, path: &Path) -> Result<()> {
    weights.validate()?;
    write_container(path, &to_tensors(weights))
}

pub fn load_weights(path: &Path) -> Result<CistaWeights> {
    from_tensors(read_container(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::container::{decode, encode};

    fn arch() -> Architecture {
        Architecture {
            bins: 2,
            features: 3,
            code_channels: 2,
            kernel: 3,
            atom_size: 3,
            blocks: 2,
        }
    }

    #[test]
    fn tensor_round_trip_is_exact() {
        let w = CistaWeights::random(arch(), 4).unwrap();
        let back = from_tensors(decode(&encode(&to_tensors(&w)).unwrap()).unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn missing_tensor_is_named() {
        let w = CistaWeights::random(arch(), 4).unwrap();
        let tensors: Vec<_> = to_tensors(&w)
            .into_iter()
            .filter(|t| t.name != "block1.encode")
            .collect();
        match from_tensors(tensors) {
            Err(Error::MissingTensor(n)) => assert_eq!(n, "block1.encode"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_tensor_is_ignored() {
        let w = CistaWeights::random(arch(), 4).unwrap();
        let mut tensors = to_tensors(&w);
        tensors.push(NamedTensor::new("future.layer", vec![1], vec![3.0]));
        assert_eq!(from_tensors(tensors).unwrap(), w);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let w = CistaWeights::random(arch(), 4).unwrap();
        let mut tensors = to_tensors(&w);
        let t = tensors.iter_mut().find(|t| t.name == "lsrc.synthesis").unwrap();
        t.shape = vec![1, 2, 9, 1];
        assert!(matches!(from_tensors(tensors), Err(Error::Dimension(_))));
    }
}
