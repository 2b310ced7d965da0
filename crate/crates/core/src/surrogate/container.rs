//! Model files: a text header of `key = value` lines closed by `end_header`, followed
//! by one FLD1 tensor per parameter block (complex blocks carry a trailing axis of 2).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use super::params::{Activation, FnoHyper, FnoParams, GroupRef};
use crate::error::{Error, Result};
use crate::projection::{InvariantConvP4, MassMode, Selector};
use crate::rng;
use crate::spectral::fld::FldTensor;

const MAGIC_LINE: &str = "specproj-model 1";
const END: &str = "end_header";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub header: Vec<(String, String)>,
    pub blocks: Vec<(String, FldTensor)>,
}

impl ModelFile {
    pub fn new(kind: &str) -> Self {
        ModelFile {
            header: vec![("model_kind".into(), kind.into())],
            blocks: Vec::new(),
        }
    }

    pub fn kind(&self) -> Result<&str> {
        self.get("model_kind")
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("model header lacks '{key}'")))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("model header '{key}' has bad value '{raw}'")))
    }

    pub fn parsed_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key)?;
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("model header '{key}' has bad entry '{s}'")))
            })
            .collect()
    }

    pub fn push_real(&mut self, name: &str, v: &[f64]) {
        // Empty groups are legal (e.g. zero conditioning) but FLD1 forbids size 0.
        let t = FldTensor {
            dims: vec![v.len().max(1)],
            data: if v.is_empty() { vec![0.0] } else { v.to_vec() },
        };
        self.blocks.push((name.to_string(), t));
    }

    pub fn push_complex(&mut self, name: &str, v: &[Complex64]) {
        let t = FldTensor {
            dims: vec![v.len(), 2],
            data: v.iter().flat_map(|c| [c.re, c.im]).collect(),
        };
        self.blocks.push((name.to_string(), t));
    }

    pub fn block(&self, name: &str) -> Result<&FldTensor> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("model file lacks block '{name}'")))
    }

    pub fn real_block(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        let t = self.block(name)?;
        if len == 0 && t.dims == [1] {
            return Ok(Vec::new());
        }
        if t.dims != [len] {
            return Err(Error::Format(format!("block '{name}' has dims {:?}, expected [{len}]", t.dims)));
        }
        Ok(t.data.clone())
    }

    pub fn complex_block(&self, name: &str, len: usize) -> Result<Vec<Complex64>> {
        let t = self.block(name)?;
        if t.dims != [len, 2] {
            return Err(Error::Format(format!("block '{name}' has dims {:?}, expected [{len}, 2]", t.dims)));
        }
        Ok(t.data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut text = format!("{MAGIC_LINE}\n");
        for (k, v) in &self.header {
            text.push_str(&format!("{k} = {v}\n"));
        }
        let names: Vec<&str> = self.blocks.iter().map(|(n, _)| n.as_str()).collect();
        text.push_str(&format!("blocks = {}\n{END}\n", names.join(",")));
        let mut out = text.into_bytes();
        for (_, t) in &self.blocks {
            out.extend(t.encode());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let marker = format!("\n{END}\n");
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker.as_bytes())
            .ok_or_else(|| Error::Format("model header is not terminated".into()))?;
        let text = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::Format("model header is not UTF-8".into()))?;
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC_LINE) {
            return Err(Error::Format("not a specproj model file".into()));
        }
        let mut header = Vec::new();
        let mut names: Option<Vec<String>> = None;
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header line '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "blocks" {
                names = Some(if v.is_empty() { Vec::new() } else { v.split(',').map(str::to_string).collect() });
            } else {
                header.push((k.to_string(), v.to_string()));
            }
        }
        let names = names.ok_or_else(|| Error::Format("model header lacks a block list".into()))?;
        let mut at = split + marker.len();
        let mut blocks = Vec::with_capacity(names.len());
        for name in names {
            let (t, used) = FldTensor::decode_prefix(&bytes[at..])?;
            at += used;
            blocks.push((name, t));
        }
        if at != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after the last block", bytes.len() - at)));
        }
        Ok(ModelFile { header, blocks })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        ModelFile::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl FnoParams {
    pub fn to_model_file(&self) -> ModelFile {
        let h = &self.hyper;
        let mut m = ModelFile::new(if self.selector == Selector::None { "fno" } else { "pcno" });
        m.set("in_ch", h.in_ch);
        m.set("cond_ch", h.cond_ch);
        m.set("out_ch", h.out_ch);
        m.set("width", h.width);
        m.set("modes", join(&h.modes));
        m.set("layers", h.layers);
        m.set("activation", h.activation);
        m.set("time_padding", h.time_padding);
        m.set("selector", self.selector);
        m.set(
            "mass_mode",
            match self.projection.mass.mode {
                MassMode::Spatial2d => "spatial",
                MassMode::Spatiotemporal3d => "spatiotemporal",
            },
        );
        if let Some(s) = &self.projection.mass.spectral_conv {
            m.set("w_spe_modes", join(s.modes()));
        }
        if let Some(p) = &self.projection.momentum {
            let lattice = p.kernel.lattice_shape();
            let grid: Vec<usize> = lattice.iter().zip(&p.padding).map(|(n, q)| n - q).collect();
            m.set("momentum_grid", join(&grid));
            m.set("momentum_padding", join(&p.padding));
            m.set("momentum_w_inv", join(&[p.w_inv.center, p.w_inv.edge, p.w_inv.corner]));
        }
        self.visit(&mut |name, g| match g {
            GroupRef::Real(v) => m.push_real(name, v),
            GroupRef::Complex(v) => m.push_complex(name, v),
        });
        m
    }

    pub fn from_model_file(m: &ModelFile) -> Result<Self> {
        let kind = m.kind()?;
        if kind != "fno" && kind != "pcno" {
            return Err(Error::Format(format!("expected an fno or pcno model, found '{kind}'")));
        }
        let hyper = FnoHyper {
            in_ch: m.parsed("in_ch")?,
            cond_ch: m.parsed("cond_ch")?,
            out_ch: m.parsed("out_ch")?,
            width: m.parsed("width")?,
            modes: m.parsed_list("modes")?,
            layers: m.parsed("layers")?,
            activation: m.get("activation")?.parse::<Activation>().map_err(|e| Error::Format(e.to_string()))?,
            time_padding: m.parsed("time_padding")?,
        };
        let selector: Selector = m.get("selector")?.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
        let mass_mode = match m.get("mass_mode")? {
            "spatial" => MassMode::Spatial2d,
            "spatiotemporal" => MassMode::Spatiotemporal3d,
            other => return Err(Error::Format(format!("unknown mass mode '{other}'"))),
        };
        let w_spe: Option<Vec<usize>> = m.get("w_spe_modes").ok().map(|_| m.parsed_list("w_spe_modes")).transpose()?;
        let momentum = match m.get("momentum_grid") {
            Ok(_) => {
                let grid: Vec<usize> = m.parsed_list("momentum_grid")?;
                let padding: Vec<usize> = m.parsed_list("momentum_padding")?;
                let w: Vec<f64> = m.parsed_list("momentum_w_inv")?;
                if w.len() != 3 {
                    return Err(Error::Format("momentum_w_inv needs 3 values".into()));
                }
                Some((grid, padding, InvariantConvP4::new(w[0], w[1], w[2])))
            }
            Err(_) => None,
        };
        // Structure only; every value is overwritten from the blocks below.
        let mut scratch = rng::stream(0, "container/structure");
        let mut params = FnoParams::init(hyper, &mut scratch)?.with_projection(
            selector,
            mass_mode,
            w_spe.as_deref(),
            momentum.as_ref().map(|(g, p, w)| (g.as_slice(), p.clone(), *w)),
            &mut scratch,
        )?;
        let mut flat = Vec::with_capacity(params.num_params());
        for g in params.groups() {
            let len = g.range.len();
            if g.complex {
                flat.extend(m.complex_block(&g.name, len / 2)?.iter().flat_map(|c| [c.re, c.im]));
            } else {
                flat.extend(m.real_block(&g.name, len)?);
            }
        }
        params.set_flat(&flat)?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_model_file().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        FnoParams::from_model_file(&ModelFile::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_blocks_round_trip() {
        let mut m = ModelFile::new("denoiser");
        m.set("hidden", 8);
        m.push_real("a", &[1.0, -2.5]);
        m.push_real("empty", &[]);
        m.push_complex("b", &[Complex64::new(0.1, 0.2)]);
        let back = ModelFile::decode(&m.encode()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parsed::<usize>("hidden").unwrap(), 8);
        assert!(back.real_block("empty", 0).unwrap().is_empty());
        assert_eq!(back.complex_block("b", 1).unwrap()[0], Complex64::new(0.1, 0.2));
        assert!(back.real_block("a", 3).is_err());
        let bytes = m.encode();
        assert!(ModelFile::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(ModelFile::decode(b"nonsense").is_err());
    }
}
