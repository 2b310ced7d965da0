//! FLD1 tensor files.
//!
//! Layout (little-endian): `"FLD1"`, dtype byte (0 = f64), axis count `A` (axis 0 is
//! the channel axis), two zero bytes, `A` x u64 dimension sizes, then the f64 payload in
//! row-major order with the last axis fastest.

use std::fs;
use std::path::Path;

use super::grid::{GridSpec, RealField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FLD1";
pub const DTYPE_F64: u8 = 0;

/// Raw decoded tensor: dimensions plus flat payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FldTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl FldTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || n != data.len() {
            return Err(Error::Shape(format!(
                "tensor dims {dims:?} do not match payload of {} values",
                data.len()
            )));
        }
        Ok(FldTensor { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_F64);
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decode one tensor from the front of `bytes`, returning it and the bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(FldTensor, usize)> {
        if bytes.len() < 8 {
            return Err(Error::Format("truncated FLD1 header".into()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic (expected FLD1)".into()));
        }
        if bytes[4] != DTYPE_F64 {
            return Err(Error::Format(format!("unsupported dtype code {}", bytes[4])));
        }
        let axes = bytes[5] as usize;
        if axes == 0 {
            return Err(Error::Format("zero axes declared".into()));
        }
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(Error::Format("nonzero header padding".into()));
        }
        let dims_end = 8 + 8 * axes;
        if bytes.len() < dims_end {
            return Err(Error::Format("truncated dimension table".into()));
        }
        let mut dims = Vec::with_capacity(axes);
        let mut count: usize = 1;
        for a in 0..axes {
            let raw = u64::from_le_bytes(bytes[8 + 8 * a..16 + 8 * a].try_into().unwrap());
            let d = usize::try_from(raw).map_err(|_| Error::Format("dimension overflow".into()))?;
            if d == 0 {
                return Err(Error::Format(format!("axis {a} has size 0")));
            }
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::Format("dimension product overflow".into()))?;
            dims.push(d);
        }
        let end = count
            .checked_mul(8)
            .and_then(|b| b.checked_add(dims_end))
            .ok_or_else(|| Error::Format("payload size overflow".into()))?;
        if bytes.len() < end {
            return Err(Error::Format(format!(
                "payload truncated: declared {} bytes, found {}",
                end - dims_end,
                bytes.len() - dims_end
            )));
        }
        let data = bytes[dims_end..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((FldTensor { dims, data }, end))
    }

    /// Decode a buffer holding exactly one tensor.
    pub fn decode(bytes: &[u8]) -> Result<FldTensor> {
        let (t, used) = FldTensor::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Format(format!(
                "declared payload ends at byte {used} but buffer holds {}",
                bytes.len()
            )));
        }
        Ok(t)
    }

    /// Interpret as a field on a unit-extent spatial grid.
    pub fn into_field(self) -> Result<RealField> {
        if self.dims.len() < 2 {
            return Err(Error::Shape("a field needs a channel axis and at least one grid axis".into()));
        }
        let grid = GridSpec::unit(&self.dims[1..])?;
        RealField::new(grid, self.dims[0], self.data)
    }

    pub fn from_field(f: &RealField) -> FldTensor {
        let mut dims = vec![f.channels()];
        dims.extend(f.grid().shape());
        FldTensor {
            dims,
            data: f.data().to_vec(),
        }
    }
}

pub fn write_fld(field: &RealField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, FldTensor::from_field(field).encode()).map_err(|e| Error::io(path, e))
}

/// Read a field; grid extents default to 1 on every axis (FLD1 stores sizes only).
pub fn read_fld(path: impl AsRef<Path>) -> Result<RealField> {
    read_tensor(path)?.into_field()
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<FldTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FldTensor::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_byte_layout() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        let bytes = FldTensor::from_field(&RealField::zeros(&g, 1)).encode();
        assert_eq!(bytes.len(), 8 + 8 + 2 * 8 + 128);
        assert_eq!(&bytes[..8], &[b'F', b'L', b'D', b'1', 0, 3, 0, 0]);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 4);
        let back = FldTensor::decode(&bytes).unwrap().into_field().unwrap();
        assert_eq!(back, RealField::zeros(&g, 1));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        let good = FldTensor::from_field(&RealField::zeros(&g, 1)).encode();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(FldTensor::decode(&bad).is_err());

        let mut bad = good.clone();
        bad[4] = 1;
        assert!(FldTensor::decode(&bad).is_err());

        assert!(FldTensor::decode(&good[..good.len() - 8]).is_err());

        let mut long = good.clone();
        long.extend_from_slice(&[0u8; 8]);
        assert!(FldTensor::decode(&long).is_err());
    }
}
