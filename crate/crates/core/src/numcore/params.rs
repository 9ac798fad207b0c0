//! Named parameter container and the `RGP1` checkpoint format.
//!
//! Layout (all integers u32 little-endian, values f32 little-endian):
//!
//! ```text
//! "RGP1" | count | { name_len | name bytes | rows | cols | values[rows*cols] } * count
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RGP1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let name = name.into();
        match self.index_of(&name) {
            Some(i) => self.values[i] = value,
            None => {
                self.names.push(name);
                self.values.push(value);
            }
        }
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Fresh trainable leaves for one forward/backward pass.
    pub fn bind(&self) -> BoundParams {
        BoundParams {
            names: self.names.clone(),
            tensors: self.values.iter().map(|v| Tensor::param(v.clone())).collect(),
        }
    }

    /// Rounds every value through f32, matching what a checkpoint stores.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.values {
            v.mapv_inplace(|x| x as f32 as f64);
        }
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (name, v) in self.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(v.nrows() as u32).to_le_bytes())?;
            w.write_all(&(v.ncols() as u32).to_le_bytes())?;
            for x in v.iter() {
                w.write_all(&(*x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(8 + self.num_scalars() * 4);
        self.write_checkpoint(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let count = read_u32(&mut r)?;
        let mut out = ParamSet::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(truncated)?;
            let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let mut raw = vec![0u8; rows * cols * 4];
            r.read_exact(&mut raw).map_err(truncated)?;
            let vals = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let arr = Array2::from_shape_vec((rows, cols), vals).expect("length matches");
            out.insert(name, arr);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::atomic_write(path, &self.to_checkpoint_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        Self::read_checkpoint(&bytes[..])
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}

/// Parameters bound as leaves of a recorded computation.
pub struct BoundParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl BoundParams {
    /// Panics on unknown names; model code only asks for names it created.
    pub fn get(&self, name: &str) -> &Tensor {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        &self.tensors[i]
    }

    pub fn try_get(&self, name: &str) -> Result<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name}")))
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Gradients in parameter order, zeros for parameters the loss did not reach.
    pub fn grads(&self) -> Vec<Array2<f64>> {
        self.tensors.iter().map(Tensor::grad_or_zeros).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn checkpoint_layout() {
        let mut p = ParamSet::new();
        p.insert("a", array![[1.0, 2.0]]);
        let bytes = p.to_checkpoint_bytes();
        assert_eq!(&bytes[..4], b"RGP1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..13], b"a");
        assert_eq!(&bytes[13..17], &1u32.to_le_bytes());
        assert_eq!(&bytes[17..21], &2u32.to_le_bytes());
        assert_eq!(&bytes[21..25], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 29);
    }

    #[test]
    fn checkpoint_round_trip_after_f32_rounding() {
        let mut p = ParamSet::new();
        p.insert("gcn.0.w", array![[0.1, -0.2], [1e-7, 3.5]]);
        p.insert("cls", array![[0.333333333333]]);
        let back = ParamSet::read_checkpoint(&p.to_checkpoint_bytes()[..]).unwrap();
        let mut rounded = p.clone();
        rounded.round_to_f32();
        assert_eq!(back, rounded);
        assert_eq!(back.names(), &["gcn.0.w".to_string(), "cls".to_string()]);
    }

    #[test]
    fn truncated_checkpoint_is_format_error() {
        let mut p = ParamSet::new();
        p.insert("w", Array2::ones((3, 3)));
        let bytes = p.to_checkpoint_bytes();
        let err = ParamSet::read_checkpoint(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(ParamSet::read_checkpoint(&b"XXXX"[..]).is_err());
    }
}
