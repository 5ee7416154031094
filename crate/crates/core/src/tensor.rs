//! Integer tensors, layer geometry and the on-disk tensor format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of one convolutional layer. Inputs are `C x H x W`, filters are
/// `K x C x S x R`. Padding is expected to be baked into `w`/`h` already.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub w: usize,
    pub h: usize,
    pub c: usize,
    pub r: usize,
    pub s: usize,
    pub k: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl LayerShape {
    pub fn new(w: usize, h: usize, c: usize, r: usize, s: usize, k: usize) -> Self {
        Self { w, h, c, r, s, k, stride: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// A fully connected layer `inputs -> outputs` expressed as 1x1 filters over a 1x1 image.
    pub fn fully_connected(inputs: usize, outputs: usize) -> Self {
        Self::new(1, 1, inputs, 1, 1, outputs)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("W", self.w),
            ("H", self.h),
            ("C", self.c),
            ("R", self.r),
            ("S", self.s),
            ("K", self.k),
            ("stride", self.stride),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Shape(format!("{name} must be at least 1 in {self}")));
        }
        if self.r > self.w || self.s > self.h {
            return Err(Error::Shape(format!("filter larger than input in {self}")));
        }
        Ok(())
    }

    pub fn out_w(&self) -> usize {
        (self.w - self.r) / self.stride + 1
    }

    pub fn out_h(&self) -> usize {
        (self.h - self.s) / self.stride + 1
    }

    /// Output positions per filter.
    pub fn out_positions(&self) -> usize {
        self.out_w() * self.out_h()
    }

    /// Weights per filter (`R*S*C`).
    pub fn filter_len(&self) -> usize {
        self.r * self.s * self.c
    }

    pub fn weight_count(&self) -> usize {
        self.filter_len() * self.k
    }

    pub fn input_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn output_len(&self) -> usize {
        self.k * self.out_positions()
    }

    /// Multiply-accumulates of a dense evaluation.
    pub fn dense_macs(&self) -> u64 {
        (self.output_len() * self.filter_len()) as u64
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [self.c, self.h, self.w]
    }

    pub fn filter_dims(&self) -> [usize; 4] {
        [self.k, self.c, self.s, self.r]
    }

    pub fn output_dims(&self) -> [usize; 3] {
        [self.k, self.out_h(), self.out_w()]
    }
}

impl std::fmt::Display for LayerShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "W{}xH{}xC{} R{}xS{} K{}",
            self.w, self.h, self.c, self.r, self.s, self.k
        )?;
        if self.stride != 1 {
            write!(f, " /{}", self.stride)?;
        }
        Ok(())
    }
}

/// Dense integer tensor stored row-major, last dimension fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantTensor {
    pub shape: Vec<usize>,
    pub data: Vec<i64>,
    pub precision_bits: u8,
}

pub fn fits_in(value: i64, bits: u8) -> bool {
    if bits >= 64 {
        return true;
    }
    let lo = -(1i64 << (bits - 1));
    let hi = (1i64 << (bits - 1)) - 1;
    (lo..=hi).contains(&value)
}

impl QuantTensor {
    pub fn new(shape: Vec<usize>, data: Vec<i64>, precision_bits: u8) -> Result<Self> {
        let t = Self { shape, data, precision_bits };
        t.validate()?;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>, precision_bits: u8) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0; n], precision_bits }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=64).contains(&self.precision_bits) {
            return Err(Error::Format(format!(
                "precision of {} bits is not supported",
                self.precision_bits
            )));
        }
        let n: usize = self.shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {n} elements but data has {}",
                self.shape,
                self.data.len()
            )));
        }
        if let Some(&v) = self.data.iter().find(|&&v| !fits_in(v, self.precision_bits)) {
            return Err(Error::Precision { value: v, bits: self.precision_bits });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn nonzeros(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn density(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.nonzeros() as f64 / self.data.len() as f64
        }
    }

    fn check_dims(&self, expected: &[usize], what: &str) -> Result<()> {
        if self.shape != expected {
            return Err(Error::Shape(format!(
                "{what}: expected dims {expected:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    pub fn expect_dims(&self, expected: &[usize], what: &str) -> Result<()> {
        self.check_dims(expected, what)
    }

    /// Binary layout: magic `UQT1`, endianness tag `L`, precision byte, rank byte,
    /// `rank` little-endian u64 dimensions, then the little-endian payload with
    /// 1, 2, 4 or 8 bytes per element depending on precision.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        self.validate()?;
        out.write_all(MAGIC)?;
        out.write_all(&[b'L', self.precision_bits, self.shape.len() as u8])?;
        for &d in &self.shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        let width = element_bytes(self.precision_bits);
        let mut buf = Vec::with_capacity(self.data.len() * width);
        for &v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes()[..width]);
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut head = [0u8; 7];
        input
            .read_exact(&mut head)
            .map_err(|_| Error::Format("truncated tensor header".into()))?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("bad tensor magic".into()));
        }
        if head[4] != b'L' {
            return Err(Error::Format(format!("unsupported endianness tag {:#x}", head[4])));
        }
        let precision_bits = head[5];
        if !(1..=64).contains(&precision_bits) {
            return Err(Error::Format(format!("bad precision {precision_bits}")));
        }
        let rank = head[6] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut d = [0u8; 8];
            input
                .read_exact(&mut d)
                .map_err(|_| Error::Format("truncated tensor dims".into()))?;
            shape.push(u64::from_le_bytes(d) as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("tensor dims overflow".into()))?;
        let width = element_bytes(precision_bits);
        let mut payload = vec![0u8; n * width];
        input
            .read_exact(&mut payload)
            .map_err(|_| Error::Format("truncated tensor payload".into()))?;
        let mut extra = [0u8; 1];
        if input.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after tensor payload".into()));
        }
        let data = payload
            .chunks_exact(width)
            .map(sign_extend)
            .collect();
        Self::new(shape, data, precision_bits)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "json") {
            fs::write(path, serde_json::to_string(self)?)?;
        } else {
            self.write_binary(fs::File::create(path)?)?;
        }
        Ok(())
    }

    /// Loads either format; `.json` files use the structured-text form.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "json") {
            let t: QuantTensor = serde_json::from_str(&fs::read_to_string(path)?)?;
            t.validate()?;
            Ok(t)
        } else {
            Self::read_binary(std::io::BufReader::new(fs::File::open(path)?))
        }
    }
}

const MAGIC: &[u8; 4] = b"UQT1";

fn element_bytes(bits: u8) -> usize {
    match bits {
        0..=8 => 1,
        9..=16 => 2,
        17..=32 => 4,
        _ => 8,
    }
}

fn sign_extend(bytes: &[u8]) -> i64 {
    let mut full = [0u8; 8];
    full[..bytes.len()].copy_from_slice(bytes);
    let shift = 64 - 8 * bytes.len() as u32;
    (i64::from_le_bytes(full) << shift) >> shift
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dims_follow_stride() {
        let s = LayerShape::new(5, 4, 2, 3, 2, 7);
        assert_eq!(s.output_dims(), [7, 3, 3]);
        let s2 = LayerShape::new(230, 230, 3, 7, 7, 64).with_stride(2);
        assert_eq!((s2.out_w(), s2.out_h()), (112, 112));
    }

    #[test]
    fn validate_rejects_oversized_filter() {
        assert!(LayerShape::new(2, 5, 1, 3, 1, 1).validate().is_err());
        assert!(LayerShape::new(5, 5, 0, 3, 1, 1).validate().is_err());
        assert!(LayerShape::new(3, 3, 1, 3, 3, 1).validate().is_ok());
    }

    #[test]
    fn precision_is_enforced() {
        assert!(QuantTensor::new(vec![2], vec![127, -128], 8).is_ok());
        assert!(matches!(
            QuantTensor::new(vec![1], vec![128], 8),
            Err(Error::Precision { value: 128, bits: 8 })
        ));
        assert!(QuantTensor::new(vec![3], vec![1, 2], 8).is_err());
    }

    #[test]
    fn binary_round_trip_keeps_negative_values() {
        for bits in [8u8, 16, 32, 64] {
            let lo = if bits == 64 { i64::MIN } else { -(1i64 << (bits - 1)) };
            let t = QuantTensor::new(vec![2, 2], vec![lo, -1, 0, 5], bits).unwrap();
            let mut buf = Vec::new();
            t.write_binary(&mut buf).unwrap();
            assert_eq!(QuantTensor::read_binary(&buf[..]).unwrap(), t);
        }
    }

    #[test]
    fn truncated_or_corrupt_files_are_rejected() {
        let t = QuantTensor::new(vec![3], vec![1, 2, 3], 16).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert!(QuantTensor::read_binary(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(QuantTensor::read_binary(&bad[..]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(QuantTensor::read_binary(&long[..]).is_err());
    }

    #[test]
    fn json_import() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        fs::write(&p, r#"{"shape":[2,2],"data":[1,-1,0,3],"precision_bits":8}"#).unwrap();
        let t = QuantTensor::load(&p).unwrap();
        assert_eq!(t.data, vec![1, -1, 0, 3]);
        fs::write(&p, r#"{"shape":[2,2],"data":[1,-1,0],"precision_bits":8}"#).unwrap();
        assert!(QuantTensor::load(&p).is_err());
    }
}
