use crate::error::{Error, Result};

/// LSB-first bit packer.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0);
        for i in 0..width {
            let byte = (self.len / 8) as usize;
            if byte == self.bytes.len() {
                self.bytes.push(0);
            }
            if (value >> i) & 1 == 1 {
                self.bytes[byte] |= 1 << (self.len % 8);
            }
            self.len += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn read(&mut self, width: u32) -> Result<u64> {
        if self.pos + u64::from(width) > self.bytes.len() as u64 * 8 {
            return Err(Error::Format("bit stream ended early".into()));
        }
        let mut v = 0u64;
        for i in 0..width {
            let bit = (self.bytes[(self.pos / 8) as usize] >> (self.pos % 8)) & 1;
            v |= u64::from(bit) << i;
            self.pos += 1;
        }
        Ok(v)
    }
}

/// Number of bits needed to write `n` in binary (0 for 0).
pub fn bit_length(n: u64) -> u32 {
    64 - n.leading_zeros()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_mixed_widths() {
        let items = [(5u64, 3u32), (0, 1), (1, 1), (1023, 10), (3, 2), (u64::MAX, 64)];
        let mut w = BitWriter::new();
        for &(v, n) in &items {
            w.write(v, n);
        }
        assert_eq!(w.bit_len(), 81);
        let bytes = w.into_bytes();
        assert_eq!(bytes.len(), 11);
        let mut r = BitReader::new(&bytes);
        for &(v, n) in &items {
            assert_eq!(r.read(n).unwrap(), v);
        }
        assert!(r.read(8).is_err());
    }

    #[test]
    fn bit_lengths() {
        assert_eq!(bit_length(0), 0);
        assert_eq!(bit_length(1), 1);
        assert_eq!(bit_length(1152), 11);
        assert_eq!(bit_length(1024), 11);
        assert_eq!(bit_length(576), 10);
    }
}
