//! Event counts and the per-event energy table.
//!
//! Energy is always recomputed from counts, so reports stay valid under any
//! coefficient set.

use std::ops::AddAssign;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ucnn_core::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../../configs/energy_32nm.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SramClass {
    pub max_bytes: usize,
    pub read_pj_per_bit: f64,
    pub write_pj_per_bit: f64,
}

/// Picojoules per event. PE-local buffers are priced by size class; a
/// buffer larger than every class uses the largest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCoefficients {
    pub dram_pj_per_bit: f64,
    pub l2_read_pj_per_bit: f64,
    pub l2_write_pj_per_bit: f64,
    pub l1_classes: Vec<SramClass>,
    /// Per bus bit, per PE the bus passes, per cycle.
    pub noc_pj_per_bit_hop: f64,
    /// Multiplier energy is this times the product of operand widths.
    pub mult_pj_per_bit2: f64,
    pub add_pj_per_bit: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TABLE).expect("bundled energy table parses")
    }
}

impl EnergyCoefficients {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        c.validate()?;
        Ok(c)
    }

    /// Everything free except DRAM.
    pub fn dram_only(&self) -> Self {
        Self {
            dram_pj_per_bit: self.dram_pj_per_bit,
            l2_read_pj_per_bit: 0.0,
            l2_write_pj_per_bit: 0.0,
            l1_classes: self
                .l1_classes
                .iter()
                .map(|c| SramClass { read_pj_per_bit: 0.0, write_pj_per_bit: 0.0, ..*c })
                .collect(),
            noc_pj_per_bit_hop: 0.0,
            mult_pj_per_bit2: 0.0,
            add_pj_per_bit: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut all = vec![
            self.dram_pj_per_bit,
            self.l2_read_pj_per_bit,
            self.l2_write_pj_per_bit,
            self.noc_pj_per_bit_hop,
            self.mult_pj_per_bit2,
            self.add_pj_per_bit,
        ];
        all.extend(self.l1_classes.iter().flat_map(|c| [c.read_pj_per_bit, c.write_pj_per_bit]));
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("energy coefficients must be finite and non-negative".into()));
        }
        if self.l1_classes.is_empty() || self.l1_classes.windows(2).any(|w| w[0].max_bytes >= w[1].max_bytes) {
            return Err(Error::Config("l1_classes must be non-empty and sorted by max_bytes".into()));
        }
        Ok(())
    }

    pub fn sram_class(&self, bytes: usize) -> &SramClass {
        self.l1_classes
            .iter()
            .find(|c| bytes <= c.max_bytes)
            .unwrap_or_else(|| self.l1_classes.last().expect("validated table"))
    }

    pub fn energy(&self, e: &Events) -> EnergyBreakdown {
        let dram = (e.dram_read_bits + e.dram_write_bits) as f64 * self.dram_pj_per_bit;
        let l2 = e.l2_read_bits as f64 * self.l2_read_pj_per_bit + e.l2_write_bits as f64 * self.l2_write_pj_per_bit;
        let noc = e.noc_bit_hops as f64 * self.noc_pj_per_bit_hop;
        let buffers: f64 = e
            .l1
            .iter()
            .map(|b| {
                let c = self.sram_class(b.bytes);
                b.read_bits as f64 * c.read_pj_per_bit + b.write_bits as f64 * c.write_pj_per_bit
            })
            .sum();
        let arith = e.mult_bit_products as f64 * self.mult_pj_per_bit2 + e.add_bits as f64 * self.add_pj_per_bit;
        EnergyBreakdown { dram, l2_noc: l2 + noc, pe: buffers + arith }
    }
}

/// Traffic of one PE-local buffer summed over all PEs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferTraffic {
    pub name: String,
    pub bytes: usize,
    pub reads: u64,
    pub read_bits: u64,
    pub write_bits: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Events {
    pub dram_read_bits: u64,
    pub dram_write_bits: u64,
    pub dram_weight_bits: u64,
    pub l2_read_bits: u64,
    pub l2_write_bits: u64,
    pub noc_bit_hops: u64,
    pub l1: Vec<BufferTraffic>,
    pub multiplies: u64,
    pub mult_bit_products: u64,
    pub adds: u64,
    pub add_bits: u64,
}

impl Events {
    pub fn buffer(&self, name: &str) -> Option<&BufferTraffic> {
        self.l1.iter().find(|b| b.name == name)
    }

    pub(crate) fn buffer_mut(&mut self, name: &str, bytes: usize) -> &mut BufferTraffic {
        let i = match self.l1.iter().position(|b| b.name == name) {
            Some(i) => i,
            None => {
                self.l1.push(BufferTraffic { name: name.into(), bytes, ..Default::default() });
                self.l1.len() - 1
            }
        };
        &mut self.l1[i]
    }

    pub(crate) fn multiply(&mut self, count: u64, a_bits: u32, b_bits: u32) {
        self.multiplies += count;
        self.mult_bit_products += count * u64::from(a_bits) * u64::from(b_bits);
    }

    pub(crate) fn add(&mut self, count: u64, bits: u32) {
        self.adds += count;
        self.add_bits += count * u64::from(bits);
    }
}

impl AddAssign<&Events> for Events {
    fn add_assign(&mut self, o: &Events) {
        self.dram_read_bits += o.dram_read_bits;
        self.dram_write_bits += o.dram_write_bits;
        self.dram_weight_bits += o.dram_weight_bits;
        self.l2_read_bits += o.l2_read_bits;
        self.l2_write_bits += o.l2_write_bits;
        self.noc_bit_hops += o.noc_bit_hops;
        self.multiplies += o.multiplies;
        self.mult_bit_products += o.mult_bit_products;
        self.adds += o.adds;
        self.add_bits += o.add_bits;
        // Buffers of different layers may differ in size, so they stay separate
        // when sizes differ.
        for b in &o.l1 {
            match self.l1.iter_mut().find(|x| x.name == b.name && x.bytes == b.bytes) {
                Some(x) => {
                    x.reads += b.reads;
                    x.read_bits += b.read_bits;
                    x.write_bits += b.write_bits;
                }
                None => self.l1.push(b.clone()),
            }
        }
    }
}

/// Picojoules by component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dram: f64,
    pub l2_noc: f64,
    pub pe: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.dram + self.l2_noc + self.pe
    }
}

impl AddAssign for EnergyBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.dram += o.dram;
        self.l2_noc += o.l2_noc;
        self.pe += o.pe;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Events {
        let mut e = Events { dram_read_bits: 100, dram_write_bits: 20, l2_read_bits: 50, noc_bit_hops: 1000, ..Default::default() };
        let b = e.buffer_mut("input", 1000);
        b.read_bits = 64;
        b.write_bits = 16;
        e.multiply(3, 16, 16);
        e.add(5, 48);
        e
    }

    #[test]
    fn bundled_table_is_valid() {
        let c = EnergyCoefficients::default();
        c.validate().unwrap();
        assert_eq!(c.dram_pj_per_bit, 20.0);
        assert_eq!(c.sram_class(10).max_bytes, 64);
        assert_eq!(c.sram_class(1000).max_bytes, 1024);
        assert_eq!(c.sram_class(1 << 30).max_bytes, 32768);
    }

    #[test]
    fn energy_is_linear_in_each_coefficient() {
        let c = EnergyCoefficients::default();
        let e = sample();
        let base = c.energy(&e);
        let mut d = c.clone();
        d.noc_pj_per_bit_hop *= 2.0;
        let twice = d.energy(&e);
        assert_eq!(twice.dram, base.dram);
        assert_eq!(twice.pe, base.pe);
        assert!((twice.l2_noc - base.l2_noc - 1000.0 * c.noc_pj_per_bit_hop).abs() < 1e-9);
        let mut m = c.clone();
        m.mult_pj_per_bit2 *= 2.0;
        assert!((m.energy(&e).pe - base.pe - 3.0 * 256.0 * c.mult_pj_per_bit2).abs() < 1e-9);
    }

    #[test]
    fn dram_only_isolates_dram() {
        let c = EnergyCoefficients::default().dram_only();
        let e = c.energy(&sample());
        assert_eq!((e.dram, e.l2_noc, e.pe), (2400.0, 0.0, 0.0));
    }

    #[test]
    fn negative_coefficients_rejected() {
        let c = EnergyCoefficients { add_pj_per_bit: -1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
