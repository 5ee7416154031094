//! Banked input buffer for spatially vectorized PEs.
//!
//! Lane `v` reads the pixel `r + v` columns into the window for the same
//! table entry `(r, s, c)`. Skewing the bank by the column keeps the `V_W`
//! reads of one cycle in distinct banks.

use ucnn_core::tables::decode_logical;
use ucnn_core::{CompiledGroupTables, Result};

pub fn bank_of(r: usize, _s: usize, _c: usize, v: usize, v_w: usize) -> usize {
    (r + v) % v_w
}

pub fn addr_of(r: usize, s: usize, c: usize, v: usize, v_w: usize, s_dim: usize, c_t: usize) -> usize {
    s * c_t + c + (r + v).div_ceil(v_w) * s_dim * c_t
}

pub trait BankMapping {
    fn banks(&self) -> usize;
    fn bank(&self, r: usize, s: usize, c: usize, v: usize) -> usize;
    fn addr(&self, r: usize, s: usize, c: usize, v: usize) -> usize;
}

/// Column-skewed banking used by the UCNN input buffer.
#[derive(Debug, Clone, Copy)]
pub struct SkewedBanks {
    pub v_w: usize,
    pub s: usize,
    pub c_t: usize,
}

impl BankMapping for SkewedBanks {
    fn banks(&self) -> usize {
        self.v_w
    }
    fn bank(&self, r: usize, s: usize, c: usize, v: usize) -> usize {
        bank_of(r, s, c, v, self.v_w)
    }
    fn addr(&self, r: usize, s: usize, c: usize, v: usize) -> usize {
        addr_of(r, s, c, v, self.v_w, self.s, self.c_t)
    }
}

/// Lanes that had to wait on a busy bank, summed over the walk of `t`.
/// Each read row issues one access per lane; skip rows issue none.
pub fn check_bank_conflicts(t: &CompiledGroupTables, map: &dyn BankMapping) -> Result<u64> {
    let lanes = map.banks();
    let mut busy = vec![false; lanes];
    let mut conflicts = 0u64;
    for e in decode_logical(t)? {
        let Some(off) = e.offset else { continue };
        let (r, s, c) = t.tile.coords(off);
        busy.iter_mut().for_each(|b| *b = false);
        for v in 0..lanes {
            let b = map.bank(r, s, c, v);
            if std::mem::replace(&mut busy[b], true) {
                conflicts += 1;
            }
        }
    }
    Ok(conflicts)
}

/// Fraction of the banked buffer that cannot be addressed when the window
/// spans `R + V_W - 1` columns, as an unreduced `(numerator, denominator)`.
pub fn unaddressable_fraction(r: usize, v_w: usize) -> (u64, u64) {
    let cols = (r + v_w - 1) as u64;
    (cols % v_w as u64, cols)
}
