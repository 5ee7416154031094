//! Mapping a layer onto the chip.
//!
//! Activations stay in the L2 when the whole input and output fit next to at
//! least one PE's worth of filters; otherwise the output columns are split
//! into strips whose input columns overlap by `R - 1`. Filters stream from
//! DRAM in chunks that fill the rest of the L2. Within a chunk, PE work units
//! are `(column group, filter group)` pairs issued in waves of `P`.

use serde::{Deserialize, Serialize};
use ucnn_core::{Error, LayerShape, Result};

use crate::hw::HwConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strip {
    pub first_col: usize,
    pub out_cols: usize,
    pub in_cols: usize,
}

impl Strip {
    pub fn col_units(&self, lanes: usize) -> usize {
        self.out_cols.div_ceil(lanes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub c_tile: usize,
    pub tiles: usize,
    pub lanes: usize,
    pub filters_per_pe: usize,
    /// Filter groups of each weight chunk, as ranges of group indices.
    pub chunks: Vec<(usize, usize)>,
    pub strips: Vec<Strip>,
    /// Activation bytes held in the L2 per strip.
    pub act_bytes: usize,
}

impl LayerPlan {
    pub fn resident(&self) -> bool {
        self.strips.len() == 1
    }

    pub fn filter_groups(&self) -> usize {
        self.chunks.last().map_or(0, |c| c.1)
    }

    /// Work units of one strip and chunk in issue order, column-major.
    pub fn units(&self, strip: &Strip, chunk: (usize, usize)) -> impl Iterator<Item = (usize, usize)> {
        let cols = strip.col_units(self.lanes);
        (0..cols).flat_map(move |c| (chunk.0..chunk.1).map(move |f| (c, f)))
    }
}

fn strips(shape: &LayerShape, n: usize) -> Vec<Strip> {
    let wo = shape.out_w();
    let (base, extra) = (wo / n, wo % n);
    let mut first = 0;
    (0..n)
        .map(|i| {
            let out_cols = base + usize::from(i < extra);
            let s = Strip { first_col: first, out_cols, in_cols: (out_cols - 1) * shape.stride + shape.r };
            first += out_cols;
            s
        })
        .collect()
}

fn strip_act_bytes(shape: &LayerShape, s: &[Strip], bytes: usize) -> usize {
    s.iter()
        .map(|s| (shape.c * shape.h * s.in_cols + shape.k * shape.out_h() * s.out_cols) * bytes)
        .max()
        .unwrap_or(0)
}

/// `unit_weight_bits[f]` is the stored size of filter group `f`;
/// `shared_bytes` stay in the L2 next to every chunk (the codebook).
pub fn schedule_layer(
    shape: &LayerShape,
    hw: &HwConfig,
    precision: u8,
    unit_weight_bits: &[u64],
    shared_bytes: usize,
) -> Result<LayerPlan> {
    shape.validate()?;
    hw.validate()?;
    let c_tile = hw.layer_c_tile(shape, precision)?;
    let fv = hw.filters_per_pe();
    if unit_weight_bits.len() != shape.k.div_ceil(fv) {
        return Err(Error::Config(format!(
            "{} filter groups given, layer {shape} has {}",
            unit_weight_bits.len(),
            shape.k.div_ceil(fv)
        )));
    }
    let bytes = usize::from(precision).div_ceil(8);
    let unit_bytes: Vec<usize> = unit_weight_bits.iter().map(|b| b.div_ceil(8) as usize).collect();
    let largest = unit_bytes.iter().copied().max().unwrap_or(0) + shared_bytes;

    let (strips, act_bytes) = (1..=shape.out_w())
        .map(|n| {
            let s = strips(shape, n);
            let a = strip_act_bytes(shape, &s, bytes);
            (s, a)
        })
        .find(|(_, a)| a + largest <= hw.l2_bytes)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "layer {shape}: one output column plus a {largest} B filter group exceeds the {} B L2",
                hw.l2_bytes
            ))
        })?;

    let region = hw.l2_bytes - act_bytes - shared_bytes;
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut used = 0;
    for (f, &b) in unit_bytes.iter().enumerate() {
        if used + b > region {
            chunks.push((start, f));
            start = f;
            used = 0;
        }
        used += b;
    }
    chunks.push((start, unit_bytes.len()));

    Ok(LayerPlan {
        c_tile,
        tiles: shape.c.div_ceil(c_tile),
        lanes: hw.lanes(),
        filters_per_pe: fv,
        chunks,
        strips,
        act_bytes,
    })
}

/// Wall-clock cycles of one wave. `durations[p][t]` is PE `p`'s time on input
/// tile `t`. A tile is broadcast once every PE has finished the tile `depth`
/// places earlier. Returns the wave's cycles and the part of them spent
/// waiting beyond the slowest PE's own work.
pub fn wave_cycles(durations: &[&[u64]], depth: usize) -> (u64, u64) {
    let Some(tiles) = durations.first().map(|d| d.len()) else { return (0, 0) };
    let mut finish = vec![vec![0u64; tiles]; durations.len()];
    for t in 0..tiles {
        let release = if t >= depth { finish.iter().map(|f| f[t - depth]).max().unwrap_or(0) } else { 0 };
        for (p, d) in durations.iter().enumerate() {
            let ready = if t > 0 { finish[p][t - 1] } else { 0 };
            finish[p][t] = ready.max(release) + d[t];
        }
    }
    let wall = finish.iter().map(|f| f[tiles - 1]).max().unwrap_or(0);
    let busiest = durations.iter().map(|d| d.iter().sum::<u64>()).max().unwrap_or(0);
    (wall, wall - busiest)
}
