//! Value-level execution of compiled tables.
//!
//! One lane walks a table for one output position. Every read adds into the
//! deepest-group accumulator. When the deepest group closes, filter `G`
//! multiplies that sum by its weight and the sum is merged into the running
//! accumulator of each shallower filter whose current weight is non-zero.
//! When a shallower group closes, that filter multiplies its merged sum.

use std::ops::AddAssign;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::ACCUMULATOR_BITS;
use crate::error::{Error, Result};
use crate::quant::CodeBook;
use crate::tables::{walk, CompiledGroupTables, CompiledLayer, WalkVisitor};
use crate::tensor::QuantTensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneCounters {
    pub multiplies: u64,
    /// Input accumulation plus output accumulation adds.
    pub adds: u64,
    /// Adds merging a finished deepest group into shallower accumulators.
    pub merge_adds: u64,
    pub input_buffer_reads: u64,
    pub weight_buffer_reads: u64,
    /// Repeat weight reads caused by flushing an oversized group early.
    pub weight_peeks: u64,
    pub iit_reads: u64,
    pub wit_reads: u64,
    pub bubbles: u64,
}

impl AddAssign for LaneCounters {
    fn add_assign(&mut self, o: Self) {
        self.multiplies += o.multiplies;
        self.adds += o.adds;
        self.merge_adds += o.merge_adds;
        self.input_buffer_reads += o.input_buffer_reads;
        self.weight_buffer_reads += o.weight_buffer_reads;
        self.weight_peeks += o.weight_peeks;
        self.iit_reads += o.iit_reads;
        self.wit_reads += o.wit_reads;
        self.bubbles += o.bubbles;
    }
}

impl LaneCounters {
    pub fn scaled(self, n: u64) -> Self {
        Self {
            multiplies: self.multiplies * n,
            adds: self.adds * n,
            merge_adds: self.merge_adds * n,
            input_buffer_reads: self.input_buffer_reads * n,
            weight_buffer_reads: self.weight_buffer_reads * n,
            weight_peeks: self.weight_peeks * n,
            iit_reads: self.iit_reads * n,
            wit_reads: self.wit_reads * n,
            bubbles: self.bubbles * n,
        }
    }
}

struct Lane<'a, F> {
    fetch: F,
    weights: &'a [i64],
    g: usize,
    cap: usize,
    acc1: i64,
    acc3: Vec<i64>,
    count: Vec<usize>,
    cursor: Vec<usize>,
    psum: Vec<i64>,
    n: LaneCounters,
    batch: u8,
    trace: Option<&'a mut Vec<u8>>,
}

impl<F: Fn(usize) -> i64> Lane<'_, F> {
    fn weight(&self, slot: usize) -> i64 {
        self.weights[slot]
    }

    fn multiply(&mut self, level: usize, sum: i64, w: i64, early: bool) {
        self.psum[level] += sum * w;
        self.n.multiplies += 1;
        self.n.adds += 1;
        if early {
            self.n.weight_peeks += 1;
        } else {
            self.n.weight_buffer_reads += 1;
        }
        self.batch = self.batch.saturating_add(1);
    }

    fn close_level(&mut self, level: usize, cursor: &[usize], early: bool) {
        let w = self.weight(cursor[level]);
        if self.count[level] > 0 {
            if level + 1 == self.g {
                let sum = self.acc1;
                if w != 0 {
                    self.multiply(level, sum, w, early);
                }
                for (h, &slot) in cursor[..level].iter().enumerate() {
                    if self.weights[slot] != 0 {
                        self.acc3[h] += sum;
                        self.n.merge_adds += 1;
                    }
                }
            } else if w != 0 {
                let sum = self.acc3[level];
                self.multiply(level, sum, w, early);
            }
        }
        if level + 1 == self.g {
            self.acc1 = 0;
        } else {
            self.acc3[level] = 0;
        }
        self.count[level] = 0;
    }
}

impl<F: Fn(usize) -> i64> WalkVisitor for Lane<'_, F> {
    fn read(&mut self, offset: usize, cursor: &[usize]) {
        self.acc1 += (self.fetch)(offset);
        self.n.adds += 1;
        self.n.input_buffer_reads += 1;
        self.count.iter_mut().for_each(|c| *c += 1);
        self.cursor.copy_from_slice(cursor);
    }

    fn close(&mut self, level: usize, cursor: &[usize]) {
        self.close_level(level, cursor, false);
    }

    fn row(&mut self, bubble: bool) {
        // Early flush: the shallowest level holding `cap` reads forces a
        // multiply there and at every deeper level.
        let full = (0..self.g)
            .find(|&l| self.count[l] >= self.cap && self.weight(self.cursor[l]) != 0);
        if let Some(level) = full {
            let cursor = std::mem::take(&mut self.cursor);
            for l in (level..self.g).rev() {
                self.close_level(l, &cursor, true);
            }
            self.cursor = cursor;
        }
        self.n.iit_reads += 1;
        self.n.wit_reads += self.g as u64;
        self.n.bubbles += u64::from(bubble);
        if let Some(t) = self.trace.as_deref_mut() {
            t.push(self.batch);
        }
        self.batch = 0;
    }
}

/// Per-filter partial sums and counters for one table walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileResult {
    pub psums: Vec<i64>,
    pub counters: LaneCounters,
}

fn run_lane<F: Fn(usize) -> i64>(
    t: &CompiledGroupTables,
    codebook: &CodeBook,
    fetch: F,
    trace: Option<&mut Vec<u8>>,
) -> Result<TileResult> {
    let g = t.g();
    let mut lane = Lane {
        fetch,
        weights: codebook.values(),
        g,
        cap: t.max_group.unwrap_or(usize::MAX),
        acc1: 0,
        acc3: vec![0; g],
        count: vec![0; g],
        cursor: vec![0; g],
        psum: vec![0; g],
        n: LaneCounters::default(),
        batch: 0,
        trace,
    };
    walk(t, codebook.len(), &mut lane)?;
    Ok(TileResult { psums: lane.psum, counters: lane.n })
}

/// Walks `t` over one input window given as tile-ordered values.
pub fn exec_factorized(input_tile: &[i64], t: &CompiledGroupTables, codebook: &CodeBook) -> Result<TileResult> {
    if input_tile.len() != t.tile.len() {
        return Err(Error::Shape(format!(
            "input window has {} values, table covers {}",
            input_tile.len(),
            t.tile.len()
        )));
    }
    run_lane(t, codebook, |o| input_tile[o], None)
}

/// Counters of one walk plus the number of multiplies issued on each row.
/// Counts do not depend on input values.
pub fn trace_tile(t: &CompiledGroupTables, codebook: &CodeBook) -> Result<(LaneCounters, Vec<u8>)> {
    let mut trace = Vec::with_capacity(t.len());
    let r = run_lane(t, codebook, |_| 0, Some(&mut trace))?;
    Ok((r.counters, trace))
}

fn check_coverage(layer: &CompiledLayer) -> Result<()> {
    let sh = &layer.shape;
    let mut seen = vec![0u32; sh.k * sh.c];
    for t in &layer.tables {
        for &k in &t.filters {
            if k >= sh.k || t.tile.c_start + t.tile.c_len > sh.c || t.tile.r != sh.r || t.tile.s != sh.s {
                return Err(Error::Config(format!("table for filter {k} lies outside layer {sh}")));
            }
            for c in t.tile.c_start..t.tile.c_start + t.tile.c_len {
                seen[k * sh.c + c] += 1;
            }
        }
    }
    if let Some(i) = seen.iter().position(|&n| n != 1) {
        return Err(Error::Config(format!(
            "filter {} channel {} is covered by {} tables",
            i / sh.c,
            i % sh.c,
            seen[i]
        )));
    }
    Ok(())
}

/// Full layer through the tables: partial sums accumulate across channel
/// tiles, then ReLU is applied if requested.
pub fn exec_layer(input: &QuantTensor, layer: &CompiledLayer, apply_relu: bool) -> Result<(QuantTensor, LaneCounters)> {
    let sh = &layer.shape;
    input.expect_dims(&sh.input_dims(), "input")?;
    check_coverage(layer)?;
    let (wo, ho, st) = (sh.out_w(), sh.out_h(), sh.stride);
    let plane = wo * ho;
    type PerTable = (Vec<(usize, Vec<i64>)>, LaneCounters);
    let results: Vec<PerTable> = layer
        .tables
        .par_iter()
        .map(|t| {
            let mut outs: Vec<Vec<i64>> = vec![vec![0; plane]; t.g()];
            let mut total = LaneCounters::default();
            let geom = t.tile;
            let coords: Vec<usize> = (0..geom.len())
                .map(|o| {
                    let (r, s, c) = geom.coords(o);
                    ((geom.c_start + c) * sh.h + s) * sh.w + r
                })
                .collect();
            for y in 0..ho {
                for x in 0..wo {
                    let origin = y * st * sh.w + x * st;
                    let res = run_lane(t, &layer.codebook, |o| input.data[origin + coords[o]], None)?;
                    for (g, v) in res.psums.iter().enumerate() {
                        outs[g][y * wo + x] += v;
                    }
                    total += res.counters;
                }
            }
            Ok((t.filters.iter().copied().zip(outs).collect(), total))
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0i64; sh.output_len()];
    let mut counters = LaneCounters::default();
    for (per_filter, n) in results {
        for (k, vals) in per_filter {
            for (d, v) in data[k * plane..(k + 1) * plane].iter_mut().zip(vals) {
                *d += v;
            }
        }
        counters += n;
    }
    if apply_relu {
        data.iter_mut().for_each(|v| *v = (*v).max(0));
    }
    let out = QuantTensor { shape: sh.output_dims().to_vec(), data, precision_bits: ACCUMULATOR_BITS };
    Ok((out, counters))
}
