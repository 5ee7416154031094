use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::CodeBook;
use crate::tensor::{LayerShape, QuantTensor};

use super::decode::decode_logical;
use super::groups::{filter_tile, slots_of};
use super::{
    pointer_width, sentinel, CompiledGroupTables, CompiledLayer, EncodingMode, TileGeom,
    DEFAULT_MAX_GROUP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub g: usize,
    pub c_tile: usize,
    pub mode: EncodingMode,
    pub max_group: Option<usize>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self { g: 1, c_tile: 64, mode: EncodingMode::Pointer, max_group: Some(DEFAULT_MAX_GROUP) }
    }
}

impl CompileOptions {
    pub fn validate(&self) -> Result<()> {
        if self.g == 0 {
            return Err(Error::Config("G must be at least 1".into()));
        }
        if self.c_tile == 0 {
            return Err(Error::Config("channel tile must be at least 1".into()));
        }
        if self.max_group == Some(0) {
            return Err(Error::Config("maximum group size must be at least 1".into()));
        }
        if let EncodingMode::Jump { width } = self.mode {
            check_jump_width(width)?;
        }
        Ok(())
    }
}

fn check_jump_width(width: u32) -> Result<()> {
    if !(1..=31).contains(&width) {
        return Err(Error::Config(format!("jump width must be in 1..=31 bits, got {width}")));
    }
    Ok(())
}

/// One table row before the `iiT` field is encoded. `offset == None` is a
/// sentinel; in jump form a sentinel with zero fields is a hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicalEntry {
    pub offset: Option<usize>,
    pub fields: Vec<u8>,
}

/// Sorts the union of the member filters' non-zero positions by
/// `(slot_1, .., slot_G, offset)` and emits transition fields and skip rows.
pub(crate) fn sort_and_mark(slots: &[Vec<usize>], zero: Option<usize>, u: usize) -> Vec<LogicalEntry> {
    let g = slots.len();
    let n = slots.first().map_or(0, Vec::len);
    let mut keyed: Vec<(u128, usize)> = (0..n)
        .filter(|&o| zero.is_none() || slots.iter().any(|s| Some(s[o]) != zero))
        .map(|o| {
            let key = slots.iter().fold(0u128, |acc, s| acc * u as u128 + s[o] as u128);
            (key, o)
        })
        .collect();
    keyed.sort_unstable();

    let mut out: Vec<LogicalEntry> = Vec::with_capacity(keyed.len() + keyed.len() / 8);
    let mut cur = vec![0usize; g];
    let mut target = vec![0usize; g];
    let mut pending: Option<usize> = None;
    for &(key, o) in &keyed {
        let mut rest = key;
        for lvl in (0..g).rev() {
            target[lvl] = (rest % u as u128) as usize;
            rest /= u as u128;
        }
        while let Some(lvl) = (0..g).find(|&l| cur[l] != target[l]) {
            debug_assert!(cur[lvl] < target[lvl]);
            let mut fields = vec![0u8; g];
            if lvl + 1 < g {
                fields[lvl..g - 1].fill(1);
                cur[lvl] += 1;
                cur[lvl + 1..].fill(0);
                let deep = if cur[..g - 1] == target[..g - 1] { target[g - 1].min(2) } else { 0 };
                fields[g - 1] = deep as u8 + 1;
                cur[g - 1] = deep;
            } else {
                let step = (target[lvl] - cur[lvl]).min(3);
                fields[lvl] = step as u8;
                cur[lvl] += step;
            }
            match pending.take() {
                Some(p) => out[p].fields = fields,
                None => out.push(LogicalEntry { offset: None, fields }),
            }
        }
        out.push(LogicalEntry { offset: Some(o), fields: vec![0; g] });
        pending = Some(out.len() - 1);
    }
    if let Some(p) = pending {
        out[p].fields.fill(1);
    }
    out
}

pub(crate) fn encode_pointer(
    logical: &[LogicalEntry],
    filters: Vec<usize>,
    tile: TileGeom,
    max_group: Option<usize>,
) -> CompiledGroupTables {
    let width = pointer_width(tile.len());
    let sent = sentinel(width);
    let g = filters.len();
    let iit = logical.iter().map(|e| e.offset.map_or(sent, |o| o as u32)).collect();
    let wit = (0..g).map(|l| logical.iter().map(|e| e.fields[l]).collect()).collect();
    CompiledGroupTables { filters, tile, mode: EncodingMode::Pointer, iit_width: width, iit, wit, max_group }
}

pub(crate) fn encode_jump(
    logical: &[LogicalEntry],
    width: u32,
    filters: Vec<usize>,
    tile: TileGeom,
    max_group: Option<usize>,
) -> CompiledGroupTables {
    let sent = sentinel(width);
    let hop = sent as usize;
    let max_jump = hop - 1;
    let g = filters.len();
    let mut iit = Vec::with_capacity(logical.len());
    let mut wit: Vec<Vec<u8>> = vec![Vec::with_capacity(logical.len()); g];
    let mut base = 0usize;
    for e in logical {
        if let Some(o) = e.offset {
            while o - base > max_jump {
                iit.push(sent);
                wit.iter_mut().for_each(|w| w.push(0));
                base += hop;
            }
            iit.push((o - base) as u32);
            base = o;
        } else {
            iit.push(sent);
        }
        for (w, &f) in wit.iter_mut().zip(&e.fields) {
            w.push(f);
        }
        if e.fields.iter().any(|&f| f != 0) {
            base = 0;
        }
    }
    CompiledGroupTables { filters, tile, mode: EncodingMode::Jump { width }, iit_width: width, iit, wit, max_group }
}

/// Builds pointer-mode tables for the member filter tiles (each `[C_t, S, R]`).
pub fn hierarchical_sort(
    filters: &[usize],
    tiles: &[QuantTensor],
    codebook: &CodeBook,
    geom: TileGeom,
) -> Result<CompiledGroupTables> {
    if tiles.is_empty() || tiles.len() != filters.len() {
        return Err(Error::Config(format!(
            "need one tile per member filter, got {} tiles for {} filters",
            tiles.len(),
            filters.len()
        )));
    }
    let slots = tiles.iter().map(|t| slots_of(t, codebook)).collect::<Result<Vec<_>>>()?;
    if slots.iter().any(|s| s.len() != geom.len()) {
        return Err(Error::Shape(format!("tiles do not match a {}-position tile", geom.len())));
    }
    let logical = sort_and_mark(&slots, codebook.zero_index(), codebook.len());
    Ok(encode_pointer(&logical, filters.to_vec(), geom, None))
}

/// Re-encodes pointer tables with relative jumps of `width` bits.
pub fn jump_encode(tables: &CompiledGroupTables, width: u32) -> Result<CompiledGroupTables> {
    check_jump_width(width)?;
    if tables.mode != EncodingMode::Pointer {
        return Err(Error::Config("jump encoding starts from pointer tables".into()));
    }
    let logical = decode_logical(tables)?;
    Ok(encode_jump(&logical, width, tables.filters.clone(), tables.tile, tables.max_group))
}

/// Limits how many reads feed one multiply; larger groups are flushed early
/// and the same weight is peeked again.
pub fn cap_group_size(mut tables: CompiledGroupTables, max_size: usize) -> CompiledGroupTables {
    tables.max_group = Some(max_size.max(1));
    tables
}

/// Compiles every filter group and channel tile of a layer. Filters are
/// grouped in ascending order; the last group may be smaller than `G`.
pub fn compile_layer(
    filters: &QuantTensor,
    shape: &LayerShape,
    codebook: &CodeBook,
    opts: CompileOptions,
) -> Result<CompiledLayer> {
    opts.validate()?;
    shape.validate()?;
    filters.expect_dims(&shape.filter_dims(), "filters")?;
    let tiles = TileGeom::tiles(shape, opts.c_tile);
    let groups = shape.k.div_ceil(opts.g);
    let jobs: Vec<(usize, usize)> =
        (0..groups).flat_map(|gi| (0..tiles.len()).map(move |ti| (gi, ti))).collect();
    let tables = jobs
        .par_iter()
        .map(|&(gi, ti)| {
            let tile = tiles[ti];
            let members: Vec<usize> = (gi * opts.g..((gi + 1) * opts.g).min(shape.k)).collect();
            let slots = members
                .iter()
                .map(|&k| slots_of(&filter_tile(filters, shape, k, &tile), codebook))
                .collect::<Result<Vec<_>>>()?;
            let logical = sort_and_mark(&slots, codebook.zero_index(), codebook.len());
            Ok(match opts.mode {
                EncodingMode::Pointer => encode_pointer(&logical, members, tile, opts.max_group),
                EncodingMode::Jump { width } => {
                    encode_jump(&logical, width, members, tile, opts.max_group)
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompiledLayer {
        shape: *shape,
        codebook: codebook.clone(),
        precision_bits: filters.precision_bits,
        options: opts,
        tables,
    })
}
