//! Sorted indirection tables.
//!
//! A table covers `G` filters over one channel tile of `R*S*C_t` positions.
//! Positions are numbered `(s * C_t + c) * R + r`. Every entry carries one
//! `iiT` field and one `wiT` field per member filter: 1 bit for filters
//! `1..G-1`, 2 bits for filter `G`. The fields of an entry describe the
//! transition taken *after* the entry is read:
//!
//! * all zero: stay in the current group;
//! * shallowest non-zero field at level `g < G-1`: filter `g` moves to its
//!   next weight, every deeper level restarts (their fields must be 1) and the
//!   deepest field `f >= 1` places filter `G` at canonical slot `f - 1`;
//! * only the deepest field `f` non-zero: filter `G` advances by `f` slots.
//!
//! Sentinel entries (all-ones `iiT`) apply their fields without reading an
//! input and cost one bubble. In jump mode a sentinel with all-zero fields is a
//! hop that moves the jump base forward by `2^width - 1`.

pub mod bits;
mod compile;
mod decode;
mod format;
mod groups;
mod size;

use serde::{Deserialize, Serialize};

pub use compile::{
    cap_group_size, compile_layer, hierarchical_sort, jump_encode, CompileOptions, LogicalEntry,
};
pub use decode::{decode, decode_logical, walk, WalkVisitor};
pub use format::{dump_layer, read_layer, write_layer};
pub use groups::{build_groups, filter_tile, slots_of, ActivationGroupIndex};
pub use size::{analytic_pointer_bits_per_weight, size_report, SizeReport};

use crate::quant::CodeBook;
use crate::tensor::LayerShape;

pub const DEFAULT_MAX_GROUP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EncodingMode {
    /// Absolute tile offsets.
    Pointer,
    /// Offsets relative to the previous read of the same deepest group.
    Jump { width: u32 },
}

/// Channel slice `[c_start, c_start + c_len)` of an `R x S` filter window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileGeom {
    pub r: usize,
    pub s: usize,
    pub c_start: usize,
    pub c_len: usize,
}

impl TileGeom {
    pub fn len(&self) -> usize {
        self.r * self.s * self.c_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self, r: usize, s: usize, c: usize) -> usize {
        (s * self.c_len + c) * self.r + r
    }

    /// Inverse of [`TileGeom::offset`]; `c` is relative to `c_start`.
    pub fn coords(&self, offset: usize) -> (usize, usize, usize) {
        let r = offset % self.r;
        let sc = offset / self.r;
        (r, sc / self.c_len, sc % self.c_len)
    }

    /// Channel tiles covering `shape.c` with tile depth `c_tile`.
    pub fn tiles(shape: &LayerShape, c_tile: usize) -> Vec<TileGeom> {
        (0..shape.c)
            .step_by(c_tile.max(1))
            .map(|c_start| TileGeom {
                r: shape.r,
                s: shape.s,
                c_start,
                c_len: c_tile.min(shape.c - c_start),
            })
            .collect()
    }
}

/// Compiled tables for `G` filters over one channel tile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledGroupTables {
    /// Member filters `k_1..k_G`.
    pub filters: Vec<usize>,
    pub tile: TileGeom,
    pub mode: EncodingMode,
    pub iit_width: u32,
    pub iit: Vec<u32>,
    /// One stream per member filter, aligned with `iit`.
    pub wit: Vec<Vec<u8>>,
    /// Executor flushes a group early once it holds this many reads.
    pub max_group: Option<usize>,
}

impl CompiledGroupTables {
    pub fn g(&self) -> usize {
        self.filters.len()
    }

    pub fn len(&self) -> usize {
        self.iit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iit.is_empty()
    }

    pub fn sentinel(&self) -> u32 {
        sentinel(self.iit_width)
    }

    pub fn is_sentinel(&self, entry: usize) -> bool {
        self.iit[entry] == self.sentinel()
    }

    /// Entries that read no input (skips and hops).
    pub fn skip_entries(&self) -> usize {
        let s = self.sentinel();
        self.iit.iter().filter(|&&v| v == s).count()
    }

    pub fn read_entries(&self) -> usize {
        self.len() - self.skip_entries()
    }

    pub fn wit_bits_per_entry(&self) -> u32 {
        wit_bits(self.g())
    }

    pub fn entry_bits(&self) -> u32 {
        self.iit_width + self.wit_bits_per_entry()
    }

    pub fn table_bits(&self) -> u64 {
        self.len() as u64 * u64::from(self.entry_bits())
    }

    pub fn fields(&self, entry: usize) -> impl Iterator<Item = u8> + '_ {
        self.wit.iter().map(move |w| w[entry])
    }
}

pub(crate) fn sentinel(width: u32) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

pub(crate) fn wit_bits(g: usize) -> u32 {
    g.saturating_sub(1) as u32 + 2
}

/// Pointer width for a tile of `len` positions. The all-ones code is kept free
/// for the sentinel, so exact powers of two need one extra bit.
pub fn pointer_width(len: usize) -> u32 {
    bits::bit_length(len as u64).max(1)
}

/// A whole layer compiled into tables, group-major then tile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledLayer {
    pub shape: LayerShape,
    pub codebook: CodeBook,
    pub precision_bits: u8,
    pub options: CompileOptions,
    pub tables: Vec<CompiledGroupTables>,
}

impl CompiledLayer {
    pub fn tile_count(&self) -> usize {
        self.shape.c.div_ceil(self.options.c_tile)
    }

    pub fn group_count(&self) -> usize {
        self.shape.k.div_ceil(self.options.g)
    }

    pub fn table(&self, group: usize, tile: usize) -> &CompiledGroupTables {
        &self.tables[group * self.tile_count() + tile]
    }

    pub fn table_bits(&self) -> u64 {
        self.tables.iter().map(|t| t.table_bits()).sum()
    }

    pub fn skip_entries(&self) -> u64 {
        self.tables.iter().map(|t| t.skip_entries() as u64).sum()
    }

    pub fn entries(&self) -> u64 {
        self.tables.iter().map(|t| t.len() as u64).sum()
    }
}
