use crate::error::{Error, Result};
use crate::quant::CodeBook;
use crate::tensor::{LayerShape, QuantTensor};

use super::TileGeom;

/// Per canonical codebook slot, the ascending tile offsets holding that weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationGroupIndex {
    pub groups: Vec<Vec<usize>>,
    pub zero_slot: Option<usize>,
}

impl ActivationGroupIndex {
    pub fn gsz(&self, slot: usize) -> usize {
        self.groups[slot].len()
    }

    /// Same index with the zero group emptied; only these groups are ever
    /// emitted into tables.
    pub fn without_zero(&self) -> Self {
        let mut out = self.clone();
        if let Some(z) = self.zero_slot {
            out.groups[z].clear();
        }
        out
    }

    pub fn nonzero_count(&self) -> usize {
        self.groups
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.zero_slot)
            .map(|(_, g)| g.len())
            .sum()
    }
}

/// Extracts filter `k`'s weights for one tile as `[c_len, S, R]`.
pub fn filter_tile(filters: &QuantTensor, shape: &LayerShape, k: usize, tile: &TileGeom) -> QuantTensor {
    let per_c = shape.s * shape.r;
    let base = k * shape.filter_len() + tile.c_start * per_c;
    QuantTensor {
        shape: vec![tile.c_len, shape.s, shape.r],
        data: filters.data[base..base + tile.c_len * per_c].to_vec(),
        precision_bits: filters.precision_bits,
    }
}

/// Canonical slot of every tile offset for a `[c_len, S, R]` tile.
pub fn slots_of(tile_weights: &QuantTensor, codebook: &CodeBook) -> Result<Vec<usize>> {
    let [c_len, s, r] = match tile_weights.shape[..] {
        [c, s, r] => [c, s, r],
        _ => {
            return Err(Error::Shape(format!(
                "filter tile must be [C_t, S, R], got {:?}",
                tile_weights.shape
            )))
        }
    };
    let geom = TileGeom { r, s, c_start: 0, c_len };
    let mut slots = vec![0usize; geom.len()];
    for c in 0..c_len {
        for si in 0..s {
            for ri in 0..r {
                let w = tile_weights.data[(c * s + si) * r + ri];
                slots[geom.offset(ri, si, c)] = codebook.index_of(w)?;
            }
        }
    }
    Ok(slots)
}

/// Groups tile offsets by the weight they multiply.
pub fn build_groups(tile_weights: &QuantTensor, codebook: &CodeBook) -> Result<ActivationGroupIndex> {
    let slots = slots_of(tile_weights, codebook)?;
    let mut groups = vec![Vec::new(); codebook.len()];
    for (offset, &slot) in slots.iter().enumerate() {
        groups[slot].push(offset);
    }
    Ok(ActivationGroupIndex { groups, zero_slot: codebook.zero_index() })
}
