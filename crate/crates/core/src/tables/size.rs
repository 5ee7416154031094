use serde::{Deserialize, Serialize};

use crate::rle::rle5_compress_size;
use crate::tensor::QuantTensor;

use super::{pointer_width, wit_bits, CompiledLayer, EncodingMode};

/// Model size of one compiled layer next to the sparse and dense baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub mode: EncodingMode,
    pub g: usize,
    pub weights: u64,
    pub entries: u64,
    pub skip_entries: u64,
    pub total_table_bits: u64,
    pub codebook_bits: u64,
    pub rle5_bits: u64,
    pub raw_bits: u64,
}

impl SizeReport {
    /// Table bits per weight; the codebook is accounted separately.
    pub fn bits_per_weight(&self) -> f64 {
        self.total_table_bits as f64 / self.weights as f64
    }

    pub fn bits_per_weight_with_codebook(&self) -> f64 {
        (self.total_table_bits + self.codebook_bits) as f64 / self.weights as f64
    }

    pub fn rle5_bits_per_weight(&self) -> f64 {
        self.rle5_bits as f64 / self.weights as f64
    }

    pub fn raw_bits_per_weight(&self) -> f64 {
        self.raw_bits as f64 / self.weights as f64
    }

    pub fn skip_fraction(&self) -> f64 {
        if self.entries == 0 {
            0.0
        } else {
            self.skip_entries as f64 / self.entries as f64
        }
    }
}

/// `filters` are the weights the layer was compiled from.
pub fn size_report(layer: &CompiledLayer, filters: &QuantTensor) -> SizeReport {
    SizeReport {
        mode: layer.options.mode,
        g: layer.options.g,
        weights: layer.shape.weight_count() as u64,
        entries: layer.entries(),
        skip_entries: layer.skip_entries(),
        total_table_bits: layer.table_bits(),
        codebook_bits: layer.codebook.storage_bits(layer.precision_bits),
        rle5_bits: rle5_compress_size(filters),
        raw_bits: filters.len() as u64 * u64::from(filters.precision_bits),
    }
}

/// Bits per weight of dense pointer tables with no skip rows: one pointer per
/// `G` weights plus `G + 1` transition bits.
pub fn analytic_pointer_bits_per_weight(tile_len: usize, g: usize) -> f64 {
    f64::from(pointer_width(tile_len) + wit_bits(g)) / g as f64
}
