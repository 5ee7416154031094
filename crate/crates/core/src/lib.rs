//! Weight-repetition aware convolution: a dense reference, weight codebooks,
//! the sorted indirection-table compiler and a factorized executor that is
//! bit-exact with the reference.

pub mod conv;
pub mod error;
pub mod exec;
pub mod quant;
pub mod rle;
pub mod tables;
pub mod tensor;

pub use conv::{dense_conv, fc_as_conv, relu, DenseCounters};
pub use error::{Error, Result};
pub use exec::{exec_factorized, exec_layer, trace_tile, LaneCounters, TileResult};
pub use quant::{gen_synthetic_filters, gen_synthetic_inputs, import_quantized, CodeBook, DensitySpec};
pub use tables::{CompileOptions, CompiledGroupTables, CompiledLayer, EncodingMode, TileGeom};
pub use tensor::{LayerShape, QuantTensor};
