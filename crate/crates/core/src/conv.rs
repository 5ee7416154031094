//! Dense reference convolution. Everything else in the workspace is checked
//! against this.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{LayerShape, QuantTensor};

/// Outputs carry the full accumulator width.
pub const ACCUMULATOR_BITS: u8 = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseCounters {
    pub multiplies: u64,
    pub adds: u64,
    pub input_reads: u64,
    pub weight_reads: u64,
}

impl DenseCounters {
    /// Closed form for a dense evaluation of `shape`.
    pub fn for_shape(shape: &LayerShape) -> Self {
        let macs = shape.dense_macs();
        Self { multiplies: macs, adds: macs, input_reads: macs, weight_reads: macs }
    }
}

/// `out[k][y][x] = sum_{c,s,r} in[c][y*stride+s][x*stride+r] * f[k][c][s][r]`.
pub fn dense_conv(
    input: &QuantTensor,
    filters: &QuantTensor,
    shape: &LayerShape,
) -> Result<(QuantTensor, DenseCounters)> {
    shape.validate()?;
    input.expect_dims(&shape.input_dims(), "input")?;
    filters.expect_dims(&shape.filter_dims(), "filters")?;

    let (wo, ho) = (shape.out_w(), shape.out_h());
    let (w, h, st) = (shape.w, shape.h, shape.stride);
    let mut out = vec![0i64; shape.output_len()];
    let fl = shape.filter_len();
    for (k, plane) in out.chunks_mut(ho * wo).enumerate() {
        let f = &filters.data[k * fl..(k + 1) * fl];
        for c in 0..shape.c {
            let chan = &input.data[c * h * w..(c + 1) * h * w];
            for s in 0..shape.s {
                for r in 0..shape.r {
                    let wt = f[(c * shape.s + s) * shape.r + r];
                    if wt == 0 {
                        continue;
                    }
                    for y in 0..ho {
                        let row = &chan[(y * st + s) * w..];
                        let dst = &mut plane[y * wo..(y + 1) * wo];
                        for (x, o) in dst.iter_mut().enumerate() {
                            *o += wt * row[x * st + r];
                        }
                    }
                }
            }
        }
    }
    let out = QuantTensor {
        shape: shape.output_dims().to_vec(),
        data: out,
        precision_bits: ACCUMULATOR_BITS,
    };
    Ok((out, DenseCounters::for_shape(shape)))
}

pub fn relu(t: &QuantTensor) -> QuantTensor {
    QuantTensor {
        shape: t.shape.clone(),
        data: t.data.iter().map(|&v| v.max(0)).collect(),
        precision_bits: t.precision_bits,
    }
}

/// Fully connected layer run through the convolution path: `weights` is
/// `[K, C]`, reinterpreted as K filters of 1x1xC over a 1x1 image.
pub fn fc_as_conv(input: &QuantTensor, weights: &QuantTensor) -> Result<Vec<i64>> {
    if weights.shape.len() != 2 {
        return Err(Error::Shape(format!(
            "weight matrix must be 2-D, got dims {:?}",
            weights.shape
        )));
    }
    let (k, c) = (weights.shape[0], weights.shape[1]);
    if input.len() != c {
        return Err(Error::Shape(format!(
            "weight matrix is {k}x{c} but input has {} elements",
            input.len()
        )));
    }
    let shape = LayerShape::fully_connected(c, k);
    let as_image = QuantTensor {
        shape: shape.input_dims().to_vec(),
        data: input.data.clone(),
        precision_bits: input.precision_bits,
    };
    let as_filters = QuantTensor {
        shape: shape.filter_dims().to_vec(),
        data: weights.data.clone(),
        precision_bits: weights.precision_bits,
    };
    Ok(dense_conv(&as_image, &as_filters, &shape)?.0.data)
}
