//! Accelerator configurations and the preset design points.

use std::fmt;

use serde::{Deserialize, Serialize};
use ucnn_core::{EncodingMode, Error, LayerShape, Result};

pub const DEFAULT_PES: usize = 32;
pub const DEFAULT_L2_BYTES: usize = 256 * 1024;
/// Dense multiplies per PE per cycle every preset is sized for.
pub const NORMALIZED_MACS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "DCNN")]
    Dcnn,
    #[serde(rename = "DCNN_sp")]
    DcnnSp,
    #[serde(rename = "UCNN")]
    Ucnn,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Dcnn => "DCNN",
            Variant::DcnnSp => "DCNN_sp",
            Variant::Ucnn => "UCNN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwConfig {
    pub variant: Variant,
    #[serde(default = "default_pes")]
    pub pes: usize,
    /// Filters per dense PE.
    #[serde(default = "one")]
    pub v_k: usize,
    /// Adjacent output columns per UCNN PE.
    #[serde(default = "one")]
    pub v_w: usize,
    /// Filters sharing one input table.
    #[serde(default = "one")]
    pub g: usize,
    /// Channel tile; `None` takes the deepest tile the input buffer holds.
    #[serde(default)]
    pub c_tile: Option<usize>,
    #[serde(default = "default_max_group")]
    pub max_group: Option<usize>,
    #[serde(default)]
    pub jump_width: Option<u32>,
    pub l1_input_bytes: usize,
    pub l1_weight_bytes: usize,
    #[serde(default = "one")]
    pub multipliers_per_lane: usize,
    /// Multiply batches that may wait for a multiplier before the table walk stalls.
    #[serde(default = "one")]
    pub mult_queue_depth: usize,
    /// Input tiles buffered per PE; a PE may run this many tiles ahead of
    /// the slowest PE sharing its input broadcast.
    #[serde(default = "two")]
    pub input_buffer_depth: usize,
    #[serde(default = "default_l2")]
    pub l2_bytes: usize,
    /// Width of each of the two multicast buses.
    #[serde(default = "default_bus")]
    pub bus_bits: usize,
}

fn default_pes() -> usize {
    DEFAULT_PES
}
fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn default_max_group() -> Option<usize> {
    Some(ucnn_core::tables::DEFAULT_MAX_GROUP)
}
fn default_l2() -> usize {
    DEFAULT_L2_BYTES
}
fn default_bus() -> usize {
    64
}

/// Buffer sizes in the preset table are for 8-bit data and scale with precision.
fn scaled(bytes_at_8: usize, precision: u8) -> usize {
    bytes_at_8 * usize::from(precision) / 8
}

impl HwConfig {
    fn base(variant: Variant, l1_input: usize, l1_weight: usize, precision: u8) -> Self {
        Self {
            variant,
            pes: DEFAULT_PES,
            v_k: 1,
            v_w: 1,
            g: 1,
            c_tile: None,
            max_group: default_max_group(),
            jump_width: None,
            l1_input_bytes: scaled(l1_input, precision),
            l1_weight_bytes: scaled(l1_weight, precision),
            multipliers_per_lane: 1,
            mult_queue_depth: 1,
            input_buffer_depth: 2,
            l2_bytes: DEFAULT_L2_BYTES,
            bus_bits: default_bus(),
        }
    }

    pub fn dcnn(precision: u8) -> Self {
        Self { v_k: 8, ..Self::base(Variant::Dcnn, 144, 1152, precision) }
    }

    pub fn dcnn_sp(precision: u8) -> Self {
        Self { variant: Variant::DcnnSp, ..Self::dcnn(precision) }
    }

    /// UCNN sized for a codebook of `u` values.
    pub fn ucnn(u: usize, precision: u8) -> Self {
        let (v_w, g, inp, wt) = match u {
            0..=3 => (2, 4, 768, 129),
            4..=17 => (4, 2, 1152, 232),
            _ => (8, 1, 1920, 652),
        };
        Self { v_w, g, ..Self::base(Variant::Ucnn, inp, wt, precision) }
    }

    /// Looks up `DCNN`, `DCNN_sp` or `UCNN_U<n>`.
    pub fn preset(name: &str, precision: u8) -> Result<Self> {
        match name {
            "DCNN" => Ok(Self::dcnn(precision)),
            "DCNN_sp" => Ok(Self::dcnn_sp(precision)),
            _ => name
                .strip_prefix("UCNN_U")
                .and_then(|u| u.parse().ok())
                .map(|u| Self::ucnn(u, precision))
                .ok_or_else(|| Error::Config(format!("unknown hardware preset {name:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pes", self.pes),
            ("v_k", self.v_k),
            ("v_w", self.v_w),
            ("g", self.g),
            ("multipliers_per_lane", self.multipliers_per_lane),
            ("mult_queue_depth", self.mult_queue_depth),
            ("input_buffer_depth", self.input_buffer_depth),
            ("l2_bytes", self.l2_bytes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        match self.variant {
            Variant::Ucnn if self.v_k != 1 => Err(Error::Config("UCNN vectorizes with g and v_w, not v_k".into())),
            Variant::Dcnn | Variant::DcnnSp if self.v_w != 1 || self.g != 1 => {
                Err(Error::Config("dense designs vectorize with v_k only".into()))
            }
            _ if self.c_tile == Some(0) => Err(Error::Config("c_tile must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Output columns one PE produces at once.
    pub fn lanes(&self) -> usize {
        match self.variant {
            Variant::Ucnn => self.v_w,
            _ => 1,
        }
    }

    /// Filters one PE works on at once.
    pub fn filters_per_pe(&self) -> usize {
        match self.variant {
            Variant::Ucnn => self.g,
            _ => self.v_k,
        }
    }

    pub fn dense_macs_per_cycle(&self) -> usize {
        self.lanes() * self.filters_per_pe()
    }

    pub fn is_normalized(&self) -> bool {
        self.dense_macs_per_cycle() == NORMALIZED_MACS
    }

    pub fn mode(&self) -> EncodingMode {
        self.jump_width.map_or(EncodingMode::Pointer, |width| EncodingMode::Jump { width })
    }

    /// Input columns the PE buffers: the window of all its lanes. Fully
    /// connected layers have one output column, so extra lanes add nothing.
    pub fn window_cols(&self, shape: &LayerShape) -> usize {
        (self.lanes().min(shape.out_w()) - 1) * shape.stride + shape.r
    }

    /// Channel tile used for `shape`: the configured tile, or the fewest
    /// tiles whose `S x window x C_t` block fits the input buffer, split as
    /// evenly as possible.
    pub fn layer_c_tile(&self, shape: &LayerShape, precision: u8) -> Result<usize> {
        let bytes = usize::from(precision).div_ceil(8);
        let per_channel = shape.s * self.window_cols(shape) * bytes;
        let fits = self.l1_input_bytes / per_channel;
        let even = |fits: usize| shape.c.div_ceil(shape.c.div_ceil(fits));
        let ct = match self.c_tile {
            Some(ct) => ct.min(shape.c),
            None if fits == 0 => 0,
            None => even(fits),
        };
        if ct == 0 || ct > fits {
            return Err(Error::Capacity(format!(
                "layer {shape}: {} B input buffer holds {fits} channels of {per_channel} B, tile needs {}",
                self.l1_input_bytes,
                ct.max(1)
            )));
        }
        if self.variant != Variant::Ucnn {
            let need = self.v_k * shape.r * shape.s * ct * bytes;
            if need > self.l1_weight_bytes {
                return Err(Error::Capacity(format!(
                    "layer {shape}: weight tile needs {need} B, buffer holds {} B",
                    self.l1_weight_bytes
                )));
            }
        }
        Ok(ct)
    }
}
