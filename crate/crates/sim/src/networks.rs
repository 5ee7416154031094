//! Layer lists of well-known networks. Shapes are given pre-padded and
//! pooling layers are folded into the next layer's input size. Fully
//! connected layers are 1x1 convolutions over a 1x1 input.

use serde::{Deserialize, Serialize};
use ucnn_core::{Error, LayerShape, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub shape: LayerShape,
    #[serde(default = "yes")]
    pub relu: bool,
}

fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, shape: LayerShape) -> Self {
        Self { name: name.into(), shape, relu: true }
    }
}

pub const PRESETS: [&str; 3] = ["lenet-like", "alexnet-like", "resnet50-like"];

pub fn preset(name: &str) -> Result<Vec<LayerSpec>> {
    match name {
        "lenet-like" => Ok(lenet()),
        "alexnet-like" => Ok(alexnet()),
        "resnet50-like" => Ok(resnet50()),
        _ => Err(Error::Config(format!("unknown network preset {name:?}; expected one of {PRESETS:?}"))),
    }
}

fn fc(name: &str, inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::new(name, LayerShape::fully_connected(inputs, outputs))
}

fn last_linear(mut layers: Vec<LayerSpec>) -> Vec<LayerSpec> {
    if let Some(l) = layers.last_mut() {
        l.relu = false;
    }
    layers
}

pub fn lenet() -> Vec<LayerSpec> {
    last_linear(vec![
        LayerSpec::new("conv1", LayerShape::new(32, 32, 1, 5, 5, 6)),
        LayerSpec::new("conv2", LayerShape::new(14, 14, 6, 5, 5, 16)),
        fc("fc3", 400, 120),
        fc("fc4", 120, 84),
        fc("fc5", 84, 10),
    ])
}

pub fn alexnet() -> Vec<LayerSpec> {
    last_linear(vec![
        LayerSpec::new("conv1", LayerShape::new(227, 227, 3, 11, 11, 96).with_stride(4)),
        LayerSpec::new("conv2", LayerShape::new(31, 31, 96, 5, 5, 256)),
        LayerSpec::new("conv3", LayerShape::new(15, 15, 256, 3, 3, 384)),
        LayerSpec::new("conv4", LayerShape::new(15, 15, 384, 3, 3, 384)),
        LayerSpec::new("conv5", LayerShape::new(15, 15, 384, 3, 3, 256)),
        fc("fc6", 9216, 4096),
        fc("fc7", 4096, 4096),
        fc("fc8", 4096, 1000),
    ])
}

/// Bottleneck stages of (blocks, mid channels, output channels, input size).
const RESNET50_STAGES: [(usize, usize, usize, usize); 4] =
    [(3, 64, 256, 56), (4, 128, 512, 28), (6, 256, 1024, 14), (3, 512, 2048, 7)];

pub fn resnet50() -> Vec<LayerSpec> {
    let mut layers = vec![LayerSpec::new("conv1", LayerShape::new(230, 230, 3, 7, 7, 64).with_stride(2))];
    let mut c_in = 64;
    let mut in_size = 56;
    for (stage, &(blocks, mid, out, size)) in RESNET50_STAGES.iter().enumerate() {
        let stride = in_size / size;
        for b in 0..blocks {
            let name = |part: &str| format!("res{}{}_{part}", stage + 2, (b'a' + b as u8) as char);
            let (w, st) = if b == 0 { (in_size, stride) } else { (size, 1) };
            let cin = if b == 0 { c_in } else { out };
            layers.push(LayerSpec::new(name("1x1a"), LayerShape::new(w, w, cin, 1, 1, mid).with_stride(st)));
            layers.push(LayerSpec::new(name("3x3"), LayerShape::new(size + 2, size + 2, mid, 3, 3, mid)));
            layers.push(LayerSpec::new(name("1x1b"), LayerShape::new(size, size, mid, 1, 1, out)));
            if b == 0 {
                layers.push(LayerSpec::new(name("proj"), LayerShape::new(w, w, cin, 1, 1, out).with_stride(st)));
            }
        }
        c_in = out;
        in_size = size;
    }
    layers.push(fc("fc", 2048, 1000));
    last_linear(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let layers = preset(name).unwrap();
            for l in &layers {
                l.shape.validate().unwrap();
            }
            assert!(!layers.last().unwrap().relu);
        }
        assert!(preset("vgg").is_err());
    }

    #[test]
    fn resnet50_layer_dimensions() {
        let r = resnet50();
        assert_eq!(r.len(), 54);
        assert_eq!(r[0].shape.out_w(), 112);
        let weights: usize = r.iter().map(|l| l.shape.weight_count()).sum();
        // about 25.5M parameters without biases and batch norm
        assert!((25_000_000..26_000_000).contains(&weights), "{weights}");
        for l in &r[1..] {
            let expect = if l.name.starts_with("res2") { 56 } else { l.shape.out_w() };
            assert_eq!(l.shape.out_w(), expect);
            assert_eq!(l.shape.out_w(), l.shape.out_h());
        }
        let fc = r.last().unwrap();
        assert_eq!((fc.shape.c, fc.shape.k, fc.shape.out_positions()), (2048, 1000, 1));
    }

    #[test]
    fn alexnet_conv1_output() {
        let a = alexnet();
        assert_eq!(a[0].shape.out_w(), 55);
        assert_eq!(a[5].shape.c, 256 * 6 * 6);
    }
}
