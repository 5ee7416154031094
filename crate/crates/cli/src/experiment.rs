//! Experiment files: which networks to run and the sweep grid over them.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ucnn_core::{Error, Result};
use ucnn_sim::networks::{self, LayerSpec};
use ucnn_sim::{EnergyCoefficients, HwConfig, Variant, Workload};

/// A preset name such as `"resnet50-like"`, or explicit layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSpec {
    Preset(String),
    Custom { name: String, layers: Vec<LayerSpec> },
}

impl NetworkSpec {
    pub fn name(&self) -> &str {
        match self {
            NetworkSpec::Preset(n) => n,
            NetworkSpec::Custom { name, .. } => name,
        }
    }

    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        match self {
            NetworkSpec::Preset(n) => networks::preset(n),
            NetworkSpec::Custom { layers, .. } => Ok(layers.clone()),
        }
    }
}

/// A UCNN vectorization overriding the one implied by U.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vectorization {
    pub g: usize,
    pub v_w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub networks: Vec<NetworkSpec>,
    #[serde(default)]
    pub densities: Vec<f64>,
    #[serde(default)]
    pub u_values: Vec<usize>,
    #[serde(default)]
    pub precisions: Vec<u8>,
    #[serde(default = "all_variants")]
    pub variants: Vec<Variant>,
    /// Extra (G, V_W) points run for every U; empty means the preset per U.
    #[serde(default)]
    pub vectorizations: Vec<Vectorization>,
    #[serde(default)]
    pub jump_width: Option<u32>,
    #[serde(default = "default_input_density")]
    pub input_density: f64,
    #[serde(default)]
    pub l2_bytes: Option<usize>,
    /// Energy table; the bundled 32 nm table when absent.
    #[serde(default)]
    pub coefficients: Option<EnergyCoefficients>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn all_variants() -> Vec<Variant> {
    vec![Variant::Dcnn, Variant::DcnnSp, Variant::Ucnn]
}

fn default_input_density() -> f64 {
    0.35
}

pub const PRESETS: [&str; 4] = ["smoke", "resnet50-16b-50", "design-space", "model-size"];

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let spec: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    fn grid(networks: &[&str], densities: &[f64], u_values: &[usize], precisions: &[u8]) -> Self {
        Self {
            networks: networks.iter().map(|n| NetworkSpec::Preset(n.to_string())).collect(),
            densities: densities.to_vec(),
            u_values: u_values.to_vec(),
            precisions: precisions.to_vec(),
            variants: all_variants(),
            vectorizations: Vec::new(),
            jump_width: None,
            input_density: default_input_density(),
            l2_bytes: None,
            coefficients: None,
            seed: 1,
            out_dir: None,
        }
    }

    /// Built-in experiments.
    pub fn preset(name: &str) -> Result<Self> {
        let spec = match name {
            "smoke" => Self::grid(&["lenet-like"], &[1.0, 0.9, 0.65, 0.5, 0.3], &[3, 17, 64, 256], &[8]),
            "resnet50-16b-50" => Self::grid(&["resnet50-like"], &[0.5], &[3, 17, 64, 256], &[16]),
            "design-space" => Self::grid(
                &["lenet-like", "alexnet-like", "resnet50-like"],
                &[0.9, 0.65, 0.5],
                &[3, 17, 64, 256],
                &[8, 16],
            ),
            "model-size" => Self {
                variants: vec![Variant::DcnnSp, Variant::Ucnn],
                ..Self::grid(&["resnet50-like"], &[1.0, 0.9, 0.8, 0.65, 0.5, 0.3], &[3, 17, 256], &[8])
            },
            _ => return Err(Error::Config(format!("unknown experiment preset {name:?}; expected one of {PRESETS:?}"))),
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for n in &self.networks {
            let layers = n.layers()?;
            if layers.is_empty() {
                return Err(Error::Config(format!("network {:?} has no layers", n.name())));
            }
            for l in &layers {
                l.shape.validate().map_err(|e| Error::Config(format!("{}/{}: {e}", n.name(), l.name)))?;
            }
        }
        if let Some(d) = self.densities.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
            return Err(Error::Config(format!("density {d} is outside (0, 1]")));
        }
        if !(self.input_density > 0.0 && self.input_density <= 1.0) {
            return Err(Error::Config(format!("input density {} is outside (0, 1]", self.input_density)));
        }
        if let Some(p) = self.precisions.iter().find(|p| !(2..=32).contains(*p)) {
            return Err(Error::Config(format!("precision {p} is outside 2..=32 bits")));
        }
        if self.u_values.contains(&0) {
            return Err(Error::Config("U must be positive".into()));
        }
        if let Some(c) = &self.coefficients {
            c.validate()?;
        }
        Ok(())
    }

    pub fn coefficients(&self) -> EnergyCoefficients {
        self.coefficients.clone().unwrap_or_default()
    }

    /// Every point of the sweep, sorted by key, without duplicates. The dense
    /// baselines ignore U; their weights are drawn with the largest U swept
    /// (zero positions do not depend on U).
    pub fn configs(&self) -> Vec<RunConfig> {
        let baseline_u = self.u_values.iter().copied().max().unwrap_or(256);
        let mut out = Vec::new();
        for net in &self.networks {
            for &precision in &self.precisions {
                for &density in &self.densities {
                    for &variant in &self.variants {
                        let base = RunConfig {
                            network: net.name().to_string(),
                            precision,
                            density,
                            variant,
                            u: baseline_u,
                            vectorization: None,
                            jump_width: None,
                        };
                        if variant != Variant::Ucnn {
                            out.push(base);
                            continue;
                        }
                        for &u in &self.u_values {
                            let c = RunConfig { u, jump_width: self.jump_width, ..base.clone() };
                            if self.vectorizations.is_empty() {
                                out.push(c);
                            } else {
                                out.extend(self.vectorizations.iter().map(|v| RunConfig { vectorization: Some(*v), ..c.clone() }));
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(RunConfig::order);
        out.dedup_by(|a, b| a.order(b) == Ordering::Equal);
        out
    }

    pub fn network(&self, name: &str) -> Result<Vec<LayerSpec>> {
        self.networks
            .iter()
            .find(|n| n.name() == name)
            .ok_or_else(|| Error::Config(format!("network {name:?} is not in the experiment")))?
            .layers()
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub network: String,
    pub precision: u8,
    pub density: f64,
    pub variant: Variant,
    pub u: usize,
    pub vectorization: Option<Vectorization>,
    pub jump_width: Option<u32>,
}

impl RunConfig {
    fn density_permille(&self) -> i64 {
        (self.density * 1000.0).round() as i64
    }

    fn rank(&self) -> (usize, usize, usize, u32) {
        let v = self.vectorization.map_or((0, 0), |v| (v.g, v.v_w));
        let u = if self.variant == Variant::Ucnn { self.u } else { 0 };
        (u, v.0, v.1, self.jump_width.unwrap_or(0))
    }

    pub fn order(&self, o: &Self) -> Ordering {
        (&self.network, self.precision, self.density_permille(), self.variant, self.rank()).cmp(&(
            &o.network,
            o.precision,
            o.density_permille(),
            o.variant,
            o.rank(),
        ))
    }

    /// Short design name such as `DCNN_sp`, `UCNN_U17` or `UCNN_U17_G1_VW8_J8`.
    pub fn label(&self) -> String {
        match self.variant {
            Variant::Ucnn => {
                let mut s = format!("UCNN_U{}", self.u);
                if let Some(v) = self.vectorization {
                    s += &format!("_G{}_VW{}", v.g, v.v_w);
                }
                if let Some(j) = self.jump_width {
                    s += &format!("_J{j}");
                }
                s
            }
            v => v.to_string(),
        }
    }

    pub fn key(&self) -> String {
        format!("{}/p{}/d{:.2}/{}", self.network, self.precision, self.density, self.label())
    }

    pub fn hw(&self, spec: &ExperimentSpec) -> HwConfig {
        let mut hw = match self.variant {
            Variant::Dcnn => HwConfig::dcnn(self.precision),
            Variant::DcnnSp => HwConfig::dcnn_sp(self.precision),
            Variant::Ucnn => HwConfig::ucnn(self.u, self.precision),
        };
        if let Some(v) = self.vectorization {
            hw.g = v.g;
            hw.v_w = v.v_w;
        }
        hw.jump_width = self.jump_width;
        if let Some(l2) = spec.l2_bytes {
            hw.l2_bytes = l2;
        }
        hw
    }

    pub fn workload(&self, spec: &ExperimentSpec) -> Workload {
        Workload { input_density: spec.input_density, ..Workload::new(self.density, self.u, self.precision, spec.seed) }
    }
}
