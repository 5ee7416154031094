//! Layer and network simulation: schedules each layer, runs the PE cycle
//! model on every filter group, and counts DRAM, L2, bus and PE events.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ucnn_core::rle::rle5_compress_size;
use ucnn_core::tables::compile_layer;
use ucnn_core::{
    gen_synthetic_filters, gen_synthetic_inputs, CodeBook, CompileOptions, DensitySpec, Error, LaneCounters,
    LayerShape, QuantTensor, Result,
};

use crate::energy::{EnergyBreakdown, EnergyCoefficients, Events};
use crate::hw::{HwConfig, Variant};
use crate::networks::LayerSpec;
use crate::pe::{dense_tile_cycles, ucnn_tile_cycles, CycleReport, WalkTrace};
use crate::schedule::{schedule_layer, wave_cycles, LayerPlan};

/// Synthetic data of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub weight_density: f64,
    pub input_density: f64,
    pub u: usize,
    pub precision: u8,
    pub seed: u64,
}

impl Workload {
    pub fn new(weight_density: f64, u: usize, precision: u8, seed: u64) -> Self {
        Self { weight_density, input_density: 0.35, u, precision, seed }
    }

    fn layer_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// Weights and, when the design needs them, inputs of one layer.
#[derive(Debug, Clone)]
pub struct LayerData {
    pub filters: QuantTensor,
    pub codebook: CodeBook,
    pub inputs: Option<QuantTensor>,
}

impl LayerData {
    pub fn synthetic(shape: &LayerShape, wl: &Workload, index: usize, with_inputs: bool) -> Result<Self> {
        let seed = wl.layer_seed(index);
        let (filters, codebook) =
            gen_synthetic_filters(shape, &DensitySpec::new(wl.weight_density, wl.u, seed), wl.precision)?;
        let inputs = if with_inputs {
            Some(gen_synthetic_inputs(shape, wl.input_density, seed, wl.precision)?)
        } else {
            None
        };
        Ok(Self { filters, codebook, inputs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub name: String,
    pub shape: LayerShape,
    pub c_tile: usize,
    pub strips: usize,
    pub weight_chunks: usize,
    pub resident: bool,
    /// Wall-clock cycles.
    pub cycles: u64,
    /// Cycle breakdown summed over every PE work unit.
    pub pe: CycleReport,
    pub barrier_wait_cycles: u64,
    pub table_entries: u64,
    pub skip_entries: u64,
    /// Stored weight bits fetched from DRAM per pass.
    pub weight_bits: u64,
    pub bits_per_weight: f64,
    /// Lane events over the whole layer (UCNN only).
    pub lane: LaneCounters,
    /// Multiplies left after zero gating (sparse baseline only).
    pub gated_macs: Option<u64>,
    pub events: Events,
    pub energy: EnergyBreakdown,
}

impl LayerReport {
    pub fn dram_bits(&self) -> u64 {
        self.events.dram_read_bits + self.events.dram_write_bits
    }

    pub fn macs_per_cycle_per_pe(&self, pes: usize) -> f64 {
        self.shape.dense_macs() as f64 / (self.cycles as f64 * pes as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub hw: HwConfig,
    pub workload: Workload,
    pub layers: Vec<LayerReport>,
    pub cycles: u64,
    pub energy: EnergyBreakdown,
    pub events: Events,
}

impl SimReport {
    /// Energy recomputed from the recorded events under other coefficients.
    pub fn energy_with(&self, c: &EnergyCoefficients) -> EnergyBreakdown {
        let mut e = EnergyBreakdown::default();
        for l in &self.layers {
            e += c.energy(&l.events);
        }
        e
    }
}

/// A layer with everything counted except activation traffic to DRAM, which
/// depends on its neighbours.
struct Prepared {
    report: LayerReport,
    plan: LayerPlan,
    act_bits: u64,
}

fn psum_bits(p: u8) -> u32 {
    2 * u32::from(p) + 16
}

/// Gated multiplies of a dense PE: both the weight and the input are non-zero.
pub fn gated_macs(filters: &QuantTensor, inputs: &QuantTensor, sh: &LayerShape) -> u64 {
    let fl = sh.filter_len();
    let mut nz_filters = vec![0u64; fl];
    for f in filters.data.chunks(fl) {
        for (n, &w) in nz_filters.iter_mut().zip(f) {
            *n += u64::from(w != 0);
        }
    }
    let (ho, wo, st) = (sh.out_h(), sh.out_w(), sh.stride);
    let mut total = 0;
    for (i, &n) in nz_filters.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let (r, s, c) = (i % sh.r, (i / sh.r) % sh.s, i / (sh.r * sh.s));
        let mut live = 0u64;
        for y in 0..ho {
            let row = (c * sh.h + y * st + s) * sh.w + r;
            live += (0..wo).filter(|&x| inputs.data[row + x * st] != 0).count() as u64;
        }
        total += n * live;
    }
    total
}

fn group_size(k: usize, fv: usize, f: usize) -> usize {
    (k - f * fv).min(fv)
}

fn prepare(index: usize, spec: &LayerSpec, hw: &HwConfig, precision: u8, data: &LayerData) -> Result<Prepared> {
    let sh = &spec.shape;
    let p = u64::from(precision);
    let c_tile = hw.layer_c_tile(sh, precision)?;
    let fv = hw.filters_per_pe();
    let groups = sh.k.div_ceil(fv);
    let tiles = sh.c.div_ceil(c_tile);
    let (ho, wo) = (sh.out_h() as u64, sh.out_w() as u64);
    let tile_len = |t: usize| sh.r * sh.s * (sh.c - t * c_tile).min(c_tile);
    let mut ev = Events::default();
    let mut lane_total = LaneCounters::default();
    let mut gated = None;
    let (mut entries, mut skips) = (0u64, 0u64);
    // Shared table-row events of one pass over every table: rows, row bits,
    // codebook reads.
    let mut shared = (0u64, 0u64, 0u64);

    // Per filter group: cycle reports per tile, stored bits, and lane-level
    // events of one output row pass.
    let tile_cycles: Vec<Vec<CycleReport>>;
    let unit_bits: Vec<u64>;
    let weight_bits: u64;
    let bits_per_weight: f64;
    match hw.variant {
        Variant::Dcnn | Variant::DcnnSp => {
            tile_cycles = (0..groups)
                .map(|f| (0..tiles).map(|t| dense_tile_cycles(tile_len(t), ho as usize, group_size(sh.k, fv, f))).collect())
                .collect();
            unit_bits = (0..groups).map(|f| (group_size(sh.k, fv, f) * sh.filter_len()) as u64 * p).collect();
            let raw = sh.weight_count() as u64 * p;
            weight_bits = if hw.variant == Variant::Dcnn { raw } else { rle5_compress_size(&data.filters) };
            bits_per_weight = weight_bits as f64 / sh.weight_count() as f64;
        }
        Variant::Ucnn => {
            let opts = CompileOptions { g: hw.g, c_tile, mode: hw.mode(), max_group: hw.max_group };
            let layer = compile_layer(&data.filters, sh, &data.codebook, opts)?;
            let traces = layer
                .tables
                .par_iter()
                .map(|t| WalkTrace::new(t, &data.codebook))
                .collect::<Result<Vec<_>>>()?;
            let flat: Vec<CycleReport> = traces
                .par_iter()
                .map(|tr| ucnn_tile_cycles(tr, ho as usize, hw.multipliers_per_lane, hw.mult_queue_depth))
                .collect();
            tile_cycles = flat.chunks(tiles).map(<[_]>::to_vec).collect();
            let cb_bits = data.codebook.storage_bits(precision);
            unit_bits = (0..groups).map(|f| (0..tiles).map(|t| layer.table(f, t).table_bits()).sum::<u64>()).collect();
            weight_bits = layer.table_bits() + cb_bits;
            bits_per_weight = layer.table_bits() as f64 / sh.weight_count() as f64;
            entries = layer.entries();
            skips = layer.skip_entries();
            for (tr, t) in traces.iter().zip(&layer.tables) {
                lane_total += tr.counters;
                shared.0 += t.len() as u64;
                shared.1 += t.table_bits();
                shared.2 += tr.counters.weight_buffer_reads + tr.counters.weight_peeks;
            }
            // Counted once per output position like the functional executor.
            lane_total = lane_total.scaled(ho * wo);
        }
    }

    // The codebook is held once per layer, next to whichever chunk is loaded.
    let shared_bits = if hw.variant == Variant::Ucnn { weight_bits - unit_bits.iter().sum::<u64>() } else { 0 };
    let plan = schedule_layer(sh, hw, precision, &unit_bits, shared_bits.div_ceil(8) as usize)?;
    let lanes = plan.lanes;
    let col_units: u64 = plan.strips.iter().map(|s| s.col_units(lanes) as u64).sum();
    let windows: Vec<Vec<u64>> = plan
        .strips
        .iter()
        .map(|s| {
            (0..s.col_units(lanes))
                .map(|c| {
                    let cols = (s.out_cols - c * lanes).min(lanes);
                    ((cols - 1) * sh.stride + sh.r) as u64
                })
                .collect()
        })
        .collect();
    let window_bits = |w: u64| (sh.c * sh.h) as u64 * w * p;
    let all_windows: u64 = windows.iter().flatten().sum();

    // PE-local events.
    let outputs = sh.output_len() as u64;
    let psum_bytes = (hw.filters_per_pe() * lanes * psum_bits(precision) as usize).div_ceil(8);
    {
        let b = ev.buffer_mut("psum", psum_bytes);
        b.reads += outputs * tiles as u64;
        b.read_bits += outputs * tiles as u64 * u64::from(psum_bits(precision));
        b.write_bits += outputs * tiles as u64 * u64::from(psum_bits(precision));
    }
    match hw.variant {
        Variant::Dcnn | Variant::DcnnSp => {
            let macs = sh.dense_macs();
            let b = ev.buffer_mut("input", hw.l1_input_bytes);
            b.reads += groups as u64 * sh.filter_len() as u64 * ho * wo;
            b.read_bits += b.reads * p;
            b.write_bits += groups as u64 * window_bits(all_windows);
            let b = ev.buffer_mut("weight", hw.l1_weight_bytes);
            b.reads += macs;
            b.read_bits += macs * p;
            b.write_bits += col_units * unit_bits.iter().sum::<u64>();
            let live = if hw.variant == Variant::DcnnSp {
                let inputs = data
                    .inputs
                    .as_ref()
                    .ok_or_else(|| Error::Config("sparse baseline needs input activations".into()))?;
                let g = gated_macs(&data.filters, inputs, sh);
                gated = Some(g);
                g
            } else {
                macs
            };
            ev.multiply(live, precision.into(), precision.into());
            ev.add(live, psum_bits(precision));
        }
        Variant::Ucnn => {
            let passes = ho * col_units;
            let cb_bytes = data.codebook.len() * usize::from(precision).div_ceil(8);
            let (rows, row_bits, weight_reads) = shared;
            let b = ev.buffer_mut("table", hw.l1_weight_bytes);
            b.reads += rows * passes;
            b.read_bits += row_bits * passes;
            b.write_bits += col_units * unit_bits.iter().sum::<u64>();
            let b = ev.buffer_mut("codebook", cb_bytes);
            b.reads += weight_reads * passes;
            b.read_bits += weight_reads * passes * p;
            let b = ev.buffer_mut("input", hw.l1_input_bytes / lanes);
            b.reads += lane_total.input_buffer_reads;
            b.read_bits += lane_total.input_buffer_reads * p;
            b.write_bits += groups as u64 * window_bits(all_windows);
            let wide = u32::from(precision) + 4;
            ev.multiply(lane_total.multiplies, wide, precision.into());
            ev.add(lane_total.input_buffer_reads + lane_total.merge_adds, wide);
            ev.add(lane_total.multiplies, psum_bits(precision));
        }
    }

    // Waves: wall clock, barrier waits, and L2 reads with multicast.
    let per_group: Vec<CycleReport> = tile_cycles
        .iter()
        .map(|ts| {
            let mut r = CycleReport::default();
            ts.iter().for_each(|t| r += *t);
            r
        })
        .collect();
    let durations: Vec<Vec<u64>> = tile_cycles.iter().map(|ts| ts.iter().map(|t| t.total_cycles).collect()).collect();
    let (mut cycles, mut waits) = (0u64, 0u64);
    let mut busy = CycleReport::default();
    for (si, strip) in plan.strips.iter().enumerate() {
        for &chunk in &plan.chunks {
            let units: Vec<(usize, usize)> = plan.units(strip, chunk).collect();
            for wave in units.chunks(hw.pes) {
                let d: Vec<&[u64]> = wave.iter().map(|&(_, f)| durations[f].as_slice()).collect();
                let (w, wait) = wave_cycles(&d, hw.input_buffer_depth);
                cycles += w;
                waits += wait;
                let cols: BTreeSet<usize> = wave.iter().map(|u| u.0).collect();
                let fs: BTreeSet<usize> = wave.iter().map(|u| u.1).collect();
                ev.l2_read_bits += cols.iter().map(|&c| window_bits(windows[si][c])).sum::<u64>();
                ev.l2_read_bits += fs.iter().map(|&f| unit_bits[f]).sum::<u64>();
                for &(_, f) in wave {
                    busy += per_group[f];
                }
            }
            // codebook multicast to every PE once per chunk
            ev.l2_read_bits += shared_bits;
            if shared_bits > 0 {
                let cb_bytes = shared_bits.div_ceil(8) as usize;
                ev.buffer_mut("codebook", cb_bytes).write_bits += shared_bits * hw.pes as u64;
            }
        }
    }
    ev.l2_write_bits += outputs * p;
    ev.noc_bit_hops += cycles * 2 * hw.bus_bits as u64 * hw.pes as u64;

    // Weights come from DRAM once per strip.
    let passes = plan.strips.len() as u64;
    ev.dram_read_bits += weight_bits * passes;
    ev.dram_weight_bits += weight_bits * passes;
    ev.l2_write_bits += weight_bits * passes;

    let report = LayerReport {
        index,
        name: spec.name.clone(),
        shape: *sh,
        c_tile,
        strips: plan.strips.len(),
        weight_chunks: plan.chunks.len(),
        resident: plan.resident(),
        cycles,
        pe: busy,
        barrier_wait_cycles: waits,
        table_entries: entries,
        skip_entries: skips,
        weight_bits,
        bits_per_weight,
        lane: lane_total,
        gated_macs: gated,
        events: ev,
        energy: EnergyBreakdown::default(),
    };
    let act_bits = plan.strips.iter().map(|s| (sh.c * sh.h * s.in_cols) as u64 * p).sum();
    Ok(Prepared { report, plan, act_bits })
}

fn finish(mut p: Prepared, input_from_dram: bool, output_to_dram: bool, coeffs: &EnergyCoefficients, precision: u8) -> LayerReport {
    let ev = &mut p.report.events;
    if input_from_dram {
        ev.dram_read_bits += p.act_bits;
        ev.l2_write_bits += p.act_bits;
    }
    if output_to_dram {
        let out = p.report.shape.output_len() as u64 * u64::from(precision);
        ev.dram_write_bits += out;
        ev.l2_read_bits += out;
    }
    p.report.energy = coeffs.energy(&p.report.events);
    p.report
}

fn needs_inputs(hw: &HwConfig) -> bool {
    hw.variant == Variant::DcnnSp
}

/// One layer on its own: inputs come from DRAM and outputs go back.
pub fn simulate_layer(
    spec: &LayerSpec,
    hw: &HwConfig,
    precision: u8,
    data: &LayerData,
    coeffs: &EnergyCoefficients,
) -> Result<LayerReport> {
    hw.validate()?;
    let p = prepare(0, spec, hw, precision, data)?;
    Ok(finish(p, true, true, coeffs, precision))
}

/// Every layer on synthetic data. Activations stay on chip between two
/// resident layers; a layer that needs spatial tiling exchanges its input
/// and output with DRAM.
pub fn simulate_network(
    layers: &[LayerSpec],
    hw: &HwConfig,
    wl: &Workload,
    coeffs: &EnergyCoefficients,
) -> Result<SimReport> {
    hw.validate()?;
    coeffs.validate()?;
    let prepared = layers
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let data = LayerData::synthetic(&spec.shape, wl, i, needs_inputs(hw))?;
            prepare(i, spec, hw, wl.precision, &data)
                .map_err(|e| with_layer(e, &spec.name))
        })
        .collect::<Result<Vec<_>>>()?;
    let resident: Vec<bool> = prepared.iter().map(|p| p.plan.resident()).collect();
    let n = prepared.len();
    let reports: Vec<LayerReport> = prepared
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let input_from_dram = i == 0 || !resident[i] || !resident[i - 1];
            let output_to_dram = i + 1 == n || !resident[i] || !resident[i + 1];
            finish(p, input_from_dram, output_to_dram, coeffs, wl.precision)
        })
        .collect();
    let mut energy = EnergyBreakdown::default();
    let mut events = Events::default();
    let mut cycles = 0;
    for r in &reports {
        energy += r.energy;
        events += &r.events;
        cycles += r.cycles;
    }
    Ok(SimReport { hw: hw.clone(), workload: *wl, layers: reports, cycles, energy, events })
}

fn with_layer(e: Error, name: &str) -> Error {
    match e {
        Error::Capacity(m) => Error::Capacity(format!("layer {name}: {m}")),
        Error::Config(m) => Error::Config(format!("layer {name}: {m}")),
        other => other,
    }
}
