//! The five subcommands. Each takes a validated spec and an output
//! directory and writes its files there.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ucnn_core::tables::{compile_layer, size_report, write_layer};
use ucnn_core::{dense_conv, exec_layer, relu, CompileOptions, CompiledLayer, Error};
use ucnn_sim::chip::LayerData;
use ucnn_sim::{simulate_network, HwConfig, SimReport, Variant};

use crate::experiment::{ExperimentSpec, RunConfig};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn fixed(x: f64, places: usize) -> String {
    format!("{x:.places$}")
}

/// Runs `f` on every config in parallel and returns the results in config
/// order; the first failing config (in that order) wins.
fn per_config<T: Send>(configs: &[RunConfig], f: impl Fn(&RunConfig) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = configs.par_iter().map(&f).collect();
    results.into_iter().collect()
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    Ok(w)
}

fn data_dir(out: &Path, c: &RunConfig) -> PathBuf {
    out.join("gen").join(&c.network).join(format!("p{}", c.precision)).join(format!("d{:.2}", c.density)).join(format!("u{}", c.u))
}

fn ucnn_configs(spec: &ExperimentSpec) -> Vec<RunConfig> {
    spec.configs().into_iter().filter(|c| c.variant == Variant::Ucnn).collect()
}

fn compile_for(hw: &HwConfig, data: &LayerData, shape: &ucnn_core::LayerShape, precision: u8) -> ucnn_core::Result<CompiledLayer> {
    let c_tile = hw.layer_c_tile(shape, precision)?;
    let opts = CompileOptions { g: hw.g, c_tile, mode: hw.mode(), max_group: hw.max_group };
    compile_layer(&data.filters, shape, &data.codebook, opts)
}

/// Writes synthetic filters, codebooks and inputs of every layer. Returns
/// the number of layer data sets written.
pub fn cmd_gen(spec: &ExperimentSpec, out: &Path) -> Result<usize> {
    let mut sets: Vec<RunConfig> = Vec::new();
    let mut seen = BTreeSet::new();
    for c in spec.configs() {
        if seen.insert(data_dir(out, &c)) {
            sets.push(c);
        }
    }
    let counts = per_config(&sets, |c| {
        let dir = data_dir(out, c);
        fs::create_dir_all(&dir)?;
        let layers = spec.network(&c.network).map_err(|e| CliError::at(c.key(), e))?;
        for (i, l) in layers.iter().enumerate() {
            let at = |e: Error| CliError::at(format!("{}/{}", c.key(), l.name), e);
            let d = LayerData::synthetic(&l.shape, &c.workload(spec), i, true).map_err(at)?;
            d.filters.save(dir.join(format!("{}.filters.bin", l.name))).map_err(at)?;
            d.inputs.as_ref().expect("inputs requested").save(dir.join(format!("{}.inputs.bin", l.name))).map_err(at)?;
            fs::write(dir.join(format!("{}.codebook.json", l.name)), serde_json::to_string(&d.codebook).map_err(Error::from).map_err(at)?)?;
        }
        Ok(layers.len())
    })?;
    Ok(counts.iter().sum())
}

pub const SIZE_COLUMNS: [&str; 13] = [
    "config",
    "layer",
    "mode",
    "g",
    "c_tile",
    "weights",
    "entries",
    "skip_entries",
    "table_bits",
    "codebook_bits",
    "bits_per_weight",
    "rle5_bits",
    "raw_bits",
];

/// Compiles every UCNN config and writes the tables and `sizes.csv`.
pub fn cmd_compile(spec: &ExperimentSpec, out: &Path) -> Result<PathBuf> {
    let configs = ucnn_configs(spec);
    let rows = per_config(&configs, |c| {
        let layers = spec.network(&c.network).map_err(|e| CliError::at(c.key(), e))?;
        let hw = c.hw(spec);
        let dir = out.join("tables").join(c.key());
        fs::create_dir_all(&dir)?;
        let mut rows = Vec::new();
        for (i, l) in layers.iter().enumerate() {
            let key = format!("{}/{}", c.key(), l.name);
            let at = |e: Error| CliError::at(key.clone(), e);
            let d = LayerData::synthetic(&l.shape, &c.workload(spec), i, false).map_err(at)?;
            let layer = compile_for(&hw, &d, &l.shape, c.precision).map_err(at)?;
            write_layer(&layer, BufWriter::new(File::create(dir.join(format!("{}.tbl", l.name)))?)).map_err(at)?;
            let s = size_report(&layer, &d.filters);
            rows.push(vec![
                c.key(),
                l.name.clone(),
                match s.mode {
                    ucnn_core::EncodingMode::Pointer => "pointer".to_string(),
                    ucnn_core::EncodingMode::Jump { width } => format!("jump{width}"),
                },
                s.g.to_string(),
                layer.options.c_tile.to_string(),
                s.weights.to_string(),
                s.entries.to_string(),
                s.skip_entries.to_string(),
                s.total_table_bits.to_string(),
                s.codebook_bits.to_string(),
                fixed(s.bits_per_weight(), 6),
                s.rle5_bits.to_string(),
                s.raw_bits.to_string(),
            ]);
        }
        Ok(rows)
    })?;
    let path = out.join("sizes.csv");
    let mut w = writer(&path, &SIZE_COLUMNS)?;
    for r in rows.iter().flatten() {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(path)
}

pub const RUN_COLUMNS: [&str; 8] =
    ["config", "layer", "outputs", "checked", "mismatches", "multiplies", "dense_multiplies", "input_reads"];

/// Executes every UCNN config through the tables and, with `check_oracle`,
/// compares each layer against the dense convolution. Writes `run.csv`
/// before reporting any mismatch.
pub fn cmd_run(spec: &ExperimentSpec, out: &Path, check_oracle: bool) -> Result<PathBuf> {
    let configs = ucnn_configs(spec);
    let rows = per_config(&configs, |c| {
        let layers = spec.network(&c.network).map_err(|e| CliError::at(c.key(), e))?;
        let hw = c.hw(spec);
        let mut rows = Vec::new();
        for (i, l) in layers.iter().enumerate() {
            let key = format!("{}/{}", c.key(), l.name);
            let at = |e: Error| CliError::at(key.clone(), e);
            let d = LayerData::synthetic(&l.shape, &c.workload(spec), i, true).map_err(at)?;
            let inputs = d.inputs.as_ref().expect("inputs requested");
            let layer = compile_for(&hw, &d, &l.shape, c.precision).map_err(at)?;
            let (got, counters) = exec_layer(inputs, &layer, l.relu).map_err(at)?;
            let mismatches = if check_oracle {
                let (want, _) = dense_conv(inputs, &d.filters, &l.shape).map_err(at)?;
                let want = if l.relu { relu(&want) } else { want };
                got.data.iter().zip(&want.data).filter(|(a, b)| a != b).count()
            } else {
                0
            };
            rows.push((
                key.clone(),
                mismatches,
                vec![
                    c.key(),
                    l.name.clone(),
                    got.len().to_string(),
                    check_oracle.to_string(),
                    mismatches.to_string(),
                    counters.multiplies.to_string(),
                    l.shape.dense_macs().to_string(),
                    counters.input_buffer_reads.to_string(),
                ],
            ));
        }
        Ok(rows)
    })?;
    let path = out.join("run.csv");
    let mut w = writer(&path, &RUN_COLUMNS)?;
    for (_, _, r) in rows.iter().flatten() {
        w.write_record(r)?;
    }
    w.flush()?;
    let bad: Vec<String> =
        rows.iter().flatten().filter(|(_, m, _)| *m > 0).map(|(k, m, _)| format!("{k} ({m} outputs)")).collect();
    if !bad.is_empty() {
        return Err(CliError::Oracle(bad.join(", ")));
    }
    Ok(path)
}

/// Columns of `sim.csv`, one row per config and layer.
pub const SIM_COLUMNS: [&str; 41] = [
    "config",
    "network",
    "precision",
    "density",
    "variant",
    "design",
    "u",
    "g",
    "v_w",
    "v_k",
    "normalized",
    "layer_index",
    "layer",
    "weights",
    "dense_macs",
    "c_tile",
    "strips",
    "weight_chunks",
    "resident",
    "cycles",
    "pe_cycles",
    "useful_cycles",
    "bubble_cycles",
    "stall_cycles",
    "barrier_wait_cycles",
    "table_entries",
    "skip_entries",
    "weight_bits",
    "bits_per_weight",
    "dram_read_bits",
    "dram_write_bits",
    "dram_weight_bits",
    "l2_read_bits",
    "l2_write_bits",
    "noc_bit_hops",
    "multiplies",
    "adds",
    "energy_dram_pj",
    "energy_l2_noc_pj",
    "energy_pe_pj",
    "energy_total_pj",
];

fn sim_rows(c: &RunConfig, r: &SimReport) -> Vec<Vec<String>> {
    let hw = &r.hw;
    r.layers
        .iter()
        .map(|l| {
            let e = &l.events;
            vec![
                c.key(),
                c.network.clone(),
                c.precision.to_string(),
                fixed(c.density, 2),
                hw.variant.to_string(),
                c.label(),
                c.u.to_string(),
                hw.g.to_string(),
                hw.v_w.to_string(),
                hw.v_k.to_string(),
                hw.is_normalized().to_string(),
                l.index.to_string(),
                l.name.clone(),
                l.shape.weight_count().to_string(),
                l.shape.dense_macs().to_string(),
                l.c_tile.to_string(),
                l.strips.to_string(),
                l.weight_chunks.to_string(),
                l.resident.to_string(),
                l.cycles.to_string(),
                l.pe.total_cycles.to_string(),
                l.pe.useful_cycles.to_string(),
                l.pe.bubble_cycles.to_string(),
                l.pe.multiplier_stall_cycles.to_string(),
                l.barrier_wait_cycles.to_string(),
                l.table_entries.to_string(),
                l.skip_entries.to_string(),
                l.weight_bits.to_string(),
                fixed(l.bits_per_weight, 6),
                e.dram_read_bits.to_string(),
                e.dram_write_bits.to_string(),
                e.dram_weight_bits.to_string(),
                e.l2_read_bits.to_string(),
                e.l2_write_bits.to_string(),
                e.noc_bit_hops.to_string(),
                e.multiplies.to_string(),
                e.adds.to_string(),
                fixed(l.energy.dram, 3),
                fixed(l.energy.l2_noc, 3),
                fixed(l.energy.pe, 3),
                fixed(l.energy.total(), 3),
            ]
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Rollup<'a> {
    config: String,
    design: String,
    normalized: bool,
    run: &'a RunConfig,
    hw: &'a HwConfig,
    cycles: u64,
    energy_dram_pj: f64,
    energy_l2_noc_pj: f64,
    energy_pe_pj: f64,
    energy_total_pj: f64,
    dram_bits: u64,
    weight_bits: u64,
    weights: u64,
}

/// Simulates every config and writes `sim.csv` and the per-config
/// `sim.json` rollup. Returns the reports in config order.
pub fn cmd_sim(spec: &ExperimentSpec, out: &Path) -> Result<Vec<(RunConfig, SimReport)>> {
    let configs = spec.configs();
    let coeffs = spec.coefficients();
    let unnormalized: Vec<String> =
        configs.iter().filter(|c| !c.hw(spec).is_normalized()).map(RunConfig::key).collect();
    if !unnormalized.is_empty() {
        log::warn!("not throughput-normalized: {}", unnormalized.join(", "));
    }
    let reports = per_config(&configs, |c| {
        log::info!("simulating {}", c.key());
        let layers = spec.network(&c.network).map_err(|e| CliError::at(c.key(), e))?;
        simulate_network(&layers, &c.hw(spec), &c.workload(spec), &coeffs).map_err(|e| CliError::at(c.key(), e))
    })?;
    let runs: Vec<(RunConfig, SimReport)> = configs.into_iter().zip(reports).collect();

    let mut w = writer(&out.join("sim.csv"), &SIM_COLUMNS)?;
    for (c, r) in &runs {
        for row in sim_rows(c, r) {
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    let rollup: Vec<Rollup> = runs
        .iter()
        .map(|(c, r)| Rollup {
            config: c.key(),
            design: c.label(),
            normalized: r.hw.is_normalized(),
            run: c,
            hw: &r.hw,
            cycles: r.cycles,
            energy_dram_pj: r.energy.dram,
            energy_l2_noc_pj: r.energy.l2_noc,
            energy_pe_pj: r.energy.pe,
            energy_total_pj: r.energy.total(),
            dram_bits: r.events.dram_read_bits + r.events.dram_write_bits,
            weight_bits: r.layers.iter().map(|l| l.weight_bits).sum(),
            weights: r.layers.iter().map(|l| l.shape.weight_count() as u64).sum(),
        })
        .collect();
    let json = serde_json::to_string_pretty(&rollup).map_err(Error::from)?;
    fs::write(out.join("sim.json"), json + "\n")?;
    Ok(runs)
}

#[derive(Debug, Deserialize)]
struct SimRow {
    config: String,
    network: String,
    precision: u8,
    density: String,
    variant: Variant,
    design: String,
    weights: u64,
    cycles: u64,
    weight_bits: u64,
    energy_dram_pj: f64,
    energy_l2_noc_pj: f64,
    energy_pe_pj: f64,
}

/// Per-config totals over all layers.
struct Totals {
    group: (String, u8, String),
    design: String,
    variant: Variant,
    weights: u64,
    cycles: u64,
    weight_bits: u64,
    energy: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub energy: PathBuf,
    pub cycles: PathBuf,
    pub model_size: PathBuf,
}

fn ratio(x: f64, base: Option<f64>) -> String {
    match base {
        Some(b) if b > 0.0 => fixed(x / b, 6),
        _ => String::new(),
    }
}

/// Joins `sim.csv` into figure-shaped tables: energy by component
/// normalized to DCNN within each (network, precision, density) group,
/// cycles normalized to DCNN_sp, and stored bits per weight.
pub fn cmd_report(sim_csv: &Path, out: &Path) -> Result<ReportFiles> {
    let mut rdr = csv::Reader::from_path(sim_csv).map_err(|e| CliError::at(sim_csv.display().to_string(), Error::Config(e.to_string())))?;
    let mut totals: Vec<Totals> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in rdr.deserialize() {
        let r: SimRow = row?;
        let i = *index.entry(r.config.clone()).or_insert_with(|| {
            totals.push(Totals {
                group: (r.network.clone(), r.precision, r.density.clone()),
                design: r.design.clone(),
                variant: r.variant,
                weights: 0,
                cycles: 0,
                weight_bits: 0,
                energy: [0.0; 3],
            });
            totals.len() - 1
        });
        let t = &mut totals[i];
        t.weights += r.weights;
        t.cycles += r.cycles;
        t.weight_bits += r.weight_bits;
        t.energy[0] += r.energy_dram_pj;
        t.energy[1] += r.energy_l2_noc_pj;
        t.energy[2] += r.energy_pe_pj;
    }
    let base = |t: &Totals, v: Variant, f: &dyn Fn(&Totals) -> f64| {
        totals.iter().find(|b| b.group == t.group && b.variant == v).map(f)
    };
    let total = |t: &Totals| t.energy.iter().sum::<f64>();

    let files = ReportFiles {
        energy: out.join("report_energy.csv"),
        cycles: out.join("report_cycles.csv"),
        model_size: out.join("report_model_size.csv"),
    };
    let group_cols = ["network", "precision", "density", "design"];
    let cols = |extra: &[&'static str]| group_cols.iter().copied().chain(extra.iter().copied()).collect::<Vec<_>>();
    let lead = |t: &Totals| vec![t.group.0.clone(), t.group.1.to_string(), t.group.2.clone(), t.design.clone()];

    let mut w = writer(&files.energy, &cols(&["dram", "l2_noc", "pe", "total", "energy_total_pj"]))?;
    for t in &totals {
        let b = base(t, Variant::Dcnn, &total);
        let mut row = lead(t);
        row.extend(t.energy.iter().map(|&e| ratio(e, b)));
        row.push(ratio(total(t), b));
        row.push(fixed(total(t), 3));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = writer(&files.cycles, &cols(&["cycles", "vs_dcnn_sp"]))?;
    for t in &totals {
        let b = base(t, Variant::DcnnSp, &|b| b.cycles as f64);
        let mut row = lead(t);
        row.push(t.cycles.to_string());
        row.push(ratio(t.cycles as f64, b));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = writer(&files.model_size, &cols(&["weight_bits", "weights", "bits_per_weight"]))?;
    for t in &totals {
        let mut row = lead(t);
        row.push(t.weight_bits.to_string());
        row.push(t.weights.to_string());
        row.push(ratio(t.weight_bits as f64, Some(t.weights as f64)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(files)
}
