//! One test per acceptance criterion. Each prints a single `[PASS]`/`[FAIL]`
//! line with the measured values and the pinned tolerance, then asserts.
//!
//! Run with `cargo test -p ucnn-validation --test acceptance`.

use std::fs;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use ucnn_cli::{cmd_sim, ExperimentSpec, RunConfig};
use ucnn_core::tables::{compile_layer, hierarchical_sort, size_report};
use ucnn_core::{
    dense_conv, exec_factorized, exec_layer, gen_synthetic_filters, gen_synthetic_inputs, CodeBook, CompileOptions,
    DensitySpec, EncodingMode, LayerShape, QuantTensor, TileGeom,
};
use ucnn_sim::bank::{check_bank_conflicts, unaddressable_fraction, SkewedBanks};
use ucnn_sim::{networks, simulate_layer, simulate_network, EnergyCoefficients, HwConfig, LayerData, LayerSpec, SimReport, Workload};
use ucnn_validation::verdict;

fn pct(a: f64, b: f64) -> f64 {
    100.0 * (a / b - 1.0)
}

// ---------------------------------------------------------------- C1

#[test]
fn c1_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c1);
    let (mut configs, mut failures) = (0usize, Vec::new());
    for g in 1..=4usize {
        for u in [1usize, 3, 17, 64, 256] {
            for d in [0.5, 0.65, 0.9, 1.0] {
                // a single-value codebook has no room for zero
                if u == 1 && d < 1.0 {
                    continue;
                }
                for p in [8u8, 16] {
                    let (r, s) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
                    let c = rng.gen_range(1..=48);
                    let stride = rng.gen_range(1..=2);
                    let sh = LayerShape::new(r + rng.gen_range(0..7), s + rng.gen_range(0..7), c, r, s, rng.gen_range(1..=9))
                        .with_stride(stride);
                    let mode = if rng.gen_bool(0.5) {
                        EncodingMode::Pointer
                    } else {
                        EncodingMode::Jump { width: rng.gen_range(2..=8) }
                    };
                    let opts = CompileOptions { g, c_tile: rng.gen_range(1..=32), mode, ..Default::default() };
                    let seed = rng.gen();
                    let (f, cb) = gen_synthetic_filters(&sh, &DensitySpec::new(d, u, seed), p).unwrap();
                    let x = gen_synthetic_inputs(&sh, 0.6, seed ^ 1, p).unwrap();
                    let layer = compile_layer(&f, &sh, &cb, opts).unwrap();
                    let (got, _) = exec_layer(&x, &layer, false).unwrap();
                    let (want, _) = dense_conv(&x, &f, &sh).unwrap();
                    configs += 1;
                    if got.data != want.data {
                        failures.push(format!("G{g} U{u} d{d} p{p} {sh}"));
                    }
                }
            }
        }
    }
    let ok = configs >= 100 && failures.is_empty();
    verdict(
        "C1 oracle equivalence",
        ok,
        format!("{configs} configs (need >= 100), {} mismatches (tolerance: exact) {failures:?}", failures.len()),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- C2

fn row(vals: &[i64]) -> QuantTensor {
    QuantTensor::new(vec![1, 1, vals.len()], vals.to_vec(), 16).unwrap()
}

fn geom(n: usize) -> TileGeom {
    TileGeom { r: n, s: 1, c_start: 0, c_len: 1 }
}

#[test]
fn c2_worked_examples() {
    // three-wide window whose first and last weights repeat
    let (a, b) = (2, 5);
    let cb = CodeBook::from_values([a, b]).unwrap();
    let t = hierarchical_sort(&[0], &[row(&[a, b, a])], &cb, geom(3)).unwrap();
    let x = [1, 2, 3];
    let one = exec_factorized(&x, &t, &cb).unwrap();
    let reads1 = one.counters.input_buffer_reads + one.counters.weight_buffer_reads;
    // dense: one multiply, one input read and one weight read per weight
    let (dense_mults, dense_reads) = (3u64, 6u64);
    let ok1 = one.psums == [a + b * 2 + a * 3] && one.counters.multiplies == 2 && reads1 == 5;

    // two filters over an 8-wide window sharing one table
    let (a, b) = (3, -7);
    let k1 = [b, a, a, b, a, b, a, a];
    let k2 = [a, b, a, b, b, b, a, b];
    let cb = CodeBook::from_values([a, b]).unwrap();
    let t = hierarchical_sort(&[0, 1], &[row(&k1), row(&k2)], &cb, geom(8)).unwrap();
    let x = [4, -1, 9, 2, 6, 5, -3, 8];
    let two = exec_factorized(&x, &t, &cb).unwrap();
    let dot = |k: &[i64]| k.iter().zip(&x).map(|(w, v)| w * v).sum::<i64>();
    let ok2 = two.psums == [dot(&k1), dot(&k2)] && two.counters.multiplies == 6;

    let ok = ok1 && ok2;
    verdict(
        "C2 worked examples",
        ok,
        format!(
            "single filter: {} multiplies / {reads1} reads vs dense {dense_mults} / {dense_reads} (want 2 / 5); \
             two filters: {} multiplies vs dense 16 (want 6); tolerance: exact",
            one.counters.multiplies, two.counters.multiplies
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- C3

fn layer_bits_per_weight(sh: &LayerShape, d: f64, u: usize, g: usize, c_tile: usize) -> (f64, u32, f64) {
    let (f, cb) = gen_synthetic_filters(sh, &DensitySpec::new(d, u, 33), 16).unwrap();
    let layer = compile_layer(&f, sh, &cb, CompileOptions { g, c_tile, ..Default::default() }).unwrap();
    let rep = size_report(&layer, &f);
    (rep.bits_per_weight(), layer.tables[0].iit_width, rep.skip_fraction())
}

fn ceil_log2(n: usize) -> u32 {
    usize::BITS - (n - 1).leading_zeros()
}

#[test]
fn c3_compression() {
    // Filter j of each group takes digit j of the position in base 2, so
    // every combination of the two values appears in every tile and the
    // sorted tables need no skip rows.
    let mut analytic = Vec::new();
    for (g, r, c_tile, c) in [(1usize, 3usize, 64usize, 128usize), (2, 3, 128, 256), (3, 1, 100, 200), (4, 3, 64, 64)] {
        let sh = LayerShape::new(r + 4, r + 4, c, r, r, 2 * g);
        let fl = sh.filter_len();
        let data = (0..sh.weight_count()).map(|i| if (i % fl) >> ((i / fl) % g) & 1 == 0 { 3 } else { -5 }).collect();
        let f = QuantTensor::new(sh.filter_dims().to_vec(), data, 8).unwrap();
        let cb = CodeBook::from_values([3, -5]).unwrap();
        let layer = compile_layer(&f, &sh, &cb, CompileOptions { g, c_tile, ..Default::default() }).unwrap();
        let rep = size_report(&layer, &f);
        let n = r * r * c_tile;
        let want = f64::from(ceil_log2(n) + g as u32 + 1) / g as f64;
        analytic.push((g, n, rep.skip_entries, rep.bits_per_weight(), want));
    }
    let ok_analytic = analytic.iter().all(|&(_, _, skips, got, want)| skips == 0 && (got - want).abs() < 1e-12);

    let sh = LayerShape::new(16, 16, 256, 3, 3, 64);
    // C_t = 128 gives 1152 offsets, an 11-bit pointer
    let (bpw_u17, width, skips_u17) = layer_bits_per_weight(&sh, 0.9, 17, 2, 128);
    let ok_u17 = width == 11 && (5.0..=6.5).contains(&bpw_u17);
    let (bpw_u3, width_u3, skips_u3) = layer_bits_per_weight(&sh, 0.5, 3, 4, 64);
    let ok_u3 = (3.0..=3.6).contains(&bpw_u3);

    let ok = ok_analytic && ok_u17 && ok_u3;
    verdict(
        "C3 compression",
        ok,
        format!(
            "analytic (G, RSC_t, skips, measured, formula) {analytic:?} tolerance 1e-12; \
             U17 G2 90% {width}-bit pointer: {bpw_u17:.3} bits/weight (band [5, 6.5], {:.1}% skip rows); \
             U3 G4 50% {width_u3}-bit pointer: {bpw_u3:.3} bits/weight (band [3.0, 3.6], {:.1}% skip rows)",
            100.0 * skips_u17,
            100.0 * skips_u3
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- C4, C6

/// The 3x3 layer that opens each ResNet-50 stage.
fn resnet_3x3() -> Vec<LayerSpec> {
    networks::resnet50().into_iter().filter(|l| l.name.ends_with("a_3x3")).collect()
}

fn run(layers: &[LayerSpec], hw: &HwConfig, density: f64, u: usize) -> SimReport {
    simulate_network(layers, hw, &Workload::new(density, u, 16, 3), &EnergyCoefficients::default()).unwrap()
}

fn mean_bits_per_weight(r: &SimReport) -> f64 {
    let w = |l: &ucnn_sim::LayerReport| l.shape.weight_count() as f64;
    r.layers.iter().map(|l| l.bits_per_weight * w(l)).sum::<f64>() / r.layers.iter().map(w).sum::<f64>()
}

#[test]
fn c4_jump_width_tradeoff() {
    // at least 128 channels, so a 128-deep tile is a full 11-bit pointer
    let layers: Vec<LayerSpec> = resnet_3x3().into_iter().filter(|l| l.shape.c >= 128).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    // (G, C_t, jump width, allowed added cycles in %)
    for (g, c_tile, width, limit) in [(1usize, 128usize, 8u32, 4.0), (2, 32, 7, 2.0)] {
        let pointer = HwConfig { v_w: 1, g, c_tile: Some(c_tile), ..HwConfig::ucnn(17, 16) };
        let jump = HwConfig { jump_width: Some(width), ..pointer.clone() };
        let a = run(&layers, &pointer, 0.9, 17);
        let b = run(&layers, &jump, 0.9, 17);
        let added = pct(b.cycles as f64, a.cycles as f64);
        let bpw = (mean_bits_per_weight(&a), mean_bits_per_weight(&b));
        let skips: u64 = b.layers.iter().map(|l| l.skip_entries).sum();
        let entries: u64 = b.layers.iter().map(|l| l.table_entries).sum();
        ok &= added <= limit;
        parts.push(format!(
            "G{g} pointer {} -> jump {width} bits: {:.2} -> {:.2} bits/weight, {:+.2}% cycles (limit {limit}%), {:.1}% skip rows",
            pointer_bits(&a),
            bpw.0,
            bpw.1,
            added,
            100.0 * skips as f64 / entries as f64
        ));
    }
    verdict("C4 jump width", ok, parts.join("; "));
    assert!(ok);
}

fn pointer_bits(r: &SimReport) -> usize {
    let l = &r.layers[0];
    ceil_log2(l.shape.r * l.shape.s * l.c_tile) as usize
}

#[test]
fn c5_bank_conflicts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c5);
    let (mut checked, mut conflicts, mut bad_overhead) = (0usize, 0u64, Vec::new());
    for v_w in [1usize, 2, 4, 8] {
        for r in [1usize, 3, 5, 7, 11] {
            for _ in 0..4 {
                let s = rng.gen_range(1..=3);
                let c = rng.gen_range(1..=12);
                let g = rng.gen_range(1..=3);
                let sh = LayerShape::new(r + v_w + 3, s + 2, c, r, s, g);
                let u = [3usize, 17, 64][rng.gen_range(0..3)];
                let (f, cb) = gen_synthetic_filters(&sh, &DensitySpec::new(rng.gen_range(0.3..1.0), u, rng.gen()), 8).unwrap();
                let layer = compile_layer(&f, &sh, &cb, CompileOptions { g, c_tile: c, ..Default::default() }).unwrap();
                let map = SkewedBanks { v_w, s, c_t: c };
                for t in &layer.tables {
                    conflicts += check_bank_conflicts(t, &map).unwrap();
                    checked += 1;
                }
            }
            let (num, den) = unaddressable_fraction(r, v_w);
            let want = (((r + v_w - 1) % v_w) as u64, (r + v_w - 1) as u64);
            if num * want.1 != want.0 * den {
                bad_overhead.push((r, v_w, num, den));
            }
        }
    }
    let ok = conflicts == 0 && bad_overhead.is_empty();
    verdict(
        "C5 bank conflicts",
        ok,
        format!(
            "{checked} tables over V_W {{1,2,4,8}} x R {{1,3,5,7,11}}: {conflicts} conflicts; \
             overhead fraction mismatches {bad_overhead:?} (tolerance: exact)"
        ),
    );
    assert!(ok);
}

#[test]
fn c6_throughput_and_sparsity() {
    // the 56-wide stage: every vector width divides the output rows
    let layers: Vec<LayerSpec> = networks::resnet50().into_iter().filter(|l| l.name.starts_with("res2")).collect();
    let big = |h: HwConfig| HwConfig { l2_bytes: 64 << 20, ..h };
    let dense = run(&layers, &big(HwConfig::dcnn(16)), 1.0, 17);
    let mut ok_norm = true;
    let mut norm = Vec::new();
    for u in [3usize, 17, 256] {
        let r = run(&layers, &big(HwConfig::ucnn(u, 16)), 1.0, u);
        let ratios: Vec<String> = r
            .layers
            .iter()
            .zip(&dense.layers)
            .map(|(a, b)| {
                let p = pct(a.cycles as f64, b.cycles as f64);
                ok_norm &= p.abs() <= 5.0;
                format!("{}:{p:+.1}%", a.name)
            })
            .collect();
        norm.push(format!("U{u} [{}]", ratios.join(" ")));
    }

    let g1 = HwConfig { v_w: 1, g: 1, ..HwConfig::ucnn(17, 16) };
    let g2 = HwConfig { v_w: 1, g: 2, ..HwConfig::ucnn(17, 16) };
    let net = networks::resnet50();
    let speedup = run(&net, &g1, 0.9, 17).cycles as f64 / run(&net, &g2, 0.9, 17).cycles as f64;
    let ok_speed = (1.5..=2.0).contains(&speedup);

    let sh = LayerShape::new(30, 16, 64, 3, 3, 16);
    let mut bubbles_ok = true;
    let mut bubbles = Vec::new();
    for (u, d) in [(3usize, 0.5), (17, 0.9), (256, 0.5)] {
        let hw = HwConfig::ucnn(u, 8);
        let ld = LayerData::synthetic(&sh, &Workload::new(d, u, 8, 11), 0, false).unwrap();
        let rep = simulate_layer(&LayerSpec::new("l", sh), &hw, 8, &ld, &EnergyCoefficients::default()).unwrap();
        let ct = hw.layer_c_tile(&sh, 8).unwrap();
        let opts = CompileOptions { g: hw.g, c_tile: ct, mode: hw.mode(), max_group: hw.max_group };
        let compiled = compile_layer(&ld.filters, &sh, &ld.codebook, opts).unwrap();
        // every column unit walks every table once per output row
        let walks = (sh.out_h() * sh.out_w().div_ceil(hw.v_w)) as u64;
        let want = compiled.skip_entries() * walks;
        bubbles_ok &= rep.pe.bubble_cycles == want;
        bubbles.push(format!("U{u}: {} bubbles vs {} skips x {walks} walks", rep.pe.bubble_cycles, compiled.skip_entries()));
    }

    let ok = ok_norm && ok_speed && bubbles_ok;
    verdict(
        "C6 throughput",
        ok,
        format!(
            "dense UCNN vs DCNN cycles (tolerance 5%): {}; ResNet-50 G2/G1 speedup at 90% U17 {speedup:.3} (band [1.5, 2.0]); \
             skip bubbles (tolerance: exact) {}",
            norm.join(" "),
            bubbles.join(", ")
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- C7, C8

struct Sweep {
    runs: Vec<(RunConfig, SimReport)>,
    csv: Vec<u8>,
    json: Vec<u8>,
}

fn sweep() -> Sweep {
    let spec = ExperimentSpec::preset("resnet50-16b-50").unwrap();
    let dir = TempDir::new().unwrap();
    let runs = cmd_sim(&spec, dir.path()).unwrap();
    Sweep {
        runs,
        csv: fs::read(dir.path().join("sim.csv")).unwrap(),
        json: fs::read(dir.path().join("sim.json")).unwrap(),
    }
}

static FIRST: OnceLock<Sweep> = OnceLock::new();

fn first() -> &'static Sweep {
    FIRST.get_or_init(sweep)
}

#[test]
fn c7_energy_trends() {
    let s = first();
    let find = |label: &str| &s.runs.iter().find(|(c, _)| c.label() == label).unwrap().1;
    let order = ["UCNN_U3", "UCNN_U17", "UCNN_U256", "DCNN_sp", "DCNN"];
    let reps: Vec<&SimReport> = order.iter().map(|l| find(l)).collect();
    let improvement = reps[3].energy.total() / reps[0].energy.total();
    let ok_ratio = (2.5..=4.5).contains(&improvement);

    let mut out_of_order = Vec::new();
    for i in 0..reps[0].layers.len() {
        let e: Vec<f64> = reps.iter().map(|r| r.layers[i].energy.total()).collect();
        for (j, w) in e.windows(2).enumerate() {
            if w[0] > w[1] {
                out_of_order.push(format!(
                    "{}: {} {:.3e} > {} {:.3e}",
                    reps[0].layers[i].name,
                    order[j],
                    w[0],
                    order[j + 1],
                    w[1]
                ));
            }
        }
    }

    let dram = EnergyCoefficients::default().dram_only();
    let bits = |r: &SimReport| (r.events.dram_read_bits + r.events.dram_write_bits) as f64;
    let e_ratio = reps[0].energy_with(&dram).total() / reps[3].energy_with(&dram).total();
    let b_ratio = bits(reps[0]) / bits(reps[3]);
    let ok_dram = (e_ratio - b_ratio).abs() <= 1e-12 * b_ratio;

    let ok = ok_ratio && out_of_order.is_empty() && ok_dram;
    let breakdown = |r: &SimReport| {
        format!("dram {:.3e} l2/noc {:.3e} pe {:.3e}", r.energy.dram, r.energy.l2_noc, r.energy.pe)
    };
    verdict(
        "C7 energy trends",
        ok,
        format!(
            "DCNN_sp/UCNN_U3 energy {improvement:.3}x (band [2.5, 4.5]) [U3 {}; DCNN_sp {}]; \
             per-layer order violations {}: {out_of_order:?}; dram-only energy ratio {e_ratio:.12} vs bit ratio {b_ratio:.12} \
             (tolerance 1e-12 relative)",
            breakdown(reps[0]),
            breakdown(reps[3]),
            out_of_order.len()
        ),
    );
    assert!(ok);
}

#[test]
fn c8_determinism() {
    let a = first();
    let b = sweep();
    let ok = a.csv == b.csv && a.json == b.json && !a.csv.is_empty();
    verdict(
        "C8 determinism",
        ok,
        format!("sim.csv {} bytes, sim.json {} bytes across two seeded runs (tolerance: byte-identical)", a.csv.len(), a.json.len()),
    );
    assert!(ok);
}
