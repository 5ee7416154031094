//! Cycle model of one PE.
//!
//! A dense PE spends one cycle per tile position. A UCNN PE consumes one
//! table row per cycle in every lane; skip and hop rows are bubbles. The
//! multiplies a row releases form a batch that waits in a small queue for
//! the lane's multipliers; when the queue is full the walk stalls.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use ucnn_core::{trace_tile, CodeBook, CompiledGroupTables, LaneCounters, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub total_cycles: u64,
    pub useful_cycles: u64,
    pub bubble_cycles: u64,
    pub multiplier_stall_cycles: u64,
    /// Dense-equivalent multiply-accumulates completed.
    pub dense_macs: u64,
}

impl CycleReport {
    pub fn macs_per_cycle_per_pe(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.dense_macs as f64 / self.total_cycles as f64
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.total_cycles == self.useful_cycles + self.bubble_cycles + self.multiplier_stall_cycles
    }

    pub fn scaled(self, n: u64) -> Self {
        Self {
            total_cycles: self.total_cycles * n,
            useful_cycles: self.useful_cycles * n,
            bubble_cycles: self.bubble_cycles * n,
            multiplier_stall_cycles: self.multiplier_stall_cycles * n,
            dense_macs: self.dense_macs * n,
        }
    }
}

impl AddAssign for CycleReport {
    fn add_assign(&mut self, o: Self) {
        self.total_cycles += o.total_cycles;
        self.useful_cycles += o.useful_cycles;
        self.bubble_cycles += o.bubble_cycles;
        self.multiplier_stall_cycles += o.multiplier_stall_cycles;
        self.dense_macs += o.dense_macs;
    }
}

/// Dense PE over one tile of `tile_len` positions, repeated for `reps`
/// output rows, `filters` filters wide.
pub fn dense_tile_cycles(tile_len: usize, reps: usize, filters: usize) -> CycleReport {
    let cycles = (tile_len * reps) as u64;
    CycleReport {
        total_cycles: cycles,
        useful_cycles: cycles,
        dense_macs: cycles * filters as u64,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct MulQueue {
    pending: VecDeque<u32>,
    depth: usize,
    rate: u32,
}

impl MulQueue {
    fn tick(&mut self) {
        let mut budget = self.rate;
        while budget > 0 {
            let Some(front) = self.pending.front_mut() else { break };
            let n = budget.min(*front);
            *front -= n;
            budget -= n;
            if *front == 0 {
                self.pending.pop_front();
            }
        }
    }
}

/// Row-level view of a table walk: multiplies released per row and whether
/// the row is a bubble.
#[derive(Debug, Clone)]
pub struct WalkTrace {
    pub batches: Vec<u8>,
    pub bubbles: Vec<bool>,
    pub counters: LaneCounters,
    pub filters: usize,
    pub tile_len: usize,
}

impl WalkTrace {
    pub fn new(t: &CompiledGroupTables, codebook: &CodeBook) -> Result<Self> {
        let (counters, batches) = trace_tile(t, codebook)?;
        let bubbles = (0..t.len()).map(|e| t.is_sentinel(e)).collect();
        Ok(Self { batches, bubbles, counters, filters: t.g(), tile_len: t.tile.len() })
    }
}

fn walk_once(tr: &WalkTrace, q: &mut MulQueue, rep: &mut CycleReport, mut log: Option<&mut String>) {
    for (row, (&batch, &bubble)) in tr.batches.iter().zip(&tr.bubbles).enumerate() {
        loop {
            q.tick();
            rep.total_cycles += 1;
            if batch == 0 || q.pending.len() < q.depth {
                if batch > 0 {
                    q.pending.push_back(u32::from(batch));
                }
                break;
            }
            rep.multiplier_stall_cycles += 1;
            if let Some(l) = log.as_deref_mut() {
                let _ = writeln!(l, "{} row {row} stall", rep.total_cycles);
            }
        }
        if bubble {
            rep.bubble_cycles += 1;
        } else {
            rep.useful_cycles += 1;
        }
        if let Some(l) = log.as_deref_mut() {
            let kind = if bubble { "bubble" } else { "read" };
            let _ = writeln!(l, "{} row {row} {kind} mul {batch}", rep.total_cycles);
        }
    }
}

fn drain(q: &mut MulQueue, rep: &mut CycleReport) {
    while !q.pending.is_empty() {
        q.tick();
        rep.total_cycles += 1;
        rep.multiplier_stall_cycles += 1;
    }
}

/// One lane walking the same table `reps` times back to back (one walk per
/// output row), then draining its multiply queue.
pub fn ucnn_tile_cycles(tr: &WalkTrace, reps: usize, multipliers: usize, queue_depth: usize) -> CycleReport {
    let mut q = MulQueue { pending: VecDeque::new(), depth: queue_depth, rate: multipliers as u32 };
    let mut rep = CycleReport::default();
    let mut done = 0;
    let mut prev_state = None;
    let mut prev_rep = rep;
    while done < reps {
        // Once a walk starts and ends in the same queue state, every later
        // walk repeats it exactly.
        if prev_state.as_ref() == Some(&q.pending) {
            let mut step = rep;
            step.total_cycles -= prev_rep.total_cycles;
            step.useful_cycles -= prev_rep.useful_cycles;
            step.bubble_cycles -= prev_rep.bubble_cycles;
            step.multiplier_stall_cycles -= prev_rep.multiplier_stall_cycles;
            rep += step.scaled((reps - done) as u64);
            break;
        }
        prev_state = Some(q.pending.clone());
        prev_rep = rep;
        walk_once(tr, &mut q, &mut rep, None);
        done += 1;
    }
    drain(&mut q, &mut rep);
    rep.dense_macs = (tr.filters * tr.tile_len * reps) as u64;
    rep
}

/// Cycle-by-cycle log of a single walk, for inspecting small tiles.
pub fn trace_dump(tr: &WalkTrace, multipliers: usize, queue_depth: usize) -> String {
    let mut q = MulQueue { pending: VecDeque::new(), depth: queue_depth, rate: multipliers as u32 };
    let mut rep = CycleReport::default();
    let mut out = String::new();
    walk_once(tr, &mut q, &mut rep, Some(&mut out));
    drain(&mut q, &mut rep);
    let _ = writeln!(
        out,
        "total {} useful {} bubbles {} stalls {}",
        rep.total_cycles, rep.useful_cycles, rep.bubble_cycles, rep.multiplier_stall_cycles
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(batches: &[u8], bubbles: &[bool]) -> WalkTrace {
        WalkTrace {
            batches: batches.to_vec(),
            bubbles: bubbles.to_vec(),
            counters: LaneCounters::default(),
            filters: 1,
            tile_len: batches.len(),
        }
    }

    #[test]
    fn single_multiplies_never_stall() {
        let t = tr(&[1, 1, 1, 0, 1], &[false; 5]);
        let r = ucnn_tile_cycles(&t, 1, 1, 1);
        // the last product retires one cycle after its row
        assert_eq!((r.total_cycles, r.multiplier_stall_cycles), (6, 1));
        assert!(r.is_consistent());
    }

    #[test]
    fn back_to_back_pairs_stall() {
        let t = tr(&[2, 1, 0], &[false, false, true]);
        let r = ucnn_tile_cycles(&t, 1, 1, 1);
        // row 1 waits one cycle for the pair to clear
        assert_eq!(r.bubble_cycles, 1);
        assert_eq!(r.useful_cycles, 2);
        assert_eq!(r.total_cycles, 4);
        assert!(r.is_consistent());
        let wide = ucnn_tile_cycles(&t, 1, 2, 1);
        assert!(wide.total_cycles < r.total_cycles);
    }

    #[test]
    fn repeated_walks_match_explicit_repetition() {
        let t = tr(&[0, 3, 0, 1, 2, 2], &[false, false, true, false, false, false]);
        for depth in 1..=3 {
            let many = ucnn_tile_cycles(&t, 37, 1, depth);
            let mut long = t.clone();
            for _ in 1..37 {
                long.batches.extend_from_slice(&t.batches);
                long.bubbles.extend_from_slice(&t.bubbles);
            }
            long.tile_len = t.tile_len * 37;
            assert_eq!(many, ucnn_tile_cycles(&long, 1, 1, depth));
            assert_eq!(many.bubble_cycles, 37);
        }
    }

    #[test]
    fn dense_cycles() {
        let r = dense_tile_cycles(9, 4, 8);
        assert_eq!((r.total_cycles, r.dense_macs), (36, 288));
        assert_eq!(r.macs_per_cycle_per_pe(), 8.0);
    }

    #[test]
    fn dump_lists_every_cycle() {
        let t = tr(&[2, 1], &[false, false]);
        let d = trace_dump(&t, 1, 1);
        assert!(d.contains("row 1 stall"));
        assert!(d.ends_with("total 4 useful 2 bubbles 0 stalls 2\n"));
    }
}
