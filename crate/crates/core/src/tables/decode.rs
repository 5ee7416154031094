use crate::error::{Error, Result};
use crate::quant::CodeBook;

use super::compile::LogicalEntry;
use super::groups::ActivationGroupIndex;
use super::{CompiledGroupTables, EncodingMode};

/// Receives the events of a table walk.
pub trait WalkVisitor {
    /// An input read; `cursor[g]` is filter `g`'s current codebook slot.
    fn read(&mut self, offset: usize, cursor: &[usize]);
    /// Level `level`'s group ends. Called deepest first, before the cursor moves.
    fn close(&mut self, level: usize, cursor: &[usize]);
    /// Called once per table row after its read and transition.
    fn row(&mut self, _bubble: bool) {}
}

fn malformed(entry: usize, msg: impl std::fmt::Display) -> Error {
    Error::Malformed(format!("entry {entry}: {msg}"))
}

/// Walks a table, validating it against a codebook of `u` slots.
pub fn walk<V: WalkVisitor>(t: &CompiledGroupTables, u: usize, v: &mut V) -> Result<()> {
    let g = t.g();
    if g == 0 {
        return Err(Error::Malformed("table has no member filters".into()));
    }
    if t.wit.len() != g || t.wit.iter().any(|w| w.len() != t.iit.len()) {
        return Err(Error::Malformed(format!(
            "stream lengths differ: iiT has {} rows, wiT streams have {:?}",
            t.iit.len(),
            t.wit.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let n = t.tile.len();
    let sent = t.sentinel();
    let mut cur = vec![0usize; g];
    let mut fields = vec![0u8; g];
    let mut base = 0usize;
    let mut open = false;
    for e in 0..t.iit.len() {
        for (l, f) in fields.iter_mut().enumerate() {
            *f = t.wit[l][e];
            let limit = if l + 1 == g { 3 } else { 1 };
            if *f > limit {
                return Err(malformed(e, format!("field {f} out of range for level {l}")));
            }
        }
        let shallowest = fields.iter().position(|&f| f != 0);
        let raw = t.iit[e];
        let bubble = raw == sent;
        if bubble {
            if shallowest.is_none() {
                match t.mode {
                    EncodingMode::Pointer => {
                        return Err(malformed(e, "sentinel row without a transition"))
                    }
                    EncodingMode::Jump { .. } => base += sent as usize,
                }
            }
        } else {
            let offset = match t.mode {
                EncodingMode::Pointer => raw as usize,
                EncodingMode::Jump { .. } => base + raw as usize,
            };
            if offset >= n {
                return Err(malformed(e, format!("offset {offset} outside a {n}-position tile")));
            }
            if let Some(l) = cur.iter().position(|&c| c >= u) {
                return Err(malformed(e, format!("level {l} read past the {u}-entry codebook")));
            }
            base = offset;
            v.read(offset, &cur);
            open = true;
        }
        if let Some(lvl) = shallowest {
            if lvl + 1 < g {
                if fields[lvl + 1..g - 1].iter().any(|&f| f != 1) {
                    return Err(malformed(e, "shallow transition without deeper restarts"));
                }
                if fields[g - 1] == 0 {
                    return Err(malformed(e, "shallow transition leaves the deepest slot unset"));
                }
            }
            for l in (lvl..g).rev() {
                v.close(l, &cur);
            }
            if lvl + 1 < g {
                cur[lvl] += 1;
                cur[lvl + 1..].fill(0);
                cur[g - 1] = fields[g - 1] as usize - 1;
            } else {
                cur[lvl] += fields[lvl] as usize;
            }
            base = 0;
            if lvl == 0 {
                open = false;
            }
        }
        v.row(bubble);
    }
    if open {
        return Err(Error::Malformed("stream ends inside an open group".into()));
    }
    Ok(())
}

struct Collect<'a> {
    out: &'a mut [ActivationGroupIndex],
}

impl WalkVisitor for Collect<'_> {
    fn read(&mut self, offset: usize, cursor: &[usize]) {
        for (idx, &slot) in self.out.iter_mut().zip(cursor) {
            if Some(slot) != idx.zero_slot {
                idx.groups[slot].push(offset);
            }
        }
    }
    fn close(&mut self, _level: usize, _cursor: &[usize]) {}
}

/// Recovers every member filter's non-zero activation groups.
pub fn decode(t: &CompiledGroupTables, codebook: &CodeBook) -> Result<Vec<ActivationGroupIndex>> {
    let empty = ActivationGroupIndex {
        groups: vec![Vec::new(); codebook.len()],
        zero_slot: codebook.zero_index(),
    };
    let mut out = vec![empty; t.g()];
    walk(t, codebook.len(), &mut Collect { out: &mut out })?;
    for idx in &mut out {
        for grp in &mut idx.groups {
            grp.sort_unstable();
        }
    }
    Ok(out)
}

struct Logical {
    rows: Vec<LogicalEntry>,
    g: usize,
    pending_read: Option<usize>,
}

impl WalkVisitor for Logical {
    fn read(&mut self, offset: usize, _cursor: &[usize]) {
        self.pending_read = Some(offset);
    }
    fn close(&mut self, _level: usize, _cursor: &[usize]) {}
    fn row(&mut self, _bubble: bool) {
        self.rows.push(LogicalEntry { offset: self.pending_read.take(), fields: vec![0; self.g] });
    }
}

/// Resolves a table into absolute offsets; jump-mode hops are dropped.
pub fn decode_logical(t: &CompiledGroupTables) -> Result<Vec<LogicalEntry>> {
    let g = t.g();
    let mut lg = Logical { rows: Vec::with_capacity(t.len()), g, pending_read: None };
    walk(t, usize::MAX, &mut lg)?;
    let mut out = Vec::with_capacity(lg.rows.len());
    for (e, mut row) in lg.rows.into_iter().enumerate() {
        for (l, f) in row.fields.iter_mut().enumerate() {
            *f = t.wit[l][e];
        }
        let hop = row.offset.is_none() && row.fields.iter().all(|&f| f == 0);
        if !hop {
            out.push(row);
        }
    }
    Ok(out)
}
