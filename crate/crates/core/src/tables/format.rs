//! Binary container for a compiled layer, plus a text dump for debugging.
//!
//! Layout (little-endian): magic `UCTB`, version byte, layer shape as seven
//! u32 (`W H C R S K stride`), precision byte, `G` u32, `C_t` u32, mode byte
//! (0 pointer, 1 jump), jump width byte, max group u32 (0 = uncapped),
//! codebook length u32 then i64 values, table count u32. Each table: member
//! count u32 and ids, `c_start` u32, `c_len` u32, `iiT` width byte, row count
//! u64, then one bit-packed block holding the `iiT` stream followed by each
//! `wiT` stream (1 bit per row, 2 for the last filter), padded to a byte.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::quant::CodeBook;
use crate::tensor::LayerShape;

use super::bits::{BitReader, BitWriter};
use super::decode::{walk, WalkVisitor};
use super::{
    wit_bits, CompileOptions, CompiledGroupTables, CompiledLayer, EncodingMode, TileGeom,
};

const MAGIC: &[u8; 4] = b"UCTB";
const VERSION: u8 = 1;

fn u32_of(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Format(format!("{what} {v} does not fit the table format")))
}

pub fn write_layer<W: Write>(layer: &CompiledLayer, mut out: W) -> Result<()> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.push(VERSION);
    let sh = &layer.shape;
    for (v, name) in [
        (sh.w, "W"),
        (sh.h, "H"),
        (sh.c, "C"),
        (sh.r, "R"),
        (sh.s, "S"),
        (sh.k, "K"),
        (sh.stride, "stride"),
    ] {
        b.extend_from_slice(&u32_of(v, name)?);
    }
    b.push(layer.precision_bits);
    let o = &layer.options;
    b.extend_from_slice(&u32_of(o.g, "G")?);
    b.extend_from_slice(&u32_of(o.c_tile, "C_t")?);
    match o.mode {
        EncodingMode::Pointer => b.extend_from_slice(&[0, 0]),
        EncodingMode::Jump { width } => b.extend_from_slice(&[1, width as u8]),
    }
    b.extend_from_slice(&u32_of(o.max_group.unwrap_or(0), "max group")?);
    b.extend_from_slice(&u32_of(layer.codebook.len(), "codebook length")?);
    for v in layer.codebook.values() {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&u32_of(layer.tables.len(), "table count")?);
    for t in &layer.tables {
        b.extend_from_slice(&u32_of(t.filters.len(), "member count")?);
        for &k in &t.filters {
            b.extend_from_slice(&u32_of(k, "filter id")?);
        }
        b.extend_from_slice(&u32_of(t.tile.c_start, "c_start")?);
        b.extend_from_slice(&u32_of(t.tile.c_len, "c_len")?);
        b.push(t.iit_width as u8);
        b.extend_from_slice(&(t.len() as u64).to_le_bytes());
        let mut bw = BitWriter::new();
        for &v in &t.iit {
            bw.write(u64::from(v), t.iit_width);
        }
        for (l, w) in t.wit.iter().enumerate() {
            let width = if l + 1 == t.g() { 2 } else { 1 };
            for &f in w {
                bw.write(u64::from(f), width);
            }
        }
        b.extend_from_slice(&bw.into_bytes());
    }
    out.write_all(&b)?;
    Ok(())
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.b.len())
            .ok_or_else(|| Error::Format("table file is truncated".into()))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

struct Nop;
impl WalkVisitor for Nop {
    fn read(&mut self, _: usize, _: &[usize]) {}
    fn close(&mut self, _: usize, _: &[usize]) {}
}

pub fn read_layer<R: Read>(mut input: R) -> Result<CompiledLayer> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut c = Cursor { b: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("not a compiled table file".into()));
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported table format version {version}")));
    }
    let mut d = [0usize; 7];
    for v in &mut d {
        *v = c.u32()?;
    }
    let shape = LayerShape { w: d[0], h: d[1], c: d[2], r: d[3], s: d[4], k: d[5], stride: d[6] };
    shape.validate()?;
    let precision_bits = c.u8()?;
    let g = c.u32()?;
    let c_tile = c.u32()?;
    let mode = match (c.u8()?, c.u8()?) {
        (0, _) => EncodingMode::Pointer,
        (1, w) => EncodingMode::Jump { width: u32::from(w) },
        (m, _) => return Err(Error::Format(format!("unknown encoding mode {m}"))),
    };
    let max_group = Some(c.u32()?).filter(|&m| m > 0);
    let options = CompileOptions { g, c_tile, mode, max_group };
    options.validate()?;
    let u = c.u32()?;
    let values = (0..u).map(|_| c.i64()).collect::<Result<Vec<_>>>()?;
    let codebook = CodeBook::rebuild(values)?;
    let count = c.u32()?;
    let expected = shape.k.div_ceil(g) * shape.c.div_ceil(c_tile);
    if count != expected {
        return Err(Error::Format(format!("expected {expected} tables, found {count}")));
    }
    let mut tables = Vec::with_capacity(count);
    for _ in 0..count {
        let members = c.u32()?;
        if members == 0 || members > g {
            return Err(Error::Format(format!("table has {members} member filters, G is {g}")));
        }
        let filters = (0..members).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        if filters.iter().any(|&k| k >= shape.k) {
            return Err(Error::Format("member filter id out of range".into()));
        }
        let tile = TileGeom { r: shape.r, s: shape.s, c_start: c.u32()?, c_len: c.u32()? };
        if tile.c_len == 0 || tile.c_start + tile.c_len > shape.c {
            return Err(Error::Format("tile lies outside the layer's channels".into()));
        }
        let iit_width = u32::from(c.u8()?);
        if !(1..=32).contains(&iit_width) {
            return Err(Error::Format(format!("bad iiT width {iit_width}")));
        }
        let rows = usize::try_from(c.u64()?)
            .map_err(|_| Error::Format("row count overflows".into()))?;
        let bits_per_row = u64::from(iit_width + wit_bits(members));
        let bytes = (rows as u64)
            .checked_mul(bits_per_row)
            .map(|b| b.div_ceil(8))
            .ok_or_else(|| Error::Format("row count overflows".into()))?;
        let block = c.take(bytes as usize)?;
        let mut br = BitReader::new(block);
        let iit = (0..rows)
            .map(|_| br.read(iit_width).map(|v| v as u32))
            .collect::<Result<Vec<_>>>()?;
        let wit = (0..members)
            .map(|l| {
                let w = if l + 1 == members { 2 } else { 1 };
                (0..rows).map(|_| br.read(w).map(|v| v as u8)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let t = CompiledGroupTables { filters, tile, mode, iit_width, iit, wit, max_group };
        walk(&t, codebook.len(), &mut Nop)?;
        tables.push(t);
    }
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes after the last table".into()));
    }
    Ok(CompiledLayer { shape, codebook, precision_bits, options, tables })
}

/// One line per row: row index, iiT field (or `skip`/`hop`), wiT fields.
pub fn dump_layer(layer: &CompiledLayer) -> String {
    let mut s = String::new();
    let o = &layer.options;
    let _ = writeln!(
        s,
        "layer {} G={} C_t={} mode={:?} max_group={:?} codebook={:?}",
        layer.shape,
        o.g,
        o.c_tile,
        o.mode,
        o.max_group,
        layer.codebook.values()
    );
    for t in &layer.tables {
        let _ = writeln!(
            s,
            "table filters={:?} channels={}..{} rows={} skips={} width={}",
            t.filters,
            t.tile.c_start,
            t.tile.c_start + t.tile.c_len,
            t.len(),
            t.skip_entries(),
            t.iit_width
        );
        for e in 0..t.len() {
            let fields: Vec<String> = t.fields(e).map(|f| f.to_string()).collect();
            let head = if t.is_sentinel(e) {
                if t.fields(e).all(|f| f == 0) { "hop".to_string() } else { "skip".to_string() }
            } else {
                match t.mode {
                    EncodingMode::Pointer => {
                        let (r, sy, ch) = t.tile.coords(t.iit[e] as usize);
                        format!("{} (r{r} s{sy} c{ch})", t.iit[e])
                    }
                    EncodingMode::Jump { .. } => format!("+{}", t.iit[e]),
                }
            };
            let _ = writeln!(s, "  {e:5} {head:>20} | {}", fields.join(" "));
        }
    }
    s
}
