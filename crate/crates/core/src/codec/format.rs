//! `NQC1` serialisation of a [`CodedImage`].
//!
//! Layout (little endian): magic `NQC1`, `u32` width, `u32` height, `u8` d,
//! `u8` quality, `d*d` `u16` quantiser steps, `u32` block count, then per
//! block two `u16` grid coordinates (row, col) and `d*d` `i16` symbols.

use std::path::Path;

use super::{estimate_bpp, CodedImage, QuantTable, QuantizedBlock};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NQC1";

pub fn to_bytes(img: &CodedImage) -> Result<Vec<u8>> {
    let d = img.d;
    let d2 = d * d;
    if d > u8::MAX as usize {
        return Err(Error::Param(format!("block size {d} does not fit the header")));
    }
    let mut out = Vec::with_capacity(18 + 2 * d2 + img.blocks.len() * (4 + 2 * d2));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(
        &u32::try_from(img.width)
            .map_err(|_| Error::Param("width overflows u32".into()))?
            .to_le_bytes(),
    );
    out.extend_from_slice(
        &u32::try_from(img.height)
            .map_err(|_| Error::Param("height overflows u32".into()))?
            .to_le_bytes(),
    );
    out.push(d as u8);
    out.push(img.table.quality());
    for &s in img.table.steps() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&(img.blocks.len() as u32).to_le_bytes());
    for b in &img.blocks {
        let row = u16::try_from(b.block_row).map_err(|_| Error::Param("block row overflows u16".into()))?;
        let col = u16::try_from(b.block_col).map_err(|_| Error::Param("block col overflows u16".into()))?;
        out.extend_from_slice(&row.to_le_bytes());
        out.extend_from_slice(&col.to_le_bytes());
        for &s in &b.symbols {
            let s = i16::try_from(s).map_err(|_| Error::Param(format!("symbol {s} overflows i16")))?;
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::data_at(format!("truncated while reading {what}"), self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn i16(&mut self, what: &str) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<CodedImage> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::data_at("bad magic, expected NQC1", 0));
    }
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let d_pos = r.pos;
    let d = r.u8("block size")? as usize;
    if d == 0 {
        return Err(Error::data_at("block size 0", d_pos));
    }
    let q_pos = r.pos;
    let quality = r.u8("quality")?;
    let mut steps = Vec::with_capacity(d * d);
    for _ in 0..d * d {
        steps.push(r.u16("quantiser step")?);
    }
    let table = QuantTable::new(d, steps, quality).map_err(|e| Error::data_at(e.to_string(), q_pos))?;
    let count_pos = r.pos;
    let count = r.u32("block count")? as usize;
    let rows = height.div_ceil(d);
    let cols = width.div_ceil(d);
    if count != rows * cols {
        return Err(Error::data_at(
            format!("block count {count} does not match {rows}x{cols} grid"),
            count_pos,
        ));
    }
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let pos = r.pos;
        let block_row = r.u16("block row")? as usize;
        let block_col = r.u16("block col")? as usize;
        if block_row >= rows || block_col >= cols {
            return Err(Error::data_at(format!("block ({block_row}, {block_col}) off the grid"), pos));
        }
        let mut symbols = Vec::with_capacity(d * d);
        for _ in 0..d * d {
            symbols.push(r.i16("symbol")? as i32);
        }
        blocks.push(QuantizedBlock {
            symbols,
            block_row,
            block_col,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::data_at("trailing bytes after last block", r.pos));
    }
    blocks.sort_by_key(|b| (b.block_row, b.block_col));
    if blocks
        .windows(2)
        .any(|w| (w[0].block_row, w[0].block_col) == (w[1].block_row, w[1].block_col))
    {
        return Err(Error::data("duplicate block coordinates"));
    }
    let estimated_bpp = estimate_bpp(&blocks)?;
    Ok(CodedImage {
        width,
        height,
        d,
        table,
        blocks,
        estimated_bpp,
    })
}

pub fn write(img: &CodedImage, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(img)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<CodedImage> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}
