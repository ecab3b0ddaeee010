use crate::error::{Error, Result};

/// Annex K luminance quantisation table, raster order.
pub const ANNEX_K_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Per-coefficient quantiser step sizes for one `d x d` block (raster order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTable {
    d: usize,
    steps: Vec<u16>,
    quality: u8,
}

impl QuantTable {
    pub fn new(d: usize, steps: Vec<u16>, quality: u8) -> Result<Self> {
        if steps.len() != d * d {
            return Err(Error::Param(format!("{d}x{d} table needs {} steps, got {}", d * d, steps.len())));
        }
        if steps.contains(&0) {
            return Err(Error::Param("quantiser steps must be >= 1".into()));
        }
        check_quality(quality as u32)?;
        Ok(QuantTable { d, steps, quality })
    }

    /// The unscaled Annex K table (quality 50).
    pub fn annex_k() -> Self {
        QuantTable {
            d: 8,
            steps: ANNEX_K_LUMA.to_vec(),
            quality: 50,
        }
    }

    /// Annex K table scaled to `quality`.
    pub fn standard(quality: u32) -> Result<Self> {
        scale_table(&Self::annex_k(), quality)
    }

    /// Same step everywhere; used for block sizes other than 8.
    pub fn flat(d: usize, step: u16, quality: u8) -> Result<Self> {
        Self::new(d, vec![step; d * d], quality)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn steps(&self) -> &[u16] {
        &self.steps
    }

    pub fn quality(&self) -> u8 {
        self.quality
    }

    #[inline]
    pub fn step(&self, row: usize, col: usize) -> u16 {
        self.steps[row * self.d + col]
    }
}

fn check_quality(quality: u32) -> Result<()> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Param(format!("quality {quality} outside 1..=100")));
    }
    Ok(())
}

/// IJG-style quality scaling of a base table.
pub fn scale_table(base: &QuantTable, quality: u32) -> Result<QuantTable> {
    check_quality(quality)?;
    let factor = if quality < 50 { 5000 / quality } else { 200 - 2 * quality };
    let steps = base
        .steps
        .iter()
        .map(|&s| {
            let scaled = (s as u32 * factor + 50) / 100;
            scaled.clamp(1, u16::MAX as u32) as u16
        })
        .collect();
    Ok(QuantTable {
        d: base.d,
        steps,
        quality: quality as u8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_50_is_fixed_point() {
        assert_eq!(QuantTable::standard(50).unwrap().steps(), &ANNEX_K_LUMA);
    }

    #[test]
    fn quality_100_is_all_ones() {
        assert!(QuantTable::standard(100).unwrap().steps().iter().all(|&s| s == 1));
    }

    #[test]
    fn quality_25_doubles() {
        let t = QuantTable::standard(25).unwrap();
        for (s, b) in t.steps().iter().zip(ANNEX_K_LUMA) {
            assert_eq!(*s, 2 * b);
        }
    }

    #[test]
    fn per_entry_formula() {
        for q in [1u32, 10, 30, 49, 51, 75, 95] {
            let t = QuantTable::standard(q).unwrap();
            let f = if q < 50 { 5000.0 / q as f64 } else { 200.0 - 2.0 * q as f64 };
            let f = f.floor();
            for (s, b) in t.steps().iter().zip(ANNEX_K_LUMA) {
                let expected = ((b as f64 * f / 100.0) + 0.5).floor().max(1.0);
                assert_eq!(*s as f64, expected, "quality {q}");
            }
        }
    }

    #[test]
    fn out_of_range_quality() {
        assert!(QuantTable::standard(0).is_err());
        assert!(QuantTable::standard(101).is_err());
        assert!(QuantTable::new(8, vec![0; 64], 50).is_err());
    }
}
