//! JPEG-like block transform coder.
//!
//! Produces the quantised symbol blocks the learned decoder consumes, the
//! classical dequantise + inverse-DCT reconstruction used as the baseline, and
//! an entropy estimate of the coded rate. There is no Huffman or arithmetic
//! stage; [`format`] stores the symbols directly.

mod dct;
pub mod format;
mod table;
mod zigzag;

use std::collections::HashMap;

pub use dct::{dct2d_forward, dct2d_inverse, Dct};
pub use table::{scale_table, QuantTable, ANNEX_K_LUMA};
pub use zigzag::{zigzag_cells, zigzag_order};

use crate::error::{Error, Result};
use crate::image::{level_to_u8, GrayImage};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Block size used by the codec.
pub const BLOCK: usize = 8;

/// Quantised coefficients of one block in zig-zag order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedBlock {
    pub symbols: Vec<i32>,
    pub block_row: usize,
    pub block_col: usize,
}

impl QuantizedBlock {
    pub fn at(mut self, block_row: usize, block_col: usize) -> Self {
        self.block_row = block_row;
        self.block_col = block_col;
        self
    }
}

/// A fully coded image: block grid, quantiser and rate estimate.
///
/// `blocks` is in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedImage {
    pub width: usize,
    pub height: usize,
    pub d: usize,
    pub table: QuantTable,
    pub blocks: Vec<QuantizedBlock>,
    pub estimated_bpp: f64,
}

impl CodedImage {
    pub fn grid_rows(&self) -> usize {
        self.height.div_ceil(self.d)
    }

    pub fn grid_cols(&self) -> usize {
        self.width.div_ceil(self.d)
    }

    pub fn quality(&self) -> u8 {
        self.table.quality()
    }
}

/// Divides coefficients by their steps, rounds half away from zero and emits
/// the result in zig-zag order.
pub fn quantize<T: Scalar>(coeffs: &Matrix<T>, table: &QuantTable) -> Result<QuantizedBlock> {
    let d = table.d();
    if coeffs.shape() != (d, d) {
        return Err(Error::shape("quantize", (d, d), coeffs.shape()));
    }
    let symbols = zigzag_cells(d)
        .into_iter()
        .map(|(r, c)| {
            let q = coeffs[(r, c)].as_f64() / table.step(r, c) as f64;
            q.round() as i32
        })
        .collect();
    Ok(QuantizedBlock {
        symbols,
        block_row: 0,
        block_col: 0,
    })
}

/// Inverse of [`quantize`] up to rounding: coefficient-domain values in raster
/// layout.
pub fn dequantize<T: Scalar>(block: &QuantizedBlock, table: &QuantTable) -> Result<Matrix<T>> {
    let d = table.d();
    if block.symbols.len() != d * d {
        return Err(Error::Param(format!(
            "block has {} symbols, table expects {}",
            block.symbols.len(),
            d * d
        )));
    }
    let mut coeffs = Matrix::zeros(d, d);
    for (&s, (r, c)) in block.symbols.iter().zip(zigzag_cells(d)) {
        coeffs[(r, c)] = T::of(s as f64 * table.step(r, c) as f64);
    }
    Ok(coeffs)
}

/// Baseline (non-learned) reconstruction of one block, in `[0, 255]`.
pub fn dequantize_decode<T: Scalar>(block: &QuantizedBlock, table: &QuantTable) -> Result<Matrix<T>> {
    let coeffs = dequantize(block, table)?;
    let pixels = Dct::<T>::new(table.d()).inverse(&coeffs)?;
    Ok(pixels.map(|v: T| (v + T::of(128.0)).max(T::zero()).min(T::of(255.0))))
}

/// Block encoder with cached transform.
#[derive(Debug, Clone)]
pub struct Encoder {
    dct: Dct<f64>,
    table: QuantTable,
}

impl Encoder {
    pub fn new(table: QuantTable) -> Self {
        Encoder {
            dct: Dct::new(table.d()),
            table,
        }
    }

    /// Encoder for the standard 8x8 table at `quality`.
    pub fn with_quality(quality: u32) -> Result<Self> {
        Ok(Self::new(QuantTable::standard(quality)?))
    }

    pub fn table(&self) -> &QuantTable {
        &self.table
    }

    /// Encodes a grayscale image. Edge blocks are filled by replicating the
    /// last column / row.
    pub fn encode(&self, image: &GrayImage) -> Result<CodedImage> {
        let d = self.table.d();
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Param("cannot encode an empty image".into()));
        }
        let rows = image.height().div_ceil(d);
        let cols = image.width().div_ceil(d);
        let mut blocks = Vec::with_capacity(rows * cols);
        let mut block = Matrix::<f64>::zeros(d, d);
        for br in 0..rows {
            for bc in 0..cols {
                for y in 0..d {
                    for x in 0..d {
                        block[(y, x)] = image.get_clamped(bc * d + x, br * d + y) as f64 - 128.0;
                    }
                }
                let coeffs = self.dct.forward(&block)?;
                blocks.push(quantize(&coeffs, &self.table)?.at(br, bc));
            }
        }
        let estimated_bpp = estimate_bpp(&blocks)?;
        Ok(CodedImage {
            width: image.width(),
            height: image.height(),
            d,
            table: self.table.clone(),
            blocks,
            estimated_bpp,
        })
    }
}

/// Encodes with the standard table at `quality`.
pub fn encode(image: &GrayImage, quality: u32) -> Result<CodedImage> {
    Encoder::with_quality(quality)?.encode(image)
}

/// Baseline decode of a whole coded image to 8-bit pixels (clamped, rounded
/// half up); padding is cropped.
pub fn decode_baseline(coded: &CodedImage) -> Result<GrayImage> {
    let d = coded.d;
    let mut pixels = vec![0u8; coded.width * coded.height];
    for block in &coded.blocks {
        let rec: Matrix<f64> = dequantize_decode(block, &coded.table)?;
        for y in 0..d {
            let py = block.block_row * d + y;
            if py >= coded.height {
                break;
            }
            for x in 0..d {
                let px = block.block_col * d + x;
                if px >= coded.width {
                    break;
                }
                pixels[py * coded.width + px] = level_to_u8(rec[(y, x)]);
            }
        }
    }
    GrayImage::new(coded.width, coded.height, pixels)
}

/// Zeroth-order entropy of the pooled symbol stream, in bits per symbol.
///
/// A block carries one symbol per pixel, so this is also the rate in bits per
/// pixel.
pub fn estimate_bpp(blocks: &[QuantizedBlock]) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::Param("rate estimate needs at least one block".into()));
    }
    let mut hist: HashMap<i32, u64> = HashMap::new();
    let mut total = 0u64;
    for b in blocks {
        for &s in &b.symbols {
            *hist.entry(s).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Param("blocks contain no symbols".into()));
    }
    let mut counts: Vec<u64> = hist.into_values().collect();
    // fixed summation order keeps the estimate bit-stable
    counts.sort_unstable();
    let n = total as f64;
    let h = counts.iter().fold(0.0, |acc, &c| {
        let p = c as f64 / n;
        acc - p * p.log2()
    });
    Ok(h.max(0.0))
}
