//! Patch grids, neighbourhood contexts and corner-start scan paths.

use std::fmt;
use std::str::FromStr;

use crate::codec::QuantizedBlock;
use crate::error::{Error, Result};
use crate::image::{unit_to_u8, GrayImage};
use crate::scalar::Scalar;

/// Number of context slots: the eight surrounding blocks plus the target.
pub const SLOTS: usize = 9;
/// Slot holding the target block itself.
pub const CENTER_SLOT: usize = 8;
/// `(d_row, d_col)` of each slot: NW, N, NE, W, E, SW, S, SE, centre.
pub const SLOT_OFFSETS: [(isize, isize); SLOTS] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1), (0, 0)];
pub const SLOT_NAMES: [&str; SLOTS] = ["NW", "N", "NE", "W", "E", "SW", "S", "SE", "C"];

/// Block-grid dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
}

impl GridGeometry {
    pub fn for_image(width: usize, height: usize, d: usize) -> Self {
        GridGeometry {
            rows: height.div_ceil(d),
            cols: width.div_ceil(d),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    #[inline]
    pub fn position(&self, j: usize) -> (usize, usize) {
        (j / self.cols, j % self.cols)
    }

    /// Index of the block at `offset` from `j`, if it is on the grid.
    pub fn offset(&self, j: usize, (dr, dc): (isize, isize)) -> Option<usize> {
        let (r, c) = self.position(j);
        let r = r.checked_add_signed(dr)?;
        let c = c.checked_add_signed(dc)?;
        (r < self.rows && c < self.cols).then(|| self.index(r, c))
    }
}

/// An image cut into non-overlapping `d x d` patches scaled to `[0, 1]`.
///
/// Each patch is flattened column-major: entry `x * d + y` holds pixel
/// `(x, y)` of the patch. Edge patches are completed by replicating the last
/// column / row of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid<T> {
    pub width: usize,
    pub height: usize,
    pub d: usize,
    pub geometry: GridGeometry,
    pub patches: Vec<Vec<T>>,
}

/// Splits an image into its patch grid.
pub fn decompose<T: Scalar>(image: &GrayImage, d: usize) -> Result<PatchGrid<T>> {
    if d == 0 || image.width() < d || image.height() < d {
        return Err(Error::Param(format!(
            "{}x{} image is smaller than one {d}x{d} patch",
            image.width(),
            image.height()
        )));
    }
    let geometry = GridGeometry::for_image(image.width(), image.height(), d);
    let scale = T::of(255.0);
    let mut patches = Vec::with_capacity(geometry.len());
    for br in 0..geometry.rows {
        for bc in 0..geometry.cols {
            let mut p = Vec::with_capacity(d * d);
            for x in 0..d {
                for y in 0..d {
                    p.push(T::of(image.get_clamped(bc * d + x, br * d + y) as f64) / scale);
                }
            }
            patches.push(p);
        }
    }
    Ok(PatchGrid {
        width: image.width(),
        height: image.height(),
        d,
        geometry,
        patches,
    })
}

impl<T: Scalar> PatchGrid<T> {
    /// Builds a grid directly from flattened patches (row-major grid order).
    pub fn from_patches(width: usize, height: usize, d: usize, patches: Vec<Vec<T>>) -> Result<Self> {
        let geometry = GridGeometry::for_image(width, height, d);
        if patches.len() != geometry.len() || patches.iter().any(|p| p.len() != d * d) {
            return Err(Error::Param(format!(
                "expected {} patches of {} values for a {width}x{height} image",
                geometry.len(),
                d * d
            )));
        }
        Ok(PatchGrid {
            width,
            height,
            d,
            geometry,
            patches,
        })
    }

    /// Reassembles the unit-scale raster (row-major), dropping padding.
    pub fn recompose(&self) -> Vec<T> {
        let d = self.d;
        let mut out = vec![T::zero(); self.width * self.height];
        for (j, p) in self.patches.iter().enumerate() {
            let (br, bc) = self.geometry.position(j);
            for x in 0..d {
                let px = bc * d + x;
                if px >= self.width {
                    break;
                }
                for y in 0..d {
                    let py = br * d + y;
                    if py >= self.height {
                        break;
                    }
                    out[py * self.width + px] = p[x * d + y];
                }
            }
        }
        out
    }

    /// Reassembled 8-bit image: clamp, scale to 255, round half up.
    pub fn to_image(&self) -> GrayImage {
        let pixels = self.recompose().into_iter().map(unit_to_u8).collect();
        GrayImage::new(self.width, self.height, pixels).expect("raster matches dimensions")
    }
}

/// The quantised blocks around one target patch.
///
/// Always holds [`SLOTS`] entries in [`SLOT_OFFSETS`] order; slots that fall
/// off the grid are zero vectors with `present` false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborContext {
    pub target: usize,
    pub blocks: Vec<Vec<i32>>,
    pub present: [bool; SLOTS],
}

impl NeighborContext {
    pub fn center(&self) -> &[i32] {
        &self.blocks[CENTER_SLOT]
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }
}

/// Gathers the 3x3 block neighbourhood of patch `j` from `blocks` (row-major
/// grid order).
pub fn get_neighbors(j: usize, geometry: GridGeometry, blocks: &[QuantizedBlock]) -> NeighborContext {
    debug_assert_eq!(blocks.len(), geometry.len());
    let width = blocks.first().map_or(0, |b| b.symbols.len());
    let mut slots = Vec::with_capacity(SLOTS);
    let mut present = [false; SLOTS];
    for (n, &off) in SLOT_OFFSETS.iter().enumerate() {
        match geometry.offset(j, off) {
            Some(k) => {
                slots.push(blocks[k].symbols.clone());
                present[n] = true;
            }
            None => slots.push(vec![0; width]),
        }
    }
    NeighborContext {
        target: j,
        blocks: slots,
        present,
    }
}

/// Image corner a scan starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight];

    pub fn from_index(i: usize) -> Corner {
        Self::ALL[i % 4]
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Corner::TopLeft => "tl",
            Corner::TopRight => "tr",
            Corner::BottomLeft => "bl",
            Corner::BottomRight => "br",
        }
    }
}

impl fmt::Display for Corner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Corner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tl" | "top-left" => Ok(Corner::TopLeft),
            "tr" | "top-right" => Ok(Corner::TopRight),
            "bl" | "bottom-left" => Ok(Corner::BottomLeft),
            "br" | "bottom-right" => Ok(Corner::BottomRight),
            other => Err(Error::Param(format!("unknown scan corner '{other}'"))),
        }
    }
}

/// Decoding order over the patch grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanPath {
    pub corner: Corner,
    pub order: Vec<usize>,
}

/// Row-by-row traversal starting at `corner`: each row is walked away from
/// the starting side, and rows advance away from the starting edge.
pub fn scan_path(corner: Corner, rows: usize, cols: usize) -> ScanPath {
    let geometry = GridGeometry { rows, cols };
    let (bottom, right) = match corner {
        Corner::TopLeft => (false, false),
        Corner::TopRight => (false, true),
        Corner::BottomLeft => (true, false),
        Corner::BottomRight => (true, true),
    };
    let mut order = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let r = if bottom { rows - 1 - i } else { i };
        for k in 0..cols {
            let c = if right { cols - 1 - k } else { k };
            order.push(geometry.index(r, c));
        }
    }
    ScanPath { corner, order }
}
