use crate::error::{Error, Result};

/// `(row, col)` cells of a `d x d` block in zig-zag scan order.
///
/// For `d = 8` this is the standard JPEG scan; other sizes use the same
/// anti-diagonal rule.
pub fn zigzag_cells(d: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(d * d);
    if d == 0 {
        return cells;
    }
    for s in 0..(2 * d - 1) {
        let lo = s.saturating_sub(d - 1);
        let hi = s.min(d - 1);
        if s % 2 == 0 {
            for row in (lo..=hi).rev() {
                cells.push((row, s - row));
            }
        } else {
            for row in lo..=hi {
                cells.push((row, s - row));
            }
        }
    }
    cells
}

/// Zig-zag position `index` of the 8x8 scan.
pub fn zigzag_order(index: usize) -> Result<(usize, usize)> {
    if index >= 64 {
        return Err(Error::Param(format!("zig-zag index {index} outside 0..64")));
    }
    Ok(zigzag_cells(8)[index])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_start_and_end() {
        assert_eq!(zigzag_order(0).unwrap(), (0, 0));
        assert_eq!(zigzag_order(1).unwrap(), (0, 1));
        assert_eq!(zigzag_order(2).unwrap(), (1, 0));
        assert_eq!(zigzag_order(3).unwrap(), (2, 0));
        assert_eq!(zigzag_order(63).unwrap(), (7, 7));
        assert!(zigzag_order(64).is_err());
    }

    #[test]
    fn matches_jpeg_natural_order_table() {
        // Annex A natural-order positions of the zig-zag sequence.
        const NATURAL: [usize; 64] = [
            0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57,
            50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
        ];
        for (k, &n) in NATURAL.iter().enumerate() {
            assert_eq!(zigzag_order(k).unwrap(), (n / 8, n % 8));
        }
    }

    #[test]
    fn bijection_for_several_sizes() {
        for d in 1..=9 {
            let cells = zigzag_cells(d);
            let mut seen = vec![false; d * d];
            for (r, c) in cells {
                assert!(r < d && c < d);
                assert!(!seen[r * d + c]);
                seen[r * d + c] = true;
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }
}
