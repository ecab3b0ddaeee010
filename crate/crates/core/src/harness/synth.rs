//! Deterministic synthetic grayscale images: a smooth gradient, a few
//! low-frequency waves and some sharp-edged shapes.

use std::fs;
use std::path::{Path, PathBuf};

use super::pgm::save_pgm;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::numerics::{Rng, Stream};

pub const MIN_SYNTH_SIZE: usize = 16;

/// Image number `index` of the synthetic set for `seed`.
pub fn synth_image(size: usize, seed: u64, index: u64) -> Result<GrayImage> {
    if size < MIN_SYNTH_SIZE {
        return Err(Error::Param(format!("synthetic images need size >= {MIN_SYNTH_SIZE}, got {size}")));
    }
    let mut rng = Rng::new(seed).split(Stream::Synth, index);
    let s = size as f64;
    let base = 70.0 + 110.0 * rng.uniform();
    let gx = (rng.uniform() - 0.5) * 120.0 / s;
    let gy = (rng.uniform() - 0.5) * 120.0 / s;

    // band-limited texture: periods between size/8 and size/2 (at least 6 px)
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let period = (s / 8.0 + rng.uniform() * (s / 2.0 - s / 8.0)).max(6.0);
            let angle = rng.uniform() * std::f64::consts::PI;
            let amp = 6.0 + 14.0 * rng.uniform();
            let phase = rng.uniform() * std::f64::consts::TAU;
            let f = std::f64::consts::TAU / period;
            (f * angle.cos(), f * angle.sin(), amp, phase)
        })
        .collect();

    // edges: half-planes and rectangles with constant offsets
    let n_planes = 1 + rng.below(2);
    let planes: Vec<(f64, f64, f64, f64)> = (0..n_planes)
        .map(|_| {
            let a = rng.uniform() * std::f64::consts::TAU;
            let c = rng.uniform() * s;
            let off = (rng.uniform() - 0.5) * 80.0;
            (a.cos(), a.sin(), c, off)
        })
        .collect();
    let n_rects = 1 + rng.below(3);
    let rects: Vec<(f64, f64, f64, f64, f64)> = (0..n_rects)
        .map(|_| {
            let x0 = rng.uniform() * s * 0.8;
            let y0 = rng.uniform() * s * 0.8;
            let w = s * (0.1 + 0.4 * rng.uniform());
            let h = s * (0.1 + 0.4 * rng.uniform());
            let off = (rng.uniform() - 0.5) * 100.0;
            (x0, y0, x0 + w, y0 + h, off)
        })
        .collect();
    let grain = 3.0 * rng.uniform();
    let mut noise = rng.split(Stream::Synth, 1);

    Ok(GrayImage::from_fn(size, size, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = base + gx * (xf - s / 2.0) + gy * (yf - s / 2.0);
        for &(fx, fy, amp, phase) in &waves {
            v += amp * (fx * xf + fy * yf + phase).sin();
        }
        for &(nx, ny, c, off) in &planes {
            if nx * xf + ny * yf > c * (nx.abs() + ny.abs()) * 0.5 {
                v += off;
            }
        }
        for &(x0, y0, x1, y1, off) in &rects {
            if xf >= x0 && xf < x1 && yf >= y0 && yf < y1 {
                v += off;
            }
        }
        v += grain * (noise.uniform() - 0.5) * 2.0;
        v.round().clamp(0.0, 255.0) as u8
    }))
}

/// Writes `count` images named `synth_000.pgm`, `synth_001.pgm`, ... to `dir`.
pub fn make_synth(count: usize, size: usize, seed: u64, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("synth_{i:03}.pgm"));
            save_pgm(&synth_image(size, seed, i as u64)?, &path)?;
            Ok(path)
        })
        .collect()
}
