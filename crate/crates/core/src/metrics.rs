//! Distortion and structural-similarity measures on `[0, 255]` rasters.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5), `K1 = 0.01`, `K2 = 0.03`,
//! `L = 255` and only windows that fit entirely inside the image. MS-SSIM
//! combines up to five dyadic scales with the standard exponents, using a 2x2
//! box filter with symmetric edges before each decimation.

use crate::error::{Error, Result};
use crate::image::{GrayImage, Plane};
use crate::scalar::Scalar;

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn same_dims<T: Scalar>(a: &Plane<T>, b: &Plane<T>, op: &'static str) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(op, (a.height, a.width), (b.height, b.width)));
    }
    Ok(())
}

/// Mean squared pixel difference.
pub fn mse<T: Scalar>(reference: &Plane<T>, test: &Plane<T>) -> Result<T> {
    same_dims(reference, test, "mse")?;
    if reference.data.is_empty() {
        return Err(Error::Param("mse of an empty image".into()));
    }
    let sum = reference
        .data
        .iter()
        .zip(&test.data)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(sum / T::of(reference.data.len() as f64))
}

/// Peak signal-to-noise ratio in dB for 8-bit data; `+inf` when `mse == 0`.
pub fn psnr(mse: f64) -> Result<f64> {
    if mse.is_nan() || mse < 0.0 {
        return Err(Error::Param(format!("mse must be non-negative, got {mse}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

fn gaussian_kernel<T: Scalar>() -> Vec<T> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::of(v / total)).collect()
}

/// Separable 'valid' filtering with a symmetric 1-D kernel.
fn filter_valid<T: Scalar>(data: &[T], width: usize, height: usize, k: &[T]) -> (Vec<T>, usize, usize) {
    let n = k.len();
    let ow = width + 1 - n;
    let oh = height + 1 - n;
    let mut horiz = vec![T::zero(); ow * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + n]).fold(T::zero(), |acc, (&w, &v)| acc + w * v);
        }
    }
    let mut out = vec![T::zero(); ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = T::zero();
            for (i, &w) in k.iter().enumerate() {
                acc = acc + w * horiz[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// Mean SSIM and mean contrast-structure term at one scale.
fn ssim_components<T: Scalar>(a: &Plane<T>, b: &Plane<T>) -> (T, T) {
    let k = gaussian_kernel::<T>();
    let (w, h) = (a.width, a.height);
    let aa: Vec<T> = a.data.iter().map(|&v| v * v).collect();
    let bb: Vec<T> = b.data.iter().map(|&v| v * v).collect();
    let ab: Vec<T> = a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect();
    let (mu_a, ow, oh) = filter_valid(&a.data, w, h, &k);
    let (mu_b, _, _) = filter_valid(&b.data, w, h, &k);
    let (s_aa, _, _) = filter_valid(&aa, w, h, &k);
    let (s_bb, _, _) = filter_valid(&bb, w, h, &k);
    let (s_ab, _, _) = filter_valid(&ab, w, h, &k);
    let c1 = T::of((SSIM_K1 * PEAK) * (SSIM_K1 * PEAK));
    let c2 = T::of((SSIM_K2 * PEAK) * (SSIM_K2 * PEAK));
    let two = T::two();
    let mut ssim_sum = T::zero();
    let mut cs_sum = T::zero();
    for i in 0..ow * oh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = s_aa[i] - ma * ma;
        let var_b = s_bb[i] - mb * mb;
        let cov = s_ab[i] - ma * mb;
        let cs = (two * cov + c2) / (var_a + var_b + c2);
        let lum = (two * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim_sum = ssim_sum + lum * cs;
        cs_sum = cs_sum + cs;
    }
    let n = T::of((ow * oh) as f64);
    (ssim_sum / n, cs_sum / n)
}

/// Mean structural similarity.
pub fn ssim<T: Scalar>(reference: &Plane<T>, test: &Plane<T>) -> Result<T> {
    same_dims(reference, test, "ssim")?;
    if reference.width < SSIM_WINDOW || reference.height < SSIM_WINDOW {
        return Err(Error::Param(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            reference.width, reference.height
        )));
    }
    Ok(ssim_components(reference, test).0)
}

/// 2x2 box filter with symmetric edges, then keep every other pixel.
fn downsample<T: Scalar>(p: &Plane<T>) -> Plane<T> {
    let ow = p.width.div_ceil(2);
    let oh = p.height.div_ceil(2);
    let quarter = T::of(0.25);
    let mut data = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let y0 = 2 * y;
        let y1 = (y0 + 1).min(p.height - 1);
        for x in 0..ow {
            let x0 = 2 * x;
            let x1 = (x0 + 1).min(p.width - 1);
            data.push((p.at(x0, y0) + p.at(x1, y0) + p.at(x0, y1) + p.at(x1, y1)) * quarter);
        }
    }
    Plane { width: ow, height: oh, data }
}

/// Number of dyadic scales whose smallest image still fits an SSIM window.
pub fn feasible_scales(width: usize, height: usize) -> usize {
    let mut n = 0;
    let (mut w, mut h) = (width, height);
    while n < MS_SSIM_WEIGHTS.len() && w >= SSIM_WINDOW && h >= SSIM_WINDOW {
        n += 1;
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    n
}

/// Multi-scale SSIM with the standard five exponents. Smaller images use as
/// many scales as fit (at least two), with the exponents renormalised to sum
/// to one.
pub fn ms_ssim<T: Scalar>(reference: &Plane<T>, test: &Plane<T>) -> Result<T> {
    same_dims(reference, test, "ms_ssim")?;
    let scales = feasible_scales(reference.width, reference.height);
    if scales < 2 {
        return Err(Error::Param(format!(
            "{}x{} image is too small for two MS-SSIM scales",
            reference.width, reference.height
        )));
    }
    let used = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = used.iter().sum();
    let weights: Vec<f64> = used.iter().map(|w| w / total).collect();
    ms_ssim_weighted(reference, test, &weights)
}

/// MS-SSIM with explicit per-scale exponents (one scale per weight).
///
/// Negative contrast-structure terms are clamped to zero before
/// exponentiation.
pub fn ms_ssim_weighted<T: Scalar>(reference: &Plane<T>, test: &Plane<T>, weights: &[f64]) -> Result<T> {
    same_dims(reference, test, "ms_ssim")?;
    if weights.is_empty() {
        return Err(Error::Param("ms_ssim needs at least one scale".into()));
    }
    if feasible_scales(reference.width, reference.height) < weights.len() {
        return Err(Error::Param(format!(
            "{}x{} image is too small for {} MS-SSIM scales",
            reference.width,
            reference.height,
            weights.len()
        )));
    }
    let mut a = reference.clone();
    let mut b = test.clone();
    let mut score = T::one();
    for (level, &w) in weights.iter().enumerate() {
        let (s, cs) = ssim_components(&a, &b);
        let last = level + 1 == weights.len();
        let term = if last { s } else { cs };
        score = score * term.max(T::zero()).powf(T::of(w));
        if !last {
            a = downsample(&a);
            b = downsample(&b);
        }
    }
    Ok(score)
}

/// Quality numbers for one decoded image.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub image_id: String,
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub estimated_bpp: f64,
}

impl MetricsRecord {
    /// Measures `test` against `reference`. MS-SSIM is `NaN` when the image is
    /// too small for two scales.
    pub fn measure(image_id: impl Into<String>, reference: &GrayImage, test: &GrayImage, estimated_bpp: f64) -> Result<Self> {
        let r = reference.to_plane::<f64>();
        let t = test.to_plane::<f64>();
        let mse_v = mse(&r, &t)?;
        Ok(MetricsRecord {
            image_id: image_id.into(),
            mse: mse_v,
            psnr_db: psnr(mse_v)?,
            ssim: ssim(&r, &t)?,
            ms_ssim: ms_ssim(&r, &t).unwrap_or(f64::NAN),
            estimated_bpp,
        })
    }
}
