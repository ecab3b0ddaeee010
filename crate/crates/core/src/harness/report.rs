//! Dataset evaluation and report tables.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::codec::{decode_baseline, encode};
use crate::error::{Error, Result};
use crate::estimator::EstimatorParams;
use crate::image::GrayImage;
use crate::metrics::MetricsRecord;
use crate::refinement::{reconstruct, RefinementConfig, SweepPoint};

pub const BASELINE_NAME: &str = "baseline";
pub const REPORT_HEADER: &str = "model,dataset,psnr_db,mse,ssim,ms_ssim,bpp";

/// Dataset averages for one decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    /// Mean of per-image PSNR.
    pub psnr_db: f64,
    pub mse: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub bpp: f64,
}

impl ReportRow {
    fn from_records(model: &str, dataset: &str, recs: &[MetricsRecord]) -> Self {
        let n = recs.len() as f64;
        let mean = |f: fn(&MetricsRecord) -> f64| recs.iter().map(f).sum::<f64>() / n;
        ReportRow {
            model: model.to_string(),
            dataset: dataset.to_string(),
            psnr_db: mean(|r| r.psnr_db),
            mse: mean(|r| r.mse),
            ssim: mean(|r| r.ssim),
            ms_ssim: mean(|r| r.ms_ssim),
            bpp: mean(|r| r.estimated_bpp),
        }
    }
}

/// A named decoder to evaluate.
#[derive(Debug, Clone)]
pub struct NamedModel {
    pub name: String,
    pub params: EstimatorParams<f64>,
}

/// Encodes every image at `quality`, then scores the baseline decode followed
/// by each model at `k` steps. Rows come out baseline first, then models in
/// the given order.
pub fn evaluate(models: &[NamedModel], images: &[(String, GrayImage)], dataset: &str, quality: u32, k: usize) -> Result<Vec<ReportRow>> {
    if images.is_empty() {
        return Err(Error::Param("evaluation needs at least one image".into()));
    }
    let coded: Vec<_> = images.par_iter().map(|(_, img)| encode(img, quality)).collect::<Result<_>>()?;
    let baseline: Vec<MetricsRecord> = images
        .par_iter()
        .zip(&coded)
        .map(|((id, img), c)| MetricsRecord::measure(id.clone(), img, &decode_baseline(c)?, c.estimated_bpp))
        .collect::<Result<_>>()?;
    let mut rows = vec![ReportRow::from_records(BASELINE_NAME, dataset, &baseline)];
    for m in models {
        let cfg = RefinementConfig::for_params(&m.params, k);
        let recs: Vec<MetricsRecord> = images
            .par_iter()
            .zip(&coded)
            .map(|((id, img), c)| {
                let out = reconstruct(c, &m.params, &cfg)?.to_gray_image();
                MetricsRecord::measure(id.clone(), img, &out, c.estimated_bpp)
            })
            .collect::<Result<_>>()?;
        rows.push(ReportRow::from_records(&m.name, dataset, &recs));
    }
    Ok(rows)
}

/// CSV report; `provenance` becomes a leading `#` comment line.
pub fn report_csv(rows: &[ReportRow], provenance: &str) -> String {
    let mut out = format!("# {provenance}\n{REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.model, r.dataset, r.psnr_db, r.mse, r.ssim, r.ms_ssim, r.bpp
        );
    }
    out
}

/// Fixed-width text table.
pub fn report_text(rows: &[ReportRow]) -> String {
    let name_w = rows.iter().map(|r| r.model.len()).chain([5]).max().unwrap_or(5);
    let data_w = rows.iter().map(|r| r.dataset.len()).chain([7]).max().unwrap_or(7);
    let mut out = format!(
        "{:<name_w$}  {:<data_w$}  {:>9}  {:>10}  {:>7}  {:>7}  {:>6}\n",
        "model", "dataset", "PSNR", "MSE", "SSIM", "MS-SSIM", "bpp"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<name_w$}  {:<data_w$}  {:>9.4}  {:>10.4}  {:>7.4}  {:>7.4}  {:>6.3}",
            r.model, r.dataset, r.psnr_db, r.mse, r.ssim, r.ms_ssim, r.bpp
        );
    }
    out
}

pub const SWEEP_HEADER: &str = "k,psnr_db,mse";

pub fn sweep_csv(points: &[SweepPoint], provenance: &str) -> String {
    let mut out = format!("# {provenance}\n{SWEEP_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{},{:.4},{:.4}", p.k, p.psnr_db, p.mse);
    }
    out
}
