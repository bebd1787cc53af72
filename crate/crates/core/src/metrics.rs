//! PSNR and spherically weighted WS-PSNR.
//!
//! Scores are computed on the luma plane by default. Identical frames score
//! [`PSNR_CAP`] so that CSV output stays numeric.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{FrameBuffer, Projection, VideoSequence};

/// Score reported for zero-error frames.
pub const PSNR_CAP: f64 = 999.99;

const PEAK_SQ: f64 = 255.0 * 255.0;

/// How per-frame errors combine into a sequence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Arithmetic mean of per-frame dB values.
    #[default]
    PerFrameDb,
    /// dB of the mean (weighted) MSE across frames.
    PooledMse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricOptions {
    pub pooling: Pooling,
    pub include_chroma: bool,
}

/// Chroma scores, only populated when requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChromaScore {
    pub psnr_cb: f64,
    pub psnr_cr: f64,
    pub wspsnr_cb: f64,
    pub wspsnr_cr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub psnr_y: f64,
    pub wspsnr_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub psnr_y: f64,
    pub wspsnr_y: f64,
    pub per_frame: Vec<FrameScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chroma: Option<ChromaScore>,
}

/// Per-pixel spherical area weights for one plane geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl WeightMap {
    /// Builds a map from explicit weights, which must be positive and finite.
    pub fn from_weights(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || weights.len() != width * height {
            return Err(Error::Geometry(format!(
                "{} weights for {width}x{height}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Geometry("weights must be positive and finite".into()));
        }
        Ok(WeightMap {
            width,
            height,
            weights,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[j * self.width + i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same map multiplied by a positive constant.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::from_weights(self.width, self.height, self.weights.iter().map(|w| w * k).collect())
    }

    /// Weight map for a projection and plane geometry.
    pub fn for_projection(projection: Projection, width: usize, height: usize) -> Result<Self> {
        match projection {
            Projection::Erp => erp_weight_map(width, height),
            Projection::CmpFace if width == height => cmp_weight_map(width),
            Projection::CmpFace => Err(Error::Geometry(format!(
                "cubemap faces must be square, got {width}x{height}"
            ))),
        }
    }
}

/// ERP weights: cosine of the row latitude, constant along each row.
pub fn erp_weight_map(w: usize, h: usize) -> Result<WeightMap> {
    if w == 0 || h == 0 {
        return Err(Error::Geometry(format!("{w}x{h} must be positive")));
    }
    let hf = h as f64;
    let mut weights = Vec::with_capacity(w * h);
    for j in 0..h {
        let wr = ((j as f64 + 0.5 - hf / 2.0) * PI / hf).cos();
        weights.extend(std::iter::repeat_n(wr, w));
    }
    WeightMap::from_weights(w, h, weights)
}

/// Cubemap face weights `(1 + u^2 + v^2)^(-3/2)` at pixel centers.
pub fn cmp_weight_map(n: usize) -> Result<WeightMap> {
    if n == 0 {
        return Err(Error::Geometry("face size must be positive".into()));
    }
    let coord = |i: usize| 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        let v = coord(j);
        for i in 0..n {
            let u = coord(i);
            weights.push((1.0 + u * u + v * v).powf(-1.5));
        }
    }
    WeightMap::from_weights(n, n, weights)
}

fn db(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (PEAK_SQ / mse).log10()).min(PSNR_CAP)
    }
}

/// Weighted squared-error sum and weight sum for one plane.
fn plane_error(a: &[u8], b: &[u8], weights: Option<&[f64]>) -> (f64, f64) {
    match weights {
        None => {
            let se: u64 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x as i64 - y as i64;
                    (d * d) as u64
                })
                .sum();
            (se as f64, a.len() as f64)
        }
        Some(w) => a.iter().zip(b).zip(w).fold((0.0, 0.0), |(s, ws), ((&x, &y), &wt)| {
            let d = x as f64 - y as f64;
            (s + wt * d * d, ws + wt)
        }),
    }
}

fn check_pair(reference: &VideoSequence, dist: &VideoSequence) -> Result<()> {
    if reference.width() != dist.width()
        || reference.height() != dist.height()
        || reference.len() != dist.len()
        || reference.projection() != dist.projection()
    {
        return Err(Error::MetricMismatch(format!(
            "{}x{}x{} {:?} vs {}x{}x{} {:?}",
            reference.width(),
            reference.height(),
            reference.len(),
            reference.projection(),
            dist.width(),
            dist.height(),
            dist.len(),
            dist.projection()
        )));
    }
    if reference.is_empty() {
        return Err(Error::MetricMismatch("no frames to compare".into()));
    }
    Ok(())
}

/// Per-frame (weighted) error accumulators for planes Y, Cb, Cr.
#[derive(Debug, Clone, Copy, Default)]
struct FrameErrors {
    plain: [(f64, f64); 3],
    weighted: [(f64, f64); 3],
}

impl FrameErrors {
    fn add(&mut self, other: &FrameErrors) {
        for p in 0..3 {
            self.plain[p].0 += other.plain[p].0;
            self.plain[p].1 += other.plain[p].1;
            self.weighted[p].0 += other.weighted[p].0;
            self.weighted[p].1 += other.weighted[p].1;
        }
    }
}

fn frame_errors(
    a: &FrameBuffer,
    b: &FrameBuffer,
    luma_w: &WeightMap,
    chroma_w: Option<&WeightMap>,
) -> FrameErrors {
    let mut e = FrameErrors::default();
    e.plain[0] = plane_error(a.luma(), b.luma(), None);
    e.weighted[0] = plane_error(a.luma(), b.luma(), Some(luma_w.weights()));
    if let Some(cw) = chroma_w {
        for p in 1..3 {
            e.plain[p] = plane_error(a.plane(p), b.plane(p), None);
            e.weighted[p] = plane_error(a.plane(p), b.plane(p), Some(cw.weights()));
        }
    }
    e
}

fn mse(pair: (f64, f64)) -> f64 {
    pair.0 / pair.1
}

fn summarize(per_frame: Vec<FrameErrors>, options: MetricOptions) -> QualityScore {
    let n = per_frame.len() as f64;
    let frames: Vec<FrameScore> = per_frame
        .iter()
        .map(|e| FrameScore {
            psnr_y: db(mse(e.plain[0])),
            wspsnr_y: db(mse(e.weighted[0])),
        })
        .collect();
    let seq_db = |pick: &dyn Fn(&FrameErrors) -> (f64, f64)| -> f64 {
        match options.pooling {
            Pooling::PerFrameDb => per_frame.iter().map(|e| db(mse(pick(e)))).sum::<f64>() / n,
            Pooling::PooledMse => db(per_frame.iter().map(|e| mse(pick(e))).sum::<f64>() / n),
        }
    };
    let chroma = options.include_chroma.then(|| ChromaScore {
        psnr_cb: seq_db(&|e| e.plain[1]),
        psnr_cr: seq_db(&|e| e.plain[2]),
        wspsnr_cb: seq_db(&|e| e.weighted[1]),
        wspsnr_cr: seq_db(&|e| e.weighted[2]),
    });
    QualityScore {
        psnr_y: seq_db(&|e| e.plain[0]),
        wspsnr_y: seq_db(&|e| e.weighted[0]),
        per_frame: frames,
        chroma,
    }
}

fn chroma_weights(options: MetricOptions, projection: Projection, w: usize, h: usize) -> Result<Option<WeightMap>> {
    options
        .include_chroma
        .then(|| WeightMap::for_projection(projection, w / 2, h / 2))
        .transpose()
}

/// Y-plane PSNR between two sequences.
pub fn psnr(reference: &VideoSequence, dist: &VideoSequence) -> Result<QualityScore> {
    check_pair(reference, dist)?;
    let per_frame: Vec<FrameScore> = reference
        .frames()
        .par_iter()
        .zip(dist.frames())
        .map(|(a, b)| {
            let p = db(mse(plane_error(a.luma(), b.luma(), None)));
            FrameScore { psnr_y: p, wspsnr_y: p }
        })
        .collect();
    let mean = per_frame.iter().map(|f| f.psnr_y).sum::<f64>() / per_frame.len() as f64;
    Ok(QualityScore {
        psnr_y: mean,
        wspsnr_y: mean,
        per_frame,
        chroma: None,
    })
}

/// PSNR and WS-PSNR with the given luma weight map.
pub fn wspsnr(reference: &VideoSequence, dist: &VideoSequence, weights: &WeightMap) -> Result<QualityScore> {
    wspsnr_with(reference, dist, weights, MetricOptions::default())
}

pub fn wspsnr_with(
    reference: &VideoSequence,
    dist: &VideoSequence,
    weights: &WeightMap,
    options: MetricOptions,
) -> Result<QualityScore> {
    check_pair(reference, dist)?;
    if weights.width() != reference.width() || weights.height() != reference.height() {
        return Err(Error::MetricMismatch(format!(
            "weight map {}x{} vs plane {}x{}",
            weights.width(),
            weights.height(),
            reference.width(),
            reference.height()
        )));
    }
    let cw = chroma_weights(options, reference.projection(), reference.width(), reference.height())?;
    let per_frame = reference
        .frames()
        .par_iter()
        .zip(dist.frames())
        .map(|(a, b)| frame_errors(a, b, weights, cw.as_ref()))
        .collect();
    Ok(summarize(per_frame, options))
}

/// Six-face cubemap score: errors of all faces are pooled per frame before
/// taking the log.
pub fn wspsnr_faces(
    reference: &[VideoSequence],
    dist: &[VideoSequence],
    options: MetricOptions,
) -> Result<QualityScore> {
    if reference.len() != 6 || dist.len() != 6 {
        return Err(Error::MetricMismatch(format!(
            "expected 6 faces each, got {} and {}",
            reference.len(),
            dist.len()
        )));
    }
    for (r, d) in reference.iter().zip(dist) {
        check_pair(r, d)?;
        if r.width() != reference[0].width() || r.len() != reference[0].len() {
            return Err(Error::MetricMismatch("faces differ in geometry".into()));
        }
    }
    let n = reference[0].width();
    let lw = cmp_weight_map(n)?;
    let cw = options.include_chroma.then(|| cmp_weight_map(n / 2)).transpose()?;
    let per_frame = (0..reference[0].len())
        .into_par_iter()
        .map(|t| {
            let mut acc = FrameErrors::default();
            for (r, d) in reference.iter().zip(dist) {
                acc.add(&frame_errors(&r.frames()[t], &d.frames()[t], &lw, cw.as_ref()));
            }
            acc
        })
        .collect();
    Ok(summarize(per_frame, options))
}
