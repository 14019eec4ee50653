//! Per-patch representative values: loss, gradient magnitude, std and
//! high-frequency power, plus PSNR.
//!
//! All metrics are evaluated on the clean HR patch. Differences are circular
//! and the frequency band is symmetric in sign, so `grad`, `std` and `freq`
//! are invariant under the eight flip/rotation symmetries of a square patch.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{load_image, map_hr_patches};
use crate::manifest::{Manifest, StageRecord, FLAG_LOSS_MISSING};
use crate::raster::{Raster, PIXEL_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Loss,
    Grad,
    Std,
    Freq,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Loss,
        MetricKind::Grad,
        MetricKind::Std,
        MetricKind::Freq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Loss => "loss",
            MetricKind::Grad => "grad",
            MetricKind::Std => "std",
            MetricKind::Freq => "freq",
        }
    }

    /// Whether the metric is a function of pixel content alone (no external restorer).
    pub fn is_intrinsic(self) -> bool {
        !matches!(self, MetricKind::Loss)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "loss" => Ok(MetricKind::Loss),
            "grad" => Ok(MetricKind::Grad),
            "std" => Ok(MetricKind::Std),
            "freq" => Ok(MetricKind::Freq),
            other => Err(Error::Config(format!(
                "unknown metric `{other}` (expected loss, grad, std or freq)"
            ))),
        }
    }
}

/// Parses a comma-separated metric list such as `grad,std,freq`.
pub fn parse_metric_list(s: &str) -> Result<Vec<MetricKind>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let k: MetricKind = part.parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty metric list".into()));
    }
    Ok(out)
}

/// Scores known for one patch. Present values are finite and non-negative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq: Option<f64>,
}

impl MetricScores {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::Loss => self.loss,
            MetricKind::Grad => self.grad,
            MetricKind::Std => self.std,
            MetricKind::Freq => self.freq,
        }
    }

    fn slot(&mut self, kind: MetricKind) -> &mut Option<f64> {
        match kind {
            MetricKind::Loss => &mut self.loss,
            MetricKind::Grad => &mut self.grad,
            MetricKind::Std => &mut self.std,
            MetricKind::Freq => &mut self.freq,
        }
    }

    pub fn set(&mut self, kind: MetricKind, value: f64) {
        debug_assert!(value.is_finite() && value >= 0.0, "{kind} score {value}");
        *self.slot(kind) = Some(value);
    }

    pub fn clear(&mut self, kind: MetricKind) {
        *self.slot(kind) = None;
    }
}

fn require_min_side(patch: &Raster) -> Result<()> {
    if patch.height() < 2 || patch.width() < 2 {
        return Err(Error::Dimension(format!(
            "patch must be at least 2x2, got {}x{}",
            patch.height(),
            patch.width()
        )));
    }
    Ok(())
}

/// Mean squared gradient magnitude using circular forward differences.
pub fn grad_metric(patch: &Raster) -> Result<f64> {
    require_min_side(patch)?;
    let (h, w, c) = patch.shape();
    let px = patch.data();
    let mut sum = 0.0;
    for y in 0..h {
        let yn = if y + 1 == h { 0 } else { y + 1 };
        for x in 0..w {
            let xn = if x + 1 == w { 0 } else { x + 1 };
            let here = (y * w + x) * c;
            let down = (yn * w + x) * c;
            let right = (y * w + xn) * c;
            for ch in 0..c {
                let v = px[here + ch];
                let dh = px[down + ch] - v;
                let dw = px[right + ch] - v;
                sum += dh * dh + dw * dw;
            }
        }
    }
    Ok(sum / patch.len() as f64)
}

/// Population standard deviation over all samples of all channels.
pub fn std_metric(patch: &Raster) -> f64 {
    let n = patch.len() as f64;
    let mean = patch.data().iter().sum::<f64>() / n;
    let var = patch
        .data()
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// True when DFT bin `k` of an `n`-point transform has folded angular
/// frequency `|ω| >= π/2`, i.e. `4·min(k, n-k) >= n`.
#[inline]
pub fn is_high_band(k: usize, n: usize) -> bool {
    4 * k.min(n - k) >= n
}

/// Spectral power in the band where both axes satisfy `|ω| >= π/2`,
/// normalised by `H·W·C`. The DFT is unnormalised.
pub fn freq_metric(patch: &Raster) -> Result<f64> {
    let mut planner = FftPlanner::new();
    freq_metric_with(patch, &mut planner)
}

pub fn freq_metric_with(patch: &Raster, planner: &mut FftPlanner<f64>) -> Result<f64> {
    require_min_side(patch)?;
    let (h, w, c) = patch.shape();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let rows_high: Vec<bool> = (0..h).map(|k| is_high_band(k, h)).collect();
    let cols_high: Vec<usize> = (0..w).filter(|&k| is_high_band(k, w)).collect();

    let mut buf = vec![Complex::new(0.0, 0.0); h * w];
    let mut column = vec![Complex::new(0.0, 0.0); h];
    let mut total = 0.0;
    for ch in 0..c {
        for (dst, &v) in buf.iter_mut().zip(patch.data().iter().skip(ch).step_by(c)) {
            *dst = Complex::new(v, 0.0);
        }
        row_fft.process(&mut buf);
        // Only columns inside the band contribute.
        for &kw in &cols_high {
            for (kh, slot) in column.iter_mut().enumerate() {
                *slot = buf[kh * w + kw];
            }
            col_fft.process(&mut column);
            total += column
                .iter()
                .zip(&rows_high)
                .filter(|(_, &hi)| hi)
                .map(|(z, _)| z.norm_sqr())
                .sum::<f64>();
        }
    }
    Ok(total / patch.len() as f64)
}

/// Mean squared error between a clean patch and an externally restored one.
pub fn mse_loss(clean: &Raster, restored: &Raster) -> Result<f64> {
    clean.same_shape(restored)?;
    let sum: f64 = clean
        .data()
        .iter()
        .zip(restored.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / clean.len() as f64)
}

/// Peak signal-to-noise ratio in dB; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Raster, b: &Raster, peak: f64) -> Result<f64> {
    let mse = mse_loss(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn psnr_8bit(a: &Raster, b: &Raster) -> Result<f64> {
    psnr(a, b, PIXEL_MAX)
}

/// Formats a PSNR value, rendering the identical-input sentinel as `inf`.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

/// Computes every requested intrinsic metric; `loss` entries are ignored.
pub fn score_patch(patch: &Raster, metrics: &[MetricKind]) -> Result<MetricScores> {
    let mut planner = FftPlanner::new();
    score_patch_with(patch, metrics, &mut planner)
}

fn score_patch_with(
    patch: &Raster,
    metrics: &[MetricKind],
    planner: &mut FftPlanner<f64>,
) -> Result<MetricScores> {
    let mut scores = MetricScores::default();
    for &m in metrics {
        match m {
            MetricKind::Grad => scores.set(m, grad_metric(patch)?),
            MetricKind::Std => scores.set(m, std_metric(patch)),
            MetricKind::Freq => scores.set(m, freq_metric_with(patch, planner)?),
            MetricKind::Loss => {}
        }
    }
    Ok(scores)
}

/// Where per-patch losses come from.
#[derive(Debug, Clone)]
pub enum LossSource {
    /// Directory of restored patches named `<patch_id>.png`.
    RestoredDir(PathBuf),
    /// Precomputed losses keyed by patch id.
    Sidecar {
        origin: String,
        losses: HashMap<String, f64>,
    },
}

impl LossSource {
    /// Reads a `patch_id,loss` CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Config(format!("{} lacks a `{name}` column", path.display())))
        };
        let (id_col, loss_col) = (col("patch_id")?, col("loss")?);
        let mut losses = HashMap::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let id = row.get(id_col).unwrap_or("").trim().to_string();
            let raw = row.get(loss_col).unwrap_or("").trim();
            let loss: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("loss `{raw}` is not a number"),
            })?;
            if !loss.is_finite() || loss < 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("loss {loss} must be finite and non-negative"),
                });
            }
            losses.insert(id, loss);
        }
        Ok(LossSource::Sidecar {
            origin: path.to_string_lossy().into_owned(),
            losses,
        })
    }

    fn describe(&self) -> String {
        match self {
            LossSource::RestoredDir(d) => format!("restored-dir:{}", d.display()),
            LossSource::Sidecar { origin, .. } => format!("loss-csv:{origin}"),
        }
    }
}

/// Adds the requested scores to every record, preserving record order.
///
/// Intrinsic metrics are computed from HR patches re-cropped from the source
/// images listed in the provenance header. Records that have no entry in the
/// loss source are flagged `loss_missing` and left without a loss.
pub fn score_manifest(
    mut manifest: Manifest,
    metrics: &[MetricKind],
    loss_source: Option<&LossSource>,
) -> Result<Manifest> {
    let wants_loss = metrics.contains(&MetricKind::Loss);
    if wants_loss && loss_source.is_none() {
        return Err(Error::Config(
            "metric `loss` requires a restored-patch directory or a loss CSV".into(),
        ));
    }
    let intrinsic: Vec<MetricKind> = metrics
        .iter()
        .copied()
        .filter(|m| m.is_intrinsic())
        .collect();
    let restored_dir = match (wants_loss, loss_source) {
        (true, Some(LossSource::RestoredDir(d))) => Some(d.as_path()),
        _ => None,
    };

    if !intrinsic.is_empty() || restored_dir.is_some() {
        let computed = map_hr_patches(&manifest, |rec, patch| {
            let mut planner = FftPlanner::new();
            let mut scores = score_patch_with(&patch.pixels, &intrinsic, &mut planner)?;
            if let Some(dir) = restored_dir {
                let path = dir.join(format!("{}.png", rec.patch_id));
                if path.is_file() {
                    let restored = load_image(&path)?;
                    scores.loss = Some(mse_loss(&patch.pixels, &restored.raster)?);
                }
            }
            Ok(scores)
        })?;
        for (rec, s) in manifest.records.iter_mut().zip(computed) {
            for &m in &intrinsic {
                if let Some(v) = s.get(m) {
                    rec.scores.set(m, v);
                }
            }
            if restored_dir.is_some() {
                match s.loss {
                    Some(v) => {
                        rec.scores.set(MetricKind::Loss, v);
                        rec.clear_flag(FLAG_LOSS_MISSING);
                    }
                    None => {
                        rec.scores.clear(MetricKind::Loss);
                        rec.set_flag(FLAG_LOSS_MISSING);
                    }
                }
            }
        }
    }

    if let (true, Some(LossSource::Sidecar { origin, losses })) = (wants_loss, loss_source) {
        let known: HashSet<&str> = manifest
            .records
            .iter()
            .map(|r| r.patch_id.as_str())
            .collect();
        let unknown: BTreeSet<&str> = losses
            .keys()
            .map(String::as_str)
            .filter(|id| !known.contains(id))
            .collect();
        if !unknown.is_empty() {
            let preview: Vec<&str> = unknown.iter().take(8).copied().collect();
            let msg = format!(
                "{} id(s) in {origin} not found in manifest: {}{}",
                unknown.len(),
                preview.join(", "),
                if unknown.len() > preview.len() {
                    ", ..."
                } else {
                    ""
                }
            );
            tracing::warn!("{msg}");
            manifest.provenance.warnings.push(msg);
        }
        for rec in &mut manifest.records {
            match losses.get(&rec.patch_id) {
                Some(&v) => {
                    rec.scores.set(MetricKind::Loss, v);
                    rec.clear_flag(FLAG_LOSS_MISSING);
                }
                None => {
                    rec.scores.clear(MetricKind::Loss);
                    rec.set_flag(FLAG_LOSS_MISSING);
                }
            }
        }
    }

    let loss_missing = if wants_loss {
        manifest
            .records
            .iter()
            .filter(|r| r.has_flag(FLAG_LOSS_MISSING))
            .count()
    } else {
        0
    };
    if loss_missing > 0 {
        let msg = format!("{loss_missing} record(s) have no loss in the loss source");
        tracing::warn!("{msg}");
        manifest.provenance.warnings.push(msg);
    }
    manifest.provenance.stages.push(StageRecord::Score {
        metrics: metrics.to_vec(),
        loss_source: loss_source.filter(|_| wants_loss).map(LossSource::describe),
        loss_missing,
    });
    Ok(manifest)
}
