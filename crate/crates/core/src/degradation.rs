//! Forward degradation models: bicubic decimation and additive white
//! Gaussian noise, optionally chained.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{map_hr_patches, save_png};
use crate::manifest::{DegradationRecord, Manifest, StageRecord};
use crate::raster::{Patch, Raster};
use crate::tensor_file::write_tensor;

pub const SUPPORTED_SCALES: [usize; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DegradationSpec {
    BicubicDown { scale: usize },
    Awgn { sigma: f64, seed: u64 },
    Compose { steps: Vec<DegradationSpec> },
}

impl fmt::Display for DegradationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegradationSpec::BicubicDown { scale } => write!(f, "bicubic_down({scale})"),
            DegradationSpec::Awgn { sigma, seed } => write!(f, "awgn({sigma}, seed={seed})"),
            DegradationSpec::Compose { steps } => {
                for (i, s) in steps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{s}")?;
                }
                Ok(())
            }
        }
    }
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DegradationSpec::BicubicDown { scale } if !SUPPORTED_SCALES.contains(scale) => Err(
                Error::Config(format!("bicubic scale must be 2, 3 or 4, got {scale}")),
            ),
            DegradationSpec::Awgn { sigma, .. } if !(sigma.is_finite() && *sigma >= 0.0) => Err(
                Error::Config(format!("noise sigma must be finite and >= 0, got {sigma}")),
            ),
            DegradationSpec::Compose { steps } if steps.is_empty() => {
                Err(Error::Config("empty degradation composition".into()))
            }
            DegradationSpec::Compose { steps } => steps.iter().try_for_each(Self::validate),
            _ => Ok(()),
        }
    }

    /// Primitive steps in application order.
    pub fn steps(&self) -> Vec<&DegradationSpec> {
        match self {
            DegradationSpec::Compose { steps } => steps.iter().flat_map(|s| s.steps()).collect(),
            leaf => vec![leaf],
        }
    }

    /// Total spatial decimation factor.
    pub fn total_scale(&self) -> usize {
        self.steps()
            .iter()
            .map(|s| match s {
                DegradationSpec::BicubicDown { scale } => *scale,
                _ => 1,
            })
            .product()
    }

    /// Applies every step to `raster`; noise seeds are derived from `patch_id`.
    /// Returns the degraded raster and the per-step noise seeds used.
    pub fn apply(&self, raster: &Raster, patch_id: &str) -> Result<(Raster, Vec<u64>)> {
        self.validate()?;
        let mut out = raster.clone();
        let mut seeds = Vec::new();
        for step in self.steps() {
            match *step {
                DegradationSpec::BicubicDown { scale } => out = bicubic_downsample(&out, scale)?,
                DegradationSpec::Awgn { sigma, seed } => {
                    let s = patch_seed(seed, patch_id);
                    out = awgn(&out, sigma, s);
                    seeds.push(s);
                }
                DegradationSpec::Compose { .. } => unreachable!("steps() flattens compositions"),
            }
        }
        Ok((out, seeds))
    }
}

/// `global_seed XOR` the first eight bytes (little-endian) of SHA-256(patch_id).
pub fn patch_seed(global_seed: u64, patch_id: &str) -> u64 {
    let digest = Sha256::digest(patch_id.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    global_seed ^ u64::from_le_bytes(head)
}

/// Cubic convolution kernel with `a = -0.5`.
#[inline]
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// Maps any integer index into `0..len` by half-sample symmetric reflection.
#[inline]
pub fn reflect_index(i: i64, len: usize) -> usize {
    let n = len as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Sparse resampling weights for one output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Taps {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Per-output-sample taps for resizing an axis from `in_len` to `out_len`.
///
/// When shrinking, the kernel is stretched by the inverse scale (antialiasing)
/// and the weights renormalised to sum to one. Out-of-range taps are folded
/// back with [`reflect_index`].
pub fn resize_taps(in_len: usize, out_len: usize) -> Vec<Taps> {
    let scale = out_len as f64 / in_len as f64;
    let (kernel_scale, width) = if scale < 1.0 {
        (scale, 4.0 / scale)
    } else {
        (1.0, 4.0)
    };
    let taps = width.ceil() as i64 + 2;
    (1..=out_len)
        .map(|u| {
            // Centre in 1-based input coordinates.
            let centre = u as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let left = (centre - width / 2.0).floor() as i64;
            let mut indices = Vec::with_capacity(taps as usize);
            let mut weights = Vec::with_capacity(taps as usize);
            for j in left..left + taps {
                let w = kernel_scale * cubic(kernel_scale * (centre - j as f64));
                if w != 0.0 {
                    indices.push(reflect_index(j - 1, in_len));
                    weights.push(w);
                }
            }
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            Taps { indices, weights }
        })
        .collect()
}

// Weights sum to one, so each output is accumulated as deviations from the
// first tap's sample; flat regions then come out exactly flat.
fn resize_rows(src: &Raster, out_h: usize) -> Raster {
    let (h, w, c) = src.shape();
    let taps = resize_taps(h, out_h);
    let stride = w * c;
    let mut data = vec![0.0; out_h * stride];
    for (oy, t) in taps.iter().enumerate() {
        let dst = &mut data[oy * stride..(oy + 1) * stride];
        let a0 = t.indices[0] * stride;
        let anchor = &src.data()[a0..a0 + stride];
        for (&iy, &wt) in t.indices.iter().zip(&t.weights) {
            let row = &src.data()[iy * stride..(iy + 1) * stride];
            for ((d, s), a) in dst.iter_mut().zip(row).zip(anchor) {
                *d += wt * (s - a);
            }
        }
        for (d, a) in dst.iter_mut().zip(anchor) {
            *d += a;
        }
    }
    Raster::new(out_h, w, c, data).expect("shape derived from input")
}

fn resize_cols(src: &Raster, out_w: usize) -> Raster {
    let (h, w, c) = src.shape();
    let taps = resize_taps(w, out_w);
    let mut data = vec![0.0; h * out_w * c];
    for y in 0..h {
        let row = &src.data()[y * w * c..(y + 1) * w * c];
        for (ox, t) in taps.iter().enumerate() {
            let dst = &mut data[(y * out_w + ox) * c..(y * out_w + ox + 1) * c];
            let anchor = &row[t.indices[0] * c..(t.indices[0] + 1) * c];
            for (&ix, &wt) in t.indices.iter().zip(&t.weights) {
                for ((d, s), a) in dst.iter_mut().zip(&row[ix * c..(ix + 1) * c]).zip(anchor) {
                    *d += wt * (s - a);
                }
            }
            for (d, a) in dst.iter_mut().zip(anchor) {
                *d += a;
            }
        }
    }
    Raster::new(h, out_w, c, data).expect("shape derived from input")
}

/// Antialiased bicubic decimation by an integer factor, clamped to `[0, 255]`.
/// Rows are resized before columns.
pub fn bicubic_downsample(src: &Raster, scale: usize) -> Result<Raster> {
    if scale == 0 {
        return Err(Error::Config("scale must be positive".into()));
    }
    let (h, w, _) = src.shape();
    if h % scale != 0 || w % scale != 0 {
        return Err(Error::Dimension(format!(
            "{h}x{w} is not divisible by scale {scale}"
        )));
    }
    if scale == 1 {
        return Ok(src.clone());
    }
    let mut out = resize_cols(&resize_rows(src, h / scale), w / scale);
    out.clamp_to_pixel_range();
    Ok(out)
}

/// Downsamples a patch, carrying its HR placement over to LR coordinates.
pub fn bicubic_downsample_patch(patch: &Patch, scale: usize) -> Result<Patch> {
    Ok(Patch {
        source_id: patch.source_id.clone(),
        x: patch.x / scale,
        y: patch.y / scale,
        pixels: bicubic_downsample(&patch.pixels, scale)?,
    })
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every sample. No clamping.
pub fn awgn(src: &Raster, sigma: f64, seed: u64) -> Raster {
    if sigma == 0.0 {
        return src.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated finite and non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = src.clone();
    for v in out.data_mut() {
        *v += normal.sample(&mut rng);
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct DegradeOptions {
    /// Clamp noisy output to `[0, 255]` before writing.
    pub clip: bool,
    /// Write `PFT1` float tensors instead of 8-bit PNGs.
    pub raw: bool,
}

/// File name for a degraded patch.
pub fn degraded_file_name(patch_id: &str, raw: bool) -> String {
    format!("{patch_id}.{}", if raw { "pft" } else { "png" })
}

/// Writes one degraded file per record into `out_dir` and attaches a
/// degradation provenance entry to each record.
pub fn degrade_manifest(
    mut manifest: Manifest,
    spec: &DegradationSpec,
    out_dir: impl AsRef<Path>,
    options: &DegradeOptions,
) -> Result<Manifest> {
    spec.validate()?;
    let out_dir: PathBuf = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let results = map_hr_patches(&manifest, |rec, patch| {
        let (mut lr, seeds) = spec.apply(&patch.pixels, &rec.patch_id)?;
        if options.clip {
            lr.clamp_to_pixel_range();
        }
        let file = degraded_file_name(&rec.patch_id, options.raw);
        let path = out_dir.join(&file);
        if options.raw {
            write_tensor(&lr, &path)?;
        } else {
            save_png(&lr, &path)?;
        }
        Ok(DegradationRecord {
            spec: spec.clone(),
            seeds,
            file,
        })
    })?;
    for (rec, d) in manifest.records.iter_mut().zip(results) {
        rec.degradation = Some(d);
    }
    manifest.provenance.stages.push(StageRecord::Degrade {
        spec: spec.clone(),
        out_dir: out_dir.to_string_lossy().into_owned(),
        raw: options.raw,
        clip: options.clip,
    });
    Ok(manifest)
}
