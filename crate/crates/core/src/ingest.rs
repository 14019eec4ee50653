//! Image decoding and deterministic grid cropping.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageReader};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curation::dihedral_apply;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, PatchRecord, Provenance, SourceInfo, StageRecord};
use crate::raster::{Image, Patch, Raster};

/// File extensions picked up by [`extract_all`], compared case-insensitively.
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp"];

fn default_align() -> usize {
    1
}

/// Placement rule for patch crops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub patch_size: usize,
    pub stride: usize,
    /// Every emitted coordinate is a multiple of this value.
    #[serde(default = "default_align")]
    pub scale_align: usize,
    /// Append one flush-to-border position per axis when the grid leaves a remainder.
    #[serde(default)]
    pub cover_edges: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::new(96, 120)
    }
}

impl GridSpec {
    pub fn new(patch_size: usize, stride: usize) -> Self {
        Self {
            patch_size,
            stride,
            scale_align: 1,
            cover_edges: false,
        }
    }

    pub fn with_scale_align(mut self, s: usize) -> Self {
        self.scale_align = s;
        self
    }

    pub fn with_cover_edges(mut self, on: bool) -> Self {
        self.cover_edges = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(Error::Config(format!(
                "patch size must be at least 2, got {}",
                self.patch_size
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.scale_align == 0 {
            return Err(Error::Config("scale_align must be at least 1".into()));
        }
        if self.patch_size % self.scale_align != 0 || self.stride % self.scale_align != 0 {
            return Err(Error::Config(format!(
                "patch size {} and stride {} must be multiples of scale_align {}",
                self.patch_size, self.stride, self.scale_align
            )));
        }
        Ok(())
    }

    /// Crop offsets along one axis of length `len`.
    pub fn axis_positions(&self, len: usize) -> Vec<usize> {
        let p = self.patch_size;
        let s = self.stride.max(1);
        if len < p {
            return Vec::new();
        }
        let span = len - p;
        let mut out: Vec<usize> = (0..=span / s).map(|i| i * s).collect();
        if self.cover_edges {
            let align = self.scale_align.max(1);
            let flush = span / align * align;
            if out.last().is_some_and(|&last| flush > last) {
                out.push(flush);
            }
        }
        out
    }
}

/// Row-major `(x, y)` crop positions for an image of the given size.
pub fn enumerate_grid(height: usize, width: usize, grid: &GridSpec) -> Vec<(usize, usize)> {
    let ys = grid.axis_positions(height);
    let xs = grid.axis_positions(width);
    let mut out = Vec::with_capacity(ys.len() * xs.len());
    for &y in &ys {
        for &x in &xs {
            out.push((x, y));
        }
    }
    out
}

fn file_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Decodes an 8-bit PNG/JPEG/BMP file. Alpha channels are dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(file_id(path), &bytes, path)
}

fn decode_image(id: String, bytes: &[u8], path: &Path) -> Result<Image> {
    let format_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let decoded = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| format_err(e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, samples): (usize, Vec<u8>) = match decoded.color() {
        ColorType::L8 => (1, decoded.into_bytes()),
        ColorType::La8 => (1, DynamicImage::ImageLuma8(decoded.to_luma8()).into_bytes()),
        ColorType::Rgb8 => (3, decoded.into_bytes()),
        ColorType::Rgba8 => (3, decoded.to_rgb8().into_raw()),
        other => {
            return Err(format_err(format!(
                "unsupported color type {other:?}; only 8-bit grayscale and RGB are accepted"
            )))
        }
    };
    let raster = Raster::new(
        height,
        width,
        channels,
        samples.into_iter().map(f64::from).collect(),
    )
    .map_err(|e| format_err(e.to_string()))?;
    Ok(Image::new(id, raster))
}

pub fn crop_raster(raster: &Raster, x: usize, y: usize, size: usize) -> Result<Raster> {
    let (h, w, c) = raster.shape();
    if size == 0 || x + size > w || y + size > h {
        return Err(Error::Bounds {
            x,
            y,
            size,
            width: w,
            height: h,
        });
    }
    let mut data = Vec::with_capacity(size * size * c);
    for row in y..y + size {
        let start = raster.index(row, x, 0);
        data.extend_from_slice(&raster.data()[start..start + size * c]);
    }
    Raster::new(size, size, c, data)
}

pub fn crop_patch(image: &Image, x: usize, y: usize, size: usize) -> Result<Patch> {
    Ok(Patch {
        source_id: image.id.clone(),
        x,
        y,
        pixels: crop_raster(&image.raster, x, y, size)?,
    })
}

/// Writes a raster as an 8-bit grayscale or RGB PNG (rounded, clamped).
pub fn save_png(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let color = match raster.channels() {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => {
            return Err(Error::Shape(format!(
                "cannot encode {c}-channel raster as PNG"
            )))
        }
    };
    image::save_buffer_with_format(
        path,
        &raster.to_u8(),
        raster.width() as u32,
        raster.height() as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ExtractOptions {
    /// Write each HR patch as `<patch_id>.png` into this directory.
    pub save_patches: Option<PathBuf>,
}

pub fn extract_all(image_dir: impl AsRef<Path>, grid: &GridSpec) -> Result<Manifest> {
    extract_with(image_dir, grid, &ExtractOptions::default())
}

struct Decoded {
    file: String,
    digest: [u8; 32],
    image: Result<Image>,
}

pub fn extract_with(
    image_dir: impl AsRef<Path>,
    grid: &GridSpec,
    options: &ExtractOptions,
) -> Result<Manifest> {
    grid.validate()?;
    let dir = image_dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;

    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_image = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::Input(format!("no image files in {}", dir.display())));
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut warnings = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    files.retain(|p| {
        let id = file_id(p);
        if seen.insert(id.clone()) {
            true
        } else {
            warnings.push(format!(
                "skipped {}: duplicate image id `{id}`",
                p.file_name().unwrap_or_default().to_string_lossy()
            ));
            false
        }
    });

    if let Some(out) = &options.save_patches {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    }

    let decoded: Vec<Decoded> = files
        .par_iter()
        .map(|path| {
            let file = path
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let bytes = match std::fs::read(path) {
                Ok(b) => b,
                Err(e) => {
                    return Decoded {
                        file,
                        digest: [0; 32],
                        image: Err(Error::io(path, e)),
                    }
                }
            };
            let digest: [u8; 32] = Sha256::digest(&bytes).into();
            let image = decode_image(file_id(path), &bytes, path).and_then(|img| {
                if let Some(out) = &options.save_patches {
                    for (x, y) in enumerate_grid(img.height(), img.width(), grid) {
                        let patch = crop_patch(&img, x, y, grid.patch_size)?;
                        save_png(&patch.pixels, out.join(format!("{}.png", patch.id())))?;
                    }
                }
                Ok(img)
            });
            Decoded {
                file,
                digest,
                image,
            }
        })
        .collect();

    let mut hasher = Sha256::new();
    let mut sources = Vec::new();
    let mut records = Vec::new();
    for d in decoded {
        let img = match d.image {
            Ok(img) => img,
            Err(e @ (Error::Format { .. } | Error::Io { .. })) => {
                tracing::warn!(file = %d.file, "skipping: {e}");
                warnings.push(format!("skipped {}: {e}", d.file));
                continue;
            }
            Err(e) => return Err(e),
        };
        hasher.update(d.file.as_bytes());
        hasher.update([0u8]);
        hasher.update(d.digest);

        let positions = enumerate_grid(img.height(), img.width(), grid);
        if positions.is_empty() {
            let msg = format!(
                "image {} ({}x{}) is smaller than patch size {}; no patches",
                img.id,
                img.width(),
                img.height(),
                grid.patch_size
            );
            tracing::warn!("{msg}");
            warnings.push(msg);
        }
        records.extend(
            positions
                .into_iter()
                .map(|(x, y)| PatchRecord::new(&img.id, x, y, grid.patch_size)),
        );
        sources.push(SourceInfo {
            id: img.id.clone(),
            file: d.file,
            height: img.height(),
            width: img.width(),
            channels: img.channels(),
        });
    }
    if sources.is_empty() {
        return Err(Error::Input(format!(
            "no decodable images in {}: {}",
            dir.display(),
            warnings.join("; ")
        )));
    }

    let digest = hasher
        .finalize()
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
    let provenance = Provenance {
        input_dir: Some(dir.to_string_lossy().into_owned()),
        source_dir_digest: Some(digest),
        grid: Some(*grid),
        stages: vec![StageRecord::Extract {
            images: sources.len(),
            records: records.len(),
        }],
        sources,
        warnings,
        ..Provenance::default()
    };
    Ok(Manifest::new(provenance, records))
}

/// Re-crops the HR patch of every record from its source image, applying the
/// record's dihedral transform, and maps it through `f`.
///
/// Source images are decoded once each, in parallel; results come back in
/// record order. Records whose source cannot be located or decoded are
/// reported together as [`Error::MissingPatchData`].
pub fn map_hr_patches<T, F>(manifest: &Manifest, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&PatchRecord, Patch) -> Result<T> + Sync,
{
    let prov = &manifest.provenance;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        groups.entry(r.source_id.as_str()).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = groups.into_iter().collect();

    let results: Vec<Result<Vec<(usize, T)>>> = groups
        .par_iter()
        .map(|(source_id, idxs)| {
            let missing = || Error::MissingPatchData {
                ids: idxs
                    .iter()
                    .map(|&i| manifest.records[i].patch_id.clone())
                    .collect(),
            };
            let (Some(dir), Some(info)) = (prov.input_dir.as_ref(), prov.source(source_id)) else {
                return Err(missing());
            };
            let image = match load_image(Path::new(dir).join(&info.file)) {
                Ok(img) if img.height() == info.height && img.width() == info.width => img,
                Ok(_) | Err(Error::Io { .. } | Error::Format { .. }) => return Err(missing()),
                Err(e) => return Err(e),
            };
            idxs.iter()
                .map(|&i| {
                    let rec = &manifest.records[i];
                    let mut patch = crop_patch(&image, rec.x, rec.y, rec.size)?;
                    if !rec.transform.is_identity() {
                        patch.pixels = dihedral_apply(&patch.pixels, rec.transform)?;
                    }
                    Ok((i, f(rec, patch)?))
                })
                .collect()
        })
        .collect();

    let mut slots: Vec<Option<T>> = std::iter::repeat_with(|| None)
        .take(manifest.records.len())
        .collect();
    let mut missing_ids = Vec::new();
    for res in results {
        match res {
            Ok(items) => {
                for (i, v) in items {
                    slots[i] = Some(v);
                }
            }
            Err(Error::MissingPatchData { ids }) => missing_ids.extend(ids),
            Err(e) => return Err(e),
        }
    }
    if !missing_ids.is_empty() {
        missing_ids.sort();
        return Err(Error::MissingPatchData { ids: missing_ids });
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect())
}
