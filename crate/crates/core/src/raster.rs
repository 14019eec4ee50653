//! Real-valued pixel buffers on the 8-bit dynamic range scale.
//!
//! Pixels are stored interleaved in row-major `[height][width][channel]`
//! order, so `data[(y * width + x) * channels + c]` addresses one sample.

use crate::error::{Error, Result};

/// Largest representable pixel value.
pub const PIXEL_MAX: f64 = 255.0;

/// A dense `height x width x channels` tensor of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension(format!(
                "raster dims must be non-zero, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "expected {} samples for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty raster");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds a raster by evaluating `f(y, x, c)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty raster");
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    /// Single-channel raster from nested rows; rows must be equally long.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(height, width, 1, rows.concat())
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn clamp_to_pixel_range(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, PIXEL_MAX);
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Copies one channel plane out as a dense `height x width` buffer.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Rounds to the nearest integer and clamps into `0..=255`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.round().clamp(0.0, PIXEL_MAX) as u8)
            .collect()
    }
}

/// A decoded source image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub id: String,
    pub raster: Raster,
}

impl Image {
    pub fn new(id: impl Into<String>, raster: Raster) -> Self {
        Self {
            id: id.into(),
            raster,
        }
    }

    pub fn height(&self) -> usize {
        self.raster.height()
    }

    pub fn width(&self) -> usize {
        self.raster.width()
    }

    pub fn channels(&self) -> usize {
        self.raster.channels()
    }
}

/// A square crop of an [`Image`] together with its HR placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub source_id: String,
    pub x: usize,
    pub y: usize,
    pub pixels: Raster,
}

impl Patch {
    pub fn size(&self) -> usize {
        self.pixels.height()
    }

    /// Stable identifier `<image_id>_x<x>_y<y>`.
    pub fn id(&self) -> String {
        patch_id(&self.source_id, self.x, self.y)
    }
}

pub fn patch_id(source_id: &str, x: usize, y: usize) -> String {
    format!("{source_id}_x{x}_y{y}")
}
