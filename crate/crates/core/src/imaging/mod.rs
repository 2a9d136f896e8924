//! Raster kernels used by every pipeline stage.
//!
//! Images are 8-bit, row-major, either single-channel gray or interleaved
//! RGB. Masks carry one bit per pixel where `true` marks the editable region.
//! Everything here is pure and deterministic.

mod metrics;
mod ops;
mod png;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{psnr, ssim, Psnr, SSIM_C1, SSIM_C2, SSIM_MIN_SIDE, SSIM_SIGMA, SSIM_WINDOW};
pub use ops::{
    apply_mask, apply_mask_with_fill, bounding_box, composite, dilate, mask_from_item,
    resize_nearest, DEFAULT_FILL,
};
pub use png::{decode_mask_png, decode_parse_map_png, decode_png, encode_png};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImagingError {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("channel mismatch: {0} vs {1}")]
    ChannelMismatch(u8, u8),
    #[error("image must have positive width and height")]
    ZeroDimension,
    #[error("buffer holds {found} bytes, expected {expected}")]
    BufferLength { expected: usize, found: usize },
    #[error("item kind is unspecified; cannot derive a garment mask")]
    ItemUnspecified,
    #[error("image is {width}x{height}; at least {min}x{min} is required")]
    TooSmall { width: u32, height: u32, min: u32 },
    #[error("label index {0} is outside the parse-map schema")]
    InvalidLabel(u8),
    #[error("png: {0}")]
    Png(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }
}

/// An 8-bit raster, row-major, channels interleaved.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: Channels,
    data: Vec<u8>,
}

impl fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(
        width: u32,
        height: u32,
        channels: Channels,
        data: Vec<u8>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::ZeroDimension);
        }
        let expected = width as usize * height as usize * channels.count();
        if data.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant image. `value` supplies one byte per channel.
    pub fn filled(width: u32, height: u32, channels: Channels, value: &[u8]) -> Self {
        assert_eq!(
            value.len(),
            channels.count(),
            "fill value must match channel count"
        );
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * channels.count())
            .collect();
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn from_fn_rgb(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: Channels::Rgb,
            data,
        }
    }

    pub fn from_fn_gray(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: Channels::Gray,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels.count();
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let c = self.channels.count();
        let i = (y as usize * self.width as usize + x as usize) * c;
        &mut self.data[i..i + c]
    }

    /// Expands gray to RGB; RGB images are returned as-is.
    pub fn to_rgb(&self) -> RasterImage {
        match self.channels {
            Channels::Rgb => self.clone(),
            Channels::Gray => RasterImage {
                width: self.width,
                height: self.height,
                channels: Channels::Rgb,
                data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
            },
        }
    }

    /// BT.601 luma as f64 per pixel (gray images pass through).
    pub fn luma(&self) -> Vec<f64> {
        match self.channels {
            Channels::Gray => self.data.iter().map(|&v| f64::from(v)).collect(),
            Channels::Rgb => self
                .data
                .chunks_exact(3)
                .map(|p| {
                    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
                })
                .collect(),
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &RasterImage) -> Result<(), ImagingError> {
        if self.dims() != other.dims() {
            return Err(ImagingError::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        if self.channels != other.channels {
            return Err(ImagingError::ChannelMismatch(
                self.channels.count() as u8,
                other.channels.count() as u8,
            ));
        }
        Ok(())
    }
}

/// One bit per pixel; `true` marks the region a generator may repaint.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                found: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Binarizes soft probabilities: values `>= 0.5` become set.
    pub fn from_soft(width: u32, height: u32, soft: &[f32]) -> Result<Self, ImagingError> {
        Self::from_bits(width, height, soft.iter().map(|&p| p >= 0.5).collect())
    }

    /// Binarizes a gray raster at half intensity (`>= 128` is set).
    pub fn from_gray(image: &RasterImage) -> Self {
        let luma = image.luma();
        Self {
            width: image.width(),
            height: image.height(),
            bits: luma.into_iter().map(|v| v >= 127.5).collect(),
        }
    }

    /// Single-channel raster with values {0, 255}.
    pub fn to_gray(&self) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            channels: Channels::Gray,
            data: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask, ImagingError> {
        self.ensure_dims(other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask, ImagingError> {
        self.ensure_dims(other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub(crate) fn ensure_dims(&self, dims: (u32, u32)) -> Result<(), ImagingError> {
        if self.dims() != dims {
            return Err(ImagingError::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

/// Axis-aligned pixel rectangle: origin plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }
}

/// Human-parsing region labels. The discriminant is the on-wire label index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Label {
    Background = 0,
    Hair = 1,
    Face = 2,
    UpperClothes = 3,
    LowerClothes = 4,
    Dress = 5,
    Arms = 6,
    Legs = 7,
    Shoes = 8,
    Other = 9,
}

impl Label {
    pub const ALL: [Label; 10] = [
        Label::Background,
        Label::Hair,
        Label::Face,
        Label::UpperClothes,
        Label::LowerClothes,
        Label::Dress,
        Label::Arms,
        Label::Legs,
        Label::Shoes,
        Label::Other,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = ImagingError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Label::ALL
            .get(value as usize)
            .copied()
            .ok_or(ImagingError::InvalidLabel(value))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct ParseMap {
    width: u32,
    height: u32,
    labels: Vec<Label>,
}

impl fmt::Debug for ParseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParseMap")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ParseMap {
    pub fn new(width: u32, height: u32, labels: Vec<Label>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::ZeroDimension);
        }
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                found: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn uniform(width: u32, height: u32, label: Label) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Label) -> Self {
        let mut labels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    /// Reads label indices from a single-channel raster.
    pub fn from_gray(image: &RasterImage) -> Result<Self, ImagingError> {
        if image.channels() != Channels::Gray {
            return Err(ImagingError::ChannelMismatch(1, 3));
        }
        let labels = image
            .as_bytes()
            .iter()
            .map(|&v| Label::try_from(v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(image.width(), image.height(), labels)
    }

    pub fn to_gray(&self) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            channels: Channels::Gray,
            data: self.labels.iter().map(|l| l.index()).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> Label {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, label: Label) {
        self.labels[y as usize * self.width as usize + x as usize] = label;
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Mask of every pixel carrying one of `labels`.
    pub fn region(&self, labels: &[Label]) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|l| labels.contains(l)).collect(),
        }
    }
}
