//! Raster images, PNG/JPEG codecs and pixel-range conversions.

use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::PngEncoder;
use image::{ColorType, DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};

/// An 8-bit raster image with interleaved channels, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Channel(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// An image with every pixel set to `pixel` (whose length gives the
    /// channel count).
    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Result<Self> {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self::new(width, height, pixel.len(), data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        let stride = self.width * self.channels;
        &self.data[y * stride..(y + 1) * stride]
    }

    /// Swaps the x and y axes.
    pub fn transpose(&self) -> Self {
        let c = self.channels;
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.extend_from_slice(self.pixel(x, y));
            }
        }
        debug_assert_eq!(data.len(), self.width * self.height * c);
        Self {
            width: self.height,
            height: self.width,
            channels: c,
            data,
        }
    }

    fn color_type(&self) -> ExtendedColorType {
        if self.channels == 1 {
            ExtendedColorType::L8
        } else {
            ExtendedColorType::Rgb8
        }
    }
}

fn sniff_container(bytes: &[u8]) -> Option<(&'static str, ImageFormat)> {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A]) {
        Some(("PNG", ImageFormat::Png))
    } else if bytes.starts_with(&[0xFF, 0xD8]) {
        Some(("JPEG", ImageFormat::Jpeg))
    } else {
        None
    }
}

/// Decodes a PNG or JPEG stream. Grayscale inputs yield one channel, all
/// other color types are converted to 8-bit RGB (alpha is dropped).
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let (container, format) = sniff_container(bytes).ok_or_else(|| Error::Decode {
        container: "unknown",
        reason: "stream is neither PNG nor JPEG".into(),
    })?;
    let decoded =
        image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
            container,
            reason: e.to_string(),
        })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let gray = matches!(
        decoded.color(),
        ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16
    );
    if gray {
        ImageBuffer::new(w, h, 1, decoded.into_luma8().into_raw())
    } else {
        ImageBuffer::new(w, h, 3, decoded.into_rgb8().into_raw())
    }
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(
            img.data(),
            img.width() as u32,
            img.height() as u32,
            img.color_type(),
        )
        .map_err(|e| Error::Encode {
            container: "PNG",
            reason: e.to_string(),
        })?;
    Ok(out)
}

/// Encodes a baseline JPEG at the given codec quality (1..=100).
pub fn encode_jpeg(img: &ImageBuffer, quality: u8) -> Result<Vec<u8>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Param(format!(
            "JPEG quality must be within 1..=100, got {quality}"
        )));
    }
    let mut out = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut out, quality)
        .write_image(
            img.data(),
            img.width() as u32,
            img.height() as u32,
            img.color_type(),
        )
        .map_err(|e| Error::Encode {
            container: "JPEG",
            reason: e.to_string(),
        })?;
    Ok(out.into_inner())
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_bytes(path, &encode_png(img)?)
}

pub fn write_jpeg(path: &Path, img: &ImageBuffer, quality: u8) -> Result<()> {
    write_bytes(path, &encode_jpeg(img, quality)?)
}

/// Writes PNG or JPEG (quality 95) depending on the file extension.
pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("jpg") | Some("jpeg") => write_jpeg(path, img, 95),
        _ => write_png(path, img),
    }
}

/// Copies the centered `w`×`h` window; offsets are floor((W-w)/2) and
/// floor((H-h)/2).
pub fn center_crop(img: &ImageBuffer, w: usize, h: usize) -> Result<ImageBuffer> {
    if w == 0 || h == 0 || w > img.width() || h > img.height() {
        return Err(Error::Dimension(format!(
            "cannot crop {w}x{h} from a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let x0 = (img.width() - w) / 2;
    let y0 = (img.height() - h) / 2;
    let c = img.channels();
    let mut data = Vec::with_capacity(w * h * c);
    for y in y0..y0 + h {
        let row = img.row(y);
        data.extend_from_slice(&row[x0 * c..(x0 + w) * c]);
    }
    ImageBuffer::new(w, h, c, data)
}

/// Rec. 601 luma, `0.299 R + 0.587 G + 0.114 B` rounded half-up.
/// One-channel input is returned unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| {
            // Integer arithmetic keeps the half-up rounding exact.
            let weighted = 299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]);
            ((weighted + 500) / 1000) as u8
        })
        .collect();
    ImageBuffer {
        width: img.width(),
        height: img.height(),
        channels: 1,
        data,
    }
}

/// An image with real samples in [-1, 1], interleaved like [`ImageBuffer`].
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl NormalizedImage {
    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn flip_horizontal(&mut self) {
        let (w, c) = (self.width, self.channels);
        for row in self.data.chunks_exact_mut(w * c) {
            for x in 0..w / 2 {
                for k in 0..c {
                    row.swap(x * c + k, (w - 1 - x) * c + k);
                }
            }
        }
    }

    pub fn flip_vertical(&mut self) {
        let stride = self.width * self.channels;
        for y in 0..self.height / 2 {
            let (top, bottom) = self.data.split_at_mut((self.height - 1 - y) * stride);
            top[y * stride..(y + 1) * stride].swap_with_slice(&mut bottom[..stride]);
        }
    }
}

const HALF_RANGE: f32 = 127.5;

/// Maps samples with `s / 127.5 - 1`, so 0 → -1 and 255 → +1.
pub fn normalize(img: &ImageBuffer) -> NormalizedImage {
    NormalizedImage {
        width: img.width(),
        height: img.height(),
        channels: img.channels(),
        data: img
            .data()
            .iter()
            .map(|&s| f32::from(s) / HALF_RANGE - 1.0)
            .collect(),
    }
}

/// Inverse of [`normalize`]: rounds half-up and clamps to [0, 255].
pub fn denormalize(img: &NormalizedImage) -> ImageBuffer {
    let data = img
        .data
        .iter()
        .map(|&s| ((s + 1.0) * HALF_RANGE + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    ImageBuffer {
        width: img.width,
        height: img.height,
        channels: img.channels,
        data,
    }
}

/// Converts to the `image` crate's representation, mostly for callers that
/// want its resampling or drawing routines.
pub fn to_dynamic(img: &ImageBuffer) -> DynamicImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    if img.channels() == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, img.data().to_vec()).unwrap())
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, img.data().to_vec()).unwrap())
    }
}
