//! Linear-light RGB images, sRGB transfer functions and deterministic PNG
//! writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: file not found")]
    NotFound { path: String },
    #[error("{path}: {message}")]
    Decode { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: png encoding failed: {message}")]
    Encode { path: String, message: String },
    #[error("image is empty")]
    Empty,
}

pub type Rgb = [f64; 3];

#[inline]
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
pub fn linear_to_srgb(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= 0.0031308 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn srgb8_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| std::array::from_fn(|i| srgb_to_linear(i as f64 / 255.0)))
}

/// Decodes an 8-bit sRGB code value to linear light.
#[inline]
pub fn decode_srgb8(v: u8) -> f64 {
    srgb8_lut()[v as usize]
}

/// Encodes linear light to an 8-bit sRGB code value.
#[inline]
pub fn encode_srgb8(c: f64) -> u8 {
    (linear_to_srgb(c) * 255.0).round() as u8
}

/// Row-major linear RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        LinearImage { width, height, pixels: vec![fill; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        LinearImage { width, height, pixels }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let img = open_image(path)?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        let pixels = match img {
            image::DynamicImage::ImageRgb16(_)
            | image::DynamicImage::ImageRgba16(_)
            | image::DynamicImage::ImageLuma16(_)
            | image::DynamicImage::ImageLumaA16(_) => img
                .to_rgb16()
                .pixels()
                .map(|p| p.0.map(|c| srgb_to_linear(c as f64 / 65535.0)))
                .collect(),
            _ => img.to_rgb8().pixels().map(|p| p.0.map(decode_srgb8)).collect(),
        };
        Ok(LinearImage { width, height, pixels })
    }

    /// Encodes to 8-bit sRGB and writes a PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let mut data = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            data.extend(p.map(encode_srgb8));
        }
        write_png(path.as_ref(), self.width, self.height, png::ColorType::Rgb, png::BitDepth::Eight, None, &data)
    }
}

/// Per-pixel foreground alpha in [0,1]. Taken from the alpha channel when
/// present, otherwise from luminance.
#[derive(Debug, Clone)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub alpha: Vec<f32>,
}

impl Mask {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let img = open_image(path)?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let alpha = if img.color().has_alpha() {
            img.to_luma_alpha32f().pixels().map(|p| p.0[1]).collect()
        } else {
            img.to_luma32f().pixels().map(|p| p.0[0]).collect()
        };
        Ok(Mask { width, height, alpha })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.alpha[y * self.width + x]
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage, ImageError> {
    if !path.exists() {
        return Err(ImageError::NotFound { path: path.display().to_string() });
    }
    image::ImageReader::open(path)
        .map_err(|e| ImageError::Io { path: path.display().to_string(), source: e })?
        .with_guessed_format()
        .map_err(|e| ImageError::Io { path: path.display().to_string(), source: e })?
        .decode()
        .map_err(|e| ImageError::Decode { path: path.display().to_string(), message: e.to_string() })
}

/// Bilinear sample at continuous pixel coordinates (centres at +0.5) with
/// clamp-to-edge addressing.
#[inline]
pub fn sample_bilinear(image: &LinearImage, pixel: &Vec2) -> Rgb {
    let x = pixel.x - 0.5;
    let y = pixel.y - 0.5;
    let x0f = x.floor();
    let y0f = y.floor();
    let fx = x - x0f;
    let fy = y - y0f;
    let max_x = image.width as i64 - 1;
    let max_y = image.height as i64 - 1;
    let cx = |v: i64| v.clamp(0, max_x) as usize;
    let cy = |v: i64| v.clamp(0, max_y) as usize;
    let (x0, y0) = (x0f as i64, y0f as i64);
    let p00 = image.get(cx(x0), cy(y0));
    let p10 = image.get(cx(x0 + 1), cy(y0));
    let p01 = image.get(cx(x0), cy(y0 + 1));
    let p11 = image.get(cx(x0 + 1), cy(y0 + 1));
    std::array::from_fn(|c| {
        let top = p00[c] + (p10[c] - p00[c]) * fx;
        let bottom = p01[c] + (p11[c] - p01[c]) * fx;
        top + (bottom - top) * fy
    })
}

pub(crate) fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    palette: Option<&[u8]>,
    data: &[u8],
) -> Result<(), ImageError> {
    let io_err = |e: std::io::Error| ImageError::Io { path: path.display().to_string(), source: e };
    let enc_err = |e: png::EncodingError| ImageError::Encode { path: path.display().to_string(), message: e.to_string() };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    {
        let mut encoder = png::Encoder::new(&mut w, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(depth);
        if let Some(p) = palette {
            encoder.set_palette(p.to_vec());
        }
        let mut writer = encoder.write_header().map_err(enc_err)?;
        writer.write_image_data(data).map_err(enc_err)?;
        writer.finish().map_err(enc_err)?;
    }
    w.flush().map_err(io_err)
}

/// 16-bit grayscale PNG from values in [0,1] (clamped).
pub fn save_gray16(path: impl AsRef<Path>, width: usize, height: usize, values: impl Iterator<Item = f64>) -> Result<(), ImageError> {
    let mut data = Vec::with_capacity(width * height * 2);
    for v in values {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        data.extend(q.to_be_bytes());
    }
    write_png(path.as_ref(), width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, None, &data)
}

pub fn save_gray16_raw(path: impl AsRef<Path>, width: usize, height: usize, values: &[u16]) -> Result<(), ImageError> {
    let data: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_png(path.as_ref(), width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, None, &data)
}

/// 1-bit grayscale PNG (true = white).
pub fn save_bitmask(path: impl AsRef<Path>, width: usize, height: usize, bits: impl Iterator<Item = bool>) -> Result<(), ImageError> {
    let stride = width.div_ceil(8);
    let mut data = vec![0u8; stride * height];
    for (i, b) in bits.enumerate() {
        if b {
            let (x, y) = (i % width, i / width);
            data[y * stride + x / 8] |= 0x80 >> (x % 8);
        }
    }
    write_png(path.as_ref(), width, height, png::ColorType::Grayscale, png::BitDepth::One, None, &data)
}

/// 8-bit indexed PNG.
pub fn save_indexed(path: impl AsRef<Path>, width: usize, height: usize, palette: &[[u8; 3]], indices: &[u8]) -> Result<(), ImageError> {
    let flat: Vec<u8> = palette.iter().flatten().copied().collect();
    write_png(path.as_ref(), width, height, png::ColorType::Indexed, png::BitDepth::Eight, Some(&flat), indices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_round_trips_all_codes() {
        for v in 0..=255u8 {
            assert_eq!(encode_srgb8(decode_srgb8(v)), v);
        }
    }

    #[test]
    fn constant_image_samples_constant() {
        let img = LinearImage::new(5, 3, [0.2, 0.4, 0.6]);
        for &(x, y) in &[(0.0, 0.0), (2.3, 1.7), (5.0, 3.0), (-4.0, 10.0)] {
            assert_eq!(sample_bilinear(&img, &Vec2::new(x, y)), [0.2, 0.4, 0.6]);
        }
    }

    #[test]
    fn midpoint_between_black_and_white() {
        let img = LinearImage::from_fn(2, 1, |x, _| if x == 0 { [0.0; 3] } else { [1.0; 3] });
        assert_eq!(sample_bilinear(&img, &Vec2::new(1.0, 0.5)), [0.5; 3]);
    }

    #[test]
    fn pixel_centres_are_nodes() {
        let img = LinearImage::from_fn(4, 3, |x, y| [x as f64 * 0.1, y as f64 * 0.2, 0.5]);
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(sample_bilinear(&img, &Vec2::new(x as f64 + 0.5, y as f64 + 0.5)), img.get(x, y));
            }
        }
    }

    #[test]
    fn png_writers_round_trip_through_decoder() {
        let dir = tempfile::tempdir().unwrap();
        let img = LinearImage::from_fn(3, 2, |x, y| [decode_srgb8((x * 40) as u8), decode_srgb8((y * 90) as u8), decode_srgb8(7)]);
        let p = dir.path().join("c.png");
        img.save_png(&p).unwrap();
        assert_eq!(LinearImage::load(&p).unwrap(), img);

        let p = dir.path().join("m.png");
        save_bitmask(&p, 10, 2, (0..20).map(|i| i % 3 == 0)).unwrap();
        let mask = Mask::load(&p).unwrap();
        for i in 0..20 {
            assert_eq!(mask.alpha[i] > 0.5, i % 3 == 0);
        }
    }

    #[test]
    fn missing_image() {
        assert!(matches!(LinearImage::load("/no/such.png"), Err(ImageError::NotFound { .. })));
    }
}
