//! Image containers and the pixel-level primitives shared by every stage.
//!
//! Coordinates follow the pixel-centre convention: pixel `(x, y)` sits at the
//! real coordinate `(x, y)`, so the valid sampling domain of a `w×h` image is
//! `[0, w-1] × [0, h-1]`.

use std::path::Path;

use thiserror::Error;

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} pixels, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("sample ({x}, {y}) outside the {width}x{height} sampling domain")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("luminance value {0} outside [0, 1]")]
    LuminanceRange(f64),
    #[error("image i/o: {0}")]
    Io(#[from] image::ImageError),
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyImage { width, height });
    }
    let expected = width as usize * height as usize;
    if len != expected {
        return Err(RasterError::BufferSize {
            expected,
            actual: len,
        });
    }
    Ok(())
}

/// 8-bit RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self, RasterError> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, RasterError> {
        Self::new(width, height, vec![rgb; width as usize * height as usize])
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = rgb;
    }

    /// Copies the `w×h` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<ImageBuffer, RasterError> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(RasterError::OutOfBounds {
                x: (x0 + w) as f64,
                y: (y0 + h) as f64,
                width: self.width,
                height: self.height,
            });
        }
        ImageBuffer::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    /// Reads an 8-bit PNG or binary PPM. Alpha and 16-bit inputs are reduced to 8-bit RGB.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let rgb = image::open(path)?.into_rgb8();
        let (width, height) = rgb.dimensions();
        let pixels = rgb.pixels().map(|p| p.0).collect();
        Self::new(width, height, pixels)
    }

    fn to_rgb8(&self) -> image::RgbImage {
        let raw = self.pixels.iter().flatten().copied().collect();
        image::RgbImage::from_raw(self.width, self.height, raw).expect("buffer sized by invariant")
    }

    /// Writes the image, choosing PNG or PPM (P6, maxval 255) from the extension.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        let is_ppm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if is_ppm {
            let mut file = std::io::BufWriter::new(
                std::fs::File::create(path).map_err(image::ImageError::IoError)?,
            );
            let encoder = image::codecs::pnm::PnmEncoder::new(&mut file)
                .with_subtype(image::codecs::pnm::PnmSubtype::Pixmap(
                    image::codecs::pnm::SampleEncoding::Binary,
                ));
            let rgb = self.to_rgb8();
            image::ImageEncoder::write_image(
                encoder,
                rgb.as_raw(),
                self.width,
                self.height,
                image::ExtendedColorType::Rgb8,
            )?;
            Ok(())
        } else {
            self.to_rgb8()
                .save_with_format(path, image::ImageFormat::Png)?;
            Ok(())
        }
    }
}

/// Real-valued luminance raster, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, RasterError> {
        check_dims(width, height, values.len())?;
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(RasterError::LuminanceRange(bad));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> f64,
    ) -> Result<Self, RasterError> {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Photometric negative, `1 - v`.
    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }
}

pub fn to_grayscale(img: &ImageBuffer) -> GrayImage {
    let values = img
        .pixels
        .iter()
        .map(|&[r, g, b]| {
            let v = (LUMA_WEIGHTS[0] * r as f64
                + LUMA_WEIGHTS[1] * g as f64
                + LUMA_WEIGHTS[2] * b as f64)
                / 255.0;
            v.clamp(0.0, 1.0)
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        values,
    }
}

/// Summed-area table with a zero first row and column.
#[derive(Clone, Debug)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    sums: Vec<f64>,
}

impl IntegralImage {
    /// Width and height of the source image (the table is one larger in each direction).
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn tap(&self, x: u32, y: u32) -> f64 {
        self.sums[y as usize * (self.width as usize + 1) + x as usize]
    }

    /// Sum over `[x0, x1) × [y0, y1)`; empty or inverted rectangles sum to zero.
    #[inline]
    pub fn rect_sum(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> f64 {
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        self.tap(x1, y1) - self.tap(x0, y1) - self.tap(x1, y0) + self.tap(x0, y0)
    }

    /// Rectangle sum with signed bounds clipped to the image.
    #[inline]
    pub fn rect_sum_clipped(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        let cx = |v: i64| v.clamp(0, self.width as i64) as u32;
        let cy = |v: i64| v.clamp(0, self.height as i64) as u32;
        self.rect_sum(cx(x0), cy(y0), cx(x1), cy(y1))
    }
}

pub fn integral(img: &GrayImage) -> IntegralImage {
    let w = img.width as usize;
    let h = img.height as usize;
    let stride = w + 1;
    let mut sums = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += img.values[y * w + x];
            sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
        }
    }
    IntegralImage {
        width: img.width,
        height: img.height,
        sums,
    }
}

/// Bilinear interpolation over the pixel-centre domain `[0, w-1] × [0, h-1]`.
pub trait Bilinear {
    type Value;

    fn sample_bilinear(&self, x: f64, y: f64) -> Result<Self::Value, RasterError>;
}

/// Resolves the four taps and weights for a bilinear sample.
#[inline]
fn bilinear_taps(
    width: u32,
    height: u32,
    x: f64,
    y: f64,
) -> Result<(usize, usize, usize, usize, f64, f64), RasterError> {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    if !(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y) {
        return Err(RasterError::OutOfBounds {
            x,
            y,
            width,
            height,
        });
    }
    let x0 = (x.floor() as usize).min(width as usize - 1);
    let y0 = (y.floor() as usize).min(height as usize - 1);
    let x1 = (x0 + 1).min(width as usize - 1);
    let y1 = (y0 + 1).min(height as usize - 1);
    Ok((x0, y0, x1, y1, x - x0 as f64, y - y0 as f64))
}

#[inline]
fn blend(v00: f64, v10: f64, v01: f64, v11: f64, fx: f64, fy: f64) -> f64 {
    let top = v00 + (v10 - v00) * fx;
    let bottom = v01 + (v11 - v01) * fx;
    top + (bottom - top) * fy
}

impl Bilinear for GrayImage {
    type Value = f64;

    fn sample_bilinear(&self, x: f64, y: f64) -> Result<f64, RasterError> {
        let (x0, y0, x1, y1, fx, fy) = bilinear_taps(self.width, self.height, x, y)?;
        let w = self.width as usize;
        let v = |xx: usize, yy: usize| self.values[yy * w + xx];
        Ok(blend(v(x0, y0), v(x1, y0), v(x0, y1), v(x1, y1), fx, fy))
    }
}

impl Bilinear for ImageBuffer {
    type Value = [f64; 3];

    fn sample_bilinear(&self, x: f64, y: f64) -> Result<[f64; 3], RasterError> {
        let (x0, y0, x1, y1, fx, fy) = bilinear_taps(self.width, self.height, x, y)?;
        let w = self.width as usize;
        let p = |xx: usize, yy: usize| self.pixels[yy * w + xx];
        let (a, b, c, d) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
        let mut out = [0.0; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            *o = blend(
                a[ch] as f64,
                b[ch] as f64,
                c[ch] as f64,
                d[ch] as f64,
                fx,
                fy,
            );
        }
        Ok(out)
    }
}

/// One boolean per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, RasterError> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
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

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dimensions() == other.dimensions()
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Writes the mask as an 8-bit gray PNG with 0/255 values.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let raw = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(self.width, self.height, raw)
            .expect("buffer sized by invariant")
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let gray = image::open(path)?.into_luma8();
        let (w, h) = gray.dimensions();
        Self::new(w, h, gray.as_raw().iter().map(|&v| v >= 128).collect())
    }
}

/// Grows the mask with a 3×3 square structuring element, `iterations` times.
pub fn dilate(mask: &BinaryMask, iterations: u32) -> BinaryMask {
    let mut current = mask.clone();
    let (w, h) = (mask.width as usize, mask.height as usize);
    for _ in 0..iterations {
        // Separable: a 3×3 square is a horizontal then a vertical 3-run.
        let mut horiz = vec![false; w * h];
        for y in 0..h {
            let row = &current.bits[y * w..(y + 1) * w];
            for x in 0..w {
                horiz[y * w + x] = row[x.saturating_sub(1)..(x + 2).min(w)].iter().any(|b| *b);
            }
        }
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = (y.saturating_sub(1)..(y + 2).min(h)).any(|yy| horiz[yy * w + x]);
            }
        }
        if out == current.bits {
            break;
        }
        current.bits = out;
    }
    current
}

/// Writes per-pixel counts as a 16-bit gray PNG, saturating at `u16::MAX`.
pub fn write_counts_png(
    width: u32,
    height: u32,
    counts: &[u32],
    path: impl AsRef<Path>,
) -> Result<(), RasterError> {
    check_dims(width, height, counts.len())?;
    let raw: Vec<u16> = counts.iter().map(|&c| c.min(u16::MAX as u32) as u16).collect();
    image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(width, height, raw)
        .expect("buffer sized by check_dims")
        .save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
