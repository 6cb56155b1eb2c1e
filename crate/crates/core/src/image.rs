//! Raster containers, plane access, cropping and file I/O.
//!
//! All rasters are row-major with the origin at the top-left corner and `y`
//! increasing downward.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// 8-bit, three-channel image with interleaved `R, G, B` samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage8 {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage8 {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(Error::Dimensions(format!(
                "{}x{} RGB image needs {} bytes, got {}",
                width,
                height,
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: rgb.repeat(width * height),
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixels in row-major order.
    pub fn pixels(&self) -> impl ExactSizeIterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

/// A single scalar channel. Values are kept in `f64` so iterative solvers can
/// reach residuals far below one intensity level.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::Dimensions(format!(
                "{}x{} plane needs {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Decode(format!(
                "non-finite plane value at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }
}

/// Per-pixel boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(Error::Dimensions(format!(
                "{}x{} mask needs {} bits, got {}",
                width,
                height,
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    /// Number of true pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&true)
    }

    /// Coordinates of true pixels in row-major order.
    pub fn true_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// True when every true pixel of `self` is also true in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Renders the mask as 0/255 gray bytes.
    pub fn to_gray_bytes(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    pub(crate) fn same_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::Dimensions(format!(
                "mask is {}x{}, expected {}x{}",
                self.width, self.height, width, height
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box with exclusive bottom-right corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::OutOfBounds(format!(
                "empty box ({x0},{y0},{x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// The box covering a whole `width` x `height` image.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }

    /// Intersection over union of the two boxes' pixel sets.
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let iy = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        let inter = (ix * iy) as f64;
        let union = (self.area() + other.area()) as f64 - inter;
        inter / union
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions(format!(
            "zero-dimension image {width}x{height}"
        )));
    }
    Ok(())
}

/// Splits an image into its red, green and blue planes.
pub fn split_planes(image: &RgbImage8) -> (Plane, Plane, Plane) {
    let n = image.pixel_count();
    let mut planes = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for px in image.pixels() {
        for (plane, &v) in planes.iter_mut().zip(&px) {
            plane.push(f64::from(v));
        }
    }
    let [r, g, b] = planes;
    let (w, h) = (image.width, image.height);
    (
        Plane::from_raw(w, h, r),
        Plane::from_raw(w, h, g),
        Plane::from_raw(w, h, b),
    )
}

/// Clamps to `[0, 255]` and rounds half-up.
#[inline]
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 255.0) + 0.5).floor() as u8
}

/// Reassembles three planes into an image, clamping and rounding each sample.
pub fn merge_planes(r: &Plane, g: &Plane, b: &Plane) -> Result<RgbImage8> {
    for p in [g, b] {
        if p.width != r.width || p.height != r.height {
            return Err(Error::Dimensions(format!(
                "plane sizes differ: {}x{} vs {}x{}",
                r.width, r.height, p.width, p.height
            )));
        }
    }
    let data = r
        .values
        .iter()
        .zip(&g.values)
        .zip(&b.values)
        .flat_map(|((&r, &g), &b)| [to_byte(r), to_byte(g), to_byte(b)])
        .collect();
    RgbImage8::new(r.width, r.height, data)
}

/// Copies the pixels inside `bbox`.
pub fn crop(image: &RgbImage8, bbox: BBox) -> Result<RgbImage8> {
    if !bbox.fits_within(image.width, image.height) {
        return Err(Error::OutOfBounds(format!(
            "box ({},{},{},{}) does not fit a {}x{} image",
            bbox.x0, bbox.y0, bbox.x1, bbox.y1, image.width, image.height
        )));
    }
    let mut data = Vec::with_capacity(bbox.area() * 3);
    for y in bbox.y0..bbox.y1 {
        let start = (y * image.width + bbox.x0) * 3;
        data.extend_from_slice(&image.data[start..start + bbox.width() * 3]);
    }
    RgbImage8::new(bbox.width(), bbox.height(), data)
}

/// Reads a PNG (8-bit gray, RGB or RGBA) or binary PPM (P6, maxval 255).
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage8> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes an in-memory PNG or P6 file, sniffing the format from its magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage8> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(Error::Unsupported("not a PNG or binary PPM (P6) file".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<RgbImage8> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Decode(format!("png: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageRgb8(buf) => buf.into_raw(),
        DynamicImage::ImageRgba8(buf) => buf
            .into_raw()
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().iter().flat_map(|&v| [v, v, v]).collect(),
        DynamicImage::ImageLumaA8(buf) => buf
            .into_raw()
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        other => {
            return Err(Error::Unsupported(format!(
                "png color type {:?}; only 8-bit images are accepted",
                other.color()
            )))
        }
    };
    RgbImage8::new(w, h, data)
}

fn decode_ppm(bytes: &[u8]) -> Result<RgbImage8> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Decode("malformed PPM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Decode("PPM header value out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Decode("malformed PPM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "PPM maxval {maxval}; only 8-bit (maxval 255) files are accepted"
        )));
    }
    check_dims(width, height)?;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::Decode("PPM dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::Decode("unexpected end of pixel data".into()));
    }
    RgbImage8::new(width, height, payload[..need].to_vec())
}

/// Encodes a binary PPM (P6) file.
pub fn encode_ppm(image: &RgbImage8) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

/// Encodes an 8-bit RGB PNG.
pub fn encode_png(image: &RgbImage8) -> Result<Vec<u8>> {
    png_bytes(
        &image.data,
        image.width,
        image.height,
        image::ExtendedColorType::Rgb8,
    )
}

fn png_bytes(
    data: &[u8],
    width: usize,
    height: usize,
    color: image::ExtendedColorType,
) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        data,
        width as u32,
        height as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| Error::Decode(format!("png encode: {e}")))?;
    Ok(out.into_inner())
}

/// Writes `image` as P6 when the extension is `.ppm`, PNG otherwise.
pub fn save_image(image: &RgbImage8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_ppm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let bytes = if is_ppm {
        encode_ppm(image)
    } else {
        encode_png(image)?
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a mask as an 8-bit grayscale PNG with values 0 and 255.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = png_bytes(
        &mask.to_gray_bytes(),
        mask.width,
        mask.height,
        image::ExtendedColorType::L8,
    )?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
