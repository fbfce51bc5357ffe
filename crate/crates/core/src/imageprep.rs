//! Image preprocessing and affine augmentation on in-memory rasters.
//!
//! Pixels are `f64` in height-width-channel order. Geometry uses pixel
//! coordinates centred on the image: `x` grows to the right, `y` grows
//! downward, and the centre of an `h x w` image is `((w-1)/2, (h-1)/2)`.

use std::io::Cursor;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(
                "image dimensions must be at least 1".into(),
            ));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "{channels} channels; expected 1 or 3"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "image contains non-finite values".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Single-channel image from rows of pixel values.
    pub fn from_gray_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != width) {
            return Err(Error::Shape("ragged image rows".into()));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), width, 1, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    /// Replicates a grayscale image into three identical channels.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        Self {
            height: self.height,
            width: self.width,
            channels: 3,
            data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                for ch in 0..self.channels {
                    out.set(r, c, ch, self.get(r, self.width - 1 - c, ch));
                }
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Decodes an 8-bit grayscale or RGB PNG. Palette images are expanded to
    /// RGB and alpha channels are dropped; 16-bit images are rejected.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND);
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::Format(format!("PNG decode: {e}")))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Format("PNG too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Format(format!("PNG decode: {e}")))?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Format(format!(
                "unsupported PNG bit depth {:?}",
                info.bit_depth
            )));
        }
        let (in_ch, keep) = match info.color_type {
            png::ColorType::Grayscale => (1, 1),
            png::ColorType::GrayscaleAlpha => (2, 1),
            png::ColorType::Rgb => (3, 3),
            png::ColorType::Rgba => (4, 3),
            other => {
                return Err(Error::Format(format!(
                    "unsupported PNG color type {other:?}"
                )))
            }
        };
        let (h, w) = (info.height as usize, info.width as usize);
        let mut data = Vec::with_capacity(h * w * keep);
        for r in 0..h {
            let line = &buf[r * info.line_size..r * info.line_size + w * in_ch];
            for px in line.chunks_exact(in_ch) {
                data.extend(px[..keep].iter().map(|&b| f64::from(b)));
            }
        }
        Self::new(h, w, keep, data)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode_png(&std::fs::read(path)?)
    }

    /// Encodes as an 8-bit PNG, rounding and clamping values to `[0, 255]`.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(if self.channels == 1 {
                png::ColorType::Grayscale
            } else {
                png::ColorType::Rgb
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| Error::Format(format!("PNG encode: {e}")))?;
            let bytes: Vec<u8> = self
                .data
                .iter()
                .map(|v| v.round().clamp(0.0, 255.0) as u8)
                .collect();
            writer
                .write_image_data(&bytes)
                .map_err(|e| Error::Format(format!("PNG encode: {e}")))?;
        }
        Ok(out)
    }
}

/// Canonical ImageNet channel means in blue, green, red order.
pub const IMAGENET_MEAN_BGR: [f64; 3] = [103.939, 116.779, 123.68];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PreprocessMode {
    /// `v / 127.5 - 1`, mapping `[0, 255]` onto `[-1, 1]`.
    ScaleToPlusMinusOne,
    /// Reorders RGB input to BGR and subtracts a per-channel mean
    /// (given in BGR order).
    MeanSubtract { mean_bgr: [f64; 3] },
}

impl PreprocessMode {
    pub fn imagenet_mean() -> Self {
        PreprocessMode::MeanSubtract {
            mean_bgr: IMAGENET_MEAN_BGR,
        }
    }
}

pub fn preprocess(img: &RasterImage, mode: PreprocessMode) -> Result<RasterImage> {
    if img.data.iter().any(|v| !(0.0..=255.0).contains(v)) {
        return Err(Error::InvalidArgument(
            "pixel values must lie in [0, 255]".into(),
        ));
    }
    match mode {
        PreprocessMode::ScaleToPlusMinusOne => Ok(RasterImage {
            data: img.data.iter().map(|v| v / 127.5 - 1.0).collect(),
            ..img.clone()
        }),
        PreprocessMode::MeanSubtract { mean_bgr } => {
            if img.channels != 3 {
                return Err(Error::InvalidArgument(format!(
                    "mean subtraction needs 3 channels, image has {}",
                    img.channels
                )));
            }
            let data = img
                .data
                .chunks_exact(3)
                .flat_map(|rgb| {
                    [
                        rgb[2] - mean_bgr[0],
                        rgb[1] - mean_bgr[1],
                        rgb[0] - mean_bgr[2],
                    ]
                })
                .collect();
            Ok(RasterImage {
                data,
                ..img.clone()
            })
        }
    }
}

/// Ranges augmentation parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentParams {
    /// Shear factor `s` drawn from `[-shear, shear]`, applied as `x' = x + s·y`.
    pub shear: f64,
    /// Zoom drawn from `[1 - zoom, 1 + zoom]`.
    pub zoom: f64,
    /// Rotation angle drawn from `[-rotation_degrees, rotation_degrees]`.
    pub rotation_degrees: f64,
    /// Mirror left-right with probability 0.5.
    pub horizontal_flip: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            shear: 0.1,
            zoom: 0.1,
            rotation_degrees: 10.0,
            horizontal_flip: true,
        }
    }
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            shear: 0.0,
            zoom: 0.0,
            rotation_degrees: 0.0,
            horizontal_flip: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.zoom) {
            return Err(Error::InvalidArgument(format!(
                "zoom {} outside [0, 1)",
                self.zoom
            )));
        }
        if !(self.rotation_degrees >= 0.0) || !(self.shear >= 0.0) {
            return Err(Error::InvalidArgument(
                "rotation and shear ranges must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A forward affine map about the image centre, `flip ∘ R(θ)·Sh(s)·Z(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    /// Row-major 2x2 linear part acting on `(x, y)`.
    pub linear: [[f64; 2]; 2],
    pub flip: bool,
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            flip: false,
        }
    }

    pub fn compose(rotation_degrees: f64, shear: f64, zoom: f64, flip: bool) -> Self {
        let (sin, cos) = rotation_degrees.to_radians().sin_cos();
        // R·Sh with Sh = [[1, s], [0, 1]], then scaled by z
        let linear = [
            [cos * zoom, (cos * shear - sin) * zoom],
            [sin * zoom, (sin * shear + cos) * zoom],
        ];
        Self { linear, flip }
    }

    /// Draws one transform from `params`.
    pub fn sample<R: Rng + ?Sized>(params: &AugmentParams, rng: &mut R) -> Self {
        let shear = rng.random_range(-params.shear..=params.shear);
        let zoom = rng.random_range(1.0 - params.zoom..=1.0 + params.zoom);
        let angle = rng.random_range(-params.rotation_degrees..=params.rotation_degrees);
        let flip = params.horizontal_flip && rng.random_bool(0.5);
        Self::compose(angle, shear, zoom, flip)
    }
}

/// Resamples `img` under `t` with bilinear interpolation; points that map
/// outside the source read as 0.
pub fn warp(img: &RasterImage, t: &AffineTransform) -> Result<RasterImage> {
    let [[a, b], [c, d]] = t.linear;
    let det = a * d - b * c;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::InvalidArgument(
            "affine transform is singular".into(),
        ));
    }
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let cx = (img.width as f64 - 1.0) / 2.0;
    let cy = (img.height as f64 - 1.0) / 2.0;
    let mut out = RasterImage {
        data: vec![0.0; img.data.len()],
        ..img.clone()
    };
    for r in 0..img.height {
        for col in 0..img.width {
            let mut x = col as f64 - cx;
            let y = r as f64 - cy;
            if t.flip {
                x = -x;
            }
            let sx = inv[0][0] * x + inv[0][1] * y + cx;
            let sy = inv[1][0] * x + inv[1][1] * y + cy;
            for ch in 0..img.channels {
                out.set(r, col, ch, bilinear_zero_fill(img, sy, sx, ch));
            }
        }
    }
    Ok(out)
}

fn bilinear_zero_fill(img: &RasterImage, y: f64, x: f64, ch: usize) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let mut acc = 0.0;
    let mut first = true;
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let w = wy * wx;
            if w == 0.0 {
                continue;
            }
            let (yy, xx) = (y0 + dy, x0 + dx);
            if yy < 0.0 || xx < 0.0 || yy >= img.height as f64 || xx >= img.width as f64 {
                continue;
            }
            let v = img.get(yy as usize, xx as usize, ch) * w;
            // starting from the first term keeps a lone weight-1 sample bit-exact
            acc = if first { v } else { acc + v };
            first = false;
        }
    }
    acc
}

/// Random shear, zoom, rotation and optional flip, composed into one warp.
pub fn augment<R: Rng + ?Sized>(
    img: &RasterImage,
    params: &AugmentParams,
    rng: &mut R,
) -> Result<RasterImage> {
    params.validate()?;
    warp(img, &AffineTransform::sample(params, rng))
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize(img: &RasterImage, height: usize, width: usize) -> Result<RasterImage> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(
            "target dimensions must be at least 1".into(),
        ));
    }
    if (height, width) == (img.height, img.width) {
        return Ok(img.clone());
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let mut out = RasterImage {
        height,
        width,
        channels: img.channels,
        data: vec![0.0; height * width * img.channels],
    };
    let coord = |dst: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, s - lo as f64)
    };
    for r in 0..height {
        let (y0, y1, fy) = coord(r, sy, img.height);
        for c in 0..width {
            let (x0, x1, fx) = coord(c, sx, img.width);
            for ch in 0..img.channels {
                let top = lerp(img.get(y0, x0, ch), img.get(y0, x1, ch), fx);
                let bottom = lerp(img.get(y1, x0, ch), img.get(y1, x1, ch), fx);
                out.set(r, c, ch, lerp(top, bottom, fy));
            }
        }
    }
    Ok(out)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn scale_endpoints_and_midpoint() {
        let img = RasterImage::from_gray_rows(&[[0.0, 127.5, 255.0]]).unwrap();
        let out = preprocess(&img, PreprocessMode::ScaleToPlusMinusOne).unwrap();
        assert_eq!(out.as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn mean_subtract_of_mean_image_is_zero() {
        let m = IMAGENET_MEAN_BGR;
        let img = RasterImage::new(1, 2, 3, vec![m[2], m[1], m[0], m[2], m[1], m[0]]).unwrap();
        let out = preprocess(&img, PreprocessMode::imagenet_mean()).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_subtract_reorders_to_bgr() {
        let img = RasterImage::new(1, 1, 3, vec![200.0, 100.0, 50.0]).unwrap();
        let out = preprocess(&img, PreprocessMode::MeanSubtract { mean_bgr: [0.0; 3] }).unwrap();
        assert_eq!(out.as_slice(), &[50.0, 100.0, 200.0]);
    }

    #[test]
    fn preprocess_errors() {
        let gray = RasterImage::filled(2, 2, 1, 10.0).unwrap();
        assert!(preprocess(&gray, PreprocessMode::imagenet_mean()).is_err());
        let hot = RasterImage::filled(2, 2, 1, 300.0).unwrap();
        assert!(preprocess(&hot, PreprocessMode::ScaleToPlusMinusOne).is_err());
    }

    #[test]
    fn identity_augmentation_is_exact() {
        let img =
            RasterImage::new(3, 4, 3, (0..36).map(|v| (v * 7 % 256) as f64).collect()).unwrap();
        let out = augment(&img, &AugmentParams::identity(), &mut rng::seeded(1)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn flip_only_mirrors() {
        let img = RasterImage::from_gray_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let t = AffineTransform {
            flip: true,
            ..AffineTransform::identity()
        };
        let expected = RasterImage::from_gray_rows(&[[2.0, 1.0], [4.0, 3.0]]).unwrap();
        assert_eq!(warp(&img, &t).unwrap(), expected);
        assert_eq!(img.flip_horizontal(), expected);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }

    #[test]
    fn quarter_turn_moves_delta_to_rotated_location() {
        let mut rows = vec![[0.0; 5]; 5];
        rows[0][2] = 1.0; // (x, y) = (0, -2) from the centre
        let img = RasterImage::from_gray_rows(&rows).unwrap();
        let out = warp(&img, &AffineTransform::compose(90.0, 0.0, 1.0, false)).unwrap();
        // (x, y) ↦ (x cosθ - y sinθ, x sinθ + y cosθ) = (2, 0)
        let mut peak = (0, 0, f64::MIN);
        for r in 0..5 {
            for c in 0..5 {
                if out.get(r, c, 0) > peak.2 {
                    peak = (r, c, out.get(r, c, 0));
                }
            }
        }
        assert_eq!((peak.0, peak.1), (2, 4));
        assert!((out.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn augmentation_is_deterministic_in_rng() {
        let img = RasterImage::new(6, 6, 1, (0..36).map(f64::from).collect()).unwrap();
        let p = AugmentParams::default();
        let a = augment(&img, &p, &mut rng::seeded(5)).unwrap();
        let b = augment(&img, &p, &mut rng::seeded(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width(), a.channels()), (6, 6, 1));
    }

    #[test]
    fn sampled_transforms_stay_in_range() {
        let p = AugmentParams::default();
        let mut r = rng::seeded(2);
        for _ in 0..200 {
            let t = AffineTransform::sample(&p, &mut r);
            let [[a, b], [c, d]] = t.linear;
            let det = a * d - b * c;
            // det = z² for a rotation-shear-zoom map
            assert!((0.81 - 1e-12..=1.21 + 1e-12).contains(&det), "{det}");
        }
    }

    #[test]
    fn resize_identity_constant_and_ramp() {
        let img = RasterImage::new(4, 4, 1, (0..16).map(f64::from).collect()).unwrap();
        assert_eq!(resize(&img, 4, 4).unwrap(), img);

        let constant = RasterImage::filled(2, 2, 3, 42.5).unwrap();
        let big = resize(&constant, 5, 7).unwrap();
        assert!(big.as_slice().iter().all(|&v| v == 42.5));

        // v(r, c) = 4r + c; each output pixel averages a 2x2 block
        let small = resize(&img, 2, 2).unwrap();
        assert_eq!(small.as_slice(), &[2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let img = RasterImage::new(2, 3, 3, (0..18).map(|v| f64::from(v * 13)).collect()).unwrap();
        let bytes = img.encode_png().unwrap();
        assert_eq!(RasterImage::decode_png(&bytes).unwrap(), img);
        let gray = RasterImage::from_gray_rows(&[[0.0, 255.0], [17.0, 128.0]]).unwrap();
        assert_eq!(
            RasterImage::decode_png(&gray.encode_png().unwrap()).unwrap(),
            gray
        );
        assert!(RasterImage::decode_png(b"not a png").is_err());
    }
}
