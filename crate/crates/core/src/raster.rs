//! Floating-point images, PNG decoding, HSV color segmentation, and
//! Gaussian-derivative gradient fields.
//!
//! Pixel centers sit at integer coordinates: pixel `(i, j)` covers
//! `[i - 0.5, i + 0.5] x [j - 0.5, j + 0.5]`. Every module in the crate uses
//! this convention.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major image with 1 or 3 channels and samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "buffer length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidImage(format!("sample {bad} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds a single-channel image from a closure over pixel coordinates.
    /// Values are clamped into `[0, 1]`.
    pub fn from_fn_gray(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn from_fn_rgb(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self {
            width,
            height,
            channels: 3,
            data,
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel_rgb(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 3 {
            [self.data[i], self.data[i + 1], self.data[i + 2]]
        } else {
            [self.data[i]; 3]
        }
    }

    /// Copies out one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> Result<Image> {
        if c >= self.channels {
            return Err(Error::ChannelCount {
                expected: c + 1,
                got: self.channels,
            });
        }
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Ok(Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        })
    }

    /// Rec. 601 luma; single-channel images are returned unchanged.
    pub fn luminance(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Sub-image `[x0, x0 + w) x [y0, y0 + h)`, clipped to the frame.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 >= self.width || y0 >= self.height {
            return Err(Error::InvalidParameter(format!(
                "crop origin ({x0},{y0}) outside {}x{}",
                self.width, self.height
            )));
        }
        let w = w.min(self.width - x0);
        let h = h.min(self.height - y0);
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Ok(Image {
            width: w,
            height: h,
            channels: self.channels,
            data,
        })
    }

    /// Writes an 8-bit RGB (or gray) PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        let result = if self.channels == 3 {
            let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(
                self.width as u32,
                self.height as u32,
                self.data.iter().map(|v| to_u8(*v)).collect(),
            )
            .expect("buffer size checked at construction");
            buf.save_with_format(path, image::ImageFormat::Png)
        } else {
            let buf: ImageBuffer<image::Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
                self.width as u32,
                self.height as u32,
                self.data.iter().map(|v| to_u8(*v)).collect(),
            )
            .expect("buffer size checked at construction");
            buf.save_with_format(path, image::ImageFormat::Png)
        };
        result.map_err(|source| Error::ImageRead {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Decodes an 8- or 16-bit gray/RGB PNG into samples in `[0, 1]`.
/// Alpha channels are dropped.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::ImageRead {
            path: path.to_path_buf(),
            source: image::ImageError::IoError(e),
        })?
        .with_guessed_format()
        .map_err(|e| Error::ImageRead {
            path: path.to_path_buf(),
            source: image::ImageError::IoError(e),
        })?;
    let decoded = reader.decode().map_err(|source| Error::ImageRead {
        path: path.to_path_buf(),
        source,
    })?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLumaA8(b) => (
            1,
            b.into_raw().chunks_exact(2).map(|p| p[0] as f64 / 255.0).collect(),
        ),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgba8(b) => (
            3,
            b.into_raw()
                .chunks_exact(4)
                .flat_map(|p| p[..3].iter().map(|v| *v as f64 / 255.0).collect::<Vec<_>>())
                .collect(),
        ),
        DynamicImage::ImageLuma16(b) => {
            (1, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageLumaA16(b) => (
            1,
            b.into_raw().chunks_exact(2).map(|p| p[0] as f64 / 65535.0).collect(),
        ),
        DynamicImage::ImageRgb16(b) => {
            (3, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgba16(b) => (
            3,
            b.into_raw()
                .chunks_exact(4)
                .flat_map(|p| p[..3].iter().map(|v| *v as f64 / 65535.0).collect::<Vec<_>>())
                .collect(),
        ),
        other => return Err(Error::UnsupportedFormat(format!("{:?}", other.color()))),
    };
    Image::new(w, h, channels, data)
}

/// Hexcone RGB to HSV. Output channels are `(H, S, V)` with `H = angle / 360`
/// in `[0, 1)`; achromatic pixels get `H = 0`.
pub fn rgb_to_hsv(img: &Image) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            got: img.channels,
        });
    }
    let data = img
        .data
        .chunks_exact(3)
        .flat_map(|p| hsv_pixel(p[0], p[1], p[2]))
        .collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        channels: 3,
        data,
    })
}

pub(crate) fn hsv_pixel(r: f64, g: f64, b: f64) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return [0.0, s, max];
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = sector / 6.0;
    if h >= 1.0 {
        h -= 1.0;
    }
    [h, s, max]
}

/// Bounds of the red band in HSV space. The hue band wraps through zero
/// when `hue_low > hue_high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedThresholds {
    pub hue_low: f64,
    pub hue_high: f64,
    pub sat_min: f64,
    pub val_min: f64,
    pub val_max: f64,
}

impl Default for RedThresholds {
    fn default() -> Self {
        Self {
            hue_low: 0.95,
            hue_high: 0.05,
            sat_min: 0.35,
            val_min: 0.15,
            val_max: 1.0,
        }
    }
}

impl RedThresholds {
    pub fn hue_in_band(&self, h: f64) -> bool {
        if self.hue_low > self.hue_high {
            h >= self.hue_low || h <= self.hue_high
        } else {
            h >= self.hue_low && h <= self.hue_high
        }
    }

    pub fn accepts(&self, hsv: [f64; 3]) -> bool {
        self.hue_in_band(hsv[0])
            && hsv[1] >= self.sat_min
            && hsv[2] >= self.val_min
            && hsv[2] <= self.val_max
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "mask length {} != {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
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

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// The mask as a `{0, 1}` scalar image.
    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

pub fn red_mask(hsv: &Image, thresholds: &RedThresholds) -> Result<BinaryMask> {
    if hsv.channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            got: hsv.channels,
        });
    }
    let bits = hsv
        .data
        .chunks_exact(3)
        .map(|p| thresholds.accepts([p[0], p[1], p[2]]))
        .collect();
    BinaryMask::new(hsv.width, hsv.height, bits)
}

/// Soft counterpart of [`red_mask`]: chroma `S * V` where the hue and value
/// tests pass, zero elsewhere.
///
/// For a pixel mixing red with an achromatic color, chroma is linear in the
/// red coverage, so edges of this image keep their subpixel position while
/// the thresholded mask snaps them to pixel boundaries.
pub fn red_chroma(hsv: &Image, thresholds: &RedThresholds) -> Result<Image> {
    if hsv.channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            got: hsv.channels,
        });
    }
    let t = thresholds;
    let data = hsv
        .data
        .chunks_exact(3)
        .map(|p| {
            if t.hue_in_band(p[0]) && p[2] >= t.val_min && p[2] <= t.val_max {
                p[1] * p[2]
            } else {
                0.0
            }
        })
        .collect();
    Image::new(hsv.width, hsv.height, 1, data)
}

/// Per-pixel derivatives of the Gaussian-smoothed image.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub sigma: f64,
}

impl GradientField {
    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear magnitude lookup; coordinates are clamped to the frame.
    pub fn magnitude_at(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.magnitude, self.width, self.height, x, y)
    }
}

pub(crate) fn bilinear(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let at = |xx: usize, yy: usize| data[yy * width + xx];
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0))
        + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
}

/// Sampled Gaussian and Gaussian-derivative correlation kernels of radius
/// `ceil(3 sigma)`.
///
/// The smoothing kernel sums to one. The derivative kernel is `k g(k)`
/// scaled so that `sum k * d(k) = 1`, which makes it exact on linear ramps.
pub(crate) fn gaussian_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let g: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = g.iter().sum();
    let smooth: Vec<f64> = g.iter().map(|v| v / sum).collect();
    let second: f64 = (-radius..=radius)
        .zip(&g)
        .map(|(k, v)| (k * k) as f64 * v)
        .sum();
    let deriv = (-radius..=radius)
        .zip(&g)
        .map(|(k, v)| k as f64 * v / second)
        .collect();
    (smooth, deriv)
}

fn correlate_rows(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let last = width as i64 - 1;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        let dst = &mut out[y * width..(y + 1) * width];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, w) in kernel.iter().enumerate() {
                let xx = (x as i64 + j as i64 - r).clamp(0, last) as usize;
                acc += w * row[xx];
            }
            *d = acc;
        }
    }
    out
}

fn correlate_cols(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let last = height as i64 - 1;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for (j, w) in kernel.iter().enumerate() {
            let yy = (y as i64 + j as i64 - r).clamp(0, last) as usize;
            let row = &src[yy * width..(yy + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(row) {
                *d += w * s;
            }
        }
    }
    out
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

/// Gaussian smoothing of every channel with edge replication.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    check_sigma(sigma)?;
    let (smooth, _) = gaussian_kernels(sigma);
    let mut data = vec![0.0; img.data.len()];
    for c in 0..img.channels {
        let plane: Vec<f64> = img.data.iter().skip(c).step_by(img.channels).copied().collect();
        let tmp = correlate_rows(&plane, img.width, img.height, &smooth);
        let blurred = correlate_cols(&tmp, img.width, img.height, &smooth);
        for (i, v) in blurred.into_iter().enumerate() {
            data[i * img.channels + c] = v.clamp(0.0, 1.0);
        }
    }
    Ok(Image {
        data,
        ..img.clone()
    })
}

fn gradient_plane(plane: &[f64], width: usize, height: usize, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let (smooth, deriv) = gaussian_kernels(sigma);
    let gx = correlate_cols(&correlate_rows(plane, width, height, &deriv), width, height, &smooth);
    let gy = correlate_cols(&correlate_rows(plane, width, height, &smooth), width, height, &deriv);
    (gx, gy)
}

/// Gradient of `G * I` by separable Gaussian-derivative correlation.
pub fn gaussian_gradient(img: &Image, sigma: f64) -> Result<GradientField> {
    check_sigma(sigma)?;
    if img.channels != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            got: img.channels,
        });
    }
    let (gx, gy) = gradient_plane(&img.data, img.width, img.height, sigma);
    let magnitude = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    Ok(GradientField {
        width: img.width,
        height: img.height,
        gx,
        gy,
        magnitude,
        sigma,
    })
}

/// Multi-channel gradient: at each pixel the channel with the strongest
/// response supplies `(gx, gy)`.
pub fn color_gradient(img: &Image, sigma: f64) -> Result<GradientField> {
    if img.channels == 1 {
        return gaussian_gradient(img, sigma);
    }
    check_sigma(sigma)?;
    let n = img.width * img.height;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut magnitude = vec![0.0; n];
    for c in 0..img.channels {
        let plane: Vec<f64> = img.data.iter().skip(c).step_by(img.channels).copied().collect();
        let (cx, cy) = gradient_plane(&plane, img.width, img.height, sigma);
        for i in 0..n {
            let m = cx[i].hypot(cy[i]);
            if m > magnitude[i] {
                magnitude[i] = m;
                gx[i] = cx[i];
                gy[i] = cy[i];
            }
        }
    }
    Ok(GradientField {
        width: img.width,
        height: img.height,
        gx,
        gy,
        magnitude,
        sigma,
    })
}
