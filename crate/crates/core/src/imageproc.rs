//! Pure image mathematics: grayscale conversion, the 4-neighbour Laplacian,
//! population variance, Variance-of-Laplacian and windowed SSIM.
//!
//! All arithmetic is done in `f64`. Every function here is pure and may be
//! called concurrently from any number of workers.

use serde::{Deserialize, Serialize};

use crate::error::ImageError;

/// ITU-R BT.601 luma weights.
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Row-major luminance raster with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image, validating the buffer length and the pixel range.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Dimension(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(ImageError::Dimension(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some((i, v)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=255.0).contains(*v))
        {
            return Err(ImageError::PixelRange { index: i, value: *v });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with one value (clamped to the valid range).
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value.clamp(0.0, 255.0); width * height])
    }

    /// Builds an image from a per-pixel function; outputs are clamped to `[0, 255]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 255.0));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Crops a `width x height` region whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self, ImageError> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(ImageError::Dimension(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + x0..row + x0 + width]);
        }
        Self::new(width, height, pixels)
    }

    /// Centered crop to the given size.
    pub fn center_crop(&self, width: usize, height: usize) -> Result<Self, ImageError> {
        let x0 = self.width.saturating_sub(width) / 2;
        let y0 = self.height.saturating_sub(height) / 2;
        self.crop(x0, y0, width, height)
    }
}

/// Signed Laplacian responses, same shape as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ResponseImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Local window weighting used by [`ssim`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SsimWindow {
    /// Equal weights over a `side x side` window.
    Uniform,
    /// Normalized Gaussian weights with the given standard deviation.
    Gaussian { sigma: f64 },
}

/// SSIM window and stabilization constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window_side: usize,
    pub data_range: f64,
    pub k1: f64,
    pub k2: f64,
    #[serde(default = "default_window")]
    pub window: SsimWindow,
}

fn default_window() -> SsimWindow {
    SsimWindow::Uniform
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_side: 7,
            data_range: 255.0,
            k1: 0.01,
            k2: 0.03,
            window: SsimWindow::Uniform,
        }
    }
}

impl SsimParams {
    /// Gaussian-weighted 11x11 window with sigma 1.5.
    pub fn gaussian() -> Self {
        Self {
            window_side: 11,
            window: SsimWindow::Gaussian { sigma: 1.5 },
            ..Self::default()
        }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        if self.window_side < 3 || self.window_side % 2 == 0 {
            return Err(ImageError::Params(format!(
                "window_side must be odd and >= 3, got {}",
                self.window_side
            )));
        }
        if !(self.c1() > 0.0 && self.c2() > 0.0) {
            return Err(ImageError::Params(
                "k1, k2 and data_range must give positive stabilization constants".into(),
            ));
        }
        if let SsimWindow::Gaussian { sigma } = self.window {
            if !(sigma > 0.0) {
                return Err(ImageError::Params(format!("gaussian sigma must be > 0, got {sigma}")));
            }
        }
        Ok(())
    }
}

/// BT.601 luminance from three equally sized channels.
pub fn to_grayscale(
    red: &[f64],
    green: &[f64],
    blue: &[f64],
    width: usize,
    height: usize,
) -> Result<GrayImage, ImageError> {
    let n = width * height;
    if red.len() != n || green.len() != n || blue.len() != n {
        return Err(ImageError::Dimension(format!(
            "channel lengths {}/{}/{} do not match {width}x{height}",
            red.len(),
            green.len(),
            blue.len()
        )));
    }
    let pixels = red
        .iter()
        .zip(green)
        .zip(blue)
        .map(|((r, g), b)| (LUMA_R * r + LUMA_G * g + LUMA_B * b).clamp(0.0, 255.0))
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Interleaved 8-bit RGB to luminance.
pub fn rgb8_to_gray(rgb: &[u8], width: usize, height: usize) -> Result<GrayImage, ImageError> {
    if rgb.len() != width * height * 3 {
        return Err(ImageError::Dimension(format!(
            "expected {} RGB bytes for {width}x{height}, got {}",
            width * height * 3,
            rgb.len()
        )));
    }
    let pixels = rgb
        .chunks_exact(3)
        .map(|p| {
            (LUMA_R * p[0] as f64 + LUMA_G * p[1] as f64 + LUMA_B * p[2] as f64).clamp(0.0, 255.0)
        })
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Reflect-101 index: `-1 -> 1`, `n -> n - 2`. Requires `n >= 2`.
#[inline]
fn reflect101(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Convolution with `[[0,1,0],[1,-4,1],[0,1,0]]`, reflect-101 borders.
pub fn laplacian(img: &GrayImage) -> Result<ResponseImage, ImageError> {
    let (w, h) = img.dimensions();
    if w < 3 || h < 3 {
        return Err(ImageError::Dimension(format!(
            "laplacian needs at least 3x3, got {w}x{h}"
        )));
    }
    let px = img.pixels();
    let mut values = vec![0.0; w * h];
    for y in 0..h {
        let up = reflect101(y as isize - 1, h) * w;
        let down = reflect101(y as isize + 1, h) * w;
        let row = y * w;
        for x in 0..w {
            let left = reflect101(x as isize - 1, w);
            let right = reflect101(x as isize + 1, w);
            values[row + x] =
                px[up + x] + px[down + x] + px[row + left] + px[row + right] - 4.0 * px[row + x];
        }
    }
    Ok(ResponseImage {
        width: w,
        height: h,
        values,
    })
}

/// Population variance (divides by N).
pub fn variance(values: &[f64]) -> Result<f64, ImageError> {
    if values.is_empty() {
        return Err(ImageError::Argument("variance of an empty array".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.max(0.0))
}

/// Variance of Laplacian: the frame sharpness score.
pub fn vol(img: &GrayImage) -> Result<f64, ImageError> {
    variance(&laplacian(img)?.values)
}

/// Mean SSIM over every fully-interior window position.
pub fn ssim(a: &GrayImage, b: &GrayImage, params: &SsimParams) -> Result<f64, ImageError> {
    params.validate()?;
    if a.dimensions() != b.dimensions() {
        return Err(ImageError::Dimension(format!(
            "ssim inputs differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let side = params.window_side;
    if a.width < side || a.height < side {
        return Err(ImageError::Dimension(format!(
            "image {}x{} is smaller than the {side}x{side} window",
            a.width, a.height
        )));
    }
    let score = match params.window {
        SsimWindow::Uniform => ssim_uniform(a, b, params),
        SsimWindow::Gaussian { sigma } => ssim_gaussian(a, b, params, sigma),
    };
    Ok(score.clamp(-1.0, 1.0))
}

#[inline]
fn local_score(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Integral-image accumulation of the five window moments. Values are
/// centred on mid-range before summing so the variance subtraction stays
/// well conditioned on large frames.
fn ssim_uniform(a: &GrayImage, b: &GrayImage, params: &SsimParams) -> f64 {
    const CENTER: f64 = 127.5;
    let (w, h) = a.dimensions();
    let side = params.window_side;
    let stride = w + 1;
    let mut sa = vec![0.0; stride * (h + 1)];
    let mut sb = sa.clone();
    let mut saa = sa.clone();
    let mut sbb = sa.clone();
    let mut sab = sa.clone();
    for y in 0..h {
        let (mut ra, mut rb, mut raa, mut rbb, mut rab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for x in 0..w {
            let va = a.get(x, y) - CENTER;
            let vb = b.get(x, y) - CENTER;
            ra += va;
            rb += vb;
            raa += va * va;
            rbb += vb * vb;
            rab += va * vb;
            let i = (y + 1) * stride + x + 1;
            let up = y * stride + x + 1;
            sa[i] = sa[up] + ra;
            sb[i] = sb[up] + rb;
            saa[i] = saa[up] + raa;
            sbb[i] = sbb[up] + rbb;
            sab[i] = sab[up] + rab;
        }
    }
    let rect = |s: &[f64], x: usize, y: usize| {
        s[(y + side) * stride + x + side] - s[y * stride + x + side] - s[(y + side) * stride + x]
            + s[y * stride + x]
    };
    let n = (side * side) as f64;
    let (c1, c2) = (params.c1(), params.c2());
    let mut total = 0.0;
    for y in 0..=h - side {
        for x in 0..=w - side {
            let ma = rect(&sa, x, y) / n;
            let mb = rect(&sb, x, y) / n;
            let var_a = (rect(&saa, x, y) / n - ma * ma).max(0.0);
            let var_b = (rect(&sbb, x, y) / n - mb * mb).max(0.0);
            let cov = rect(&sab, x, y) / n - ma * mb;
            total += local_score(ma + CENTER, mb + CENTER, var_a, var_b, cov, c1, c2);
        }
    }
    total / ((w - side + 1) * (h - side + 1)) as f64
}

fn gaussian_kernel(side: usize, sigma: f64) -> Vec<f64> {
    let half = (side / 2) as f64;
    let raw: Vec<f64> = (0..side)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable weighted moments over valid window positions.
fn ssim_gaussian(a: &GrayImage, b: &GrayImage, params: &SsimParams, sigma: f64) -> f64 {
    let (w, h) = a.dimensions();
    let side = params.window_side;
    let kernel = gaussian_kernel(side, sigma);
    let (ow, oh) = (w - side + 1, h - side + 1);

    // Five moment planes, filtered horizontally then vertically.
    let planes: [Box<dyn Fn(usize) -> f64>; 5] = [
        Box::new(|i| a.pixels[i]),
        Box::new(|i| b.pixels[i]),
        Box::new(|i| a.pixels[i] * a.pixels[i]),
        Box::new(|i| b.pixels[i] * b.pixels[i]),
        Box::new(|i| a.pixels[i] * b.pixels[i]),
    ];
    let filtered: Vec<Vec<f64>> = planes
        .iter()
        .map(|plane| {
            let mut horiz = vec![0.0; ow * h];
            for y in 0..h {
                for x in 0..ow {
                    horiz[y * ow + x] = kernel
                        .iter()
                        .enumerate()
                        .map(|(k, wk)| wk * plane(y * w + x + k))
                        .sum();
                }
            }
            let mut out = vec![0.0; ow * oh];
            for y in 0..oh {
                for x in 0..ow {
                    out[y * ow + x] = kernel
                        .iter()
                        .enumerate()
                        .map(|(k, wk)| wk * horiz[(y + k) * ow + x])
                        .sum();
                }
            }
            out
        })
        .collect();
    let (c1, c2) = (params.c1(), params.c2());
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ma, mb) = (filtered[0][i], filtered[1][i]);
        let var_a = (filtered[2][i] - ma * ma).max(0.0);
        let var_b = (filtered[3][i] - mb * mb).max(0.0);
        let cov = filtered[4][i] - ma * mb;
        total += local_score(ma, mb, var_a, var_b, cov, c1, c2);
    }
    total / (ow * oh) as f64
}
