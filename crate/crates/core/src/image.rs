//! Grayscale raster with an optional validity mask, plus the geometric and
//! photometric operations the registration pipeline needs.
//!
//! Coordinates: `x` is the column, `y` the row, origin at the top-left pixel
//! center, pixel centers at integer coordinates. Positive rotation angles turn
//! the +x axis toward +y (clockwise on screen, since rows grow downward).

use crate::error::{Error, Result};
use crate::sum::sum;

/// Sample coordinates closer than this to an integer are snapped to it, so
/// that permutation-exact transforms do not pick up spurious out-of-bounds
/// taps from rounding in `cos`/`sin`.
const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions {width}x{height} must be at least 1x1"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite pixel at index {i}")));
        }
        Ok(Self {
            width,
            height,
            pixels,
            mask: None,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.pixels.len() {
            return Err(Error::InvalidImage(format!(
                "mask has {} entries for {} pixels",
                mask.len(),
                self.pixels.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptySupport("mask has no set bits".into()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Geometric center in pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.is_valid_index(y * self.width + x)
    }

    #[inline]
    pub fn is_valid_index(&self, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[i])
    }

    pub fn valid_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|&&b| b).count(),
            None => self.pixels.len(),
        }
    }

    /// Values of the masked-in pixels, row-major.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_valid_index(*i))
            .map(|(_, &v)| v)
    }

    /// Applies `f` to every pixel value, keeping the mask.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let out = Image::new(self.width, self.height, self.pixels.iter().map(|&v| f(v)).collect())?;
        Ok(Image {
            mask: self.mask.clone(),
            ..out
        })
    }

    /// Bilinear sample at `(x, y)`.
    ///
    /// Returns `None` when any tap carrying nonzero weight lies outside the
    /// image or on a masked-out pixel.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let x = snap(x);
        let y = snap(y);
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        if x0 < 0.0 || y0 < 0.0 {
            return None;
        }
        let (x0, y0) = (x0 as usize, y0 as usize);
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        if x1 >= self.width || y1 >= self.height {
            return None;
        }
        if !(self.is_valid(x0, y0) && self.is_valid(x1, y0) && self.is_valid(x0, y1) && self.is_valid(x1, y1)) {
            return None;
        }
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_EPS {
        r
    } else {
        v
    }
}

/// Homogeneous 3x3 affine transform with bottom row fixed to `(0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMatrix {
    m: [[f64; 3]; 3],
}

impl AffineMatrix {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m[2] != [0.0, 0.0, 1.0] {
            return Err(Error::InvalidArgument(format!(
                "affine bottom row must be (0, 0, 1), got {:?}",
                m[2]
            )));
        }
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite affine coefficient".into()));
        }
        Ok(Self { m })
    }

    /// Builds from the two free rows `[m11 m12 m13]`, `[m21 m22 m23]`.
    pub fn from_rows(r0: [f64; 3], r1: [f64; 3]) -> Result<Self> {
        Self::new([r0, r1, [0.0, 0.0, 1.0]])
    }

    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Pure rotation about the origin, `x' = x cos θ - y sin θ`, `y' = x sin θ + y cos θ`.
    pub fn rotation(angle_deg: f64) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        Self {
            m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation by `angle_deg` about `(cx, cy)`.
    pub fn rotation_about(angle_deg: f64, cx: f64, cy: f64) -> Self {
        Self::translation(cx, cy)
            .compose(&Self::rotation(angle_deg))
            .compose(&Self::translation(-cx, -cy))
    }

    pub fn coefficients(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &AffineMatrix) -> AffineMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        out[2] = [0.0, 0.0, 1.0];
        AffineMatrix { m: out }
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    pub fn inverse(&self) -> Result<AffineMatrix> {
        let det = self.determinant();
        if det.abs() <= 1e-12 {
            return Err(Error::SingularMatrix(det));
        }
        let m = &self.m;
        let a = m[1][1] / det;
        let b = -m[0][1] / det;
        let c = -m[1][0] / det;
        let d = m[0][0] / det;
        let tx = -(a * m[0][2] + b * m[1][2]);
        let ty = -(c * m[0][2] + d * m[1][2]);
        Ok(AffineMatrix {
            m: [[a, b, tx], [c, d, ty], [0.0, 0.0, 1.0]],
        })
    }
}

/// Shifts valid pixels to zero mean and unit population standard deviation.
/// Masked-out pixels are set to 0.
pub fn normalize(img: &Image) -> Result<Image> {
    let n = img.valid_count() as f64;
    let mean = sum(img.valid_values()) / n;
    let var = sum(img.valid_values().map(|v| (v - mean) * (v - mean))) / n;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let pixels = img
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &v)| if img.is_valid_index(i) { (v - mean) / sd } else { 0.0 })
        .collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        pixels,
        mask: img.mask.clone(),
    })
}

/// Crops to the bounding square of the disc (clipped to the image) and masks
/// everything outside the disc. Pixels already masked out in the source stay
/// masked out.
pub fn circular_crop(img: &Image, cx: f64, cy: f64, radius: f64) -> Result<Image> {
    if !(radius > 0.0) || !cx.is_finite() || !cy.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "circular crop needs a finite center and positive radius, got ({cx}, {cy}) r={radius}"
        )));
    }
    let span = |c: f64, len: usize| -> Option<(usize, usize)> {
        let lo = (c - radius).ceil().max(0.0);
        let hi = (c + radius).floor().min(len as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    let outside = || Error::EmptySupport(format!("disc ({cx}, {cy}) r={radius} lies outside the image"));
    let (x0, x1) = span(cx, img.width).ok_or_else(outside)?;
    let (y0, y1) = span(cy, img.height).ok_or_else(outside)?;

    let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
    let r2 = radius * radius;
    let mut pixels = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let inside = dx * dx + dy * dy <= r2 && img.is_valid(x, y);
            mask.push(inside);
            pixels.push(if inside { img.get(x, y) } else { 0.0 });
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(outside());
    }
    Ok(Image {
        width: w,
        height: h,
        pixels,
        mask: Some(mask),
    })
}

/// The `size`×`size` window centered in the image, floor-biased when the
/// margin is odd.
pub fn center_crop(img: &Image, size: usize) -> Result<Image> {
    if size == 0 || size > img.width.min(img.height) {
        return Err(Error::InvalidArgument(format!(
            "center crop size {size} outside 1..={}",
            img.width.min(img.height)
        )));
    }
    let x0 = (img.width - size) / 2;
    let y0 = (img.height - size) / 2;
    let mut pixels = Vec::with_capacity(size * size);
    let mut mask = img.mask.as_ref().map(|_| Vec::with_capacity(size * size));
    for y in y0..y0 + size {
        let row = y * img.width;
        pixels.extend_from_slice(&img.pixels[row + x0..row + x0 + size]);
        if let (Some(out), Some(src)) = (mask.as_mut(), img.mask.as_ref()) {
            out.extend_from_slice(&src[row + x0..row + x0 + size]);
        }
    }
    if let Some(m) = &mask {
        if !m.iter().any(|&b| b) {
            return Err(Error::EmptySupport("center crop holds only masked-out pixels".into()));
        }
    }
    Ok(Image {
        width: size,
        height: size,
        pixels,
        mask,
    })
}

/// Inverse-mapped bilinear warp. Output pixels whose source support leaves
/// the image or touches a masked-out pixel get `fill` and are masked out.
pub fn warp_affine(img: &Image, m: &AffineMatrix, fill: f64) -> Result<Image> {
    let inv = m.inverse()?;
    let n = img.width * img.height;
    let mut pixels = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for y in 0..img.height {
        for x in 0..img.width {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            match img.sample_bilinear(sx, sy) {
                Some(v) => {
                    pixels.push(v);
                    mask.push(true);
                }
                None => {
                    pixels.push(fill);
                    mask.push(false);
                }
            }
        }
    }
    let all_valid = mask.iter().all(|&b| b);
    if !mask.iter().any(|&b| b) {
        return Err(Error::EmptySupport("warp maps every pixel outside the source".into()));
    }
    let out = Image::new(img.width, img.height, pixels)?;
    if all_valid && img.mask.is_none() {
        Ok(out)
    } else {
        Ok(Image {
            mask: Some(mask),
            ..out
        })
    }
}

/// Rotates about the image center with zero fill.
pub fn rotate(img: &Image, angle_deg: f64) -> Result<Image> {
    let (cx, cy) = img.center();
    warp_affine(img, &AffineMatrix::rotation_about(angle_deg, cx, cy), 0.0)
}
