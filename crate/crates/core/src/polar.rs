//! Polar resampling around a center. A rotation of the source image by a
//! multiple of the angular step becomes a cyclic shift of the angle rows.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Angle-major polar grid: `values[i * radial + j]` is the sample at angle
/// index `i` and radius index `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    angular: usize,
    radial: usize,
    max_radius: f64,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl PolarImage {
    /// Builds a grid from raw samples. Invalid samples are stored as 0.
    pub fn from_parts(
        angular: usize,
        radial: usize,
        max_radius: f64,
        mut values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        check_grid(angular, radial, max_radius)?;
        let n = angular * radial;
        if values.len() != n || valid.len() != n {
            return Err(Error::InvalidArgument(format!(
                "polar grid {angular}x{radial} needs {n} samples, got {} values and {} flags",
                values.len(),
                valid.len()
            )));
        }
        for (v, &ok) in values.iter_mut().zip(&valid) {
            if !ok {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::InvalidArgument("non-finite valid polar sample".into()));
            }
        }
        Ok(Self {
            angular,
            radial,
            max_radius,
            values,
            valid,
        })
    }

    /// A grid with every sample valid.
    pub fn from_values(angular: usize, radial: usize, max_radius: f64, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::from_parts(angular, radial, max_radius, values, valid)
    }

    pub fn angular(&self) -> usize {
        self.angular
    }

    pub fn radial(&self) -> usize {
        self.radial
    }

    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    pub fn angular_step_deg(&self) -> f64 {
        360.0 / self.angular as f64
    }

    pub fn radius(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * (self.max_radius / self.radial as f64)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.radial + j]
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.radial + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.radial..(i + 1) * self.radial]
    }

    pub fn row_valid(&self, i: usize) -> &[bool] {
        &self.valid[i * self.radial..(i + 1) * self.radial]
    }

    pub fn is_fully_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Applies `f` to every valid sample.
    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| if ok { f(v) } else { 0.0 })
            .collect();
        Self { values, ..self.clone() }
    }

    /// Writes `angular` rows of `radial` cells; invalid samples are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for i in 0..self.angular {
            let cells = (0..self.radial).map(|j| {
                if self.is_valid(i, j) {
                    self.get(i, j).to_string()
                } else {
                    String::new()
                }
            });
            w.write_record(cells)?;
        }
        w.flush().map_err(|e| Error::io("<polar csv>", e))?;
        Ok(())
    }
}

fn check_grid(angular: usize, radial: usize, max_radius: f64) -> Result<()> {
    if angular == 0 || radial == 0 {
        return Err(Error::InvalidArgument(format!(
            "polar grid {angular}x{radial} must have at least one sample per axis"
        )));
    }
    if !(max_radius > 0.0 && max_radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "max radius {max_radius} must be positive"
        )));
    }
    Ok(())
}

/// `min(width, height) / 2 - 1`.
pub fn default_max_radius(img: &Image) -> f64 {
    img.width().min(img.height()) as f64 / 2.0 - 1.0
}

/// Samples `img` on an `angular`×`radial` polar grid around `(cx, cy)`.
///
/// Angle `i` is `i * 360 / angular` degrees measured from +x toward +y; radius
/// `j` is `(j + 0.5) * max_radius / radial`. Samples whose bilinear support
/// leaves the image or touches a masked-out pixel are invalid.
pub fn to_polar(img: &Image, cx: f64, cy: f64, angular: usize, radial: usize, max_radius: f64) -> Result<PolarImage> {
    check_grid(angular, radial, max_radius)?;
    let step = 360.0 / angular as f64;
    let dr = max_radius / radial as f64;
    let mut values = vec![0.0; angular * radial];
    let mut valid = vec![false; angular * radial];
    values
        .par_chunks_mut(radial)
        .zip(valid.par_chunks_mut(radial))
        .enumerate()
        .for_each(|(i, (vals, oks))| {
            let (s, c) = (i as f64 * step).to_radians().sin_cos();
            for j in 0..radial {
                let r = (j as f64 + 0.5) * dr;
                if let Some(v) = img.sample_bilinear(cx + r * c, cy + r * s) {
                    vals[j] = v;
                    oks[j] = true;
                }
            }
        });
    if !valid.iter().any(|&v| v) {
        return Err(Error::EmptySupport(format!(
            "every polar sample around ({cx}, {cy}) with max radius {max_radius} is invalid"
        )));
    }
    Ok(PolarImage {
        angular,
        radial,
        max_radius,
        values,
        valid,
    })
}

/// Output row `i` is input row `(i - k) mod S`.
pub fn cyclic_shift(p: &PolarImage, k: i64) -> PolarImage {
    let s = p.angular;
    let r = p.radial;
    let k = k.rem_euclid(s as i64) as usize;
    let mut values = Vec::with_capacity(s * r);
    let mut valid = Vec::with_capacity(s * r);
    for i in 0..s {
        let src = (i + s - k) % s;
        values.extend_from_slice(p.row(src));
        valid.extend_from_slice(p.row_valid(src));
    }
    PolarImage {
        values,
        valid,
        ..p.clone()
    }
}
