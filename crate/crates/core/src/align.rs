//! End-to-end rotation registration of one image against a reference:
//! circular crop, intensity normalization, polar resampling, shift search.

use crate::correlation::{estimate_rotation, estimate_rotation_pruned, PruneStats};
use crate::error::Result;
use crate::image::{circular_crop, normalize, rotate, Image};
use crate::polar::{to_polar, PolarImage};

pub const DEFAULT_ANGULAR: usize = 720;
pub const DEFAULT_RADIAL: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub angular: usize,
    pub radial: usize,
    /// Defaults to the crop radius minus 2, which keeps every bilinear tap
    /// of the outermost ring inside the disc.
    pub max_radius: Option<f64>,
    pub pruned: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            angular: DEFAULT_ANGULAR,
            radial: DEFAULT_RADIAL,
            max_radius: None,
            pruned: false,
        }
    }
}

/// An image after crop and normalization, with its polar grid.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub normalized: Image,
    pub polar: PolarImage,
}

/// Crops to the largest centered disc, normalizes, and resamples to polar.
pub fn prepare(img: &Image, cfg: &AlignConfig) -> Result<Prepared> {
    let (cx, cy) = img.center();
    let radius = img.width().min(img.height()) as f64 / 2.0;
    let cropped = circular_crop(img, cx, cy, radius)?;
    let normalized = normalize(&cropped)?;
    let (pcx, pcy) = normalized.center();
    let max_radius = cfg.max_radius.unwrap_or(radius - 2.0);
    let polar = to_polar(&normalized, pcx, pcy, cfg.angular, cfg.radial, max_radius)?;
    Ok(Prepared { normalized, polar })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub shift: usize,
    /// Rotation that carries the reference onto the candidate.
    pub angle_deg: f64,
    pub peak_ncc: f64,
    /// Per-shift scores; `None` for shifts the pruned search abandoned.
    pub scores: Vec<Option<f64>>,
    pub op_counts: Option<PruneStats>,
    /// The normalized candidate rotated back onto the reference.
    pub aligned: Image,
}

pub fn align_prepared(reference: &Prepared, cand: &Prepared, pruned: bool) -> Result<Alignment> {
    let (shift, angle_deg, peak_ncc, scores, op_counts) = if pruned {
        let est = estimate_rotation_pruned(&reference.polar, &cand.polar)?;
        (est.shift, est.angle_deg, est.peak_ncc, est.completed, Some(est.stats))
    } else {
        let est = estimate_rotation(&reference.polar, &cand.polar)?;
        let scores = est.curve.scores.iter().map(|&s| Some(s)).collect();
        (est.shift, est.angle_deg, est.peak_ncc, scores, None)
    };
    let aligned = rotate(&cand.normalized, -angle_deg)?;
    Ok(Alignment {
        shift,
        angle_deg,
        peak_ncc,
        scores,
        op_counts,
        aligned,
    })
}

pub fn align(reference: &Image, cand: &Image, cfg: &AlignConfig) -> Result<Alignment> {
    let r = prepare(reference, cfg)?;
    let c = prepare(cand, cfg)?;
    align_prepared(&r, &c, cfg.pruned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_filament, FilamentSpec};

    fn filament(orientation_deg: f64) -> Image {
        synth_filament(&FilamentSpec {
            size: 96,
            half_length: 18.0,
            offset: 20.0,
            orientation_deg,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn default_radius_gives_full_validity() {
        let img = filament(10.0);
        let turned = rotate(&img, 37.0).unwrap();
        let cfg = AlignConfig {
            angular: 90,
            radial: 24,
            ..Default::default()
        };
        assert!(prepare(&img, &cfg).unwrap().polar.is_fully_valid());
        assert!(prepare(&turned, &cfg).unwrap().polar.is_fully_valid());
    }

    #[test]
    fn recovers_rotation_both_routes() {
        let reference = filament(10.0);
        let cand = rotate(&reference, 40.0).unwrap();
        for pruned in [false, true] {
            let cfg = AlignConfig {
                angular: 180,
                radial: 40,
                pruned,
                ..Default::default()
            };
            let a = align(&reference, &cand, &cfg).unwrap();
            assert_eq!(a.angle_deg, 40.0);
            assert!(a.peak_ncc > 0.9);
            assert_eq!(a.op_counts.is_some(), pruned);
            assert_eq!(a.scores.len(), 180);
        }
    }
}
