//! Normalized cross-correlation, rotation score curves over cyclic shifts of a
//! polar grid, and an early-abandoning search that returns the same argmax.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polar::PolarImage;
use crate::sum::{sum, CompensatedSum};

/// Raw correlations further than this outside [-1, 1] indicate a bug rather
/// than rounding.
const RANGE_GUARD: f64 = 1e-6;

/// Pruning only fires when the bound is below the best score by this margin,
/// so rounding in the bound can never discard the true argmax.
const PRUNE_SLACK: f64 = 1e-10;

fn clamp_score(raw: f64) -> Result<f64> {
    if !raw.is_finite() || raw.abs() > 1.0 + RANGE_GUARD {
        return Err(Error::CorrelationOutOfRange(raw));
    }
    Ok(raw.clamp(-1.0, 1.0))
}

/// Zero-mean, variance-normalized inner product of two equal-length samples.
pub fn ncc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ncc needs at least 2 samples, got {}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let ma = sum(a.iter().copied()) / n;
    let mb = sum(b.iter().copied()) / n;
    let mut sab = CompensatedSum::new();
    let mut saa = CompensatedSum::new();
    let mut sbb = CompensatedSum::new();
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab.add(dx * dy);
        saa.add(dx * dx);
        sbb.add(dy * dy);
    }
    let (saa, sbb) = (saa.value(), sbb.value());
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(Error::ZeroVariance);
    }
    clamp_score(sab.value() / (saa * sbb).sqrt())
}

/// NCC score for each cyclic shift. `scores[k]` compares the reference with
/// the candidate shifted back by `k` rows, so a candidate equal to
/// `cyclic_shift(reference, k)` peaks at `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NccCurve {
    pub scores: Vec<f64>,
    /// Samples valid in both grids at each shift.
    pub sample_counts: Vec<usize>,
}

impl NccCurve {
    pub fn angular(&self) -> usize {
        self.scores.len()
    }

    /// Smallest shift attaining the maximum score.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = k;
            }
        }
        best
    }

    /// `shift,score` CSV with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_curve_csv(out, self.scores.iter().map(|&s| Some(s)))
    }
}

pub(crate) fn write_curve_csv<W: Write>(out: W, scores: impl Iterator<Item = Option<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["shift", "score"])?;
    for (k, s) in scores.enumerate() {
        w.write_record([k.to_string(), s.map(|v| v.to_string()).unwrap_or_default()])?;
    }
    w.flush().map_err(|e| Error::io("<curve csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationEstimate {
    pub shift: usize,
    pub angle_deg: f64,
    pub peak_ncc: f64,
    pub curve: NccCurve,
}

/// Multiply-accumulate counts of a pruned search against the exhaustive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PruneStats {
    pub exhaustive_macs: u64,
    pub evaluated_macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedEstimate {
    pub shift: usize,
    pub angle_deg: f64,
    pub peak_ncc: f64,
    /// Score of every shift that was evaluated to completion; `None` where
    /// the shift was abandoned.
    pub completed: Vec<Option<f64>>,
    pub stats: PruneStats,
}

fn check_grids(reference: &PolarImage, cand: &PolarImage) -> Result<()> {
    if reference.angular() != cand.angular() || reference.radial() != cand.radial() {
        return Err(Error::GridMismatch(
            reference.angular(),
            reference.radial(),
            cand.angular(),
            cand.radial(),
        ));
    }
    Ok(())
}

/// A fully valid grid shifted to zero mean and scaled to unit Euclidean norm,
/// so that NCC against another such grid is a plain dot product.
struct UnitGrid {
    angular: usize,
    radial: usize,
    values: Vec<f64>,
}

impl UnitGrid {
    fn new(p: &PolarImage) -> Result<Self> {
        let n = p.values().len() as f64;
        let mean = sum(p.values().iter().copied()) / n;
        let centered: Vec<f64> = p.values().iter().map(|v| v - mean).collect();
        let norm = sum(centered.iter().map(|v| v * v)).sqrt();
        if !(norm > 0.0) {
            return Err(Error::ZeroVariance);
        }
        Ok(Self {
            angular: p.angular(),
            radial: p.radial(),
            values: centered.into_iter().map(|v| v / norm).collect(),
        })
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.radial..(i + 1) * self.radial]
    }

    /// Candidate row aligned with reference row `i` under shift `k`.
    #[inline]
    fn shifted_row(&self, i: usize, k: usize) -> &[f64] {
        self.row((i + k) % self.angular)
    }

    fn row_energies(&self) -> Vec<f64> {
        (0..self.angular)
            .map(|i| sum(self.row(i).iter().map(|v| v * v)))
            .collect()
    }
}

#[inline]
fn accumulate_row(acc: &mut CompensatedSum, a: &[f64], b: &[f64]) {
    for (&x, &y) in a.iter().zip(b) {
        acc.add(x * y);
    }
}

/// Full dot product of the unit grids at shift `k`, radial-major.
fn unit_dot(a: &UnitGrid, c: &UnitGrid, k: usize) -> f64 {
    let mut acc = CompensatedSum::new();
    for i in 0..a.angular {
        accumulate_row(&mut acc, a.row(i), c.shifted_row(i, k));
    }
    acc.value()
}

/// Per-shift NCC over samples valid in both grids, with means and variances
/// recomputed on each overlap.
fn masked_score(reference: &PolarImage, cand: &PolarImage, k: usize) -> Result<(f64, usize)> {
    let s = reference.angular();
    let r = reference.radial();
    let pairs = || {
        (0..s).flat_map(move |i| {
            let ci = (i + k) % s;
            (0..r).filter_map(move |j| {
                (reference.is_valid(i, j) && cand.is_valid(ci, j)).then_some((reference.get(i, j), cand.get(ci, j)))
            })
        })
    };
    let mut n = 0usize;
    let mut sa = CompensatedSum::new();
    let mut sb = CompensatedSum::new();
    for (a, b) in pairs() {
        n += 1;
        sa.add(a);
        sb.add(b);
    }
    if n < 2 {
        return Err(Error::DegenerateOverlap {
            shift: k,
            reason: format!("{n} mutually valid samples"),
        });
    }
    let ma = sa.value() / n as f64;
    let mb = sb.value() / n as f64;
    let mut sab = CompensatedSum::new();
    let mut saa = CompensatedSum::new();
    let mut sbb = CompensatedSum::new();
    for (a, b) in pairs() {
        let (da, db) = (a - ma, b - mb);
        sab.add(da * db);
        saa.add(da * da);
        sbb.add(db * db);
    }
    let (saa, sbb) = (saa.value(), sbb.value());
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(Error::DegenerateOverlap {
            shift: k,
            reason: "zero variance on the overlap".into(),
        });
    }
    Ok((clamp_score(sab.value() / (saa * sbb).sqrt())?, n))
}

/// NCC of `reference` against every cyclic shift of `cand`.
pub fn rotation_score_curve(reference: &PolarImage, cand: &PolarImage) -> Result<NccCurve> {
    check_grids(reference, cand)?;
    let s = reference.angular();
    if reference.is_fully_valid() && cand.is_fully_valid() {
        // the overlap is the whole grid at every shift, so one global
        // normalization equals the per-overlap one
        let degenerate = |_| Error::DegenerateOverlap {
            shift: 0,
            reason: "zero variance on the overlap".into(),
        };
        let a = UnitGrid::new(reference).map_err(degenerate)?;
        let c = UnitGrid::new(cand).map_err(degenerate)?;
        if a.values.len() < 2 {
            return Err(Error::DegenerateOverlap {
                shift: 0,
                reason: "fewer than 2 samples".into(),
            });
        }
        let scores = (0..s)
            .into_par_iter()
            .map(|k| clamp_score(unit_dot(&a, &c, k)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        return Ok(NccCurve {
            scores,
            sample_counts: vec![a.values.len(); s],
        });
    }
    let (scores, sample_counts) = (0..s)
        .into_par_iter()
        .map(|k| masked_score(reference, cand, k))
        .collect::<Vec<_>>()
        // sequential pass so the lowest failing shift is the one reported
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(NccCurve { scores, sample_counts })
}

/// Rotation of `cand` relative to `reference` maximizing NCC, on the grid's
/// angular resolution.
pub fn estimate_rotation(reference: &PolarImage, cand: &PolarImage) -> Result<RotationEstimate> {
    let curve = rotation_score_curve(reference, cand)?;
    let shift = curve.argmax();
    Ok(RotationEstimate {
        shift,
        angle_deg: shift as f64 * reference.angular_step_deg(),
        peak_ncc: curve.scores[shift],
        curve,
    })
}

/// Same argmax as [`estimate_rotation`], visiting shifts in order and
/// abandoning a shift once its partial dot product plus the Cauchy–Schwarz
/// bound on the unvisited rows cannot beat the best complete score.
///
/// Requires fully valid grids.
pub fn estimate_rotation_pruned(reference: &PolarImage, cand: &PolarImage) -> Result<PrunedEstimate> {
    check_grids(reference, cand)?;
    if !(reference.is_fully_valid() && cand.is_fully_valid()) {
        return Err(Error::InvalidSamples);
    }
    let a = UnitGrid::new(reference)?;
    let c = UnitGrid::new(cand)?;
    let s = a.angular;
    let r = a.radial as u64;

    // remaining reference energy after rows 0..t
    let ea = a.row_energies();
    let mut ref_tail = vec![0.0; s + 1];
    for t in (0..s).rev() {
        ref_tail[t] = ref_tail[t + 1] + ea[t];
    }
    // cyclic prefix sums over candidate rows, laid out twice
    let ec = c.row_energies();
    let mut cand_prefix = vec![0.0; 2 * s + 1];
    for t in 0..2 * s {
        cand_prefix[t + 1] = cand_prefix[t] + ec[t % s];
    }

    let mut best_shift = 0;
    let mut best = f64::NEG_INFINITY;
    let mut evaluated = 0u64;
    let mut completed = vec![None; s];
    for (k, slot) in completed.iter_mut().enumerate() {
        let mut acc = CompensatedSum::new();
        let mut finished = true;
        for t in 0..s {
            if best.is_finite() {
                // rows t.. of the shifted candidate are rows (t + k) mod S onward
                let start = (t + k) % s;
                let cand_tail = cand_prefix[start + s - t] - cand_prefix[start];
                let bound = acc.value() + (ref_tail[t] * cand_tail).max(0.0).sqrt();
                if bound <= best - PRUNE_SLACK {
                    finished = false;
                    break;
                }
            }
            accumulate_row(&mut acc, a.row(t), c.shifted_row(t, k));
            evaluated += r;
        }
        if finished {
            let score = clamp_score(acc.value())?;
            *slot = Some(score);
            if score > best {
                best = score;
                best_shift = k;
            }
        }
    }
    Ok(PrunedEstimate {
        shift: best_shift,
        angle_deg: best_shift as f64 * reference.angular_step_deg(),
        peak_ncc: best,
        completed,
        stats: PruneStats {
            exhaustive_macs: (s as u64) * (s as u64) * r,
            evaluated_macs: evaluated,
        },
    })
}
