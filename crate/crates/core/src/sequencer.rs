//! Pairwise center-crop correlation, probability scaling, greedy frame
//! ordering and chain scoring.
//!
//! Chain model: an image depends on its two predecessors, but only pairwise
//! similarities are measured, so the joint term `P(I_i, I_{i-1} | I_{i-2})` is
//! taken as `p[i][i-1] * p[i-1][i-2]`. The second-order conditional then
//! reduces to `p[i][i-1]` and the sequence probability telescopes to the
//! product of the step probabilities.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::correlation::ncc;
use crate::error::{Error, Result};
use crate::image::{center_crop, normalize, Image};

const TABLE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_square_csv(out, self.n, &self.values)
    }
}

/// Symmetric similarity-probability table with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    n: usize,
    p: Vec<f64>,
}

impl ProbabilityTable {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if n == 0 || p.len() != n * n {
            return Err(Error::InvalidTable(format!("{} entries for a {n}x{n} table", p.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let v = p[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidTable(format!("p[{i}][{j}] = {v} outside [0, 1]")));
                }
                if (v - p[j * n + i]).abs() > TABLE_EPS {
                    return Err(Error::InvalidTable(format!("p[{i}][{j}] != p[{j}][{i}]")));
                }
            }
            if (p[i * n + i] - 1.0).abs() > TABLE_EPS {
                return Err(Error::InvalidTable(format!("p[{i}][{i}] = {} is not 1", p[i * n + i])));
            }
        }
        Ok(Self { n, p })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.n {
            return Err(Error::IndexOutOfRange { index, n: self.n });
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_square_csv(out, self.n, &self.p)
    }

    /// Reads a square table whose header row lists the indices `0..n`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = rdr.headers()?.clone();
        let n = header.len();
        for (k, field) in header.iter().enumerate() {
            if field.parse::<usize>().ok() != Some(k) {
                return Err(Error::InvalidTable(format!(
                    "header cell {k} is {field:?}, expected {k}"
                )));
            }
        }
        let mut p = Vec::with_capacity(n * n);
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != n {
                return Err(Error::InvalidTable(format!(
                    "row {rows} has {} cells, expected {n}",
                    rec.len()
                )));
            }
            for cell in rec.iter() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::InvalidTable(format!("row {rows}: cannot parse {cell:?}")))?;
                p.push(v);
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::InvalidTable(format!("{rows} rows for {n} columns")));
        }
        Self::new(n, p)
    }
}

fn write_square_csv<W: Write>(out: W, n: usize, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((0..n).map(|i| i.to_string()))?;
    for row in values.chunks(n) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<table csv>", e))?;
    Ok(())
}

fn mutual_ncc(a: &Image, b: &Image) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .enumerate()
        .filter(|(i, _)| a.is_valid_index(*i) && b.is_valid_index(*i))
        .map(|(_, (&x, &y))| (x, y))
        .unzip();
    ncc(&xs, &ys)
}

/// NCC between the `crop_size` center windows of the normalized images, over
/// pixels valid in both. The diagonal is exactly 1.
pub fn correlation_matrix(images: &[Image], crop_size: usize) -> Result<CorrelationMatrix> {
    let n = images.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 images, got {n}")));
    }
    let crops = images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            normalize(img)
                .and_then(|z| center_crop(&z, crop_size))
                .map_err(|e| Error::DegeneratePair(i, i, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let scores = pairs
        .par_iter()
        .map(|&(i, j)| mutual_ncc(&crops[i], &crops[j]).map_err(|e| Error::DegeneratePair(i, j, e.to_string())))
        .collect::<Vec<_>>();

    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
    }
    for (&(i, j), score) in pairs.iter().zip(scores) {
        let v = score?;
        values[i * n + j] = v;
        values[j * n + i] = v;
    }
    Ok(CorrelationMatrix { n, values })
}

/// Maps correlation `c` to `(c + 1) / 2`.
pub fn to_probability(c: &CorrelationMatrix) -> ProbabilityTable {
    ProbabilityTable {
        n: c.n,
        p: c.values.iter().map(|v| (v + 1.0) / 2.0).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequencePlan {
    pub frames: Vec<usize>,
    pub step_probs: Vec<f64>,
    /// `-inf` when a step has probability 0; serialized as `null`.
    #[serde(serialize_with = "finite_or_null")]
    pub log_chain_prob: f64,
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Starting from `start`, repeatedly moves to the most probable other frame
/// (smallest index on ties) until `length` frames are chosen. Frames may recur,
/// but never twice in a row.
pub fn greedy_sequence(p: &ProbabilityTable, start: usize, length: usize) -> Result<SequencePlan> {
    p.check_index(start)?;
    if p.n < 2 {
        return Err(Error::InvalidArgument(
            "greedy sequencing needs at least 2 images".into(),
        ));
    }
    if length == 0 {
        return Err(Error::InvalidArgument("sequence length must be at least 1".into()));
    }
    let mut frames = Vec::with_capacity(length);
    let mut step_probs = Vec::with_capacity(length.saturating_sub(1));
    frames.push(start);
    let mut cur = start;
    while frames.len() < length {
        let mut next = None;
        for j in (0..p.n).filter(|&j| j != cur) {
            match next {
                Some(b) if p.get(cur, j) <= p.get(cur, b) => {}
                _ => next = Some(j),
            }
        }
        let next = next.expect("n >= 2 leaves a successor");
        step_probs.push(p.get(cur, next));
        frames.push(next);
        cur = next;
    }
    let log_chain_prob = chain_log_prob_unchecked(p, &frames);
    Ok(SequencePlan {
        frames,
        step_probs,
        log_chain_prob,
    })
}

fn chain_log_prob_unchecked(p: &ProbabilityTable, frames: &[usize]) -> f64 {
    frames.windows(2).map(|w| p.get(w[0], w[1]).ln()).sum()
}

/// Log-probability of `frames` given its first frame under the first-order
/// collapse of the two-neighbor chain model; `-inf` if any step has
/// probability 0.
pub fn chain_probability(p: &ProbabilityTable, frames: &[usize]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("empty frame sequence".into()));
    }
    for &f in frames {
        p.check_index(f)?;
    }
    if let Some(pos) = frames.windows(2).position(|w| w[0] == w[1]) {
        return Err(Error::ImmediateRepeat(frames[pos], pos + 1));
    }
    Ok(chain_log_prob_unchecked(p, frames))
}

/// One break in the chain `p[last][f[n-2]] >= p[last][f[n-3]] >= ... >= p[last][f[0]]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    /// Index in the sequence of the nearer predecessor.
    pub position: usize,
    /// Probability from the nearer predecessor, which should be the larger.
    pub expected_ge: f64,
    /// Probability from the predecessor one step further back.
    pub actual: f64,
}

/// Checks that the final frame is at least as probable given a nearer
/// predecessor as given any earlier one.
pub fn check_monotonicity(p: &ProbabilityTable, frames: &[usize]) -> Result<Vec<MonotonicityViolation>> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "monotonicity needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    for &f in frames {
        p.check_index(f)?;
    }
    let last = frames[frames.len() - 1];
    let mut out = Vec::new();
    for pos in (1..frames.len() - 1).rev() {
        let near = p.get(last, frames[pos]);
        let far = p.get(last, frames[pos - 1]);
        if near < far {
            out.push(MonotonicityViolation {
                position: pos,
                expected_ge: near,
                actual: far,
            });
        }
    }
    Ok(out)
}
