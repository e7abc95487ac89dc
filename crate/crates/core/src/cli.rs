//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or processing error. Every
//! successful run writes a [`RunManifest`] listing the files it created.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::align::{align_prepared, prepare, AlignConfig, Alignment, DEFAULT_ANGULAR, DEFAULT_RADIAL};
use crate::correlation::write_curve_csv;
use crate::error::{Error, Result};
use crate::pgm::{encode_pgm, load_pgm};
use crate::polar::{default_max_radius, to_polar};
use crate::sequencer::{check_monotonicity, correlation_matrix, greedy_sequence, to_probability, ProbabilityTable};
use crate::synth::{synth_filament, FilamentSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tubalign",
    version,
    about = "Rotation registration and frame sequencing for noisy micrographs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic filament image
    Synth(SynthArgs),
    /// Export the polar resampling of an image as CSV
    Polar(PolarArgs),
    /// Estimate the rotation of a candidate relative to a reference
    Align(AlignArgs),
    /// Align a directory of images and build the pairwise correlation tables
    Matrix(MatrixArgs),
    /// Order frames greedily from a probability table
    Sequence(SequenceArgs),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Filament orientation in degrees
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    angle: f64,
    #[arg(long, default_value_t = 80.0)]
    half_length: f64,
    #[arg(long, default_value_t = 2.0)]
    width_sigma: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    background: f64,
    /// Standard deviation of the additive Gaussian noise
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shift of the segment midpoint along its axis
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    offset: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

fn parse_center(s: &str) -> std::result::Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let x: f64 = x.trim().parse().map_err(|_| format!("bad x coordinate {x:?}"))?;
    let y: f64 = y.trim().parse().map_err(|_| format!("bad y coordinate {y:?}"))?;
    Ok((x, y))
}

#[derive(Debug, Args, Serialize)]
struct PolarArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ANGULAR)]
    angular: usize,
    #[arg(long, default_value_t = DEFAULT_RADIAL)]
    radial: usize,
    /// Sampling center as X,Y; defaults to the image center
    #[arg(long, value_parser = parse_center)]
    center: Option<(f64, f64)>,
    /// Defaults to min(width, height) / 2 - 1
    #[arg(long)]
    max_radius: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AlignArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    cand: PathBuf,
    /// JSON report
    #[arg(long)]
    report: PathBuf,
    /// Rotated candidate; defaults to <report>.aligned.pgm
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score curve; defaults to <report>.curve.csv
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ANGULAR)]
    angular: usize,
    #[arg(long, default_value_t = DEFAULT_RADIAL)]
    radial: usize,
    #[arg(long)]
    max_radius: Option<f64>,
    /// Use the bound-pruned shift search
    #[arg(long)]
    pruned: bool,
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct MatrixArgs {
    /// Directory of PGM images, taken in filename order
    #[arg(long)]
    inputs: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Side of the center window used for pairwise correlation
    #[arg(long, default_value_t = 64)]
    crop: usize,
    /// Reference image; defaults to the first input
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ANGULAR)]
    angular: usize,
    #[arg(long, default_value_t = DEFAULT_RADIAL)]
    radial: usize,
    #[arg(long)]
    max_radius: Option<f64>,
    #[arg(long)]
    pruned: bool,
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SequenceArgs {
    /// Probability table CSV
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Number of frames; defaults to the table size
    #[arg(long)]
    length: Option<usize>,
    /// Frame paths in index order; defaults to index.txt beside the table
    #[arg(long)]
    index: Option<PathBuf>,
    /// Defaults to plan.json beside the table
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Ordered frame list; defaults to frames.txt beside the table
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Defaults to monotonicity.json beside the table
    #[arg(long)]
    monotonicity: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
}

/// Tracks the files a run creates.
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new() -> Self {
        Self { written: Vec::new() }
    }

    fn create(&mut self, path: &Path) -> Result<BufWriter<File>> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.written.push(path.to_path_buf());
        Ok(BufWriter::new(f))
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        use std::io::Write;
        let mut w = self.create(path)?;
        w.write_all(bytes)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    fn pgm(&mut self, path: &Path, img: &crate::image::Image) -> Result<()> {
        self.write(path, &encode_pgm(img))
    }

    fn json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    fn finish<A: Serialize>(self, command: &str, args: &A, manifest: &Path) -> Result<()> {
        let parameters = match serde_json::to_value(args)? {
            serde_json::Value::Object(map) => map.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        let m = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            parameters,
            outputs: self.written.iter().map(|p| p.display().to_string()).collect(),
        };
        let mut sink = Outputs::new();
        sink.json(manifest, &m)
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent()
        .map(|d| d.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let spec = FilamentSpec {
        size: args.size,
        orientation_deg: args.angle,
        half_length: args.half_length,
        width_sigma: args.width_sigma,
        amplitude: args.amplitude,
        background: args.background,
        noise_sigma: args.noise,
        seed: args.seed,
        offset: args.offset,
    };
    let img = synth_filament(&spec)?;
    let mut out = Outputs::new();
    out.pgm(&args.out, &img)?;
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    out.finish("synth", args, &manifest)
}

fn run_polar(args: &PolarArgs) -> Result<()> {
    let img = load_pgm(&args.input)?;
    let (cx, cy) = args.center.unwrap_or_else(|| img.center());
    let max_radius = args.max_radius.unwrap_or_else(|| default_max_radius(&img));
    let polar = to_polar(&img, cx, cy, args.angular, args.radial, max_radius)?;
    let mut out = Outputs::new();
    let w = out.create(&args.out)?;
    polar.write_csv(w)?;
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    out.finish("polar", args, &manifest)
}

#[derive(Serialize)]
struct AlignReport {
    angle_deg: f64,
    peak_ncc: f64,
    shift: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    op_counts: Option<crate::correlation::PruneStats>,
}

impl From<&Alignment> for AlignReport {
    fn from(a: &Alignment) -> Self {
        Self {
            angle_deg: a.angle_deg,
            peak_ncc: a.peak_ncc,
            shift: a.shift,
            op_counts: a.op_counts,
        }
    }
}

fn run_align(args: &AlignArgs) -> Result<()> {
    let cfg = AlignConfig {
        angular: args.angular,
        radial: args.radial,
        max_radius: args.max_radius,
        pruned: args.pruned,
    };
    let reference = prepare(&load_pgm(&args.reference)?, &cfg)?;
    let cand = prepare(&load_pgm(&args.cand)?, &cfg)?;
    let a = align_prepared(&reference, &cand, cfg.pruned)?;

    let aligned_path = args
        .out
        .clone()
        .unwrap_or_else(|| args.report.with_extension("aligned.pgm"));
    let curve_path = args
        .curve
        .clone()
        .unwrap_or_else(|| args.report.with_extension("curve.csv"));
    let mut out = Outputs::new();
    out.pgm(&aligned_path, &a.aligned)?;
    write_curve_csv(out.create(&curve_path)?, a.scores.iter().copied())?;
    out.json(&args.report, &AlignReport::from(&a))?;
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| with_suffix(&args.report, ".manifest.json"));
    out.finish("align", args, &manifest)
}

fn list_pgms(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_pgm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if is_pgm && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn run_matrix(args: &MatrixArgs) -> Result<()> {
    let files = list_pgms(&args.inputs)?;
    if files.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{}: need at least 2 PGM images, found {}",
            args.inputs.display(),
            files.len()
        )));
    }
    let cfg = AlignConfig {
        angular: args.angular,
        radial: args.radial,
        max_radius: args.max_radius,
        pruned: args.pruned,
    };
    let reference_path = args.reference.clone().unwrap_or_else(|| files[0].clone());
    let reference = prepare(&load_pgm(&reference_path)?, &cfg)?;

    let mut out = Outputs::new();
    let mut aligned = Vec::with_capacity(files.len());
    let mut index = String::new();
    for path in &files {
        let prepared = prepare(&load_pgm(path)?, &cfg)?;
        let img = if *path == reference_path {
            prepared.normalized
        } else {
            align_prepared(&reference, &prepared, cfg.pruned)?.aligned
        };
        let name = path.file_name().expect("listed files have names");
        let dest = args.out.join("aligned").join(name);
        out.pgm(&dest, &img)?;
        index.push_str(&dest.display().to_string());
        index.push('\n');
        aligned.push(img);
    }

    let corr = correlation_matrix(&aligned, args.crop)?;
    let prob = to_probability(&corr);
    corr.write_csv(out.create(&args.out.join("matrix.csv"))?)?;
    prob.write_csv(out.create(&args.out.join("probability.csv"))?)?;
    out.write(&args.out.join("index.txt"), index.as_bytes())?;
    let manifest = args.manifest.clone().unwrap_or_else(|| args.out.join("manifest.json"));
    out.finish("matrix", args, &manifest)
}

fn run_sequence(args: &SequenceArgs) -> Result<()> {
    let file = File::open(&args.matrix).map_err(|e| Error::io(&args.matrix, e))?;
    let table = ProbabilityTable::read_csv(file).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::InvalidTable(format!("{}: {other}", args.matrix.display())),
    })?;
    let n = table.len();
    let length = args.length.unwrap_or(n);
    let plan = greedy_sequence(&table, args.start, length)?;

    let index_path = args.index.clone().or_else(|| {
        let p = sibling(&args.matrix, "index.txt");
        p.is_file().then_some(p)
    });
    let names: Vec<String> = match &index_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let lines: Vec<String> = text.lines().map(str::to_owned).collect();
            if lines.len() != n {
                return Err(Error::InvalidTable(format!(
                    "{}: {} entries for a {n}-image table",
                    p.display(),
                    lines.len()
                )));
            }
            lines
        }
        None => (0..n).map(|i| i.to_string()).collect(),
    };

    let mut out = Outputs::new();
    let plan_path = args.plan.clone().unwrap_or_else(|| sibling(&args.matrix, "plan.json"));
    out.json(&plan_path, &plan)?;
    let frames_path = args
        .frames
        .clone()
        .unwrap_or_else(|| sibling(&args.matrix, "frames.txt"));
    let mut listing = String::new();
    for &f in &plan.frames {
        listing.push_str(&names[f]);
        listing.push('\n');
    }
    out.write(&frames_path, listing.as_bytes())?;
    if plan.frames.len() >= 2 {
        let report = check_monotonicity(&table, &plan.frames)?;
        let path = args
            .monotonicity
            .clone()
            .unwrap_or_else(|| sibling(&args.matrix, "monotonicity.json"));
        out.json(&path, &report)?;
    }
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| with_suffix(&plan_path, ".manifest.json"));
    out.finish("sequence", args, &manifest)
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Polar(a) => run_polar(a),
        Command::Align(a) => run_align(a),
        Command::Matrix(a) => run_matrix(a),
        Command::Sequence(a) => run_sequence(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
