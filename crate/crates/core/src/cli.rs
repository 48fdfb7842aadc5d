//! Benchmark harness: random test problems, timed FMM runs, comparison with
//! direct summation and CSV/JSON reports.
//!
//! Problems are drawn from ChaCha20 seeded with `seed`. Stream 0 gives the
//! positions (all source `r, z` pairs, then all field `r, z` pairs); stream
//! `1 + n` gives the amplitudes of mode `n`, one real part per source in
//! order, each followed by an imaginary part when complex amplitudes are
//! requested. All draws are uniform on the open interval `(0, 1)`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use rand::distributions::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FmmError, Result};
use crate::exec::Execution;
use crate::fmm::{self, FmmConfig, ModalPotential, ModalRingSource, PhaseTimings, Truncation};
use crate::oracle;
use crate::stats::median;
use crate::tree::Point2;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TruncationArg {
    Combined,
    Product,
}

impl From<TruncationArg> for Truncation {
    fn from(t: TruncationArg) -> Self {
        match t {
            TruncationArg::Combined => Truncation::Combined,
            TruncationArg::Product => Truncation::Product,
        }
    }
}

/// Command-line arguments of the `cylfmm` binary.
#[derive(Debug, Clone, Parser)]
#[command(
    name = "cylfmm",
    version,
    about = "Fast multipole evaluation of modal ring-source potentials"
)]
pub struct Args {
    /// Number of random ring sources.
    #[arg(long, default_value_t = 1024)]
    pub sources: usize,
    /// Number of random field points.
    #[arg(long, default_value_t = 1024)]
    pub field: usize,
    /// Tree depth, 2 to 12.
    #[arg(long, default_value_t = 4)]
    pub depth: u32,
    /// Expansion order M, 1 to 24.
    #[arg(long, default_value_t = 10)]
    pub order: usize,
    /// Number of Fourier modes n = 0..K-1.
    #[arg(long, default_value_t = 18)]
    pub modes: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also run direct summation and report per-mode errors.
    #[arg(long)]
    pub compare_direct: bool,
    /// Report file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Timed FMM repetitions; the median of each phase is reported.
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long, value_enum, default_value_t = TruncationArg::Product)]
    pub truncation: TruncationArg,
    /// Draw complex rather than real amplitudes.
    #[arg(long)]
    pub complex: bool,
    /// Read sources from a CSV file instead of generating them.
    #[arg(long)]
    pub input_sources: Option<PathBuf>,
    /// Read field points from a CSV file instead of generating them.
    #[arg(long)]
    pub input_field: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_sources: usize,
    pub n_field: usize,
    pub depth: u32,
    pub order: usize,
    pub n_modes: usize,
    pub seed: u64,
    pub compare_direct: bool,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    pub repeat: usize,
    pub truncation: Truncation,
    pub complex_amplitudes: bool,
    pub input_sources: Option<PathBuf>,
    pub input_field: Option<PathBuf>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_sources: 1024,
            n_field: 1024,
            depth: 4,
            order: 10,
            n_modes: 18,
            seed: 1,
            compare_direct: false,
            output_path: None,
            output_format: OutputFormat::Csv,
            repeat: 3,
            truncation: Truncation::Product,
            complex_amplitudes: false,
            input_sources: None,
            input_field: None,
            execution: Execution::default(),
        }
    }
}

impl RunConfig {
    pub fn from_args(args: Args, execution: Execution) -> Self {
        Self {
            n_sources: args.sources,
            n_field: args.field,
            depth: args.depth,
            order: args.order,
            n_modes: args.modes,
            seed: args.seed,
            compare_direct: args.compare_direct,
            output_path: args.output,
            output_format: args.format,
            repeat: args.repeat,
            truncation: args.truncation.into(),
            complex_amplitudes: args.complex,
            input_sources: args.input_sources,
            input_field: args.input_field,
            execution,
        }
    }

    pub fn fmm_config(&self) -> FmmConfig {
        FmmConfig {
            n_modes: self.n_modes,
            order: self.order,
            depth: self.depth,
            truncation: self.truncation,
            execution: self.execution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fmm_config().validate()?;
        if self.repeat == 0 {
            return Err(FmmError::Config("repeat must be at least 1".into()));
        }
        Ok(())
    }
}

/// Median wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub sort: f64,
    pub moments: f64,
    pub upward: f64,
    pub downward: f64,
    pub local_direct: f64,
    pub fmm_total: f64,
    pub direct: Option<f64>,
}

impl Timings {
    /// `(phase, seconds)` rows in report order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let mut rows = vec![
            ("sort", self.sort),
            ("moments", self.moments),
            ("upward", self.upward),
            ("downward", self.downward),
            ("local_direct", self.local_direct),
            ("fmm_total", self.fmm_total),
        ];
        if let Some(d) = self.direct {
            rows.push(("direct", d));
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: RunConfig,
    /// `eps[n]` for each mode; present only when compared with direct sums.
    pub errors: Option<Vec<f64>>,
    pub timings: Timings,
    /// Source-field pairs per second of FMM time.
    pub throughput: f64,
}

impl RunReport {
    pub fn errors_finite(&self) -> bool {
        self.errors
            .as_ref()
            .is_none_or(|e| e.iter().all(|v| v.is_finite()))
    }
}

fn open01(rng: &mut ChaCha20Rng) -> f64 {
    Open01.sample(rng)
}

/// Deterministic random sources and field points in `(0, 1)^2`.
pub fn generate_problem(config: &RunConfig) -> (Vec<ModalRingSource>, Vec<Point2>) {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let point = |rng: &mut ChaCha20Rng| {
        let r = open01(rng);
        let z = open01(rng);
        Point2::new(r, z)
    };
    let src_pos: Vec<Point2> = (0..config.n_sources).map(|_| point(&mut rng)).collect();
    let fld: Vec<Point2> = (0..config.n_field).map(|_| point(&mut rng)).collect();
    let mut amps = vec![Vec::with_capacity(config.n_modes); config.n_sources];
    for n in 0..config.n_modes {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        rng.set_stream(1 + n as u64);
        for a in amps.iter_mut() {
            let re = open01(&mut rng);
            let im = if config.complex_amplitudes {
                open01(&mut rng)
            } else {
                0.0
            };
            a.push(Complex64::new(re, im));
        }
    }
    let sources = src_pos
        .into_iter()
        .zip(amps)
        .map(|(position, amplitudes)| ModalRingSource {
            position,
            amplitudes,
        })
        .collect();
    (sources, fld)
}

fn parse_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text =
        fs::read_to_string(path).map_err(|e| FmmError::Io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| FmmError::Config(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    FmmError::Config(format!(
                        "{} record {}: '{f}' is not a number",
                        path.display(),
                        line + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Sources from CSV rows `r, z, re_0, im_0, ..., re_{K-1}, im_{K-1}`.
pub fn read_sources(path: &Path, n_modes: usize) -> Result<Vec<ModalRingSource>> {
    parse_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != 2 + 2 * n_modes {
                return Err(FmmError::Config(format!(
                    "{} record {}: expected {} columns, found {}",
                    path.display(),
                    i + 1,
                    2 + 2 * n_modes,
                    row.len()
                )));
            }
            Ok(ModalRingSource {
                position: Point2::new(row[0], row[1]),
                amplitudes: row[2..]
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            })
        })
        .collect()
}

/// Field points from CSV rows `r, z`.
pub fn read_field(path: &Path) -> Result<Vec<Point2>> {
    parse_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| match row[..] {
            [r, z] => Ok(Point2::new(r, z)),
            _ => Err(FmmError::Config(format!(
                "{} record {}: expected 2 columns, found {}",
                path.display(),
                i + 1,
                row.len()
            ))),
        })
        .collect()
}

/// Per-mode relative max-norm error of `approx` against `exact`.
pub fn modal_errors(
    approx: &[ModalPotential],
    exact: &[ModalPotential],
    n_modes: usize,
) -> Vec<f64> {
    (0..n_modes)
        .map(|n| {
            let scale = exact
                .iter()
                .map(|p| p.amplitudes[n].norm())
                .fold(0.0, f64::max);
            let err = approx
                .iter()
                .zip(exact)
                .map(|(a, b)| (a.amplitudes[n] - b.amplitudes[n]).norm())
                .fold(0.0, f64::max);
            if err == 0.0 {
                0.0
            } else {
                err / scale
            }
        })
        .collect()
}

/// Load or generate the problem, run the FMM `repeat` times and optionally
/// the direct sum.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let mut config = config.clone();
    let (mut sources, mut field) = if config.input_sources.is_none() || config.input_field.is_none()
    {
        generate_problem(&config)
    } else {
        (Vec::new(), Vec::new())
    };
    if let Some(p) = &config.input_sources {
        sources = read_sources(p, config.n_modes)?;
        config.n_sources = sources.len();
    }
    if let Some(p) = &config.input_field {
        field = read_field(p)?;
        config.n_field = field.len();
    }

    let fmm_config = config.fmm_config();
    let mut phases: Vec<PhaseTimings> = Vec::with_capacity(config.repeat);
    let mut totals = Vec::with_capacity(config.repeat);
    let mut result = None;
    for _ in 0..config.repeat {
        let clock = Instant::now();
        let (out, t) = fmm::evaluate_instrumented(&sources, &field, &fmm_config)?;
        totals.push(clock.elapsed().as_secs_f64());
        phases.push(t);
        result.get_or_insert(out);
    }
    let result = result.expect("repeat >= 1");
    let pick = |f: fn(&PhaseTimings) -> f64| median(&phases.iter().map(f).collect::<Vec<_>>());
    let mut timings = Timings {
        sort: pick(|t| t.sort),
        moments: pick(|t| t.moments),
        upward: pick(|t| t.upward),
        downward: pick(|t| t.downward),
        local_direct: pick(|t| t.local_direct),
        fmm_total: median(&totals),
        direct: None,
    };

    let errors = if config.compare_direct {
        let clock = Instant::now();
        let exact =
            oracle::direct_evaluate_with(&sources, &field, config.n_modes, config.execution)?;
        timings.direct = Some(clock.elapsed().as_secs_f64());
        Some(modal_errors(&result, &exact, config.n_modes))
    } else {
        None
    };
    let pairs = (config.n_sources * config.n_field) as f64;
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        throughput: if timings.fmm_total > 0.0 {
            pairs / timings.fmm_total
        } else {
            0.0
        },
        config,
        errors,
        timings,
    })
}

fn csv_table(header: [&str; 2], rows: impl IntoIterator<Item = (String, f64)>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| FmmError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for (k, v) in rows {
        w.write_record([k, format!("{v:.16e}")]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| FmmError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Render `report` as CSV: a comment line with the schema version, the
/// `mode,eps` table when errors are present, a blank line, then the
/// `phase,seconds` table.
pub fn to_csv(report: &RunReport) -> Result<String> {
    let mut out = format!("# cylfmm report schema {}\n", report.schema_version);
    if let Some(errors) = &report.errors {
        out += &csv_table(
            ["mode", "eps"],
            errors.iter().enumerate().map(|(n, e)| (n.to_string(), *e)),
        )?;
        out.push('\n');
    }
    out += &csv_table(
        ["phase", "seconds"],
        report
            .timings
            .rows()
            .into_iter()
            .map(|(p, s)| (p.to_string(), s)),
    )?;
    Ok(out)
}

pub fn to_json(report: &RunReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| FmmError::Io(e.to_string()))
}

/// Tables of a CSV report: `(mode, eps)` rows if present, `(phase, seconds)`
/// rows.
pub type CsvTables = (Option<Vec<(usize, f64)>>, Vec<(String, f64)>);

pub fn parse_csv_report(text: &str) -> Result<CsvTables> {
    let bad = |m: String| FmmError::Config(format!("malformed report: {m}"));
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut errors = None;
    let mut phases = Vec::new();
    for block in body.split("\n\n").filter(|b| !b.trim().is_empty()) {
        let mut r = csv::Reader::from_reader(block.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let rows = r
            .records()
            .map(|rec| {
                let rec = rec.map_err(|e| bad(e.to_string()))?;
                let v = rec[1].parse::<f64>().map_err(|e| bad(e.to_string()))?;
                Ok((rec[0].to_string(), v))
            })
            .collect::<Result<Vec<_>>>()?;
        match (&header[0], &header[1]) {
            ("mode", "eps") => {
                errors = Some(
                    rows.into_iter()
                        .map(|(k, v)| k.parse().map(|n| (n, v)).map_err(|_| bad(k)))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            ("phase", "seconds") => phases = rows,
            (a, b) => return Err(bad(format!("unknown table {a},{b}"))),
        }
    }
    Ok((errors, phases))
}

/// Write `report` to `path`, or to standard output when `path` is `None`.
pub fn emit(report: &RunReport, format: OutputFormat, path: Option<&Path>) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => to_csv(report)?,
        OutputFormat::Json => to_json(report)? + "\n",
    };
    match path {
        Some(p) => fs::write(p, text).map_err(|e| FmmError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(FmmError::from),
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &FmmError) -> i32 {
    match e {
        FmmError::Config(_) | FmmError::Domain(_) => 1,
        FmmError::Singular(_) | FmmError::PrecisionLoss(_) | FmmError::Convergence(_) => 2,
        FmmError::Io(_) => 3,
    }
}
