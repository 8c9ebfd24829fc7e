//! File formats: frame files, run manifests, CSV tables, SVG plots and
//! image patches.
//!
//! A frame file is one JSON header line followed by `m` CSV rows of `N`
//! values each. Values use shortest round-trip formatting (see [`num`]), so
//! a write/read cycle reproduces the payload bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{mutual_coherence, welch_bound, Frame, FrameMetrics};
use crate::numerics::{norm2, DenseMatrix};
use crate::sidco::{SidcoConfig, SweepReport};

pub const FRAME_FORMAT_VERSION: u32 = 1;
/// Agreement required between a stored and a recomputed coherence.
pub const COHERENCE_CHECK_TOL: f64 = 1e-8;
/// Unit-norm tolerance applied to loaded columns.
pub const LOAD_NORM_TOL: f64 = 1e-8;
/// Patches with norm below this after mean removal are discarded.
pub const PATCH_NORM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FrameHeader {
    pub format_version: u32,
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub creator: String,
    pub seed: Option<u64>,
    pub coherence: f64,
    pub welch_bound: f64,
    pub nonneg: bool,
}

impl FrameHeader {
    /// Header describing `frame`, with coherence and Welch bound computed.
    pub fn describe(frame: &Frame, creator: &str, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            format_version: FRAME_FORMAT_VERSION,
            m: frame.m(),
            n: frame.n(),
            creator: creator.to_owned(),
            seed,
            coherence: mutual_coherence(frame),
            welch_bound: welch_bound(frame.m(), frame.n())?,
            nonneg: frame.is_nonnegative(),
        })
    }
}

/// Serializes a frame file into a string.
pub fn format_frame(frame: &Frame, header: &FrameHeader) -> Result<String> {
    let mut out = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    out.push('\n');
    let v = frame.vectors();
    for i in 0..frame.m() {
        for j in 0..frame.n() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{:?}", v[(i, j)]).expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_frame(path: &Path, frame: &Frame, header: &FrameHeader) -> Result<()> {
    fs::write(path, format_frame(frame, header)?)?;
    Ok(())
}

/// Parses a frame file, checking dimensions, unit columns and the stored
/// coherence.
pub fn parse_frame(text: &str) -> Result<(Frame, FrameHeader)> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| Error::Format("empty frame file".into()))?;
    let header: FrameHeader = serde_json::from_str(head).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.format_version != FRAME_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {} (expected {FRAME_FORMAT_VERSION})",
            header.format_version
        )));
    }
    let (m, n) = (header.m, header.n);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("payload row {}: {e}", k + 1)))?;
        if row.len() != n {
            return Err(Error::Format(format!("payload row {} has {} values, header says N = {n}", k + 1, row.len())));
        }
        rows.push(row);
    }
    if rows.len() != m {
        return Err(Error::Format(format!("payload has {} rows, header says m = {m}", rows.len())));
    }
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let matrix = DenseMatrix::from_rows(&refs).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(j) = matrix.columns().position(|c| (norm2(c) - 1.0).abs() > LOAD_NORM_TOL) {
        return Err(Error::Format(format!("column {j} is not unit norm")));
    }
    let frame = Frame::with_tolerance(matrix, LOAD_NORM_TOL).map_err(|e| Error::Format(e.to_string()))?;
    let mu = mutual_coherence(&frame);
    if (mu - header.coherence).abs() > COHERENCE_CHECK_TOL {
        return Err(Error::Format(format!("header coherence {} does not match recomputed {mu}", header.coherence)));
    }
    Ok((frame, header))
}

pub fn read_frame(path: &Path) -> Result<(Frame, FrameHeader)> {
    parse_frame(&fs::read_to_string(path)?)
}

/// Where and with what a run was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
    pub debug_build: bool,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_owned(),
            os: std::env::consts::OS.to_owned(),
            arch: std::env::consts::ARCH.to_owned(),
            debug_build: cfg!(debug_assertions),
        }
    }
}

/// Everything needed to audit and reproduce one design run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SidcoConfig,
    pub raw_initial_coherence: Option<f64>,
    pub initial_coherence: f64,
    pub trace: Vec<f64>,
    pub escapes: Vec<usize>,
    pub best_sweep: usize,
    pub wall_clock_seconds: f64,
    pub final_metrics: FrameMetrics,
    pub environment: Environment,
}

impl RunManifest {
    pub fn new(config: &SidcoConfig, report: &SweepReport) -> Self {
        Self {
            config: config.clone(),
            raw_initial_coherence: report.raw_initial_coherence,
            initial_coherence: report.initial_coherence,
            trace: report.trace.clone(),
            escapes: report.escapes.clone(),
            best_sweep: report.best_sweep,
            wall_clock_seconds: report.total_seconds(),
            final_metrics: report.final_metrics,
            environment: Environment::current(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// A CSV table with `# key=value` comment lines echoing the configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub echo: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { echo: Vec::new(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn echo(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.echo.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::InvalidInput(format!("row has {} fields, table has {}", row.len(), self.header.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.echo {
            writeln!(out, "# {k}={v}").expect("writing to a String");
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

/// Shortest round-trip text for a real, switching to exponent form for very
/// large or small magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Reads a CSV table written by [`CsvTable::render`].
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let file = fs::File::open(path)?;
    let mut table = CsvTable::default();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# ") {
            let (k, v) = rest.split_once('=').ok_or_else(|| Error::Format(format!("bad echo line: {line}")))?;
            table.echo.push((k.to_owned(), v.to_owned()));
        } else if table.header.is_empty() {
            table.header = line.split(',').map(str::to_owned).collect();
        } else if !line.is_empty() {
            table.push(line.split(',').map(str::to_owned).collect())?;
        }
    }
    Ok(table)
}

/// One named line in an SVG plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// A static line plot with linear axes.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape_xml(title));
    let _ = writeln!(s, r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#, h - bottom, w - right);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(fx),
            h - bottom + 16.0,
            tick(fx)
        );
        let _ =
            writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, py(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0,
        escape_xml(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        escape_xml(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        let ly = top + 14.0 * (k as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - right - 150.0,
            w - right - 130.0,
            w - right - 125.0,
            ly + 4.0,
            escape_xml(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A grayscale image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    /// Loads a PGM or PNG file and converts it to 8-bit luma.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?.to_luma8();
        let (width, height) = (img.width() as usize, img.height() as usize);
        let pixels = img.into_raw().into_iter().map(|p| p as f64 / 255.0).collect();
        Ok(Self { width, height, pixels })
    }

    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Non-overlapping `b×b` blocks with their mean removed, scaled to unit
/// norm. Flat blocks are skipped. Each block is read column by column.
pub fn extract_patches(img: &GrayImage, b: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if b == 0 {
        return out;
    }
    for by in 0..img.height / b {
        for bx in 0..img.width / b {
            let mut p = Vec::with_capacity(b * b);
            for x in 0..b {
                for y in 0..b {
                    p.push(img.pixel(bx * b + x, by * b + y));
                }
            }
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            p.iter_mut().for_each(|v| *v -= mean);
            let nrm = norm2(&p);
            if nrm >= PATCH_NORM_FLOOR {
                p.iter_mut().for_each(|v| *v /= nrm);
                out.push(p);
            }
        }
    }
    out
}

/// Image files (`.pgm`, `.png`) in a directory, sorted by name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Patches from every image in `dir`, as the columns of a `b²×M` matrix.
pub fn patch_matrix(dir: &Path, b: usize) -> Result<DenseMatrix> {
    let mut cols = Vec::new();
    for f in image_files(dir)? {
        cols.extend(extract_patches(&GrayImage::load(&f)?, b));
    }
    if cols.is_empty() {
        return Err(Error::InvalidInput(format!("no usable patches in {}", dir.display())));
    }
    DenseMatrix::from_columns(&cols)
}

/// Writes a binary PGM (P5) file; handy for fixtures.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::InvalidInput("pixel count does not match dimensions".into()));
    }
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}
