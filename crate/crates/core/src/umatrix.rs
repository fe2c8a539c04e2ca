//! U-matrix construction and rendering.
//!
//! Edges join 4-adjacent units. The expanded grid interleaves units and
//! edges: unit `(r, c)` sits at cell `(2r, 2c)`, the edge to its right at
//! `(2r, 2c + 1)` and the edge below it at `(2r + 1, 2c)`. Unit cells hold
//! the mean of their incident edge weights; the junction cells at odd/odd
//! positions hold the mean of the four edges around them.
//!
//! # PGM layout
//!
//! `render_umatrix` writes binary PGM (`P5`, maxval 255). Each expanded cell
//! is a `scale x scale` pixel block. Cell shade is
//! `255 - round(223 * value / max_value)`, so distances occupy `[32, 255]`
//! with white for zero, and a map with no spread renders entirely white.
//! Pixel value `0` is reserved for anchor markers: the block of an anchored
//! unit cell has its centre (inset by `scale / 4` pixels) painted black.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::euclidean;
use crate::error::{Error, Result};
use crate::projection::Anchor;
use crate::som::Som;

/// Darkest shade used for distances; darker values are reserved for markers.
pub const MIN_SHADE: u8 = 32;
pub const MARKER_SHADE: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UMatrix {
    rows: usize,
    cols: usize,
    /// `horizontal[r * (cols - 1) + c]` joins `(r, c)` and `(r, c + 1)`.
    horizontal: Vec<f64>,
    /// `vertical[r * cols + c]` joins `(r, c)` and `(r + 1, c)`.
    vertical: Vec<f64>,
}

impl UMatrix {
    pub fn from_som(som: &Som) -> Result<Self> {
        let (rows, cols) = (som.rows(), som.cols());
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidConfig("U-matrix needs rows >= 2 and cols >= 2".into()));
        }
        let mut horizontal = Vec::with_capacity(rows * (cols - 1));
        for r in 0..rows {
            for c in 0..cols - 1 {
                let (a, b) = (som.unit_index(r, c), som.unit_index(r, c + 1));
                horizontal.push(euclidean(som.weights(a), som.weights(b)));
            }
        }
        let mut vertical = Vec::with_capacity((rows - 1) * cols);
        for r in 0..rows - 1 {
            for c in 0..cols {
                let (a, b) = (som.unit_index(r, c), som.unit_index(r + 1, c));
                vertical.push(euclidean(som.weights(a), som.weights(b)));
            }
        }
        Ok(Self { rows, cols, horizontal, vertical })
    }

    /// Builds a U-matrix from explicit edge weights (see field layout).
    pub fn from_edge_weights(rows: usize, cols: usize, horizontal: Vec<f64>, vertical: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidConfig("U-matrix needs rows >= 2 and cols >= 2".into()));
        }
        if horizontal.len() != rows * (cols - 1) {
            return Err(Error::DimensionMismatch { expected: rows * (cols - 1), got: horizontal.len() });
        }
        if vertical.len() != (rows - 1) * cols {
            return Err(Error::DimensionMismatch { expected: (rows - 1) * cols, got: vertical.len() });
        }
        if horizontal.iter().chain(&vertical).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("edge weights must be finite and non-negative".into()));
        }
        Ok(Self { rows, cols, horizontal, vertical })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_units(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_edges(&self) -> usize {
        self.horizontal.len() + self.vertical.len()
    }

    /// All edges, horizontal ones first, each with `a < b`.
    pub fn edges(&self) -> Vec<Edge> {
        let (rows, cols) = (self.rows, self.cols);
        let mut out = Vec::with_capacity(self.n_edges());
        for r in 0..rows {
            for c in 0..cols - 1 {
                let a = r * cols + c;
                out.push(Edge { a, b: a + 1, weight: self.horizontal[r * (cols - 1) + c] });
            }
        }
        for r in 0..rows - 1 {
            for c in 0..cols {
                let a = r * cols + c;
                out.push(Edge { a, b: a + cols, weight: self.vertical[r * cols + c] });
            }
        }
        out
    }

    /// Weight of the edge between two units, if they are 4-adjacent.
    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let (a, b) = (u.min(v), u.max(v));
        if b >= self.n_units() {
            return None;
        }
        let (ra, ca) = (a / self.cols, a % self.cols);
        if b == a + 1 && ca + 1 < self.cols {
            Some(self.horizontal[ra * (self.cols - 1) + ca])
        } else if b == a + self.cols {
            Some(self.vertical[ra * self.cols + ca])
        } else {
            None
        }
    }

    pub fn expanded_rows(&self) -> usize {
        2 * self.rows - 1
    }

    pub fn expanded_cols(&self) -> usize {
        2 * self.cols - 1
    }

    /// The `(2R - 1) x (2C - 1)` rendering grid, row-major.
    pub fn expanded(&self) -> Vec<f64> {
        let (rows, cols) = (self.rows, self.cols);
        let (er, ec) = (self.expanded_rows(), self.expanded_cols());
        let h = |r: usize, c: usize| self.horizontal[r * (cols - 1) + c];
        let v = |r: usize, c: usize| self.vertical[r * cols + c];
        let mut grid = vec![0.0; er * ec];
        for i in 0..er {
            for j in 0..ec {
                let (r, c) = (i / 2, j / 2);
                grid[i * ec + j] = match (i % 2, j % 2) {
                    (0, 0) => {
                        let mut sum = 0.0;
                        let mut n = 0.0;
                        if c > 0 {
                            sum += h(r, c - 1);
                            n += 1.0;
                        }
                        if c + 1 < cols {
                            sum += h(r, c);
                            n += 1.0;
                        }
                        if r > 0 {
                            sum += v(r - 1, c);
                            n += 1.0;
                        }
                        if r + 1 < rows {
                            sum += v(r, c);
                            n += 1.0;
                        }
                        sum / n
                    }
                    (0, 1) => h(r, c),
                    (1, 0) => v(r, c),
                    _ => (h(r, c) + h(r + 1, c) + v(r, c) + v(r, c + 1)) / 4.0,
                };
            }
        }
        grid
    }
}

/// Expanded-grid cell of a unit.
pub fn expanded_cell(um: &UMatrix, unit: usize) -> (usize, usize) {
    (2 * (unit / um.cols), 2 * (unit % um.cols))
}

#[derive(Debug, Clone)]
pub struct RenderOptions {
    /// Pixels per expanded cell.
    pub scale: usize,
    pub svg: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { scale: 8, svg: true }
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub pgm: PathBuf,
    pub svg: Option<PathBuf>,
    pub anchors_csv: PathBuf,
}

fn shades(grid: &[f64]) -> Vec<u8> {
    let max = grid.iter().cloned().fold(0.0, f64::max);
    let span = f64::from(255 - MIN_SHADE);
    grid.iter().map(|&v| if max > 0.0 { 255 - (span * v / max).round() as u8 } else { 255 }).collect()
}

/// Encodes the expanded grid as a binary PGM image.
pub fn encode_pgm(um: &UMatrix, anchors: &[Anchor], scale: usize) -> Vec<u8> {
    let scale = scale.max(1);
    let (er, ec) = (um.expanded_rows(), um.expanded_cols());
    let (w, h) = (ec * scale, er * scale);
    let cell_shades = shades(&um.expanded());
    let mut pixels = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            pixels[y * w + x] = cell_shades[(y / scale) * ec + x / scale];
        }
    }
    let inset = scale / 4;
    for anchor in anchors {
        let (i, j) = expanded_cell(um, anchor.unit);
        for y in i * scale + inset..(i + 1) * scale - inset {
            for x in j * scale + inset..(j + 1) * scale - inset {
                pixels[y * w + x] = MARKER_SHADE;
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}

fn encode_svg(um: &UMatrix, anchors: &[Anchor], scale: usize) -> String {
    let scale = scale.max(1);
    let (er, ec) = (um.expanded_rows(), um.expanded_cols());
    let cell_shades = shades(&um.expanded());
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#, ec * scale, er * scale);
    for i in 0..er {
        for j in 0..ec {
            let g = cell_shades[i * ec + j];
            let border = if i % 2 == 0 && j % 2 == 0 { r#" stroke="blue" stroke-width="0.5""# } else { "" };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{scale}" height="{scale}" fill="rgb({g},{g},{g})"{border}/>"#,
                j * scale,
                i * scale
            );
        }
    }
    for a in anchors {
        let (i, j) = expanded_cell(um, a.unit);
        let (cx, cy) = ((j as f64 + 0.5) * scale as f64, (i as f64 + 0.5) * scale as f64);
        let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="{}" fill="red"/>"#, scale as f64 / 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{cy}" font-size="{}" fill="red">{}</text>"#,
            cx + scale as f64 / 3.0,
            scale,
            a.sample_id
        );
    }
    s.push_str("</svg>\n");
    s
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Writes the PGM image to `path`, plus `<stem>_anchors.csv` and (optionally) `<stem>.svg`.
pub fn render_umatrix(
    um: &UMatrix,
    anchors: &[Anchor],
    path: impl AsRef<Path>,
    opts: &RenderOptions,
) -> Result<RenderOutput> {
    let path = path.as_ref();
    for a in anchors {
        if a.unit >= um.n_units() {
            return Err(Error::InvalidConfig(format!("anchor unit {} outside the map", a.unit)));
        }
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&encode_pgm(um, anchors, opts.scale))?;
    f.flush()?;

    let anchors_csv = sibling(path, "_anchors.csv");
    let mut w = csv::Writer::from_path(&anchors_csv)?;
    w.write_record(["sample_id", "unit", "row", "col", "expanded_row", "expanded_col"])?;
    for a in anchors {
        let (i, j) = expanded_cell(um, a.unit);
        w.write_record(&[
            a.sample_id.to_string(),
            a.unit.to_string(),
            (a.unit / um.cols).to_string(),
            (a.unit % um.cols).to_string(),
            i.to_string(),
            j.to_string(),
        ])?;
    }
    w.flush()?;

    let svg = if opts.svg {
        let p = sibling(path, ".svg");
        std::fs::write(&p, encode_svg(um, anchors, opts.scale))?;
        Some(p)
    } else {
        None
    };
    Ok(RenderOutput { pgm: path.to_path_buf(), svg, anchors_csv })
}
