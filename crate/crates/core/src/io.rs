//! File formats: density/field text matrices, 16-bit PGM images, mask files,
//! and the tabular exports of the analysis steps.
//!
//! Text matrices and images are laid out as the domain is drawn: `ny` rows of
//! `nx` values with the top row first. Masked cells are `nan` in text and
//! white in images.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use image::codecs::pnm::{GraymapHeader, PnmEncoder, PnmHeader, SampleEncoding};
use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::grid::CartesianGrid;
use crate::optimizer::HistoryRecord;
use crate::stress::NodalTensorField;
use crate::topology::{DegenerateKind, TopologicalSkeleton};

/// Nine significant digits, fixed notation where it stays short.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = v.abs().log10().floor() as i32;
    let s = if (-5..9).contains(&exp) {
        format!("{:.*}", (8 - exp) as usize, v)
    } else {
        return format!("{v:.8e}");
    };
    // Rounding can carry into a new digit (9.9999999996 -> 10.00000000); the
    // extra trailing digit is harmless, so only trim zeros.
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

pub fn format_field_text(values: &[f64], grid: &CartesianGrid) -> String {
    assert_eq!(values.len(), grid.num_elements());
    let mut out = String::with_capacity(values.len() * 12);
    for j in (0..grid.ny()).rev() {
        for i in 0..grid.nx() {
            if i > 0 {
                out.push(' ');
            }
            match grid.element_at(i as isize, j as isize) {
                Some(e) => out.push_str(&format_sig9(values[e])),
                None => out.push_str("nan"),
            }
        }
        out.push('\n');
    }
    out
}

/// A parsed text matrix, cells in domain layout (row 0 = bottom), `None` for `nan`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMatrix {
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<Option<f64>>,
}

impl FieldMatrix {
    /// Element values on `grid`; `nan` cells must coincide with masked cells.
    pub fn to_field(&self, grid: &CartesianGrid) -> Result<Vec<f64>> {
        let fmt = |message: String| Error::Format { what: "field matrix", message };
        if (self.nx, self.ny) != (grid.nx(), grid.ny()) {
            return Err(fmt(format!(
                "matrix is {}x{}, grid is {}x{}",
                self.nx,
                self.ny,
                grid.nx(),
                grid.ny()
            )));
        }
        let mut out = vec![0.0; grid.num_elements()];
        for j in 0..self.ny {
            for i in 0..self.nx {
                let cell = self.cells[j * self.nx + i];
                match (grid.element_at(i as isize, j as isize), cell) {
                    (Some(e), Some(v)) => out[e] = v,
                    (None, None) => {}
                    (Some(_), None) => return Err(fmt(format!("nan at active cell ({i}, {j})"))),
                    (None, Some(_)) => return Err(fmt(format!("value at masked cell ({i}, {j})"))),
                }
            }
        }
        Ok(out)
    }
}

pub fn parse_field_text(text: &str) -> Result<FieldMatrix> {
    let fmt = |message: String| Error::Format { what: "field matrix", message };
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                if tok.eq_ignore_ascii_case("nan") {
                    return Ok(None);
                }
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(fmt(format!("line {}: bad value '{tok}'", k + 1))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(fmt(format!(
                    "line {}: {} values, expected {}",
                    k + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(fmt("no rows".into()));
    }
    let (nx, ny) = (rows[0].len(), rows.len());
    let cells = rows.into_iter().rev().flatten().collect();
    Ok(FieldMatrix { nx, ny, cells })
}

/// 16-bit binary PGM with `gray = round((1 - rho) * 65535)`, top row first.
pub fn encode_density_pgm(rho: &[f64], grid: &CartesianGrid) -> Vec<u8> {
    let (w, h) = (grid.nx() as u32, grid.ny() as u32);
    let img = ImageBuffer::from_fn(w, h, |i, row| {
        let j = grid.ny() - 1 - row as usize;
        Luma([match grid.element_at(i as isize, j as isize) {
            Some(e) => ((1.0 - rho[e].clamp(0.0, 1.0)) * 65535.0).round() as u16,
            None => u16::MAX,
        }])
    });
    let mut out = Vec::new();
    let header = PnmHeader::from(GraymapHeader {
        encoding: SampleEncoding::Binary,
        width: w,
        height: h,
        maxwhite: 65535,
    });
    img.write_with_encoder(PnmEncoder::new(&mut out).with_header(header))
        .expect("in-memory PGM encoding cannot fail");
    out
}

/// Active-cell mask, row 0 = bottom, as [`CartesianGrid::with_mask`] expects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub nx: usize,
    pub ny: usize,
    pub active: Vec<bool>,
}

/// Mask file: `ny` lines of `nx` characters, top row first. `1` or `#` marks
/// an active cell, `0` or `.` an empty one. Blank lines are ignored.
pub fn parse_mask(text: &str) -> Result<Mask> {
    let fmt = |message: String| Error::Format { what: "mask file", message };
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let row = line
            .chars()
            .map(|c| match c {
                '1' | '#' => Ok(true),
                '0' | '.' => Ok(false),
                _ => Err(fmt(format!("line {}: unexpected character {c:?}", k + 1))),
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(fmt(format!("line {}: row length {} differs from {}", k + 1, row.len(), rows[0].len())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(fmt("mask is empty".into()));
    }
    let (nx, ny) = (rows[0].len(), rows.len());
    Ok(Mask {
        nx,
        ny,
        active: rows.into_iter().rev().flatten().collect(),
    })
}

pub fn format_mask(grid: &CartesianGrid) -> String {
    let mut out = String::new();
    for j in (0..grid.ny()).rev() {
        for i in 0..grid.nx() {
            out.push(if grid.element_at(i as isize, j as isize).is_some() { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

fn kind_name(kind: Option<DegenerateKind>) -> &'static str {
    kind.map(|k| k.name()).unwrap_or("unstable")
}

pub fn format_degenerate_points(skeleton: &TopologicalSkeleton) -> String {
    let mut out = String::from("x\ty\tkind\ta\tb\tc\td\tdelta\tslopes\n");
    for p in &skeleton.points {
        let g = &p.gradient;
        let slopes: Vec<String> = p.tangent_slopes.iter().map(|s| format!("{s:.9}")).collect();
        let _ = writeln!(
            out,
            "{:.9}\t{:.9}\t{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{}",
            p.position[0],
            p.position[1],
            kind_name(p.kind),
            g.a,
            g.b,
            g.c,
            g.d,
            g.delta,
            if slopes.is_empty() { "-".into() } else { slopes.join(",") }
        );
    }
    out
}

/// One block per separatrix: a `#` header line, then `x y` vertex lines,
/// blocks separated by a blank line.
pub fn format_skeleton(skeleton: &TopologicalSkeleton) -> String {
    let mut out = String::new();
    for (k, s) in skeleton.separatrices.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let family = s.line.family.name();
        let _ = writeln!(
            out,
            "# separatrix {k} source {} family {family} angle {:.6} termination {} vertices {}",
            s.source,
            s.launch_angle_degrees(),
            s.line.termination.name(),
            s.line.vertices.len()
        );
        for v in &s.line.vertices {
            let _ = writeln!(out, "{:.9} {:.9}", v[0], v[1]);
        }
    }
    out
}

pub fn format_nodal_stress(field: &NodalTensorField) -> String {
    let grid = field.grid();
    let mut out = String::from("node\tx\ty\tsxx\tsyy\ttxy\n");
    for n in 0..grid.num_nodes() {
        if !grid.node_is_attached(n) {
            continue;
        }
        let [x, y] = grid.node_coords(n);
        let t = field.node(n);
        let _ = writeln!(out, "{n}\t{x}\t{y}\t{:e}\t{:e}\t{:e}", t.sxx, t.syy, t.txy);
    }
    out
}

pub const HISTORY_HEADER: &str = "iteration,beta,compliance,g_local,g_global,sharpness,mean_density";

pub fn format_history_row(r: &HistoryRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.iteration,
        r.beta,
        r.compliance,
        r.g_local,
        r.g_global.map(|g| g.to_string()).unwrap_or_default(),
        r.sharpness,
        r.mean_density
    )
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_ref()).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.txt` and `<stem>.pgm`.
pub fn write_density_field(rho: &[f64], grid: &CartesianGrid, dir: &Path, stem: &str) -> Result<()> {
    write_file(&dir.join(format!("{stem}.txt")), format_field_text(rho, grid))?;
    write_file(&dir.join(format!("{stem}.pgm")), encode_density_pgm(rho, grid))
}

pub fn read_field_text(path: &Path, grid: &CartesianGrid) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
    parse_field_text(&text)?.to_field(grid)
}
