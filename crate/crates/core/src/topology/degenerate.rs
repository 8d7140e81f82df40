//! Degenerate points of a cell-wise bilinear tensor field.

use crate::error::{Error, Result};
use crate::stress::{bilinear_weights, StressTensor};

/// Outcome of the per-cell sign pre-filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    /// No degenerate point can lie inside the cell.
    Excluded,
    Candidate,
}

/// Excludes a cell when `sxx - syy` or `txy` is strictly positive at all four
/// corners, or strictly negative at all four.
pub fn classify_element(cell: &[StressTensor; 4]) -> CellClass {
    let uniform = |vals: [f64; 4]| vals.iter().all(|&v| v > 0.0) || vals.iter().all(|&v| v < 0.0);
    if uniform(cell.map(|t| t.diff())) || uniform(cell.map(|t| t.txy)) {
        CellClass::Excluded
    } else {
        CellClass::Candidate
    }
}

const MAX_NEWTON: usize = 50;
const MERGE_DIST: f64 = 1e-6;
const STARTS: [[f64; 2]; 5] = [[0.25, 0.25], [0.75, 0.25], [0.75, 0.75], [0.25, 0.75], [0.5, 0.5]];

/// Bilinear residual pair `(sxx - syy, txy)` and its Jacobian at local `(u, v)`.
fn residual(d: &[f64; 4], t: &[f64; 4], u: f64, v: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let w = bilinear_weights(u, v);
    let val = |c: &[f64; 4]| c.iter().zip(w).map(|(c, w)| c * w).sum::<f64>();
    let du = |c: &[f64; 4]| (c[1] - c[0]) * (1.0 - v) + (c[2] - c[3]) * v;
    let dv = |c: &[f64; 4]| (c[3] - c[0]) * (1.0 - u) + (c[2] - c[1]) * u;
    ([val(d), val(t)], [[du(d), dv(d)], [du(t), dv(t)]])
}

/// All roots of `sxx - syy = 0, txy = 0` in the closed unit cell, in local
/// coordinates, found by multi-start Newton iteration.
pub fn locate_degenerate_points(cell: &[StressTensor; 4]) -> Vec<[f64; 2]> {
    let d = cell.map(|t| t.diff());
    let t = cell.map(|t| t.txy);
    let scale = d.iter().chain(&t).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let tol = 1e-10 * scale;
    let mut roots: Vec<[f64; 2]> = Vec::new();
    for start in STARTS {
        let [mut u, mut v] = start;
        let mut converged = false;
        for _ in 0..MAX_NEWTON {
            let (r, j) = residual(&d, &t, u, v);
            if r[0].hypot(r[1]) <= tol {
                converged = true;
                break;
            }
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det == 0.0 || !det.is_finite() {
                break;
            }
            u -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            v -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            if !(u.is_finite() && v.is_finite()) || u.abs() > 1e3 || v.abs() > 1e3 {
                break;
            }
        }
        if !converged {
            continue;
        }
        const SLACK: f64 = 1e-9;
        if !(-SLACK..=1.0 + SLACK).contains(&u) || !(-SLACK..=1.0 + SLACK).contains(&v) {
            continue;
        }
        let p = [u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)];
        if roots
            .iter()
            .all(|q| (q[0] - p[0]).hypot(q[1] - p[1]) > MERGE_DIST)
        {
            roots.push(p);
        }
    }
    roots
}

/// First root of [`locate_degenerate_points`], if any.
pub fn locate_degenerate_point(cell: &[StressTensor; 4]) -> Option<[f64; 2]> {
    locate_degenerate_points(cell).into_iter().next()
}

/// Tensor derivatives at a point: `a = ½∂(sxx-syy)/∂x`, `b = ½∂(sxx-syy)/∂y`,
/// `c = ∂txy/∂x`, `d = ∂txy/∂y`, and the rotation invariant `delta = ad - bc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorGradient {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub delta: f64,
}

impl TensorGradient {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self {
            a,
            b,
            c,
            d,
            delta: a * d - b * c,
        }
    }

    fn magnitude(&self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }
}

/// Analytic gradient of the bilinear interpolant at local `(u, v)`; unit
/// cells make local and domain derivatives coincide.
pub fn tensor_gradient_at(cell: &[StressTensor; 4], u: f64, v: f64) -> TensorGradient {
    let d = cell.map(|t| t.diff());
    let t = cell.map(|t| t.txy);
    let (_, j) = residual(&d, &t, u, v);
    TensorGradient::new(0.5 * j[0][0], 0.5 * j[0][1], j[1][0], j[1][1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DegenerateKind {
    Trisector,
    Wedge,
}

impl DegenerateKind {
    pub fn name(&self) -> &'static str {
        match self {
            DegenerateKind::Trisector => "trisector",
            DegenerateKind::Wedge => "wedge",
        }
    }
}

/// Trisector when `delta < 0`, wedge when `delta > 0`; points with
/// `|delta| <= 1e-12 (a² + b² + c² + d² + 1)` are structurally unstable.
pub fn classify_degenerate_point(g: &TensorGradient) -> Result<DegenerateKind> {
    let eps = 1e-12 * (g.magnitude() + 1.0);
    if g.delta.abs() <= eps {
        return Err(Error::Topology(format!(
            "structurally unstable degenerate point (delta = {:e})",
            g.delta
        )));
    }
    Ok(if g.delta < 0.0 {
        DegenerateKind::Trisector
    } else {
        DegenerateKind::Wedge
    })
}

const DEDUP: f64 = 1e-9;

/// Real roots of `d x³ + (c + 2b) x² + (2a - d) x - c = 0`, ascending. A
/// vanishing leading coefficient contributes a vertical tangent, reported as
/// `f64::INFINITY`.
pub fn separatrix_tangents(g: &TensorGradient, kind: DegenerateKind) -> Result<Vec<f64>> {
    let coeffs = [g.d, g.c + 2.0 * g.b, 2.0 * g.a - g.d, -g.c];
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Err(Error::Topology("tangent cubic vanishes identically".into()));
    }
    let lead = coeffs.iter().position(|c| c.abs() > 1e-12 * scale).unwrap_or(3);
    let mut roots = polynomial_roots(&coeffs[lead..]);
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= DEDUP * (1.0 + b.abs()));
    if lead > 0 {
        roots.push(f64::INFINITY);
    }
    if roots.is_empty() && kind == DegenerateKind::Trisector {
        return Err(Error::Topology("trisector without a real separatrix tangent".into()));
    }
    Ok(roots)
}

/// Real roots of a polynomial of degree <= 3 given highest coefficient first.
fn polynomial_roots(c: &[f64]) -> Vec<f64> {
    match c.len() {
        0 | 1 => Vec::new(),
        2 => vec![-c[1] / c[0]],
        3 => {
            let (a, b, k) = (c[0], c[1], c[2]);
            let disc = b * b - 4.0 * a * k;
            if disc < 0.0 {
                Vec::new()
            } else {
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                let mut r = Vec::new();
                if q != 0.0 {
                    r.push(q / a);
                    r.push(k / q);
                } else {
                    r.push(0.0);
                }
                r
            }
        }
        _ => {
            let (a2, a1, a0) = (c[1] / c[0], c[2] / c[0], c[3] / c[0]);
            let q = (a2 * a2 - 3.0 * a1) / 9.0;
            let r = (2.0 * a2 * a2 * a2 - 9.0 * a2 * a1 + 27.0 * a0) / 54.0;
            let shift = a2 / 3.0;
            let raw = if r * r < q * q * q {
                let theta = (r / (q * q * q).sqrt()).clamp(-1.0, 1.0).acos();
                let m = -2.0 * q.sqrt();
                let tau = std::f64::consts::TAU;
                vec![
                    m * (theta / 3.0).cos() - shift,
                    m * ((theta + tau) / 3.0).cos() - shift,
                    m * ((theta - tau) / 3.0).cos() - shift,
                ]
            } else {
                let big = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
                let small = if big == 0.0 { 0.0 } else { q / big };
                vec![big + small - shift]
            };
            raw.into_iter().map(|x| polish(c, x)).collect()
        }
    }
}

fn polish(c: &[f64], mut x: f64) -> f64 {
    for _ in 0..4 {
        let p = ((c[0] * x + c[1]) * x + c[2]) * x + c[3];
        let dp = (3.0 * c[0] * x + 2.0 * c[1]) * x + c[2];
        if dp == 0.0 || p == 0.0 {
            break;
        }
        let step = p / dp;
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// Unit direction of a tangent slope, with nonnegative x (vertical points up).
pub fn slope_direction(slope: f64) -> [f64; 2] {
    if slope.is_infinite() {
        [0.0, 1.0]
    } else {
        let n = (1.0 + slope * slope).sqrt();
        [1.0 / n, slope / n]
    }
}
