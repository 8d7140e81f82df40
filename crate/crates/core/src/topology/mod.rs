//! Topology of a 2D stress tensor field: degenerate points, their
//! classification, and the separatrices that form the topological skeleton.

mod degenerate;
mod psl;

pub use degenerate::{
    classify_degenerate_point, classify_element, locate_degenerate_point, locate_degenerate_points,
    separatrix_tangents, slope_direction, tensor_gradient_at, CellClass, DegenerateKind,
    TensorGradient,
};
pub use psl::{trace_psl, Family, PrincipalStressLine, TensorSource, Termination, TraceOptions};

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stress::{principal_decomposition, NodalTensorField};

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneratePoint {
    pub position: [f64; 2],
    pub element: usize,
    /// `None` for structurally unstable points (|delta| ~ 0).
    pub kind: Option<DegenerateKind>,
    pub gradient: TensorGradient,
    pub tangent_slopes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separatrix {
    /// Index into [`TopologicalSkeleton::points`].
    pub source: usize,
    pub launch_direction: [f64; 2],
    pub line: PrincipalStressLine,
}

impl Separatrix {
    pub fn launch_angle_degrees(&self) -> f64 {
        self.launch_direction[1].atan2(self.launch_direction[0]).to_degrees()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopologicalSkeleton {
    pub points: Vec<DegeneratePoint>,
    pub separatrices: Vec<Separatrix>,
}

impl TopologicalSkeleton {
    pub fn count(&self, kind: DegenerateKind) -> usize {
        self.points.iter().filter(|p| p.kind == Some(kind)).count()
    }

    pub fn trisectors(&self) -> impl Iterator<Item = &DegeneratePoint> {
        self.points.iter().filter(|p| p.kind == Some(DegenerateKind::Trisector))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonOptions {
    /// Also trace separatrices from wedges.
    pub include_wedges: bool,
    /// Distance from the degenerate point at which each separatrix is seeded.
    pub seed_offset: f64,
    pub trace: TraceOptions,
}

impl Default for SkeletonOptions {
    fn default() -> Self {
        Self {
            include_wedges: false,
            seed_offset: 1.0,
            trace: TraceOptions::default(),
        }
    }
}

const MERGE_DIST: f64 = 1e-6;

/// Locate and classify every degenerate point of the field.
pub fn find_degenerate_points(field: &NodalTensorField) -> Vec<DegeneratePoint> {
    let grid = field.grid();
    let per_cell: Vec<Vec<DegeneratePoint>> = (0..grid.num_elements())
        .into_par_iter()
        .map(|e| {
            let cell = field.cell(e);
            if classify_element(&cell) == CellClass::Excluded {
                return Vec::new();
            }
            let (i, j) = grid.cell_of(e);
            locate_degenerate_points(&cell)
                .into_iter()
                .map(|[u, v]| {
                    let gradient = tensor_gradient_at(&cell, u, v);
                    let position = [i as f64 + u, j as f64 + v];
                    let (kind, tangent_slopes) = match classify_degenerate_point(&gradient) {
                        Ok(kind) => match separatrix_tangents(&gradient, kind) {
                            Ok(s) => (Some(kind), s),
                            Err(err) => {
                                warn!("degenerate point at {position:?}: {err}");
                                (Some(kind), Vec::new())
                            }
                        },
                        Err(err) => {
                            warn!("degenerate point at {position:?}: {err}");
                            (None, Vec::new())
                        }
                    };
                    DegeneratePoint {
                        position,
                        element: e,
                        kind,
                        gradient,
                        tangent_slopes,
                    }
                })
                .collect()
        })
        .collect();
    let mut points: Vec<DegeneratePoint> = Vec::new();
    for p in per_cell.into_iter().flatten() {
        let dup = points.iter().any(|q| {
            (q.position[0] - p.position[0]).hypot(q.position[1] - p.position[1]) <= MERGE_DIST
        });
        if !dup {
            points.push(p);
        }
    }
    points
}

/// Family whose principal direction is closest to `ray` at the probe point
/// `p + offset * ray`; retried at twice, then half the offset.
pub fn assign_ray_family<S: TensorSource + ?Sized>(
    src: &S,
    p: [f64; 2],
    ray: [f64; 2],
    offset: f64,
) -> Result<Family> {
    // Near a boundary the standard probes may fall outside; keep halving.
    let shorter = (2..12).map(|k| offset / f64::from(1 << k));
    for dist in [offset, 2.0 * offset, 0.5 * offset].into_iter().chain(shorter) {
        let q = [p[0] + dist * ray[0], p[1] + dist * ray[1]];
        let Some(t) = src.tensor_at(q[0], q[1]) else { continue };
        if !(t.anisotropy() > 1e-12 * t.norm()) {
            continue;
        }
        let d = principal_decomposition(&t);
        let a1 = (d.v1[0] * ray[0] + d.v1[1] * ray[1]).abs();
        let a2 = (d.v2[0] * ray[0] + d.v2[1] * ray[1]).abs();
        return Ok(if a1 >= a2 { Family::Major } else { Family::Minor });
    }
    Err(Error::Topology(format!(
        "no usable probe along ray {ray:?} from {p:?}"
    )))
}

/// Launch rays of a degenerate point: each tangent slope in both directions.
fn launch_rays(point: &DegeneratePoint) -> Vec<[f64; 2]> {
    point
        .tangent_slopes
        .iter()
        .flat_map(|&s| {
            let d = slope_direction(s);
            [d, [-d[0], -d[1]]]
        })
        .collect()
}

/// Degenerate points plus the separatrices traced from every trisector (and
/// every wedge when `include_wedges` is set).
pub fn extract_skeleton(field: &NodalTensorField, opts: &SkeletonOptions) -> TopologicalSkeleton {
    let points = find_degenerate_points(field);
    let separatrices = trace_separatrices(field, &points, opts);
    TopologicalSkeleton {
        points,
        separatrices,
    }
}

pub fn trace_separatrices<S: TensorSource + ?Sized>(
    src: &S,
    points: &[DegeneratePoint],
    opts: &SkeletonOptions,
) -> Vec<Separatrix> {
    let jobs: Vec<(usize, [f64; 2])> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| match p.kind {
            Some(DegenerateKind::Trisector) => true,
            Some(DegenerateKind::Wedge) => opts.include_wedges,
            None => false,
        })
        .flat_map(|(k, p)| launch_rays(p).into_iter().map(move |r| (k, r)))
        .collect();

    jobs.into_par_iter()
        .filter_map(|(source, ray)| {
            let p = points[source].position;
            let stops: Vec<[f64; 2]> = points
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != source)
                .map(|(_, q)| q.position)
                .collect();
            let family = match assign_ray_family(src, p, ray, opts.seed_offset) {
                Ok(f) => f,
                Err(err) => {
                    warn!("skipping separatrix: {err}");
                    return None;
                }
            };
            let seed = [p[0] + opts.seed_offset * ray[0], p[1] + opts.seed_offset * ray[1]];
            let line = if src.tensor_at(seed[0], seed[1]).is_some() {
                match trace_psl(src, seed, family, ray, &stops, &opts.trace) {
                    Ok(line) => line,
                    Err(err) => {
                        warn!("separatrix from {p:?} failed: {err}");
                        return None;
                    }
                }
            } else {
                // Seed beyond the boundary: the separatrix is the stub to the boundary.
                let (mut lo, mut hi) = (0.0, opts.seed_offset);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if src.tensor_at(p[0] + mid * ray[0], p[1] + mid * ray[1]).is_some() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                PrincipalStressLine {
                    family,
                    vertices: vec![p, [p[0] + lo * ray[0], p[1] + lo * ray[1]]],
                    termination: Termination::Boundary,
                }
            };
            Some(Separatrix {
                source,
                launch_direction: ray,
                line,
            })
        })
        .collect()
}
