//! Design-variable initialization from the topological skeleton.

use crate::grid::CartesianGrid;
use crate::topology::TopologicalSkeleton;

/// Does the segment `a-b` meet the closed axis-aligned box `[lo, hi]`?
pub fn segment_meets_box(a: [f64; 2], b: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        let d = b[k] - a[k];
        if d == 0.0 {
            if a[k] < lo[k] || a[k] > hi[k] {
                return false;
            }
            continue;
        }
        let (mut s0, mut s1) = ((lo[k] - a[k]) / d, (hi[k] - a[k]) / d);
        if s0 > s1 {
            std::mem::swap(&mut s0, &mut s1);
        }
        t0 = t0.max(s0);
        t1 = t1.min(s1);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Active elements whose closed unit square is touched by any polyline segment.
pub fn supercover<'a>(
    grid: &CartesianGrid,
    polylines: impl IntoIterator<Item = &'a [[f64; 2]]>,
) -> Vec<bool> {
    let mut hit = vec![false; grid.num_elements()];
    let mut mark = |a: [f64; 2], b: [f64; 2]| {
        let i0 = (a[0].min(b[0]).floor() as isize - 1).max(0);
        let i1 = (a[0].max(b[0]).floor() as isize).min(grid.nx() as isize - 1);
        let j0 = (a[1].min(b[1]).floor() as isize - 1).max(0);
        let j1 = (a[1].max(b[1]).floor() as isize).min(grid.ny() as isize - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let Some(e) = grid.element_at(i, j) else { continue };
                if !hit[e] {
                    let lo = [i as f64, j as f64];
                    hit[e] = segment_meets_box(a, b, lo, [lo[0] + 1.0, lo[1] + 1.0]);
                }
            }
        }
    };
    for line in polylines {
        match line {
            [] => {}
            [p] => mark(*p, *p),
            _ => line.windows(2).for_each(|w| mark(w[0], w[1])),
        }
    }
    hit
}

/// `φ = 1` on every element touched by a separatrix, `φ = α_e` elsewhere.
pub fn skeleton_initialization(
    skeleton: &TopologicalSkeleton,
    grid: &CartesianGrid,
    alpha: &[f64],
) -> Vec<f64> {
    let hit = supercover(
        grid,
        skeleton.separatrices.iter().map(|s| s.line.vertices.as_slice()),
    );
    hit.iter()
        .zip(alpha)
        .map(|(&h, &a)| if h { 1.0 } else { a })
        .collect()
}
