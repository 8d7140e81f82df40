//! Principal stress line integration.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::stress::{principal_decomposition, NodalTensorField, StressTensor};

/// Anything that can be queried for a stress tensor at domain coordinates.
pub trait TensorSource: Sync {
    /// `None` outside the domain.
    fn tensor_at(&self, x: f64, y: f64) -> Option<StressTensor>;
}

impl TensorSource for NodalTensorField {
    fn tensor_at(&self, x: f64, y: f64) -> Option<StressTensor> {
        self.eval(x, y).ok()
    }
}

impl<F> TensorSource for F
where
    F: Fn(f64, f64) -> Option<StressTensor> + Sync,
{
    fn tensor_at(&self, x: f64, y: f64) -> Option<StressTensor> {
        self(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Major,
    Minor,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Major => "major",
            Family::Minor => "minor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Boundary,
    NearDegeneratePoint,
    LoopClosed,
    StepBudget,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Boundary => "boundary",
            Termination::NearDegeneratePoint => "near-degenerate-point",
            Termination::LoopClosed => "loop-closed",
            Termination::StepBudget => "step-budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalStressLine {
    pub family: Family,
    pub vertices: Vec<[f64; 2]>,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Fixed RK4 step length in element widths.
    pub step: f64,
    /// Tracing stops on entering this radius around a stop point.
    pub stop_radius: f64,
    pub max_steps: usize,
    /// Minimum age, in steps, of a vertex that can close a loop.
    pub loop_min_steps: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            step: 0.5,
            stop_radius: 0.5,
            max_steps: 100_000,
            loop_min_steps: 10,
        }
    }
}

/// Tensors whose eigenvalue gap is below this fraction of their norm have no
/// usable principal direction.
const ISOTROPIC_REL: f64 = 1e-12;

/// Unit principal direction of `family` at `p`, oriented along `reference`.
/// `Ok(None)` outside the domain, `Err` at an isotropic point.
fn direction<S: TensorSource + ?Sized>(
    src: &S,
    p: [f64; 2],
    family: Family,
    reference: [f64; 2],
) -> std::result::Result<Option<[f64; 2]>, ()> {
    let Some(t) = src.tensor_at(p[0], p[1]) else {
        return Ok(None);
    };
    if !(t.anisotropy() > ISOTROPIC_REL * t.norm()) {
        return Err(());
    }
    let d = principal_decomposition(&t);
    let v = match family {
        Family::Major => d.v1,
        Family::Minor => d.v2,
    };
    Ok(Some(if v[0] * reference[0] + v[1] * reference[1] < 0.0 {
        [-v[0], -v[1]]
    } else {
        v
    }))
}

/// Last point of the segment `a -> b` that is still inside the domain; `a` must be inside.
fn clip_to_domain<S: TensorSource + ?Sized>(src: &S, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let p = at(mid);
        if src.tensor_at(p[0], p[1]).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

struct VertexHash {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl VertexHash {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            buckets: HashMap::new(),
        }
    }

    fn key(&self, p: [f64; 2]) -> (i64, i64) {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64)
    }

    fn insert(&mut self, p: [f64; 2], idx: usize) {
        self.buckets.entry(self.key(p)).or_default().push(idx as u32);
    }

    /// Whether a vertex with index `<= max_idx` lies within `radius` of `p`.
    fn near(&self, vertices: &[[f64; 2]], p: [f64; 2], radius: f64, max_idx: usize) -> bool {
        let (kx, ky) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = self.buckets.get(&(kx + dx, ky + dy)) {
                    for &k in b {
                        let q = vertices[k as usize];
                        if k as usize <= max_idx && (q[0] - p[0]).hypot(q[1] - p[1]) <= radius {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Integrate one principal stress line from `seed` in `initial_direction`
/// with fixed-step RK4, flipping each evaluated eigenvector onto the
/// previous step direction.
pub fn trace_psl<S: TensorSource + ?Sized>(
    src: &S,
    seed: [f64; 2],
    family: Family,
    initial_direction: [f64; 2],
    stop_points: &[[f64; 2]],
    opts: &TraceOptions,
) -> Result<PrincipalStressLine> {
    let len = initial_direction[0].hypot(initial_direction[1]);
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::Topology("zero initial tracing direction".into()));
    }
    if src.tensor_at(seed[0], seed[1]).is_none() {
        return Err(Error::Topology(format!("seed ({}, {}) is outside the domain", seed[0], seed[1])));
    }
    if !(opts.step > 0.0) {
        return Err(Error::Parameter("tracing step must be positive".into()));
    }
    let h = opts.step;
    let mut prev = [initial_direction[0] / len, initial_direction[1] / len];
    let mut vertices = vec![seed];
    let mut hash = VertexHash::new(h);
    hash.insert(seed, 0);
    let finish = |vertices: Vec<[f64; 2]>, termination| PrincipalStressLine {
        family,
        vertices,
        termination,
    };

    for _ in 0..opts.max_steps {
        let p = *vertices.last().expect("seed vertex");
        let offset = |k: [f64; 2], s: f64| [p[0] + s * k[0], p[1] + s * k[1]];

        let k1 = match direction(src, p, family, prev) {
            Ok(Some(k)) => k,
            Ok(None) => return Ok(finish(vertices, Termination::Boundary)),
            Err(()) => return Ok(finish(vertices, Termination::NearDegeneratePoint)),
        };
        let mut stages = [k1; 4];
        let mut exited = false;
        for (s, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            match direction(src, offset(stages[s - 1], frac * h), family, k1) {
                Ok(Some(k)) => stages[s] = k,
                Ok(None) => {
                    exited = true;
                    break;
                }
                Err(()) => return Ok(finish(vertices, Termination::NearDegeneratePoint)),
            }
        }
        if exited {
            vertices.push(clip_to_domain(src, p, offset(k1, h)));
            return Ok(finish(vertices, Termination::Boundary));
        }
        let [k1, k2, k3, k4] = stages;
        let incr = [
            (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0,
            (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0,
        ];
        let next = offset(incr, h);
        if src.tensor_at(next[0], next[1]).is_none() {
            vertices.push(clip_to_domain(src, p, next));
            return Ok(finish(vertices, Termination::Boundary));
        }
        let step_len = incr[0].hypot(incr[1]);
        if step_len > 0.0 {
            prev = [incr[0] / step_len, incr[1] / step_len];
        }
        let idx = vertices.len();
        vertices.push(next);

        if stop_points
            .iter()
            .any(|s| (s[0] - next[0]).hypot(s[1] - next[1]) <= opts.stop_radius)
        {
            return Ok(finish(vertices, Termination::NearDegeneratePoint));
        }
        if idx >= opts.loop_min_steps && hash.near(&vertices, next, h, idx - opts.loop_min_steps) {
            return Ok(finish(vertices, Termination::LoopClosed));
        }
        hash.insert(next, idx);
    }
    Ok(finish(vertices, Termination::StepBudget))
}
