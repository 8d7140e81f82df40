//! Method of Moving Asymptotes for box-bounded problems with a handful of
//! inequality constraints `f_i(x) <= 0`.
//!
//! Each call builds the separable convex approximation around the current
//! iterate and solves its dual, which has one variable per constraint, by
//! damped projected Newton with a coordinate bisection fallback.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaParams {
    /// Objective weight of the artificial variable `z`.
    pub a0: f64,
    /// Linear penalty on the constraint slack `y_i`.
    pub c: f64,
    /// Quadratic penalty on the constraint slack `y_i`.
    pub d: f64,
    pub move_limit: f64,
    pub asy_init: f64,
    pub asy_incr: f64,
    pub asy_decr: f64,
    /// Fraction of the iterate-asymptote distance kept as inner box margin.
    pub albefa: f64,
    /// Regularization added to the approximation curvature.
    pub raa0: f64,
    pub kkt_tolerance: f64,
    pub max_newton: usize,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            a0: 1.0,
            c: 1000.0,
            d: 1.0,
            move_limit: 0.01,
            asy_init: 0.5,
            asy_incr: 1.2,
            asy_decr: 0.7,
            albefa: 0.1,
            raa0: 1e-5,
            kkt_tolerance: 1e-9,
            max_newton: 500,
        }
    }
}

/// Per-run MMA state: asymptotes and the two previous iterates.
#[derive(Debug, Clone)]
pub struct MmaWorkspace {
    pub params: MmaParams,
    xmin: Vec<f64>,
    xmax: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    iteration: usize,
}

/// Separable approximation data for one subproblem.
struct Subproblem<'a> {
    low: &'a [f64],
    upp: &'a [f64],
    alfa: Vec<f64>,
    beta: Vec<f64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: f64,
    d: f64,
}

struct DualEval {
    value: f64,
    grad: Vec<f64>,
    x: Vec<f64>,
}

impl MmaWorkspace {
    pub fn new(n: usize, params: MmaParams) -> Self {
        Self::with_bounds(vec![0.0; n], vec![1.0; n], params)
    }

    pub fn with_bounds(xmin: Vec<f64>, xmax: Vec<f64>, params: MmaParams) -> Self {
        let n = xmin.len();
        Self {
            params,
            low: vec![0.0; n],
            upp: vec![0.0; n],
            xold1: vec![0.0; n],
            xold2: vec![0.0; n],
            xmin,
            xmax,
            iteration: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn asymptotes(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.upp)
    }

    /// One MMA step from `x` given the objective gradient, constraint values
    /// and constraint gradients.
    pub fn update(
        &mut self,
        x: &[f64],
        df0: &[f64],
        fval: &[f64],
        dfdx: &[&[f64]],
    ) -> Result<Vec<f64>> {
        let n = self.xmin.len();
        let m = fval.len();
        if x.len() != n || df0.len() != n || dfdx.len() != m || dfdx.iter().any(|g| g.len() != n) {
            return Err(Error::Optimizer("MMA input dimensions do not match".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(x) || !finite(df0) || !finite(fval) || !dfdx.iter().all(|g| finite(g)) {
            return Err(Error::Optimizer("non-finite MMA input".into()));
        }
        let prm = self.params;
        self.iteration += 1;

        for j in 0..n {
            let range = self.xmax[j] - self.xmin[j];
            if self.iteration <= 2 {
                self.low[j] = x[j] - prm.asy_init * range;
                self.upp[j] = x[j] + prm.asy_init * range;
            } else {
                let osc = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if osc > 0.0 {
                    prm.asy_incr
                } else if osc < 0.0 {
                    prm.asy_decr
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
                self.upp[j] = upp.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
            }
        }

        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut p = vec![vec![0.0; n]; m];
        let mut q = vec![vec![0.0; n]; m];
        let mut b = fval.iter().map(|f| -f).collect::<Vec<_>>();
        for j in 0..n {
            let range = self.xmax[j] - self.xmin[j];
            let (l, u) = (self.low[j], self.upp[j]);
            alfa[j] = (l + prm.albefa * (x[j] - l))
                .max(x[j] - prm.move_limit * range)
                .max(self.xmin[j]);
            beta[j] = (u - prm.albefa * (u - x[j]))
                .min(x[j] + prm.move_limit * range)
                .min(self.xmax[j]);
            let reg = prm.raa0 / range.max(1e-5);
            let (ux2, xl2) = ((u - x[j]).powi(2), (x[j] - l).powi(2));
            let split = |g: f64| (1.001 * g.max(0.0) + 0.001 * (-g).max(0.0) + reg, 0.001 * g.max(0.0) + 1.001 * (-g).max(0.0) + reg);
            let (pp, qq) = split(df0[j]);
            p0[j] = ux2 * pp;
            q0[j] = xl2 * qq;
            for i in 0..m {
                let (pp, qq) = split(dfdx[i][j]);
                p[i][j] = ux2 * pp;
                q[i][j] = xl2 * qq;
                b[i] += p[i][j] / (u - x[j]) + q[i][j] / (x[j] - l);
            }
        }

        let sub = Subproblem {
            low: &self.low,
            upp: &self.upp,
            alfa,
            beta,
            p0,
            q0,
            p,
            q,
            b,
            c: prm.c,
            d: prm.d,
        };
        let xnew = sub.solve(prm.kkt_tolerance, prm.max_newton)?;

        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        Ok(xnew)
    }
}

impl Subproblem<'_> {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn primal(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.p0.len())
            .map(|j| {
                let (pp, qq) = self.combined(lambda, j);
                let (sp, sq) = (pp.sqrt(), qq.sqrt());
                let x = (sp * self.low[j] + sq * self.upp[j]) / (sp + sq);
                x.clamp(self.alfa[j], self.beta[j])
            })
            .collect()
    }

    #[inline]
    fn combined(&self, lambda: &[f64], j: usize) -> (f64, f64) {
        let mut pp = self.p0[j];
        let mut qq = self.q0[j];
        for (i, &l) in lambda.iter().enumerate() {
            pp += l * self.p[i][j];
            qq += l * self.q[i][j];
        }
        (pp, qq)
    }

    fn slack(&self, lambda: f64) -> f64 {
        ((lambda - self.c) / self.d).max(0.0)
    }

    fn eval(&self, lambda: &[f64]) -> DualEval {
        let x = self.primal(lambda);
        let m = self.m();
        let mut value = 0.0;
        let mut grad = vec![0.0; m];
        for j in 0..x.len() {
            let (ux, xl) = (self.upp[j] - x[j], x[j] - self.low[j]);
            let (pp, qq) = self.combined(lambda, j);
            value += pp / ux + qq / xl;
            for i in 0..m {
                grad[i] += self.p[i][j] / ux + self.q[i][j] / xl;
            }
        }
        for i in 0..m {
            let y = self.slack(lambda[i]);
            value += self.c * y + 0.5 * self.d * y * y - lambda[i] * y - lambda[i] * self.b[i];
            grad[i] -= self.b[i] + y;
        }
        DualEval { value, grad, x }
    }

    fn hessian(&self, lambda: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let m = self.m();
        let mut h = vec![vec![0.0; m]; m];
        for j in 0..x.len() {
            if x[j] <= self.alfa[j] || x[j] >= self.beta[j] {
                continue;
            }
            let (ux, xl) = (self.upp[j] - x[j], x[j] - self.low[j]);
            let (pp, qq) = self.combined(lambda, j);
            let curv = 2.0 * pp / (ux * ux * ux) + 2.0 * qq / (xl * xl * xl);
            let dg: Vec<f64> = (0..m)
                .map(|i| self.p[i][j] / (ux * ux) - self.q[i][j] / (xl * xl))
                .collect();
            for a in 0..m {
                for c in 0..m {
                    h[a][c] -= dg[a] * dg[c] / curv;
                }
            }
        }
        for i in 0..m {
            if lambda[i] > self.c {
                h[i][i] -= 1.0 / self.d;
            }
        }
        h
    }

    fn kkt_ok(&self, lambda: &[f64], grad: &[f64], tol: &[f64]) -> bool {
        lambda
            .iter()
            .zip(grad)
            .zip(tol)
            .all(|((&l, &g), &t)| if l > 0.0 { g.abs() <= t } else { g <= t })
    }

    fn solve(&self, tol: f64, max_newton: usize) -> Result<Vec<f64>> {
        let m = self.m();
        if m == 0 {
            return Ok(self.primal(&[]));
        }
        let tols: Vec<f64> = self.b.iter().map(|b| tol * (1.0 + b.abs())).collect();
        let mut lambda = vec![0.0; m];
        let mut cur = self.eval(&lambda);
        for _ in 0..max_newton {
            if self.kkt_ok(&lambda, &cur.grad, &tols) {
                return Ok(cur.x);
            }
            let free: Vec<usize> = (0..m).filter(|&i| lambda[i] > 0.0 || cur.grad[i] > 0.0).collect();
            let h = self.hessian(&lambda, &cur.x);
            let Some(step) = newton_step(&h, &cur.grad, &free) else { break };
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = (0..m).map(|i| (lambda[i] + t * step[i]).max(0.0)).collect();
                let ev = self.eval(&trial);
                if ev.value > cur.value {
                    lambda = trial;
                    cur = ev;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        self.coordinate_bisection(lambda, &tols)
    }

    /// Cyclic exact maximization along each dual coordinate.
    fn coordinate_bisection(&self, mut lambda: Vec<f64>, tols: &[f64]) -> Result<Vec<f64>> {
        let m = self.m();
        for _ in 0..200 {
            let cur = self.eval(&lambda);
            if self.kkt_ok(&lambda, &cur.grad, tols) {
                return Ok(cur.x);
            }
            for i in 0..m {
                let grad_at = |v: f64, lambda: &mut Vec<f64>| {
                    lambda[i] = v;
                    self.eval(lambda).grad[i]
                };
                if grad_at(0.0, &mut lambda) <= 0.0 {
                    lambda[i] = 0.0;
                    continue;
                }
                let mut hi = 1.0;
                while grad_at(hi, &mut lambda) > 0.0 {
                    hi *= 2.0;
                    if hi > 1e300 {
                        return Err(Error::Optimizer("MMA dual is unbounded".into()));
                    }
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if grad_at(mid, &mut lambda) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lambda[i] = 0.5 * (lo + hi);
            }
        }
        let cur = self.eval(&lambda);
        if self.kkt_ok(&lambda, &cur.grad, tols) || m == 1 {
            // In one dimension bisection has already located the maximizer to
            // machine precision; remaining gradient is a kink of the dual.
            return Ok(cur.x);
        }
        Err(Error::Optimizer("MMA dual subproblem did not converge".into()))
    }
}

/// Ascent step `-H_FF⁻¹ g_F` on the free coordinates (H is negative semidefinite).
fn newton_step(h: &[Vec<f64>], g: &[f64], free: &[usize]) -> Option<Vec<f64>> {
    let m = g.len();
    let mut step = vec![0.0; m];
    match free.len() {
        0 => return None,
        1 => {
            let i = free[0];
            if !(h[i][i] < 0.0) {
                return None;
            }
            step[i] = -g[i] / h[i][i];
        }
        2 => {
            let (i, k) = (free[0], free[1]);
            let det = h[i][i] * h[k][k] - h[i][k] * h[k][i];
            if !(det > 0.0) || !(h[i][i] < 0.0) {
                return None;
            }
            step[i] = -(h[k][k] * g[i] - h[i][k] * g[k]) / det;
            step[k] = -(-h[k][i] * g[i] + h[i][i] * g[k]) / det;
        }
        _ => {
            // General case: Gaussian elimination on -H_FF.
            let f = free.len();
            let mut a: Vec<Vec<f64>> = free
                .iter()
                .map(|&r| {
                    let mut row: Vec<f64> = free.iter().map(|&c| -h[r][c]).collect();
                    row.push(g[r]);
                    row
                })
                .collect();
            for col in 0..f {
                let piv = (col..f).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
                if a[piv][col].abs() < 1e-300 {
                    return None;
                }
                a.swap(col, piv);
                for r in 0..f {
                    if r != col {
                        let fac = a[r][col] / a[col][col];
                        for c in col..=f {
                            a[r][c] -= fac * a[col][c];
                        }
                    }
                }
            }
            for (k, &i) in free.iter().enumerate() {
                step[i] = a[k][f] / a[k][k];
            }
        }
    }
    step.iter().all(|s| s.is_finite()).then_some(step)
}
