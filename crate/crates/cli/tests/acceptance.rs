//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Criteria 5 and 6 run full-resolution optimizations (tens of minutes each
//! on one core) and are skipped unless `INFILL_ACCEPTANCE_LONG=1`. Their run
//! directories are kept under `target/acceptance/`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use infill_core::fem::{FeSystem, MaterialModel, SolverKind};
use infill_core::grid::{BoundaryConditions, CartesianGrid, Dir, NeighborhoodTable, NodalLoad, ScalarField};
use infill_core::optimizer::{
    aggregate_constraint, chain_to_design, heaviside, heaviside_derivative, local_volume, sharpness,
    InfillProblem, OptimizationConfig,
};
use infill_core::stress::{element_stress_at, NodalTensorField, StressTensor};
use infill_core::topology::{
    classify_element, find_degenerate_points, CellClass, DegenerateKind, TensorGradient,
};

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: &str, title: &str, outcome: Result<String, String>) {
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {title}: {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("criterion {id:>2} FAIL  {title}: {detail}");
            }
        }
    }

    fn skip(&self, id: &str, title: &str, why: &str) {
        println!("criterion {id:>2} SKIP  {title}: {why}");
    }
}

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn xorshift(state: &mut u64) -> f64 {
    *state ^= *state << 13;
    *state ^= *state >> 7;
    *state ^= *state << 17;
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

// ---------------------------------------------------------------- criterion 1

fn linear_field(grid: &CartesianGrid, trisector: bool, shear_slope: f64) -> NodalTensorField {
    let (w, h) = (grid.nx() as f64, grid.ny() as f64);
    NodalTensorField::from_fn(grid, move |x, y| {
        let (x, y) = (x / w, y / h);
        let diff = 2.0 * x - 1.0;
        let txy = if trisector { shear_slope * (1.0 - 2.0 * y) } else { 2.0 * y - 1.0 };
        StressTensor::new(0.3 + 0.5 * diff, 0.3 - 0.5 * diff, txy)
    })
}

fn criterion_1() -> Outcome {
    let mut worst_pos = 0.0f64;
    for (nx, ny) in [(1, 1), (5, 5), (7, 3), (4, 4), (9, 6)] {
        let grid = CartesianGrid::new(nx, ny).unwrap();
        let target = [0.5 * nx as f64, 0.5 * ny as f64];
        for (trisector, want) in [(false, DegenerateKind::Wedge), (true, DegenerateKind::Trisector)] {
            let points = find_degenerate_points(&linear_field(&grid, trisector, 1.0));
            check(points.len() == 1, format!("{nx}x{ny}: {} points", points.len()))?;
            let p = &points[0];
            let err = (p.position[0] - target[0]).hypot(p.position[1] - target[1]);
            worst_pos = worst_pos.max(err);
            check(err <= 1e-8, format!("{nx}x{ny}: position {:?}, error {err:e}", p.position))?;
            check(p.kind == Some(want), format!("{nx}x{ny}: kind {:?}, want {want:?}", p.kind))?;
            let sign_ok = if trisector { p.gradient.delta < 0.0 } else { p.gradient.delta > 0.0 };
            check(sign_ok, format!("{nx}x{ny}: delta {}", p.gradient.delta))?;
        }
    }
    // Normalized a = 1, d = -1 (shear falling at half the rate of the normal difference).
    let grid = CartesianGrid::new(6, 6).unwrap();
    let points = find_degenerate_points(&linear_field(&grid, true, 0.5));
    check(points.len() == 1, format!("normalized case: {} points", points.len()))?;
    let g = points[0].gradient;
    let n = TensorGradient::new(1.0, g.b / g.a, g.c / g.a, g.d / g.a);
    check(
        (n.d + 1.0).abs() < 1e-12 && n.b.abs() < 1e-12 && n.c.abs() < 1e-12,
        format!("normalized gradient {n:?}"),
    )?;
    let mut slopes = points[0].tangent_slopes.clone();
    slopes.sort_by(f64::total_cmp);
    let want = [-3f64.sqrt(), 0.0, 3f64.sqrt()];
    check(slopes.len() == 3, format!("slopes {slopes:?}"))?;
    let slope_err = slopes.iter().zip(want).map(|(s, w)| (s - w).abs()).fold(0.0, f64::max);
    check(slope_err <= 1e-6, format!("slopes {slopes:?}"))?;
    Ok(format!("max position error {worst_pos:.1e}, slope error {slope_err:.1e}"))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let mut state = 0x2545_F491_4F6C_DD1Du64;
    let mut excluded = 0;
    let mut closest = f64::INFINITY;
    for _ in 0..1000 {
        // Bias half the cells toward sign-uniform corners so exclusions are common.
        let bias = xorshift(&mut state) < 0.5;
        let mut corner = || {
            let v = 2.0 * xorshift(&mut state) - 1.0;
            if bias {
                v.abs() + 1e-3 * xorshift(&mut state)
            } else {
                v
            }
        };
        let diff = [corner(), corner(), corner(), corner()];
        let txy = [corner(), corner(), corner(), corner()];
        let sign = if xorshift(&mut state) < 0.5 { -1.0 } else { 1.0 };
        let cell: [StressTensor; 4] = std::array::from_fn(|k| StressTensor::new(0.5 * diff[k], -0.5 * diff[k], sign * txy[k]));
        if classify_element(&cell) != CellClass::Excluded {
            continue;
        }
        excluded += 1;
        let scale = diff.iter().chain(&txy).fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..50 {
            for j in 0..50 {
                let (u, v) = (i as f64 / 49.0, j as f64 / 49.0);
                let w = [(1.0 - u) * (1.0 - v), u * (1.0 - v), u * v, (1.0 - u) * v];
                let d: f64 = (0..4).map(|k| w[k] * diff[k]).sum();
                let t: f64 = (0..4).map(|k| w[k] * sign * txy[k]).sum();
                let r = d.abs().max(t.abs()) / scale;
                closest = closest.min(r);
                check(r > 1e-9, format!("excluded cell has near-root at ({u}, {v}): {r:e}"))?;
            }
        }
    }
    check(excluded > 100, format!("only {excluded} excluded cells"))?;
    Ok(format!("{excluded} excluded cells, closest residual {closest:.2e} of scale"))
}

// ---------------------------------------------------------------- criterion 3

fn patch_test() -> Result<f64, String> {
    let (nx, ny) = (5, 3);
    let grid = CartesianGrid::new(nx, ny).unwrap();
    let mat = MaterialModel::default();
    let sigma = StressTensor::new(0.7, -0.4, 0.25);
    // Consistent nodal forces of the constant traction sigma·n on each boundary edge.
    let mut force = vec![[0.0; 2]; grid.num_nodes()];
    let mut edge = |a: usize, b: usize, n: [f64; 2]| {
        let t = [sigma.sxx * n[0] + sigma.txy * n[1], sigma.txy * n[0] + sigma.syy * n[1]];
        for node in [a, b] {
            force[node][0] += 0.5 * t[0];
            force[node][1] += 0.5 * t[1];
        }
    };
    for i in 0..nx {
        edge(grid.node_index(i, 0), grid.node_index(i + 1, 0), [0.0, -1.0]);
        edge(grid.node_index(i, ny), grid.node_index(i + 1, ny), [0.0, 1.0]);
    }
    for j in 0..ny {
        edge(grid.node_index(0, j), grid.node_index(0, j + 1), [-1.0, 0.0]);
        edge(grid.node_index(nx, j), grid.node_index(nx, j + 1), [1.0, 0.0]);
    }
    // Statically determinate supports under self-equilibrated tractions: the
    // exact solution is the constant stress state.
    let mut bc = BoundaryConditions::default();
    bc.fixed.push((grid.node_index(0, 0), Dir::X));
    bc.fixed.push((grid.node_index(0, 0), Dir::Y));
    bc.fixed.push((grid.node_index(nx, 0), Dir::Y));
    // Components on supported dofs are carried by the reactions.
    force[grid.node_index(0, 0)] = [0.0, 0.0];
    force[grid.node_index(nx, 0)][1] = 0.0;
    for (node, f) in force.iter().enumerate() {
        if f[0] != 0.0 || f[1] != 0.0 {
            bc.loads.push(NodalLoad { node, fx: f[0], fy: f[1] });
        }
    }
    let mut fe = FeSystem::new(&grid, &bc, mat, SolverKind::Direct).map_err(|e| e.to_string())?;
    let (u, _) = fe.solve(&vec![1.0; grid.num_elements()]).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for e in 0..grid.num_elements() {
        for (lu, lv) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5), (0.2, 0.9)] {
            let s = element_stress_at(&grid, &u, &mat, e, lu, lv);
            worst = worst
                .max((s.sxx - sigma.sxx).abs())
                .max((s.syy - sigma.syy).abs())
                .max((s.txy - sigma.txy).abs());
        }
    }
    check(worst <= 1e-10, format!("patch test stress error {worst:e}"))?;
    Ok(worst)
}

/// Plane-stress stiffness of the unit square by 2×2 Gauss quadrature, node
/// order (0,0), (1,0), (1,1), (0,1).
fn gauss_stiffness(e: f64, nu: f64) -> [[f64; 8]; 8] {
    let f = e / (1.0 - nu * nu);
    let d = [[f, f * nu, 0.0], [f * nu, f, 0.0], [0.0, 0.0, f * (1.0 - nu) / 2.0]];
    let xi = [-1.0, 1.0, 1.0, -1.0];
    let eta = [-1.0, -1.0, 1.0, 1.0];
    let g = 1.0 / 3f64.sqrt();
    let mut k = [[0.0; 8]; 8];
    for (s, t) in [(-g, -g), (g, -g), (g, g), (-g, g)] {
        let mut b = [[0.0; 8]; 3];
        for a in 0..4 {
            // dN/dx = 2 dN/dxi on a unit element.
            let dx = 2.0 * 0.25 * xi[a] * (1.0 + eta[a] * t);
            let dy = 2.0 * 0.25 * eta[a] * (1.0 + xi[a] * s);
            b[0][2 * a] = dx;
            b[1][2 * a + 1] = dy;
            b[2][2 * a] = dy;
            b[2][2 * a + 1] = dx;
        }
        let det_j = 0.25;
        for r in 0..8 {
            for c in 0..8 {
                let mut v = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        v += b[p][r] * d[p][q] * b[q][c];
                    }
                }
                k[r][c] += v * det_j;
            }
        }
    }
    k
}

fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= m * a[col][c];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn single_element() -> Result<f64, String> {
    let grid = CartesianGrid::new(1, 1).unwrap();
    let mat = MaterialModel::default();
    let rho: f64 = 0.7;
    let modulus = mat.emin + rho.powf(mat.penal) * (mat.e0 - mat.emin);
    let corners = [(0, 0), (1, 0), (1, 1), (0, 1)];
    let mut bc = BoundaryConditions::default();
    bc.fixed.push((grid.node_index(0, 0), Dir::X));
    bc.fixed.push((grid.node_index(0, 0), Dir::Y));
    bc.fixed.push((grid.node_index(1, 0), Dir::Y));
    bc.loads.push(NodalLoad { node: grid.node_index(1, 1), fx: 0.3, fy: -1.0 });
    bc.loads.push(NodalLoad { node: grid.node_index(0, 1), fx: -0.2, fy: 0.5 });
    let mut fe = FeSystem::new(&grid, &bc, mat, SolverKind::Direct).map_err(|e| e.to_string())?;
    let (u, _) = fe.solve(&[rho]).map_err(|e| e.to_string())?;

    let k = gauss_stiffness(modulus, mat.nu);
    let node_of = |local: usize| grid.node_index(corners[local].0, corners[local].1);
    let mut f = [0.0; 8];
    for l in &bc.loads {
        let a = (0..4).find(|&a| node_of(a) == l.node).unwrap();
        f[2 * a] += l.fx;
        f[2 * a + 1] += l.fy;
    }
    let fixed: Vec<usize> = bc
        .fixed
        .iter()
        .map(|&(n, d)| 2 * (0..4).find(|&a| node_of(a) == n).unwrap() + usize::from(d == Dir::Y))
        .collect();
    let free: Vec<usize> = (0..8).filter(|i| !fixed.contains(i)).collect();
    let a: Vec<Vec<f64>> = free.iter().map(|&r| free.iter().map(|&c| k[r][c]).collect()).collect();
    let b: Vec<f64> = free.iter().map(|&r| f[r]).collect();
    let x = dense_solve(a, b);
    let mut worst = 0.0f64;
    for (i, &dof) in free.iter().enumerate() {
        let a = dof / 2;
        let got = u.node(node_of(a))[dof % 2];
        worst = worst.max((got - x[i]).abs() / x[i].abs().max(1.0));
    }
    for &dof in &fixed {
        worst = worst.max(u.node(node_of(dof / 2))[dof % 2].abs());
    }
    check(worst <= 1e-10, format!("single element error {worst:e}"))?;
    Ok(worst)
}

fn criterion_3() -> Outcome {
    let patch = patch_test()?;
    let single = single_element()?;
    Ok(format!("patch stress error {patch:.1e}, single-element displacement error {single:.1e}"))
}

// ---------------------------------------------------------------- criterion 4

fn cantilever(nx: usize, ny: usize) -> (CartesianGrid, BoundaryConditions) {
    let grid = CartesianGrid::new(nx, ny).unwrap();
    let mut bc = BoundaryConditions::default();
    for j in 0..=ny {
        bc.fixed.push((grid.node_index(0, j), Dir::X));
        bc.fixed.push((grid.node_index(0, j), Dir::Y));
    }
    bc.loads.push(NodalLoad { node: grid.node_index(nx, ny / 2), fx: 0.0, fy: -1.0 });
    (grid, bc)
}

/// Largest componentwise relative error, with a floor at 1e-3 of the largest entry.
fn rel_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / a.abs().max(1e-3 * scale))
        .fold(0.0, f64::max)
}

fn criterion_4() -> Outcome {
    let (grid, bc) = cantilever(12, 8);
    let mut state = 99u64;
    let phi: Vec<f64> = (0..grid.num_elements()).map(|_| 0.05 + 0.9 * xorshift(&mut state)).collect();
    let mut worst = [0.0f64; 2];
    for beta in [1.0, 8.0] {
        let mut cfg = OptimizationConfig::new(ScalarField::constant(&grid, 0.45), ScalarField::constant(&grid, 3.0), 1.6);
        cfg.beta.initial = beta;
        cfg.beta.max = beta;
        let mut problem = InfillProblem::new(&grid, &bc, cfg).map_err(|e| e.to_string())?;
        let (phi_t, rho) = problem.project(&phi, beta);
        let eval = problem.evaluate(&rho).map_err(|e| e.to_string())?;
        let dc = chain_to_design(&eval.dc_drho, &phi_t, beta, problem.filter());
        let dg = chain_to_design(&eval.dg_drho, &phi_t, beta, problem.filter());
        let h = 1e-6;
        let mut fd_c = Vec::new();
        let mut fd_g = Vec::new();
        for e in 0..phi.len() {
            let mut values = [[0.0; 2]; 2];
            for (k, step) in [h, -h].into_iter().enumerate() {
                let mut p = phi.clone();
                p[e] += step;
                let (_, rho) = problem.project(&p, beta);
                let ev = problem.evaluate(&rho).map_err(|e| e.to_string())?;
                values[k] = [ev.compliance, ev.g_local];
            }
            fd_c.push((values[0][0] - values[1][0]) / (2.0 * h));
            fd_g.push((values[0][1] - values[1][1]) / (2.0 * h));
        }
        let (ec, eg) = (rel_error(&dc, &fd_c), rel_error(&dg, &fd_g));
        check(ec < 1e-3, format!("beta {beta}: dc/dphi relative error {ec:e}"))?;
        check(eg < 1e-3, format!("beta {beta}: dg/dphi relative error {eg:e}"))?;
        worst = [worst[0].max(ec), worst[1].max(eg)];
    }
    let mut worst_h = 0.0f64;
    for beta in [1.0, 8.0, 32.0] {
        let xs: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
        let analytic = heaviside_derivative(&xs, beta);
        for (x, a) in xs.iter().zip(analytic) {
            let h = 1e-6;
            let fd = (heaviside(x + h, beta) - heaviside(x - h, beta)) / (2.0 * h);
            let err = (a - fd).abs() / a.abs().max(1.0);
            worst_h = worst_h.max(err);
        }
    }
    check(worst_h <= 1e-6, format!("heaviside derivative error {worst_h:e}"))?;
    Ok(format!(
        "dc/dphi {:.1e}, dg/dphi {:.1e}, heaviside {:.1e}",
        worst[0], worst[1], worst_h
    ))
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let mut state = 7u64;
    let binary: Vec<f64> = (0..500).map(|_| if xorshift(&mut state) < 0.4 { 1.0 } else { 0.0 }).collect();
    check(sharpness(&binary) == 0.0, format!("binary sharpness {}", sharpness(&binary)))?;
    let half = vec![0.5; 321];
    check((sharpness(&half) - 1.0).abs() < 1e-15, format!("grey sharpness {}", sharpness(&half)))?;

    let grid = CartesianGrid::new(20, 14).unwrap();
    let nb = NeighborhoodTable::build(&grid, &ScalarField::constant(&grid, 3.5)).map_err(|e| e.to_string())?;
    for trial in 0..200 {
        let rho: Vec<f64> = (0..grid.num_elements()).map(|_| xorshift(&mut state)).collect();
        let alpha: Vec<f64> = (0..grid.num_elements()).map(|_| 0.2 + 0.7 * xorshift(&mut state)).collect();
        let p = 1.0 + 31.0 * xorshift(&mut state);
        let rho_bar = local_volume(&rho, &nb);
        let ratios: Vec<f64> = rho_bar.iter().zip(&alpha).map(|(r, a)| r / a).collect();
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let m = aggregate_constraint(&rho_bar, &alpha, p) + 1.0;
        let tol = 1e-12 * max;
        check(
            max * n.powf(-1.0 / p) <= m + tol && m <= max + tol && mean <= m + tol,
            format!("trial {trial}: p-mean {m} outside [{}, {max}] or below mean {mean}", max * n.powf(-1.0 / p)),
        )?;
    }
    for beta in [1.0, 128.0] {
        let ends = [heaviside(0.0, beta), heaviside(0.5, beta), heaviside(1.0, beta)];
        check(
            ends[0].abs() < 1e-15 && (ends[1] - 0.5).abs() < 1e-15 && (ends[2] - 1.0).abs() < 1e-15,
            format!("beta {beta}: projection of 0, 1/2, 1 gives {ends:?}"),
        )?;
    }
    Ok("sharpness 0 and 1, 200 sandwich trials, projection identities at beta 1 and 128".into())
}

// ---------------------------------------------------------------- pipeline runs

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_dir(name: &str) -> PathBuf {
    workspace_root().join("target/acceptance").join(name)
}

fn infill(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_infill"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("infill {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

struct Final {
    compliance: f64,
    sharpness: f64,
    mean_density: f64,
    iteration: usize,
}

fn final_row(dir: &Path) -> Result<Final, String> {
    let text = fs::read_to_string(dir.join("history.csv")).map_err(|e| e.to_string())?;
    let row: Vec<&str> = text.lines().last().ok_or("empty history")?.split(',').collect();
    let num = |k: usize| row[k].parse::<f64>().map_err(|e| e.to_string());
    Ok(Final {
        iteration: row[0].parse().map_err(|e: std::num::ParseIntError| e.to_string())?,
        compliance: num(2)?,
        sharpness: num(5)?,
        mean_density: num(6)?,
    })
}

fn trisector_count(dir: &Path) -> Result<usize, String> {
    let text = fs::read_to_string(dir.join("degenerate_points.tsv")).map_err(|e| e.to_string())?;
    Ok(text.lines().skip(1).filter(|l| l.split('\t').nth(2) == Some("trisector")).count())
}

fn optimize(config: &str, name: &str, init: &str, extra: &[&str]) -> Result<PathBuf, String> {
    let dir = run_dir(name);
    let _ = fs::remove_dir_all(&dir);
    let config = workspace_root().join("configs").join(config);
    let mut args = vec!["optimize", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--init", init];
    args.extend_from_slice(extra);
    infill(&args)?;
    Ok(dir)
}

fn criterion_5() -> Outcome {
    let guided = optimize("four-corner-square.toml", "c5-topo", "topo", &[])?;
    let uniform = optimize("four-corner-square.toml", "c5-uniform", "uniform", &[])?;
    let tri = trisector_count(&guided)?;
    let g = final_row(&guided)?;
    let u = final_row(&uniform)?;
    let summary = format!(
        "{tri} trisectors; guided c {:.3} mean {:.4} s {:.3e}; homogeneous c {:.3} mean {:.4} s {:.3e} at iteration {}",
        g.compliance, g.mean_density, g.sharpness, u.compliance, u.mean_density, u.sharpness, u.iteration
    );
    let mut failed = Vec::new();
    if tri != 2 {
        failed.push("trisector count != 2");
    }
    if (g.compliance / 25.96 - 1.0).abs() > 0.05 {
        failed.push("compliance not within 5% of 25.96");
    }
    if (g.mean_density - 0.378).abs() > 0.03 {
        failed.push("mean density not within 0.03 of 0.378");
    }
    if !(g.sharpness < u.sharpness) {
        failed.push("guided sharpness not below homogeneous");
    }
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{} ({summary})", failed.join("; ")))
    }
}

fn criterion_6() -> Outcome {
    let guided = optimize("cantilever.toml", "c6-topo", "topo", &[])?;
    let uniform = optimize("cantilever.toml", "c6-uniform", "uniform", &[])?;
    let g = final_row(&guided)?;
    let u = final_row(&uniform)?;
    let summary = format!(
        "guided c {:.3} mean {:.4} s {:.3e}; homogeneous c {:.3} mean {:.4} s {:.3e} at iteration {}",
        g.compliance, g.mean_density, g.sharpness, u.compliance, u.mean_density, u.sharpness, u.iteration
    );
    let mut failed = Vec::new();
    if !(g.sharpness < u.sharpness) {
        failed.push("guided sharpness not below homogeneous");
    }
    if (g.compliance / 28.26 - 1.0).abs() > 0.05 {
        failed.push("compliance not within 5% of 28.26");
    }
    if (g.mean_density - 0.473).abs() > 0.03 {
        failed.push("solid fraction not within 0.03 of 0.473");
    }
    if g.sharpness > 1e-2 {
        failed.push("guided sharpness above 1e-2");
    }
    if u.sharpness < 1e-2 {
        failed.push("homogeneous sharpness below 1e-2");
    }
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{} ({summary})", failed.join("; ")))
    }
}

/// Criteria 7 and 9 share the guided single-thread run.
fn criteria_7_and_9(report: &mut Report) {
    let runs = (|| {
        let a = optimize("cantilever-small.toml", "c7-topo", "topo", &["--single-thread"])?;
        let b = optimize("cantilever-small.toml", "c9-topo-rerun", "topo", &["--single-thread"])?;
        let u = optimize("cantilever-small.toml", "c7-uniform", "uniform", &["--single-thread"])?;
        Ok::<_, String>((a, b, u))
    })();
    let (a, b, u) = match runs {
        Ok(r) => r,
        Err(e) => {
            report.record("7", "scaled cantilever property run", Err(e.clone()));
            report.record("9", "single-thread determinism", Err(e));
            return;
        }
    };
    let c7 = (|| {
        let tri = trisector_count(&a)?;
        let g = final_row(&a)?;
        let h = final_row(&u)?;
        let summary = format!(
            "{tri} trisectors; sharpness at iteration {}: guided {:.3e}, homogeneous {:.3e}",
            g.iteration, g.sharpness, h.sharpness
        );
        check(g.iteration == 400 && h.iteration == 400, format!("runs stopped early ({summary})"))?;
        check(tri >= 1, format!("no trisector ({summary})"))?;
        check(g.sharpness < h.sharpness, format!("guided sharpness not below homogeneous ({summary})"))?;
        Ok(summary)
    })();
    report.record("7", "scaled cantilever property run", c7);
    let c9 = (|| {
        let ha = fs::read(a.join("history.csv")).map_err(|e| e.to_string())?;
        let hb = fs::read(b.join("history.csv")).map_err(|e| e.to_string())?;
        check(ha == hb, "history.csv differs between single-thread runs".into())?;
        Ok(format!("history.csv identical ({} bytes)", ha.len()))
    })();
    report.record("9", "single-thread determinism", c9);
}

fn main() {
    let long = std::env::var("INFILL_ACCEPTANCE_LONG").is_ok_and(|v| v == "1");
    let mut report = Report { failures: 0 };
    report.record("1", "synthetic degenerate-point oracles", criterion_1());
    report.record("2", "pre-filter soundness", criterion_2());
    report.record("3", "FEM patch test and single-element oracle", criterion_3());
    report.record("4", "gradient suite", criterion_4());
    if long {
        report.record("5", "four-corner square", criterion_5());
        report.record("6", "cantilever full resolution", criterion_6());
    } else {
        let why = "long-running; set INFILL_ACCEPTANCE_LONG=1";
        report.skip("5", "four-corner square", why);
        report.skip("6", "cantilever full resolution", why);
    }
    criteria_7_and_9(&mut report);
    report.record("8", "metric identities", criterion_8());
    if report.failures > 0 {
        println!("{} criteria failed", report.failures);
        std::process::exit(1);
    }
}
