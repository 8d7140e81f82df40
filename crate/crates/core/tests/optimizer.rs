use infill_core::fem::{compliance, assemble_and_solve, MaterialModel};
use infill_core::grid::{
    build_parameter_field, BoundaryConditions, CartesianGrid, Dir, FieldRole, NeighborhoodTable,
    NodalLoad, ParameterSpec, ScalarField,
};
use infill_core::optimizer::*;
use infill_core::topology::{Family, PrincipalStressLine, Separatrix, Termination, TopologicalSkeleton};
use proptest::prelude::*;

fn cantilever(nx: usize, ny: usize) -> (CartesianGrid, BoundaryConditions) {
    let grid = CartesianGrid::new(nx, ny).unwrap();
    let mut bc = BoundaryConditions::default();
    for j in 0..=ny {
        let n = grid.node_index(0, j);
        bc.fixed.push((n, Dir::X));
        bc.fixed.push((n, Dir::Y));
    }
    bc.loads.push(NodalLoad {
        node: grid.node_index(nx, ny / 2),
        fx: 0.0,
        fy: -1.0,
    });
    (grid, bc)
}

fn pseudo_random(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            lo + (hi - lo) * ((state >> 11) as f64 / (1u64 << 53) as f64)
        })
        .collect()
}

fn config(grid: &CartesianGrid, alpha: f64, radius: f64, r: f64) -> OptimizationConfig {
    OptimizationConfig::new(
        ScalarField::constant(grid, alpha),
        ScalarField::constant(grid, radius),
        r,
    )
}

/// Componentwise relative error with a floor at 1e-3 of the largest entry.
fn assert_close(analytic: &[f64], fd: &[f64], tol: f64, what: &str) {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (k, (a, f)) in analytic.iter().zip(fd).enumerate() {
        let denom = a.abs().max(1e-3 * scale);
        assert!((a - f).abs() <= tol * denom, "{what}[{k}]: analytic {a} vs fd {f}");
    }
}

#[test]
fn compliance_sensitivity_matches_finite_differences() {
    let (grid, bc) = cantilever(12, 8);
    let mat = MaterialModel::default();
    let rho = pseudo_random(grid.num_elements(), 1, 0.2, 1.0);
    let (u, _) = assemble_and_solve(&grid, &rho, &bc, &mat).unwrap();
    let cfg = config(&grid, 0.5, 3.0, 1.5);
    let mut problem = InfillProblem::new(&grid, &bc, cfg).unwrap();
    let eval = problem.evaluate(&rho).unwrap();
    assert!((eval.compliance - compliance(&u, &grid, &bc)).abs() < 1e-12 * eval.compliance);
    let h = 1e-6;
    let fd: Vec<f64> = (0..rho.len())
        .map(|e| {
            let mut p = rho.clone();
            p[e] += h;
            let cp = problem.evaluate(&p).unwrap().compliance;
            p[e] -= 2.0 * h;
            let cm = problem.evaluate(&p).unwrap().compliance;
            (cp - cm) / (2.0 * h)
        })
        .collect();
    assert_close(&eval.dc_drho, &fd, 1e-3, "dc/drho");
    assert!(eval.dc_drho.iter().all(|d| *d <= 0.0));
}

fn full_chain(beta: f64) {
    let (grid, bc) = cantilever(12, 8);
    let mut cfg = config(&grid, 0.45, 3.0, 1.6);
    cfg.beta.initial = beta;
    cfg.beta.max = beta;
    let mut problem = InfillProblem::new(&grid, &bc, cfg).unwrap();
    let phi = pseudo_random(grid.num_elements(), 7, 0.05, 0.95);
    let objective = |problem: &mut InfillProblem, phi: &[f64]| {
        let (_, rho) = problem.project(phi, beta);
        let ev = problem.evaluate(&rho).unwrap();
        (ev.compliance, ev.g_local)
    };
    let (phi_t, rho) = problem.project(&phi, beta);
    let eval = problem.evaluate(&rho).unwrap();
    let dc = chain_to_design(&eval.dc_drho, &phi_t, beta, problem.filter());
    let dg = chain_to_design(&eval.dg_drho, &phi_t, beta, problem.filter());
    let h = 1e-6;
    let mut fd_c = Vec::new();
    let mut fd_g = Vec::new();
    for e in 0..phi.len() {
        let mut p = phi.clone();
        p[e] += h;
        let (cp, gp) = objective(&mut problem, &p);
        p[e] -= 2.0 * h;
        let (cm, gm) = objective(&mut problem, &p);
        fd_c.push((cp - cm) / (2.0 * h));
        fd_g.push((gp - gm) / (2.0 * h));
    }
    assert_close(&dc, &fd_c, 1e-3, "dc/dphi");
    assert_close(&dg, &fd_g, 1e-3, "dg/dphi");
}

#[test]
fn full_chain_gradients_beta_1() {
    full_chain(1.0);
}

#[test]
fn full_chain_gradients_beta_8() {
    full_chain(8.0);
}

#[test]
fn constraint_sensitivity_matches_finite_differences() {
    let mask: Vec<bool> = (0..100).map(|k| k != 23 && k != 77).collect();
    let grid = CartesianGrid::with_mask(10, 10, &mask).unwrap();
    let alpha = build_parameter_field(&grid, ParameterSpec::RampX { left: 0.3, right: 0.7 }, FieldRole::Fraction).unwrap();
    let radius = build_parameter_field(&grid, ParameterSpec::RampX { left: 1.5, right: 3.2 }, FieldRole::Positive).unwrap();
    let nb = NeighborhoodTable::build(&grid, &radius).unwrap();
    let rho = pseudo_random(grid.num_elements(), 11, 0.0, 1.0);
    for p in [1.0, 4.0, 16.0] {
        let g = |rho: &[f64]| aggregate_constraint(&local_volume(rho, &nb), &alpha, p);
        let an = constraint_sensitivity(&local_volume(&rho, &nb), &alpha, p, &nb);
        // Richardson-extrapolated central differences: the smallest entries are
        // ~1e-6, below what a plain 1e-6 step resolves against roundoff.
        let central = |i: usize, h: f64| {
            let mut r = rho.clone();
            r[i] += h;
            let gp = g(&r);
            r[i] -= 2.0 * h;
            (gp - g(&r)) / (2.0 * h)
        };
        let fd: Vec<f64> = (0..rho.len())
            .map(|i| (4.0 * central(i, 5e-4) - central(i, 1e-3)) / 3.0)
            .collect();
        for (a, f) in an.iter().zip(&fd) {
            assert!(*a >= 0.0);
            assert!((a - f).abs() <= 1e-6 * a.abs(), "p {p}: {a} vs {f}");
        }
    }
}

#[test]
fn constraint_sensitivity_p1_closed_form() {
    let grid = CartesianGrid::new(9, 6).unwrap();
    let alpha = build_parameter_field(&grid, ParameterSpec::RampX { left: 0.2, right: 0.8 }, FieldRole::Fraction).unwrap();
    let radius = ScalarField::constant(&grid, 2.2);
    let nb = NeighborhoodTable::build(&grid, &radius).unwrap();
    let rho = pseudo_random(grid.num_elements(), 5, 0.0, 1.0);
    let an = constraint_sensitivity(&local_volume(&rho, &nb), &alpha, 1.0, &nb);
    let n = grid.num_elements() as f64;
    for i in 0..grid.num_elements() {
        let want: f64 = (0..grid.num_elements())
            .filter(|&e| nb.neighbors(e).any(|k| k == i))
            .map(|e| 1.0 / (alpha[e] * nb.count(e) as f64))
            .sum::<f64>()
            / n;
        assert!((an[i] - want).abs() <= 1e-14 * want);
    }
}

#[test]
fn homogeneous_interior_sensitivities_are_equal() {
    let grid = CartesianGrid::new(20, 20).unwrap();
    let nb = NeighborhoodTable::build(&grid, &ScalarField::constant(&grid, 3.0)).unwrap();
    let alpha = vec![0.5; 400];
    let dg = constraint_sensitivity(&local_volume(&alpha, &nb), &alpha, 16.0, &nb);
    let reference = dg[grid.element_at(10, 10).unwrap()];
    for j in 6..14 {
        for i in 6..14 {
            let v = dg[grid.element_at(i, j).unwrap()];
            assert!((v - reference).abs() <= 1e-14 * reference);
        }
    }
}

#[test]
fn chain_rule_identity_limit_and_linearity() {
    let grid = CartesianGrid::new(7, 5).unwrap();
    let filter = DensityFilter::new(&grid, 1.0);
    let x = pseudo_random(35, 3, -1.0, 1.0);
    let phi_t = pseudo_random(35, 4, 0.0, 1.0);
    let out = chain_to_design(&x, &phi_t, 1e-4, &filter);
    for (a, b) in out.iter().zip(&x) {
        assert!((a - b).abs() < 1e-6);
    }
    let zero = chain_to_design(&[0.0; 35], &phi_t, 8.0, &filter);
    assert!(zero.iter().all(|v| *v == 0.0));
}

/// Separating-axis test for a segment against a closed square; independent
/// of the clipping routine used by the library.
fn sat_segment_square(a: [f64; 2], b: [f64; 2], lo: [f64; 2]) -> bool {
    let hi = [lo[0] + 1.0, lo[1] + 1.0];
    if a[0].max(b[0]) < lo[0] || a[0].min(b[0]) > hi[0] || a[1].max(b[1]) < lo[1] || a[1].min(b[1]) > hi[1] {
        return false;
    }
    let n = [-(b[1] - a[1]), b[0] - a[0]];
    let d = n[0] * a[0] + n[1] * a[1];
    let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    let s: Vec<f64> = corners.iter().map(|c| n[0] * c[0] + n[1] * c[1] - d).collect();
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    min <= 0.0 && max >= 0.0
}

fn skeleton_of(lines: Vec<Vec<[f64; 2]>>) -> TopologicalSkeleton {
    TopologicalSkeleton {
        points: Vec::new(),
        separatrices: lines
            .into_iter()
            .map(|vertices| Separatrix {
                source: 0,
                launch_direction: [1.0, 0.0],
                line: PrincipalStressLine {
                    family: Family::Major,
                    vertices,
                    termination: Termination::Boundary,
                },
            })
            .collect(),
    }
}

#[test]
fn diagonal_segment_matches_intersection_oracle() {
    let grid = CartesianGrid::new(6, 6).unwrap();
    let alpha = vec![0.6; 36];
    for (a, b) in [([0.0, 0.0], [3.0, 3.0]), ([0.3, 5.7], [4.9, 1.2]), ([2.5, 0.0], [2.5, 6.0])] {
        let phi = skeleton_initialization(&skeleton_of(vec![vec![a, b]]), &grid, &alpha);
        for e in 0..36 {
            let (i, j) = grid.cell_of(e);
            let want = sat_segment_square(a, b, [i as f64, j as f64]);
            assert_eq!(phi[e] == 1.0, want, "segment {a:?}-{b:?}, cell ({i}, {j})");
            if !want {
                assert_eq!(phi[e], 0.6);
            }
        }
    }
}

#[test]
fn horizontal_separatrix_sets_one_row() {
    let grid = CartesianGrid::new(10, 6).unwrap();
    let alpha = vec![0.6; 60];
    let line: Vec<[f64; 2]> = (0..=20).map(|k| [0.5 * k as f64, 3.5]).collect();
    let phi = skeleton_initialization(&skeleton_of(vec![line]), &grid, &alpha);
    for e in 0..60 {
        assert_eq!(phi[e] == 1.0, grid.cell_of(e).1 == 3);
    }
}

#[test]
fn zero_iterations_returns_initial_state() {
    let (grid, bc) = cantilever(12, 8);
    let mut cfg = config(&grid, 0.5, 3.0, 1.5);
    cfg.max_iterations = 0;
    let phi0 = pseudo_random(96, 2, 0.0, 1.0);
    let state = run_optimization(cfg, &grid, &bc, phi0.clone()).unwrap();
    assert_eq!(state.phi, phi0);
    assert!(state.history.is_empty());
    assert!(state.sensitivities.is_none());
}

fn small_run(single: bool) -> Vec<HistoryRecord> {
    let (grid, bc) = cantilever(24, 12);
    let mut cfg = config(&grid, 0.5, 3.0, 1.5);
    cfg.max_iterations = 30;
    cfg.alpha_total = Some(0.45);
    cfg.beta.period = 10;
    let move_limit = cfg.mma.move_limit;
    let mut problem = InfillProblem::new(&grid, &bc, cfg).unwrap();
    let mut prev = vec![0.5; grid.num_elements()];
    let run = |problem: &mut InfillProblem, prev: &mut Vec<f64>| {
        problem
            .run(prev.clone(), |state, eval| {
                for (a, b) in state.phi.iter().zip(prev.iter()) {
                    assert!((0.0..=1.0).contains(a));
                    assert!((a - b).abs() <= move_limit + 1e-15);
                }
                *prev = state.phi.clone();
                let (_, rho) = problem_projection(state);
                assert_eq!(rho, state.rho);
                assert!(eval.compliance.is_finite() && eval.compliance > 0.0);
                assert!((0.0..=1.0).contains(&eval.sharpness));
                assert!(eval.dc_drho.iter().all(|d| *d <= 0.0));
                assert!(eval.dg_drho.iter().all(|d| *d >= 0.0));
                Ok(())
            })
            .unwrap()
    };
    let state = if single {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(&mut problem, &mut prev))
    } else {
        run(&mut problem, &mut prev)
    };
    assert_eq!(state.history.len(), 30);
    let sens = state.sensitivities.unwrap();
    assert_eq!(sens.ratio().len(), grid.num_elements());
    assert!(sens.ratio().iter().all(|r| *r >= 0.0));
    state.history
}

fn problem_projection(state: &OptimizationState) -> (Vec<f64>, Vec<f64>) {
    let grid = CartesianGrid::new(24, 12).unwrap();
    let phi_t = density_filter(&state.phi, 1.5, &grid);
    let rho = heaviside_project(&phi_t, state.beta);
    (phi_t, rho)
}

#[test]
fn optimization_loop_invariants_and_determinism() {
    let a = small_run(true);
    let b = small_run(true);
    let c = small_run(false);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.last().unwrap().compliance < a[0].compliance);
    assert_eq!(a[8].beta, 1.0);
    assert_eq!(a[9].beta, 2.0);
}

proptest! {
    #[test]
    fn p_mean_sandwich(ratios in prop::collection::vec(0.0f64..1.0, 1..60), alpha in 0.05f64..0.95, p in 1.0f64..32.0) {
        let alpha_field = vec![alpha; ratios.len()];
        let g = aggregate_constraint(&ratios, &alpha_field, p);
        let top = ratios.iter().fold(0.0f64, |m, r| m.max(r / alpha));
        let n = ratios.len() as f64;
        prop_assert!(top * n.powf(-1.0 / p) <= (g + 1.0) * (1.0 + 1e-12) + 1e-300);
        prop_assert!(g + 1.0 <= top * (1.0 + 1e-12));
    }

    #[test]
    fn projection_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, beta in 0.01f64..128.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (rl, rh) = (heaviside(lo, beta), heaviside(hi, beta));
        prop_assert!(rl <= rh);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&rl));
    }

    #[test]
    fn sharpness_in_unit_interval(rho in prop::collection::vec(0.0f64..=1.0, 1..100)) {
        let s = sharpness(&rho);
        prop_assert!((0.0..=1.0).contains(&s));
    }
}
