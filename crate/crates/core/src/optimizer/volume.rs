//! Local volume measure, its p-mean aggregate, and the global volume bound.

use rayon::prelude::*;

use crate::grid::NeighborhoodTable;

/// `ρ̄_e`: mean density over the disc neighborhood of each element.
pub fn local_volume(rho: &[f64], nb: &NeighborhoodTable) -> Vec<f64> {
    (0..rho.len())
        .into_par_iter()
        .map(|e| nb.neighbors(e).map(|i| rho[i]).sum::<f64>() / nb.count(e) as f64)
        .collect()
}

/// `(1/n) Σ (ρ̄_e/α_e)^p` raised to `1/p`, evaluated relative to the largest
/// ratio so that large `p` cannot overflow.
fn p_mean(rho_bar: &[f64], alpha: &[f64], p: f64) -> f64 {
    let top = rho_bar
        .iter()
        .zip(alpha)
        .map(|(r, a)| r / a)
        .fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    let mean = rho_bar
        .iter()
        .zip(alpha)
        .map(|(r, a)| (r / a / top).powf(p))
        .sum::<f64>()
        / rho_bar.len() as f64;
    top * mean.powf(1.0 / p)
}

/// `g = ((1/n) Σ (ρ̄_e/α_e)^p)^(1/p) - 1`.
pub fn aggregate_constraint(rho_bar: &[f64], alpha: &[f64], p: f64) -> f64 {
    p_mean(rho_bar, alpha, p) - 1.0
}

/// `(1/n) Σ ρ_e - α_total`.
pub fn global_constraint(rho: &[f64], alpha_total: f64) -> f64 {
    rho.iter().sum::<f64>() / rho.len() as f64 - alpha_total
}

/// `∂g/∂ρ_i = (1/n) Σ_{e: i ∈ N_e} ((ρ̄_e/α_e) / (g+1))^(p-1) / (α_e |N_e|)`.
pub fn constraint_sensitivity(
    rho_bar: &[f64],
    alpha: &[f64],
    p: f64,
    nb: &NeighborhoodTable,
) -> Vec<f64> {
    let n = rho_bar.len() as f64;
    let level = p_mean(rho_bar, alpha, p);
    let weight: Vec<f64> = (0..rho_bar.len())
        .map(|e| {
            let ratio = if level > 0.0 {
                (rho_bar[e] / alpha[e] / level).powf(p - 1.0)
            } else if p == 1.0 {
                1.0
            } else {
                0.0
            };
            ratio / (alpha[e] * nb.count(e) as f64 * n)
        })
        .collect();
    (0..rho_bar.len())
        .into_par_iter()
        .map(|i| nb.members_of(i).map(|e| weight[e]).sum())
        .collect()
}
