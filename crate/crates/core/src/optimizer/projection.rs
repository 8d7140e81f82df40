//! Smoothed Heaviside projection and the sharpness measure.

/// `[tanh(β/2) + tanh(β(x - ½))] / (2 tanh(β/2))`.
#[inline]
pub fn heaviside(x: f64, beta: f64) -> f64 {
    let t = (0.5 * beta).tanh();
    (t + (beta * (x - 0.5)).tanh()) / (2.0 * t)
}

#[inline]
pub fn heaviside_slope(x: f64, beta: f64) -> f64 {
    let th = (beta * (x - 0.5)).tanh();
    beta * (1.0 - th * th) / (2.0 * (0.5 * beta).tanh())
}

pub fn heaviside_project(phi_tilde: &[f64], beta: f64) -> Vec<f64> {
    phi_tilde.iter().map(|&x| heaviside(x, beta)).collect()
}

pub fn heaviside_derivative(phi_tilde: &[f64], beta: f64) -> Vec<f64> {
    phi_tilde.iter().map(|&x| heaviside_slope(x, beta)).collect()
}

/// `s = (4/n) Σ ρ_e (1 - ρ_e)`.
pub fn sharpness(rho: &[f64]) -> f64 {
    4.0 * rho.iter().map(|r| r * (1.0 - r)).sum::<f64>() / rho.len() as f64
}

pub fn mean_density(rho: &[f64]) -> f64 {
    rho.iter().sum::<f64>() / rho.len() as f64
}
