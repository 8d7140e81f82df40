//! Linear cone density filter and its transpose.

use rayon::prelude::*;

use crate::grid::CartesianGrid;

/// Row-normalized cone filter `φ̃_e = Σ w_ei φ_i / Σ w_ei`, `w_ei = max(0, r - |x_i - x_e|)`.
#[derive(Debug, Clone)]
pub struct DensityFilter {
    grid: CartesianGrid,
    radius: f64,
    stencil: Vec<(i32, i32, f64)>,
    row_sums: Vec<f64>,
}

impl DensityFilter {
    pub fn new(grid: &CartesianGrid, radius: f64) -> Self {
        let reach = radius.ceil() as i32;
        let mut stencil = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let w = radius - f64::from(di * di + dj * dj).sqrt();
                if w > 0.0 {
                    stencil.push((di, dj, w));
                }
            }
        }
        let mut filter = Self {
            grid: grid.clone(),
            radius,
            stencil,
            row_sums: Vec::new(),
        };
        filter.row_sums = (0..grid.num_elements())
            .into_par_iter()
            .map(|e| filter.gather(e, |_| 1.0))
            .collect();
        filter
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Weighted sum over the stencil of `e`, in fixed stencil order.
    #[inline]
    fn gather(&self, e: usize, value: impl Fn(usize) -> f64) -> f64 {
        let (i, j) = self.grid.cell_of(e);
        let (i, j) = (i as isize, j as isize);
        let mut acc = 0.0;
        for &(di, dj, w) in &self.stencil {
            if let Some(k) = self.grid.element_at(i + di as isize, j + dj as isize) {
                acc += w * value(k);
            }
        }
        acc
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        assert_eq!(phi.len(), self.row_sums.len());
        (0..phi.len())
            .into_par_iter()
            .map(|e| self.gather(e, |k| phi[k]) / self.row_sums[e])
            .collect()
    }

    /// Transpose of [`apply`](Self::apply); the weights are symmetric, so the
    /// transpose only moves the row normalization onto the input.
    pub fn adjoint(&self, s: &[f64]) -> Vec<f64> {
        assert_eq!(s.len(), self.row_sums.len());
        let scaled: Vec<f64> = s.iter().zip(&self.row_sums).map(|(s, w)| s / w).collect();
        (0..s.len())
            .into_par_iter()
            .map(|i| self.gather(i, |e| scaled[e]))
            .collect()
    }
}

pub fn density_filter(phi: &[f64], radius: f64, grid: &CartesianGrid) -> Vec<f64> {
    DensityFilter::new(grid, radius).apply(phi)
}

pub fn filter_adjoint(s: &[f64], radius: f64, grid: &CartesianGrid) -> Vec<f64> {
    DensityFilter::new(grid, radius).adjoint(s)
}
