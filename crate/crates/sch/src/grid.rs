//! Cell-centered collocation grids on `[0,1]^d` with Neumann cosine-basis
//! spectral metadata.
//!
//! The grid carries everything the spectral operators need: the eigenvalue
//! table of the Neumann Laplacian (one of two variants, see
//! [`EigenvalueVariant`]), the Parseval scaling between collocation values
//! and orthonormal-basis coefficients, and cached transform plans.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::CosinePlans;

/// Eigenvalues `λ_k` associated with the cosine modes `Π_a cos(π k_a x_a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EigenvalueVariant {
    /// `λ_k = π²|k|²`: the exact Neumann-Laplacian eigenvalues. Analytic
    /// test oracles assume this variant.
    #[default]
    #[serde(rename = "exact-spectral")]
    ExactSpectral,
    /// `λ_k = Σ_a (2n sin(π k_a / 2n))²`: the symbol of the second-order
    /// finite-difference Laplacian on the same grid.
    #[serde(rename = "discrete")]
    Discrete,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("spatial dimension must be 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("need at least 4 points per axis, got {0}")]
    TooFewPoints(usize),
}

/// Uniform cell-centered grid on `[0,1]^d` with `n` points per axis.
///
/// Node coordinates are `x_i = (i + 1/2)/n` per axis, so all nodes lie
/// strictly inside `(0,1)` and the midpoint quadrature rule coincides with
/// the trapezoid rule for the cosine basis.
pub struct Grid {
    d: usize,
    n: usize,
    variant: EigenvalueVariant,
    /// Full multi-index eigenvalue table, length `n^d`, row-major.
    lambda: Vec<f64>,
    /// Forward scaling: orthonormal coefficient = raw per-axis DCT-II output
    /// times this factor.
    fwd_scale: Vec<f64>,
    /// Inverse scaling applied before the per-axis DCT-III synthesis.
    inv_scale: Vec<f64>,
    plans: CosinePlans,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Points per axis.
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of collocation nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `1/n`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn variant(&self) -> EigenvalueVariant {
        self.variant
    }

    /// Eigenvalue table indexed like the spectral coefficient array.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    pub(crate) fn forward_scale(&self) -> &[f64] {
        &self.fwd_scale
    }

    pub(crate) fn inverse_scale(&self) -> &[f64] {
        &self.inv_scale
    }

    pub(crate) fn plans(&self) -> &CosinePlans {
        &self.plans
    }

    /// Coordinates of the node with flat row-major index `idx`.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        let mut rest = idx;
        for a in (0..self.d).rev() {
            let i = rest % self.n;
            rest /= self.n;
            out[a] = (i as f64 + 0.5) / self.n as f64;
        }
        out
    }

    /// True when the two grids are interchangeable for field operations.
    pub fn compatible(&self, other: &Grid) -> bool {
        self.d == other.d && self.n == other.n && self.variant == other.variant
    }
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("d", &self.d)
            .field("n", &self.n)
            .field("variant", &self.variant)
            .finish()
    }
}

fn lambda_1d(n: usize, variant: EigenvalueVariant) -> Vec<f64> {
    (0..n)
        .map(|k| match variant {
            EigenvalueVariant::ExactSpectral => (PI * k as f64).powi(2),
            EigenvalueVariant::Discrete => {
                let s = 2.0 * n as f64 * (PI * k as f64 / (2.0 * n as f64)).sin();
                s * s
            }
        })
        .collect()
}

/// Build a grid with the default (exact-spectral) eigenvalue variant.
pub fn make_grid(d: usize, n: usize) -> Result<Arc<Grid>, GridError> {
    make_grid_with(d, n, EigenvalueVariant::ExactSpectral)
}

/// Build a grid with an explicit eigenvalue variant.
pub fn make_grid_with(
    d: usize,
    n: usize,
    variant: EigenvalueVariant,
) -> Result<Arc<Grid>, GridError> {
    if d != 2 && d != 3 {
        return Err(GridError::InvalidDimension(d));
    }
    if n < 4 {
        return Err(GridError::TooFewPoints(n));
    }
    let l1 = lambda_1d(n, variant);
    let total = n.pow(d as u32);
    let mut lambda = vec![0.0; total];
    let mut fwd_scale = vec![1.0; total];
    let mut inv_scale = vec![1.0; total];
    let sqrt2 = std::f64::consts::SQRT_2;
    let nf = n as f64;
    for (idx, lam) in lambda.iter_mut().enumerate() {
        let mut rest = idx;
        let mut l = 0.0;
        let mut fs = 1.0;
        let mut is = 1.0;
        for _ in 0..d {
            let k = rest % n;
            rest /= n;
            l += l1[k];
            if k == 0 {
                fs *= 1.0 / nf;
                is *= 2.0;
            } else {
                fs *= sqrt2 / nf;
                is *= sqrt2;
            }
        }
        *lam = l;
        fwd_scale[idx] = fs;
        inv_scale[idx] = is;
    }
    Ok(Arc::new(Grid {
        d,
        n,
        variant,
        lambda,
        fwd_scale,
        inv_scale,
        plans: CosinePlans::new(n),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimension_and_size() {
        assert!(matches!(make_grid(1, 64), Err(GridError::InvalidDimension(1))));
        assert!(matches!(make_grid(4, 64), Err(GridError::InvalidDimension(4))));
        assert!(matches!(make_grid(2, 3), Err(GridError::TooFewPoints(3))));
    }

    #[test]
    fn node_counts_and_spacing() {
        let g = make_grid(2, 64).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.spacing(), 1.0 / 64.0);
        let g3 = make_grid(3, 16).unwrap();
        assert_eq!(g3.len(), 4096);
    }

    #[test]
    fn coords_strictly_inside() {
        let g = make_grid(2, 8).unwrap();
        for idx in 0..g.len() {
            let c = g.coords(idx);
            for a in 0..2 {
                assert!(c[a] > 0.0 && c[a] < 1.0);
            }
        }
        // first and last nodes of an axis
        assert_eq!(g.coords(0)[0], 0.5 / 8.0);
        assert_eq!(g.coords(g.len() - 1)[1], 7.5 / 8.0);
    }

    #[test]
    fn eigenvalue_tables() {
        let g = make_grid(2, 8).unwrap();
        assert_eq!(g.eigenvalues()[0], 0.0);
        // mode (0,1) and (1,0)
        assert!((g.eigenvalues()[1] - PI * PI).abs() < 1e-12);
        assert!((g.eigenvalues()[8] - PI * PI).abs() < 1e-12);
        let gd = make_grid_with(2, 8, EigenvalueVariant::Discrete).unwrap();
        assert_eq!(gd.eigenvalues()[0], 0.0);
        let s = 16.0 * (PI / 16.0).sin();
        assert!((gd.eigenvalues()[1] - s * s).abs() < 1e-12);
        // discrete symbol approaches the exact one for low modes
        assert!((gd.eigenvalues()[1] - PI * PI).abs() / (PI * PI) < 0.02);
        let gd64 = make_grid_with(2, 64, EigenvalueVariant::Discrete).unwrap();
        assert!((gd64.eigenvalues()[1] - PI * PI).abs() / (PI * PI) < 3e-4);
    }
}
