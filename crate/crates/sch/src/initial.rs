//! Built-in initial data generators.

use std::sync::Arc;

use thiserror::Error;

use crate::config::InitialSection;
use crate::field::Field;
use crate::grid::Grid;
use crate::rng::{stream_rng, StreamKey};
use rand::Rng;

#[derive(Debug, Error)]
pub enum InitialError {
    #[error("interface center has {got} coordinates, grid dimension is {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("interface touches the domain boundary (center {center:?}, radius {radius})")]
    TouchesBoundary { center: Vec<f64>, radius: f64 },
    #[error("cosine mode has {got} indices, grid dimension is {want}")]
    BadMode { got: usize, want: usize },
}

/// `u₀(x) = tanh(d_Γ(x)/(√2 ε))` around a circle (d = 2) or sphere (d = 3),
/// negative inside. The interface must lie strictly inside the domain.
pub fn tanh_circle(
    grid: &Arc<Grid>,
    center: &[f64],
    radius: f64,
    epsilon: f64,
) -> Result<Field, InitialError> {
    let d = grid.dim();
    if center.len() != d {
        return Err(InitialError::DimensionMismatch { got: center.len(), want: d });
    }
    let touches = center
        .iter()
        .any(|&c| c - radius <= 0.0 || c + radius >= 1.0);
    if radius <= 0.0 || touches {
        return Err(InitialError::TouchesBoundary { center: center.to_vec(), radius });
    }
    let center = center.to_vec();
    Ok(Field::from_fn(grid.clone(), move |x| {
        let dist = x
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        ((dist - radius) / (std::f64::consts::SQRT_2 * epsilon)).tanh()
    }))
}

/// `amplitude · Π_a cos(π k_a x_a)`.
pub fn cosine_mode(
    grid: &Arc<Grid>,
    amplitude: f64,
    mode: &[usize],
) -> Result<Field, InitialError> {
    let d = grid.dim();
    if mode.len() != d {
        return Err(InitialError::BadMode { got: mode.len(), want: d });
    }
    let mode = mode.to_vec();
    Ok(Field::from_fn(grid.clone(), move |x| {
        amplitude
            * x.iter()
                .zip(&mode)
                .map(|(&xa, &k)| (std::f64::consts::PI * k as f64 * xa).cos())
                .product::<f64>()
    }))
}

/// Uniformly random values in `(-amplitude, amplitude)`, shifted to mean
/// zero; drawn from the `(seed, path, step = 0)` stream.
pub fn random_mean_zero(grid: &Arc<Grid>, amplitude: f64, seed: u64, path: u64) -> Field {
    let mut rng = stream_rng(StreamKey { seed, path, step: 0 });
    let f = Field::from_values(
        grid.clone(),
        (0..grid.len())
            .map(|_| rng.random_range(-amplitude..amplitude))
            .collect(),
    );
    let m = f.mean();
    f.map(|v| v - m)
}

/// Materialize the config-file selector.
pub fn build(
    grid: &Arc<Grid>,
    section: &InitialSection,
    epsilon: f64,
    seed: u64,
    path: u64,
) -> Result<Field, InitialError> {
    match section {
        InitialSection::Constant { value } => Ok(Field::constant(grid.clone(), *value)),
        InitialSection::Cosine { amplitude, mode } => cosine_mode(grid, *amplitude, mode),
        InitialSection::Random { amplitude } => Ok(random_mean_zero(grid, *amplitude, seed, path)),
        InitialSection::TanhCircle { center, radius } => {
            tanh_circle(grid, center, *radius, epsilon)
        }
    }
}
