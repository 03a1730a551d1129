//! Discrete space-time white-noise increments.
//!
//! One increment is the nodal-hat expansion
//!
//! ```text
//! Δ_jW(x) = Σ_l φ_l(x) / √((d+1)⁻¹ (φ_l, 1)) · Δ_jβ_l,   Δ_jβ_l ~ N(0, τ) iid,
//! ```
//!
//! evaluated pointwise at the solver grid's collocation nodes, followed by
//! the mean correction `Δ_jW̄ = Δ_jW − m(Δ_jW)` that preserves the zero
//! mean (and hence mass conservation) on the discrete level.
//!
//! The hats are tensor products of one-dimensional hats on a uniform mesh
//! with the boundary nodes included, so every constant in the quasi-uniformity
//! bounds is available in closed form. The `(d+1)⁻¹` normalization is kept
//! verbatim from the simplex construction; it is a constant factor that
//! cancels in all scaling studies.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::field::Field;
use crate::fit::{linear_fit, Fit};
use crate::grid::Grid;
use crate::rng::{stream_rng, StreamKey};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("noise mesh exponent must be positive, got {0}")]
    InvalidEta(f64),
    #[error("epsilon must lie in (0,1), got {0}")]
    InvalidEpsilon(f64),
    #[error("noise mesh needs at least 2 nodes per axis, got {0}")]
    MeshTooCoarse(usize),
    #[error("moment statistics need at least {min} samples, got {got}")]
    InsufficientSamples { min: usize, got: usize },
    #[error("moment statistics require identical (mesh, tau) across samples")]
    MixedBatches,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad noise path file: {0}")]
    BadPathFile(String),
}

/// Uniform tensor mesh of nodal hat functions on `[0,1]^d`, boundary nodes
/// included.
pub struct NoiseMesh {
    d: usize,
    m: usize,
    h: f64,
    target_h: f64,
}

impl NoiseMesh {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Nodes per axis.
    pub fn nodes_per_axis(&self) -> usize {
        self.m
    }

    /// Realized mesh size `1/(m-1)`.
    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    /// The requested mesh size `ε^η` before rounding to the grid of
    /// realizable meshes.
    pub fn target_mesh_size(&self) -> f64 {
        self.target_h
    }

    /// Total node count `L = m^d`.
    pub fn num_nodes(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    fn axis_index(&self, l: usize, axis: usize) -> usize {
        // row-major over axes
        let mut rest = l;
        let mut idx = 0;
        for a in (0..self.d).rev() {
            let i = rest % self.m;
            rest /= self.m;
            if a == axis {
                idx = i;
            }
        }
        idx
    }

    fn is_boundary_1d(&self, i: usize) -> bool {
        i == 0 || i == self.m - 1
    }

    /// `(φ_l, 1)`: closed-form tensor integral, `h` per interior axis index
    /// and `h/2` per boundary one.
    pub fn integral(&self, l: usize) -> f64 {
        let mut v = 1.0;
        for a in 0..self.d {
            let i = self.axis_index(l, a);
            v *= if self.is_boundary_1d(i) { self.h / 2.0 } else { self.h };
        }
        v
    }

    /// `‖φ_l‖²_{L²}`: `2h/3` per interior axis index, `h/3` per boundary one.
    pub fn l2_norm_sq(&self, l: usize) -> f64 {
        let mut v = 1.0;
        for a in 0..self.d {
            let i = self.axis_index(l, a);
            v *= if self.is_boundary_1d(i) { self.h / 3.0 } else { 2.0 * self.h / 3.0 };
        }
        v
    }

    /// Amplitude `√(d+1)/√((φ_l,1))` multiplying the Gaussian draw of node `l`.
    pub fn draw_scale(&self, l: usize) -> f64 {
        ((self.d as f64 + 1.0) / self.integral(l)).sqrt()
    }

    /// Evaluate `φ_l(x)` for the tensor hat at node `l`.
    pub fn hat(&self, l: usize, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for (a, &xa) in x.iter().enumerate() {
            let i = self.axis_index(l, a);
            let t = (xa - i as f64 * self.h) / self.h;
            v *= (1.0 - t.abs()).max(0.0);
        }
        v
    }
}

/// Noise mesh with `h = 1/(m-1)` closest to the target `ε^η`,
/// `m = round(ε^{-η}) + 1`.
pub fn make_noise_mesh(d: usize, eta: f64, eps: f64) -> Result<Arc<NoiseMesh>, NoiseError> {
    if !(eta > 0.0) {
        return Err(NoiseError::InvalidEta(eta));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(NoiseError::InvalidEpsilon(eps));
    }
    let m = eps.powf(-eta).round() as usize + 1;
    if m < 2 {
        return Err(NoiseError::MeshTooCoarse(m));
    }
    Ok(Arc::new(NoiseMesh {
        d,
        m,
        h: 1.0 / (m - 1) as f64,
        target_h: eps.powf(eta),
    }))
}

/// Mesh with the prescribed size `h` (realized as `m = round(1/h) + 1`
/// nodes per axis), for studies that sweep `h` directly.
pub fn make_noise_mesh_from_h(d: usize, h: f64) -> Result<Arc<NoiseMesh>, NoiseError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(NoiseError::InvalidEta(h));
    }
    let m = (1.0 / h).round() as usize + 1;
    if m < 2 {
        return Err(NoiseError::MeshTooCoarse(m));
    }
    Ok(Arc::new(NoiseMesh { d, m, h: 1.0 / (m - 1) as f64, target_h: h }))
}

/// One sampled increment `Δ_jW` together with its mean-corrected version.
pub struct NoiseIncrement {
    pub mesh: Arc<NoiseMesh>,
    /// Gaussian draws `Δ_jβ_l ~ N(0, τ)`, node-major order.
    pub draws: Vec<f64>,
    /// `Δ_jW` evaluated at the solver grid nodes.
    pub raw: Field,
    /// `Δ_jW̄ = Δ_jW − m(Δ_jW)`.
    pub corrected: Field,
    pub step: usize,
    pub tau: f64,
}

/// Per-axis interpolation stencil of the solver grid into the noise mesh.
struct AxisStencil {
    /// For each grid index: (left mesh node, weight of left node).
    cells: Vec<(usize, f64)>,
}

fn axis_stencil(grid: &Grid, mesh: &NoiseMesh) -> AxisStencil {
    let n = grid.points_per_axis();
    let h = mesh.mesh_size();
    let cells = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            let mut c = (x / h).floor() as usize;
            if c >= mesh.nodes_per_axis() - 1 {
                c = mesh.nodes_per_axis() - 2;
            }
            let t = x / h - c as f64;
            (c, 1.0 - t)
        })
        .collect();
    AxisStencil { cells }
}

fn evaluate_raw(mesh: &Arc<NoiseMesh>, grid: &Arc<Grid>, scaled: &[f64]) -> Field {
    let d = grid.dim();
    let n = grid.points_per_axis();
    let m = mesh.nodes_per_axis();
    let st = axis_stencil(grid, mesh);
    let mut values = vec![0.0; grid.len()];
    match d {
        2 => {
            for i0 in 0..n {
                let (c0, w0) = st.cells[i0];
                for i1 in 0..n {
                    let (c1, w1) = st.cells[i1];
                    let base = c0 * m + c1;
                    let v = w0 * (w1 * scaled[base] + (1.0 - w1) * scaled[base + 1])
                        + (1.0 - w0) * (w1 * scaled[base + m] + (1.0 - w1) * scaled[base + m + 1]);
                    values[i0 * n + i1] = v;
                }
            }
        }
        _ => {
            for i0 in 0..n {
                let (c0, w0) = st.cells[i0];
                for i1 in 0..n {
                    let (c1, w1) = st.cells[i1];
                    for i2 in 0..n {
                        let (c2, w2) = st.cells[i2];
                        let mut v = 0.0;
                        for (da, wa) in [(0, w0), (1, 1.0 - w0)] {
                            for (db, wb) in [(0, w1), (1, 1.0 - w1)] {
                                let base = ((c0 + da) * m + c1 + db) * m + c2;
                                let line = wa * wb;
                                v += line * (w2 * scaled[base] + (1.0 - w2) * scaled[base + 1]);
                            }
                        }
                        values[(i0 * n + i1) * n + i2] = v;
                    }
                }
            }
        }
    }
    Field::from_values(grid.clone(), values)
}

/// Build the increment from explicit draws (test hook, persistence replay).
pub fn increment_from_draws(
    mesh: &Arc<NoiseMesh>,
    grid: &Arc<Grid>,
    tau: f64,
    step: usize,
    draws: Vec<f64>,
) -> NoiseIncrement {
    assert_eq!(draws.len(), mesh.num_nodes());
    let scaled: Vec<f64> = draws
        .iter()
        .enumerate()
        .map(|(l, &b)| b * mesh.draw_scale(l))
        .collect();
    let raw = evaluate_raw(mesh, grid, &scaled);
    let corrected = mean_correct(&raw);
    NoiseIncrement { mesh: mesh.clone(), draws, raw, corrected, step, tau }
}

/// Sample `Δ_jW` for the stream key; deterministic for a fixed key
/// regardless of thread count.
pub fn sample_increment(
    mesh: &Arc<NoiseMesh>,
    grid: &Arc<Grid>,
    tau: f64,
    key: StreamKey,
) -> NoiseIncrement {
    let mut rng = stream_rng(key);
    let sd = tau.sqrt();
    let draws: Vec<f64> = (0..mesh.num_nodes())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    increment_from_draws(mesh, grid, tau, key.step as usize, draws)
}

/// `v − m(v)` with the midpoint-quadrature mean.
pub fn mean_correct(raw: &Field) -> Field {
    let m = raw.mean();
    raw.map(|v| v - m)
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

fn mc_estimate(samples: &[f64]) -> Estimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    Estimate { value: mean, std_error: (var / n).sqrt() }
}

/// Monte-Carlo estimates of the three increment moments:
/// `E|m(Δ_jW)|²`, `E‖Δ_jW̄‖²`, `E|m(Δ_jW)|⁴`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MomentReport {
    pub samples: usize,
    pub dim: usize,
    pub h: f64,
    pub tau: f64,
    pub mean_sq: Estimate,
    pub corrected_norm_sq: Estimate,
    pub mean_fourth: Estimate,
}

pub fn moment_stats(samples: &[NoiseIncrement]) -> Result<MomentReport, NoiseError> {
    const MIN: usize = 100;
    if samples.len() < MIN {
        return Err(NoiseError::InsufficientSamples { min: MIN, got: samples.len() });
    }
    let mesh = &samples[0].mesh;
    let tau = samples[0].tau;
    if samples.iter().any(|s| {
        s.mesh.dim() != mesh.dim() || s.mesh.nodes_per_axis() != mesh.nodes_per_axis() || s.tau != tau
    }) {
        return Err(NoiseError::MixedBatches);
    }
    let mut m2 = Vec::with_capacity(samples.len());
    let mut m4 = Vec::with_capacity(samples.len());
    let mut c2 = Vec::with_capacity(samples.len());
    for s in samples {
        let m = s.raw.mean();
        m2.push(m * m);
        m4.push(m * m * m * m);
        let nrm = s.corrected.norm(crate::field::Norm::L2).unwrap();
        c2.push(nrm * nrm);
    }
    Ok(MomentReport {
        samples: samples.len(),
        dim: mesh.dim(),
        h: mesh.mesh_size(),
        tau,
        mean_sq: mc_estimate(&m2),
        corrected_norm_sq: mc_estimate(&c2),
        mean_fourth: mc_estimate(&m4),
    })
}

/// Least-squares exponent of `E‖Δ_jW̄‖²` versus `h` over batches with a
/// common `τ`; `None` with fewer than two distinct mesh sizes.
pub fn fit_h_exponent(reports: &[MomentReport]) -> Option<Fit> {
    let xs: Vec<f64> = reports.iter().map(|r| r.h.ln()).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.corrected_norm_sq.value.ln()).collect();
    linear_fit(&xs, &ys)
}

/// Least-squares exponent of `E‖Δ_jW̄‖²` versus `τ` over batches with a
/// common mesh.
pub fn fit_tau_exponent(reports: &[MomentReport]) -> Option<Fit> {
    let xs: Vec<f64> = reports.iter().map(|r| r.tau.ln()).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.corrected_norm_sq.value.ln()).collect();
    linear_fit(&xs, &ys)
}

/// Exact values of the three moments for the grid-sampled increment: with
/// `a_l = φ_l/√((d+1)⁻¹(φ_l,1))` evaluated on the grid,
/// `E|m|² = τ Σ_l m(a_l)²`, `E‖Δ_jW̄‖² = τ Σ_l (‖a_l‖² − m(a_l)²)`,
/// `E|m|⁴ = 3 (E|m|²)²` (Gaussian fourth moment).
pub struct MomentOracle {
    pub mean_sq: f64,
    pub corrected_norm_sq: f64,
    pub mean_fourth: f64,
}

pub fn moment_oracle(mesh: &Arc<NoiseMesh>, grid: &Arc<Grid>, tau: f64) -> MomentOracle {
    let mut sum_mean_sq = 0.0;
    let mut sum_var = 0.0;
    let nn = grid.len() as f64;
    let d = grid.dim();
    for l in 0..mesh.num_nodes() {
        let scale = mesh.draw_scale(l);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for idx in 0..grid.len() {
            let c = grid.coords(idx);
            let v = scale * mesh.hat(l, &c[..d]);
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / nn;
        sum_mean_sq += mean * mean;
        sum_var += s2 / nn - mean * mean;
    }
    MomentOracle {
        mean_sq: tau * sum_mean_sq,
        corrected_norm_sq: tau * sum_var,
        mean_fourth: 3.0 * (tau * sum_mean_sq) * (tau * sum_mean_sq),
    }
}

/// Persist the Gaussian draws of a path (header `SCHN`) so that other
/// pipelines can replay the identical noise.
pub fn write_noise_path(
    path: &Path,
    mesh: &NoiseMesh,
    tau: f64,
    seed: u64,
    draws_per_step: &[Vec<f64>],
) -> Result<(), NoiseError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"SCHN")?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(mesh.dim() as u32).to_le_bytes())?;
    w.write_all(&(mesh.nodes_per_axis() as u32).to_le_bytes())?;
    w.write_all(&(draws_per_step.len() as u32).to_le_bytes())?;
    w.write_all(&tau.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    for draws in draws_per_step {
        assert_eq!(draws.len(), mesh.num_nodes());
        for v in draws {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub struct NoisePathFile {
    pub d: usize,
    pub m: usize,
    pub tau: f64,
    pub seed: u64,
    pub draws_per_step: Vec<Vec<f64>>,
}

pub fn read_noise_path(path: &Path) -> Result<NoisePathFile, NoiseError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"SCHN" {
        return Err(NoiseError::BadPathFile("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != 1 {
        return Err(NoiseError::BadPathFile("unsupported version".into()));
    }
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let m = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let steps = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let tau = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let nodes = m.pow(d as u32);
    let mut draws_per_step = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut draws = vec![0.0; nodes];
        for v in draws.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        draws_per_step.push(draws);
    }
    Ok(NoisePathFile { d, m, tau, seed, draws_per_step })
}
