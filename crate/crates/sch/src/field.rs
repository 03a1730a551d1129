//! Scalar fields on a [`Grid`], their spectral view, and the operator /
//! norm toolbox of the H⁻¹ gradient-flow setting.
//!
//! A [`Field`] holds collocation values; a [`Spectrum`] holds coefficients
//! with respect to the L²-orthonormal Neumann cosine basis
//! `ê_k = Π_a (k_a = 0 ? 1 : √2 cos(π k_a x_a))`. With this convention
//! the `k = 0` coefficient equals the field mean and the discrete Parseval
//! identity `‖v‖² = Σ_k v̂_k²` holds exactly for the midpoint quadrature.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::Grid;
use crate::transform;

pub const DEFAULT_MEANZERO_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("operand requires a mean-zero field: |mean| = {mean:e} exceeds {tol:e}")]
    NotMeanZero { mean: f64, tol: f64 },
    #[error("fields live on incompatible grids")]
    GridMismatch,
    #[error("level set is empty")]
    EmptyLevelSet,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad snapshot file: {0}")]
    BadSnapshot(String),
}

/// Field norms. `Halpha` is the seminorm `|v|_α`;
/// `HalphaFull` adds the mean term, `(|v|_α² + m(v)²)^½`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    L2,
    L4,
    Lp(f64),
    Linf,
    H1Semi,
    Hminus1,
    Halpha(f64),
    HalphaFull(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inner {
    L2,
    Hminus1,
}

/// Real scalar field sampled at the grid's collocation nodes.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

/// Orthonormal cosine-basis coefficients of a field.
#[derive(Clone)]
pub struct Spectrum {
    grid: Arc<Grid>,
    coeffs: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let len = grid.len();
        Field { grid, values: vec![0.0; len] }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let len = grid.len();
        Field { grid, values: vec![c; len] }
    }

    /// Evaluate `f` at every node; the slice holds the `d` coordinates.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|idx| {
                let c = grid.coords(idx);
                f(&c[..d])
            })
            .collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Midpoint-quadrature mean `m(v) = ∫ v dx` (domain volume is 1).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert!(self.grid.compatible(&other.grid));
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += a * other`, in place.
    pub fn add_scaled(&mut self, other: &Field, a: f64) {
        assert!(self.grid.compatible(&other.grid));
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in self.values.iter_mut() {
            *x *= a;
        }
    }

    pub fn to_spectrum(&self) -> Spectrum {
        let mut coeffs = self.values.clone();
        transform::analyze(self.grid.plans(), self.grid.dim(), &mut coeffs);
        for (c, s) in coeffs.iter_mut().zip(self.grid.forward_scale()) {
            *c *= s;
        }
        Spectrum { grid: self.grid.clone(), coeffs }
    }

    /// Spectral multiplier `-λ_k`; annihilates constants since `λ_0 = 0`.
    pub fn laplacian(&self) -> Field {
        let mut s = self.to_spectrum();
        for (c, &l) in s.coeffs.iter_mut().zip(self.grid.eigenvalues()) {
            *c *= -l;
        }
        s.to_field()
    }

    /// Inverse Neumann Laplacian `(-Δ)^{-1}` of a mean-zero field; the
    /// result is mean-zero.
    pub fn inv_laplacian(&self) -> Result<Field, FieldError> {
        self.inv_laplacian_with_tol(DEFAULT_MEANZERO_TOL)
    }

    pub fn inv_laplacian_with_tol(&self, tol: f64) -> Result<Field, FieldError> {
        let mean = self.mean();
        if mean.abs() > tol {
            return Err(FieldError::NotMeanZero { mean, tol });
        }
        let mut s = self.to_spectrum();
        s.coeffs[0] = 0.0;
        for (c, &l) in s.coeffs.iter_mut().zip(self.grid.eigenvalues()).skip(1) {
            *c /= l;
        }
        Ok(s.to_field())
    }

    /// Fractional power `(-Δ)^s`. The `k = 0` mode is annihilated for
    /// `s > 0` (since `λ_0 = 0`), kept for `s = 0`, and requires a
    /// mean-zero input for `s < 0`.
    pub fn frac_laplacian(&self, s: f64) -> Result<Field, FieldError> {
        self.frac_laplacian_with_tol(s, DEFAULT_MEANZERO_TOL)
    }

    pub fn frac_laplacian_with_tol(&self, s: f64, tol: f64) -> Result<Field, FieldError> {
        if s < 0.0 {
            let mean = self.mean();
            if mean.abs() > tol {
                return Err(FieldError::NotMeanZero { mean, tol });
            }
        }
        let mut spec = self.to_spectrum();
        spec.coeffs[0] = if s == 0.0 { spec.coeffs[0] } else { 0.0 };
        for (c, &l) in spec.coeffs.iter_mut().zip(self.grid.eigenvalues()).skip(1) {
            *c *= l.powf(s);
        }
        Ok(spec.to_field())
    }

    pub fn norm(&self, kind: Norm) -> Result<f64, FieldError> {
        let quad = |p: f64| -> f64 {
            let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
            (s / self.values.len() as f64).powf(1.0 / p)
        };
        match kind {
            Norm::L2 => {
                let s: f64 = self.values.iter().map(|v| v * v).sum();
                Ok((s / self.values.len() as f64).sqrt())
            }
            Norm::L4 => Ok(quad(4.0)),
            Norm::Lp(p) => Ok(quad(p)),
            Norm::Linf => Ok(self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
            Norm::H1Semi => Ok(self.to_spectrum().h1_semi()),
            Norm::Hminus1 => {
                let mean = self.mean();
                if mean.abs() > DEFAULT_MEANZERO_TOL {
                    return Err(FieldError::NotMeanZero { mean, tol: DEFAULT_MEANZERO_TOL });
                }
                Ok(self.to_spectrum().hminus1())
            }
            Norm::Halpha(alpha) => {
                if alpha < 0.0 {
                    let mean = self.mean();
                    if mean.abs() > DEFAULT_MEANZERO_TOL {
                        return Err(FieldError::NotMeanZero { mean, tol: DEFAULT_MEANZERO_TOL });
                    }
                }
                Ok(self.to_spectrum().halpha(alpha))
            }
            Norm::HalphaFull(alpha) => {
                let s = self.to_spectrum();
                let semi = s.halpha(alpha);
                Ok((semi * semi + s.mean() * s.mean()).sqrt())
            }
        }
    }

    pub fn inner(&self, other: &Field, kind: Inner) -> Result<f64, FieldError> {
        if !self.grid.compatible(&other.grid) {
            return Err(FieldError::GridMismatch);
        }
        match kind {
            Inner::L2 => {
                let s: f64 = self
                    .values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| a * b)
                    .sum();
                Ok(s / self.values.len() as f64)
            }
            Inner::Hminus1 => {
                for f in [self, other] {
                    let mean = f.mean();
                    if mean.abs() > DEFAULT_MEANZERO_TOL {
                        return Err(FieldError::NotMeanZero { mean, tol: DEFAULT_MEANZERO_TOL });
                    }
                }
                let a = self.to_spectrum();
                let b = other.to_spectrum();
                Ok(a
                    .coeffs
                    .iter()
                    .zip(&b.coeffs)
                    .zip(self.grid.eigenvalues())
                    .skip(1)
                    .map(|((x, y), l)| x * y / l)
                    .sum())
            }
        }
    }

    /// `self - other` measured in L².
    pub fn l2_distance(&self, other: &Field) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s / self.values.len() as f64).sqrt()
    }

    /// Flat binary snapshot, header `SCHF` (see README for the layout).
    pub fn write_schf(&self, eps: f64, path: &Path) -> Result<(), FieldError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"SCHF")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.points_per_axis() as u32).to_le_bytes())?;
        w.write_all(&eps.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a `SCHF` snapshot; returns the field together with the ε the
    /// snapshot was taken at. The grid is rebuilt with `variant`.
    pub fn read_schf(
        path: &Path,
        variant: crate::grid::EigenvalueVariant,
    ) -> Result<(Field, f64), FieldError> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SCHF" {
            return Err(FieldError::BadSnapshot("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != 1 {
            return Err(FieldError::BadSnapshot(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let eps = f64::from_le_bytes(b8);
        let grid = crate::grid::make_grid_with(d, n, variant)
            .map_err(|e| FieldError::BadSnapshot(e.to_string()))?;
        let mut values = vec![0.0; grid.len()];
        for v in values.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Ok((Field { grid, values }, eps))
    }

    /// CSV export: one row per node, `x0,x1[,x2],value`.
    pub fn write_csv(&self, path: &Path) -> Result<(), FieldError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.grid.dim();
        match d {
            2 => writeln!(w, "x0,x1,value")?,
            _ => writeln!(w, "x0,x1,x2,value")?,
        }
        for (idx, v) in self.values.iter().enumerate() {
            let c = self.grid.coords(idx);
            match d {
                2 => writeln!(w, "{},{},{}", c[0], c[1], v)?,
                _ => writeln!(w, "{},{},{},{}", c[0], c[1], c[2], v)?,
            }
        }
        Ok(())
    }
}

impl Spectrum {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let len = grid.len();
        Spectrum { grid, coeffs: vec![0.0; len] }
    }

    pub fn from_coeffs(grid: Arc<Grid>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), grid.len());
        Spectrum { grid, coeffs }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// The `k = 0` coefficient, which equals the field mean.
    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn to_field(&self) -> Field {
        let mut values = self.coeffs.clone();
        for (v, s) in values.iter_mut().zip(self.grid.inverse_scale()) {
            *v *= s;
        }
        transform::synthesize(self.grid.plans(), self.grid.dim(), &mut values);
        Field { grid: self.grid.clone(), values }
    }

    pub fn l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn h1_semi(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.grid.eigenvalues())
            .map(|(c, l)| l * c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn hminus1(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.grid.eigenvalues())
            .skip(1)
            .map(|(c, l)| c * c / l)
            .sum::<f64>()
            .sqrt()
    }

    pub fn halpha(&self, alpha: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.grid.eigenvalues())
            .skip(1)
            .map(|(c, l)| l.powf(alpha) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn add_scaled(&mut self, other: &Spectrum, a: f64) {
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Field(d={}, n={})", self.grid.dim(), self.grid.points_per_axis())
    }
}

impl std::fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Spectrum(d={}, n={})", self.grid.dim(), self.grid.points_per_axis())
    }
}

impl std::ops::Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl std::ops::Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl std::ops::Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.map(|v| v * rhs)
    }
}

impl std::ops::Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|v| -v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::rng::{stream_rng, StreamKey};
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_field(grid: &Arc<Grid>, seed: u64) -> Field {
        let mut rng = stream_rng(StreamKey { seed, path: 0, step: 0 });
        Field::from_values(
            grid.clone(),
            (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }

    fn mean_zero(f: &Field) -> Field {
        let m = f.mean();
        f.map(|v| v - m)
    }

    #[test]
    fn round_trip_and_mean_mode() {
        let grid = make_grid(2, 32).unwrap();
        let f = random_field(&grid, 7);
        let back = f.to_spectrum().to_field();
        let rel = f.l2_distance(&back) / f.norm(Norm::L2).unwrap();
        assert!(rel < 1e-12, "round trip rel error {rel}");
        // k = 0 coefficient is the mean
        assert!((f.to_spectrum().mean() - f.mean()).abs() < 1e-12);
    }

    #[test]
    fn parseval_random_fields() {
        let grid = make_grid(2, 16).unwrap();
        for seed in 0..100 {
            let f = random_field(&grid, seed);
            let l2 = f.norm(Norm::L2).unwrap();
            let spec = f.to_spectrum().l2();
            assert!((l2 - spec).abs() / l2 < 1e-12);
        }
    }

    #[test]
    fn laplacian_annihilates_constants() {
        let grid = make_grid(2, 64).unwrap();
        let f = Field::constant(grid, 3.25);
        let lap = f.laplacian();
        let linf = lap.norm(Norm::Linf).unwrap();
        assert!(linf < 1e-10, "laplacian of constant has Linf {linf}");
    }

    #[test]
    fn laplacian_cosine_eigenfunction() {
        let grid = make_grid(2, 64).unwrap();
        let f = Field::from_fn(grid, |x| (PI * x[0]).cos());
        let lap = f.laplacian();
        let expected = f.map(|v| -PI * PI * v);
        assert!(lap.l2_distance(&expected) < 1e-10);
    }

    #[test]
    fn laplacian_linearity() {
        let grid = make_grid(2, 16).unwrap();
        let u = random_field(&grid, 1);
        let v = random_field(&grid, 2);
        let (a, b) = (1.7, -0.3);
        let lhs = (&(&u * a) + &(&v * b)).laplacian();
        let mut rhs = u.laplacian();
        rhs.scale(a);
        rhs.add_scaled(&v.laplacian(), b);
        assert!(lhs.l2_distance(&rhs) < 1e-11);
    }

    #[test]
    fn inv_laplacian_cosine_and_round_trip() {
        let grid = make_grid(2, 64).unwrap();
        let f = Field::from_fn(grid.clone(), |x| (PI * x[0]).cos());
        let inv = f.inv_laplacian().unwrap();
        let expected = f.map(|v| v / (PI * PI));
        assert!(inv.l2_distance(&expected) < 1e-12);

        // constant nonzero field is rejected
        let c = Field::constant(grid.clone(), 1.0);
        assert!(matches!(c.inv_laplacian(), Err(FieldError::NotMeanZero { .. })));

        // inv_laplacian(-laplacian(v)) = v - mean(v)
        let v = random_field(&grid, 3);
        let back = (&v.laplacian() * -1.0).inv_laplacian().unwrap();
        let centered = mean_zero(&v);
        assert!(back.l2_distance(&centered) < 1e-10);
        // output is mean-zero
        assert!(back.mean().abs() < 1e-13);
    }

    #[test]
    fn frac_laplacian_properties() {
        let grid = make_grid(2, 16).unwrap();
        let v = mean_zero(&random_field(&grid, 4));
        // s = 1 reproduces -laplacian
        let a = v.frac_laplacian(1.0).unwrap();
        let b = &v.laplacian() * -1.0;
        assert!(a.l2_distance(&b) < 1e-10);
        // s = 0 is the identity on mean-zero fields
        let id = v.frac_laplacian(0.0).unwrap();
        assert!(id.l2_distance(&v) < 1e-12);
        // semigroup property
        let half_half = v.frac_laplacian(0.5).unwrap().frac_laplacian(0.5).unwrap();
        let one = v.frac_laplacian(1.0).unwrap();
        assert!(half_half.l2_distance(&one) < 1e-10);
        // s < 0 requires mean zero
        let c = Field::constant(grid, 0.5);
        assert!(c.frac_laplacian(-0.5).is_err());
        assert!(c.frac_laplacian(0.5).is_ok());
    }

    #[test]
    fn norms_of_cosine_mode() {
        let grid = make_grid(2, 64).unwrap();
        let f = Field::from_fn(grid.clone(), |x| (PI * x[0]).cos());
        let l2 = f.norm(Norm::L2).unwrap();
        assert!((l2 - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
        let hm1 = f.norm(Norm::Hminus1).unwrap();
        assert!((hm1 - 1.0 / (PI * 2.0f64.sqrt())).abs() < 1e-12);
        // zero field gives zero for every kind
        let z = Field::zeros(grid);
        for kind in [
            Norm::L2,
            Norm::L4,
            Norm::Lp(3.0),
            Norm::Linf,
            Norm::H1Semi,
            Norm::Hminus1,
            Norm::Halpha(0.7),
            Norm::HalphaFull(0.7),
        ] {
            assert_eq!(z.norm(kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn interpolation_inequality() {
        // ‖v‖² ≤ ‖v‖_{H⁻¹}·‖∇v‖ for mean-zero fields
        let grid = make_grid(2, 16).unwrap();
        for seed in 0..100 {
            let v = mean_zero(&random_field(&grid, 200 + seed));
            let l2 = v.norm(Norm::L2).unwrap();
            let hm1 = v.norm(Norm::Hminus1).unwrap();
            let h1 = v.norm(Norm::H1Semi).unwrap();
            assert!(l2 * l2 <= hm1 * h1 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn halpha_monotone_in_alpha() {
        let grid = make_grid(2, 16).unwrap();
        let v = mean_zero(&random_field(&grid, 11));
        let alphas = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
        let mut prev = 0.0;
        for (i, &a) in alphas.iter().enumerate() {
            let na = v.norm(Norm::Halpha(a)).unwrap();
            if i > 0 {
                assert!(na >= prev, "Halpha not monotone at α = {a}");
            }
            prev = na;
        }
    }

    #[test]
    fn inner_products() {
        let grid = make_grid(2, 32).unwrap();
        let v = random_field(&grid, 5);
        let l2 = v.norm(Norm::L2).unwrap();
        let ip = v.inner(&v, Inner::L2).unwrap();
        assert!((ip - l2 * l2).abs() < 1e-12);

        // cosine orthogonality
        let a = Field::from_fn(grid.clone(), |x| (PI * x[0]).cos());
        let b = Field::from_fn(grid.clone(), |x| (2.0 * PI * x[0]).cos());
        assert!(a.inner(&b, Inner::L2).unwrap().abs() < 1e-13);

        // H⁻¹ inner: symmetry and agreement with (u, (-Δ)^{-1} v)
        let u = mean_zero(&random_field(&grid, 6));
        let w = mean_zero(&random_field(&grid, 7));
        let uv = u.inner(&w, Inner::Hminus1).unwrap();
        let vu = w.inner(&u, Inner::Hminus1).unwrap();
        assert!((uv - vu).abs() < 1e-12);
        let via_inv = u.inner(&w.inv_laplacian().unwrap(), Inner::L2).unwrap();
        assert!((uv - via_inv).abs() < 1e-12);
    }

    #[test]
    fn schf_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = make_grid(2, 8).unwrap();
        let f = random_field(&grid, 9);
        let p = dir.path().join("snap.schf");
        f.write_schf(0.125, &p).unwrap();
        let (g, eps) = Field::read_schf(&p, crate::grid::EigenvalueVariant::ExactSpectral).unwrap();
        assert_eq!(eps, 0.125);
        assert_eq!(f.values(), g.values());
    }
}
