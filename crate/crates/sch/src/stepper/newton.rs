//! Damped Newton iteration for the implicit steps, with preconditioned
//! conjugate-gradient inner solves.
//!
//! Both implicit schemes solve the strong form
//!
//! ```text
//! R(v) = v − prev + ετΔ²v − (τ/ε)Δ f(v + shift) − forcing = 0
//! ```
//!
//! (`shift = 0`, `forcing = ε^γ Δ_jW̄` for the full scheme; `shift = X̃^j`,
//! `forcing = 0` for the random-PDE scheme). The Jacobian is
//! `J(v) = I + ετΔ² − (τ/ε) Δ ∘ f'(v + shift)·`. On the mean-zero subspace
//! the substitution `δ = (-Δ)^{1/2} z` turns `J δ = -R` into the symmetric
//! system
//!
//! ```text
//! A z = (I + ετΔ²) z + (τ/ε) S f'(·) S z = -(-Δ)^{-1/2} R,   S = (-Δ)^{1/2},
//! ```
//!
//! which is positive definite exactly on the convexity region `τ ≤ ε³/2`
//! (the symbol of `I + ετΔ² − (τ/ε)(-Δ)` is bounded below by
//! `1 − τ/(4ε³)`). CG runs on `A` with the exact spectral inverse of
//! `I + ετΔ²` as preconditioner; the mean mode decouples and is updated
//! directly since `J` acts as the identity on constants.

use crate::config::SolverConfig;
use crate::double_well;
use crate::field::{Field, Spectrum};
use crate::grid::Grid;
use std::sync::Arc;

use super::{SolverError, StepStats};

/// One implicit step, fully specified.
pub(crate) struct ImplicitSystem<'a> {
    pub grid: &'a Arc<Grid>,
    pub cfg: &'a SolverConfig,
    /// `prev + forcing` in spectral form; constant through the solve.
    pub rhs: Spectrum,
    /// Additive shift inside the nonlinearity (the linear part `X̃^j`).
    pub shift: Option<&'a Field>,
}

impl<'a> ImplicitSystem<'a> {
    fn shifted(&self, v_phys: &Field) -> Field {
        match self.shift {
            Some(s) => v_phys + s,
            None => v_phys.clone(),
        }
    }

    /// `R̂(v)` from the spectral view `v` and its physical values.
    fn residual(&self, v: &Spectrum, v_phys: &Field) -> Spectrum {
        let cfg = self.cfg;
        let et = cfg.epsilon * cfg.tau;
        let te = cfg.tau / cfg.epsilon;
        let mut r = Spectrum::zeros(self.grid.clone());
        if cfg.f_zero {
            for (((rc, vc), l), rhs) in r
                .coeffs_mut()
                .iter_mut()
                .zip(v.coeffs())
                .zip(self.grid.eigenvalues())
                .zip(self.rhs.coeffs())
            {
                *rc = (1.0 + et * l * l) * vc - rhs;
            }
        } else {
            let f = double_well::f_field(&self.shifted(v_phys)).to_spectrum();
            for ((((rc, vc), fc), l), rhs) in r
                .coeffs_mut()
                .iter_mut()
                .zip(v.coeffs())
                .zip(f.coeffs())
                .zip(self.grid.eigenvalues())
                .zip(self.rhs.coeffs())
            {
                *rc = (1.0 + et * l * l) * vc + te * l * fc - rhs;
            }
        }
        r
    }

    /// Convergence norm: H⁻¹ norm of the mean-zero residual plus the
    /// absolute mean-mode residual.
    fn residual_norm(&self, r: &Spectrum) -> f64 {
        r.hminus1() + r.mean().abs()
    }
}

enum PcgFailure {
    Indefinite { curvature: f64 },
    Stalled { iterations: usize, relative_residual: f64 },
}

/// Preconditioned CG for `A z = b` on the mean-zero subspace;
/// `fp` holds `f'(v + shift)` at the collocation nodes.
fn pcg(
    grid: &Arc<Grid>,
    cfg: &SolverConfig,
    fp: Option<&[f64]>,
    b: &Spectrum,
) -> Result<(Spectrum, usize), PcgFailure> {
    let et = cfg.epsilon * cfg.tau;
    let te = cfg.tau / cfg.epsilon;
    let lam = grid.eigenvalues();
    let sym: Vec<f64> = lam.iter().map(|l| 1.0 + et * l * l).collect();

    let apply_a = |z: &Spectrum| -> Spectrum {
        let mut out = Spectrum::zeros(grid.clone());
        if let Some(fp) = fp {
            // (τ/ε) S M S z with S = diag(√λ)
            let mut sz = z.clone();
            for (c, l) in sz.coeffs_mut().iter_mut().zip(lam) {
                *c *= l.sqrt();
            }
            let mut mid = sz.to_field();
            for (v, m) in mid.values_mut().iter_mut().zip(fp) {
                *v *= m;
            }
            let mut back = mid.to_spectrum();
            for (c, l) in back.coeffs_mut().iter_mut().zip(lam) {
                *c *= l.sqrt();
            }
            for (((o, zc), s), bc) in out
                .coeffs_mut()
                .iter_mut()
                .zip(z.coeffs())
                .zip(&sym)
                .zip(back.coeffs())
            {
                *o = s * zc + te * bc;
            }
        } else {
            for ((o, zc), s) in out.coeffs_mut().iter_mut().zip(z.coeffs()).zip(&sym) {
                *o = s * zc;
            }
        }
        out
    };

    let dot = |a: &Spectrum, b: &Spectrum| -> f64 {
        a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x * y).sum()
    };

    let bnorm = b.l2();
    let mut z = Spectrum::zeros(grid.clone());
    if bnorm == 0.0 {
        return Ok((z, 0));
    }
    let mut r = b.clone();
    let mut s = r.clone();
    for (c, sy) in s.coeffs_mut().iter_mut().zip(&sym) {
        *c /= sy;
    }
    let mut d = s.clone();
    let mut rho = dot(&r, &s);
    let max_iters = 4 * grid.len();
    for it in 1..=max_iters {
        let q = apply_a(&d);
        let dq = dot(&d, &q);
        if dq <= 0.0 {
            return Err(PcgFailure::Indefinite { curvature: dq });
        }
        let alpha = rho / dq;
        z.add_scaled(&d, alpha);
        r.add_scaled(&q, -alpha);
        let rel = r.l2() / bnorm;
        if rel <= cfg.linear_tol {
            return Ok((z, it));
        }
        s = r.clone();
        for (c, sy) in s.coeffs_mut().iter_mut().zip(&sym) {
            *c /= sy;
        }
        let rho_new = dot(&r, &s);
        let beta = rho_new / rho;
        rho = rho_new;
        let mut dn = s.clone();
        dn.add_scaled(&d, beta);
        d = dn;
    }
    Err(PcgFailure::Stalled { iterations: max_iters, relative_residual: r.l2() / bnorm })
}

/// Damped Newton iteration; returns the converged spectral solution and
/// iteration statistics.
pub(crate) fn solve_implicit(
    system: &ImplicitSystem,
    guess: Spectrum,
) -> Result<(Spectrum, StepStats), SolverError> {
    let cfg = system.cfg;
    let grid = system.grid;
    let lam = grid.eigenvalues();

    let mut v = guess;
    let mut v_phys = v.to_field();
    let mut r = system.residual(&v, &v_phys);
    let mut rn = system.residual_norm(&r);
    let mut trace = vec![rn];
    let mut cg_total = 0usize;

    for iter in 0..cfg.newton_max_iter {
        if rn <= cfg.newton_tol {
            return Ok((
                v,
                StepStats {
                    newton_iters: iter,
                    cg_iters: cg_total,
                    final_residual: rn,
                    residual_trace: trace,
                },
            ));
        }

        // right-hand side b = -S^{-1} R on mean-zero modes
        let mut b = Spectrum::zeros(grid.clone());
        for ((bc, rc), l) in b.coeffs_mut().iter_mut().zip(r.coeffs()).zip(lam).skip(1) {
            *bc = -rc / l.sqrt();
        }
        let fp_values: Option<Vec<f64>> = if cfg.f_zero {
            None
        } else {
            Some(
                system
                    .shifted(&v_phys)
                    .values()
                    .iter()
                    .map(|&u| double_well::f_prime(u))
                    .collect(),
            )
        };
        let (z, cg_iters) = pcg(grid, cfg, fp_values.as_deref(), &b).map_err(|f| match f {
            PcgFailure::Indefinite { curvature } => SolverError::ConvexityViolated { curvature },
            PcgFailure::Stalled { iterations, relative_residual } => SolverError::NewtonDiverged {
                iterations,
                last_residual: relative_residual,
                trace: trace.clone(),
            },
        })?;
        cg_total += cg_iters;

        // δ = S z on mean-zero modes, identity block on the mean
        let mut delta = Spectrum::zeros(grid.clone());
        for ((dc, zc), l) in delta.coeffs_mut().iter_mut().zip(z.coeffs()).zip(lam).skip(1) {
            *dc = zc * l.sqrt();
        }
        delta.coeffs_mut()[0] = -r.mean();

        // backtracking on the residual norm
        let mut alpha = 1.0;
        loop {
            let mut v_try = v.clone();
            v_try.add_scaled(&delta, alpha);
            let v_try_phys = v_try.to_field();
            let r_try = system.residual(&v_try, &v_try_phys);
            let rn_try = system.residual_norm(&r_try);
            if rn_try < rn || rn_try <= cfg.newton_tol {
                v = v_try;
                v_phys = v_try_phys;
                r = r_try;
                rn = rn_try;
                break;
            }
            alpha *= 0.5;
            if alpha < 1.0 / 4096.0 {
                return Err(SolverError::NewtonDiverged {
                    iterations: iter + 1,
                    last_residual: rn,
                    trace,
                });
            }
        }
        trace.push(rn);
    }

    if rn <= cfg.newton_tol {
        return Ok((
            v,
            StepStats {
                newton_iters: cfg.newton_max_iter,
                cg_iters: cg_total,
                final_residual: rn,
                residual_trace: trace,
            },
        ));
    }
    Err(SolverError::NewtonDiverged {
        iterations: cfg.newton_max_iter,
        last_residual: rn,
        trace,
    })
}

/// The exact spectral inverse of the linear part `I + ετΔ²`.
pub fn linear_resolvent(s: &Spectrum, epsilon: f64, tau: f64) -> Spectrum {
    let mut out = s.clone();
    let et = epsilon * tau;
    for (c, l) in out.coeffs_mut().iter_mut().zip(s.grid().eigenvalues()) {
        *c /= 1.0 + et * l * l;
    }
    out
}
