//! Scalar diagnostics: the Ginzburg-Landau energy, the error series of the
//! deterministic-twin comparison, the discrete stopping index, and the
//! event-set indicators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EventKnobs;
use crate::double_well;
use crate::field::{Field, Inner, Norm};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("event flags need {0}; run with the corresponding tracking enabled")]
    MissingSeries(&'static str),
}

/// Energy decomposition at one step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyReport {
    pub step: usize,
    /// `E(X) = (ε/2)‖∇X‖² + (1/ε)‖F(X)‖_{L¹}`.
    pub energy: f64,
    pub gradient_part: f64,
    pub potential_part: f64,
    /// Mass `m(X)`.
    pub mass: f64,
    /// `‖𝔣(X)‖²` with `𝔣(u) = u² − 1`; equals `4‖F(X)‖_{L¹}`.
    pub frak_sq: f64,
}

pub fn energy(x: &Field, epsilon: f64) -> EnergyReport {
    let grad = x.norm(Norm::H1Semi).unwrap();
    let gradient_part = 0.5 * epsilon * grad * grad;
    let pot_mean = double_well::potential_field(x).mean();
    let potential_part = pot_mean / epsilon;
    let frak = x.map(double_well::frak).norm(Norm::L2).unwrap();
    EnergyReport {
        step: 0,
        energy: gradient_part + potential_part,
        gradient_part,
        potential_part,
        mass: x.mean(),
        frak_sq: frak * frak,
    }
}

/// Per-step norms and running accumulators of an error field
/// `Z^j = X^j − X^j_CH` (or of the translated difference `Ẑ^j`).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub tau: f64,
    pub epsilon: f64,
    pub hminus1: Vec<f64>,
    pub l4: Vec<f64>,
    pub l3: Vec<f64>,
    pub linf: Vec<f64>,
    pub grad: Vec<f64>,
    /// `(τ/ε) Σ_{i≤j} ‖Z^i‖³_{L³}` — the stopping-index accumulator.
    pub accum_cubic: Vec<f64>,
    /// `(τ/ε) Σ_{i≤j} ‖Z^i‖⁴_{L⁴}`.
    pub accum_quartic: Vec<f64>,
    /// `ε⁴τ Σ_{i≤j} ‖∇Z^i‖²`.
    pub accum_grad: Vec<f64>,
    /// `Σ_{i≤j} ((−Δ)^{-1} Z^{i-1}, Δ_iW̄)` — the martingale partial sums.
    pub martingale: Vec<f64>,
    /// `Σ_{i≤j} ‖Δ_iW̄‖²`.
    pub noise_sq: Vec<f64>,
    #[serde(skip)]
    prev_z: Option<Field>,
}

impl ErrorSeries {
    /// Restore the previous error field after deserializing a checkpoint;
    /// needed so the martingale accumulator continues exactly.
    pub fn set_prev(&mut self, z: Field) {
        self.prev_z = Some(z);
    }
}

impl ErrorSeries {
    pub fn new(tau: f64, epsilon: f64) -> Self {
        ErrorSeries { tau, epsilon, ..Default::default() }
    }

    pub fn steps(&self) -> usize {
        self.hminus1.len()
    }

    /// Record step `j = steps() + 1`: the error field `Z^j` and the
    /// mean-corrected increment `Δ_jW̄` consumed by that step.
    pub fn record(&mut self, z: &Field, noise_corrected: &Field) {
        let te = self.tau / self.epsilon;
        let zm = z.mean();
        let z0 = z.map(|v| v - zm);
        let hm1 = z0.norm(Norm::Hminus1).unwrap();
        let l4 = z.norm(Norm::L4).unwrap();
        let l3 = z.norm(Norm::Lp(3.0)).unwrap();
        let linf = z.norm(Norm::Linf).unwrap();
        let grad = z.norm(Norm::H1Semi).unwrap();
        self.hminus1.push(hm1);
        self.l4.push(l4);
        self.l3.push(l3);
        self.linf.push(linf);
        self.grad.push(grad);
        let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
        self.accum_cubic.push(last(&self.accum_cubic) + te * l3.powi(3));
        self.accum_quartic.push(last(&self.accum_quartic) + te * l4.powi(4));
        self.accum_grad
            .push(last(&self.accum_grad) + self.epsilon.powi(4) * self.tau * grad * grad);
        let mart_inc = match &self.prev_z {
            None => 0.0,
            Some(prev) => {
                let pm = prev.mean();
                let p0 = prev.map(|v| v - pm);
                p0.inv_laplacian()
                    .unwrap()
                    .inner(noise_corrected, Inner::L2)
                    .unwrap()
            }
        };
        self.martingale.push(last(&self.martingale) + mart_inc);
        let n2 = noise_corrected.norm(Norm::L2).unwrap();
        self.noise_sq.push(last(&self.noise_sq) + n2 * n2);
        self.prev_z = Some(z.clone());
    }

    /// Post-hoc reconstruction from stored fields; `zs[i]` is `Z^{i+1}` and
    /// `noises[i]` the increment of the same step.
    pub fn from_fields(zs: &[Field], noises: &[&Field], tau: f64, epsilon: f64) -> Self {
        assert_eq!(zs.len(), noises.len());
        let mut s = ErrorSeries::new(tau, epsilon);
        for (z, noise) in zs.iter().zip(noises) {
            s.record(z, noise);
        }
        s
    }
}

/// Discrete stopping index
/// `J_ε = inf{1 ≤ j ≤ J : (τ/ε) Σ_{i≤j} ‖Z^i‖³_{L³} > ε^{σ₀}}`, with
/// `J_ε = J` when the threshold is never exceeded.
pub fn stopping_index(series: &ErrorSeries, epsilon: f64, sigma0: f64) -> usize {
    let threshold = epsilon.powf(sigma0);
    for (i, acc) in series.accum_cubic.iter().enumerate() {
        if *acc > threshold {
            return i + 1;
        }
    }
    series.steps()
}

/// The remainder `ℛ̃_{J_ε}` of the stopped error estimate:
/// `(τ/ε)‖Z^{J_ε}‖³_{L³} + ε^γ max_{j≤J_ε} |Σ_{i≤j}((−Δ)^{-1}Z^{i-1}, Δ_iW̄)|
///  + C ε^{2γ} Σ_{j≤J_ε} ‖Δ_jW̄‖²`.
pub fn rtilde(series: &ErrorSeries, j_eps: usize, epsilon: f64, gamma: f64, c: f64) -> f64 {
    if j_eps == 0 || series.steps() == 0 {
        return 0.0;
    }
    let j = j_eps.min(series.steps());
    let te = series.tau / series.epsilon;
    let cubic = te * series.l3[j - 1].powi(3);
    let mart = series.martingale[..j]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    cubic + epsilon.powf(gamma) * mart + c * epsilon.powf(2.0 * gamma) * series.noise_sq[j - 1]
}

/// Boolean event-set indicators of one trajectory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EventFlags {
    /// `ω ∈ Ω₂`: `ℛ̃_{J_ε} ≤ ε^{κ₀}`.
    pub omega2: bool,
    /// `ω ∈ Ω_W̃`: `max_j ‖X̃^j‖_∞ ≤ C ε^{γ-η-1}`.
    pub omega_noise: bool,
    /// `ω ∈ Ω_E`: `max_j E(X^j) ≤ C ε^{-θ}`.
    pub omega_energy: bool,
    /// `ω ∈ Ω_∞`: the Ω_E-restricted running max of `‖X^j‖_∞` stays below
    /// `ε^{-θ-4}` (trivially true off Ω_E, where the indicator vanishes).
    pub omega_linf: bool,
    /// `Ω_{κ,J} = Ω_∞ ∩ Ω_E`.
    pub omega_kappa: bool,
    pub stopping_index: usize,
    pub rtilde: f64,
}

/// Trajectory quantities the event flags are computed from.
pub struct EventInputs<'a> {
    pub series: Option<&'a ErrorSeries>,
    pub max_xtilde_linf: Option<f64>,
    pub max_energy: f64,
    pub max_x_linf: f64,
}

pub fn event_flags(
    inputs: &EventInputs,
    epsilon: f64,
    gamma: f64,
    eta: f64,
    knobs: &EventKnobs,
) -> Result<EventFlags, DiagnosticsError> {
    let series = inputs
        .series
        .ok_or(DiagnosticsError::MissingSeries("the deterministic-twin error series"))?;
    let max_xtilde = inputs
        .max_xtilde_linf
        .ok_or(DiagnosticsError::MissingSeries("the linear-scheme maxima (split tracking)"))?;
    let j_eps = stopping_index(series, epsilon, knobs.sigma0);
    let rt = rtilde(series, j_eps, epsilon, gamma, knobs.c_omega2);
    let omega2 = rt <= epsilon.powf(knobs.kappa0);
    let omega_noise = max_xtilde <= knobs.c_noise * epsilon.powf(gamma - eta - 1.0);
    let omega_energy = inputs.max_energy <= knobs.c_energy * epsilon.powf(-knobs.theta);
    let omega_linf = if omega_energy {
        inputs.max_x_linf <= epsilon.powf(-knobs.theta - 4.0)
    } else {
        true
    };
    Ok(EventFlags {
        omega2,
        omega_noise,
        omega_energy,
        omega_linf,
        omega_kappa: omega_linf && omega_energy,
        stopping_index: j_eps,
        rtilde: rt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::initial::random_mean_zero;
    use std::f64::consts::PI;

    #[test]
    fn energy_equilibria() {
        let grid = make_grid(2, 32).unwrap();
        let e = energy(&Field::constant(grid.clone(), 1.0), 0.5);
        assert_eq!(e.energy, 0.0);
        // F(0) = 1/4, |D| = 1
        let e0 = energy(&Field::constant(grid, 0.0), 0.5);
        assert!((e0.energy - 0.5).abs() < 1e-14);
        assert_eq!(e0.gradient_part, 0.0);
    }

    #[test]
    fn energy_identities() {
        let grid = make_grid(2, 32).unwrap();
        let x = random_mean_zero(&grid, 1.3, 21, 0);
        let e = energy(&x, 0.1);
        assert!((e.energy - e.gradient_part - e.potential_part).abs() <= 1e-12 * e.energy.abs());
        // ‖F‖_{L¹} = ¼‖𝔣‖²
        let l1 = e.potential_part * 0.1;
        assert!((l1 - 0.25 * e.frak_sq).abs() <= 1e-12 * l1.max(1.0));
    }

    #[test]
    fn energy_matches_refined_quadrature() {
        let grid = make_grid(2, 64).unwrap();
        let eps = 0.1;
        let x = Field::from_fn(grid, |p| (PI * p[0]).cos());
        let e = energy(&x, eps);
        // 10x-refined quadrature of the analytic integrand
        let fine = 640;
        let mut pot = 0.0;
        for i in 0..fine {
            let xi = (i as f64 + 0.5) / fine as f64;
            pot += crate::double_well::potential((PI * xi).cos());
        }
        let pot = pot / fine as f64 / eps;
        let grad = 0.5 * eps * (PI * PI / 2.0);
        let oracle = pot + grad;
        assert!((e.energy - oracle).abs() / oracle < 1e-6, "{} vs {oracle}", e.energy);
    }

    fn series_from_scaled_fields(scale: f64) -> ErrorSeries {
        let grid = make_grid(2, 8).unwrap();
        let mut s = ErrorSeries::new(0.05, 0.3);
        for j in 0..6 {
            let z = &random_mean_zero(&grid, 0.4, 50 + j, 0) * scale;
            let w = random_mean_zero(&grid, 0.1, 90 + j, 0);
            s.record(&z, &w);
        }
        s
    }

    #[test]
    fn stopping_index_examples() {
        // all-zero series never triggers
        let grid = make_grid(2, 8).unwrap();
        let mut zero = ErrorSeries::new(0.05, 0.3);
        for _ in 0..5 {
            zero.record(&Field::zeros(grid.clone()), &Field::zeros(grid.clone()));
        }
        assert_eq!(stopping_index(&zero, 0.3, 1.0), 5);
        // a huge first error triggers immediately
        let mut big = ErrorSeries::new(0.05, 0.3);
        big.record(&Field::constant(grid.clone(), 50.0), &Field::zeros(grid.clone()));
        for _ in 0..4 {
            big.record(&Field::zeros(grid.clone()), &Field::zeros(grid.clone()));
        }
        assert_eq!(stopping_index(&big, 0.3, 1.0), 1);
        // brute-force scan agreement on a generic series
        let s = series_from_scaled_fields(1.0);
        let sigma0 = 3.0;
        let threshold = 0.3f64.powf(sigma0);
        let brute = (0..s.steps())
            .find(|&i| s.accum_cubic[i] > threshold)
            .map(|i| i + 1)
            .unwrap_or(s.steps());
        assert_eq!(stopping_index(&s, 0.3, sigma0), brute);
    }

    #[test]
    fn stopping_index_monotone_under_larger_series() {
        let small = series_from_scaled_fields(1.0);
        let large = series_from_scaled_fields(2.0);
        for sigma0 in [0.5, 1.0, 2.0, 4.0] {
            assert!(stopping_index(&large, 0.3, sigma0) <= stopping_index(&small, 0.3, sigma0));
        }
    }

    #[test]
    fn rtilde_streamed_equals_posthoc() {
        let grid = make_grid(2, 8).unwrap();
        let mut streamed = ErrorSeries::new(0.05, 0.3);
        let mut zs = Vec::new();
        let mut noises = Vec::new();
        for j in 0..6 {
            let z = random_mean_zero(&grid, 0.4, 70 + j, 0);
            let w = random_mean_zero(&grid, 0.1, 170 + j, 0);
            streamed.record(&z, &w);
            zs.push(z);
            noises.push(w);
        }
        let refs: Vec<&Field> = noises.iter().collect();
        let posthoc = ErrorSeries::from_fields(&zs, &refs, 0.05, 0.3);
        for j in 1..=6 {
            let a = rtilde(&streamed, j, 0.3, 3.0, 1.0);
            let b = rtilde(&posthoc, j, 0.3, 3.0, 1.0);
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn event_flags_zero_noise_trajectory() {
        // zero error series and bounded state: every flag holds
        let grid = make_grid(2, 8).unwrap();
        let mut series = ErrorSeries::new(0.05, 0.1);
        for _ in 0..5 {
            series.record(&Field::zeros(grid.clone()), &Field::zeros(grid.clone()));
        }
        let knobs = EventKnobs::default();
        let flags = event_flags(
            &EventInputs {
                series: Some(&series),
                max_xtilde_linf: Some(0.0),
                max_energy: 1.5,
                max_x_linf: 1.0,
            },
            0.1,
            3.0,
            1.0,
            &knobs,
        )
        .unwrap();
        assert!(flags.omega2 && flags.omega_noise && flags.omega_energy && flags.omega_linf);
        assert!(flags.omega_kappa);
        // degenerate knob: C = 0 makes Ω₂ fail for any nonzero remainder
        let mut series2 = ErrorSeries::new(0.05, 0.1);
        for j in 0..3 {
            series2.record(
                &random_mean_zero(&grid, 0.5, 300 + j, 0),
                &random_mean_zero(&grid, 0.5, 400 + j, 0),
            );
        }
        let knobs0 = EventKnobs { kappa0: 40.0, ..knobs };
        let f2 = event_flags(
            &EventInputs {
                series: Some(&series2),
                max_xtilde_linf: Some(0.0),
                max_energy: 1.0,
                max_x_linf: 1.0,
            },
            0.1,
            3.0,
            1.0,
            &knobs0,
        )
        .unwrap();
        assert!(!f2.omega2);
        // missing series is an error
        assert!(event_flags(
            &EventInputs { series: None, max_xtilde_linf: Some(0.0), max_energy: 1.0, max_x_linf: 1.0 },
            0.1,
            3.0,
            1.0,
            &knobs,
        )
        .is_err());
    }
}
