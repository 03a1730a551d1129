//! Solver configuration and the TOML run-configuration file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::EigenvalueVariant;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("epsilon must lie in (0,1), got {0}")]
    BadEpsilon(f64),
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("eta must be positive, got {0}")]
    BadEta(f64),
    #[error("tau = {tau:e} violates the solvability region tau <= eps^3/2 = {bound:e}; \
             set allow_nonconvex to override")]
    TauTooLarge { tau: f64, bound: f64 },
    #[error("tau must be positive, got {0}")]
    BadTau(f64),
    #[error("grid: {0}")]
    Grid(#[from] crate::grid::GridError),
    #[error("t_final must be nonnegative, got {0}")]
    BadTFinal(f64),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config file: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Knobs of the event-set diagnostics. The thresholds carry constants
/// that are not pinned by the analysis; each one is exposed here and
/// defaults to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EventKnobs {
    /// Exponent σ₀ of the stopping-index threshold `ε^{σ₀}`.
    pub sigma0: f64,
    /// Exponent κ₀ of the Ω₂ threshold `ε^{κ₀}`.
    pub kappa0: f64,
    /// Exponent θ of the energy event `E ≤ C·ε^{-θ}`.
    pub theta: f64,
    /// Constant C in the Ω₂ remainder assembly.
    pub c_omega2: f64,
    /// Constant C in the Ω_W̃ threshold `‖X̃‖_∞ ≤ C·ε^{γ-η-1}`.
    pub c_noise: f64,
    /// Constant C in the Ω_E threshold `E ≤ C·ε^{-θ}`.
    pub c_energy: f64,
}

impl Default for EventKnobs {
    fn default() -> Self {
        EventKnobs {
            sigma0: 1.0,
            kappa0: 1.0,
            theta: 1.0,
            c_omega2: 1.0,
            c_noise: 1.0,
            c_energy: 1.0,
        }
    }
}

/// All model and discretization parameters of one run.
///
/// `T = steps · tau` by construction, so the step count is always integral.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    pub dim: usize,
    pub n: usize,
    pub variant: EigenvalueVariant,
    /// Interfacial width ε.
    pub epsilon: f64,
    /// Noise scaling exponent γ (amplitude ε^γ).
    pub gamma: f64,
    /// Time step τ.
    pub tau: f64,
    /// Number of time steps J.
    pub steps: usize,
    /// Noise-mesh exponent η (h = ε^η).
    pub eta: f64,
    /// Newton convergence threshold on the H⁻¹ residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Relative residual of the inner Krylov solves.
    pub linear_tol: f64,
    pub energy_tol: f64,
    pub split_tol: f64,
    pub meanzero_tol: f64,
    /// Permit τ > ε³/2 (outside the proven solvability region).
    pub allow_nonconvex: bool,
    /// Newton initial guess: linear predictor (true) or previous step.
    pub warm_start: bool,
    /// Test hook: drop the nonlinearity (f ≡ 0).
    pub f_zero: bool,
    pub events: EventKnobs,
}

impl SolverConfig {
    /// Baseline configuration at the solvability edge `τ = ε³/2`.
    pub fn new(dim: usize, n: usize, epsilon: f64, gamma: f64) -> Self {
        SolverConfig {
            dim,
            n,
            variant: EigenvalueVariant::ExactSpectral,
            epsilon,
            gamma,
            tau: 0.5 * epsilon.powi(3),
            steps: 0,
            eta: 1.0,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            linear_tol: 1e-12,
            energy_tol: 1e-10,
            split_tol: 1e-8,
            meanzero_tol: 1e-10,
            allow_nonconvex: false,
            warm_start: true,
            f_zero: false,
            events: EventKnobs::default(),
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// Final time `T = J·τ`.
    pub fn t_final(&self) -> f64 {
        self.steps as f64 * self.tau
    }

    /// Target horizon `T`, realized as `J = ceil(T/τ)` steps of `τ = T/J`.
    /// Rounding up keeps `τ` at or below the requested value, so a valid
    /// request stays inside the solvability region.
    pub fn with_horizon(mut self, t_final: f64, tau_target: f64) -> Self {
        if t_final <= 0.0 {
            self.steps = 0;
            self.tau = tau_target;
            return self;
        }
        let steps = (t_final / tau_target - 1e-9).ceil().max(1.0) as usize;
        self.steps = steps;
        self.tau = t_final / steps as f64;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ConfigError::BadEpsilon(self.epsilon));
        }
        if !(self.gamma > 0.0) {
            return Err(ConfigError::BadGamma(self.gamma));
        }
        if !(self.eta > 0.0) {
            return Err(ConfigError::BadEta(self.eta));
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(crate::grid::GridError::InvalidDimension(self.dim).into());
        }
        if self.n < 4 {
            return Err(crate::grid::GridError::TooFewPoints(self.n).into());
        }
        if self.steps > 0 {
            if !(self.tau > 0.0) {
                return Err(ConfigError::BadTau(self.tau));
            }
            let bound = 0.5 * self.epsilon.powi(3);
            if self.tau > bound * (1.0 + 1e-12) && !self.allow_nonconvex {
                return Err(ConfigError::TauTooLarge { tau: self.tau, bound });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<std::sync::Arc<crate::grid::Grid>, ConfigError> {
        Ok(crate::grid::make_grid_with(self.dim, self.n, self.variant)?)
    }

    pub fn noise_mesh(&self) -> Result<std::sync::Arc<crate::noise::NoiseMesh>, ConfigError> {
        crate::noise::make_noise_mesh(self.dim, self.eta, self.epsilon)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Noise amplitude `ε^γ`.
    pub fn noise_amplitude(&self) -> f64 {
        self.epsilon.powf(self.gamma)
    }

    /// Canonical TOML echo used by the self-describing study outputs.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

// ---------------------------------------------------------------------------
// Run-configuration file
// ---------------------------------------------------------------------------

/// How τ is chosen when the file does not pin it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauRule {
    #[serde(rename = "half-eps-cubed")]
    HalfEpsCubed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub epsilon: f64,
    pub gamma: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    #[serde(default = "default_dim")]
    pub dimension: usize,
    pub n: usize,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub tau_rule: Option<TauRule>,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_dim() -> usize {
    2
}

fn default_eta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
}

fn default_paths() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub linear_tol: Option<f64>,
    pub energy_tol: Option<f64>,
    pub split_tol: Option<f64>,
    pub meanzero_tol: Option<f64>,
    pub allow_nonconvex: Option<bool>,
    pub warm_start: Option<bool>,
    pub eigenvalues: Option<EigenvalueVariant>,
}

/// Initial datum selector; mirrors [`crate::initial::InitialData`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum InitialSection {
    #[serde(rename = "constant")]
    Constant { value: f64 },
    #[serde(rename = "cosine")]
    Cosine { amplitude: f64, mode: Vec<usize> },
    #[serde(rename = "random")]
    Random { amplitude: f64 },
    #[serde(rename = "tanh-circle")]
    TanhCircle { center: Vec<f64>, radius: f64 },
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection::TanhCircle { center: vec![0.5, 0.5], radius: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum StudySection {
    #[serde(rename = "simulate")]
    Simulate {
        #[serde(default)]
        track_split: bool,
        #[serde(default)]
        track_twin: bool,
    },
    #[serde(rename = "ensemble")]
    Ensemble {
        #[serde(default)]
        track_split: bool,
        #[serde(default)]
        track_twin: bool,
    },
    #[serde(rename = "convergence")]
    Convergence { halvings: usize },
    #[serde(rename = "limit")]
    Limit {
        epsilons: Vec<f64>,
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        margin: f64,
    },
    #[serde(rename = "noise-stats")]
    NoiseStats {
        #[serde(default)]
        h_values: Vec<f64>,
        samples: usize,
    },
    #[serde(rename = "noise-regularity")]
    NoiseRegularity {
        h_values: Vec<f64>,
        alphas: Vec<f64>,
        #[serde(default)]
        epsilons: Vec<f64>,
        #[serde(default)]
        gammas: Vec<f64>,
        paths: usize,
    },
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection::Simulate { track_split: false, track_twin: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    pub snapshot_steps: Vec<usize>,
}

/// The parsed TOML run-configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: ModelSection,
    pub discretization: DiscretizationSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub events: EventKnobs,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfigFile {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let file: RunConfigFile = toml::from_str(text)?;
        Ok(file)
    }

    /// Resolve τ: an explicit value wins over the rule; the rule defaults
    /// to the solvability edge.
    fn tau_target(&self) -> Result<f64, ConfigError> {
        match (self.discretization.tau, self.discretization.tau_rule) {
            (Some(t), _) => Ok(t),
            (None, Some(TauRule::HalfEpsCubed)) | (None, None) => {
                Ok(0.5 * self.model.epsilon.powi(3))
            }
        }
    }

    /// Canonicalize into a validated [`SolverConfig`].
    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        let mut cfg = SolverConfig::new(
            self.discretization.dimension,
            self.discretization.n,
            self.model.epsilon,
            self.model.gamma,
        );
        cfg.eta = self.discretization.eta;
        let s = &self.solver;
        if let Some(v) = s.newton_tol {
            cfg.newton_tol = v;
        }
        if let Some(v) = s.newton_max_iter {
            cfg.newton_max_iter = v;
        }
        if let Some(v) = s.linear_tol {
            cfg.linear_tol = v;
        }
        if let Some(v) = s.energy_tol {
            cfg.energy_tol = v;
        }
        if let Some(v) = s.split_tol {
            cfg.split_tol = v;
        }
        if let Some(v) = s.meanzero_tol {
            cfg.meanzero_tol = v;
        }
        if let Some(v) = s.allow_nonconvex {
            cfg.allow_nonconvex = v;
        }
        if let Some(v) = s.warm_start {
            cfg.warm_start = v;
        }
        if let Some(v) = s.eigenvalues {
            cfg.variant = v;
        }
        cfg.events = self.events;
        if self.model.t_final < 0.0 {
            return Err(ConfigError::BadTFinal(self.model.t_final));
        }
        // An explicit tau must divide T exactly up to rounding; tau is
        // re-derived from the integral step count either way.
        let cfg = cfg.with_horizon(self.model.t_final, self.tau_target()?);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
epsilon = 0.1
gamma = 3.0
t_final = 0.01

[discretization]
n = 32

[noise]
seed = 7
"#;

    #[test]
    fn minimal_file_parses_with_defaults() {
        let file = RunConfigFile::from_str(MINIMAL).unwrap();
        let cfg = file.solver_config().unwrap();
        assert_eq!(cfg.dim, 2);
        assert_eq!(cfg.n, 32);
        // tau rule defaults to the solvability edge
        assert!(cfg.tau <= 0.5 * 0.1f64.powi(3) + 1e-15);
        assert_eq!(cfg.steps, 20);
        assert!((cfg.t_final() - 0.01).abs() < 1e-15);
        assert_eq!(cfg.events.sigma0, 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.to_string() + "\n[model2]\nx = 1\n";
        assert!(RunConfigFile::from_str(&bad).is_err());
        let bad2 = MINIMAL.replace("seed = 7", "seed = 7\nbogus = 1");
        assert!(RunConfigFile::from_str(&bad2).is_err());
    }

    #[test]
    fn tau_outside_solvability_region_rejected() {
        let text = MINIMAL.replace("n = 32", "n = 32\ntau = 1e-3"); // eps³ = 1e-3 > eps³/2
        let file = RunConfigFile::from_str(&text).unwrap();
        let err = file.solver_config().unwrap_err();
        assert!(err.to_string().contains("eps^3/2"), "{err}");
        let text2 = text + "\n[solver]\nallow_nonconvex = true\n";
        let file2 = RunConfigFile::from_str(&text2).unwrap();
        assert!(file2.solver_config().is_ok());
    }

    #[test]
    fn zero_horizon_is_valid() {
        let text = MINIMAL.replace("t_final = 0.01", "t_final = 0.0");
        let cfg = RunConfigFile::from_str(&text).unwrap().solver_config().unwrap();
        assert_eq!(cfg.steps, 0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn canonical_echo_round_trips() {
        let file = RunConfigFile::from_str(MINIMAL).unwrap();
        let cfg = file.solver_config().unwrap();
        let echo = cfg.to_canonical_toml();
        let back: SolverConfig = toml::from_str(&echo).unwrap();
        assert_eq!(back, cfg);
    }
}
