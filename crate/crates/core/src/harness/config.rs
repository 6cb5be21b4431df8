use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boxqp::SolverConfig;
use crate::condensed::{certificate, Certificate, CertificateDims, InputScaling, MpcWeights};
use crate::error::{Error, Result};
use crate::kdv::KdvConfig;
use crate::koopman::{ObservableMap, OutputMode};

/// Schema version accepted by [`ExperimentConfig::from_toml`].
pub const CONFIG_VERSION: u32 = 1;

/// Complete experiment description, stored as TOML.
///
/// ```toml
/// version = 1
///
/// [plant]
/// nodes = 128
/// dt = 0.01
///
/// [data]
/// n_trajectories = 50
/// seed = 7
///
/// [mpc]
/// horizon = 10
/// input_weight = 0.01
///
/// [reference]
/// values = [0.5, 0.25, 0.0, 0.75]
/// duration = 50.0
/// ```
///
/// Every section and key is optional except `version`; missing keys take the
/// case-study defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub plant: KdvConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_trajectories: usize,
    /// Transition pairs recorded per trajectory.
    pub samples_per_trajectory: usize,
    pub seed: u64,
    /// Attempts per trajectory before a plant blow-up aborts generation.
    pub max_attempts: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n_trajectories: 1000, samples_per_trajectory: 200, seed: 0x5eed, max_attempts: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    /// `W_x = state_weight * I`.
    pub state_weight: f64,
    /// `W_N = terminal_weight * I`.
    pub terminal_weight: f64,
    /// `W_u = input_weight * I`.
    pub input_weight: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub epsilon: f64,
    pub dictionary: String,
    pub output: String,
    pub check_invariants: bool,
    /// Operations per second for the certificate's time estimate.
    pub flop_rate: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            state_weight: 1.0,
            terminal_weight: 1.0,
            input_weight: 0.01,
            u_min: vec![-1.0; 4],
            u_max: vec![1.0; 4],
            epsilon: 1e-6,
            dictionary: "shifted-quadratic".into(),
            output: "identity".into(),
            check_invariants: false,
            flop_rate: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Piecewise-constant targets for the spatial profile, equal-length segments.
    pub values: Vec<f64>,
    /// Simulated time in seconds.
    pub duration: f64,
    /// Coefficients of the four basis profiles for the closed-loop start state.
    pub initial_coeffs: Vec<f64>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { values: vec![0.5, 0.25, 0.0, 0.75], duration: 50.0, initial_coeffs: vec![0.0; 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            plant: KdvConfig::default(),
            data: DataConfig::default(),
            mpc: MpcConfig::default(),
            reference: ReferenceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.plant.validate()?;
        let d = &self.data;
        if d.n_trajectories == 0 || d.samples_per_trajectory == 0 || d.max_attempts == 0 {
            return Err(Error::Config("data counts must be positive".into()));
        }
        let m = &self.mpc;
        if m.horizon == 0 {
            return Err(Error::Config("mpc.horizon must be >= 1".into()));
        }
        if m.u_min.len() != self.plant.input_dim() || m.u_max.len() != self.plant.input_dim() {
            return Err(Error::Config(format!(
                "mpc.u_min and mpc.u_max need one entry per actuator ({})",
                self.plant.input_dim()
            )));
        }
        if !(m.state_weight >= 0.0) || !(m.terminal_weight >= 0.0) || !(m.input_weight > 0.0) {
            return Err(Error::Config("state weights must be >= 0 and the input weight > 0".into()));
        }
        if !(m.flop_rate > 0.0) {
            return Err(Error::Config("mpc.flop_rate must be positive".into()));
        }
        self.solver()?.validate()?;
        self.output_mode()?;
        self.scaling()?;
        self.certificate()?;
        let r = &self.reference;
        if r.values.is_empty() || r.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("reference.values must be nonempty and finite".into()));
        }
        if self.closed_loop_steps() < r.values.len() {
            return Err(Error::Config("reference.duration is too short for the schedule".into()));
        }
        if r.initial_coeffs.len() != 4 {
            return Err(Error::Config("reference.initial_coeffs needs 4 entries".into()));
        }
        Ok(())
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        Ok(SolverConfig {
            epsilon: self.mpc.epsilon,
            check_invariants: self.mpc.check_invariants,
            ..SolverConfig::default()
        })
    }

    pub fn observable(&self) -> Result<ObservableMap> {
        ObservableMap::from_name(&self.mpc.dictionary, self.plant.nodes)
    }

    pub fn output_mode(&self) -> Result<OutputMode> {
        self.mpc.output.parse()
    }

    pub fn weights(&self) -> MpcWeights {
        MpcWeights::scaled_identity(
            self.mpc.horizon,
            self.plant.nodes,
            self.plant.input_dim(),
            self.mpc.state_weight,
            self.mpc.terminal_weight,
            self.mpc.input_weight,
        )
    }

    pub fn scaling(&self) -> Result<InputScaling> {
        InputScaling::from_bounds(&self.mpc.u_min, &self.mpc.u_max)
    }

    pub fn closed_loop_steps(&self) -> usize {
        (self.reference.duration / self.plant.dt).round() as usize
    }

    /// Reference value in force at closed-loop step `k`.
    pub fn reference_at(&self, k: usize) -> f64 {
        let v = &self.reference.values;
        let steps = self.closed_loop_steps().max(1);
        v[(k * v.len() / steps).min(v.len() - 1)]
    }

    pub fn certificate(&self) -> Result<Certificate> {
        let obs = self.observable()?;
        let dims = CertificateDims {
            n_u: self.plant.input_dim(),
            n_x: self.plant.nodes,
            n_psi: obs.lifted_dim(),
            horizon: self.mpc.horizon,
            m_lifting: obs.lift_flops(),
        };
        certificate(dims, self.mpc.epsilon, self.mpc.flop_rate)
    }
}
