//! Periodic Korteweg-de Vries plant `y_t + y y_x + y_xxx = u(t, x)` with
//! Gaussian actuators, integrated by a Fourier split-step method.
//!
//! Each substep of length `delta` is Strang split: half a step of the affine
//! linear part `y_t = -y_xxx + u` solved exactly per Fourier mode, a classical
//! RK4 step of `-(y^2)_x / 2` evaluated pseudospectrally with 2/3-rule
//! dealiasing, and another exact half step. The input is held constant over
//! the sampling period. The whole substep runs on Fourier coefficients, so a sampling
//! step costs one forward and one inverse transform plus eight per substep.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdvConfig {
    /// Grid nodes; must be a power of two.
    pub nodes: usize,
    /// Sampling period.
    pub dt: f64,
    pub substeps: usize,
    pub actuator_centers: Vec<f64>,
    /// `v_i(x) = exp(-width (x - m_i)^2)`.
    pub actuator_width: f64,
    /// The domain is `[-half_length, half_length)`.
    pub half_length: f64,
}

impl Default for KdvConfig {
    fn default() -> Self {
        Self {
            nodes: 128,
            dt: 0.01,
            substeps: 10,
            actuator_centers: vec![-PI / 2.0, -PI / 6.0, PI / 6.0, PI / 2.0],
            actuator_width: 25.0,
            half_length: PI,
        }
    }
}

impl KdvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 4 || !self.nodes.is_power_of_two() {
            return Err(Error::Config(format!("plant nodes must be a power of two >= 4, got {}", self.nodes)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("plant dt must be positive, got {}", self.dt)));
        }
        if self.substeps == 0 {
            return Err(Error::Config("plant substeps must be >= 1".into()));
        }
        if self.actuator_centers.is_empty() {
            return Err(Error::Config("at least one actuator is required".into()));
        }
        if !(self.actuator_width > 0.0) || !(self.half_length > 0.0) || !self.half_length.is_finite() {
            return Err(Error::Config("actuator width and domain half-length must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.actuator_centers.len()
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = 2.0 * self.half_length / self.nodes as f64;
        (0..self.nodes).map(|j| -self.half_length + j as f64 * h).collect()
    }

    /// Wavenumber of FFT bin `j`; bins past `M/2` are the negative frequencies.
    fn wavenumber(&self, j: usize) -> f64 {
        let m = self.nodes as i64;
        let j = j as i64;
        let signed = if j < m / 2 { j } else { j - m };
        signed as f64 * PI / self.half_length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub y: Vec<f64>,
}

impl PlantState {
    pub fn zeros(nodes: usize) -> Self {
        Self { y: vec![0.0; nodes] }
    }

    pub fn spatial_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().all(|v| v.is_finite())
    }
}

/// `sum_i u_i v_i(x)` on the grid.
pub fn actuator_field(cfg: &KdvConfig, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != cfg.input_dim() {
        return Err(Error::dim(format!("plant expects {} inputs, got {}", cfg.input_dim(), u.len())));
    }
    Ok(cfg
        .grid()
        .into_iter()
        .map(|x| {
            cfg.actuator_centers
                .iter()
                .zip(u)
                .map(|(m, ui)| ui * (-cfg.actuator_width * (x - m).powi(2)).exp())
                .sum()
        })
        .collect())
}

/// The four basis profiles used to draw initial conditions.
pub fn basis_profiles(x: f64) -> [f64; 4] {
    [
        (-(x - PI / 2.0).powi(2)).exp(),
        -(x / 2.0).sin().powi(2),
        (-(x + PI / 2.0).powi(2)).exp(),
        (x / 2.0).cos().powi(2),
    ]
}

/// Linear combination of [`basis_profiles`] on the grid.
pub fn initial_profile(cfg: &KdvConfig, coeffs: &[f64]) -> Result<PlantState> {
    if coeffs.len() != 4 {
        return Err(Error::dim(format!("initial profile needs 4 coefficients, got {}", coeffs.len())));
    }
    let y = cfg
        .grid()
        .into_iter()
        .map(|x| basis_profiles(x).iter().zip(coeffs).map(|(p, c)| p * c).sum())
        .collect();
    Ok(PlantState { y })
}

/// Integrator with its FFT plans and scratch buffers. Cheap to clone; use one
/// per trajectory when integrating in parallel.
#[derive(Clone)]
pub struct KdvPlant {
    cfg: KdvConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `exp(i k^3 delta / 2)`.
    half_dispersion: Vec<Complex64>,
    /// `(exp(i k^3 delta / 2) - 1) / (i k^3)`, the forcing response over a half step.
    half_forcing: Vec<Complex64>,
    /// `-i k / 2` on retained modes, zero on dealiased modes and Nyquist.
    advection: Vec<Complex64>,
    spectrum: Vec<Complex64>,
    forcing: Vec<Complex64>,
    stages: [Vec<Complex64>; 4],
    trial: Vec<Complex64>,
    physical: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
}

impl fmt::Debug for KdvPlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KdvPlant").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl KdvPlant {
    pub fn new(cfg: KdvConfig) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.nodes;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        let delta = cfg.dt / cfg.substeps as f64;
        let nyquist = m / 2;
        let mut half_dispersion = Vec::with_capacity(m);
        let mut half_forcing = Vec::with_capacity(m);
        let mut advection = Vec::with_capacity(m);
        for j in 0..m {
            let k = cfg.wavenumber(j);
            let k3 = if j == nyquist { 0.0 } else { k.powi(3) };
            let phase = k3 * delta / 2.0;
            half_dispersion.push(Complex64::from_polar(1.0, phase));
            if k3 == 0.0 {
                half_forcing.push(Complex64::new(delta / 2.0, 0.0));
            } else {
                // exp(i phase) - 1 without cancellation
                let e_minus_1 = Complex64::new(-2.0 * (phase / 2.0).sin().powi(2), phase.sin());
                half_forcing.push(e_minus_1 / Complex64::new(0.0, k3));
            }
            let index = if j < nyquist { j } else { m - j };
            let kept = 3 * index <= m && j != nyquist;
            advection.push(if kept { Complex64::new(0.0, -0.5 * k) } else { Complex64::new(0.0, 0.0) });
        }
        let zero = vec![Complex64::new(0.0, 0.0); m];
        Ok(Self {
            cfg,
            forward,
            inverse,
            half_dispersion,
            half_forcing,
            advection,
            spectrum: zero.clone(),
            forcing: zero.clone(),
            stages: [zero.clone(), zero.clone(), zero.clone(), zero.clone()],
            trial: zero.clone(),
            physical: zero,
            fft_scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    pub fn config(&self) -> &KdvConfig {
        &self.cfg
    }

    /// Advance one sampling period under the zero-order-held input `u`.
    pub fn step(&mut self, state: &PlantState, u: &[f64]) -> Result<PlantState> {
        let m = self.cfg.nodes;
        if state.y.len() != m {
            return Err(Error::dim(format!("plant state has {} nodes, expected {m}", state.y.len())));
        }
        if !state.is_finite() {
            return Err(Error::InvalidInput("plant state contains non-finite values".into()));
        }
        let field = actuator_field(&self.cfg, u)?;
        for (f, v) in self.forcing.iter_mut().zip(&field) {
            *f = Complex64::new(*v, 0.0);
        }
        self.forward.process_with_scratch(&mut self.forcing, &mut self.fft_scratch);
        for (s, v) in self.spectrum.iter_mut().zip(&state.y) {
            *s = Complex64::new(*v, 0.0);
        }
        self.forward.process_with_scratch(&mut self.spectrum, &mut self.fft_scratch);

        let delta = self.cfg.dt / self.cfg.substeps as f64;
        for substep in 0..self.cfg.substeps {
            self.disperse();
            self.rk4(delta);
            self.disperse();
            if self.spectrum.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::PlantInstability { substep });
            }
        }

        self.inverse.process_with_scratch(&mut self.spectrum, &mut self.fft_scratch);
        let scale = 1.0 / m as f64;
        let y: Vec<f64> = self.spectrum.iter().map(|c| c.re * scale).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::PlantInstability { substep: self.cfg.substeps - 1 });
        }
        Ok(PlantState { y })
    }

    fn disperse(&mut self) {
        for ((s, e), (g, f)) in self
            .spectrum
            .iter_mut()
            .zip(&self.half_dispersion)
            .zip(self.half_forcing.iter().zip(&self.forcing))
        {
            *s = *s * e + g * f;
        }
    }

    fn rk4(&mut self, delta: f64) {
        let weights = [0.5 * delta, 0.5 * delta, delta];
        self.trial.copy_from_slice(&self.spectrum);
        for stage in 0..4 {
            self.rhs_into(stage);
            if stage < 3 {
                let w = weights[stage];
                for ((t, s), k) in self.trial.iter_mut().zip(&self.spectrum).zip(&self.stages[stage]) {
                    *t = s + k * w;
                }
            }
        }
        let [k1, k2, k3, k4] = &self.stages;
        for (i, s) in self.spectrum.iter_mut().enumerate() {
            *s += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (delta / 6.0);
        }
    }

    /// `stages[stage] = -ik/2 FFT((IFFT trial)^2)`.
    fn rhs_into(&mut self, stage: usize) {
        let m = self.cfg.nodes as f64;
        self.physical.copy_from_slice(&self.trial);
        self.inverse.process_with_scratch(&mut self.physical, &mut self.fft_scratch);
        for p in self.physical.iter_mut() {
            let v = p.re / m;
            *p = Complex64::new(v * v, 0.0);
        }
        self.forward.process_with_scratch(&mut self.physical, &mut self.fft_scratch);
        for ((out, p), a) in self.stages[stage].iter_mut().zip(&self.physical).zip(&self.advection) {
            *out = p * a;
        }
    }
}
