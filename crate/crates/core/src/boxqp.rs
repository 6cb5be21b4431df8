//! Feasible full-Newton path-following interior-point method for
//!
//! ```text
//! minimize 1/2 z'Hz + z'h   subject to  -e <= z <= e
//! ```
//!
//! The solver runs a fixed number of iterations that depends only on the
//! problem size `n` and the duality-gap tolerance `epsilon`, which makes its
//! worst-case cost known before any data is seen.
//!
//! Variables: primal `z`, multipliers `gamma` (upper bound) and `theta`
//! (lower bound), slacks `alpha = e - z` and `omega = z + e`. With
//! `v = (gamma, theta)` and `s = (alpha, omega)` the iterates track the
//! central path `v s = tau^2 e`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flops::FlopCounter;
use crate::linalg::{cholesky_in_place, cholesky_solve_in_place};

/// Neighbourhood radius kept by every iterate.
pub const PROXIMITY_BOUND: f64 = FRAC_1_SQRT_2;

/// Tolerances applied when `SolverConfig::check_invariants` is set.
pub const STATIONARITY_TOL: f64 = 1e-8;
pub const CONSISTENCY_TOL: f64 = 1e-12;
pub const PROXIMITY_SLACK: f64 = 1e-9;
/// Relative roundoff allowance on the per-iteration gap bound `2 n tau^2`.
pub const GAP_BOUND_RTOL: f64 = 1e-12;

const SYMMETRY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    hessian: DMatrix<f64>,
    gradient: DVector<f64>,
}

impl BoxQp {
    pub fn new(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Result<Self> {
        let n = gradient.len();
        if n == 0 {
            return Err(Error::InvalidInput("box QP must have n >= 1".into()));
        }
        if hessian.shape() != (n, n) {
            return Err(Error::dim(format!(
                "hessian is {}x{}, gradient has length {n}",
                hessian.nrows(),
                hessian.ncols()
            )));
        }
        if hessian.iter().chain(gradient.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in box QP data".into()));
        }
        let scale = hessian.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (hessian[(i, j)] - hessian[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "hessian is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { hessian, gradient })
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn gradient(&self) -> &DVector<f64> {
        &self.gradient
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + z.dot(&self.gradient)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Target duality gap `v's`.
    pub epsilon: f64,
    /// Verify the per-iteration invariants and fail with
    /// [`Error::InvariantViolated`] if one is broken. Off on the certified path.
    pub check_invariants: bool,
    /// `||h||_inf` at or below this is treated as zero. `None` selects
    /// `1e-14 * max(1, ||H||_inf)`.
    pub zero_gradient_threshold: Option<f64>,
    /// Stop as soon as `v's <= epsilon`. Breaks the fixed schedule, so it is
    /// only for exploratory runs.
    pub early_exit: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            check_invariants: false,
            zero_gradient_threshold: None,
            early_exit: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if let Some(t) = self.zero_gradient_threshold {
            if !(t >= 0.0) {
                return Err(Error::Config(format!(
                    "zero_gradient_threshold must be >= 0, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn threshold_for(&self, hessian: &DMatrix<f64>) -> f64 {
        self.zero_gradient_threshold
            .unwrap_or_else(|| default_zero_gradient_threshold(hessian))
    }
}

pub fn default_zero_gradient_threshold(hessian: &DMatrix<f64>) -> f64 {
    let inf_norm = hessian
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    1e-14 * inf_norm.max(1.0)
}

/// `lambda = 1 / sqrt(n + 1)`, the objective scaling used by the initial point.
pub fn objective_scale(n: usize) -> f64 {
    1.0 / ((n + 1) as f64).sqrt()
}

/// `eta = (sqrt 2 - 1) / (sqrt(2n) + sqrt 2 - 1)`, the per-iteration
/// reduction of the path parameter.
pub fn path_reduction(n: usize) -> f64 {
    let r = (2.0 * n as f64).sqrt();
    (SQRT_2 - 1.0) / (r + SQRT_2 - 1.0)
}

/// Exact number of iterations after which `v's <= epsilon` is guaranteed:
///
/// ```text
/// ceil( log(2n/eps) / (-2 log( sqrt(2n) / (sqrt(2n) + sqrt 2 - 1) )) ) + 1
/// ```
pub fn iteration_count(n: usize, epsilon: f64) -> Result<usize> {
    let two_n = 2.0 * n as f64;
    if n == 0 || !(epsilon > 0.0) || !(epsilon < two_n) {
        return Err(Error::InvalidTolerance { n, epsilon });
    }
    let r = two_n.sqrt();
    let numerator = (two_n / epsilon).ln();
    let denominator = -2.0 * (r / (r + SQRT_2 - 1.0)).ln();
    // nudge down so roundoff cannot push an exact integer over the boundary
    let ratio = numerator / denominator - 1e-12;
    Ok(ratio.ceil().max(0.0) as usize + 1)
}

/// `||tau e - sqrt(v s)||_2 / tau`.
pub fn proximity(v: &[f64], s: &[f64], tau: f64) -> Result<f64> {
    if v.len() != s.len() {
        return Err(Error::dim(format!("proximity: |v| = {}, |s| = {}", v.len(), s.len())));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("proximity: tau must be > 0, got {tau}")));
    }
    let mut acc = 0.0;
    for (&vi, &si) in v.iter().zip(s) {
        if !(vi > 0.0) || !(si > 0.0) {
            return Err(Error::Domain("proximity: v and s must be strictly positive".into()));
        }
        let d = tau - (vi * si).sqrt();
        acc += d * d;
    }
    Ok(acc.sqrt() / tau)
}

/// A strictly feasible primal-dual point of the scaled problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverIterate {
    pub z: DVector<f64>,
    pub gamma: DVector<f64>,
    pub theta: DVector<f64>,
    pub alpha: DVector<f64>,
    pub omega: DVector<f64>,
    pub tau: f64,
    pub lambda: f64,
    pub eta: f64,
    /// `2 lambda H / ||h||_inf`, the Hessian of the scaled objective.
    pub scaled_hessian: DMatrix<f64>,
    /// `h / ||h||_inf`.
    pub scaled_gradient: DVector<f64>,
    /// Number of Newton steps taken so far.
    pub iteration: usize,
}

impl SolverIterate {
    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn duality_gap(&self) -> f64 {
        self.gamma.dot(&self.alpha) + self.theta.dot(&self.omega)
    }

    pub fn complementarity_pair(&self) -> (Vec<f64>, Vec<f64>) {
        let v = self.gamma.iter().chain(self.theta.iter()).copied().collect();
        let s = self.alpha.iter().chain(self.omega.iter()).copied().collect();
        (v, s)
    }

    pub fn proximity(&self, tau: f64) -> Result<f64> {
        let (v, s) = self.complementarity_pair();
        proximity(&v, &s, tau)
    }

    pub fn min_positive(&self) -> f64 {
        self.gamma
            .iter()
            .chain(self.theta.iter())
            .chain(self.alpha.iter())
            .chain(self.omega.iter())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `||2 lambda H~ z + 2 lambda h~ + gamma - theta||_inf`.
    pub fn stationarity_residual(&self) -> f64 {
        let mut r = &self.scaled_hessian * &self.z;
        r.axpy(2.0 * self.lambda, &self.scaled_gradient, 1.0);
        r += &self.gamma;
        r -= &self.theta;
        r.amax()
    }

    /// `max(||alpha + z - e||_inf, ||omega - z - e||_inf)`.
    pub fn consistency_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            worst = worst
                .max((self.alpha[i] + self.z[i] - 1.0).abs())
                .max((self.omega[i] - self.z[i] - 1.0).abs());
        }
        worst
    }

    /// One full Newton step toward the central-path point for the current
    /// `tau`. The caller reduces `tau` first.
    pub fn newton_step(&mut self, ws: &mut NewtonWorkspace, flops: &mut FlopCounter) -> Result<()> {
        let n = self.dim();
        ws.ensure(n);
        let tau = self.tau;
        let two_tau = 2.0 * tau;
        flops.add(1);

        for i in 0..n {
            let rg = self.gamma[i] / self.alpha[i];
            let rt = self.theta[i] / self.omega[i];
            ws.ratio_g[i] = rg;
            ws.ratio_t[i] = rt;
            ws.target_g[i] = two_tau * rg.sqrt();
            ws.target_t[i] = two_tau * rt.sqrt();
        }
        // ratios, square roots, scaled roots
        flops.add(6 * n as u64);

        // (2 lambda H~ + diag(gamma/alpha) + diag(theta/omega)) dz = rhs
        ws.mat.copy_from_slice(self.scaled_hessian.as_slice());
        for i in 0..n {
            ws.mat[i * n + i] += ws.ratio_g[i] + ws.ratio_t[i];
            ws.rhs[i] = (ws.target_t[i] - ws.target_g[i]) + 2.0 * (self.gamma[i] - self.theta[i]);
        }
        flops.add(6 * n as u64);

        if let Err(e) = cholesky_in_place(&mut ws.mat, n, flops) {
            return Err(Error::NumericalBreakdown {
                iteration: self.iteration + 1,
                detail: format!("Cholesky pivot {:e} at column {}", e.pivot, e.column),
            });
        }
        cholesky_solve_in_place(&ws.mat, n, &mut ws.rhs, flops);

        for i in 0..n {
            let dz = ws.rhs[i];
            self.gamma[i] = ws.ratio_g[i] * dz + ws.target_g[i] - self.gamma[i];
            self.theta[i] = ws.target_t[i] - self.theta[i] - ws.ratio_t[i] * dz;
            self.z[i] += dz;
            self.alpha[i] -= dz;
            self.omega[i] += dz;
        }
        flops.add(9 * n as u64);

        self.iteration += 1;
        Ok(())
    }
}

/// Scratch buffers for [`SolverIterate::newton_step`]; reused across
/// iterations and solves.
#[derive(Debug, Clone, Default)]
pub struct NewtonWorkspace {
    n: usize,
    mat: Vec<f64>,
    rhs: Vec<f64>,
    ratio_g: Vec<f64>,
    ratio_t: Vec<f64>,
    target_g: Vec<f64>,
    target_t: Vec<f64>,
}

impl NewtonWorkspace {
    pub fn new(n: usize) -> Self {
        let mut ws = Self::default();
        ws.ensure(n);
        ws
    }

    fn ensure(&mut self, n: usize) {
        if self.n != n {
            self.n = n;
            self.mat = vec![0.0; n * n];
            for buf in [
                &mut self.rhs,
                &mut self.ratio_g,
                &mut self.ratio_t,
                &mut self.target_g,
                &mut self.target_t,
            ] {
                *buf = vec![0.0; n];
            }
        }
    }
}

/// Build the cost-free strictly feasible starting point, or `None` when
/// `||h||_inf <= zero_gradient_threshold` (the minimizer is then `z = 0`).
pub fn scale_and_initialize(qp: &BoxQp, zero_gradient_threshold: f64) -> Option<SolverIterate> {
    let h_norm = qp.gradient().amax();
    let mut flops = FlopCounter::new();
    initialize(qp.hessian(), qp.gradient(), h_norm, zero_gradient_threshold, &mut flops)
}

fn initialize(
    hessian: &DMatrix<f64>,
    gradient: &DVector<f64>,
    h_norm: f64,
    zero_gradient_threshold: f64,
    flops: &mut FlopCounter,
) -> Option<SolverIterate> {
    if !(h_norm > zero_gradient_threshold) {
        return None;
    }
    let n = gradient.len();
    let lambda = objective_scale(n);
    let eta = path_reduction(n);
    let tau = 1.0 / (1.0 - eta);
    flops.add(3);

    let inv = 1.0 / h_norm;
    let scaled_gradient = gradient * inv;
    let lambda_h = &scaled_gradient * lambda;
    let gamma = lambda_h.map(|v| 1.0 - v);
    let theta = lambda_h.map(|v| 1.0 + v);
    flops.add(1 + 4 * n as u64);

    let hessian_scale = 2.0 * lambda * inv;
    let scaled_hessian = hessian * hessian_scale;
    flops.add(2 + (n * n) as u64);

    Some(SolverIterate {
        z: DVector::zeros(n),
        gamma,
        theta,
        alpha: DVector::from_element(n, 1.0),
        omega: DVector::from_element(n, 1.0),
        tau,
        lambda,
        eta,
        scaled_hessian,
        scaled_gradient,
        iteration: 0,
    })
}

/// Convenience wrapper: one Newton step on a copy of `it`.
pub fn newton_step(it: &SolverIterate) -> Result<SolverIterate> {
    let mut next = it.clone();
    next.newton_step(&mut NewtonWorkspace::new(it.dim()), &mut FlopCounter::new())?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub z_star: DVector<f64>,
    /// Final `v's` of the scaled problem; zero for the `h = 0` shortcut.
    pub duality_gap: f64,
    pub iterations: usize,
    /// Operations in one iteration of the main loop (identical for all iterations).
    pub per_iteration_flops: u64,
    /// Operations for the whole solve, including the norm test and start-up.
    pub total_flops: u64,
}

/// Snapshot handed to an [`IterationObserver`] after initialization
/// (`iteration == 0`) and after every Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Path parameter the last step targeted (`tau^0` for the start point).
    pub tau: f64,
    /// Parameter the next step will target, `(1 - eta) tau`.
    pub next_tau: f64,
    pub duality_gap: f64,
    /// `2 n tau^2`; infinite for the start point.
    pub gap_bound: f64,
    /// `xi(beta, next_tau)`.
    pub proximity: f64,
    pub min_positive: f64,
    pub stationarity_residual: f64,
    pub consistency_residual: f64,
}

impl IterationRecord {
    fn capture(it: &SolverIterate) -> Result<Self> {
        let n = it.dim() as f64;
        let next_tau = (1.0 - it.eta) * it.tau;
        Ok(Self {
            iteration: it.iteration,
            tau: it.tau,
            next_tau,
            duality_gap: it.duality_gap(),
            gap_bound: if it.iteration == 0 {
                f64::INFINITY
            } else {
                2.0 * n * it.tau * it.tau
            },
            proximity: it.proximity(next_tau).unwrap_or(f64::INFINITY),
            min_positive: it.min_positive(),
            stationarity_residual: it.stationarity_residual(),
            consistency_residual: it.consistency_residual(),
        })
    }

    /// First violated invariant, if any.
    pub fn violation(&self) -> Option<String> {
        if !(self.min_positive > 0.0) {
            return Some(format!("positivity lost: min = {:e}", self.min_positive));
        }
        if self.duality_gap > self.gap_bound * (1.0 + GAP_BOUND_RTOL) {
            return Some(format!(
                "gap {:e} exceeds 2 n tau^2 = {:e}",
                self.duality_gap, self.gap_bound
            ));
        }
        if !(self.proximity <= PROXIMITY_BOUND + PROXIMITY_SLACK) {
            return Some(format!("proximity {} exceeds 1/sqrt(2)", self.proximity));
        }
        if !(self.stationarity_residual <= STATIONARITY_TOL) {
            return Some(format!("stationarity residual {:e}", self.stationarity_residual));
        }
        if !(self.consistency_residual <= CONSISTENCY_TOL) {
            return Some(format!("slack consistency residual {:e}", self.consistency_residual));
        }
        None
    }
}

pub trait IterationObserver {
    fn observe(&mut self, record: &IterationRecord);
}

impl<F: FnMut(&IterationRecord)> IterationObserver for F {
    fn observe(&mut self, record: &IterationRecord) {
        self(record)
    }
}

/// Reusable solver; owns its workspace so repeated solves do not allocate
/// the Newton buffers.
#[derive(Debug, Clone, Default)]
pub struct BoxQpSolver {
    ws: NewtonWorkspace,
}

impl BoxQpSolver {
    pub fn new(n: usize) -> Self {
        Self { ws: NewtonWorkspace::new(n) }
    }

    pub fn solve(&mut self, qp: &BoxQp, cfg: &SolverConfig) -> Result<Solution> {
        self.solve_observed(qp, cfg, &mut FlopCounter::new(), None)
    }

    /// Run the fixed-iteration schedule. Operations are added to `flops`;
    /// invariant checks and observer snapshots are not counted.
    pub fn solve_observed(
        &mut self,
        qp: &BoxQp,
        cfg: &SolverConfig,
        flops: &mut FlopCounter,
        observer: Option<&mut dyn IterationObserver>,
    ) -> Result<Solution> {
        self.solve_parts(qp.hessian(), qp.gradient(), cfg, flops, observer)
    }

    /// Same as [`solve_observed`](Self::solve_observed) on borrowed data that
    /// the caller guarantees is a valid box QP (symmetric PSD `hessian`).
    pub(crate) fn solve_parts(
        &mut self,
        hessian: &DMatrix<f64>,
        gradient: &DVector<f64>,
        cfg: &SolverConfig,
        flops: &mut FlopCounter,
        mut observer: Option<&mut dyn IterationObserver>,
    ) -> Result<Solution> {
        cfg.validate()?;
        let n = gradient.len();
        let threshold = cfg.threshold_for(hessian);
        let start = flops.count();

        let h_norm = gradient.amax();
        flops.add(n as u64);
        let Some(mut it) = initialize(hessian, gradient, h_norm, threshold, flops) else {
            return Ok(Solution {
                z_star: DVector::zeros(n),
                duality_gap: 0.0,
                iterations: 0,
                per_iteration_flops: 0,
                total_flops: flops.count() - start,
            });
        };
        let iterations = iteration_count(n, cfg.epsilon)?;
        let watching = cfg.check_invariants || observer.is_some();
        if watching {
            self.inspect(&it, cfg, &mut observer)?;
        }

        let shrink = 1.0 - it.eta;
        let mut per_iteration_flops = 0;
        for _ in 0..iterations {
            let before = flops.count();
            it.tau *= shrink;
            flops.add(1);
            it.newton_step(&mut self.ws, flops)?;
            per_iteration_flops = flops.count() - before;
            if watching {
                self.inspect(&it, cfg, &mut observer)?;
            }
            if cfg.early_exit && it.duality_gap() <= cfg.epsilon {
                break;
            }
        }

        let duality_gap = it.duality_gap();
        flops.add(4 * n as u64);
        Ok(Solution {
            z_star: it.z,
            duality_gap,
            iterations: it.iteration,
            per_iteration_flops,
            total_flops: flops.count() - start,
        })
    }

    fn inspect(
        &self,
        it: &SolverIterate,
        cfg: &SolverConfig,
        observer: &mut Option<&mut dyn IterationObserver>,
    ) -> Result<()> {
        let record = IterationRecord::capture(it)?;
        if let Some(obs) = observer.as_deref_mut() {
            obs.observe(&record);
        }
        if cfg.check_invariants {
            if let Some(detail) = record.violation() {
                return Err(Error::InvariantViolated { iteration: it.iteration, detail });
            }
        }
        Ok(())
    }
}

/// Solve a box QP with a fresh workspace.
pub fn solve(qp: &BoxQp, cfg: &SolverConfig) -> Result<Solution> {
    BoxQpSolver::new(qp.dim()).solve(qp, cfg)
}

/// Operations in one main-loop iteration as implemented: path update,
/// Newton system assembly, Cholesky, two substitutions, recovery and update.
pub fn per_iteration_flops(n: usize) -> u64 {
    let nn = n as u64;
    2 + 21 * nn + crate::linalg::cholesky_flops(n) + crate::linalg::triangular_solve_flops(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn qp(h: &[f64], g: &[f64]) -> BoxQp {
        let n = g.len();
        BoxQp::new(DMatrix::from_row_slice(n, n, h), DVector::from_row_slice(g)).unwrap()
    }

    #[test]
    fn iteration_count_reported_case() {
        assert_eq!(iteration_count(40, 1e-6).unwrap(), 202);
    }

    #[test]
    fn iteration_count_single_variable() {
        // closed form evaluated at 50 digits: 28.2398... -> 29 + 1
        assert_eq!(iteration_count(1, 1e-6).unwrap(), 30);
    }

    #[test]
    fn iteration_count_near_degenerate_tolerance() {
        for n in [1usize, 3, 40] {
            let eps = 2.0 * n as f64 * (1.0 - 1e-15);
            assert_eq!(iteration_count(n, eps).unwrap(), 1);
        }
    }

    #[test]
    fn iteration_count_rejects_bad_tolerance() {
        assert!(matches!(iteration_count(4, 8.0), Err(Error::InvalidTolerance { .. })));
        assert!(matches!(iteration_count(4, 0.0), Err(Error::InvalidTolerance { .. })));
        assert!(matches!(iteration_count(4, -1.0), Err(Error::InvalidTolerance { .. })));
        assert!(iteration_count(0, 1e-6).is_err());
    }

    #[test]
    fn iteration_count_monotone_in_epsilon() {
        for n in [1usize, 2, 8, 40, 100] {
            let mut prev = usize::MAX;
            for k in 0..40 {
                let eps = 1e-12 * 10f64.powf(k as f64 * 0.3);
                if eps >= 2.0 * n as f64 {
                    break;
                }
                let c = iteration_count(n, eps).unwrap();
                assert!(c <= prev);
                prev = c;
            }
        }
    }

    #[test]
    fn initialization_scalar_example() {
        let it = scale_and_initialize(&qp(&[1.0], &[2.0]), 0.0).unwrap();
        let l = FRAC_1_SQRT_2;
        assert_abs_diff_eq!(it.scaled_gradient[0], 1.0);
        assert_abs_diff_eq!(it.lambda, l, epsilon = 1e-15);
        assert_abs_diff_eq!(it.gamma[0], 1.0 - l, epsilon = 1e-15);
        assert_abs_diff_eq!(it.theta[0], 1.0 + l, epsilon = 1e-15);
        assert_eq!(it.alpha[0], 1.0);
        assert_eq!(it.omega[0], 1.0);
        assert_eq!(it.z[0], 0.0);
        // tau^0 (1 - eta) = 1
        assert_abs_diff_eq!(it.tau * (1.0 - it.eta), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn initial_proximity_scalar_example() {
        let it = scale_and_initialize(&qp(&[1.0], &[2.0]), 0.0).unwrap();
        let xi = it.proximity(1.0).unwrap();
        let l = FRAC_1_SQRT_2;
        let expected = ((1.0 - (1.0 - l).sqrt()).powi(2) + (1.0 - (1.0 + l).sqrt()).powi(2)).sqrt();
        assert_abs_diff_eq!(xi, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(xi, 0.5518, epsilon = 1e-4);
        assert!(xi <= PROXIMITY_BOUND);
    }

    #[test]
    fn zero_gradient_skips_initialization() {
        assert!(scale_and_initialize(&qp(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]), 0.0).is_none());
        let sol = solve(&qp(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]), &SolverConfig::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.z_star, DVector::zeros(2));
    }

    #[test]
    fn proximity_examples() {
        assert_eq!(proximity(&[2.0, 2.0], &[2.0, 2.0], 2.0).unwrap(), 0.0);
        assert_eq!(proximity(&[4.0], &[1.0], 2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(proximity(&[1.0, 1.0], &[1.0, 4.0], 1.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn proximity_domain_errors() {
        assert!(matches!(proximity(&[0.0], &[1.0], 1.0), Err(Error::Domain(_))));
        assert!(matches!(proximity(&[1.0], &[-1.0], 1.0), Err(Error::Domain(_))));
        assert!(matches!(proximity(&[1.0], &[1.0], 0.0), Err(Error::Domain(_))));
        assert!(matches!(proximity(&[1.0], &[1.0, 2.0], 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn centered_symmetric_point_is_fixed() {
        // gamma = theta, alpha = omega, v s = tau^2 e and zero stationarity
        let n = 3;
        let tau = 0.7;
        let it = SolverIterate {
            z: DVector::zeros(n),
            gamma: DVector::from_element(n, tau * tau),
            theta: DVector::from_element(n, tau * tau),
            alpha: DVector::from_element(n, 1.0),
            omega: DVector::from_element(n, 1.0),
            tau,
            lambda: objective_scale(n),
            eta: path_reduction(n),
            scaled_hessian: DMatrix::identity(n, n),
            scaled_gradient: DVector::zeros(n),
            iteration: 0,
        };
        let next = newton_step(&it).unwrap();
        assert!((&next.z - &it.z).amax() < 1e-15);
        assert!((&next.gamma - &it.gamma).amax() < 1e-15);
        assert!((&next.theta - &it.theta).amax() < 1e-15);
    }

    #[test]
    fn first_step_stays_in_neighbourhood() {
        let mut it = scale_and_initialize(&qp(&[1.0], &[2.0]), 0.0).unwrap();
        it.tau *= 1.0 - it.eta;
        let next = newton_step(&it).unwrap();
        let xi = next.proximity((1.0 - next.eta) * next.tau).unwrap();
        assert!(xi <= PROXIMITY_BOUND, "xi = {xi}");
        assert!(next.min_positive() > 0.0);
    }

    #[test]
    fn diagonal_problem_is_clamped_unconstrained_minimizer() {
        let sol = solve(&qp(&[2.0, 0.0, 0.0, 2.0], &[-4.0, 1.0]), &SolverConfig::default()).unwrap();
        assert!((sol.z_star[0] - 1.0).abs() < 1e-4);
        assert!((sol.z_star[1] + 0.5).abs() < 1e-4);
        assert_eq!(sol.iterations, iteration_count(2, 1e-6).unwrap());
        assert!(sol.duality_gap <= 1e-6);
    }

    #[test]
    fn invariant_checks_pass_on_small_problem() {
        let cfg = SolverConfig { check_invariants: true, ..Default::default() };
        let mut seen = 0;
        let mut obs = |r: &IterationRecord| {
            assert!(r.violation().is_none(), "{:?}", r);
            seen += 1;
        };
        let problem = qp(&[3.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0], &[1.0, -5.0, 0.3]);
        let sol = BoxQpSolver::new(3)
            .solve_observed(&problem, &cfg, &mut FlopCounter::new(), Some(&mut obs))
            .unwrap();
        assert_eq!(seen, sol.iterations + 1);
    }

    #[test]
    fn flop_accounting_matches_formula() {
        let problem = qp(&[3.0, 1.0, 1.0, 2.0], &[1.0, -5.0]);
        let sol = solve(&problem, &SolverConfig::default()).unwrap();
        assert_eq!(sol.per_iteration_flops, per_iteration_flops(2));
        let n = 2u64;
        let expected = n + 3 + 1 + 4 * n + 2 + n * n
            + sol.iterations as u64 * per_iteration_flops(2)
            + 4 * n;
        assert_eq!(sol.total_flops, expected);
    }

    #[test]
    fn early_exit_stops_sooner() {
        let problem = qp(&[2.0, 0.0, 0.0, 2.0], &[-4.0, 1.0]);
        let cfg = SolverConfig { early_exit: true, epsilon: 1e-2, ..Default::default() };
        let sol = solve(&problem, &cfg).unwrap();
        assert!(sol.iterations <= iteration_count(2, 1e-2).unwrap());
        assert!(sol.duality_gap <= 1e-2);
    }

    #[test]
    fn indefinite_hessian_reports_breakdown() {
        let problem = qp(&[-10.0, 0.0, 0.0, -10.0], &[1.0, 1.0]);
        let err = solve(&problem, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NumericalBreakdown { iteration: 1, .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn rejects_asymmetric_hessian() {
        let r = BoxQp::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), DVector::zeros(2));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
