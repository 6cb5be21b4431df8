//! Condensing of the lifted-linear MPC problem into a box-constrained QP over
//! the stacked (unit-scaled) inputs, the on-line gradient assembly, and the
//! a-priori FLOP certificate of one control step.
//!
//! With `z = col(u_0, .., u_{N-1})` in the unit box, the predicted lifted
//! trajectory is `psi_k = A^k psi_0 + (S z)_k` for `k = 1..N`, and the cost
//! reduces to `1/2 z'Hz + z'h + const` with `H = Rbar + S' Qbar S` computed
//! off-line and `h` assembled on-line from `psi_0` and the references.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::boxqp::{self, BoxQpSolver, Solution, SolverConfig};
use crate::error::{Error, Result};
use crate::flops::{self, FlopCounter};
use crate::koopman::LiftedPredictor;
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcWeights {
    pub horizon: usize,
    /// Stage state weight (stages `1..N-1`).
    pub w_x: DMatrix<f64>,
    /// Terminal state weight.
    pub w_n: DMatrix<f64>,
    pub w_u: DMatrix<f64>,
}

impl MpcWeights {
    /// Weights that are multiples of the identity.
    pub fn scaled_identity(horizon: usize, n_x: usize, n_u: usize, state: f64, terminal: f64, input: f64) -> Self {
        Self {
            horizon,
            w_x: DMatrix::identity(n_x, n_x) * state,
            w_n: DMatrix::identity(n_x, n_x) * terminal,
            w_u: DMatrix::identity(n_u, n_u) * input,
        }
    }

    fn validate(&self, n_x: usize, n_u: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("prediction horizon must be >= 1".into()));
        }
        for (name, w, dim) in [("W_x", &self.w_x, n_x), ("W_N", &self.w_n, n_x), ("W_u", &self.w_u, n_u)] {
            if w.shape() != (dim, dim) {
                return Err(Error::dim(format!("{name} is {:?}, expected {dim}x{dim}", w.shape())));
            }
            let scale = w.amax().max(1.0);
            if (w - w.transpose()).amax() > 1e-12 * scale {
                return Err(Error::Config(format!("{name} is not symmetric")));
            }
        }
        for (name, w) in [("W_x", &self.w_x), ("W_N", &self.w_n)] {
            let min_eig = w.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-12 * w.amax().max(1.0) {
                return Err(Error::Config(format!("{name} is not positive semidefinite")));
            }
        }
        if self.w_u.clone().cholesky().is_none() {
            return Err(Error::Config("W_u must be positive definite".into()));
        }
        Ok(())
    }
}

/// Time-varying tracking targets.
#[derive(Debug, Clone, PartialEq)]
pub struct References {
    pub x_ref: DVector<f64>,
    pub u_ref: DVector<f64>,
}

impl References {
    pub fn constant(n_x: usize, state_value: f64, n_u: usize) -> Self {
        Self {
            x_ref: DVector::from_element(n_x, state_value),
            u_ref: DVector::zeros(n_u),
        }
    }
}

/// Affine map between the unit box and physical input bounds, per channel:
/// `u = center + half_range .* z`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    center: DVector<f64>,
    half_range: DVector<f64>,
}

/// Slack allowed on `|z| <= 1` before `to_physical` rejects the input.
pub const BOX_SLACK: f64 = 1e-9;

impl InputScaling {
    pub fn from_bounds(u_min: &[f64], u_max: &[f64]) -> Result<Self> {
        if u_min.len() != u_max.len() || u_min.is_empty() {
            return Err(Error::dim("input bounds must be nonempty and of equal length"));
        }
        let center = DVector::from_iterator(u_min.len(), u_min.iter().zip(u_max).map(|(a, b)| 0.5 * (a + b)));
        let half_range = DVector::from_iterator(u_min.len(), u_min.iter().zip(u_max).map(|(a, b)| 0.5 * (b - a)));
        if half_range.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Config("each input needs u_min < u_max".into()));
        }
        Ok(Self { center, half_range })
    }

    /// `[-1, 1]` on every channel.
    pub fn unit(n_u: usize) -> Self {
        Self {
            center: DVector::zeros(n_u),
            half_range: DVector::from_element(n_u, 1.0),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn half_range(&self) -> &DVector<f64> {
        &self.half_range
    }

    pub fn is_unit(&self) -> bool {
        self.center.iter().all(|c| *c == 0.0) && self.half_range.iter().all(|d| *d == 1.0)
    }

    /// Map a stacked unit-box sequence (any number of stages) to physical inputs.
    pub fn to_physical(&self, z: &[f64]) -> Result<DVector<f64>> {
        let n_u = self.input_dim();
        if z.len() % n_u != 0 {
            return Err(Error::dim(format!("sequence length {} is not a multiple of n_u = {n_u}", z.len())));
        }
        if let Some(v) = z.iter().find(|v| !(v.abs() <= 1.0 + BOX_SLACK)) {
            return Err(Error::InvalidInput(format!("{v} lies outside the unit box")));
        }
        Ok(DVector::from_iterator(
            z.len(),
            z.iter().enumerate().map(|(i, v)| self.center[i % n_u] + self.half_range[i % n_u] * v),
        ))
    }

    pub fn to_unit(&self, u: &[f64]) -> Result<DVector<f64>> {
        let n_u = self.input_dim();
        if u.len() % n_u != 0 {
            return Err(Error::dim(format!("sequence length {} is not a multiple of n_u = {n_u}", u.len())));
        }
        Ok(DVector::from_iterator(
            u.len(),
            u.iter().enumerate().map(|(i, v)| (v - self.center[i % n_u]) / self.half_range[i % n_u]),
        ))
    }
}

/// Off-line condensed matrices; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedData {
    pub n_x: usize,
    pub n_psi: usize,
    pub n_u: usize,
    pub horizon: usize,
    /// Lifted state matrix, used by the on-line free-response recurrence.
    pub a: DMatrix<f64>,
    /// `B * center`, the constant drift from the input offset; `None` for a
    /// centered box.
    pub drift: Option<DVector<f64>>,
    /// Prediction matrix, block `(i, j)` = `A^(i-j) B D` for `i >= j`.
    pub s: DMatrix<f64>,
    /// `C' W_x C`, the diagonal blocks of `Qbar` for stages `1..N-1`.
    pub stage_weight: DMatrix<f64>,
    /// `C' W_N C`, the last diagonal block of `Qbar`.
    pub terminal_weight: DMatrix<f64>,
    /// `D W_u D`, the diagonal block of `Rbar`.
    pub input_weight: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    /// `S' Qbar`, block upper triangular (`n x N n_psi`).
    pub stq: DMatrix<f64>,
    /// Maps `x_r` to its contribution `S' col(C' W_k x_r)` to the gradient.
    pub ref_map: DMatrix<f64>,
    /// `D W_u`, applied to `center - u_r`.
    pub input_ref_map: DMatrix<f64>,
    pub scaling: InputScaling,
    /// `||h||_inf` at or below this skips the solver.
    pub zero_gradient_threshold: f64,
}

impl CondensedData {
    /// Box-QP dimension `N n_u`.
    pub fn dim(&self) -> usize {
        self.horizon * self.n_u
    }

    /// Operations spent by [`online_gradient`] as implemented.
    pub fn gradient_flops(&self) -> u64 {
        let (n, np, nu) = (self.horizon as u64, self.n_psi as u64, self.n_u as u64);
        let drift = if self.drift.is_some() { n * np } else { 0 };
        n * flops::gemv(self.n_psi, self.n_psi)
            + drift
            + n * (n + 1) * nu * np
            + flops::gemv(self.dim(), self.n_x)
            + nu
            + flops::gemv(self.n_u, self.n_u)
            + n * nu
    }
}

/// Build the condensed problem for the given predictor, weights and input box.
pub fn build_condensed(p: &LiftedPredictor, w: &MpcWeights, scaling: &InputScaling) -> Result<CondensedData> {
    let (n_x, n_psi, n_u) = (p.state_dim(), p.lifted_dim(), p.input_dim());
    w.validate(n_x, n_u)?;
    if scaling.input_dim() != n_u {
        return Err(Error::dim(format!("input scaling has {} channels, predictor has {n_u}", scaling.input_dim())));
    }
    let horizon = w.horizon;
    let n = horizon * n_u;
    let d = DMatrix::from_diagonal(scaling.half_range());

    // A^m B D for m = 0..N-1
    let mut impulse = Vec::with_capacity(horizon);
    impulse.push(&p.b * &d);
    for m in 1..horizon {
        let next = &p.a * &impulse[m - 1];
        impulse.push(next);
    }

    let mut s = DMatrix::zeros(horizon * n_psi, n);
    for i in 0..horizon {
        for j in 0..=i {
            s.view_mut((i * n_psi, j * n_u), (n_psi, n_u)).copy_from(&impulse[i - j]);
        }
    }

    let ct = p.c.transpose();
    let stage_weight = &ct * &w.w_x * &p.c;
    let terminal_weight = &ct * &w.w_n * &p.c;
    let q_block = |i: usize| if i + 1 == horizon { &terminal_weight } else { &stage_weight };

    // S' Qbar: block (j, i) = (Q_i A^(i-j) B D)'
    let mut stq = DMatrix::zeros(n, horizon * n_psi);
    for i in 0..horizon {
        for j in 0..=i {
            let blk = (q_block(i) * &impulse[i - j]).transpose();
            stq.view_mut((j * n_u, i * n_psi), (n_u, n_psi)).copy_from(&blk);
        }
    }

    let input_weight = &d * &w.w_u * &d;
    let mut hessian = &stq * &s;
    for j in 0..horizon {
        let mut blk = hessian.view_mut((j * n_u, j * n_u), (n_u, n_u));
        blk += &input_weight;
    }
    hessian = (&hessian + hessian.transpose()) * 0.5;
    if hessian.clone().cholesky().is_none() {
        return Err(Error::Config("condensed Hessian is not positive definite".into()));
    }

    // ref_map block j = sum_{i >= j} (C A^(i-j) B D)' W_i
    let c_impulse: Vec<DMatrix<f64>> = impulse.iter().map(|g| &p.c * g).collect();
    let mut ref_map = DMatrix::zeros(n, n_x);
    for j in 0..horizon {
        let mut blk = DMatrix::zeros(n_u, n_x);
        for i in j..horizon {
            let wi = if i + 1 == horizon { &w.w_n } else { &w.w_x };
            blk += c_impulse[i - j].transpose() * wi;
        }
        ref_map.view_mut((j * n_u, 0), (n_u, n_x)).copy_from(&blk);
    }

    let drift = if scaling.center().iter().any(|c| *c != 0.0) {
        Some(&p.b * scaling.center())
    } else {
        None
    };

    let zero_gradient_threshold = boxqp::default_zero_gradient_threshold(&hessian);
    Ok(CondensedData {
        n_x,
        n_psi,
        n_u,
        horizon,
        a: p.a.clone(),
        drift,
        s,
        stage_weight,
        terminal_weight,
        input_weight,
        hessian,
        stq,
        ref_map,
        input_ref_map: &d * &w.w_u,
        scaling: scaling.clone(),
        zero_gradient_threshold,
    })
}

/// Assemble the Box-QP gradient for the current lifted state and references.
///
/// The free response `psi_k = A psi_{k-1}` is propagated by repeated
/// matrix-vector products and folded into `h` through the block upper
/// triangular `S' Qbar` as each stage becomes available.
pub fn online_gradient(
    cd: &CondensedData,
    psi0: &DVector<f64>,
    refs: &References,
    flops: &mut FlopCounter,
) -> Result<DVector<f64>> {
    if psi0.len() != cd.n_psi || refs.x_ref.len() != cd.n_x || refs.u_ref.len() != cd.n_u {
        return Err(Error::dim(format!(
            "online gradient: psi0 {} (need {}), x_r {} (need {}), u_r {} (need {})",
            psi0.len(),
            cd.n_psi,
            refs.x_ref.len(),
            cd.n_x,
            refs.u_ref.len(),
            cd.n_u
        )));
    }
    let (n_psi, n_u) = (cd.n_psi, cd.n_u);
    let mut h = DVector::zeros(cd.dim());
    let mut psi = psi0.clone();
    let mut next = DVector::zeros(n_psi);
    for i in 1..=cd.horizon {
        next.gemv(1.0, &cd.a, &psi, 0.0);
        if let Some(drift) = &cd.drift {
            next += drift;
        }
        let rows = i * n_u;
        let blk = cd.stq.view((0, (i - 1) * n_psi), (rows, n_psi));
        h.rows_mut(0, rows).gemv(1.0, &blk, &next, 1.0);
        std::mem::swap(&mut psi, &mut next);
    }
    h.gemv(-1.0, &cd.ref_map, &refs.x_ref, 1.0);

    let offset = cd.scaling.center() - &refs.u_ref;
    let input_term = &cd.input_ref_map * offset;
    for j in 0..cd.horizon {
        let mut blk = h.rows_mut(j * n_u, n_u);
        blk += &input_term;
    }
    flops.add(cd.gradient_flops());
    Ok(h)
}

/// Result of one receding-horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcStep {
    /// First-stage physical input.
    pub u0: DVector<f64>,
    pub solution: Solution,
    /// Operations for lifting, gradient assembly, the solve and unscaling.
    pub flops: u64,
}

/// Lift, assemble `h`, solve the Box-QP and return the first input.
pub fn solve_mpc_step(
    p: &LiftedPredictor,
    cd: &CondensedData,
    x_t: &[f64],
    refs: &References,
    cfg: &SolverConfig,
) -> Result<MpcStep> {
    let mut solver = BoxQpSolver::new(cd.dim());
    mpc_step_with(&mut solver, p, cd, x_t, refs, cfg)
}

fn mpc_step_with(
    solver: &mut BoxQpSolver,
    p: &LiftedPredictor,
    cd: &CondensedData,
    x_t: &[f64],
    refs: &References,
    cfg: &SolverConfig,
) -> Result<MpcStep> {
    let mut counter = FlopCounter::new();
    let psi0 = p.lift(x_t)?;
    counter.add(p.observable.lift_flops());
    let h = online_gradient(cd, &psi0, refs, &mut counter)?;
    let cfg = SolverConfig {
        zero_gradient_threshold: Some(cfg.zero_gradient_threshold.unwrap_or(cd.zero_gradient_threshold)),
        ..cfg.clone()
    };
    let solution = solver.solve_parts(&cd.hessian, &h, &cfg, &mut counter, None)?;
    let first = &solution.z_star.as_slice()[..cd.n_u];
    let u0 = if cd.scaling.is_unit() {
        DVector::from_row_slice(first)
    } else {
        counter.add(2 * cd.n_u as u64);
        cd.scaling.to_physical(first)?
    };
    Ok(MpcStep { u0, solution, flops: counter.count() })
}

/// Predictor, condensed data and a private solver workspace.
#[derive(Debug, Clone)]
pub struct MpcController {
    predictor: LiftedPredictor,
    condensed: CondensedData,
    cfg: SolverConfig,
    solver: BoxQpSolver,
}

impl MpcController {
    pub fn new(predictor: LiftedPredictor, condensed: CondensedData, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if predictor.lifted_dim() != condensed.n_psi || predictor.input_dim() != condensed.n_u {
            return Err(Error::dim("condensed data does not match the predictor"));
        }
        let solver = BoxQpSolver::new(condensed.dim());
        Ok(Self { predictor, condensed, cfg, solver })
    }

    pub fn build(predictor: LiftedPredictor, weights: &MpcWeights, scaling: &InputScaling, cfg: SolverConfig) -> Result<Self> {
        let condensed = build_condensed(&predictor, weights, scaling)?;
        Self::new(predictor, condensed, cfg)
    }

    pub fn predictor(&self) -> &LiftedPredictor {
        &self.predictor
    }

    pub fn condensed(&self) -> &CondensedData {
        &self.condensed
    }

    pub fn solver_config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn step(&mut self, x_t: &[f64], refs: &References) -> Result<MpcStep> {
        mpc_step_with(&mut self.solver, &self.predictor, &self.condensed, x_t, refs, &self.cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CertificateDims {
    pub n_u: usize,
    pub n_x: usize,
    pub n_psi: usize,
    pub horizon: usize,
    /// Operations spent evaluating the lifting map.
    pub m_lifting: u64,
}

/// Worst-case operation count of one control step, fixed before any data is seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub dims: CertificateDims,
    pub n: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub lifting_flops: u64,
    /// `2 N n_psi^2 + N(N+1) n_u n_psi / 2 + N n_x n_psi + N n_u^2 + 2n`.
    pub gradient_flops: u64,
    /// `n`, the infinity norm of `h`.
    pub norm_flops: u64,
    /// `5n + 3`, the start point.
    pub init_flops: u64,
    /// `1 + n^3/3 + n^2/2 + n/6 + 2n^2 + 10n + 5n`.
    pub per_iteration_flops: u64,
    pub total_flops: u64,
    /// Operations per second assumed for the time estimate.
    pub flop_rate: f64,
    /// `total_flops / flop_rate`, in seconds.
    pub execution_time: f64,
}

pub fn certificate(dims: CertificateDims, epsilon: f64, flop_rate: f64) -> Result<Certificate> {
    if dims.n_u == 0 || dims.n_x == 0 || dims.n_psi == 0 || dims.horizon == 0 {
        return Err(Error::InvalidInput("certificate dimensions must be positive".into()));
    }
    if !(flop_rate > 0.0) || !flop_rate.is_finite() {
        return Err(Error::InvalidInput(format!("flop rate must be positive, got {flop_rate}")));
    }
    let (nu, nx, np, hz) = (dims.n_u as u64, dims.n_x as u64, dims.n_psi as u64, dims.horizon as u64);
    let n = hz * nu;
    let iterations = boxqp::iteration_count(n as usize, epsilon)?;

    let gradient_flops = 2 * hz * np * np + hz * (hz + 1) * nu * np / 2 + hz * nx * np + hz * nu * nu + 2 * n;
    let norm_flops = n;
    let init_flops = 5 * n + 3;
    let per_iteration_flops =
        1 + linalg::cholesky_flops(n as usize) + 2 * n * n + 10 * n + 5 * n;
    let total_flops = dims.m_lifting
        + gradient_flops
        + norm_flops
        + init_flops
        + iterations as u64 * per_iteration_flops;
    Ok(Certificate {
        dims,
        n: n as usize,
        epsilon,
        iterations,
        lifting_flops: dims.m_lifting,
        gradient_flops,
        norm_flops,
        init_flops,
        per_iteration_flops,
        total_flops,
        flop_rate,
        execution_time: total_flops as f64 / flop_rate,
    })
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# kmpc certificate v1")?;
        writeln!(f, "n_u = {}", self.dims.n_u)?;
        writeln!(f, "n_x = {}", self.dims.n_x)?;
        writeln!(f, "n_psi = {}", self.dims.n_psi)?;
        writeln!(f, "horizon = {}", self.dims.horizon)?;
        writeln!(f, "n = {}", self.n)?;
        writeln!(f, "epsilon = {:e}", self.epsilon)?;
        writeln!(f, "iterations = {}", self.iterations)?;
        writeln!(f, "flops.lifting = {}", self.lifting_flops)?;
        writeln!(f, "flops.gradient = {}", self.gradient_flops)?;
        writeln!(f, "flops.norm = {}", self.norm_flops)?;
        writeln!(f, "flops.init = {}", self.init_flops)?;
        writeln!(f, "flops.per_iteration = {}", self.per_iteration_flops)?;
        writeln!(f, "flops.iterations_total = {}", self.iterations as u64 * self.per_iteration_flops)?;
        writeln!(f, "flops.total = {}", self.total_flops)?;
        writeln!(f, "flop_rate = {:e}", self.flop_rate)?;
        writeln!(f, "execution_time_s = {:.6}", self.execution_time)
    }
}
