//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use kmpc_core::condensed::{InputScaling, MpcWeights, References};
use kmpc_core::koopman::{Dictionary, LiftedPredictor, ObservableMap, StateConstant, StateOnly};
use kmpc_core::BoxQp;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// `M'M + delta I` with entries of `h` spread so that some solutions hit the
/// box and some stay inside.
pub fn random_pd_qp(rng: &mut ChaCha8Rng, n: usize) -> BoxQp {
    let m = uniform_matrix(rng, n, n, -1.0, 1.0);
    let delta = rng.random_range(0.05..1.0);
    let h_scale = rng.random_range(0.1..3.0) * n as f64;
    let hessian = m.transpose() * &m + DMatrix::identity(n, n) * delta;
    let hessian = (&hessian + hessian.transpose()) * 0.5;
    let gradient = DVector::from_fn(n, |_, _| rng.random_range(-h_scale..h_scale));
    BoxQp::new(hessian, gradient).unwrap()
}

pub fn objective(hessian: &DMatrix<f64>, gradient: &DVector<f64>, z: &DVector<f64>) -> f64 {
    0.5 * z.dot(&(hessian * z)) + gradient.dot(z)
}

/// Exact minimizer of a strictly convex box QP by trying every assignment of
/// each coordinate to lower bound, upper bound or free (`3^n` candidates) and
/// keeping the best feasible one.
pub fn enumerate_box_qp(hessian: &DMatrix<f64>, gradient: &DVector<f64>) -> DVector<f64> {
    let n = gradient.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut pattern = vec![0u8; n];
    loop {
        if let Some(z) = candidate(hessian, gradient, &pattern) {
            let f = objective(hessian, gradient, &z);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, z));
            }
        }
        // next pattern in base 3
        let mut i = 0;
        while i < n && pattern[i] == 2 {
            pattern[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        pattern[i] += 1;
    }
    best.expect("the all-bounds patterns are always feasible").1
}

fn candidate(hessian: &DMatrix<f64>, gradient: &DVector<f64>, pattern: &[u8]) -> Option<DVector<f64>> {
    let n = gradient.len();
    let mut z = DVector::zeros(n);
    let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 0).collect();
    for i in 0..n {
        match pattern[i] {
            1 => z[i] = -1.0,
            2 => z[i] = 1.0,
            _ => {}
        }
    }
    if !free.is_empty() {
        let k = free.len();
        let hff = DMatrix::from_fn(k, k, |a, b| hessian[(free[a], free[b])]);
        let rhs = DVector::from_fn(k, |a, _| {
            let i = free[a];
            -(gradient[i] + (0..n).filter(|j| pattern[*j] != 0).map(|j| hessian[(i, j)] * z[j]).sum::<f64>())
        });
        let zf = hff.lu().solve(&rhs)?;
        for (a, &i) in free.iter().enumerate() {
            if zf[a].abs() > 1.0 {
                return None;
            }
            z[i] = zf[a];
        }
    }
    Some(z)
}

/// Random predictor with `n_psi` in `{n_x, n_x + 1}` and an arbitrary output map.
pub fn random_predictor(rng: &mut ChaCha8Rng, n_x: usize, with_constant: bool, n_u: usize) -> LiftedPredictor {
    let dict: Arc<dyn Dictionary> = if with_constant { Arc::new(StateConstant) } else { Arc::new(StateOnly) };
    let obs = ObservableMap::new(n_x, dict).unwrap();
    let n_psi = obs.lifted_dim();
    let a = uniform_matrix(rng, n_psi, n_psi, -0.7, 0.7);
    let b = uniform_matrix(rng, n_psi, n_u, -1.0, 1.0);
    let c = uniform_matrix(rng, n_x, n_psi, -1.0, 1.0);
    LiftedPredictor::new(a, b, c, obs).unwrap()
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n, -1.0, 1.0);
    let s = m.transpose() * m + DMatrix::identity(n, n) * shift;
    (&s + s.transpose()) * 0.5
}

/// `1/2 sum_{k=1}^{N} |C psi_k - x_r|^2_{W_k} + 1/2 sum_{k=0}^{N-1} |u_k - u_r|^2_{W_u}`
/// by explicit state rollout, with `u = center + half_range .* z`.
pub fn rollout_objective(
    p: &LiftedPredictor,
    w: &MpcWeights,
    refs: &References,
    scaling: &InputScaling,
    psi0: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    let n_u = p.input_dim();
    let u = scaling.to_physical(z.as_slice()).unwrap();
    let mut psi = psi0.clone();
    let mut cost = 0.0;
    for k in 0..w.horizon {
        let uk = u.rows(k * n_u, n_u).into_owned();
        let du = &uk - &refs.u_ref;
        cost += 0.5 * du.dot(&(&w.w_u * &du));
        psi = &p.a * &psi + &p.b * &uk;
        let dx = &p.c * &psi - &refs.x_ref;
        let wk = if k + 1 == w.horizon { &w.w_n } else { &w.w_x };
        cost += 0.5 * dx.dot(&(wk * &dx));
    }
    cost
}
