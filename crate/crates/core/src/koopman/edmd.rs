use nalgebra::{DMatrix, DVector};

use super::dictionary::ObservableMap;
use crate::error::{Error, Result};
use crate::linalg::lstsq_min_norm;

/// Transition triples `(x_j, u_j, x_j^+)` stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
}

impl SnapshotDataset {
    pub fn new(x: DMatrix<f64>, u: DMatrix<f64>, x_plus: DMatrix<f64>) -> Result<Self> {
        let n_d = x.ncols();
        if u.ncols() != n_d || x_plus.ncols() != n_d {
            return Err(Error::dim(format!(
                "dataset column counts differ: X {}, U {}, X+ {}",
                n_d,
                u.ncols(),
                x_plus.ncols()
            )));
        }
        if x_plus.nrows() != x.nrows() {
            return Err(Error::dim("X and X+ must have the same number of rows"));
        }
        if n_d == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { x, u, x_plus })
    }

    pub fn state_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lifted data matrix with one row per sample (`N_d x n_psi`).
    fn lifted_rows(&self, obs: &ObservableMap, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n_psi = obs.lifted_dim();
        let mut out = DMatrix::zeros(states.ncols(), n_psi);
        let mut psi = vec![0.0; n_psi];
        let mut x = vec![0.0; states.nrows()];
        for j in 0..states.ncols() {
            x.iter_mut().zip(states.column(j).iter()).for_each(|(d, s)| *d = *s);
            obs.lift_into(&x, &mut psi)?;
            for (k, v) in psi.iter().enumerate() {
                out[(j, k)] = *v;
            }
        }
        Ok(out)
    }

    fn check_observable(&self, obs: &ObservableMap) -> Result<()> {
        if obs.state_dim() != self.state_dim() {
            return Err(Error::dim(format!(
                "observable expects n_x = {}, dataset has {}",
                obs.state_dim(),
                self.state_dim()
            )));
        }
        Ok(())
    }
}

/// Least-squares fit of `psi(x+) ~= A psi(x) + B u` over all samples,
/// minimum-Frobenius-norm among minimizers.
pub fn fit_predictor(data: &SnapshotDataset, obs: &ObservableMap) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.check_observable(obs)?;
    let n_psi = obs.lifted_dim();
    let n_u = data.input_dim();

    let lifted = data.lifted_rows(obs, &data.x)?;
    let mut design = DMatrix::zeros(data.len(), n_psi + n_u);
    design.columns_mut(0, n_psi).copy_from(&lifted);
    design.columns_mut(n_psi, n_u).copy_from(&data.u.transpose());
    drop(lifted);
    let targets = data.lifted_rows(obs, &data.x_plus)?;

    // rows of the solution are [A B]^T
    let sol = lstsq_min_norm(design, targets)?;
    let a = sol.rows(0, n_psi).transpose();
    let b = sol.rows(n_psi, n_u).transpose();
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    /// `C = [I, 0]`; requires a dictionary that leads with the state.
    IdentityProjection,
    /// Minimum-norm least-squares projection of `x` onto the span of `psi(x)`.
    LeastSquares,
}

impl std::str::FromStr for OutputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "identity_projection" => Ok(Self::IdentityProjection),
            "least-squares" | "least_squares" => Ok(Self::LeastSquares),
            _ => Err(Error::Config(format!("unknown output mode {s:?}"))),
        }
    }
}

pub fn fit_output(data: Option<&SnapshotDataset>, obs: &ObservableMap, mode: OutputMode) -> Result<DMatrix<f64>> {
    let n_x = obs.state_dim();
    let n_psi = obs.lifted_dim();
    match mode {
        OutputMode::IdentityProjection => {
            if !obs.leads_with_state() {
                return Err(Error::Config(format!(
                    "identity projection needs a dictionary leading with the state; {:?} does not",
                    obs.kind()
                )));
            }
            let mut c = DMatrix::zeros(n_x, n_psi);
            c.columns_mut(0, n_x).fill_with_identity();
            Ok(c)
        }
        OutputMode::LeastSquares => {
            let data = data.ok_or(Error::EmptyDataset)?;
            if data.is_empty() {
                return Err(Error::EmptyDataset);
            }
            data.check_observable(obs)?;
            let design = data.lifted_rows(obs, &data.x)?;
            let sol = lstsq_min_norm(design, data.x.transpose())?;
            Ok(sol.transpose())
        }
    }
}

/// Linear predictor in lifted coordinates: `psi+ = A psi + B u`, `x = C psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPredictor {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub observable: ObservableMap,
}

impl LiftedPredictor {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, observable: ObservableMap) -> Result<Self> {
        let n_psi = observable.lifted_dim();
        if a.shape() != (n_psi, n_psi) {
            return Err(Error::dim(format!("A is {:?}, expected {n_psi}x{n_psi}", a.shape())));
        }
        if b.nrows() != n_psi || b.ncols() == 0 {
            return Err(Error::dim(format!("B is {:?}, expected {n_psi} rows", b.shape())));
        }
        if c.shape() != (observable.state_dim(), n_psi) {
            return Err(Error::dim(format!(
                "C is {:?}, expected {}x{n_psi}",
                c.shape(),
                observable.state_dim()
            )));
        }
        Ok(Self { a, b, c, observable })
    }

    /// EDMD fit of `(A, B)` plus the chosen output map.
    pub fn fit(data: &SnapshotDataset, observable: ObservableMap, output: OutputMode) -> Result<Self> {
        let (a, b) = fit_predictor(data, &observable)?;
        let c = fit_output(Some(data), &observable, output)?;
        Self::new(a, b, c, observable)
    }

    pub fn state_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn lifted_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn lift(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.observable.lift(x)
    }

    pub fn predict(&self, psi: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if psi.len() != self.lifted_dim() || u.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "predict: psi has length {} (need {}), u has length {} (need {})",
                psi.len(),
                self.lifted_dim(),
                u.len(),
                self.input_dim()
            )));
        }
        Ok(&self.a * psi + &self.b * u)
    }

    pub fn output(&self, psi: &DVector<f64>) -> DVector<f64> {
        &self.c * psi
    }

    /// Root-mean-square of `||C psi_k - truth_k||`, `k = 1..=H`, with
    /// `psi_0 = lift(x0)` propagated by [`predict`](Self::predict). Zero for an
    /// empty horizon.
    pub fn rollout_error(&self, x0: &[f64], inputs: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<f64> {
        if inputs.len() != truth.len() {
            return Err(Error::dim(format!(
                "rollout: {} inputs but {} truth states",
                inputs.len(),
                truth.len()
            )));
        }
        if inputs.is_empty() {
            return Ok(0.0);
        }
        let mut psi = self.lift(x0)?;
        let mut acc = 0.0;
        for (u, y) in inputs.iter().zip(truth) {
            psi = self.predict(&psi, u)?;
            let out = self.output(&psi);
            if out.len() != y.len() {
                return Err(Error::dim("rollout: truth state has wrong length"));
            }
            acc += (out - y).norm_squared();
        }
        Ok((acc / inputs.len() as f64).sqrt())
    }
}

/// Relative norm of the least-squares normal-equation residual
/// `(Psi+ - A Psi - B U) [Psi; U]^T`, scaled by `||Psi+|| ||[Psi; U]||`.
pub fn normal_equation_residual(
    data: &SnapshotDataset,
    obs: &ObservableMap,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<f64> {
    let psi = data.lifted_rows(obs, &data.x)?.transpose();
    let psi_plus = data.lifted_rows(obs, &data.x_plus)?.transpose();
    let mut z = DMatrix::zeros(psi.nrows() + data.input_dim(), data.len());
    z.rows_mut(0, psi.nrows()).copy_from(&psi);
    z.rows_mut(psi.nrows(), data.input_dim()).copy_from(&data.u);
    let resid = &psi_plus - a * &psi - b * &data.u;
    let grad = resid * z.transpose();
    Ok(grad.norm() / (psi_plus.norm() * z.norm()).max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::koopman::dictionary::{ConstantOnly, StateOnly};

    fn identity_obs(n_x: usize) -> ObservableMap {
        ObservableMap::new(n_x, Arc::new(StateOnly)).unwrap()
    }

    #[test]
    fn single_sample_minimum_norm() {
        let data = SnapshotDataset::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 3.0),
        )
        .unwrap();
        let (a, b) = fit_predictor(&data, &identity_obs(1)).unwrap();
        assert!((a[(0, 0)] - 1.5).abs() < 1e-12);
        assert!((b[(0, 0)] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn static_data_gives_identity_and_zero_input_gain() {
        // X+ = X, U = 0: A = I on the excited subspace, B = 0
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, 1.0]);
        let data = SnapshotDataset::new(x.clone(), DMatrix::zeros(1, 3), x).unwrap();
        let (a, b) = fit_predictor(&data, &identity_obs(2)).unwrap();
        assert!((a - DMatrix::<f64>::identity(2, 2)).norm() < 1e-10);
        assert!(b.norm() < 1e-12);
    }

    #[test]
    fn output_identity_projection() {
        let obs = ObservableMap::from_name("shifted-quadratic", 2).unwrap();
        assert_eq!(obs.lifted_dim(), 7);
        let c = fit_output(None, &ObservableMap::from_name("state-constant", 2).unwrap(), OutputMode::IdentityProjection).unwrap();
        // n_x = 2, n_psi = 3
        assert_eq!(c, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
        let c = fit_output(None, &obs, OutputMode::IdentityProjection).unwrap();
        assert_eq!(c.columns(0, 2), DMatrix::<f64>::identity(2, 2));
        assert_eq!(c.columns(2, 5).amax(), 0.0);
    }

    #[test]
    fn output_least_squares_constant_lifting_is_mean() {
        let obs = ObservableMap::new(1, Arc::new(ConstantOnly)).unwrap();
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        let data = SnapshotDataset::new(x.clone(), DMatrix::zeros(1, 2), x).unwrap();
        let c = fit_output(Some(&data), &obs, OutputMode::LeastSquares).unwrap();
        assert!((c[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(fit_output(None, &obs, OutputMode::IdentityProjection).is_err());
    }

    #[test]
    fn output_least_squares_attains_zero_residual_when_state_leads() {
        let obs = ObservableMap::shifted_quadratic(3).unwrap();
        let x = DMatrix::from_fn(3, 20, |i, j| ((i * 5 + j * 3) % 7) as f64 * 0.3 - 0.9);
        let data = SnapshotDataset::new(x.clone(), DMatrix::zeros(1, 20), x.clone()).unwrap();
        let c = fit_output(Some(&data), &obs, OutputMode::LeastSquares).unwrap();
        for j in 0..20 {
            let psi = obs.lift(x.column(j).as_slice()).unwrap();
            assert!((&c * psi - x.column(j)).amax() < 1e-9);
        }
    }

    #[test]
    fn predict_examples() {
        let obs = ObservableMap::new(2, Arc::new(StateOnly)).unwrap();
        let p = LiftedPredictor::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            obs.clone(),
        )
        .unwrap();
        let out = p.predict(&DVector::from_row_slice(&[1.0, 2.0]), &DVector::from_row_slice(&[3.0])).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 3.0]);
        assert_eq!(p.predict(&DVector::zeros(2), &DVector::zeros(1)).unwrap(), DVector::zeros(2));
        assert!(p.predict(&DVector::zeros(3), &DVector::zeros(1)).is_err());

        let ident = LiftedPredictor::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), DMatrix::identity(2, 2), obs).unwrap();
        let psi = DVector::from_row_slice(&[0.3, -4.0]);
        assert_eq!(ident.predict(&psi, &DVector::from_row_slice(&[7.0])).unwrap(), psi);
    }

    #[test]
    fn rollout_error_examples() {
        let p = LiftedPredictor::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            identity_obs(1),
        )
        .unwrap();
        let u = vec![DVector::zeros(1); 2];
        let truth = vec![DVector::from_element(1, 1.0); 2];
        let e = p.rollout_error(&[1.0], &u, &truth).unwrap();
        let expected = ((0.25 + 0.5625) / 2.0f64).sqrt();
        assert!((e - expected).abs() < 1e-15);
        assert!((e - 0.6374).abs() < 1e-4);
        assert_eq!(p.rollout_error(&[1.0], &[], &[]).unwrap(), 0.0);
        assert!(p.rollout_error(&[1.0], &u, &truth[..1]).is_err());

        // self-generated truth
        let self_truth = vec![DVector::from_element(1, 0.5), DVector::from_element(1, 0.25)];
        assert!(p.rollout_error(&[1.0], &u, &self_truth).unwrap() < 1e-10);
    }

    #[test]
    fn empty_and_mismatched_datasets_rejected() {
        assert!(matches!(
            SnapshotDataset::new(DMatrix::zeros(2, 0), DMatrix::zeros(1, 0), DMatrix::zeros(2, 0)),
            Err(Error::EmptyDataset)
        ));
        assert!(SnapshotDataset::new(DMatrix::zeros(2, 3), DMatrix::zeros(1, 2), DMatrix::zeros(2, 3)).is_err());
    }
}
