use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::kdv::{initial_profile, KdvPlant};
use crate::koopman::SnapshotDataset;

/// Snapshot data plus the number of trajectories that had to be redrawn
/// after a plant blow-up.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub dataset: SnapshotDataset,
    pub resampled: usize,
}

struct Trajectory {
    x: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    x_plus: Vec<Vec<f64>>,
}

/// Random-input trajectories of the KdV plant.
///
/// Trajectory `i` draws from a ChaCha8 stream seeded with `seed ^ i`, and a
/// redraw after a blow-up switches to stream `attempt`, so the output does not
/// depend on the number of threads or on scheduling order.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    let results: Vec<Result<(Trajectory, usize)>> = (0..cfg.data.n_trajectories)
        .into_par_iter()
        .map(|idx| simulate_trajectory(cfg, idx))
        .collect();

    let n_x = cfg.plant.nodes;
    let n_u = cfg.plant.input_dim();
    let n_d = cfg.data.n_trajectories * cfg.data.samples_per_trajectory;
    let mut x = DMatrix::zeros(n_x, n_d);
    let mut u = DMatrix::zeros(n_u, n_d);
    let mut x_plus = DMatrix::zeros(n_x, n_d);
    let mut resampled = 0;
    let mut col = 0;
    for r in results {
        let (traj, redraws) = r?;
        resampled += redraws;
        for k in 0..traj.x.len() {
            x.column_mut(col).copy_from_slice(&traj.x[k]);
            u.column_mut(col).copy_from_slice(&traj.u[k]);
            x_plus.column_mut(col).copy_from_slice(&traj.x_plus[k]);
            col += 1;
        }
    }
    if resampled > 0 {
        log::warn!("{resampled} trajectories diverged and were redrawn");
    }
    Ok(GeneratedData { dataset: SnapshotDataset::new(x, u, x_plus)?, resampled })
}

fn simulate_trajectory(cfg: &ExperimentConfig, idx: usize) -> Result<(Trajectory, usize)> {
    let mut plant = KdvPlant::new(cfg.plant.clone())?;
    let n_u = cfg.plant.input_dim();
    let mut last_err = None;
    for attempt in 0..cfg.data.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.data.seed ^ idx as u64);
        rng.set_stream(attempt);
        let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..=1.0)).collect();
        let mut state = initial_profile(&cfg.plant, &coeffs)?;
        let mut traj = Trajectory {
            x: Vec::with_capacity(cfg.data.samples_per_trajectory),
            u: Vec::with_capacity(cfg.data.samples_per_trajectory),
            x_plus: Vec::with_capacity(cfg.data.samples_per_trajectory),
        };
        let mut diverged = false;
        for _ in 0..cfg.data.samples_per_trajectory {
            let input: Vec<f64> = (0..n_u).map(|_| rng.random_range(-1.0..=1.0)).collect();
            match plant.step(&state, &input) {
                Ok(next) => {
                    traj.x.push(state.y);
                    traj.u.push(input);
                    traj.x_plus.push(next.y.clone());
                    state = next;
                }
                Err(e @ Error::PlantInstability { .. }) => {
                    log::debug!("trajectory {idx} attempt {attempt} diverged: {e}");
                    last_err = Some(e);
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !diverged {
            return Ok((traj, attempt as usize));
        }
    }
    Err(last_err.expect("max_attempts >= 1"))
}
