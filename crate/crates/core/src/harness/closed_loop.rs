use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::DVector;

use super::config::ExperimentConfig;
use crate::condensed::{MpcController, References};
use crate::error::{Error, Result};
use crate::io::{read_trajectory, TrajectoryWriter};
use crate::kdv::{initial_profile, KdvPlant, PlantState};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub reference: f64,
    /// Plant state at `t`, before `u` is applied.
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub duality_gap: f64,
    pub flops: u64,
}

impl StepRecord {
    pub fn spatial_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClosedLoopLog {
    pub dt: f64,
    pub records: Vec<StepRecord>,
}

const DIAGNOSTICS_HEADER: &str = "t,reference,mean,iterations,duality_gap,flops";

impl ClosedLoopLog {
    pub fn write_trajectory<W: Write>(&self, w: W) -> Result<W> {
        let (nodes, inputs) = self.records.first().map_or((0, 0), |r| (r.y.len(), r.u.len()));
        let mut tw = TrajectoryWriter::new(w, nodes, inputs)?;
        for r in &self.records {
            tw.record(r.t, &r.y, &r.u)?;
        }
        tw.finish()
    }

    pub fn write_diagnostics<W: Write>(&self, mut w: W) -> Result<W> {
        writeln!(w, "{DIAGNOSTICS_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.t,
                r.reference,
                r.spatial_mean(),
                r.iterations,
                r.duality_gap,
                r.flops
            )?;
        }
        w.flush()?;
        Ok(w)
    }

    /// Rebuild a log from the two CSV files written by a simulation run.
    pub fn read<T: BufRead, D: BufRead>(trajectory: T, diagnostics: D, dt: f64) -> Result<Self> {
        let rows = read_trajectory(trajectory)?;
        let mut lines = diagnostics.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == DIAGNOSTICS_HEADER => {}
            _ => {
                return Err(Error::Parse { line: 1, detail: format!("expected header {DIAGNOSTICS_HEADER:?}") });
            }
        }
        let mut records = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let line = i + 2;
            let parse_err = |detail: String| Error::Parse { line, detail };
            let text = lines
                .next()
                .ok_or_else(|| parse_err("diagnostics file is shorter than the trajectory".into()))??;
            let f: Vec<&str> = text.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(parse_err(format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}")));
            records.push(StepRecord {
                t: row.t,
                reference: num(f[1])?,
                y: row.y,
                u: row.u,
                iterations: f[3].parse().map_err(|e| parse_err(format!("{:?}: {e}", f[3])))?,
                duality_gap: num(f[4])?,
                flops: f[5].parse().map_err(|e| parse_err(format!("{:?}: {e}", f[5])))?,
            });
        }
        Ok(Self { dt, records })
    }
}

/// A run that stopped early; `log` holds every step completed before `error`.
#[derive(Debug)]
pub struct ClosedLoopFailure {
    pub log: ClosedLoopLog,
    pub error: Error,
}

impl fmt::Display for ClosedLoopFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "closed loop aborted after {} steps: {}", self.log.records.len(), self.error)
    }
}

impl std::error::Error for ClosedLoopFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Receding-horizon simulation against the KdV plant with the reference
/// schedule from `cfg`. The spatial profile is measured in full at each step.
pub fn run_closed_loop(
    cfg: &ExperimentConfig,
    controller: &mut MpcController,
) -> std::result::Result<ClosedLoopLog, ClosedLoopFailure> {
    let mut log = ClosedLoopLog { dt: cfg.plant.dt, records: Vec::new() };
    match drive(cfg, controller, &mut log) {
        Ok(()) => Ok(log),
        Err(error) => Err(ClosedLoopFailure { log, error }),
    }
}

fn drive(cfg: &ExperimentConfig, controller: &mut MpcController, log: &mut ClosedLoopLog) -> Result<()> {
    cfg.validate()?;
    let n_x = cfg.plant.nodes;
    let n_u = cfg.plant.input_dim();
    if controller.predictor().state_dim() != n_x || controller.predictor().input_dim() != n_u {
        return Err(Error::Config("predictor dimensions do not match the plant".into()));
    }
    let mut plant = KdvPlant::new(cfg.plant.clone())?;
    let mut state: PlantState = initial_profile(&cfg.plant, &cfg.reference.initial_coeffs)?;
    let steps = cfg.closed_loop_steps();
    log.records.reserve(steps);
    let mut refs = References::constant(n_x, f64::NAN, n_u);
    for k in 0..steps {
        let value = cfg.reference_at(k);
        if refs.x_ref[0] != value {
            refs.x_ref = DVector::from_element(n_x, value);
        }
        let step = controller.step(&state.y, &refs)?;
        let next = plant.step(&state, step.u0.as_slice())?;
        log.records.push(StepRecord {
            t: k as f64 * cfg.plant.dt,
            reference: value,
            y: std::mem::replace(&mut state, next).y,
            u: step.u0.iter().copied().collect(),
            iterations: step.solution.iterations,
            duality_gap: step.solution.duality_gap,
            flops: step.flops,
        });
    }
    Ok(())
}
