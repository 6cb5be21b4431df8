use std::collections::BTreeMap;
use std::fmt;

use super::closed_loop::ClosedLoopLog;
use crate::error::{Error, Result};

/// Settling band as a fraction of the reference step size.
pub const SETTLING_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMetrics {
    pub reference: f64,
    pub start_time: f64,
    pub steps: usize,
    /// Spatial mean at the last step of the segment.
    pub terminal_mean: f64,
    pub terminal_error: f64,
    /// Time from the segment start after which the spatial mean stays within
    /// the band around the reference; `None` if it never does.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub steps: usize,
    pub segments: Vec<SegmentMetrics>,
    pub max_abs_input: f64,
    /// Solver iterations -> number of steps.
    pub iteration_histogram: BTreeMap<usize, usize>,
    pub total_flops: u64,
    pub max_step_flops: u64,
    pub max_duality_gap: f64,
}

impl Metrics {
    pub fn max_terminal_error(&self) -> f64 {
        self.segments.iter().map(|s| s.terminal_error).fold(0.0, f64::max)
    }
}

pub fn compute_metrics(log: &ClosedLoopLog) -> Result<Metrics> {
    let records = &log.records;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let means: Vec<f64> = records.iter().map(|r| r.spatial_mean()).collect();

    let mut segments = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let reference = records[start].reference;
        let end = records[start..].iter().position(|r| r.reference != reference).map_or(records.len(), |p| start + p);
        let previous = if start == 0 { means[0] } else { records[start - 1].reference };
        let band = (SETTLING_BAND * (reference - previous).abs()).max(1e-12);
        let within = |k: usize| (means[k] - reference).abs() <= band;
        let settling_time = if within(end - 1) {
            let first_settled = (start..end).rev().take_while(|&k| within(k)).last().unwrap_or(end - 1);
            Some(records[first_settled].t - records[start].t)
        } else {
            None
        };
        let terminal_mean = means[end - 1];
        segments.push(SegmentMetrics {
            reference,
            start_time: records[start].t,
            steps: end - start,
            terminal_mean,
            terminal_error: (terminal_mean - reference).abs(),
            settling_time,
        });
        start = end;
    }

    let mut iteration_histogram = BTreeMap::new();
    for r in records {
        *iteration_histogram.entry(r.iterations).or_insert(0) += 1;
    }
    Ok(Metrics {
        steps: records.len(),
        segments,
        max_abs_input: records.iter().flat_map(|r| r.u.iter()).fold(0.0, |m, u| m.max(u.abs())),
        iteration_histogram,
        total_flops: records.iter().map(|r| r.flops).sum(),
        max_step_flops: records.iter().map(|r| r.flops).max().unwrap_or(0),
        max_duality_gap: records.iter().map(|r| r.duality_gap).fold(0.0, f64::max),
    })
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "steps = {}", self.steps)?;
        for (i, s) in self.segments.iter().enumerate() {
            let settling = s.settling_time.map_or("none".to_string(), |t| format!("{t:.2}"));
            writeln!(
                f,
                "segment {i}: t0 = {:.2} s, reference = {}, terminal mean = {:.6}, terminal error = {:.3e}, settling time = {settling} s",
                s.start_time, s.reference, s.terminal_mean, s.terminal_error
            )?;
        }
        writeln!(f, "max |u| = {:.6}", self.max_abs_input)?;
        let hist: Vec<String> = self.iteration_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        writeln!(f, "iterations (count:steps) = {}", hist.join(" "))?;
        writeln!(f, "max duality gap = {:.3e}", self.max_duality_gap)?;
        writeln!(f, "flops total = {}", self.total_flops)?;
        writeln!(f, "flops max per step = {}", self.max_step_flops)
    }
}
