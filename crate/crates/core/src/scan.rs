//! Offset-grid transfer maps and bandwidth summaries.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::propagate::{efficiency_of, two_spin_propagate, SpinSystem};
use crate::spinops::Mat4;
use crate::waveform::PulseWaveform;

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub nu_min: f64,
    pub nu_max: f64,
    pub grid_points: usize,
    pub coupling_hz: f64,
    pub time_budget: f64,
    /// One cycle of the mixing sequence; applied in whole repetitions.
    pub sequence: PulseWaveform,
    pub description: String,
}

impl ScanConfig {
    pub fn axis(&self) -> Vec<f64> {
        let n = self.grid_points;
        (0..n)
            .map(|k| self.nu_min + (self.nu_max - self.nu_min) * k as f64 / (n - 1) as f64)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 points per axis, got {}",
                self.grid_points
            )));
        }
        if !(self.nu_max > self.nu_min) {
            return Err(Error::InvalidParameter(format!(
                "empty offset range [{}, {}]",
                self.nu_min, self.nu_max
            )));
        }
        if !(self.time_budget > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time budget must be positive, got {}",
                self.time_budget
            )));
        }
        let sequence = self.sequence.duration();
        if !(sequence > 0.0) {
            return Err(Error::InvalidParameter("mixing sequence is empty".into()));
        }
        if sequence > self.time_budget {
            return Err(Error::SequenceExceedsBudget {
                sequence,
                budget: self.time_budget,
            });
        }
        Ok(())
    }

    /// Number of whole cycles that fit in the budget.
    pub fn max_cycles(&self) -> usize {
        (self.time_budget / self.sequence.duration() * (1.0 + 1e-12)).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapMetadata {
    pub sequence: String,
    pub coupling_hz: f64,
    pub time_budget_s: f64,
    pub cycle_duration_s: f64,
    pub grid_points: usize,
    pub nu_min_hz: f64,
    pub nu_max_hz: f64,
    pub code_version: String,
}

/// Best transfer over whole cycles within the budget, for every offset pair.
/// Matrices are indexed `[s][i]`: rows follow `nu_s`, columns `nu_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMap {
    pub nu_i: Vec<f64>,
    pub nu_s: Vec<f64>,
    pub best_efficiency: Vec<Vec<f64>>,
    pub best_time: Vec<Vec<f64>>,
    pub metadata: MapMetadata,
}

impl TransferMap {
    pub fn efficiency(&self, i: usize, s: usize) -> f64 {
        self.best_efficiency[s][i]
    }

    pub fn is_empty(&self) -> bool {
        self.nu_i.is_empty() || self.nu_s.is_empty()
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "nu_I_hz,nu_S_hz,best_efficiency,best_time_s")?;
        for (s, nu_s) in self.nu_s.iter().enumerate() {
            for (i, nu_i) in self.nu_i.iter().enumerate() {
                writeln!(
                    out,
                    "{:.3},{:.3},{:.9},{:.9e}",
                    nu_i, nu_s, self.best_efficiency[s][i], self.best_time[s][i]
                )?;
            }
        }
        Ok(())
    }

    pub fn metadata_toml(&self) -> String {
        toml::to_string(&self.metadata).expect("metadata serializes")
    }
}

fn best_over_cycles(cycle: &Mat4, cycles: usize, cycle_duration: f64) -> (f64, f64) {
    let mut u = Mat4::identity();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for n in 1..=cycles {
        u = cycle * u;
        let e = efficiency_of(&u);
        if e > best.0 {
            best = (e, n as f64 * cycle_duration);
        }
    }
    best
}

/// Scans the offset grid. `jobs = None` uses the global rayon pool; results
/// are placed by index so the output does not depend on scheduling.
pub fn offset_scan(cfg: &ScanConfig, jobs: Option<usize>) -> Result<TransferMap> {
    cfg.validate()?;
    let axis = cfg.axis();
    let n = axis.len();
    let cycles = cfg.max_cycles();
    let duration = cfg.sequence.duration();

    let point = |idx: usize| -> Result<(f64, f64)> {
        let (s, i) = (idx / n, idx % n);
        let sys = SpinSystem::from_hz(axis[i], axis[s], cfg.coupling_hz)?;
        let cycle = two_spin_propagate(&cfg.sequence, &sys);
        Ok(best_over_cycles(&cycle.matrix, cycles, duration))
    };
    let run = || -> Result<Vec<(f64, f64)>> { (0..n * n).into_par_iter().map(point).collect() };
    let flat = match jobs {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let best_efficiency = flat
        .chunks(n)
        .map(|row| row.iter().map(|p| p.0).collect())
        .collect();
    let best_time = flat
        .chunks(n)
        .map(|row| row.iter().map(|p| p.1).collect())
        .collect();
    Ok(TransferMap {
        nu_i: axis.clone(),
        nu_s: axis,
        best_efficiency,
        best_time,
        metadata: MapMetadata {
            sequence: cfg.description.clone(),
            coupling_hz: cfg.coupling_hz,
            time_budget_s: cfg.time_budget,
            cycle_duration_s: duration,
            grid_points: cfg.grid_points,
            nu_min_hz: cfg.nu_min,
            nu_max_hz: cfg.nu_max,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthSummary {
    /// Largest `W` such that every pair inside `[-W, W]^2` with
    /// `|nu_I - nu_S| <= separation_cap` reaches the threshold.
    pub half_width_hz: f64,
    /// Fraction of all grid points at or above the threshold.
    pub area_fraction: f64,
    pub threshold: f64,
    pub separation_cap_hz: f64,
}

pub const DEFAULT_SEPARATION_CAP_HZ: f64 = 15e3;

pub fn bandwidth_summary(
    map: &TransferMap,
    threshold: f64,
    separation_cap_hz: f64,
) -> Result<BandwidthSummary> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let slack = 1e-9;
    let mut radii: Vec<f64> = map.nu_i.iter().chain(&map.nu_s).map(|v| v.abs()).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let band_ok = |w: f64| {
        map.nu_s.iter().enumerate().all(|(s, nu_s)| {
            map.nu_i.iter().enumerate().all(|(i, nu_i)| {
                nu_i.abs() > w + slack
                    || nu_s.abs() > w + slack
                    || (nu_i - nu_s).abs() > separation_cap_hz + slack
                    || map.best_efficiency[s][i] >= threshold
            })
        })
    };
    let mut half_width_hz = 0.0;
    for &w in &radii {
        if band_ok(w) {
            half_width_hz = w;
        } else {
            break;
        }
    }

    let total = map.nu_i.len() * map.nu_s.len();
    let above = map
        .best_efficiency
        .iter()
        .flatten()
        .filter(|e| **e >= threshold)
        .count();
    Ok(BandwidthSummary {
        half_width_hz,
        area_fraction: above as f64 / total as f64,
        threshold,
        separation_cap_hz,
    })
}
