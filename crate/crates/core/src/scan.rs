//! Frequency sweeps with checkpointing and the predicted-resonance overlay.

use crate::clock::Stopwatch;
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driving::DrivingLaw;
use crate::error::{Error, Result};
use crate::perturbation::TableRow;
use crate::propagator::{propagate, ObservationGrid, PropagationConfig};
use crate::spectrum::Operators;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub omega: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub e0: f64,
    pub norm_drift: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanFailure {
    pub omega: f64,
    pub message: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ScanOutcome {
    /// Sorted by frequency.
    pub records: Vec<ScanRecord>,
    pub failures: Vec<ScanFailure>,
    /// Points taken from the checkpoint rather than recomputed.
    pub resumed: usize,
}

/// What a checkpoint was computed for; resuming requires an exact match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanFingerprint {
    pub law: DrivingLaw,
    pub cutoff: f64,
    pub initial_label: usize,
    pub tau_run: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub samples_per_period: usize,
    pub init: crate::propagator::InitMode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Entry {
    Header(ScanFingerprint),
    Record(ScanRecord),
    Failure(ScanFailure),
}

/// `start, start + step, …` up to `end` inclusive.
pub fn omega_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && end >= start && step > 0.0 && end.is_finite()) {
        return Err(Error::Config(format!(
            "frequency grid needs 0 < start <= end and step > 0, got [{start}, {end}] step {step}"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// Adds the midpoints of the grid intervals on either side of each
/// prediction and of the interval containing it.
pub fn refine_grid(grid: &[f64], predictions: &[f64]) -> Vec<f64> {
    let mut out = grid.to_vec();
    for &w in predictions {
        let Some(j) = grid.windows(2).position(|p| p[0] <= w && w <= p[1]) else {
            continue;
        };
        for i in j.saturating_sub(1)..(j + 2).min(grid.len() - 1) {
            out.push(0.5 * (grid[i] + grid[i + 1]));
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn read_checkpoint(path: &Path, fingerprint: &ScanFingerprint) -> Result<Vec<Entry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = match serde_json::from_str(&line) {
            Ok(e) => e,
            // an interrupted write leaves at most one torn final line
            Err(_) => {
                log::warn!("ignoring unreadable checkpoint line {}", i + 1);
                continue;
            }
        };
        match (&entry, i) {
            (Entry::Header(h), 0) if h == fingerprint => {}
            (Entry::Header(_), 0) => {
                return Err(Error::Config(format!(
                    "checkpoint {} was written for a different configuration",
                    path.display()
                )))
            }
            (_, 0) => {
                return Err(Error::Config(format!(
                    "checkpoint {} has no header",
                    path.display()
                )))
            }
            _ => entries.push(entry),
        }
    }
    Ok(entries)
}

fn append(file: &Mutex<File>, entry: &Entry) -> Result<()> {
    let mut line = serde_json::to_string(entry)?;
    line.push('\n');
    let mut f = file.lock().expect("checkpoint writer poisoned");
    f.write_all(line.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Propagates every frequency in `omegas`, resuming from `checkpoint` when
/// it holds results for the same configuration.
pub fn run_scan(
    ops: &Operators,
    grid: &ObservationGrid,
    cutoff: f64,
    state: usize,
    config: &PropagationConfig,
    omegas: &[f64],
    checkpoint: Option<&Path>,
) -> Result<ScanOutcome> {
    if omegas.windows(2).any(|w| w[0] >= w[1]) || omegas.first().is_some_and(|&w| w <= 0.0) {
        return Err(Error::Config(
            "scan grid must be positive and strictly ascending".into(),
        ));
    }
    let fingerprint = ScanFingerprint {
        law: grid.law,
        cutoff,
        initial_label: *grid
            .labels
            .get(state)
            .ok_or_else(|| Error::Config(format!("initial state {state} is not tracked")))?,
        tau_run: config.tau_run,
        rel_tol: config.rel_tol,
        abs_tol: config.abs_tol,
        samples_per_period: config.samples_per_period,
        init: config.init,
    };

    let mut done: BTreeMap<u64, Entry> = BTreeMap::new();
    let writer = match checkpoint {
        Some(path) => {
            for entry in read_checkpoint(path, &fingerprint)? {
                let omega = match &entry {
                    Entry::Record(r) => r.omega,
                    Entry::Failure(f) => f.omega,
                    Entry::Header(_) => continue,
                };
                done.insert(omega.to_bits(), entry);
            }
            let fresh = !path.exists();
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            if fresh {
                let mut line = serde_json::to_string(&Entry::Header(fingerprint.clone()))?;
                line.push('\n');
                file.write_all(line.as_bytes())?;
            }
            Some(Mutex::new(file))
        }
        None => None,
    };

    let pending: Vec<f64> = omegas
        .iter()
        .copied()
        .filter(|w| !done.contains_key(&w.to_bits()))
        .collect();
    let resumed = omegas.len() - pending.len();
    let fresh: Vec<Entry> = pending
        .par_iter()
        .map(|&omega| {
            let start = Stopwatch::start();
            let mut cfg = config.clone();
            cfg.omega = omega;
            let entry = match propagate(ops, grid, cutoff, state, &cfg) {
                Ok(t) => {
                    let (e_min, e_max) = t.energy_range();
                    Entry::Record(ScanRecord {
                        omega,
                        e_min,
                        e_max,
                        e0: t.energy[0],
                        norm_drift: t.norm_drift,
                        wall_seconds: start.seconds(),
                    })
                }
                Err(e) => {
                    log::warn!("scan point omega={omega} failed: {e}");
                    Entry::Failure(ScanFailure {
                        omega,
                        message: e.to_string(),
                    })
                }
            };
            if let Some(w) = &writer {
                append(w, &entry)?;
            }
            log::info!("scan point omega={omega} finished");
            Ok(entry)
        })
        .collect::<Result<_>>()?;

    let mut outcome = ScanOutcome {
        resumed,
        ..Default::default()
    };
    let wanted: std::collections::HashSet<u64> = omegas.iter().map(|w| w.to_bits()).collect();
    for entry in done.into_values().chain(fresh) {
        match entry {
            Entry::Record(r) if wanted.contains(&r.omega.to_bits()) => outcome.records.push(r),
            Entry::Failure(f) if wanted.contains(&f.omega.to_bits()) => outcome.failures.push(f),
            _ => {}
        }
    }
    outcome.records.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    outcome.failures.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub omega_res: f64,
    pub tau_int: f64,
    pub state_n: usize,
    pub order_l: i64,
}

/// Predicted resonances inside `[lo, hi]`.
pub fn overlay(rows: &[TableRow], lo: f64, hi: f64) -> Vec<OverlayRow> {
    rows.iter()
        .filter(|r| r.row.omega >= lo && r.row.omega <= hi)
        .map(|r| OverlayRow {
            omega_res: r.row.omega,
            tau_int: r.row.tau_int,
            state_n: r.row.label,
            order_l: r.row.order.abs(),
        })
        .collect()
}

/// Which energy bound moved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Excursion {
    /// `E(0) − E_min`: transfer to lower states.
    Down,
    /// `E_max − E(0)`: transfer to higher states.
    Up,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Extremum {
    pub omega: f64,
    pub kind: Excursion,
    pub value: f64,
    /// Standardised height above the sweep median, in median absolute deviations.
    pub score: f64,
}

/// Strict local maxima of both excursions.
pub fn local_extrema(records: &[ScanRecord]) -> Vec<Extremum> {
    let mut out = Vec::new();
    for kind in [Excursion::Down, Excursion::Up] {
        let signal: Vec<f64> = records
            .iter()
            .map(|r| match kind {
                Excursion::Down => r.e0 - r.e_min,
                Excursion::Up => r.e_max - r.e0,
            })
            .collect();
        let median = median(&signal);
        let mad = median_abs_dev(&signal, median).max(f64::MIN_POSITIVE);
        for j in 0..signal.len() {
            let left = j == 0 || signal[j] > signal[j - 1];
            let right = j + 1 == signal.len() || signal[j] > signal[j + 1];
            if left && right && signal.len() > 1 {
                out.push(Extremum {
                    omega: records[j].omega,
                    kind,
                    value: signal[j],
                    score: (signal[j] - median) / mad,
                });
            }
        }
    }
    out.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    out
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn median_abs_dev(v: &[f64], m: f64) -> f64 {
    median(&v.iter().map(|x| (x - m).abs()).collect::<Vec<_>>())
}
