//! CSV and manifest emitters.
//!
//! Every CSV starts with a `# manifest: {...}` comment line carrying the
//! run configuration, followed by a header row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::perturbation::TableRow;
use crate::propagator::Trajectory;
use crate::scan::{OverlayRow, ScanRecord};
use crate::spectrum::SpectralPath;

pub const MANIFEST_PREFIX: &str = "# manifest: ";

/// Machine-readable account of one CLI run.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub stage: String,
    pub config: serde_json::Value,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
    pub results: serde_json::Value,
}

impl Manifest {
    pub fn new(stage: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            stage: stage.to_string(),
            config: serde_json::to_value(config)?,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
            results: serde_json::Value::Null,
        })
    }

    /// The comment line written at the top of every CSV.
    pub fn comment(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Head<'a> {
            tool: &'a str,
            version: &'a str,
            stage: &'a str,
            config: &'a serde_json::Value,
        }
        let head = Head {
            tool: self.tool,
            version: self.version,
            stage: &self.stage,
            config: &self.config,
        };
        Ok(format!("{MANIFEST_PREFIX}{}", serde_json::to_string(&head)?))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

/// Writes `rows` under `header`, preceded by the manifest comment.
pub fn write_csv<R>(path: &Path, manifest: &Manifest, header: &[String], rows: R) -> Result<()>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{}", manifest.comment()?)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(x: f64) -> String {
    x.to_string()
}

fn names(fixed: &[&str]) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).collect()
}

/// `tau, E_<label>…` for the first `count` tracked states.
pub fn eigencurves_csv(
    path: &Path,
    manifest: &Manifest,
    spectral: &SpectralPath,
    labels: &[usize],
    count: usize,
) -> Result<()> {
    let count = count.min(labels.len()).min(spectral.tracked());
    let mut header = names(&["tau"]);
    header.extend(labels[..count].iter().map(|l| format!("E_{l}")));
    let rows = spectral.frames.iter().map(|f| {
        let mut row = vec![fmt(f.tau)];
        row.extend((0..count).map(|n| fmt(f.energy(n))));
        row
    });
    write_csv(path, manifest, &header, rows)
}

pub fn table_csv(path: &Path, manifest: &Manifest, rows: &[TableRow]) -> Result<()> {
    let header = names(&[
        "omega_res",
        "tau_int",
        "tau_low",
        "state_n",
        "order_l",
        "resolvable",
    ]);
    let rows = rows.iter().map(|r| {
        vec![
            fmt(r.row.omega),
            fmt(r.row.tau_int),
            fmt(r.row.tau_low),
            r.row.label.to_string(),
            r.row.order.abs().to_string(),
            r.resolvable.to_string(),
        ]
    });
    write_csv(path, manifest, &header, rows)
}

/// `tau, energy, norm, p_<label>…`.
pub fn trajectory_csv(path: &Path, manifest: &Manifest, t: &Trajectory) -> Result<()> {
    let mut header = names(&["tau", "energy", "norm"]);
    header.extend(t.labels.iter().map(|l| format!("p_{l}")));
    let rows = (0..t.tau.len()).map(|i| {
        let mut row = vec![fmt(t.tau[i]), fmt(t.energy[i]), fmt(t.norm[i])];
        row.extend(t.populations[i].iter().map(|&p| fmt(p)));
        row
    });
    write_csv(path, manifest, &header, rows)
}

pub fn scan_csv(path: &Path, manifest: &Manifest, records: &[ScanRecord]) -> Result<()> {
    let header = names(&["omega", "e_min", "e_max", "e0", "norm_drift"]);
    let rows = records.iter().map(|r| {
        vec![
            fmt(r.omega),
            fmt(r.e_min),
            fmt(r.e_max),
            fmt(r.e0),
            fmt(r.norm_drift),
        ]
    });
    write_csv(path, manifest, &header, rows)
}

pub fn overlay_csv(path: &Path, manifest: &Manifest, rows: &[OverlayRow]) -> Result<()> {
    let header = names(&["omega_res", "tau_int", "state_n", "order_l"]);
    let rows = rows.iter().map(|r| {
        vec![
            fmt(r.omega_res),
            fmt(r.tau_int),
            r.state_n.to_string(),
            r.order_l.to_string(),
        ]
    });
    write_csv(path, manifest, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_carries_manifest_then_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let m = Manifest::new("test", &serde_json::json!({"k": 1})).unwrap();
        write_csv(&path, &m, &names(&["a", "b"]), vec![vec![fmt(1.5), fmt(0.1)]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with(MANIFEST_PREFIX));
        let head: serde_json::Value = serde_json::from_str(&lines[0][MANIFEST_PREFIX.len()..]).unwrap();
        assert_eq!(head["config"]["k"], 1);
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1.5,0.1");
    }
}
