//! Command-line driver: configuration, stage dispatch, artifacts and exit codes.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::basis::ParityBlock;
use crate::driving::{default_b0, DrivingLaw, LawKind, DEFAULT_A0, DEFAULT_AMPLITUDE};
use crate::error::{Error, Result};
use crate::model::{Model, DEFAULT_CUTOFF, DEFAULT_N_TAU};
use crate::output::{self, Manifest};
use crate::perturbation::{beating_period, fit_rabi, rabi_amplitude, rabi_population, DEFAULT_L_MAX};
use crate::propagator::{
    propagate, InitMode, PropagationConfig, DEFAULT_REL_TOL, DEFAULT_SAMPLES_PER_PERIOD,
};
use crate::scan::{local_extrema, omega_grid, overlay, refine_grid, run_scan};

pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "billiard",
    version,
    about = "Driven elliptical quantum billiard simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Bessel roots spanning the basis.
    Roots(Flags),
    /// Instantaneous energies over one driving period.
    Eigencurves(Flags),
    /// Predicted first-order resonances.
    Table(Flags),
    /// One trajectory with energy and populations.
    Propagate(Flags),
    /// Extremal energies over a frequency grid plus the prediction overlay.
    Scan(Flags),
    /// Simulated against predicted two-level populations.
    Rabi(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Roots(_) => "roots",
            Command::Eigencurves(_) => "eigencurves",
            Command::Table(_) => "table",
            Command::Propagate(_) => "propagate",
            Command::Scan(_) => "scan",
            Command::Rabi(_) => "rabi",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Roots(f)
            | Command::Eigencurves(f)
            | Command::Table(f)
            | Command::Propagate(f)
            | Command::Scan(f)
            | Command::Rabi(f) => f,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// TOML configuration, or a manifest JSON from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ratio, breathing or volume.
    #[arg(long)]
    pub law: Option<LawKind>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub b0: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub omega_range: Option<Vec<f64>>,
    #[arg(long)]
    pub omega_step: Option<f64>,
    #[arg(long)]
    pub kmax: Option<f64>,
    #[arg(long)]
    pub ntau: Option<usize>,
    #[arg(long)]
    pub tau_run: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// energy or instantaneous.
    #[arg(long)]
    pub init_mode: Option<InitMode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Halve the scan step around predicted resonances.
    #[arg(long)]
    pub refine: bool,
    /// Global label of the initial state.
    #[arg(long)]
    pub initial: Option<usize>,
    /// Global label of the resonant partner for `rabi`.
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long)]
    pub l_max: Option<u32>,
    #[arg(long)]
    pub tau_cutoff: Option<f64>,
    #[arg(long)]
    pub samples_per_period: Option<usize>,
    /// Track every state of the block instead of the candidate set.
    #[arg(long)]
    pub full_tracking: bool,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

/// Fully resolved run parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub law: LawKind,
    pub a0: f64,
    pub b0: f64,
    pub amplitude: f64,
    pub omega: Option<f64>,
    pub omega_range: Option<[f64; 2]>,
    pub omega_step: f64,
    pub kmax: f64,
    pub ntau: usize,
    pub tau_run: f64,
    pub rel_tol: f64,
    pub initial: usize,
    pub target: Option<usize>,
    pub init_mode: InitMode,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub refine: bool,
    pub l_max: u32,
    pub tau_cutoff: f64,
    pub samples_per_period: usize,
    pub full_tracking: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            law: LawKind::AxesRatio,
            a0: DEFAULT_A0,
            b0: default_b0(),
            amplitude: DEFAULT_AMPLITUDE,
            omega: None,
            omega_range: None,
            omega_step: 0.02,
            kmax: DEFAULT_CUTOFF,
            ntau: DEFAULT_N_TAU,
            tau_run: 100.0,
            rel_tol: DEFAULT_REL_TOL,
            initial: 4,
            target: None,
            init_mode: InitMode::EnergyEigenstate,
            out: PathBuf::from("out"),
            threads: None,
            refine: false,
            l_max: DEFAULT_L_MAX,
            tau_cutoff: 2000.0,
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
            full_tracking: false,
            cache_dir: None,
        }
    }
}

impl RunConfig {
    /// Reads a TOML file, or the `config` member of a JSON manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let config = value.get("config").cloned().unwrap_or(value);
            serde_json::from_value(config).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut c = match &flags.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = flags.$field.clone() { c.$field = v; } )* };
        }
        take!(
            law,
            a0,
            b0,
            amplitude,
            kmax,
            ntau,
            tau_run,
            rel_tol,
            initial,
            init_mode,
            out,
            l_max,
            tau_cutoff,
            samples_per_period,
            omega_step
        );
        if flags.omega.is_some() {
            c.omega = flags.omega;
        }
        if let Some(r) = &flags.omega_range {
            c.omega_range = Some([r[0], r[1]]);
        }
        if flags.target.is_some() {
            c.target = flags.target;
        }
        if flags.threads.is_some() {
            c.threads = flags.threads;
        }
        if flags.cache_dir.is_some() {
            c.cache_dir = flags.cache_dir.clone();
        }
        c.refine |= flags.refine;
        c.full_tracking |= flags.full_tracking;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.driving_law()?;
        if let Some(w) = self.omega {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("omega must be positive, got {w}")));
            }
        }
        if let Some([lo, hi]) = self.omega_range {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "omega range must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.omega_step > 0.0) {
            return Err(Error::Config(format!(
                "omega step must be positive, got {}",
                self.omega_step
            )));
        }
        if !(self.tau_run > 0.0 && self.tau_run.is_finite()) {
            return Err(Error::Config(format!(
                "tau_run must be positive, got {}",
                self.tau_run
            )));
        }
        if self.initial == 0 {
            return Err(Error::Config("state labels start at 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn driving_law(&self) -> Result<DrivingLaw> {
        DrivingLaw::new(self.law, self.a0, self.b0, self.amplitude)
    }

    fn propagation(&self, omega: f64) -> PropagationConfig {
        let mut p = PropagationConfig::new(omega, self.tau_run);
        p.rel_tol = self.rel_tol;
        p.abs_tol = self.rel_tol * 1e-3;
        p.samples_per_period = self.samples_per_period;
        p.init = self.init_mode;
        p
    }

    fn require_omega(&self) -> Result<f64> {
        self.omega
            .ok_or_else(|| Error::Config("this stage needs --omega".into()))
    }
}

/// A failed run: the stage it failed in and why.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::Config(_) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        }
    }
}

trait Staged<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Staged<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `args`, runs the stage and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("billiard: error in stage {}: {}", f.stage, f.error);
            f.exit_code()
        }
    }
}

/// Runs one subcommand, writing its artifacts and manifest.
pub fn run(command: &Command) -> Outcome<()> {
    let config = RunConfig::resolve(command.flags()).stage("config")?;
    if let Some(n) = config.threads {
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let law = config.driving_law().stage("config")?;
    match command {
        Command::Propagate(_) | Command::Rabi(_) => {
            config.require_omega().stage("config")?;
        }
        Command::Scan(_) if config.omega_range.is_none() => {
            return Err(Error::Config("scan needs --omega-range".into())).stage("config");
        }
        _ => {}
    }
    let name = command.name();
    let mut manifest = Manifest::new(name, &config).stage("config")?;

    let clock = Instant::now();
    let model = Model::new(config.kmax, config.cache_dir.as_deref()).stage("basis")?;
    manifest
        .timings
        .insert("basis".into(), clock.elapsed().as_secs_f64());
    let block = find_block(&model, &law, config.initial).stage("config")?;

    fs::create_dir_all(&config.out)
        .map_err(Error::from)
        .stage("output")?;
    let out = |file: &str| config.out.join(file);

    match command {
        Command::Roots(_) => {
            let path = out("roots.csv");
            let mut indices: Vec<_> = model.basis.indices.iter().filter(|i| i.m >= 0).collect();
            indices.sort_by_key(|i| (i.m, i.n));
            let header: Vec<String> = ["m", "n", "k"].iter().map(|s| s.to_string()).collect();
            let rows = indices
                .iter()
                .map(|i| vec![i.m.to_string(), i.n.to_string(), i.k.to_string()]);
            output::write_csv(&path, &manifest, &header, rows).stage("output")?;
            manifest.results = serde_json::json!({ "roots": indices.len(), "basis_dim": model.basis.dim() });
            manifest.outputs.push(path);
        }
        Command::Eigencurves(_) => {
            let clock = Instant::now();
            let path_data = model.spectral_path(&law, block, config.ntau).stage("spectrum")?;
            manifest
                .timings
                .insert("spectrum".into(), clock.elapsed().as_secs_f64());
            let labels = model.global_labels(&law, block);
            let path = out("eigencurves.csv");
            output::eigencurves_csv(&path, &manifest, &path_data, &labels, path_data.strict)
                .stage("output")?;
            manifest.results = serde_json::json!({ "block": block.tag(), "states": path_data.strict });
            manifest.outputs.push(path);
        }
        Command::Table(_) => {
            let clock = Instant::now();
            let predictor = model.predictor(&law, block, config.ntau).stage("spectrum")?;
            manifest
                .timings
                .insert("spectrum".into(), clock.elapsed().as_secs_f64());
            let k = predictor
                .state_of_label(config.initial)
                .ok_or_else(|| Error::Config(format!("state {} is not tracked", config.initial)))
                .stage("config")?;
            let [lo, hi] = config.omega_range.unwrap_or([0.0, 16.0]);
            let clock = Instant::now();
            let rows: Vec<_> = predictor
                .predict_table(k, hi, config.l_max, config.tau_cutoff, config.tau_run)
                .stage("table")?
                .into_iter()
                .filter(|r| r.row.omega > lo)
                .collect();
            manifest
                .timings
                .insert("table".into(), clock.elapsed().as_secs_f64());
            let path = out("table.csv");
            output::table_csv(&path, &manifest, &rows).stage("output")?;
            manifest.results = serde_json::json!({ "rows": rows.len(), "candidates": predictor.candidates });
            manifest.outputs.push(path);
        }
        Command::Propagate(_) => {
            let omega = config.require_omega().stage("config")?;
            let grid = model
                .observation_grid(&law, block, config.samples_per_period, config.full_tracking)
                .stage("spectrum")?;
            let state = grid.state_of_label(config.initial).stage("config")?;
            let t = propagate(
                model.block(block),
                &grid,
                config.kmax,
                state,
                &config.propagation(omega),
            )
            .stage("propagate")?;
            manifest.timings.insert("propagate".into(), t.wall_seconds);
            let path = out("traj.csv");
            output::trajectory_csv(&path, &manifest, &t).stage("output")?;
            let (e_min, e_max) = t.energy_range();
            manifest.results = serde_json::json!({
                "norm_drift": t.norm_drift,
                "initial_overlap": t.initial_overlap,
                "energy_mismatch": t.energy_mismatch(),
                "e_min": e_min,
                "e_max": e_max,
                "steps": t.steps,
                "evaluations": t.evaluations,
            });
            manifest.outputs.push(path);
        }
        Command::Scan(_) => {
            let [lo, hi] = config
                .omega_range
                .ok_or_else(|| Error::Config("scan needs --omega-range".into()))
                .stage("config")?;
            let mut omegas = omega_grid(lo, hi, config.omega_step).stage("config")?;
            let predictor = model.predictor(&law, block, config.ntau).stage("spectrum")?;
            let k = predictor
                .state_of_label(config.initial)
                .ok_or_else(|| Error::Config(format!("state {} is not tracked", config.initial)))
                .stage("config")?;
            let table = predictor
                .predict_table(k, hi, config.l_max, config.tau_cutoff, config.tau_run)
                .stage("table")?;
            let overlay_rows = overlay(&table, lo, hi);
            if config.refine {
                let centres: Vec<f64> = overlay_rows.iter().map(|r| r.omega_res).collect();
                omegas = refine_grid(&omegas, &centres);
            }
            let grid = model
                .observation_grid(&law, block, config.samples_per_period, config.full_tracking)
                .stage("spectrum")?;
            let state = grid.state_of_label(config.initial).stage("config")?;
            let clock = Instant::now();
            let checkpoint = out("scan.checkpoint.jsonl");
            let outcome = run_scan(
                model.block(block),
                &grid,
                config.kmax,
                state,
                &config.propagation(omegas[0]),
                &omegas,
                Some(&checkpoint),
            )
            .stage("scan")?;
            manifest
                .timings
                .insert("scan".into(), clock.elapsed().as_secs_f64());
            let scan_path = out("scan.csv");
            let overlay_path = out("overlay.csv");
            output::scan_csv(&scan_path, &manifest, &outcome.records).stage("output")?;
            output::overlay_csv(&overlay_path, &manifest, &overlay_rows).stage("output")?;
            manifest.results = serde_json::json!({
                "points": omegas.len(),
                "resumed": outcome.resumed,
                "failures": outcome.failures,
                "extrema": local_extrema(&outcome.records),
            });
            manifest.outputs.extend([scan_path, overlay_path, checkpoint]);
        }
        Command::Rabi(_) => {
            let omega = config.require_omega().stage("config")?;
            let predictor = model.predictor(&law, block, config.ntau).stage("spectrum")?;
            let k = predictor
                .state_of_label(config.initial)
                .ok_or_else(|| Error::Config(format!("state {} is not tracked", config.initial)))
                .stage("config")?;
            let resonances = predictor
                .resonances(k, 2.0 * omega, config.l_max)
                .stage("table")?;
            let row = resonances
                .iter()
                .filter(|r| config.target.is_none_or(|t| r.label == t))
                .min_by(|a, b| (a.omega - omega).abs().total_cmp(&(b.omega - omega).abs()))
                .cloned()
                .ok_or_else(|| Error::Config("no resonance with the requested target".into()))
                .stage("table")?;
            let coeffs = predictor
                .fourier_coeffs(row.state, k, omega, row.order.unsigned_abs() as u32)
                .stage("table")?;
            let tau_int = 1.0 / coeffs.coupling(row.order).norm();
            let theta = predictor.theta(row.state, k, row.order, omega);

            let grid = model
                .observation_grid(&law, block, config.samples_per_period, config.full_tracking)
                .stage("spectrum")?;
            let state = grid.state_of_label(config.initial).stage("config")?;
            let t = propagate(
                model.block(block),
                &grid,
                config.kmax,
                state,
                &config.propagation(omega),
            )
            .stage("propagate")?;
            manifest.timings.insert("propagate".into(), t.wall_seconds);
            let p_init = t.population(config.initial).expect("initial state tracked");
            let p_target = t
                .population(row.label)
                .ok_or_else(|| Error::Config(format!("state {} is not tracked", row.label)))
                .stage("config")?;
            let path = out("rabi.csv");
            let (ki, ni) = (config.initial, row.label);
            let header = vec![
                "tau".to_string(),
                format!("p_{ki}_sim"),
                format!("p_{ki}_pred"),
                format!("p_{ni}_sim"),
                format!("p_{ni}_pred"),
            ];
            let rows = t.tau.iter().enumerate().map(|(i, &tau)| {
                let pred = rabi_population(theta, tau_int, tau);
                vec![
                    tau.to_string(),
                    p_init[i].to_string(),
                    (1.0 - pred).to_string(),
                    p_target[i].to_string(),
                    pred.to_string(),
                ]
            });
            output::write_csv(&path, &manifest, &header, rows).stage("output")?;
            let predicted_period = beating_period(theta, tau_int);
            let fit = fit_rabi(&p_target, config.samples_per_period, predicted_period);
            manifest.results = serde_json::json!({
                "target": ni,
                "order": row.order.abs(),
                "omega_res": row.omega,
                "theta": theta,
                "tau_int": tau_int,
                "predicted_period": predicted_period,
                "predicted_amplitude": rabi_amplitude(theta, tau_int),
                "fit": fit,
                "norm_drift": t.norm_drift,
            });
            manifest.outputs.push(path);
        }
    }

    let manifest_path = out("manifest.json");
    manifest.outputs.push(manifest_path.clone());
    manifest.write(&manifest_path).stage("output")?;
    Ok(())
}

/// Parity block holding the state with global label `label`.
fn find_block(model: &Model, law: &DrivingLaw, label: usize) -> Result<ParityBlock> {
    ParityBlock::ALL
        .into_iter()
        .find(|&b| model.global_labels(law, b).contains(&label))
        .ok_or_else(|| Error::Config(format!("state {label} lies above the basis cutoff")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("billiard").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&[
            "scan",
            "--law",
            "volume",
            "--omega-range",
            "3.8",
            "6.2",
            "--refine",
        ]);
        let c = RunConfig::resolve(cli.command.flags()).unwrap();
        assert_eq!(c.law, LawKind::VolumePreserving);
        assert_eq!(c.omega_range, Some([3.8, 6.2]));
        assert!(c.refine);
        assert_eq!(c.initial, 4);
        assert_eq!(c.tau_run, 100.0);
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "law = \"breathing\"\ntau_run = 50.0\nkmax = 20.0\n").unwrap();
        let cli = parse(&["table", "--config", path.to_str().unwrap(), "--tau-run", "70"]);
        let c = RunConfig::resolve(cli.command.flags()).unwrap();
        assert_eq!(c.law, LawKind::Breathing);
        assert_eq!(c.kmax, 20.0);
        assert_eq!(c.tau_run, 70.0);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "lawz = \"breathing\"\n").unwrap();
        let flags = Flags {
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&flags), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_config_round_trips() {
        let c = RunConfig {
            omega: Some(3.32),
            law: LawKind::VolumePreserving,
            ..Default::default()
        };
        let m = Manifest::new("rabi", &c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), c);
    }

    #[test]
    fn invalid_geometry_is_a_usage_error() {
        let cli = parse(&["table", "--amplitude", "2.0"]);
        let f = run(&cli.command).unwrap_err();
        assert_eq!(f.stage, "config");
        assert_eq!(f.exit_code(), EXIT_USAGE);
    }
}
