//! Browser bindings: eigencurves, resonance tables and Rabi curves as JSON.

use driven_billiard::basis::ParityBlock;
use driven_billiard::driving::{DrivingLaw, LawKind};
use driven_billiard::model::Model;
use driven_billiard::perturbation::{beating_period, rabi_amplitude, rabi_population};
use driven_billiard::propagator::{propagate, PropagationConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const BLOCK: ParityBlock = ParityBlock::EVEN_EVEN;
const INITIAL: usize = 4;
const L_MAX: u32 = 32;
const MAX_CUTOFF: f64 = 30.0;

type Outcome<T> = std::result::Result<T, String>;

fn setup(law: &str, amplitude: f64, cutoff: f64) -> Outcome<(DrivingLaw, Model)> {
    if cutoff.is_nan() || cutoff > MAX_CUTOFF {
        return Err(format!("cutoff above {MAX_CUTOFF} is too slow for the browser"));
    }
    let kind: LawKind = law.parse().map_err(|e| format!("{e}"))?;
    let b0 = driven_billiard::driving::default_b0();
    let law = DrivingLaw::new(kind, 1.0, b0, amplitude).map_err(|e| e.to_string())?;
    let model = Model::new(cutoff, None).map_err(|e| e.to_string())?;
    Ok((law, model))
}

fn to_json<T: Serialize>(value: &T) -> Outcome<String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curves {
    tau: Vec<f64>,
    labels: Vec<usize>,
    energies: Vec<Vec<f64>>,
}

pub fn eigencurves_json(law: &str, amplitude: f64, cutoff: f64, states: usize) -> Outcome<String> {
    let (law, model) = setup(law, amplitude, cutoff)?;
    let path = model.spectral_path(&law, BLOCK, 256).map_err(|e| e.to_string())?;
    let count = states.min(path.strict);
    let labels = model.global_labels(&law, BLOCK)[..count].to_vec();
    let energies = (0..count)
        .map(|n| path.frames.iter().map(|f| f.energy(n)).collect())
        .collect();
    to_json(&Curves {
        tau: path.frames.iter().map(|f| f.tau).collect(),
        labels,
        energies,
    })
}

#[derive(Serialize)]
struct Row {
    omega: f64,
    tau_int: f64,
    tau_low: f64,
    state: usize,
    order: i64,
    resolvable: String,
}

pub fn table_json(
    law: &str,
    amplitude: f64,
    cutoff: f64,
    omega_max: f64,
    tau_cutoff: f64,
) -> Outcome<String> {
    let (law, model) = setup(law, amplitude, cutoff)?;
    let p = model.predictor(&law, BLOCK, 1024).map_err(|e| e.to_string())?;
    let k = p.state_of_label(INITIAL).ok_or("initial state is not tracked")?;
    let rows: Vec<Row> = p
        .predict_table(k, omega_max, L_MAX, tau_cutoff, 100.0)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| Row {
            omega: r.row.omega,
            tau_int: r.row.tau_int,
            tau_low: r.row.tau_low,
            state: r.row.label,
            order: r.row.order.abs(),
            resolvable: r.resolvable.to_string(),
        })
        .collect();
    to_json(&rows)
}

#[derive(Serialize)]
struct Rabi {
    target: usize,
    omega_res: f64,
    tau_int: f64,
    period: f64,
    amplitude: f64,
    tau: Vec<f64>,
    simulated: Vec<f64>,
    predicted: Vec<f64>,
}

/// Population transfer from state 4 to the nearest resonant partner.
pub fn rabi_json(law: &str, amplitude: f64, cutoff: f64, omega: f64, periods: f64) -> Outcome<String> {
    if !(omega > 0.0 && periods > 0.0 && periods <= 200.0) {
        return Err("need omega > 0 and 0 < periods <= 200".into());
    }
    let (law, model) = setup(law, amplitude, cutoff)?;
    let p = model.predictor(&law, BLOCK, 1024).map_err(|e| e.to_string())?;
    let k = p.state_of_label(INITIAL).ok_or("initial state is not tracked")?;
    let row = p
        .resonances(k, 2.0 * omega, L_MAX)
        .map_err(|e| e.to_string())?
        .into_iter()
        .min_by(|a, b| (a.omega - omega).abs().total_cmp(&(b.omega - omega).abs()))
        .ok_or("no resonance below twice the driving frequency")?;
    let coeffs = p
        .fourier_coeffs(row.state, k, omega, row.order.unsigned_abs() as u32)
        .map_err(|e| e.to_string())?;
    let tau_int = 1.0 / coeffs.coupling(row.order).norm();
    let theta = p.theta(row.state, k, row.order, omega);

    let spp = 32;
    let grid = model
        .observation_grid(&law, BLOCK, spp, false)
        .map_err(|e| e.to_string())?;
    let state = grid.state_of_label(INITIAL).map_err(|e| e.to_string())?;
    let mut config = PropagationConfig::new(omega, periods);
    config.samples_per_period = spp;
    let t = propagate(model.block(BLOCK), &grid, cutoff, state, &config).map_err(|e| e.to_string())?;
    let simulated = t.population(row.label).ok_or("partner state is not tracked")?;
    let predicted = t
        .tau
        .iter()
        .map(|&s| rabi_population(theta, tau_int, s))
        .collect();
    to_json(&Rabi {
        target: row.label,
        omega_res: row.omega,
        tau_int,
        period: beating_period(theta, tau_int),
        amplitude: rabi_amplitude(theta, tau_int),
        tau: t.tau,
        simulated,
        predicted,
    })
}

#[wasm_bindgen]
pub fn eigencurves(law: &str, amplitude: f64, cutoff: f64, states: usize) -> Result<String, JsError> {
    eigencurves_json(law, amplitude, cutoff, states).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn resonance_table(
    law: &str,
    amplitude: f64,
    cutoff: f64,
    omega_max: f64,
    tau_cutoff: f64,
) -> Result<String, JsError> {
    table_json(law, amplitude, cutoff, omega_max, tau_cutoff).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rabi_curve(
    law: &str,
    amplitude: f64,
    cutoff: f64,
    omega: f64,
    periods: f64,
) -> Result<String, JsError> {
    rabi_json(law, amplitude, cutoff, omega, periods).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn curves_have_one_series_per_label() {
        let v: Value = serde_json::from_str(&eigencurves_json("ratio", 0.1, 20.0, 4).unwrap()).unwrap();
        assert_eq!(v["labels"].as_array().unwrap().len(), 4);
        assert_eq!(v["labels"][1], 4);
        assert_eq!(
            v["energies"][0].as_array().unwrap().len(),
            v["tau"].as_array().unwrap().len()
        );
    }

    #[test]
    fn table_rows_are_sorted() {
        let v: Value = serde_json::from_str(&table_json("ratio", 0.1, 20.0, 16.0, 2000.0).unwrap()).unwrap();
        let omegas: Vec<f64> = v
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["omega"].as_f64().unwrap())
            .collect();
        assert!(!omegas.is_empty());
        assert!(omegas.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rabi_curve_starts_empty() {
        let v: Value = serde_json::from_str(&rabi_json("volume", 0.1, 15.0, 3.32, 2.0).unwrap()).unwrap();
        assert_eq!(v["target"], 7);
        assert!(v["simulated"][0].as_f64().unwrap().abs() < 1e-10);
        assert_eq!(v["predicted"][0], 0.0);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(eigencurves_json("square", 0.1, 12.0, 4).is_err());
        assert!(table_json("ratio", 0.1, 80.0, 16.0, 2000.0).is_err());
        assert!(rabi_json("ratio", 0.1, 12.0, -1.0, 2.0).is_err());
    }
}
