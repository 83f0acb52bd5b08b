//! Python bindings: synthetic telemetry, the processing pipeline, bundle
//! classification and query verification.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use wheelcheck::classifier::Bundle;
use wheelcheck::mlp::MlpModel;
use wheelcheck::perturb::snr_channel;
use wheelcheck::pipeline::{fit_slices, run_pipeline, PipelineConfig};
use wheelcheck::telemetry::{generate_series, AnomalyProfile, GenConfig, Severity, Status, TimeSeries};
use wheelcheck::verifier::{read_query, verify_local_robustness, verify_query, Goal, Outcome, Robustness};

fn py_err(e: wheelcheck::Error) -> PyErr {
    match e.kind() {
        "io" => PyIOError::new_err(e.to_string()),
        k => PyValueError::new_err(format!("[{k}] {e}")),
    }
}

fn series(omega: Vec<f64>, friction: Vec<f64>) -> PyResult<TimeSeries> {
    TimeSeries::new(omega, friction).map_err(py_err)
}

/// Generate one labelled series; returns `(omega, friction)`.
#[pyfunction]
#[pyo3(signature = (status, seed, n_samples = None))]
fn generate(status: &str, seed: u64, n_samples: Option<usize>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let status: Status = status.parse().map_err(py_err)?;
    let mut cfg = GenConfig {
        seed,
        ..GenConfig::default()
    };
    if let Some(n) = n_samples {
        cfg.n_samples = n;
    }
    let g = generate_series(&AnomalyProfile::for_status(status, &Severity::default()), &cfg).map_err(py_err)?;
    Ok(g.series.into_parts())
}

/// Least-squares `(dry, visc)` over samples outside the deadband, or `None`
/// for a degenerate design.
#[pyfunction]
#[pyo3(signature = (omega, friction, deadband = 5.0))]
fn fit_friction(omega: Vec<f64>, friction: Vec<f64>, deadband: f64) -> PyResult<Option<(f64, f64)>> {
    if omega.len() != friction.len() {
        return Err(PyValueError::new_err("omega and friction differ in length"));
    }
    Ok(fit_slices(&omega, &friction, deadband).map(|f| (f.dry, f.visc)))
}

/// Pipeline summary as a JSON string, default settings unless `config_json`
/// is given.
#[pyfunction]
#[pyo3(signature = (omega, friction, config_json = None))]
fn summarize(omega: Vec<f64>, friction: Vec<f64>, config_json: Option<&str>) -> PyResult<String> {
    let cfg: PipelineConfig = match config_json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    let s = run_pipeline(&series(omega, friction)?, &cfg).map_err(py_err)?;
    Ok(serde_json::to_string(&s).expect("summary serializes"))
}

/// SNR of a perturbed channel in dB; `inf` when identical.
#[pyfunction]
fn snr_db(original: Vec<f64>, perturbed: Vec<f64>) -> PyResult<f64> {
    snr_channel(&original, &perturbed).map_err(py_err)
}

/// Status name (`N`, `A1`, ..., `D3`) assigned by a trained bundle.
#[pyfunction]
fn classify(bundle_dir: &str, omega: Vec<f64>, friction: Vec<f64>) -> PyResult<String> {
    let b = Bundle::load(Path::new(bundle_dir)).map_err(py_err)?;
    Ok(b.classify(&series(omega, friction)?).map_err(py_err)?.to_string())
}

/// Decide a query file; returns the verdict and the class involved, if any.
#[pyfunction]
fn verify(query_path: &str) -> PyResult<(String, Option<usize>)> {
    let q = read_query(Path::new(query_path)).map_err(py_err)?;
    let model = MlpModel::load(&q.model).map_err(py_err)?;
    Ok(match q.goal {
        Goal::Expected(k) => match verify_local_robustness(&model, &q.region, k).map_err(py_err)?.result {
            Robustness::Robust => ("ROBUST".into(), None),
            Robustness::Counterexample { class, .. } => ("NOT ROBUST".into(), Some(class)),
        },
        Goal::Target(k) => match verify_query(&model, &q.region, k).map_err(py_err)?.outcome {
            Outcome::Sat { class, .. } => ("SAT".into(), Some(class)),
            Outcome::Unsat => ("UNSAT".into(), None),
        },
    })
}

#[pymodule]
fn pywheelcheck(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_friction, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
