//! Browser bindings for the exactly solvable one-hot benchmark.
//!
//! Every export takes the one-hot counts as a comma-separated string and
//! returns JSON.

use serde::Serialize;
use tnqaml::benchmark::{exact_isometries, run_exact_benchmark, BenchmarkConfig, BenchmarkSpec};
use tnqaml::circuit::{Circuit, Topology};
use tnqaml::compiler::{compile_isometry, CompileConfig};
use tnqaml::metrics::{convex_kl, counts_to_distribution, total_variation};
use tnqaml::simulator::{run_sequential_exact, run_sequential_shots, NoiseModel};
use wasm_bindgen::prelude::*;

/// Largest chain the page will compile.
pub const MAX_SITES: usize = 8;

fn parse_counts(text: &str) -> Result<Vec<u64>, String> {
    let counts = text
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("count {t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if counts.len() < 2 || counts.len() > MAX_SITES {
        return Err(format!("need 2 to {MAX_SITES} counts, got {}", counts.len()));
    }
    Ok(counts)
}

fn compiled(spec: &BenchmarkSpec) -> Result<Vec<Circuit>, String> {
    let topo = Topology::all_to_all(2);
    exact_isometries(spec)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|iso| {
            compile_isometry(iso, &topo, &CompileConfig::default())
                .map(|r| r.circuit)
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Trains, compiles and simulates the benchmark; returns the full report.
pub fn benchmark_report(counts: &str, xi2: f64, zeta: f64, shots: u32, seed: u32) -> Result<String, String> {
    let cfg = BenchmarkConfig {
        counts: parse_counts(counts)?,
        noise: NoiseModel::new(xi2, zeta).map_err(|e| e.to_string())?,
        shots: shots as u64,
        seed: seed as u64,
        ..Default::default()
    };
    to_json(&run_exact_benchmark(&cfg).map_err(|e| e.to_string())?)
}

#[derive(Serialize)]
struct SweepPoint {
    xi2: f64,
    kl: f64,
    tv: f64,
}

/// Exact KL(analytic ‖ noisy) for `steps + 1` evenly spaced ξ2 in `[0, xi2_max]`.
pub fn kl_sweep(counts: &str, xi2_max: f64, steps: u32, zeta: f64) -> Result<String, String> {
    let spec = BenchmarkSpec::from_counts(&parse_counts(counts)?).map_err(|e| e.to_string())?;
    let circuits = compiled(&spec)?;
    let ideal = spec.distribution();
    let steps = steps.max(1);
    let points = (0..=steps)
        .map(|i| {
            let xi2 = xi2_max * i as f64 / steps as f64;
            let noise = NoiseModel::new(xi2, zeta).map_err(|e| e.to_string())?;
            let d = run_sequential_exact(&circuits, &noise).map_err(|e| e.to_string())?;
            Ok(SweepPoint {
                xi2,
                kl: convex_kl(&ideal, &d),
                tv: total_variation(&ideal, &d),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&points)
}

#[derive(Serialize)]
struct Histogram {
    labels: Vec<String>,
    ideal: Vec<f64>,
    sampled: Vec<f64>,
    kl: f64,
}

/// Shot histogram of the compiled model against the analytic distribution.
pub fn sample_histogram(counts: &str, xi2: f64, zeta: f64, shots: u32, seed: u32) -> Result<String, String> {
    let spec = BenchmarkSpec::from_counts(&parse_counts(counts)?).map_err(|e| e.to_string())?;
    let circuits = compiled(&spec)?;
    let noise = NoiseModel::new(xi2, zeta).map_err(|e| e.to_string())?;
    let c = run_sequential_shots(&circuits, &noise, shots.max(1) as u64, seed as u64).map_err(|e| e.to_string())?;
    let sampled = counts_to_distribution(&c).map_err(|e| e.to_string())?;
    let ideal = spec.distribution();
    let mut labels: Vec<String> = ideal.labels().chain(sampled.labels()).map(String::from).collect();
    labels.sort();
    labels.dedup();
    to_json(&Histogram {
        ideal: labels.iter().map(|l| ideal.get(l)).collect(),
        sampled: labels.iter().map(|l| sampled.get(l)).collect(),
        kl: convex_kl(&ideal, &sampled),
        labels,
    })
}

#[wasm_bindgen(js_name = benchmarkReport)]
pub fn benchmark_report_js(counts: &str, xi2: f64, zeta: f64, shots: u32, seed: u32) -> Result<String, JsError> {
    benchmark_report(counts, xi2, zeta, shots, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = klSweep)]
pub fn kl_sweep_js(counts: &str, xi2_max: f64, steps: u32, zeta: f64) -> Result<String, JsError> {
    kl_sweep(counts, xi2_max, steps, zeta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sampleHistogram)]
pub fn sample_histogram_js(counts: &str, xi2: f64, zeta: f64, shots: u32, seed: u32) -> Result<String, JsError> {
    sample_histogram(counts, xi2, zeta, shots, seed).map_err(|e| JsError::new(&e))
}
