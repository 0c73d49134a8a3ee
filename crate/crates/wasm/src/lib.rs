//! Browser bindings: simulate a register, look at its 2D spectrum and
//! cross-sections, and run the reconstruction.

use serde::Deserialize;
use tomo2d::spectral::{cross_section, dft_t1, dft_t2, HybridSpectrum, ProcessingParams};
use tomo2d::tomography::{tomograph, TomographyOptions};
use tomo2d::{
    coefficients_to_density, run_sequence_a, AcquisitionParams, CoefficientVector,
    DeviationDensityMatrix, Spectrum2D, SpinSystem,
};
use wasm_bindgen::prelude::*;

/// Register, state and grid. Couplings use 0-based spin indices.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoConfig {
    larmor_hz: Vec<f64>,
    #[serde(default)]
    couplings: Vec<(usize, usize, f64)>,
    t2_s: f64,
    state: Vec<(String, f64)>,
    #[serde(default)]
    n_t1: Option<usize>,
    #[serde(default)]
    n_t2: Option<usize>,
    #[serde(default)]
    alpha_deg: Option<f64>,
}

const TWO_QUBIT: &str = r#"{
  "larmor_hz": [1200, 1800],
  "couplings": [[0, 1, 200]],
  "t2_s": 0.01,
  "state": [["z o", 1.0], ["o z", 2.3], ["z z", 6.7], ["x o", 1.0], ["x z", 10.0],
            ["y o", 5.0], ["y z", 3.5], ["y y", 2.5], ["y x", 7.2], ["x x", 13.0],
            ["x y", 1.45], ["o x", 2.0], ["z x", 3.45], ["o y", 6.9], ["z y", 6.753]],
  "n_t1": 256,
  "n_t2": 256,
  "alpha_deg": 45
}"#;

const THREE_QUBIT: &str = r#"{
  "larmor_hz": [500, 1100, -900],
  "couplings": [[0, 1, 60], [1, 2, -45], [0, 2, 25]],
  "t2_s": 0.02,
  "state": [["x o o", 1.0], ["o y o", 2.0], ["x x o", 1.5], ["y z x", 0.7],
            ["z z z", 3.0], ["x y y", 1.2], ["o o x", 0.8]],
  "n_t1": 256,
  "n_t2": 256,
  "alpha_deg": 45
}"#;

/// Example configuration by name: `"two"` or `"three"`.
#[wasm_bindgen]
pub fn preset(name: &str) -> Result<String, JsError> {
    match name {
        "two" => Ok(TWO_QUBIT.to_string()),
        "three" => Ok(THREE_QUBIT.to_string()),
        other => Err(JsError::new(&format!("unknown preset {other:?}"))),
    }
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    sys: SpinSystem,
    params: AcquisitionParams,
    rho: DeviationDensityMatrix,
    hybrid: HybridSpectrum,
    spectrum: Spectrum2D,
}

#[wasm_bindgen]
impl Demo {
    /// Parses the JSON configuration and runs the 2D sequence.
    #[wasm_bindgen(constructor)]
    pub fn new(config_json: &str) -> Result<Demo, JsError> {
        let cfg: DemoConfig = serde_json::from_str(config_json).map_err(js)?;
        let sys = SpinSystem::new(cfg.larmor_hz, &cfg.couplings, cfg.t2_s).map_err(js)?;
        let mut params = AcquisitionParams::defaults_for(&sys);
        if let Some(v) = cfg.n_t1 {
            params.n_t1 = v;
        }
        if let Some(v) = cfg.n_t2 {
            params.n_t2 = v;
        }
        if let Some(v) = cfg.alpha_deg {
            params.alpha_rad = v.to_radians();
        }
        let mut q = CoefficientVector::new(sys.n_spins());
        for (label, value) in &cfg.state {
            q.insert(label.parse().map_err(js)?, *value).map_err(js)?;
        }
        let rho = coefficients_to_density(&q);
        let a = run_sequence_a(&sys, &rho, &params).map_err(js)?;
        let proc = ProcessingParams::matched(sys.t2_s());
        let hybrid = dft_t2(&a, &proc);
        let spectrum = dft_t1(&hybrid, &proc);
        Ok(Demo {
            sys,
            params,
            rho,
            hybrid,
            spectrum,
        })
    }

    /// Omega1 axis of the full spectrum, Hz.
    pub fn omega1_hz(&self) -> Vec<f64> {
        self.spectrum.omega1_hz.clone()
    }

    /// Omega2 axis of the full spectrum, Hz.
    pub fn omega2_hz(&self) -> Vec<f64> {
        self.spectrum.omega2_hz.clone()
    }

    /// Transition frequencies along Omega2, Hz.
    pub fn transitions_hz(&self) -> Vec<f64> {
        tomo2d::transition_table(&self.sys)
            .map(|t| t.frequencies())
            .unwrap_or_default()
    }

    /// |S(Omega1, Omega2)| max-pooled onto a `rows x cols` grid, row-major
    /// with Omega1 along rows.
    pub fn magnitude(&self, rows: usize, cols: usize) -> Vec<f64> {
        let n1 = self.spectrum.omega1_hz.len();
        let n2 = self.spectrum.omega2_hz.len();
        let rows = rows.clamp(1, n1);
        let cols = cols.clamp(1, n2);
        let mut out = vec![0.0f64; rows * cols];
        for i in 0..n1 {
            let r = i * rows / n1;
            for k in 0..n2 {
                let c = k * cols / n2;
                let v = self.spectrum.get(i, k).norm();
                let slot = &mut out[r * cols + c];
                if v > *slot {
                    *slot = v;
                }
            }
        }
        out
    }

    /// Cross-section at the Omega2 bin nearest `omega2_hz`, as interleaved
    /// real and imaginary parts along [`omega1_hz`](Self::omega1_hz).
    pub fn cross_section(&self, omega2_hz: f64) -> Result<Vec<f64>, JsError> {
        let c = cross_section(&self.hybrid, &self.spectrum, omega2_hz).map_err(js)?;
        Ok(c.freq_trace.iter().flat_map(|z| [z.re, z.im]).collect())
    }

    /// Runs both sequences, inverts them and returns a JSON summary with
    /// the input and reconstructed matrices.
    pub fn tomograph(&self) -> Result<String, JsError> {
        let r = tomograph(
            &self.sys,
            &self.rho,
            &self.params,
            &TomographyOptions::default(),
        )
        .map_err(js)?;
        let summary = serde_json::json!({
            "fidelity": r.fidelity,
            "max_relative_error": r.max_relative_error,
            "condition_number": r.condition_number,
            "input": tomo2d::export::ComplexMatrixJson::from(self.rho.matrix()),
            "reconstructed": tomo2d::export::ComplexMatrixJson::from(r.matrix.matrix()),
            "coefficients": tomo2d::export::coefficients_json(&r.coefficients),
        });
        Ok(summary.to_string())
    }
}
