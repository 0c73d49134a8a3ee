//! CSV and JSON export, and the on-disk design-matrix cache.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader never sees a partial file.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Signal1D, Signal2D, SignalMeta};
use crate::operators::{CMatrix, CoefficientVector};
use crate::spectral::{CrossSection, Spectrum1D, Spectrum2D};
use crate::tomography::{DesignMatrix, DesignSpec, TomographyResult};

const CACHE_MAGIC: &[u8; 8] = b"T2DDSGN1";

/// Writes `bytes` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Real and imaginary parts as separate row-major 2D arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for ComplexMatrixJson {
    fn from(m: &CMatrix) -> Self {
        let rows = |f: fn(&num_complex::Complex64) -> f64| {
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| f(&m[(r, c)])).collect())
                .collect()
        };
        ComplexMatrixJson {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

impl ComplexMatrixJson {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.re.len();
        let well_formed =
            self.im.len() == n && self.re.iter().chain(&self.im).all(|r| r.len() == n);
        if !well_formed {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.im.len(),
            });
        }
        Ok(CMatrix::from_fn(n, n, |r, c| {
            num_complex::Complex64::new(self.re[r][c], self.im[r][c])
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientJson {
    pub label: String,
    pub value: f64,
}

pub fn coefficients_json(q: &CoefficientVector) -> Vec<CoefficientJson> {
    q.iter()
        .map(|(l, v)| CoefficientJson {
            label: l.to_string(),
            value: v,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyResultJson {
    pub coefficients: Vec<CoefficientJson>,
    pub matrix: ComplexMatrixJson,
    pub element_errors: Option<ComplexMatrixJson>,
    pub max_relative_error: Option<f64>,
    pub fidelity: Option<f64>,
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub condition_number: f64,
    pub diagonal_residual_norm: f64,
    pub diagonal_condition_number: f64,
    pub scale_factor: Option<f64>,
}

impl From<&TomographyResult> for TomographyResultJson {
    fn from(r: &TomographyResult) -> Self {
        TomographyResultJson {
            coefficients: coefficients_json(&r.coefficients),
            matrix: r.matrix.matrix().into(),
            element_errors: r.element_errors.as_ref().map(Into::into),
            max_relative_error: r.max_relative_error,
            fidelity: r.fidelity,
            residual_norm: r.residual_norm,
            relative_residual: r.relative_residual,
            condition_number: r.condition_number,
            diagonal_residual_norm: r.diagonal_residual_norm,
            diagonal_condition_number: r.diagonal_condition_number,
            scale_factor: r.scale_factor,
        }
    }
}

pub fn result_json(r: &TomographyResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TomographyResultJson::from(
        r,
    ))?)
}

/// Sidecar describing a time-domain data file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSidecar {
    pub n_t1: Option<usize>,
    pub n_t2: usize,
    pub dwell_t1_s: Option<f64>,
    pub dwell_t2_s: f64,
    #[serde(flatten)]
    pub meta: SignalMeta,
}

pub fn signal2d_sidecar(s: &Signal2D) -> SignalSidecar {
    SignalSidecar {
        n_t1: Some(s.n_t1),
        n_t2: s.n_t2,
        dwell_t1_s: Some(s.dwell_t1_s),
        dwell_t2_s: s.dwell_t2_s,
        meta: s.meta.clone(),
    }
}

pub fn signal1d_sidecar(s: &Signal1D) -> SignalSidecar {
    SignalSidecar {
        n_t1: None,
        n_t2: s.len(),
        dwell_t1_s: None,
        dwell_t2_s: s.dwell_s,
        meta: s.meta.clone(),
    }
}

/// One row per t1 increment: t1 then re/im pairs for every t2 sample.
pub fn signal2d_csv(s: &Signal2D) -> String {
    let mut out = String::from("t1_s");
    for t in s.t2_axis() {
        let _ = write!(out, ",re@t2={t:e}s,im@t2={t:e}s");
    }
    out.push('\n');
    for (i, row) in s.rows().enumerate() {
        let _ = write!(out, "{:e}", i as f64 * s.dwell_t1_s);
        for z in row {
            let _ = write!(out, ",{:e},{:e}", z.re, z.im);
        }
        out.push('\n');
    }
    out
}

pub fn signal1d_csv(s: &Signal1D) -> String {
    let mut out = String::from("t_s,re,im\n");
    for (t, z) in s.t_axis().iter().zip(s.data()) {
        let _ = writeln!(out, "{t:e},{:e},{:e}", z.re, z.im);
    }
    out
}

pub fn spectrum1d_csv(s: &Spectrum1D) -> String {
    let mut out = String::from("omega_hz,re,im\n");
    for (f, z) in s.axis_hz.iter().zip(&s.values) {
        let _ = writeln!(out, "{f},{:e},{:e}", z.re, z.im);
    }
    out
}

/// Magnitude grid: first column Omega1, header row Omega2, both in Hz.
/// `stride` keeps every stride-th point along each axis.
pub fn spectrum2d_magnitude_csv(s: &Spectrum2D, stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::from("omega1_hz\\omega2_hz");
    for f in s.omega2_hz.iter().step_by(stride) {
        let _ = write!(out, ",{f}");
    }
    out.push('\n');
    for (i1, f1) in s.omega1_hz.iter().enumerate().step_by(stride) {
        let _ = write!(out, "{f1}");
        for i2 in (0..s.omega2_hz.len()).step_by(stride) {
            let _ = write!(out, ",{:e}", s.get(i1, i2).norm());
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumAxes {
    pub omega1_hz: Vec<f64>,
    pub omega2_hz: Vec<f64>,
    pub processing_t1: crate::spectral::ProcessingParams,
    pub processing_t2: crate::spectral::ProcessingParams,
}

pub fn spectrum2d_axes(s: &Spectrum2D) -> SpectrumAxes {
    SpectrumAxes {
        omega1_hz: s.omega1_hz.clone(),
        omega2_hz: s.omega2_hz.clone(),
        processing_t1: s.processing_t1,
        processing_t2: s.processing_t2,
    }
}

/// Omega1 trace of a cross-section: frequency, real, imaginary.
pub fn cross_section_csv(c: &CrossSection) -> String {
    let mut out = format!(
        "# cross-section at omega2 = {} Hz (bin {} Hz)\nomega1_hz,re,im\n",
        c.anchor_hz, c.bin_hz
    );
    for (f, z) in c.omega1_hz.iter().zip(&c.freq_trace) {
        let _ = writeln!(out, "{f},{:e},{:e}", z.re, z.im);
    }
    out
}

/// Design matrix with labelled columns. Row labels name the transition,
/// part and t1 index.
pub fn design_csv(d: &DesignMatrix) -> String {
    let mut out = String::from("row");
    for l in d.labels() {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    let n = d.n_t1();
    for r in 0..d.matrix().nrows() {
        let t = &d.transitions()[r / (2 * n)];
        let part = if (r % (2 * n)) < n { "re" } else { "im" };
        let _ = write!(out, "{}Hz:{part}:{}", t.freq_hz, r % n);
        for c in 0..d.matrix().ncols() {
            let _ = write!(out, ",{:e}", d.matrix()[(r, c)]);
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CacheHeader {
    key: String,
    spec: DesignSpec,
    rows: usize,
    cols: usize,
    labels: Vec<String>,
    /// Absent for a rank-deficient matrix.
    condition_number: Option<f64>,
}

/// Writes the design matrix as magic, header length, JSON header and
/// column-major little-endian f64 data.
pub fn save_design(path: &Path, d: &DesignMatrix) -> Result<()> {
    let header = CacheHeader {
        key: d.key(),
        spec: d.spec().clone(),
        rows: d.matrix().nrows(),
        cols: d.matrix().ncols(),
        labels: d.label_names(),
        condition_number: Some(d.condition_number()).filter(|c| c.is_finite()),
    };
    let h = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(16 + h.len() + 8 * d.matrix().len());
    bytes.extend_from_slice(CACHE_MAGIC);
    bytes.extend_from_slice(&(h.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&h);
    for v in d.matrix().iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

/// Loads a cached design matrix, refusing it unless its key equals that of
/// `expected`.
pub fn load_design(path: &Path, expected: &DesignSpec) -> Result<DesignMatrix> {
    let mut f = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::CacheMismatch(
            "not a design-matrix cache file".into(),
        ));
    }
    let mut len = [0u8; 8];
    f.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 26 {
        return Err(Error::CacheMismatch("implausible header length".into()));
    }
    let mut h = vec![0u8; len];
    f.read_exact(&mut h)?;
    let header: CacheHeader = serde_json::from_slice(&h)?;
    let want = expected.key();
    if header.key != want || header.spec.key() != want {
        return Err(Error::CacheMismatch(format!(
            "key {} does not match {want}",
            header.key
        )));
    }
    let mut raw = Vec::with_capacity(header.rows * header.cols * 8);
    f.read_to_end(&mut raw)?;
    if raw.len() != header.rows * header.cols * 8 {
        return Err(Error::CacheMismatch(format!(
            "expected {} data bytes, found {}",
            header.rows * header.cols * 8,
            raw.len()
        )));
    }
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DesignMatrix::from_cache(
        header.spec,
        DMatrix::from_vec(header.rows, header.cols, data),
        header.condition_number.unwrap_or(f64::INFINITY),
    )
}
