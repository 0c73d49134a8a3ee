//! Fourier processing of the simulated data.
//!
//! All frequency axes run from negative to positive with zero at the centre
//! and are in Hz. A transform of `n` samples is zero-padded to
//! `next_power_of_two(n) * zero_fill` points.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Signal1D, Signal2D, TransitionTable};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Apodization {
    None,
    /// Window exp(-rate * t).
    Exponential {
        rate_per_s: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessingParams {
    pub apodization: Apodization,
    pub zero_fill: usize,
    /// Weight of the t = 0 sample.
    pub first_point_scale: f64,
}

impl ProcessingParams {
    /// Exponential window matched to T2, two-fold zero fill, halved first point.
    pub fn matched(t2_s: f64) -> Self {
        ProcessingParams {
            apodization: Apodization::Exponential {
                rate_per_s: 1.0 / t2_s,
            },
            zero_fill: 2,
            first_point_scale: 0.5,
        }
    }

    /// Plain DFT: no window, no padding beyond a power of two, unit first point.
    pub fn raw() -> Self {
        ProcessingParams {
            apodization: Apodization::None,
            zero_fill: 1,
            first_point_scale: 1.0,
        }
    }

    pub fn padded_len(&self, n: usize) -> usize {
        n.next_power_of_two() * self.zero_fill.max(1)
    }

    fn window(&self, k: usize, dwell_s: f64) -> f64 {
        let w = match self.apodization {
            Apodization::None => 1.0,
            Apodization::Exponential { rate_per_s } => (-rate_per_s * k as f64 * dwell_s).exp(),
        };
        if k == 0 {
            w * self.first_point_scale
        } else {
            w
        }
    }

    /// Decay rate the window adds to every line.
    pub fn extra_rate_per_s(&self) -> f64 {
        match self.apodization {
            Apodization::None => 0.0,
            Apodization::Exponential { rate_per_s } => rate_per_s,
        }
    }
}

/// Signed, centred frequency axis for `len` points at `dwell_s`.
pub fn frequency_axis(len: usize, dwell_s: f64) -> Vec<f64> {
    let width = 1.0 / dwell_s;
    let half = (len / 2) as f64;
    (0..len)
        .map(|m| (m as f64 - half) * width / len as f64)
        .collect()
}

/// A planned forward transform for a fixed input length and processing.
#[derive(Clone)]
struct Transform {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    len: usize,
}

impl Transform {
    fn new(n: usize, dwell_s: f64, proc: &ProcessingParams) -> Self {
        let len = proc.padded_len(n);
        let fft = FftPlanner::new().plan_fft_forward(len);
        Transform {
            fft,
            window: (0..n).map(|k| proc.window(k, dwell_s)).collect(),
            len,
        }
    }

    /// Windowed, padded, transformed and shifted so that index `len/2` is 0 Hz.
    fn apply(&self, samples: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![ZERO; self.len];
        for ((b, s), w) in buf.iter_mut().zip(samples).zip(&self.window) {
            *b = s * w;
        }
        self.fft.process(&mut buf);
        buf.rotate_left(self.len / 2);
        buf
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum1D {
    pub values: Vec<Complex64>,
    pub axis_hz: Vec<f64>,
    pub n_samples: usize,
    pub dwell_s: f64,
    pub processing: ProcessingParams,
    /// Natural T2 of the lines, for lineshape-aware readout.
    pub t2_s: f64,
}

/// DFT of a single FID.
pub fn dft_1d(signal: &Signal1D, proc: &ProcessingParams) -> Spectrum1D {
    let tr = Transform::new(signal.len(), signal.dwell_s, proc);
    Spectrum1D {
        values: tr.apply(signal.data()),
        axis_hz: frequency_axis(tr.len, signal.dwell_s),
        n_samples: signal.len(),
        dwell_s: signal.dwell_s,
        processing: *proc,
        t2_s: signal.meta.t2_s,
    }
}

/// S(t1, Omega2): the data transformed along t2 only.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridSpectrum {
    pub n_t1: usize,
    pub dwell_t1_s: f64,
    pub omega2_hz: Vec<f64>,
    pub n_t2_samples: usize,
    pub dwell_t2_s: f64,
    pub processing: ProcessingParams,
    pub t2_s: f64,
    values: Vec<Complex64>,
}

impl HybridSpectrum {
    pub fn n_omega2(&self) -> usize {
        self.omega2_hz.len()
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let w = self.n_omega2();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn column(&self, bin: usize) -> Vec<Complex64> {
        (0..self.n_t1)
            .map(|i| self.values[i * self.n_omega2() + bin])
            .collect()
    }

    pub fn nearest_bin(&self, omega2_hz: f64) -> Result<usize> {
        nearest_bin(&self.omega2_hz, omega2_hz)
    }

    /// Full width at half maximum of a line after processing, in Hz.
    pub fn linewidth_hz(&self) -> f64 {
        (1.0 / self.t2_s + self.processing.extra_rate_per_s()) / std::f64::consts::PI
    }
}

/// Transform every t1 row along t2.
pub fn dft_t2(signal: &Signal2D, proc: &ProcessingParams) -> HybridSpectrum {
    let tr = Transform::new(signal.n_t2, signal.dwell_t2_s, proc);
    let rows = crate::map_indexed(signal.n_t1, |i| tr.apply(signal.row(i)));
    HybridSpectrum {
        n_t1: signal.n_t1,
        dwell_t1_s: signal.dwell_t1_s,
        omega2_hz: frequency_axis(tr.len, signal.dwell_t2_s),
        n_t2_samples: signal.n_t2,
        dwell_t2_s: signal.dwell_t2_s,
        processing: *proc,
        t2_s: signal.meta.t2_s,
        values: rows.concat(),
    }
}

/// S(Omega1, Omega2), row-major with one row per Omega1 point.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum2D {
    pub omega1_hz: Vec<f64>,
    pub omega2_hz: Vec<f64>,
    pub processing_t1: ProcessingParams,
    pub processing_t2: ProcessingParams,
    values: Vec<Complex64>,
}

impl Spectrum2D {
    pub fn get(&self, i1: usize, i2: usize) -> Complex64 {
        self.values[i1 * self.omega2_hz.len() + i2]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn column(&self, bin: usize) -> Vec<Complex64> {
        let w = self.omega2_hz.len();
        (0..self.omega1_hz.len())
            .map(|i| self.values[i * w + bin])
            .collect()
    }

    /// Largest |S| in each Omega2 column.
    pub fn column_maxima(&self) -> Vec<f64> {
        let w = self.omega2_hz.len();
        let mut out = vec![0.0f64; w];
        for (k, v) in self.values.iter().enumerate() {
            out[k % w] = out[k % w].max(v.norm());
        }
        out
    }
}

/// Transform every Omega2 column of the hybrid data along t1.
pub fn dft_t1(hybrid: &HybridSpectrum, proc: &ProcessingParams) -> Spectrum2D {
    let tr = Transform::new(hybrid.n_t1, hybrid.dwell_t1_s, proc);
    let w = hybrid.n_omega2();
    let cols = crate::map_indexed(w, |c| tr.apply(&hybrid.column(c)));
    let mut values = vec![ZERO; tr.len * w];
    for (c, col) in cols.iter().enumerate() {
        for (i1, v) in col.iter().enumerate() {
            values[i1 * w + c] = *v;
        }
    }
    Spectrum2D {
        omega1_hz: frequency_axis(tr.len, hybrid.dwell_t1_s),
        omega2_hz: hybrid.omega2_hz.clone(),
        processing_t1: *proc,
        processing_t2: hybrid.processing,
        values,
    }
}

/// A trace parallel to Omega1 at one Omega2 bin, in both the t1 and Omega1
/// domains.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossSection {
    pub anchor_hz: f64,
    pub bin: usize,
    pub bin_hz: f64,
    pub t1_s: Vec<f64>,
    pub time_trace: Vec<Complex64>,
    pub omega1_hz: Vec<f64>,
    pub freq_trace: Vec<Complex64>,
}

pub fn cross_section(
    hybrid: &HybridSpectrum,
    spectrum: &Spectrum2D,
    omega2_hz: f64,
) -> Result<CrossSection> {
    if spectrum.omega2_hz != hybrid.omega2_hz {
        return Err(Error::DimensionMismatch {
            expected: hybrid.n_omega2(),
            found: spectrum.omega2_hz.len(),
        });
    }
    let bin = hybrid.nearest_bin(omega2_hz)?;
    let bin_hz = hybrid.omega2_hz[bin];
    if (bin_hz - omega2_hz).abs() > 0.5 * hybrid.linewidth_hz() {
        log::warn!(
            "cross-section at {omega2_hz} Hz uses bin {bin_hz:.3} Hz, more than half a linewidth away"
        );
    }
    Ok(CrossSection {
        anchor_hz: omega2_hz,
        bin,
        bin_hz,
        t1_s: (0..hybrid.n_t1)
            .map(|i| i as f64 * hybrid.dwell_t1_s)
            .collect(),
        time_trace: hybrid.column(bin),
        omega1_hz: spectrum.omega1_hz.clone(),
        freq_trace: spectrum.column(bin),
    })
}

/// Re-transforms a t1-domain trace with the given processing, e.g. to check a
/// cross-section's two forms against each other.
pub fn dft_trace(trace: &[Complex64], dwell_s: f64, proc: &ProcessingParams) -> Vec<Complex64> {
    Transform::new(trace.len(), dwell_s, proc).apply(trace)
}

fn nearest_bin(axis: &[f64], f: f64) -> Result<usize> {
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    if !(f >= lo && f <= hi) {
        return Err(Error::FrequencyOutOfRange {
            freq_hz: f,
            min_hz: lo,
            max_hz: hi,
        });
    }
    let step = axis[1] - axis[0];
    Ok((((f - lo) / step).round() as usize).min(axis.len() - 1))
}

/// How line amplitudes are read from a spectrum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakReadout {
    /// Joint least-squares fit of the exact processed lineshapes of every
    /// line; immune to overlap between neighbours.
    #[default]
    LineshapeFit,
    /// Value at the nearest bin with three-point quadratic interpolation,
    /// normalised by the height of an isolated unit line.
    NearestBin,
}

/// Complex FID amplitudes of known lines from their processed spectrum.
///
/// The basis holds one column per line: the spectrum, through the same
/// processing, of a unit FID `exp((i 2 pi f - 1/T2) t)`. Fitting it jointly
/// recovers each line's t = 0 amplitude exactly for noiseless data, however
/// strongly neighbouring lines overlap.
#[derive(Clone, Debug)]
pub struct LineFitter {
    freqs: Vec<f64>,
    solve: DMatrix<Complex64>,
    condition: f64,
}

impl LineFitter {
    pub fn new(
        freqs: &[f64],
        n_samples: usize,
        dwell_s: f64,
        t2_s: f64,
        proc: &ProcessingParams,
    ) -> Result<Self> {
        let tr = Transform::new(n_samples, dwell_s, proc);
        let basis = unit_lines(&tr, freqs, n_samples, dwell_s, t2_s);
        let svd = basis.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = smax / smin;
        if smin.is_nan() || smin <= 1e-12 * smax {
            let mut sorted = freqs.to_vec();
            sorted.sort_by(f64::total_cmp);
            let pairs: Vec<String> = sorted
                .windows(2)
                .filter(|w| (w[1] - w[0]).abs() < crate::experiment::DEGENERACY_TOL_HZ.max(1e-3))
                .map(|w| format!("{:.6} Hz / {:.6} Hz", w[0], w[1]))
                .collect();
            return Err(Error::OverlappingLines(format!(
                "lineshape basis is singular (condition {condition:.3e}): {}",
                pairs.join(", ")
            )));
        }
        let qr = basis.qr();
        let r = qr.r();
        let qh = qr.q().adjoint();
        let solve = r
            .solve_upper_triangular(&qh)
            .ok_or_else(|| Error::OverlappingLines("lineshape basis is singular".into()))?;
        Ok(LineFitter {
            freqs: freqs.to_vec(),
            solve,
            condition,
        })
    }

    pub fn for_spectrum(spectrum: &Spectrum1D, freqs: &[f64]) -> Result<Self> {
        Self::new(
            freqs,
            spectrum.n_samples,
            spectrum.dwell_s,
            spectrum.t2_s,
            &spectrum.processing,
        )
    }

    pub fn for_hybrid(hybrid: &HybridSpectrum, freqs: &[f64]) -> Result<Self> {
        Self::new(
            freqs,
            hybrid.n_t2_samples,
            hybrid.dwell_t2_s,
            hybrid.t2_s,
            &hybrid.processing,
        )
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn fit(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let v = nalgebra::DVectorView::from_slice(spectrum, spectrum.len());
        (&self.solve * v).iter().copied().collect()
    }
}

fn unit_lines(
    tr: &Transform,
    freqs: &[f64],
    n: usize,
    dwell_s: f64,
    t2_s: f64,
) -> DMatrix<Complex64> {
    let rate = 1.0 / t2_s;
    let mut basis = DMatrix::zeros(tr.len, freqs.len());
    for (j, f) in freqs.iter().enumerate() {
        let fid: Vec<Complex64> = (0..n)
            .map(|k| {
                let t = k as f64 * dwell_s;
                Complex64::from_polar((-rate * t).exp(), std::f64::consts::TAU * f * t)
            })
            .collect();
        basis.set_column(j, &nalgebra::DVector::from_vec(tr.apply(&fid)));
    }
    basis
}

/// Complex amplitude of every line in `table`, in table order.
pub fn peak_amplitudes(
    spectrum: &Spectrum1D,
    table: &TransitionTable,
    readout: PeakReadout,
) -> Result<Vec<Complex64>> {
    let freqs = table.frequencies();
    match readout {
        PeakReadout::LineshapeFit => {
            Ok(LineFitter::for_spectrum(spectrum, &freqs)?.fit(&spectrum.values))
        }
        PeakReadout::NearestBin => {
            let fwhm = (1.0 / spectrum.t2_s + spectrum.processing.extra_rate_per_s())
                / std::f64::consts::PI;
            for (i, a) in table.entries().iter().enumerate() {
                for b in &table.entries()[i + 1..] {
                    if (a.freq_hz - b.freq_hz).abs() < fwhm {
                        return Err(Error::OverlappingLines(format!(
                            "{:.3} Hz and {:.3} Hz are closer than the {fwhm:.3} Hz linewidth",
                            a.freq_hz, b.freq_hz
                        )));
                    }
                }
            }
            let tr = Transform::new(spectrum.n_samples, spectrum.dwell_s, &spectrum.processing);
            let unit = unit_lines(
                &tr,
                &freqs,
                spectrum.n_samples,
                spectrum.dwell_s,
                spectrum.t2_s,
            );
            freqs
                .iter()
                .enumerate()
                .map(|(j, &f)| {
                    let measured = interpolate(&spectrum.axis_hz, &spectrum.values, f)?;
                    let col: Vec<Complex64> = unit.column(j).iter().copied().collect();
                    let height = interpolate(&spectrum.axis_hz, &col, f)?;
                    Ok(measured / height)
                })
                .collect()
        }
    }
}

/// Three-point quadratic interpolation of a complex spectrum at `f`.
fn interpolate(axis: &[f64], values: &[Complex64], f: f64) -> Result<Complex64> {
    let m = nearest_bin(axis, f)?;
    if m == 0 || m + 1 >= axis.len() {
        return Err(Error::FrequencyOutOfRange {
            freq_hz: f,
            min_hz: axis[1],
            max_hz: axis[axis.len() - 2],
        });
    }
    let step = axis[1] - axis[0];
    let d = (f - axis[m]) / step;
    let (a, b, c) = (values[m - 1], values[m], values[m + 1]);
    Ok(b + (c - a) * (d / 2.0) + (c - b * 2.0 + a) * (d * d / 2.0))
}

/// Amplitude traces along t1 for a set of lines: for every t1 row of the
/// hybrid data, the lineshape-fitted amplitude of each line. The outer index
/// follows `freqs`.
pub fn line_traces(hybrid: &HybridSpectrum, freqs: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let fitter = LineFitter::for_hybrid(hybrid, freqs)?;
    let rows = crate::map_indexed(hybrid.n_t1, |i| fitter.fit(hybrid.row(i)));
    Ok((0..freqs.len())
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect())
}
