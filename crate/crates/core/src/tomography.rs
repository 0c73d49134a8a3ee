//! Inversion of the simulated measurements.
//!
//! Off-diagonal coefficients come from sequence A. For each selected
//! single-quantum line, the line's complex amplitude is read from every t1
//! row of the t2-transformed data, giving a trace along t1. The traces are
//! mean-subtracted, real and imaginary parts stacked, and fitted by linear
//! least squares against the same traces computed for every off-diagonal
//! basis operator with unit coefficient.
//!
//! Diagonal coefficients come from the line amplitudes of sequence B, fitted
//! against the sequence-B response of every diagonal basis operator at the
//! same read angle.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::EvolutionCache;
use crate::error::{Error, Result};
use crate::experiment::{
    run_reference, run_sequence_a, run_sequence_b, transition_table, AcquisitionParams,
    SequenceAPulses, Signal1D, Signal2D, Transition, TransitionTable,
};
use crate::lstsq;
use crate::operators::{
    coefficients_to_density, nonselective_pulse, CMatrix, CoefficientVector,
    DeviationDensityMatrix, ProductOperatorLabel, PHASE_Y,
};
use crate::spectral::{self, dft_1d, dft_t2, PeakReadout, ProcessingParams};
use crate::system::{hex_prefix, SpinSystem};

/// Relative residual above which a fit is reported as a model mismatch.
pub const RESIDUAL_WARN_THRESHOLD: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Everything the design matrix depends on. Its hash is the cache key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub system: SpinSystem,
    pub n_t1: usize,
    pub n_t2: usize,
    pub dwell_t1_s: f64,
    pub dwell_t2_s: f64,
    pub alpha_rad: f64,
    pub processing: ProcessingParams,
    pub selected: Vec<Transition>,
}

impl DesignSpec {
    pub fn new(
        sys: &SpinSystem,
        params: &AcquisitionParams,
        processing: &ProcessingParams,
        selected: &[Transition],
    ) -> Self {
        DesignSpec {
            system: sys.clone(),
            n_t1: params.n_t1,
            n_t2: params.n_t2,
            dwell_t1_s: params.dwell_t1_s,
            dwell_t2_s: params.dwell_t2_s,
            alpha_rad: params.alpha_rad,
            processing: *processing,
            selected: selected.to_vec(),
        }
    }

    pub fn key(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("design spec serializes");
        hex_prefix(&Sha256::digest(&bytes), 32)
    }
}

/// Unit-coefficient sequence-A responses of every off-diagonal basis
/// operator. Rows: for each selected transition, `n_t1` real parts followed
/// by `n_t1` imaginary parts of its mean-subtracted t1 trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    spec: DesignSpec,
    labels: Vec<ProductOperatorLabel>,
    data: DMatrix<f64>,
    condition_number: f64,
}

impl DesignMatrix {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn system(&self) -> &SpinSystem {
        &self.spec.system
    }

    pub fn labels(&self) -> &[ProductOperatorLabel] {
        &self.labels
    }

    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.to_string()).collect()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.spec.selected
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n_t1(&self) -> usize {
        self.spec.n_t1
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn key(&self) -> String {
        self.spec.key()
    }

    /// Complex t1 trace of column `col` at selected transition `line`.
    pub fn column_trace(&self, col: usize, line: usize) -> Vec<Complex64> {
        let n = self.spec.n_t1;
        let base = line * 2 * n;
        (0..n)
            .map(|i| Complex64::new(self.data[(base + i, col)], self.data[(base + n + i, col)]))
            .collect()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.data.column_iter().map(|c| c.norm()).collect()
    }

    /// Rebuilds a design matrix from stored parts, re-checking its shape and
    /// rank.
    pub fn from_parts(spec: DesignSpec, data: DMatrix<f64>) -> Result<Self> {
        let labels = offdiagonal_labels(spec.system.n_spins());
        let rows = spec.selected.len() * 2 * spec.n_t1;
        if data.nrows() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: data.nrows(),
            });
        }
        if data.ncols() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: data.ncols(),
            });
        }
        let condition_number = check_rank(&data, &labels)?;
        Ok(DesignMatrix {
            spec,
            labels,
            data,
            condition_number,
        })
    }

    /// Trusts a previously computed condition number; used for cache loads
    /// whose key already matched.
    pub(crate) fn from_cache(
        spec: DesignSpec,
        data: DMatrix<f64>,
        condition_number: f64,
    ) -> Result<Self> {
        let labels = offdiagonal_labels(spec.system.n_spins());
        let rows = spec.selected.len() * 2 * spec.n_t1;
        if data.shape() != (rows, labels.len()) {
            return Err(Error::CacheMismatch(format!(
                "stored matrix is {}x{}, expected {rows}x{}",
                data.nrows(),
                data.ncols(),
                labels.len()
            )));
        }
        Ok(DesignMatrix {
            spec,
            labels,
            data,
            condition_number,
        })
    }

    /// Like [`from_parts`](Self::from_parts) but keeps a rank-deficient matrix,
    /// returning the rank error alongside it.
    pub fn from_parts_unchecked(spec: DesignSpec, data: DMatrix<f64>) -> (Self, Option<Error>) {
        let labels = offdiagonal_labels(spec.system.n_spins());
        let (condition_number, err) = match check_rank(&data, &labels) {
            Ok(c) => (c, None),
            Err(e) => (f64::INFINITY, Some(e)),
        };
        (
            DesignMatrix {
                spec,
                labels,
                data,
                condition_number,
            },
            err,
        )
    }
}

/// Every basis label with at least one transverse factor, in basis order.
pub fn offdiagonal_labels(n: usize) -> Vec<ProductOperatorLabel> {
    ProductOperatorLabel::all(n)
        .into_iter()
        .filter(|l| !l.is_diagonal())
        .collect()
}

pub fn diagonal_labels(n: usize) -> Vec<ProductOperatorLabel> {
    ProductOperatorLabel::all(n)
        .into_iter()
        .filter(|l| l.is_diagonal())
        .collect()
}

fn check_rank(data: &DMatrix<f64>, labels: &[ProductOperatorLabel]) -> Result<f64> {
    let names: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
    let sol = lstsq::solve(data, &DVector::zeros(data.nrows()), &names)?;
    Ok(sol.condition_number)
}

/// The transitions of the given (0-based) spins, in table order.
pub fn transitions_of_spins(table: &TransitionTable, spins: &[usize]) -> Vec<Transition> {
    table
        .entries()
        .iter()
        .filter(|t| spins.contains(&t.qubit))
        .copied()
        .collect()
}

fn validate_selection(
    sys: &SpinSystem,
    table: &TransitionTable,
    selected: &[Transition],
) -> Result<()> {
    if selected.is_empty() {
        return Err(Error::InvalidAcquisition("no transitions selected".into()));
    }
    for t in selected {
        if !table.entries().contains(t) {
            return Err(Error::InvalidAcquisition(format!(
                "transition of spin {} at {} Hz is not a line of this system",
                t.qubit + 1,
                t.freq_hz
            )));
        }
    }
    for q in 0..sys.n_spins() {
        if !selected.iter().any(|t| t.qubit == q) {
            log::warn!(
                "no cross-section selected for spin {}; its coherences may be unresolvable",
                q + 1
            );
        }
    }
    Ok(())
}

/// Builds and rank-checks the design matrix. `processing` must match what
/// will be applied to the measured data along t2.
pub fn build_design_matrix(
    sys: &SpinSystem,
    params: &AcquisitionParams,
    processing: &ProcessingParams,
    selected: &[Transition],
) -> Result<DesignMatrix> {
    let (design, err) = build_design_matrix_unchecked(sys, params, processing, selected)?;
    match err {
        Some(e) => Err(e),
        None => Ok(design),
    }
}

/// As [`build_design_matrix`], but a rank-deficient matrix is returned
/// together with the rank error instead of being discarded.
pub fn build_design_matrix_unchecked(
    sys: &SpinSystem,
    params: &AcquisitionParams,
    processing: &ProcessingParams,
    selected: &[Transition],
) -> Result<(DesignMatrix, Option<Error>)> {
    params.validate(sys)?;
    let table = transition_table(sys)?;
    validate_selection(sys, &table, selected)?;
    let spec = DesignSpec::new(sys, params, processing, selected);
    let data = design_columns(sys, params, selected);
    Ok(DesignMatrix::from_parts_unchecked(spec, data))
}

/// Noiseless line traces computed straight from the propagators.
///
/// After the flip pulse and gradient only the diagonal D_k(t1) of
/// flip . rho(t1) . flip^dagger survives, and the read pulse maps it to the
/// detected element (u, l) as sum_k read[u,k] D_k conj(read[l,k]). For a
/// basis operator with nonzero (r, c_r) entries v_r this collapses to
/// sum_r C[line, r] p_r(t1), with p_r the free-evolution factor of (r, c_r).
fn design_columns(
    sys: &SpinSystem,
    params: &AcquisitionParams,
    selected: &[Transition],
) -> DMatrix<f64> {
    let n = sys.n_spins();
    let dim = sys.dim();
    let cache = EvolutionCache::new(sys);
    let pulses = SequenceAPulses::new(sys, params.alpha_rad);
    let flip = pulses.flip.matrix();
    let read = pulses.read.matrix();
    let weights: Vec<Vec<Complex64>> = selected
        .iter()
        .map(|t| {
            (0..dim)
                .map(|k| read[(t.upper, k)] * read[(t.lower, k)].conj())
                .collect()
        })
        .collect();
    let labels = offdiagonal_labels(n);
    let n_t1 = params.n_t1;
    let rows = selected.len() * 2 * n_t1;

    let columns = crate::map_indexed(labels.len(), |c| {
        let sp = labels[c].sparse();
        // g[k][r] = flip[k,r] v_r conj(flip[k,c_r])
        let coeff: Vec<Vec<Complex64>> = weights
            .iter()
            .map(|w| {
                (0..dim)
                    .map(|r| {
                        let (cr, v) = (sp.cols[r], sp.vals[r]);
                        (0..dim)
                            .map(|k| w[k] * flip[(k, r)] * flip[(k, cr)].conj())
                            .sum::<Complex64>()
                            * v
                    })
                    .collect()
            })
            .collect();
        let mut col = vec![0.0; rows];
        let mut trace = vec![ZERO; n_t1];
        for (j, cj) in coeff.iter().enumerate() {
            for (i, slot) in trace.iter_mut().enumerate() {
                let t1 = i as f64 * params.dwell_t1_s;
                *slot = (0..dim)
                    .filter(|&r| cj[r] != ZERO)
                    .map(|r| cj[r] * cache.propagator(r, sp.cols[r], t1, true))
                    .sum();
            }
            write_trace(&mut col[j * 2 * n_t1..(j + 1) * 2 * n_t1], &trace);
        }
        col
    });
    let mut data = DMatrix::zeros(rows, labels.len());
    for (c, col) in columns.iter().enumerate() {
        data.column_mut(c).copy_from_slice(col);
    }
    data
}

/// Writes the mean-subtracted trace as real parts then imaginary parts.
fn write_trace(out: &mut [f64], trace: &[Complex64]) {
    let n = trace.len();
    let mean = trace.iter().sum::<Complex64>() / n as f64;
    for (i, z) in trace.iter().enumerate() {
        let d = z - mean;
        out[i] = d.re;
        out[n + i] = d.im;
    }
}

fn check_signal_grid(signal: &Signal2D, spec: &DesignSpec) -> Result<()> {
    let same = signal.n_t1 == spec.n_t1
        && signal.n_t2 == spec.n_t2
        && signal.dwell_t1_s == spec.dwell_t1_s
        && signal.dwell_t2_s == spec.dwell_t2_s;
    if !same {
        return Err(Error::InvalidAcquisition(format!(
            "signal grid {}x{} (dwell {:e} s, {:e} s) differs from the design grid {}x{} (dwell {:e} s, {:e} s)",
            signal.n_t1,
            signal.n_t2,
            signal.dwell_t1_s,
            signal.dwell_t2_s,
            spec.n_t1,
            spec.n_t2,
            spec.dwell_t1_s,
            spec.dwell_t2_s
        )));
    }
    if signal.meta.system_digest != spec.system.digest() && !signal.meta.system_digest.is_empty() {
        log::warn!("signal was recorded on a different spin system than the design matrix");
    }
    Ok(())
}

/// The measurement vector: t2 transform, per-row line amplitudes of every
/// line, then the selected traces stacked like the design rows.
pub fn measured_vector(signal: &Signal2D, design: &DesignMatrix) -> Result<DVector<f64>> {
    let spec = design.spec();
    check_signal_grid(signal, spec)?;
    let all = transition_table(&spec.system)?;
    let hybrid = dft_t2(signal, &spec.processing);
    let traces = spectral::line_traces(&hybrid, &all.frequencies())?;
    let n = spec.n_t1;
    let mut out = DVector::zeros(spec.selected.len() * 2 * n);
    for (j, t) in spec.selected.iter().enumerate() {
        let idx =
            all.entries().iter().position(|e| e == t).ok_or_else(|| {
                Error::InvalidAcquisition("selected transition not in table".into())
            })?;
        write_trace(
            &mut out.as_mut_slice()[j * 2 * n..(j + 1) * 2 * n],
            &traces[idx],
        );
    }
    Ok(out)
}

/// A least-squares fit of one coefficient block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockFit {
    pub coefficients: CoefficientVector,
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub condition_number: f64,
}

fn to_block(
    n: usize,
    labels: &[ProductOperatorLabel],
    sol: lstsq::LstsqSolution,
    what: &str,
) -> Result<BlockFit> {
    let mut coefficients = CoefficientVector::new(n);
    for (l, q) in labels.iter().zip(sol.x.iter()) {
        if *q != 0.0 {
            coefficients.insert(l.clone(), *q)?;
        }
    }
    let rel = sol.relative_residual();
    if rel > RESIDUAL_WARN_THRESHOLD {
        log::warn!("{what} fit leaves relative residual {rel:.3e}; data and model disagree");
    }
    Ok(BlockFit {
        coefficients,
        residual_norm: sol.residual_norm,
        relative_residual: rel,
        condition_number: sol.condition_number,
    })
}

/// Off-diagonal coefficients from sequence-A data.
pub fn fit_offdiagonal(signal: &Signal2D, design: &DesignMatrix) -> Result<BlockFit> {
    let b = measured_vector(signal, design)?;
    let sol = lstsq::solve(design.matrix(), &b, &design.label_names())?;
    to_block(
        design.system().n_spins(),
        design.labels(),
        sol,
        "off-diagonal",
    )
}

/// Line amplitudes of sequence B for each diagonal basis operator, per unit
/// coefficient. Columns follow [`diagonal_labels`].
pub fn diagonal_responses(sys: &SpinSystem, beta_rad: f64) -> Result<DMatrix<Complex64>> {
    let table = transition_table(sys)?;
    let pulse = nonselective_pulse(sys, beta_rad, PHASE_Y);
    let u = pulse.matrix();
    let labels = diagonal_labels(sys.n_spins());
    let mut out = DMatrix::zeros(table.len(), labels.len());
    for (c, l) in labels.iter().enumerate() {
        let sp = l.sparse();
        // B is diagonal: (U B U^dagger)[a, b] = sum_r U[a,r] v_r conj(U[b,r])
        for (j, t) in table.entries().iter().enumerate() {
            out[(j, c)] = (0..sys.dim())
                .map(|r| u[(t.upper, r)] * sp.vals[r] * u[(t.lower, r)].conj())
                .sum();
        }
    }
    Ok(out)
}

fn stack_complex(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let rows = m.nrows();
    DMatrix::from_fn(2 * rows, m.ncols(), |i, j| {
        if i < rows {
            m[(i, j)].re
        } else {
            m[(i - rows, j)].im
        }
    })
}

/// Diagonal coefficients from sequence-B data.
pub fn fit_diagonal(
    signal: &Signal1D,
    sys: &SpinSystem,
    params: &AcquisitionParams,
    processing: &ProcessingParams,
    readout: PeakReadout,
) -> Result<BlockFit> {
    let table = transition_table(sys)?;
    let spectrum = dft_1d(signal, processing);
    let amps = spectral::peak_amplitudes(&spectrum, &table, readout)?;
    let a = stack_complex(&diagonal_responses(sys, params.beta_rad)?);
    let b = stack_complex(&DMatrix::from_column_slice(amps.len(), 1, &amps));
    let labels = diagonal_labels(sys.n_spins());
    let names: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
    let sol = lstsq::solve(&a, &b.column(0).into_owned(), &names)?;
    to_block(sys.n_spins(), &labels, sol, "diagonal")
}

/// Reassembles the density matrix from disjoint coefficient blocks.
pub fn reconstruct(
    sys: &SpinSystem,
    q_off: &CoefficientVector,
    q_diag: &CoefficientVector,
) -> Result<DeviationDensityMatrix> {
    for q in [q_off, q_diag] {
        if q.n_spins() != sys.n_spins() {
            return Err(Error::DimensionMismatch {
                expected: sys.n_spins(),
                found: q.n_spins(),
            });
        }
    }
    Ok(coefficients_to_density(&q_off.merge(q_diag)?))
}

/// Normalized Hilbert-Schmidt overlap Re Tr(a b) / sqrt(Tr a^2 Tr b^2).
pub fn fidelity(a: &DeviationDensityMatrix, b: &DeviationDensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (na, nb) = (a.purity_norm(), b.purity_norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    // Tr(a b) = sum_rs a[r,s] b[s,r] = sum_rs a[r,s] conj(b[r,s]) for Hermitian b
    let overlap: f64 = a
        .matrix()
        .iter()
        .zip(b.matrix().iter())
        .map(|(x, y)| (x * y.conj()).re)
        .sum();
    Ok((overlap / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Largest per-element error relative to the reference element, with the
/// denominator floored at 1e-6 of the largest reference element.
pub fn max_relative_error(
    reference: &DeviationDensityMatrix,
    other: &DeviationDensityMatrix,
) -> f64 {
    let floor = 1e-6 * reference.max_abs();
    reference
        .matrix()
        .iter()
        .zip(other.matrix().iter())
        .map(|(r, o)| {
            let d = (r - o).norm();
            if d == 0.0 {
                0.0
            } else {
                d / r.norm().max(floor)
            }
        })
        .fold(0.0, f64::max)
}

/// How measured data are turned into a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyOptions {
    /// Processing along t2 for both sequences; `None` means matched to T2.
    pub processing: Option<ProcessingParams>,
    pub readout: PeakReadout,
    /// 0-based spins whose cross-sections are fitted; `None` means all.
    pub select_spins: Option<Vec<usize>>,
    /// Rescale the result against the pulse-free reference experiment.
    pub normalize: bool,
}

impl Default for TomographyOptions {
    fn default() -> Self {
        TomographyOptions {
            processing: None,
            readout: PeakReadout::LineshapeFit,
            select_spins: None,
            normalize: false,
        }
    }
}

impl TomographyOptions {
    pub fn processing_for(&self, sys: &SpinSystem) -> ProcessingParams {
        self.processing
            .unwrap_or_else(|| ProcessingParams::matched(sys.t2_s()))
    }

    pub fn selected_transitions(&self, sys: &SpinSystem) -> Result<Vec<Transition>> {
        let table = transition_table(sys)?;
        Ok(match &self.select_spins {
            None => table.entries().to_vec(),
            Some(spins) => {
                if let Some(&bad) = spins.iter().find(|&&s| s >= sys.n_spins()) {
                    return Err(Error::SpinOutOfRange {
                        index: bad,
                        n: sys.n_spins(),
                    });
                }
                transitions_of_spins(&table, spins)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyResult {
    pub coefficients: CoefficientVector,
    pub matrix: DeviationDensityMatrix,
    /// reconstructed - reference, when a reference is known.
    pub element_errors: Option<CMatrix>,
    pub max_relative_error: Option<f64>,
    pub fidelity: Option<f64>,
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub condition_number: f64,
    pub diagonal_residual_norm: f64,
    pub diagonal_condition_number: f64,
    /// Gain applied by reference normalization.
    pub scale_factor: Option<f64>,
}

impl TomographyResult {
    fn from_fits(sys: &SpinSystem, off: BlockFit, diag: BlockFit) -> Result<Self> {
        let matrix = reconstruct(sys, &off.coefficients, &diag.coefficients)?;
        Ok(TomographyResult {
            coefficients: off.coefficients.merge(&diag.coefficients)?,
            matrix,
            element_errors: None,
            max_relative_error: None,
            fidelity: None,
            residual_norm: off.residual_norm,
            relative_residual: off.relative_residual,
            condition_number: off.condition_number,
            diagonal_residual_norm: diag.residual_norm,
            diagonal_condition_number: diag.condition_number,
            scale_factor: None,
        })
    }

    /// Fills the comparison fields against a known input state. Fidelity is
    /// left empty, with a notice, when either matrix is zero.
    pub fn compare_with(mut self, reference: &DeviationDensityMatrix) -> Result<Self> {
        if reference.dim() != self.matrix.dim() {
            return Err(Error::DimensionMismatch {
                expected: reference.dim(),
                found: self.matrix.dim(),
            });
        }
        self.element_errors = Some(self.matrix.matrix() - reference.matrix());
        self.max_relative_error = Some(max_relative_error(reference, &self.matrix));
        self.fidelity = match fidelity(reference, &self.matrix) {
            Ok(f) => Some(f),
            Err(Error::ZeroNorm) => {
                log::info!("fidelity skipped: reference or reconstruction is the zero matrix");
                None
            }
            Err(e) => return Err(e),
        };
        Ok(self)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let coefficients = self.coefficients.scaled(factor);
        let matrix = coefficients_to_density(&coefficients);
        TomographyResult {
            coefficients,
            matrix,
            element_errors: None,
            max_relative_error: None,
            fidelity: None,
            scale_factor: Some(self.scale_factor.unwrap_or(1.0) * factor),
            ..self.clone()
        }
    }
}

/// Fits both data sets and reassembles the state.
pub fn invert(
    design: &DesignMatrix,
    signal_a: &Signal2D,
    signal_b: &Signal1D,
    params: &AcquisitionParams,
    opts: &TomographyOptions,
) -> Result<TomographyResult> {
    let sys = design.system();
    let off = fit_offdiagonal(signal_a, design)?;
    let diag = fit_diagonal(
        signal_b,
        sys,
        params,
        &opts.processing_for(sys),
        opts.readout,
    )?;
    TomographyResult::from_fits(sys, off, diag)
}

/// Gain factor that best maps the fitted single-quantum elements onto the
/// pulse-free reference amplitudes, or `None` when either side has no
/// observable content.
pub fn reference_scale(
    sys: &SpinSystem,
    reference: &Signal1D,
    fitted: &DeviationDensityMatrix,
    processing: &ProcessingParams,
    readout: PeakReadout,
) -> Result<Option<f64>> {
    let table = transition_table(sys)?;
    let measured = spectral::peak_amplitudes(&dft_1d(reference, processing), &table, readout)?;
    let predicted: Vec<Complex64> = table
        .entries()
        .iter()
        .map(|t| fitted.get(t.upper, t.lower))
        .collect();
    let den: f64 = predicted.iter().map(|p| p.norm_sqr()).sum();
    let num: f64 = predicted
        .iter()
        .zip(&measured)
        .map(|(p, m)| (p.conj() * m).re)
        .sum();
    let scale_floor = 1e-12 * fitted.max_abs().max(1e-300);
    let meas_norm: f64 = measured.iter().map(|m| m.norm_sqr()).sum::<f64>().sqrt();
    if den.sqrt() <= scale_floor || meas_norm <= scale_floor {
        return Ok(None);
    }
    Ok(Some(num / den))
}

/// Rescales `fitted` so that its directly observable elements agree with a
/// pulse-free detection of `rho0`. Skipped with a notice when there is no
/// observable single-quantum content.
pub fn reference_normalize(
    sys: &SpinSystem,
    rho0: &DeviationDensityMatrix,
    params: &AcquisitionParams,
    fitted: &TomographyResult,
    opts: &TomographyOptions,
) -> Result<TomographyResult> {
    let reference = run_reference(sys, rho0, params)?;
    match reference_scale(
        sys,
        &reference,
        &fitted.matrix,
        &opts.processing_for(sys),
        opts.readout,
    )? {
        Some(s) => Ok(fitted.scaled(s)),
        None => {
            log::info!("reference normalization skipped: no observable single-quantum content");
            Ok(fitted.clone())
        }
    }
}

/// Simulates both sequences on `rho0`, inverts them and scores the result.
pub fn tomograph(
    sys: &SpinSystem,
    rho0: &DeviationDensityMatrix,
    params: &AcquisitionParams,
    opts: &TomographyOptions,
) -> Result<TomographyResult> {
    let design = build_design_matrix(
        sys,
        params,
        &opts.processing_for(sys),
        &opts.selected_transitions(sys)?,
    )?;
    tomograph_with_design(&design, rho0, params, opts)
}

/// [`tomograph`] with a prebuilt design matrix.
pub fn tomograph_with_design(
    design: &DesignMatrix,
    rho0: &DeviationDensityMatrix,
    params: &AcquisitionParams,
    opts: &TomographyOptions,
) -> Result<TomographyResult> {
    let sys = design.system();
    let a = run_sequence_a(sys, rho0, params)?;
    let b = run_sequence_b(sys, rho0, params)?;
    let mut result = invert(design, &a, &b, params, opts)?;
    if opts.normalize {
        result = reference_normalize(sys, rho0, params, &result, opts)?;
    }
    result.compare_with(rho0)
}

/// Cosine and sine amplitudes of a t1 trace at the given modulation
/// frequencies, fitted as `c0 + sum_f e^{-t/T2} (a_f cos 2 pi f t + b_f sin 2 pi f t)`
/// with complex `c0`, `a_f`, `b_f`. Returns `(a_f, b_f)` per frequency.
pub fn modulation_amplitudes(
    trace: &[Complex64],
    dwell_s: f64,
    t2_s: f64,
    freqs_hz: &[f64],
) -> Result<Vec<(Complex64, Complex64)>> {
    let n = trace.len();
    let cols = 1 + 2 * freqs_hz.len();
    let basis = DMatrix::from_fn(n, cols, |i, c| {
        let t = i as f64 * dwell_s;
        if c == 0 {
            return 1.0;
        }
        let f = freqs_hz[(c - 1) / 2];
        let env = (-t / t2_s).exp();
        if (c - 1) % 2 == 0 {
            env * (std::f64::consts::TAU * f * t).cos()
        } else {
            env * (std::f64::consts::TAU * f * t).sin()
        }
    });
    let mut names = vec!["constant".to_string()];
    for f in freqs_hz {
        names.push(format!("cos {f} Hz"));
        names.push(format!("sin {f} Hz"));
    }
    let re = lstsq::solve(
        &basis,
        &DVector::from_iterator(n, trace.iter().map(|z| z.re)),
        &names,
    )?;
    let im = lstsq::solve(
        &basis,
        &DVector::from_iterator(n, trace.iter().map(|z| z.im)),
        &names,
    )?;
    Ok((0..freqs_hz.len())
        .map(|k| {
            (
                Complex64::new(re.x[1 + 2 * k], im.x[1 + 2 * k]),
                Complex64::new(re.x[2 + 2 * k], im.x[2 + 2 * k]),
            )
        })
        .collect())
}

/// Distinct positive coherence frequencies of the system, sorted.
pub fn coherence_frequencies(sys: &SpinSystem) -> Vec<f64> {
    let cache = EvolutionCache::new(sys);
    let mut f: Vec<f64> = (0..sys.dim())
        .flat_map(|r| (0..sys.dim()).map(move |s| (r, s)))
        .map(|(r, s)| cache.frequency(r, s))
        .filter(|f| *f > 0.0)
        .collect();
    f.sort_by(f64::total_cmp);
    f.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    f
}
