//! Pulse sequences.
//!
//! * Sequence A: `t1 - (pi/2)_y - Gz - alpha_{-y} - detect(t2)`, a 2D
//!   experiment whose t1 modulation carries every off-diagonal element.
//! * Sequence B: `Gz - beta_y - detect(t2)`, a 1D small-angle readout of the
//!   populations.
//! * Reference: direct detection without pulses, used to normalize gains.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_unitary, evolve, EvolutionCache, GradientModel};
use crate::error::{Error, Result};
use crate::operators::{
    nonselective_pulse, CMatrix, DeviationDensityMatrix, UnitaryMatrix, PHASE_MINUS_Y, PHASE_Y,
};
use crate::system::{spin_mask, SpinSystem};

/// Transitions closer than this are treated as coincident.
pub const DEGENERACY_TOL_HZ: f64 = 1e-6;

/// Above this read angle the diagonal readout leaves the linear regime.
pub const LINEAR_RESPONSE_LIMIT_DEG: f64 = 15.0;

/// A single-quantum transition in which only `qubit` flips. The detected
/// coherence is the element `(upper, lower)`, where `lower` has the qubit up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub qubit: usize,
    pub lower: usize,
    pub upper: usize,
    pub freq_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    entries: Vec<Transition>,
}

impl TransitionTable {
    /// Every single-quantum transition, grouped by qubit, without a
    /// degeneracy check.
    pub fn enumerate(sys: &SpinSystem) -> Self {
        let n = sys.n_spins();
        let e = sys.energies();
        let mut entries = Vec::with_capacity(n << (n - 1));
        for qubit in 0..n {
            let mask = spin_mask(qubit, n);
            for lower in (0..sys.dim()).filter(|s| s & mask == 0) {
                let upper = lower | mask;
                entries.push(Transition {
                    qubit,
                    lower,
                    upper,
                    freq_hz: e[lower] - e[upper],
                });
            }
        }
        TransitionTable { entries }
    }

    pub fn from_entries(entries: Vec<Transition>) -> Self {
        TransitionTable { entries }
    }

    pub fn entries(&self) -> &[Transition] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn for_qubit(&self, qubit: usize) -> impl Iterator<Item = &Transition> {
        self.entries.iter().filter(move |t| t.qubit == qubit)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.entries.iter().map(|t| t.freq_hz).collect()
    }

    pub fn max_abs_hz(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, t| m.max(t.freq_hz.abs()))
    }

    /// Pairs of transitions whose frequencies differ by less than `tol_hz`.
    pub fn collisions(&self, tol_hz: f64) -> Vec<(Transition, Transition)> {
        let mut out = Vec::new();
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                if (a.freq_hz - b.freq_hz).abs() < tol_hz {
                    out.push((*a, *b));
                }
            }
        }
        out
    }

    /// Smallest spacing between any two lines.
    pub fn min_spacing_hz(&self) -> f64 {
        let mut f = self.frequencies();
        f.sort_by(f64::total_cmp);
        f.windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

fn describe(t: &Transition) -> String {
    format!(
        "spin {} ({}->{}) at {:.6} Hz",
        t.qubit + 1,
        t.lower,
        t.upper,
        t.freq_hz
    )
}

/// The single-quantum transition table, refusing coincident lines.
pub fn transition_table(sys: &SpinSystem) -> Result<TransitionTable> {
    let table = TransitionTable::enumerate(sys);
    let clashes = table.collisions(DEGENERACY_TOL_HZ);
    if clashes.is_empty() {
        Ok(table)
    } else {
        let msg = clashes
            .iter()
            .map(|(a, b)| format!("{} and {}", describe(a), describe(b)))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::DegenerateTransitions(msg))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionParams {
    pub n_t1: usize,
    pub n_t2: usize,
    pub dwell_t1_s: f64,
    pub dwell_t2_s: f64,
    /// Read pulse of sequence A.
    pub alpha_rad: f64,
    /// Small detection pulse of sequence B.
    pub beta_rad: f64,
    #[serde(default)]
    pub gradient: GradientModel,
}

impl AcquisitionParams {
    /// Default grid: 512 t2 samples, 512 t1 increments for up to two spins,
    /// doubling per extra spin up to 2048. Spectral widths are four times the
    /// largest frequency each dimension must represent: single-quantum lines
    /// in t2, every coherence in t1.
    pub fn defaults_for(sys: &SpinSystem) -> Self {
        let n = sys.n_spins();
        let n_t1 = match n {
            0..=2 => 512,
            3 => 1024,
            _ => 2048,
        };
        let sq = TransitionTable::enumerate(sys).max_abs_hz().max(1.0);
        let all = EvolutionCache::new(sys).max_frequency_hz().max(1.0);
        AcquisitionParams {
            n_t1,
            n_t2: 512,
            dwell_t1_s: 1.0 / (4.0 * all),
            dwell_t2_s: 1.0 / (4.0 * sq),
            alpha_rad: FRAC_PI_4,
            beta_rad: 10f64.to_radians(),
            gradient: GradientModel::Ideal,
        }
    }

    /// Grid sanity and the Nyquist conditions.
    pub fn validate(&self, sys: &SpinSystem) -> Result<()> {
        if self.n_t1 < 2 || self.n_t2 < 2 {
            return Err(Error::InvalidAcquisition(format!(
                "need at least two samples per dimension, got n_t1={} n_t2={}",
                self.n_t1, self.n_t2
            )));
        }
        for (name, v) in [
            ("dwell_t1_s", self.dwell_t1_s),
            ("dwell_t2_s", self.dwell_t2_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidAcquisition(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [("alpha_rad", self.alpha_rad), ("beta_rad", self.beta_rad)] {
            if !v.is_finite() {
                return Err(Error::InvalidAcquisition(format!("{name} is not finite")));
            }
        }
        let sq = TransitionTable::enumerate(sys).max_abs_hz();
        let width_t2 = 1.0 / self.dwell_t2_s;
        if width_t2 <= 2.0 * sq {
            return Err(Error::Nyquist {
                axis: "t2",
                width_hz: width_t2,
                required_hz: 2.0 * sq,
            });
        }
        let all = EvolutionCache::new(sys).max_frequency_hz();
        let width_t1 = 1.0 / self.dwell_t1_s;
        if width_t1 <= 2.0 * all {
            return Err(Error::Nyquist {
                axis: "t1",
                width_hz: width_t1,
                required_hz: 2.0 * all,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    /// t1 - (pi/2)_y - Gz - alpha_{-y} - detect
    OffDiagonal2D,
    /// Gz - beta_y - detect
    Diagonal,
    /// detect with no pulses
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    pub sequence: Sequence,
    pub system_digest: String,
    pub t2_s: f64,
    pub alpha_deg: Option<f64>,
    pub beta_deg: Option<f64>,
}

/// Time-domain data s(t1, t2), row-major with one row per t1 increment.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal2D {
    pub n_t1: usize,
    pub n_t2: usize,
    pub dwell_t1_s: f64,
    pub dwell_t2_s: f64,
    pub meta: SignalMeta,
    data: Vec<Complex64>,
}

impl Signal2D {
    pub fn from_rows(
        rows: Vec<Vec<Complex64>>,
        dwell_t1_s: f64,
        dwell_t2_s: f64,
        meta: SignalMeta,
    ) -> Result<Self> {
        let n_t1 = rows.len();
        let n_t2 = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_t2) {
            return Err(Error::DimensionMismatch {
                expected: n_t2,
                found: bad.len(),
            });
        }
        let data: Vec<Complex64> = rows.into_iter().flatten().collect();
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidAcquisition(
                "signal contains non-finite samples".into(),
            ));
        }
        Ok(Signal2D {
            n_t1,
            n_t2,
            dwell_t1_s,
            dwell_t2_s,
            meta,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n_t2..(i + 1) * self.n_t2]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks(self.n_t2)
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        self.data[i * self.n_t2 + k]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn t1_axis(&self) -> Vec<f64> {
        (0..self.n_t1).map(|i| i as f64 * self.dwell_t1_s).collect()
    }

    pub fn t2_axis(&self) -> Vec<f64> {
        (0..self.n_t2).map(|k| k as f64 * self.dwell_t2_s).collect()
    }
}

/// A single free-induction decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal1D {
    pub dwell_s: f64,
    pub meta: SignalMeta,
    data: Vec<Complex64>,
}

impl Signal1D {
    pub fn new(data: Vec<Complex64>, dwell_s: f64, meta: SignalMeta) -> Self {
        Signal1D {
            dwell_s,
            meta,
            data,
        }
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn t_axis(&self) -> Vec<f64> {
        (0..self.data.len())
            .map(|k| k as f64 * self.dwell_s)
            .collect()
    }
}

/// Tabulated decaying exponentials for every single-quantum coherence, so
/// that detect(evolve(rho, t2)) reduces to a sum over the detected elements.
#[derive(Clone, Debug)]
pub(crate) struct FidSynth {
    pairs: Vec<(usize, usize)>,
    table: Vec<Complex64>,
    n: usize,
}

impl FidSynth {
    pub(crate) fn new(sys: &SpinSystem, n: usize, dwell_s: f64) -> Self {
        let lines = TransitionTable::enumerate(sys);
        let rate = 1.0 / sys.t2_s();
        let mut table = Vec::with_capacity(lines.len() * n);
        for t in lines.entries() {
            for k in 0..n {
                let time = k as f64 * dwell_s;
                table.push(Complex64::from_polar(
                    (-rate * time).exp(),
                    TAU * t.freq_hz * time,
                ));
            }
        }
        FidSynth {
            pairs: lines.entries().iter().map(|t| (t.upper, t.lower)).collect(),
            table,
            n,
        }
    }

    /// Initial amplitude of every line, i.e. the detected elements of rho.
    pub(crate) fn amplitudes(&self, rho: &CMatrix) -> Vec<Complex64> {
        self.pairs.iter().map(|&(u, l)| rho[(u, l)]).collect()
    }

    pub(crate) fn fid(&self, amps: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for (j, a) in amps.iter().enumerate() {
            if *a == Complex64::new(0.0, 0.0) {
                continue;
            }
            let basis = &self.table[j * self.n..(j + 1) * self.n];
            for (o, b) in out.iter_mut().zip(basis) {
                *o += a * b;
            }
        }
        out
    }
}

/// The fixed pulses of sequence A.
#[derive(Clone, Debug)]
pub(crate) struct SequenceAPulses {
    pub flip: UnitaryMatrix,
    pub read: UnitaryMatrix,
}

impl SequenceAPulses {
    pub(crate) fn new(sys: &SpinSystem, alpha_rad: f64) -> Self {
        SequenceAPulses {
            flip: nonselective_pulse(sys, FRAC_PI_2, PHASE_Y),
            read: nonselective_pulse(sys, alpha_rad, PHASE_MINUS_Y),
        }
    }
}

fn check_state(sys: &SpinSystem, rho0: &DeviationDensityMatrix) -> Result<()> {
    if rho0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: rho0.dim(),
        });
    }
    Ok(())
}

fn meta(sys: &SpinSystem, sequence: Sequence, params: &AcquisitionParams) -> SignalMeta {
    SignalMeta {
        sequence,
        system_digest: sys.digest(),
        t2_s: sys.t2_s(),
        alpha_deg: (sequence == Sequence::OffDiagonal2D).then(|| params.alpha_rad.to_degrees()),
        beta_deg: (sequence == Sequence::Diagonal).then(|| params.beta_rad.to_degrees()),
    }
}

/// Runs sequence A over the t1 grid. Increments are independent and may be
/// computed in parallel; rows are assembled in t1 order.
pub fn run_sequence_a(
    sys: &SpinSystem,
    rho0: &DeviationDensityMatrix,
    params: &AcquisitionParams,
) -> Result<Signal2D> {
    params.validate(sys)?;
    check_state(sys, rho0)?;
    let cache = EvolutionCache::new(sys);
    let pulses = SequenceAPulses::new(sys, params.alpha_rad);
    let synth = FidSynth::new(sys, params.n_t2, params.dwell_t2_s);

    let rows = crate::map_indexed(params.n_t1, |i| -> Result<Vec<Complex64>> {
        let t1 = i as f64 * params.dwell_t1_s;
        let rho = evolve(rho0, &cache, t1, true)?;
        let rho = apply_unitary(&rho, &pulses.flip)?;
        let rho = params.gradient.apply(&rho, &cache, i as u64);
        let rho = apply_unitary(&rho, &pulses.read)?;
        Ok(synth.fid(&synth.amplitudes(rho.matrix())))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    Signal2D::from_rows(
        rows,
        params.dwell_t1_s,
        params.dwell_t2_s,
        meta(sys, Sequence::OffDiagonal2D, params),
    )
}

/// Runs sequence B and records the full FID.
pub fn run_sequence_b(
    sys: &SpinSystem,
    rho0: &DeviationDensityMatrix,
    params: &AcquisitionParams,
) -> Result<Signal1D> {
    params.validate(sys)?;
    check_state(sys, rho0)?;
    if params.beta_rad.to_degrees().abs() > LINEAR_RESPONSE_LIMIT_DEG {
        log::warn!(
            "beta = {:.1} deg is outside the small-angle regime (> {LINEAR_RESPONSE_LIMIT_DEG} deg)",
            params.beta_rad.to_degrees()
        );
    }
    let cache = EvolutionCache::new(sys);
    let synth = FidSynth::new(sys, params.n_t2, params.dwell_t2_s);
    let rho = params.gradient.apply(rho0, &cache, u64::MAX);
    let rho = apply_unitary(&rho, &nonselective_pulse(sys, params.beta_rad, PHASE_Y))?;
    Ok(Signal1D::new(
        synth.fid(&synth.amplitudes(rho.matrix())),
        params.dwell_t2_s,
        meta(sys, Sequence::Diagonal, params),
    ))
}

/// Pulse-free detection of the directly observable coherences.
pub fn run_reference(
    sys: &SpinSystem,
    rho0: &DeviationDensityMatrix,
    params: &AcquisitionParams,
) -> Result<Signal1D> {
    params.validate(sys)?;
    check_state(sys, rho0)?;
    let synth = FidSynth::new(sys, params.n_t2, params.dwell_t2_s);
    Ok(Signal1D::new(
        synth.fid(&synth.amplitudes(rho0.matrix())),
        params.dwell_t2_s,
        meta(sys, Sequence::Reference, params),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{detect_signal, gradient_project};
    use crate::operators::{coefficients_to_density, CoefficientVector, ProductOperatorLabel};
    use proptest::prelude::*;

    fn demo_pair() -> SpinSystem {
        SpinSystem::new(vec![1200.0, 1800.0], &[(0, 1, 200.0)], 0.010).unwrap()
    }

    fn state(n: usize, terms: &[(&str, f64)]) -> DeviationDensityMatrix {
        coefficients_to_density(&CoefficientVector::from_terms(n, terms.iter().copied()).unwrap())
    }

    fn small_params(sys: &SpinSystem) -> AcquisitionParams {
        AcquisitionParams {
            n_t1: 32,
            n_t2: 64,
            ..AcquisitionParams::defaults_for(sys)
        }
    }

    #[test]
    fn two_spin_transition_table() {
        let table = transition_table(&demo_pair()).unwrap();
        let f = |q| table.for_qubit(q).map(|t| t.freq_hz).collect::<Vec<_>>();
        assert_eq!(f(0), vec![1300.0, 1100.0]);
        assert_eq!(f(1), vec![1900.0, 1700.0]);
    }

    #[test]
    fn uncoupled_pair_is_degenerate() {
        let sys = SpinSystem::new(vec![1200.0, 1800.0], &[(0, 1, 0.0)], 0.01).unwrap();
        match transition_table(&sys) {
            Err(Error::DegenerateTransitions(msg)) => assert!(msg.contains("spin 1")),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn four_spin_table_is_complete_and_distinct() {
        let sys = crate::presets::four_qubit_system();
        let table = transition_table(&sys).unwrap();
        assert_eq!(table.len(), 32);
        let e = sys.energies();
        // oracle: every pair of basis states differing in exactly one bit
        let mut expected = Vec::new();
        for a in 0..16usize {
            for b in 0..16usize {
                if (a ^ b).count_ones() == 1 && a < b {
                    expected.push(e[a] - e[b]);
                }
            }
        }
        let mut got = table.frequencies();
        got.sort_by(f64::total_cmp);
        expected.sort_by(f64::total_cmp);
        assert_eq!(got, expected);
        for q in 0..4 {
            assert_eq!(table.for_qubit(q).count(), 8);
        }
    }

    #[test]
    fn defaults_and_nyquist() {
        let sys = demo_pair();
        let p = AcquisitionParams::defaults_for(&sys);
        assert_eq!((p.n_t1, p.n_t2), (512, 512));
        assert!((1.0 / p.dwell_t2_s - 7600.0).abs() < 1e-9);
        assert!((1.0 / p.dwell_t1_s - 12000.0).abs() < 1e-9);
        assert!(p.validate(&sys).is_ok());
        let slow = AcquisitionParams {
            dwell_t2_s: 1.0 / 3000.0,
            ..p.clone()
        };
        assert!(matches!(
            slow.validate(&sys),
            Err(Error::Nyquist { axis: "t2", .. })
        ));
        let slow = AcquisitionParams {
            dwell_t1_s: 1.0 / 5000.0,
            ..p
        };
        assert!(matches!(
            slow.validate(&sys),
            Err(Error::Nyquist { axis: "t1", .. })
        ));
        assert_eq!(
            AcquisitionParams::defaults_for(&crate::presets::four_qubit_system()).n_t1,
            2048
        );
    }

    #[test]
    fn diagonal_input_gives_no_sequence_a_signal() {
        let sys = demo_pair();
        let s = run_sequence_a(
            &sys,
            &state(2, &[("z o", 1.0), ("o z", 2.3), ("z z", 6.7)]),
            &small_params(&sys),
        )
        .unwrap();
        assert!(s.max_abs() <= 1e-10 * 6.7);
    }

    #[test]
    fn fast_fid_matches_stepwise_detection() {
        let sys = demo_pair();
        let params = small_params(&sys);
        let rho0 = state(
            2,
            &[("x o", 1.0), ("x x", 2.0), ("y z", -0.7), ("o y", 0.4)],
        );
        let sig = run_sequence_a(&sys, &rho0, &params).unwrap();
        let cache = EvolutionCache::new(&sys);
        let pulses = SequenceAPulses::new(&sys, params.alpha_rad);
        for i in [0usize, 5, 31] {
            let rho = evolve(&rho0, &cache, i as f64 * params.dwell_t1_s, true).unwrap();
            let rho = apply_unitary(&rho, &pulses.flip).unwrap();
            let rho = gradient_project(&rho);
            let rho = apply_unitary(&rho, &pulses.read).unwrap();
            for k in [0usize, 1, 17, 63] {
                let direct = detect_signal(
                    &evolve(&rho, &cache, k as f64 * params.dwell_t2_s, true).unwrap(),
                );
                assert!(
                    (direct - sig.get(i, k)).norm() < 1e-12,
                    "row {i} sample {k}"
                );
            }
        }
    }

    #[test]
    fn sequence_b_examples() {
        let sys = demo_pair();
        let params = small_params(&sys);
        let off = state(2, &[("x o", 1.0), ("y y", 3.0)]);
        assert!(run_sequence_b(&sys, &off, &params).unwrap().max_abs() < 1e-12);

        let p1 = AcquisitionParams {
            beta_rad: 1f64.to_radians(),
            ..params
        };
        let d1 = run_sequence_b(&sys, &state(2, &[("z o", 1.0), ("z z", 6.7)]), &p1).unwrap();
        let d2 = run_sequence_b(&sys, &state(2, &[("z o", 2.0), ("z z", 13.4)]), &p1).unwrap();
        for (a, b) in d1.data().iter().zip(d2.data()) {
            assert!((b - a * 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn reference_is_direct_detection() {
        let sys = demo_pair();
        let params = small_params(&sys);
        let rho0 = state(2, &[("x o", 1.0), ("z z", 4.0)]);
        let r = run_reference(&sys, &rho0, &params).unwrap();
        assert!((r.data()[0] - detect_signal(&rho0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let sys = demo_pair();
        let rho = state(3, &[("x o o", 1.0)]);
        assert!(run_sequence_a(&sys, &rho, &small_params(&sys)).is_err());
    }

    #[test]
    fn parallel_and_serial_rows_agree() {
        let sys = demo_pair();
        let params = small_params(&sys);
        let rho0 = state(2, &[("x x", 1.0), ("y o", 2.0)]);
        let a = run_sequence_a(&sys, &rho0, &params).unwrap();
        let b = run_sequence_a(&sys, &rho0, &params).unwrap();
        assert_eq!(a, b);
        let serial: Vec<Vec<Complex64>> = (0..params.n_t1).map(|i| a.row(i).to_vec()).collect();
        assert_eq!(serial.concat(), a.data());
    }

    fn random_state(vals: &[f64]) -> DeviationDensityMatrix {
        let mut q = CoefficientVector::new(2);
        for (l, v) in ProductOperatorLabel::all(2).into_iter().zip(vals) {
            q.insert(l, *v).unwrap();
        }
        coefficients_to_density(&q)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sequence_a_ignores_diagonal(vals in proptest::collection::vec(-10.0f64..10.0, 15),
                                       d in proptest::collection::vec(-10.0f64..10.0, 4)) {
            let sys = demo_pair();
            let params = small_params(&sys);
            let rho = random_state(&vals);
            let diag = DeviationDensityMatrix::from_raw(CMatrix::from_diagonal(
                &nalgebra::DVector::from_iterator(4, d.iter().map(|v| Complex64::new(*v, 0.0)))));
            let a = run_sequence_a(&sys, &rho, &params).unwrap();
            let b = run_sequence_a(&sys, &(&rho + &diag), &params).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).norm() <= 1e-10);
            }
        }

        #[test]
        fn sequence_b_ignores_off_diagonal(vals in proptest::collection::vec(-10.0f64..10.0, 15)) {
            let sys = demo_pair();
            let params = small_params(&sys);
            let rho = random_state(&vals);
            let diag = gradient_project(&rho);
            let a = run_sequence_b(&sys, &rho, &params).unwrap();
            let b = run_sequence_b(&sys, &diag, &params).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).norm() <= 1e-10);
            }
        }
    }
}
