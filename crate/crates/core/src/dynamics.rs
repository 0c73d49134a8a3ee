//! Density-matrix propagation under the diagonal weak-coupling Hamiltonian.
//!
//! Frequencies are stored in Hz; the 2*pi factor is applied when phases are
//! formed. Coherences relax with a single T2; there is no longitudinal
//! relaxation.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{CMatrix, DeviationDensityMatrix, UnitaryMatrix};
use crate::system::{bit, SpinSystem};

/// Per-element evolution frequencies and coherence orders of a spin system.
#[derive(Clone, Debug)]
pub struct EvolutionCache {
    n: usize,
    energies: Vec<f64>,
    freq: Vec<f64>,
    order: Vec<i32>,
    t2_s: f64,
}

impl EvolutionCache {
    pub fn new(sys: &SpinSystem) -> Self {
        let n = sys.n_spins();
        let dim = sys.dim();
        let energies = sys.energies();
        let down: Vec<i32> = (0..dim)
            .map(|s| (0..n).filter(|&j| bit(s, j, n)).count() as i32)
            .collect();
        let mut freq = vec![0.0; dim * dim];
        let mut order = vec![0; dim * dim];
        for r in 0..dim {
            for s in 0..dim {
                freq[r * dim + s] = energies[r] - energies[s];
                // M_r - M_s with M the total z projection
                order[r * dim + s] = down[s] - down[r];
            }
        }
        EvolutionCache {
            n,
            energies,
            freq,
            order,
            t2_s: sys.t2_s(),
        }
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// E_r - E_s in Hz.
    #[inline]
    pub fn frequency(&self, r: usize, s: usize) -> f64 {
        self.freq[r * self.dim() + s]
    }

    /// Coherence order of element (r, s).
    #[inline]
    pub fn order(&self, r: usize, s: usize) -> i32 {
        self.order[r * self.dim() + s]
    }

    pub fn t2_s(&self) -> f64 {
        self.t2_s
    }

    /// Largest |E_r - E_s| over all elements.
    pub fn max_frequency_hz(&self) -> f64 {
        self.freq.iter().fold(0.0, |m, f| m.max(f.abs()))
    }

    /// Factor multiplying element (r, s) after free evolution for `t` seconds.
    #[inline]
    pub(crate) fn propagator(&self, r: usize, s: usize, t: f64, with_decay: bool) -> Complex64 {
        let phase = Complex64::from_polar(1.0, -TAU * self.frequency(r, s) * t);
        if with_decay && r != s {
            phase * (-t / self.t2_s).exp()
        } else {
            phase
        }
    }
}

/// Free evolution: element (r, s) picks up exp(-i 2 pi w_rs t), and
/// off-diagonal elements decay by exp(-t / T2) when `with_decay` is set.
pub fn evolve(
    rho: &DeviationDensityMatrix,
    cache: &EvolutionCache,
    t_s: f64,
    with_decay: bool,
) -> Result<DeviationDensityMatrix> {
    if t_s < 0.0 || t_s.is_nan() {
        return Err(Error::NegativeTime(t_s));
    }
    check_dim(rho.dim(), cache.dim())?;
    let m = CMatrix::from_fn(rho.dim(), rho.dim(), |r, s| {
        let v = rho.get(r, s);
        if v == Complex64::new(0.0, 0.0) {
            v
        } else {
            v * cache.propagator(r, s, t_s, with_decay)
        }
    });
    Ok(DeviationDensityMatrix::from_raw(m))
}

/// U rho U^dagger.
pub fn apply_unitary(
    rho: &DeviationDensityMatrix,
    u: &UnitaryMatrix,
) -> Result<DeviationDensityMatrix> {
    check_dim(rho.dim(), u.dim())?;
    let out = u.matrix() * rho.matrix() * u.matrix().adjoint();
    Ok(DeviationDensityMatrix::from_raw(out))
}

/// Ideal gradient: keep the diagonal, zero everything else.
pub fn gradient_project(rho: &DeviationDensityMatrix) -> DeviationDensityMatrix {
    let dim = rho.dim();
    let m = CMatrix::from_fn(dim, dim, |r, s| {
        if r == s {
            rho.get(r, r)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    DeviationDensityMatrix::from_raw(m)
}

/// Splits rho into components of fixed coherence order. The components sum
/// back to rho exactly.
pub fn coherence_order_decompose(
    rho: &DeviationDensityMatrix,
    cache: &EvolutionCache,
) -> BTreeMap<i32, CMatrix> {
    let dim = rho.dim();
    let mut parts: BTreeMap<i32, CMatrix> = BTreeMap::new();
    for r in 0..dim {
        for s in 0..dim {
            let v = rho.get(r, s);
            if v == Complex64::new(0.0, 0.0) && r != s {
                continue;
            }
            let p = cache.order(r, s);
            parts.entry(p).or_insert_with(|| CMatrix::zeros(dim, dim))[(r, s)] = v;
        }
    }
    parts
}

/// Tr[(sum_j I_j^+) rho].
pub fn detect_signal(rho: &DeviationDensityMatrix) -> Complex64 {
    let n = rho.n_spins();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let mask = crate::system::spin_mask(j, n);
        for lower in (0..rho.dim()).filter(|s| s & mask == 0) {
            // I_j^+ has a one at (lower, lower | mask)
            acc += rho.get(lower | mask, lower);
        }
    }
    acc
}

/// How a field-gradient pulse acts on the density matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradientModel {
    /// Exact projection onto the diagonal.
    #[default]
    Ideal,
    /// Homonuclear zero-quantum coherences survive the gradient and are only
    /// suppressed by averaging over `draws` random delays in `[0, max_delay_s]`.
    ZeroQuantumSparing {
        draws: usize,
        max_delay_s: f64,
        seed: u64,
    },
}

impl GradientModel {
    /// Applies the gradient. `stream` selects an independent random stream so
    /// that every t1 increment sees its own delays regardless of evaluation
    /// order.
    pub fn apply(
        &self,
        rho: &DeviationDensityMatrix,
        cache: &EvolutionCache,
        stream: u64,
    ) -> DeviationDensityMatrix {
        match *self {
            GradientModel::Ideal => gradient_project(rho),
            GradientModel::ZeroQuantumSparing {
                draws,
                max_delay_s,
                seed,
            } => {
                let dim = rho.dim();
                let kept = CMatrix::from_fn(dim, dim, |r, s| {
                    if cache.order(r, s) == 0 {
                        rho.get(r, s)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                let draws = draws.max(1);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let mut acc = CMatrix::zeros(dim, dim);
                for _ in 0..draws {
                    let tau = if max_delay_s > 0.0 {
                        rng.random_range(0.0..max_delay_s)
                    } else {
                        0.0
                    };
                    acc += CMatrix::from_fn(dim, dim, |r, s| {
                        kept[(r, s)] * cache.propagator(r, s, tau, true)
                    });
                }
                DeviationDensityMatrix::from_raw(acc / Complex64::new(draws as f64, 0.0))
            }
        }
    }
}

fn check_dim(found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        coefficients_to_density, nonselective_pulse, product_operator, CoefficientVector,
        ProductOperatorLabel, PHASE_Y,
    };
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn demo_pair() -> SpinSystem {
        SpinSystem::new(vec![1200.0, 1800.0], &[(0, 1, 200.0)], 0.010).unwrap()
    }

    fn state(n: usize, terms: &[(&str, f64)]) -> DeviationDensityMatrix {
        coefficients_to_density(&CoefficientVector::from_terms(n, terms.iter().copied()).unwrap())
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn cache_tables_are_antisymmetric() {
        let cache = EvolutionCache::new(&demo_pair());
        for r in 0..4 {
            assert_eq!(cache.frequency(r, r), 0.0);
            assert_eq!(cache.order(r, r), 0);
            for s in 0..4 {
                assert_eq!(cache.frequency(r, s), -cache.frequency(s, r));
                assert_eq!(cache.order(r, s), -cache.order(s, r));
            }
        }
        assert_eq!(cache.frequency(0, 2), 1300.0);
        assert_eq!(cache.frequency(0, 3), 3000.0);
        assert_eq!(cache.frequency(1, 2), -600.0);
        assert_eq!(cache.order(0, 3), 2);
        assert_eq!(cache.order(1, 2), 0);
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let cache = EvolutionCache::new(&demo_pair());
        let rho = state(2, &[("x o", 1.0), ("y z", 2.0), ("z z", 0.5)]);
        assert_eq!(evolve(&rho, &cache, 0.0, true).unwrap(), rho);
        assert!(matches!(
            evolve(&rho, &cache, -1e-3, false),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn single_element_rotates_at_transition_frequency() {
        let cache = EvolutionCache::new(&demo_pair());
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 2)] = Complex64::new(1.0, 0.0);
        m[(2, 0)] = Complex64::new(1.0, 0.0);
        let rho = DeviationDensityMatrix::new(m).unwrap();
        let t = 1.0 / 5200.0;
        let out = evolve(&rho, &cache, t, false).unwrap();
        // 1550 - 250 = 1300 Hz: a quarter turn after 1/5200 s
        assert!((out.get(0, 2) - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((out.get(2, 0) - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn decay_after_one_t2() {
        let sys = demo_pair();
        let cache = EvolutionCache::new(&sys);
        let rho = state(2, &[("x o", 1.0), ("z o", 1.0)]);
        let out = evolve(&rho, &cache, sys.t2_s(), true).unwrap();
        for r in 0..4 {
            for s in 0..4 {
                let ratio = out.get(r, s).norm() / rho.get(r, s).norm().max(1e-300);
                if rho.get(r, s).norm() > 0.0 {
                    let expected = if r == s { 1.0 } else { (-1.0f64).exp() };
                    assert!((ratio - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unitary_conjugation_examples() {
        let sys = demo_pair();
        let rho = state(2, &[("z o", 1.0), ("o z", 2.3)]);
        assert_eq!(
            apply_unitary(&rho, &UnitaryMatrix::identity(4)).unwrap(),
            rho
        );

        let u = nonselective_pulse(&sys, FRAC_PI_2, PHASE_Y);
        let out = apply_unitary(&rho, &u).unwrap();
        let expected = state(2, &[("x o", 1.0), ("o x", 2.3)]);
        assert!(max_diff(out.matrix(), expected.matrix()) < 1e-12);

        assert!(matches!(
            apply_unitary(&rho, &UnitaryMatrix::identity(8)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_examples() {
        assert!(gradient_project(&state(2, &[("x o", 1.0)]))
            .matrix()
            .iter()
            .all(|z| z.norm() == 0.0));

        let full = state(
            2,
            &[
                ("z o", 1.0),
                ("o z", 2.3),
                ("z z", 6.7),
                ("x o", 1.0),
                ("x x", 13.0),
                ("y y", 2.5),
            ],
        );
        let p = gradient_project(&full);
        let diag: Vec<f64> = (0..4).map(|k| p.get(k, k).re).collect();
        for (a, b) in diag.iter().zip([3.325, -2.325, -1.025, 0.025]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(gradient_project(&p), p);
    }

    #[test]
    fn order_decomposition_of_two_spin_xx() {
        let cache = EvolutionCache::new(&demo_pair());
        let parts = coherence_order_decompose(&state(2, &[("x x", 1.0)]), &cache);
        let nonzero: Vec<i32> = parts
            .iter()
            .filter(|(_, m)| m.iter().any(|z| z.norm() > 0.0))
            .map(|(p, _)| *p)
            .collect();
        assert_eq!(nonzero, vec![-2, 0, 2]);

        let diag = coherence_order_decompose(&state(2, &[("z z", 1.0), ("z o", 0.3)]), &cache);
        assert_eq!(diag.keys().copied().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn detection_examples() {
        assert_eq!(
            detect_signal(&state(2, &[("z o", 1.0), ("z z", 3.0)])),
            Complex64::new(0.0, 0.0)
        );
        assert!(
            (detect_signal(&state(2, &[("x o", 1.0)])) - Complex64::new(1.0, 0.0)).norm() < 1e-15
        );
        assert!(
            (detect_signal(&state(2, &[("y o", 1.0)])) - Complex64::new(0.0, 1.0)).norm() < 1e-15
        );
    }

    #[test]
    fn detection_matches_explicit_trace() {
        let rho = state(
            3,
            &[
                ("x o y", 1.0),
                ("o y o", 0.5),
                ("o o x", -2.0),
                ("x z z", 0.7),
            ],
        );
        let mut plus = CMatrix::zeros(8, 8);
        for j in 0..3 {
            let mut x = vec![crate::operators::Axis::O; 3];
            x[j] = crate::operators::Axis::X;
            let mut y = x.clone();
            y[j] = crate::operators::Axis::Y;
            plus += product_operator(&ProductOperatorLabel::new(x).unwrap());
            plus +=
                product_operator(&ProductOperatorLabel::new(y).unwrap()) * Complex64::new(0.0, 1.0);
        }
        let explicit = (plus * rho.matrix()).trace();
        assert!((explicit - detect_signal(&rho)).norm() < 1e-12);
    }

    #[test]
    fn sparing_gradient_keeps_only_order_zero() {
        let sys = demo_pair();
        let cache = EvolutionCache::new(&sys);
        let rho = state(2, &[("x x", 1.0), ("y y", 1.0), ("z o", 1.0), ("x o", 1.0)]);
        let model = GradientModel::ZeroQuantumSparing {
            draws: 1,
            max_delay_s: 0.0,
            seed: 7,
        };
        let out = model.apply(&rho, &cache, 0);
        for r in 0..4 {
            for s in 0..4 {
                if cache.order(r, s) == 0 {
                    assert_eq!(out.get(r, s), rho.get(r, s));
                } else {
                    assert_eq!(out.get(r, s).norm(), 0.0);
                }
            }
        }
        // averaging over random delays shrinks the surviving zero-quantum term
        let avg = GradientModel::ZeroQuantumSparing {
            draws: 64,
            max_delay_s: 0.02,
            seed: 7,
        }
        .apply(&rho, &cache, 3);
        assert!(avg.get(1, 2).norm() < 0.5 * rho.get(1, 2).norm());
        assert_eq!(avg.get(0, 0), rho.get(0, 0));
        let again = GradientModel::ZeroQuantumSparing {
            draws: 64,
            max_delay_s: 0.02,
            seed: 7,
        }
        .apply(&rho, &cache, 3);
        assert_eq!(avg, again);
    }

    fn from_vals(vals: &[f64]) -> DeviationDensityMatrix {
        let mut q = CoefficientVector::new(2);
        for (l, v) in ProductOperatorLabel::all(2).into_iter().zip(vals) {
            q.insert(l, *v).unwrap();
        }
        coefficients_to_density(&q)
    }

    proptest! {
        #[test]
        fn evolution_without_decay_preserves_magnitudes(vals in proptest::collection::vec(-10.0f64..10.0, 15),
                                                       t in 0.0f64..0.1) {
            let cache = EvolutionCache::new(&demo_pair());
            let rho = from_vals(&vals);
            let out = evolve(&rho, &cache, t, false).unwrap();
            let decayed = evolve(&rho, &cache, t, true).unwrap();
            for r in 0..4 {
                prop_assert_eq!(decayed.get(r, r), rho.get(r, r));
                for s in 0..4 {
                    prop_assert!((out.get(r, s).norm() - rho.get(r, s).norm()).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn conjugation_preserves_spectrum(vals in proptest::collection::vec(-10.0f64..10.0, 15),
                                          theta in -4.0f64..4.0, phase in -4.0f64..4.0) {
            let rho = from_vals(&vals);
            let u = nonselective_pulse(&demo_pair(), theta, phase);
            let out = apply_unitary(&rho, &u).unwrap();
            let eig = |m: &CMatrix| {
                let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
                e.sort_by(f64::total_cmp);
                e
            };
            for (a, b) in eig(rho.matrix()).iter().zip(eig(out.matrix())) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            prop_assert!(out.matrix().trace().norm() < 1e-10);
        }

        #[test]
        fn detection_is_linear(a in proptest::collection::vec(-10.0f64..10.0, 15),
                               b in proptest::collection::vec(-10.0f64..10.0, 15),
                               k in -3.0f64..3.0) {
            let (ra, rb) = (from_vals(&a), from_vals(&b));
            let combo = DeviationDensityMatrix::from_raw(ra.matrix() * Complex64::new(k, 0.0) + rb.matrix());
            let lhs = detect_signal(&combo);
            let rhs = detect_signal(&ra) * k + detect_signal(&rb);
            prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn projection_lies_within_order_zero(vals in proptest::collection::vec(-10.0f64..10.0, 15)) {
            let cache = EvolutionCache::new(&demo_pair());
            let rho = from_vals(&vals);
            let p = gradient_project(&rho);
            let parts = coherence_order_decompose(&rho, &cache);
            let zero = &parts[&0];
            let mut sum = CMatrix::zeros(4, 4);
            for m in parts.values() {
                sum += m;
            }
            prop_assert_eq!(&sum, rho.matrix());
            for r in 0..4 {
                prop_assert_eq!(p.get(r, r), zero[(r, r)]);
            }
        }
    }
}
