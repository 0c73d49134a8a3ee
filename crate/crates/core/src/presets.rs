//! The two published demonstrations: a 2-qubit and a 4-qubit register with
//! an arbitrary complex deviation state each.

use crate::operators::CoefficientVector;
use crate::system::SpinSystem;

/// w1 = 1200 Hz, w2 = 1800 Hz, J = 200 Hz, T2 = 10 ms.
pub fn two_qubit_system() -> SpinSystem {
    SpinSystem::new(vec![1200.0, 1800.0], &[(0, 1, 200.0)], 0.010).expect("valid preset")
}

pub const TWO_QUBIT_STATE: &[(&str, f64)] = &[
    ("z o", 1.0),
    ("o z", 2.3),
    ("z z", 6.7),
    ("x o", 1.0),
    ("x z", 10.0),
    ("y o", 5.0),
    ("y z", 3.5),
    ("y y", 2.5),
    ("y x", 7.2),
    ("x x", 13.0),
    ("x y", 1.45),
    ("o x", 2.0),
    ("z x", 3.45),
    ("o y", 6.9),
    ("z y", 6.753),
];

pub fn two_qubit_state() -> CoefficientVector {
    CoefficientVector::from_terms(2, TWO_QUBIT_STATE.iter().copied()).expect("valid preset")
}

/// 600/750/1000/1400 Hz with six couplings, T2 = 10 ms.
pub fn four_qubit_system() -> SpinSystem {
    SpinSystem::new(
        vec![600.0, 750.0, 1000.0, 1400.0],
        &[
            (0, 1, 20.0),
            (0, 2, 10.0),
            (0, 3, 70.0),
            (1, 2, 35.0),
            (1, 3, 24.0),
            (2, 3, 16.0),
        ],
        0.010,
    )
    .expect("valid preset")
}

pub const FOUR_QUBIT_STATE: &[(&str, f64)] = &[
    ("x o o o", 0.8),
    ("y o o o", 1.0),
    ("o x o o", 0.5),
    ("o y o o", 1.0),
    ("o o x o", 0.9),
    ("o o y o", 1.1),
    ("o o o x", 1.0),
    ("o o o y", 1.2),
    ("x x x x", 6.3),
    ("x y y y", 3.9),
    ("x x z z", 1.0),
    ("o x x x", 1.3),
    ("x x y o", 1.9),
    ("x z y x", 1.5),
    ("o o o z", 0.6),
    ("o z o z", 1.0),
    ("o z z z", 1.3),
    ("z z z z", 2.0),
];

pub fn four_qubit_state() -> CoefficientVector {
    CoefficientVector::from_terms(4, FOUR_QUBIT_STATE.iter().copied()).expect("valid preset")
}
