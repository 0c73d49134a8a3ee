//! Weakly coupled spin-1/2 registers.
//!
//! Qubit 0 is the leftmost (most significant) tensor factor. In the
//! computational basis, bit value 0 of a qubit means spin-up (m = +1/2).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest register the dense simulator accepts.
pub const MAX_SPINS: usize = 10;

/// A scalar J coupling between two spins, in Hz. Indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub a: usize,
    pub b: usize,
    pub hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    larmor_hz: Vec<f64>,
    couplings: Vec<Coupling>,
    t2_s: f64,
}

impl SpinSystem {
    /// Validates and builds a spin system.
    ///
    /// Couplings are given as `(a, b, hz)` with `a < b`, 0-based. Pairs that
    /// are not listed are uncoupled.
    pub fn new(larmor_hz: Vec<f64>, couplings: &[(usize, usize, f64)], t2_s: f64) -> Result<Self> {
        let n = larmor_hz.len();
        if n == 0 {
            return Err(Error::InvalidSystem("at least one spin is required".into()));
        }
        if n > MAX_SPINS {
            return Err(Error::InvalidSystem(format!(
                "{n} spins exceeds the supported maximum of {MAX_SPINS}"
            )));
        }
        if let Some(j) = larmor_hz.iter().position(|f| !f.is_finite()) {
            return Err(Error::InvalidSystem(format!(
                "Larmor frequency of spin {} is not finite",
                j + 1
            )));
        }
        if !(t2_s.is_finite() && t2_s > 0.0) {
            return Err(Error::InvalidSystem(format!(
                "T2 must be positive, got {t2_s} s"
            )));
        }

        let mut stored: Vec<Coupling> = Vec::with_capacity(couplings.len());
        for &(a, b, hz) in couplings {
            if a >= b {
                return Err(Error::InvalidSystem(format!(
                    "coupling ({}, {}) must be listed with the lower spin first",
                    a + 1,
                    b + 1
                )));
            }
            if b >= n {
                return Err(Error::SpinOutOfRange { index: b, n });
            }
            if !hz.is_finite() {
                return Err(Error::InvalidSystem(format!(
                    "coupling ({}, {}) is not finite",
                    a + 1,
                    b + 1
                )));
            }
            if stored.iter().any(|c| c.a == a && c.b == b) {
                return Err(Error::InvalidSystem(format!(
                    "coupling ({}, {}) listed twice",
                    a + 1,
                    b + 1
                )));
            }
            stored.push(Coupling { a, b, hz });
        }
        stored.sort_by_key(|c| (c.a, c.b));

        let sys = SpinSystem {
            larmor_hz,
            couplings: stored,
            t2_s,
        };
        if let Err(e) = crate::experiment::transition_table(&sys) {
            log::warn!("{e}; tomography on this system will be refused");
        }
        Ok(sys)
    }

    pub fn n_spins(&self) -> usize {
        self.larmor_hz.len()
    }

    /// Hilbert-space dimension, 2^n.
    pub fn dim(&self) -> usize {
        1 << self.n_spins()
    }

    pub fn larmor_hz(&self) -> &[f64] {
        &self.larmor_hz
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn coupling_hz(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.couplings
            .iter()
            .find(|c| c.a == a && c.b == b)
            .map_or(0.0, |c| c.hz)
    }

    pub fn t2_s(&self) -> f64 {
        self.t2_s
    }

    /// m_j = +1/2 or -1/2 for spin `j` in basis state `state`.
    pub fn spin_projection(&self, state: usize, j: usize) -> f64 {
        if bit(state, j, self.n_spins()) {
            -0.5
        } else {
            0.5
        }
    }

    /// Diagonal of the Hamiltonian in Hz: sum_j w_j m_j + sum_{j<k} J_jk m_j m_k.
    pub fn energies(&self) -> Vec<f64> {
        let n = self.n_spins();
        (0..self.dim())
            .map(|s| {
                let zeeman: f64 = (0..n)
                    .map(|j| self.larmor_hz[j] * self.spin_projection(s, j))
                    .sum();
                let scalar: f64 = self
                    .couplings
                    .iter()
                    .map(|c| c.hz * self.spin_projection(s, c.a) * self.spin_projection(s, c.b))
                    .sum();
                zeeman + scalar
            })
            .collect()
    }

    /// Short stable digest identifying this system, used in provenance and
    /// cache keys.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spin system serializes");
        hex_prefix(&Sha256::digest(&canonical), 16)
    }
}

/// The weak-coupling Hamiltonian as a real diagonal matrix in Hz.
pub fn hamiltonian(sys: &SpinSystem) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sys.energies()))
}

/// True when spin `j` is down in basis state `state` of an `n`-spin register.
#[inline]
pub(crate) fn bit(state: usize, j: usize, n: usize) -> bool {
    (state >> (n - 1 - j)) & 1 == 1
}

#[inline]
pub(crate) fn spin_mask(j: usize, n: usize) -> usize {
    1 << (n - 1 - j)
}

pub(crate) fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut out = String::with_capacity(chars);
    for b in bytes {
        if out.len() >= chars {
            break;
        }
        out.push_str(&format!("{b:02x}"));
    }
    out.truncate(chars);
    out
}
