//! Simulation and inversion of two-dimensional Fourier-transform state
//! tomography on weakly coupled spin-1/2 registers.
//!
//! A deviation density matrix is encoded into time-domain data by two pulse
//! sequences. The first is a 2D experiment whose t1 modulation carries every
//! off-diagonal element; the second is a small-angle 1D readout of the
//! populations. [`tomography::tomograph`] runs both and recovers the matrix by
//! linear least squares against simulated basis responses.
//!
//! ```
//! use tomo2d::{presets, tomography};
//!
//! let sys = presets::two_qubit_system();
//! let mut params = tomo2d::AcquisitionParams::defaults_for(&sys);
//! params.n_t1 = 64;
//! params.n_t2 = 128;
//! let rho = tomo2d::coefficients_to_density(&presets::two_qubit_state());
//! let result = tomography::tomograph(&sys, &rho, &params, &Default::default()).unwrap();
//! assert!(result.fidelity.unwrap() > 0.9999);
//! ```

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod export;
pub mod lstsq;
pub mod operators;
pub mod presets;
pub mod spectral;
pub mod system;
pub mod tomography;

pub use dynamics::{
    apply_unitary, detect_signal, evolve, gradient_project, EvolutionCache, GradientModel,
};
pub use error::{Error, Result};
pub use experiment::{
    run_reference, run_sequence_a, run_sequence_b, transition_table, AcquisitionParams, Signal1D,
    Signal2D, Transition, TransitionTable,
};
pub use operators::{
    coefficients_to_density, density_to_coefficients, product_operator, CMatrix, CoefficientVector,
    DeviationDensityMatrix, ProductOperatorLabel, UnitaryMatrix,
};
pub use spectral::{ProcessingParams, Spectrum1D, Spectrum2D};
pub use system::SpinSystem;
pub use tomography::{DesignMatrix, TomographyResult};

/// `(0..n).map(f)`, spread over the rayon pool when the `parallel` feature
/// is on. Output order never depends on scheduling.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
