//! Floquet, RWA and effective-Hamiltonian models of the Mollow triplet of a
//! two-level system under concatenated continuous driving, with a brute-force
//! propagator, spectral analysis and sweep harness.

pub mod effective;
pub mod error;
pub mod experiments;
pub mod floquet;
pub mod model;
pub mod modes;
pub mod pauli;
pub mod propagator;
pub mod rwa;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub use floquet::{Convention, FloquetMode, FloquetSolution};
pub use model::{
    ConfigFile, DecayModel, DriveConfig, Envelope, InitialState, ModelTag, Scheme, TimeGrid,
    TimeTrace,
};
pub use modes::{ModeEntry, ModeSpectrum};
