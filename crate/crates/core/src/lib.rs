//! Heralded W-class entanglement of atomic ensembles.
//!
//! The crate simulates the preparation of `n`-party W states from collective
//! atomic excitations using Raman pumping, 50/50 interference of the Stokes
//! light and threshold photon detection, and the teleportation of an atomic
//! "polarization" qubit to two receivers over a pair of W states.
//!
//! * [`fock`]: sparse Fock states and the bosonic operator algebra.
//! * [`optics`]: beam splitters, pumping, repumping, loss and detection.
//! * [`protocol`]: the repeat-until-success preparation and teleportation.
//! * [`analysis`]: seeded batch runs and estimators.
//! * [`cli`]: command-line front end and report schema.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod fock;
pub mod optics;
pub mod protocol;

pub use error::{Error, Result};
pub use fock::{CollectiveModeModel, FockState, ModeIndex, ModeKind, ModeRegistry};
