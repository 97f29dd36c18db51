//! Transmit beamspace design for colocated MIMO radar with search-free DOA
//! estimation at the receiver.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense complex linear algebra, grid quadrature, seeded RNG streams
//! - [`array`]: array geometries, steering vectors, beampatterns, waveform-count selection
//! - [`design`]: paired (conjugate-flip) beamspace matrices, the SDP relaxation of the
//!   minmax beampattern fit, randomized rounding and the spatial-division design
//! - [`rotation`]: unitary rotation of the free beams for coherent in-sector accumulation
//! - [`sim`]: matched-filter domain snapshot generation
//! - [`doa`]: phase-profile ESPRIT, MUSIC and the two-target resolution test

pub mod array;
pub mod design;
pub mod doa;
mod error;
pub mod numerics;
pub mod rotation;
pub mod sim;

pub use error::{Error, Result};
pub use numerics::{c64, CMatrix, CVector, RngStream};
