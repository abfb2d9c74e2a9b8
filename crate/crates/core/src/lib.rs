//! Exact and Monte-Carlo probability kernels of alpha-stable Levy processes
//! on the homogeneous space of positions and orientations.
//!
//! The crate is organized around the pipeline of the numerical experiments:
//! group algebra ([`se3`]), harmonic machinery ([`harmonics`]), the coupled
//! spheroidal eigenproblem ([`spectral`]), the Fourier transform on the
//! quotient ([`ghft`]), exact kernel evaluation by both spectral routes
//! ([`kernels`]), Monte-Carlo estimation ([`mc`]), and the file formats and
//! metrics used by the comparison harness ([`io`], [`stats`]).

pub mod ghft;
pub mod grids;
pub mod harmonics;
pub mod io;
pub mod kernels;
pub mod mc;
pub mod quad;
pub mod se3;
pub mod spectral;
pub mod stats;

pub use ghft::{GhGrid, GhSpectrum, JEngine, QuotientGridField, SymFunction};
pub use grids::{CubeGrid, Icosphere, SphereGrid};
pub use harmonics::{FrequencyVector, HarmonicIndex};
pub use kernels::{AngularKernelField, EvolutionParams, SpatialOptions, TimeWeight};
pub use mc::{BinGrid, EmpiricalKernel, IncrementLaw, Scheme, WalkConfig};
pub use se3::{Chart, GroupElement, LieAlgebraVector, QuotientPoint, Rotation};
pub use spectral::{EigenSystem, EigenTable};
