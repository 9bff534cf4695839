//! Simulation and verification kernels for diverse stock markets and
//! ε-consistent price systems.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and an explicit [`RngStream`]; file formats,
//! configuration and parallel drivers live in the `divcps` crate.
//!
//! Module map:
//!
//! - [`grid`], [`region`], [`rng`]: shared domain types.
//! - [`sde`]: Euler–Maruyama on the log scale, the Fernholz drift, the
//!   arctan two-asset market and path extension.
//! - [`conditioned`]: pre-model conditioned to stay in `O(δ)` by rejection.
//! - [`diversity`]: market weights, diversity verdicts, portfolio values.
//! - [`cps`]: ε-process, random walk with retirement, entropy tilting on
//!   scenario trees, shadow prices and certificates.
//! - [`bessel`]: radial decomposition, squared Bessel comparison and
//!   full-support probes.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bessel;
pub mod conditioned;
pub mod cps;
pub mod diversity;
mod error;
pub mod grid;
pub mod linalg;
pub mod lp;
pub(crate) mod math;
pub mod region;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{CoreError, CoreResult};
pub use grid::{GridPath, MarketPath, TimeGrid};
pub use region::{dist_to_complement, DiversityRegion};
pub use rng::RngStream;
