//! Numerical core for Langevin dynamics whose noise amplitude depends on the
//! particle density, `dY = -∇Ψ dt + sqrt(2λ + 2η ρ^(m-1)) dB`.
//!
//! The crate is `no_std` (with `alloc`) unless the default `std` feature is on.
//! `parallel` enables rayon for the particle kernels; results do not depend on
//! the thread count.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod math;

pub mod density;
pub mod diagnostics;
pub mod doubling;
pub mod error;
pub mod fpe;
pub mod invariant;
pub mod jko;
pub mod params;
pub mod particles;
pub mod potential;
pub mod special;
pub mod transport;

pub use density::{Grid, GridDensity};
pub use error::{Error, Result};
pub use params::ModelParams;
pub use potential::Potential;
