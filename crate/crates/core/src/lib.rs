//! Regeneration (renewal) times for nonlinear and age-dependent Hawkes processes.
//!
//! The crate builds the coupled band system that turns a Hawkes path driven by a
//! Poisson random measure into i.i.d. regeneration blocks, together with the
//! deterministic envelope functions it needs, cluster and random-exchange
//! helpers, and block statistics.
//!
//! Deterministic numerics (`kernels`) are generic over [`Scalar`]; the
//! stochastic layers run on `f64`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cluster;
mod error;
pub mod hawkes;
pub mod kernels;
pub mod prm;
pub mod renewal;
pub mod reprocess;
pub mod stats;

pub use error::{Error, Result};

/// Floating scalar usable by the deterministic kernel layer.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Kernel = kernels::Kernel<f64>;
pub type Kernel32 = kernels::Kernel<f32>;
pub type Gamma = kernels::Gamma<f64>;
pub type Gamma32 = kernels::Gamma<f32>;
pub type Profile = kernels::Profile<f64>;
pub type Profile32 = kernels::Profile<f32>;
pub type RateSpec = kernels::RateSpec<f64>;
pub type RateSpec32 = kernels::RateSpec<f32>;
pub type Envelope = kernels::Envelope<f64>;
pub type Envelope32 = kernels::Envelope<f32>;

pub use kernels::Setup;
