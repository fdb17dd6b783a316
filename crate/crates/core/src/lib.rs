//! Simulation and verification lab for random flights in a Poissonian environment.
//!
//! A particle moves at unit speed and changes direction at clocked Poisson
//! arrival times `T_k = f(Γ_k)`. Depending on the growth of the clock `f`
//! (power, exponential, super-exponential) the rescaled broken line converges
//! to a time-changed Brownian motion, to a piecewise-linear process with
//! infinitely many segments near zero, or degenerates to a straight line.
//! This crate samples the pre-limit paths, samples the limit processes
//! exactly, and turns the convergence statements into reproducible numerical
//! checks. A second family of modules covers the diffusion approximation of
//! the associated Markov chains: the "walk over ellipsoids" with its
//! closed-form one-step densities and Bessel-integral characteristic
//! function, Stroock–Varadhan truncated-moment diagnostics, and a d=1
//! transition-density expansion with a parametrix correction term.
//!
//! Everything is driven by explicit, replayable RNG streams: the same
//! `(seed, stream_index)` pair always reproduces the same draw sequence,
//! regardless of thread count.

pub mod direction_law;
pub mod edgeworth;
pub mod ellipsoid_chain;
pub mod error;
pub mod flight_path;
pub mod limit_laws;
pub mod linalg;
pub mod poisson_clock;
pub mod rng;
pub mod scenario;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;

/// Identifier of the pinned RNG algorithm, recorded in every report.
pub const RNG_ALGORITHM: &str = "chacha8 (seed_from_u64 + set_stream)";

/// Library version as baked in at compile time.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
