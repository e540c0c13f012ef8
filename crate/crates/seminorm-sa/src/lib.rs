//! Seminorm fixed-point toolkit: seminorm algebra and Moreau envelopes,
//! Lyapunov stability of linear systems with respect to seminorms, Markovian
//! stochastic approximation under seminorm contraction with finite-sample
//! bound envelopes, and average-reward reinforcement learning (multi-step TD
//! with linear features and J-step synchronous Q-learning).

pub mod acceptance;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod lyapunov;
pub mod markov;
pub mod moreau;
pub mod report;
pub mod rl;
pub mod sa;
pub mod schedule;
pub mod seminorm;
pub mod spectral;

pub use error::{Error, Result};

pub use nalgebra;

/// Applies the `SEMINORM_SA_THREADS` cap to the global rayon pool. A missing
/// or unparsable value keeps rayon's default; repeat calls are no-ops.
pub fn configure_threads_from_env() {
    if let Ok(v) = std::env::var("SEMINORM_SA_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}
