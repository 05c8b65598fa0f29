//! Semiparametric Value-at-Risk and Expected Shortfall forecasting from
//! quantile-based conditional scale dynamics, with GARCH-family and joint
//! VaR-ES benchmarks, an asymmetric-power-ARCH simulation engine, and
//! bootstrap model-confidence-set evaluation.

pub mod backtest;
pub mod caviar;
pub mod garch;
pub mod joint_ves;
pub mod dist;
pub mod error;
pub mod eval;
pub mod optim;
pub mod quantile;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

/// Caps the worker pool at `QBSD_THREADS` when the variable is set; absent
/// or unparsable values leave one worker per available core. Call once at
/// process start, before any parallel work.
pub fn configure_thread_pool_from_env() {
    if let Ok(value) = std::env::var("QBSD_THREADS") {
        if let Ok(n) = value.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
