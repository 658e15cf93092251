//! Configuration-driven experiment runner for `fraclaws-core`.
//!
//! A run is one config file: [`config::parse_config`] resolves it to a
//! [`config::RunConfig`] and [`run::run`] executes the selected experiment,
//! writing `summary.json` and data files into the output directory.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, Experiment, RunConfig};
pub use run::{run, Assertion, RunError, Status, Summary};

/// Environment variable holding the worker thread count (default: all cores).
pub const THREADS_ENV: &str = "FRACLAWS_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`]. Results do not depend
/// on the thread count.
pub fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, found `{v}`"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be a positive integer, found 0"));
    }
    // a pool built earlier in the process stays in place
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
