//! Experiment harness: configuration, data generation, pipeline runs with
//! evaluation against the generating mixture, parameter sweeps, and matrix
//! file formats used by the command-line tool.

pub mod config;
pub mod matrix_io;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, Pipeline};
pub use run::{generate, generate_for, run_pipeline, Dataset, RunReport};
pub use sweep::{sweep, SweepRow};

/// Keep the LP solver's internal panics off stderr. The core library catches
/// them and retries, so they are not failures; every other panic still goes
/// through the previous hook.
pub fn silence_solver_panics() {
    let previous = std::panic::take_hook();
    std::panic::set_hook(Box::new(move |info| {
        if info.location().is_some_and(|l| l.file().contains("minilp")) {
            return;
        }
        previous(info);
    }));
}
