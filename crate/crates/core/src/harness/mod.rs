//! Configuration, field files, experiment drivers and CSV/SVG output.

pub mod checks;
pub mod config;
pub mod field_io;
pub mod fit;
pub mod plot;
pub mod sweep;

pub use config::ExperimentConfig;
pub use fit::{fit_holder, fit_line, strictly_co_monotone, HolderFit, LineFit};
pub use plot::{emit_plots, plot_bounds, scatter_svg};
pub use checks::{go_check, recover_once, GoCheckRow};
pub use sweep::{
    basis_convergence, read_sweep_csv, relative_error, run_recovery, run_sweep, write_sweep_csv, write_table, RecoveryRun, SweepContext,
    SweepRecord,
};
