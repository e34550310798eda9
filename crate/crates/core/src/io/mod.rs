//! Configuration, experiment drivers and file output.

mod config;
mod driver;
mod output;

pub use config::{bottom_row_set, load_config, DtEstimates, Entries, SimConfig};
pub use driver::{
    cell_report, compare, error_study, point_interpolate, simulate, space_time_l2, sweep, CellRow, ErrorRow, Level,
    RunReport, Snapshot, SweepRow,
};
pub use output::{
    write_activity, write_cells, write_convergence, write_errors, write_macro_vtk, write_profile, write_report,
    write_steps, write_sweep,
};
