//! Support code for the `sparselaw` command-line tool: run-table I/O,
//! reproducible number formatting and SVG contour plots.

pub mod format;
pub mod plot;
pub mod table;

pub use format::num;
pub use plot::{emit_contour_plot, PlotError};
pub use table::{parse_run_table, write_residuals, write_run_table, write_run_table_json, TableError, HEADER};
