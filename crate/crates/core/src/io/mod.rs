//! Configuration, CSV tables, JSON fit reports and SVG line plots.

mod config;
mod plot;
mod report;
mod table;

pub use config::{RunConfig, CONFIG_ENV};
pub use plot::{PlotSpec, Series, SeriesStyle};
pub use report::{FitReport, ParamEstimate};
pub use table::{read_scan, read_table, write_scan, write_table, Table, SCAN_HEADERS};
