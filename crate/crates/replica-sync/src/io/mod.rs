//! Configuration, result tables and the binary instance container.

mod config;
mod container;
mod table;

pub use config::{load_config, parse_config, parse_group, ExactConfig, QaConfig, RawChannel, RunConfig, SimulateConfig, SolverConfig};
pub use container::{read_instance, write_instance, MAGIC};
pub use table::{format_float, Cell, Format, Table, VERSION};
