//! Experiment drivers on top of the simulator: single runs, parameter
//! sweeps, frame overhead arithmetic and plot tables.

mod overhead;
mod sweep;
mod tables;

use std::fs;
use std::io;
use std::path::Path;

pub use overhead::{
    overhead_report, parse_size, NoPayloadRoom, OverheadModel, OverheadReport,
    COMPRESSED_STRUCTURAL_BYTES,
};
pub use sweep::{sweep, total_completion, SweepAxis, SweepMedian, SweepResult, SweepRow};
pub use tables::{
    progress_table, rate_table, retx_blocks, table_csv, ProgressRow, RateRow, RetxBlockRow,
};

use crate::sim::{self, RunOutput, Scenario, SimError};

/// Load a scenario file, optionally override its seed, and run it.
pub fn run_scenario(path: &Path, seed: Option<u64>) -> Result<RunOutput, SimError> {
    let mut scenario = Scenario::from_file(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    sim::run(&scenario)
}

/// Write `events.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_run(out: &RunOutput, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("events.csv"), sim::to_csv_string(&out.records))?;
    let summary = serde_json::to_string_pretty(&out.summary).map_err(io::Error::other)?;
    fs::write(dir.join("summary.json"), summary + "\n")
}
