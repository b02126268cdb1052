//! Run simulated roll-outs and derive tables from their traces.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fwup_core::harness::{
    overhead_report, parse_size, progress_table, rate_table, retx_blocks, run_scenario, sweep,
    table_csv, write_run, OverheadModel, SweepAxis,
};
use fwup_core::sim::{read_csv, to_csv_string, Scenario, SimError};

#[derive(Parser, Debug)]
#[command(version, about = "Firmware roll-out simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario. Without --out the event CSV goes to stdout
    /// and the summary to stderr.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for events.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a scenario over axis values and seeds.
    Sweep {
        scenario: PathBuf,
        /// One of: chunks, chunk_size, link.loss, link.collision, timing.poll_period_s, tag_len.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        /// Directory for runs.csv, medians.csv and sweep.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-chunk signature overhead for a given frame budget.
    Overhead {
        #[arg(long, default_value_t = 128)]
        mtu: u64,
        #[arg(long, default_value_t = 16)]
        name_bytes: u64,
        #[arg(long, default_value_t = 16)]
        structural_bytes: u64,
        #[arg(long, default_value_t = 23)]
        link_bytes: u64,
        #[arg(long, default_value_t = 64)]
        sig_bytes: u64,
        /// Assume header compression.
        #[arg(long)]
        compressed: bool,
        /// Image size in bytes, or with a K/KiB/M/MiB suffix.
        #[arg(long, value_parser = size_arg)]
        firmware_size: u64,
    },
    /// Derive a plot table from an event CSV.
    Tables {
        csv: PathBuf,
        #[arg(long, value_enum)]
        kind: TableKind,
        #[arg(long, default_value_t = 100)]
        block_size: u32,
        /// Chunk count for retx blocks; inferred from the trace by default.
        #[arg(long)]
        chunks: Option<u32>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableKind {
    Progress,
    Rate,
    Retx,
}

fn size_arg(s: &str) -> Result<u64, String> {
    parse_size(s).ok_or_else(|| format!("invalid size {s:?}"))
}

enum Failure {
    Invalid(String),
    Other(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Other(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            scenario,
            seed,
            out,
        } => {
            let output = run_scenario(&scenario, seed)?;
            match out {
                Some(dir) => {
                    write_run(&output, &dir).map_err(io)?;
                    println!("{}", json(&output.summary));
                }
                None => {
                    print!("{}", to_csv_string(&output.records));
                    eprintln!("{}", json(&output.summary));
                }
            }
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            seeds,
            jobs,
            out,
        } => {
            let base = Scenario::from_file(&scenario)?;
            let threads =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let result = sweep(&base, axis, &values, &seeds, threads)?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(io)?;
                fs::write(dir.join("runs.csv"), result.rows_csv()).map_err(io)?;
                fs::write(dir.join("medians.csv"), result.medians_csv()).map_err(io)?;
                fs::write(dir.join("sweep.json"), json(&result) + "\n").map_err(io)?;
            }
            print!("{}", result.rows_csv());
            println!();
            print!("{}", result.medians_csv());
        }
        Command::Overhead {
            mtu,
            name_bytes,
            structural_bytes,
            link_bytes,
            sig_bytes,
            compressed,
            firmware_size,
        } => {
            let model = OverheadModel {
                mtu,
                name_bytes,
                structural_bytes,
                link_header_bytes: link_bytes,
                signature_bytes: sig_bytes,
                compressed,
            };
            let r = overhead_report(&model, firmware_size)
                .map_err(|e| Failure::Invalid(e.to_string()))?;
            let report = serde_json::json!({
                "firmware_size": firmware_size,
                "payload_capacity": r.payload_capacity,
                "chunk_count": r.chunk_count,
                "signature_overhead_bytes": r.signature_overhead_bytes,
                "signature_overhead_kib": r.signature_overhead_bytes as f64 / 1024.0,
            });
            println!("{}", json(&report));
        }
        Command::Tables {
            csv,
            kind,
            block_size,
            chunks,
        } => {
            let file = fs::File::open(&csv)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", csv.display())))?;
            let records = read_csv(file).map_err(|e| Failure::Invalid(e.to_string()))?;
            let table = match kind {
                TableKind::Progress => table_csv(&progress_table(&records)),
                TableKind::Rate => table_csv(&rate_table(&records)),
                TableKind::Retx => table_csv(&retx_blocks(&records, block_size, chunks)),
            };
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("fwsim: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("fwsim: {msg}");
            ExitCode::from(1)
        }
    }
}
