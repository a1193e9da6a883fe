//! Sweeps the learning stoppage for both methods and writes the CSV.
//!
//! cargo run --example lambda_sweep [-- <sweep.toml> <out.csv>]

use std::path::PathBuf;

use ppgd::bench::{run_sweep, write_sweep_csv, write_sweep_csv_file, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let spec_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/sweep.toml"));
    let spec = SweepSpec::load(&spec_path)?;
    let rows = run_sweep(&spec)?;

    write_sweep_csv(&rows, std::io::stdout())?;
    if let Some(out) = args.next() {
        write_sweep_csv_file(&rows, &out)?;
        eprintln!("wrote {out}");
    }
    Ok(())
}
