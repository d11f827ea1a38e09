//! Sweeps the expected horizon and writes the CSV produced by the `sweep`
//! command to stdout. Revenue normalised by the best row climbs towards 1.

use arrmdp::experiment::{metadata_line, run_sweep, write_sweep_csv, SolveRequest, SolverKind, SweepAxis};
use arrmdp::models::{bitcoin::BitcoinParams, ModelSpec};

fn main() -> arrmdp::Result<()> {
    let spec = ModelSpec::Bitcoin(BitcoinParams::new(0.4, 0.5, 20)?);
    let base = SolveRequest::new(spec, SolverKind::Pto);
    let horizons = [1e2, 1e3, 1e4, 1e5, 1e6];
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let out = run_sweep(&base, SweepAxis::Horizon, &horizons, jobs, None)?;
    let stdout = std::io::stdout();
    metadata_line(stdout.lock(), "sweep")?;
    write_sweep_csv(&out.rows, false, stdout.lock())?;
    if let Some((v, e)) = out.failure {
        eprintln!("point {v} failed: {e}");
    }
    Ok(())
}
