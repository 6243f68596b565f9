//! Event-building throughput. `cargo run --release --example throughput [seconds] [threads]`

use std::time::Instant;

use biphoton::engine::{build, build_parallel, EventBuildConfig};
use biphoton::simgen::{generate, AcquisitionConfig};
use biphoton::spdc::{compute_jsa, CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};

fn main() -> biphoton::Result<()> {
    let mut args = std::env::args().skip(1);
    let seconds: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7.0);
    let threads: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let grid = FrequencyGrid::from_spec(&GridSpec::default().with_points(128, 128))?;
    let jsa = compute_jsa(&PumpSpec::default(), &CrystalSpec::default(), &grid)?;
    let acq = AcquisitionConfig { duration_s: seconds, ..Default::default() };
    let (tags, _) = generate(&jsa, &acq)?;
    let cfg = EventBuildConfig::default().resolve(&acq.header())?;

    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let t = Instant::now();
        std::hint::black_box(build(&tags, &cfg)?);
        best = best.min(t.elapsed().as_secs_f64());
    }
    println!("{} tags, serial: {:.3e} tags/s", tags.len(), tags.len() as f64 / best);
    let mut best_par = f64::INFINITY;
    for _ in 0..5 {
        let t = Instant::now();
        std::hint::black_box(build_parallel(&tags, &cfg, threads)?);
        best_par = best_par.min(t.elapsed().as_secs_f64());
    }
    println!("parallel ({threads} threads, 0 = all): {:.3e} tags/s", tags.len() as f64 / best_par);
    Ok(())
}
