//! Synthesise 0.1 s of the default acquisition and compare tag counts with the rate algebra.

use biphoton::simgen::{expected_singles_hz, generate, AcquisitionConfig};
use biphoton::spdc::{compute_jsa, CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};

fn main() -> biphoton::Result<()> {
    let grid = FrequencyGrid::from_spec(&GridSpec::default().with_points(256, 256))?;
    let jsa = compute_jsa(&PumpSpec::default(), &CrystalSpec::default(), &grid)?;
    let cfg = AcquisitionConfig { duration_s: 0.1, ..Default::default() };
    let (tags, truth) = generate(&jsa, &cfg)?;
    let count = |ch| tags.iter().filter(|t| t.channel == ch).count() as f64 / cfg.duration_s;
    let (mcp, snspd, sync) = expected_singles_hz(&cfg);
    println!("{} tags, {} pairs, {} detected in both arms", tags.len(), truth.pairs.len(), truth.detected_pairs());
    println!("mcp   {:>9.0} Hz (expected {mcp:.0})", count(cfg.channels.mcp));
    println!("snspd {:>9.0} Hz (expected {snspd:.0})", count(cfg.channels.snspd));
    println!("sync  {:>9.0} Hz (expected {sync:.0})", count(cfg.channels.sync));
    Ok(())
}
