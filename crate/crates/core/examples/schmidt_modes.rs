//! Leading Schmidt modes of the default JSA and the truncation residual.

use biphoton::schmidt::schmidt_decompose;
use biphoton::spdc::{compute_jsa, CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};

fn main() -> biphoton::Result<()> {
    let grid = FrequencyGrid::from_spec(&GridSpec::default().with_points(256, 256))?;
    let jsa = compute_jsa(&PumpSpec::default(), &CrystalSpec::default(), &grid)?;
    for modes in [1, 3, 8, 20] {
        let (r, _) = schmidt_decompose(&jsa, Some(modes))?;
        println!("{modes:>2} modes: residual {:.3e}", r.residual.unwrap());
    }
    let (r, m) = schmidt_decompose(&jsa, Some(5))?;
    println!("K = {:.4}, P = {:.4}", r.schmidt_number, r.purity);
    for (j, l) in r.eigenvalues.iter().take(5).enumerate() {
        let peak = m.signal[j].iter().map(|z| z.norm()).fold(0.0, f64::max);
        println!("lambda_{j} = {l:.5}  (signal mode peak |g| = {peak:.3})");
    }
    Ok(())
}
