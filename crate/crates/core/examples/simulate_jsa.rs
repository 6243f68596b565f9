//! Default LBO source: marginal widths and Schmidt number for both phase-matching models.

use biphoton::schmidt::schmidt_report;
use biphoton::spdc::{compute_jsa, CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};

fn main() -> biphoton::Result<()> {
    let pump = PumpSpec::default();
    let grid = FrequencyGrid::from_spec(&GridSpec::default())?;
    for (name, crystal) in [("sellmeier", CrystalSpec::default()), ("linearized", CrystalSpec::linearized_default())] {
        let jsa = compute_jsa(&pump, &crystal, &grid)?;
        let r = schmidt_report(&jsa)?;
        println!(
            "{name:>10}: signal {:.4} nm  idler {:.3} nm  K {:.3}  P {:.4}",
            jsa.signal_fwhm_nm().unwrap_or(f64::NAN),
            jsa.idler_fwhm_nm().unwrap_or(f64::NAN),
            r.schmidt_number,
            r.purity
        );
    }
    Ok(())
}
