//! Rate tuning against observed singles/coincidences and the resulting report.

use biphoton::engine::{build_parallel, rates_report, EventBuildConfig};
use biphoton::simgen::{generate, tune_rates, AcquisitionConfig, RateTargets};
use biphoton::spdc::{compute_jsa, CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};

fn main() -> biphoton::Result<()> {
    let acq = AcquisitionConfig::default();
    let t = tune_rates(&RateTargets::default(), &acq);
    println!("pair rate {:.0} Hz  mu {:.4e}  eta_s {:.4}  eta_i {:.4}  survival {:.4}", t.pair_rate_hz, t.pair_prob_per_pulse, t.eta_signal, t.eta_idler, t.assembly_survival);

    let grid = FrequencyGrid::from_spec(&GridSpec::default().with_points(128, 128))?;
    let jsa = compute_jsa(&PumpSpec::default(), &CrystalSpec::default(), &grid)?;
    let (tags, _) = generate(&jsa, &acq)?;
    let cfg = EventBuildConfig::default().resolve(&acq.header())?;
    let out = build_parallel(&tags, &cfg, 0)?;
    let r = rates_report(&out, &acq.channels, acq.duration_s)?;
    for (ch, hz) in &r.singles_hz {
        println!("{ch:>7} {hz:>10.0} Hz");
    }
    println!("coincidences {:.0} Hz, accidentals {:.0} Hz", r.coincidence_hz, r.accidental_hz);
    println!("coincidence/accidental {:.1}, coincidence/singles {:.3}", r.coincidence_to_accidental.unwrap_or(f64::NAN), r.coincidence_to_singles.unwrap_or(f64::NAN));
    Ok(())
}
