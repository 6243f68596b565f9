//! Five 150 ps frames around the IRF peak, and the per-cell conservation check.

use biphoton::engine::{accumulate_histograms, build_parallel, slice_time_resolved, EventBuildConfig};
use biphoton::fit::{fit_peak, FitOptions, PeakModel};
use biphoton::simgen::{generate, AcquisitionConfig};
use biphoton::spdc::{compute_jsa, CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};

fn main() -> biphoton::Result<()> {
    let grid = FrequencyGrid::from_spec(&GridSpec::default().with_points(256, 256))?;
    let jsa = compute_jsa(&PumpSpec::default(), &CrystalSpec::default(), &grid)?;
    let acq = AcquisitionConfig::default();
    let (tags, _) = generate(&jsa, &acq)?;
    let cfg = EventBuildConfig::default().folded(acq.pulse_period_ps()).resolve(&acq.header())?;
    let out = build_parallel(&tags, &cfg, 0)?;
    let h = accumulate_histograms(&out.coincidences, &out.events, &cfg);
    let irf = fit_peak(&h.irf, PeakModel::Gaussian, &FitOptions::default());

    let width = 6;
    let origin = (irf.center / 25.0 - 2.5 * width as f64).round() as i64;
    let s = slice_time_resolved(&out.coincidences, &cfg, width, origin, 5)?;
    for (k, n) in s.frame_totals().iter().enumerate() {
        let lo = (origin + k as i64 * width) * 25;
        println!("frame {k}  [{lo}, {}) ps  {n:>6} {}", lo + 150, "#".repeat((*n / 250) as usize));
    }
    let mut sum = s.out_of_window.clone();
    for f in &s.frames {
        sum.merge_from(f)?;
    }
    println!("frames + out-of-window == static JSI: {}", sum.counts == h.jsi.counts);
    Ok(())
}
