//! Stream → events → coincidences → histograms, with Gaussian and sinc² peak fits.

use biphoton::engine::{accumulate_histograms, build_parallel, EventBuildConfig};
use biphoton::fit::{fit_peak, FitOptions, PeakModel};
use biphoton::schmidt::{jsa_from_jsi, schmidt_report};
use biphoton::simgen::{generate, AcquisitionConfig};
use biphoton::spdc::{compute_jsa, CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};

fn main() -> biphoton::Result<()> {
    let grid = FrequencyGrid::from_spec(&GridSpec::default())?;
    let jsa = compute_jsa(&PumpSpec::default(), &CrystalSpec::default(), &grid)?;
    let acq = AcquisitionConfig::default();
    let (tags, _) = generate(&jsa, &acq)?;
    let cfg = EventBuildConfig::default().folded(acq.pulse_period_ps()).resolve(&acq.header())?;
    let out = build_parallel(&tags, &cfg, 0)?;
    let h = accumulate_histograms(&out.coincidences, &out.events, &cfg);
    println!("{:?}", out.diagnostics);

    let opts = FitOptions::default();
    let irf = fit_peak(&h.irf, PeakModel::Gaussian, &opts);
    let sig = fit_peak(&h.signal_spectrum, PeakModel::Gaussian, &opts);
    let idl = fit_peak(&h.idler_spectrum, PeakModel::SincSquared, &opts);
    println!("IRF FWHM           {:.1} ps", irf.fwhm);
    println!("signal FWHM        {:.0} ps = {:.3} mm = {:.3} nm", sig.fwhm, sig.fwhm * acq.dld.v_mm_per_ps / 2.0, sig.fwhm * acq.dld.nm_per_ps());
    println!("idler sinc² width  {:.0} ps, FWHM {:.0} ps = {:.2} nm", idl.width, idl.fwhm, idl.fwhm / 255.0);
    let k = schmidt_report(&jsa_from_jsi(&h.jsi)?)?.schmidt_number;
    println!("JSI K = {k:.3}  ({} coincidences in range)", h.jsi.in_range());
    Ok(())
}
