use biphoton::schmidt::schmidt_report;
use biphoton::spdc::{compute_jsa, tune_linearized, CrystalSpec, FrequencyGrid, GridSpec, LinearizedCoeffs, PumpSpec};

#[test]
fn tuning_reproduces_frozen_coefficients() {
    let pump = PumpSpec::default();
    let grid = FrequencyGrid::from_spec(&GridSpec::default()).unwrap();
    let start = LinearizedCoeffs { tau_s_ps_per_m: 80.0, tau_i_ps_per_m: 250.0, ..LinearizedCoeffs::default() };
    let c = tune_linearized(&pump, &grid, start, 1.55, 13.6).unwrap();
    let frozen = LinearizedCoeffs::default();
    assert!((c.tau_s_ps_per_m / frozen.tau_s_ps_per_m - 1.0).abs() < 1e-5, "{c:?}");
    assert!((c.tau_i_ps_per_m / frozen.tau_i_ps_per_m - 1.0).abs() < 1e-5, "{c:?}");
}

#[test]
fn linearized_and_sellmeier_models_agree_on_widths() {
    let pump = PumpSpec::default();
    let grid = FrequencyGrid::from_spec(&GridSpec::default().with_points(256, 256)).unwrap();
    let lin = compute_jsa(&pump, &CrystalSpec::linearized_default(), &grid).unwrap();
    let sel = compute_jsa(&pump, &CrystalSpec::default(), &grid).unwrap();
    for (a, b) in [
        (lin.signal_fwhm_nm().unwrap(), sel.signal_fwhm_nm().unwrap()),
        (lin.idler_fwhm_nm().unwrap(), sel.idler_fwhm_nm().unwrap()),
    ] {
        assert!((a / b - 1.0).abs() < 0.05, "{a} vs {b}");
    }
    let (kl, ks) = (schmidt_report(&lin).unwrap().schmidt_number, schmidt_report(&sel).unwrap().schmidt_number);
    assert!((kl / ks - 1.0).abs() < 0.15, "{kl} vs {ks}");
}
