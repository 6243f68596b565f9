//! Calibration maps and the two peak models on synthetic data.

use biphoton::calibration::{dld_position, idler_wavelength, signal_wavelength, DldCalibration, FibreCalibration};
use biphoton::fit::{fit_peak_xy, FitOptions, FitParams, PeakModel};

fn main() -> biphoton::Result<()> {
    let dld = DldCalibration::default();
    let fibre = FibreCalibration::default();
    for dt in [-3200, -800, 0, 800, 3200] {
        let x = dld_position(dt, 25, &dld)?;
        println!("dt_x {dt:>5} ticks -> x {x:>6.2} mm -> {:.3} nm", signal_wavelength(x, &dld)?);
    }
    for tau in [307_898, 308_000, 308_102] {
        println!("tau {tau} ticks -> {:.2} nm", idler_wavelength(tau, 25, &fibre));
    }

    let x: Vec<f64> = (0..400).map(|k| -10_000.0 + 50.0 * k as f64).collect();
    for (model, width) in [(PeakModel::Gaussian, 1_000.0), (PeakModel::SincSquared, 1_270.0)] {
        let truth = FitParams { center: 250.0, width, amplitude: 500.0, baseline: 12.0 };
        let y: Vec<f64> = x.iter().map(|&v| model.eval(v, &truth)).collect();
        let f = fit_peak_xy(&x, &y, model, &FitOptions::default());
        println!("{model:?}: width {:.6} (true {width}), FWHM {:.3}, {} iterations", f.width, f.fwhm, f.iterations);
    }
    Ok(())
}
