//! Detector-native observables to physical axes.
//!
//! Delay-line anode: a charge cloud landing at x on a wire of end-to-end
//! propagation time t_a reaches the ends after x/v and t_a − x/v, so
//!
//! ```text
//! Δt_x = t(X1) − t(X2) = 2x/v − t_a      x = (Δt_x + t_a)·v/2
//! ```
//!
//! Fibre spectrograph: arrival delay linear in wavelength with slope D.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIGNAL_REFERENCE_NM: f64 = 515.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DldCalibration {
    /// End-to-end anode propagation time.
    pub t_a_ps: f64,
    /// Signal speed along the delay line, mm/ps.
    pub v_mm_per_ps: f64,
    /// nm per mm at the detector plane.
    pub grating_dispersion_nm_per_mm: f64,
    /// Position of 515.0 nm.
    pub x_center_mm: f64,
    /// Jitter allowance beyond ±t_a accepted by [`dld_position`].
    pub guard_ps: f64,
}

impl Default for DldCalibration {
    fn default() -> Self {
        Self {
            t_a_ps: 80_000.0,
            v_mm_per_ps: 0.5e-3,
            grating_dispersion_nm_per_mm: 1.60 / 1.86,
            x_center_mm: 20.0,
            guard_ps: 2_000.0,
        }
    }
}

impl DldCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_a_ps > 0.0) || !(self.v_mm_per_ps > 0.0) {
            return Err(Error::config("dld t_a and v must be > 0"));
        }
        if self.grating_dispersion_nm_per_mm == 0.0 || !self.grating_dispersion_nm_per_mm.is_finite() {
            return Err(Error::config("dld grating_dispersion must be non-zero"));
        }
        if !(self.guard_ps >= 0.0) {
            return Err(Error::config("dld guard must be >= 0"));
        }
        Ok(())
    }

    /// Active length t_a·v.
    pub fn active_length_mm(&self) -> f64 {
        self.t_a_ps * self.v_mm_per_ps
    }

    /// x for a Δt_x in ps, no range check.
    pub fn position_from_dt_ps(&self, dt_ps: f64) -> f64 {
        0.5 * (dt_ps + self.t_a_ps) * self.v_mm_per_ps
    }

    /// Δt_x (ps) of a hit at `x_mm`.
    pub fn dt_ps_from_position(&self, x_mm: f64) -> f64 {
        2.0 * x_mm / self.v_mm_per_ps - self.t_a_ps
    }

    /// λ = 515 nm + g·(x − x_center), no range check.
    pub fn wavelength_from_position(&self, x_mm: f64) -> f64 {
        SIGNAL_REFERENCE_NM + self.grating_dispersion_nm_per_mm * (x_mm - self.x_center_mm)
    }

    pub fn position_from_wavelength(&self, nm: f64) -> f64 {
        self.x_center_mm + (nm - SIGNAL_REFERENCE_NM) / self.grating_dispersion_nm_per_mm
    }

    pub fn wavelength_from_dt_ps(&self, dt_ps: f64) -> f64 {
        self.wavelength_from_position(self.position_from_dt_ps(dt_ps))
    }

    pub fn dt_ps_from_wavelength(&self, nm: f64) -> f64 {
        self.dt_ps_from_position(self.position_from_wavelength(nm))
    }

    /// d λ / d Δt_x in nm/ps.
    pub fn nm_per_ps(&self) -> f64 {
        0.5 * self.v_mm_per_ps * self.grating_dispersion_nm_per_mm
    }
}

/// x = (Δt_x + t_a)·v/2 for a tick difference.
pub fn dld_position(dt_x: i64, tick_ps: u32, cal: &DldCalibration) -> Result<f64> {
    let dt_ps = dt_x as f64 * tick_ps as f64;
    let limit = cal.t_a_ps + cal.guard_ps;
    if dt_ps.abs() > limit {
        return Err(Error::OutOfDomain { what: "dt_x (ps)", value: dt_ps, domain: format!("[-{limit}, {limit}]") });
    }
    Ok(cal.position_from_dt_ps(dt_ps))
}

/// Inverse of [`dld_position`], rounded to the nearest tick.
pub fn dld_dt(x_mm: f64, tick_ps: u32, cal: &DldCalibration) -> i64 {
    (cal.dt_ps_from_position(x_mm) / tick_ps as f64).round() as i64
}

/// Linear position to wavelength map; x must lie on the anode.
pub fn signal_wavelength(x_mm: f64, cal: &DldCalibration) -> Result<f64> {
    let len = cal.active_length_mm();
    if !(0.0..=len).contains(&x_mm) {
        return Err(Error::OutOfDomain { what: "x (mm)", value: x_mm, domain: format!("[0, {len}]") });
    }
    Ok(cal.wavelength_from_position(x_mm))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FibreCalibration {
    pub dispersion_ps_per_nm: f64,
    pub reference_delay_ps: f64,
    pub reference_wavelength_nm: f64,
}

impl Default for FibreCalibration {
    fn default() -> Self {
        Self { dispersion_ps_per_nm: -255.0, reference_delay_ps: 7.7e6, reference_wavelength_nm: 1550.0 }
    }
}

impl FibreCalibration {
    pub fn validate(&self) -> Result<()> {
        if self.dispersion_ps_per_nm == 0.0 || !self.dispersion_ps_per_nm.is_finite() {
            return Err(Error::config("fibre dispersion must be non-zero"));
        }
        if !self.reference_delay_ps.is_finite() || !(self.reference_wavelength_nm > 0.0) {
            return Err(Error::config("fibre reference delay/wavelength invalid"));
        }
        Ok(())
    }

    /// Forward map T(λ) = T0 + D·(λ − λ0).
    pub fn delay_ps(&self, nm: f64) -> f64 {
        self.reference_delay_ps + self.dispersion_ps_per_nm * (nm - self.reference_wavelength_nm)
    }

    pub fn wavelength_from_delay_ps(&self, tau_ps: f64) -> f64 {
        self.reference_wavelength_nm + (tau_ps - self.reference_delay_ps) / self.dispersion_ps_per_nm
    }
}

/// λ = λ0 + (τ·tick − T0)/D.
pub fn idler_wavelength(tau: i64, tick_ps: u32, cal: &FibreCalibration) -> f64 {
    cal.wavelength_from_delay_ps(tau as f64 * tick_ps as f64)
}
