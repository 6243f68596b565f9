//! Physical constants and unit conversions.
//!
//! Internal conventions: wavelengths in nm, times in ps, angular frequencies
//! in rad/ps, crystal lengths in m for wave-vector arithmetic (Δk in 1/m).

use std::f64::consts::PI;

/// Speed of light in vacuum, nm/ps.
pub const C_NM_PER_PS: f64 = 299_792.458;

/// Gaussian FWHM / σ.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

/// Angular frequency (rad/ps) of vacuum wavelength `nm`.
#[inline]
pub fn omega_from_nm(nm: f64) -> f64 {
    2.0 * PI * C_NM_PER_PS / nm
}

/// Vacuum wavelength (nm) of angular frequency `omega` (rad/ps).
#[inline]
pub fn nm_from_omega(omega: f64) -> f64 {
    2.0 * PI * C_NM_PER_PS / omega
}

/// Angular-frequency width of a wavelength band `fwhm_nm` centred at `center_nm`.
pub fn omega_width_from_nm(center_nm: f64, fwhm_nm: f64) -> f64 {
    omega_from_nm(center_nm - 0.5 * fwhm_nm) - omega_from_nm(center_nm + 0.5 * fwhm_nm)
}
