//! Lithium triborate (LBO) principal refractive indices.
//!
//! Dispersion equations from the CASTECH LBO data sheet (λ in µm):
//!
//! ```text
//! nx² = 2.454140 + 0.011249/(λ² − 0.011350) − 0.014591 λ² − 6.60e-5 λ⁴
//! ny² = 2.539070 + 0.012711/(λ² − 0.012523) − 0.018540 λ² + 2.0e-4 λ⁴
//! nz² = 2.586179 + 0.013099/(λ² − 0.011893) − 0.017968 λ² − 2.26e-4 λ⁴
//! ```
//!
//! Type-I phase matching in the XY principal plane (θ = 90°): the pump travels
//! as the e-wave with index n(φ) between nx and ny, signal and idler are both
//! polarized along z.

use crate::error::{Error, Result};

pub const VALID_MIN_NM: f64 = 160.0;
pub const VALID_MAX_NM: f64 = 2600.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalIndices {
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
}

fn check_range(nm: f64) -> Result<()> {
    if !(VALID_MIN_NM..=VALID_MAX_NM).contains(&nm) || !nm.is_finite() {
        return Err(Error::SellmeierRange {
            wavelength_nm: nm,
            min_nm: VALID_MIN_NM,
            max_nm: VALID_MAX_NM,
        });
    }
    Ok(())
}

pub fn principal_indices(wavelength_nm: f64) -> Result<PrincipalIndices> {
    check_range(wavelength_nm)?;
    let l2 = (wavelength_nm * 1e-3).powi(2);
    let l4 = l2 * l2;
    let nx2 = 2.454140 + 0.011249 / (l2 - 0.011350) - 0.014591 * l2 - 6.60e-5 * l4;
    let ny2 = 2.539070 + 0.012711 / (l2 - 0.012523) - 0.018540 * l2 + 2.0e-4 * l4;
    let nz2 = 2.586179 + 0.013099 / (l2 - 0.011893) - 0.017968 * l2 - 2.26e-4 * l4;
    Ok(PrincipalIndices { nx: nx2.sqrt(), ny: ny2.sqrt(), nz: nz2.sqrt() })
}

/// Index of the XY-plane wave polarized in-plane, propagating at azimuth `phi_rad` from x.
pub fn xy_plane_e_index(wavelength_nm: f64, phi_rad: f64) -> Result<f64> {
    let n = principal_indices(wavelength_nm)?;
    let (s, c) = phi_rad.sin_cos();
    Ok(1.0 / (c * c / (n.ny * n.ny) + s * s / (n.nx * n.nx)).sqrt())
}

/// Index seen by the z-polarized wave in the XY plane.
pub fn z_index(wavelength_nm: f64) -> Result<f64> {
    Ok(principal_indices(wavelength_nm)?.nz)
}
