//! Joint spectral amplitude of a type-I LBO down-conversion source.
//!
//! f(ω_s, ω_i) = α(ω_s + ω_i) · sinc(Δk(ω_s, ω_i) · L / 2)
//!
//! with a Gaussian pump envelope α and the phase mismatch Δk either from the
//! LBO dispersion equations or from a first-order expansion around the
//! 515 nm / 1550 nm phase-matched point.

pub mod io;
pub mod lbo;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{nm_from_omega, omega_from_nm, omega_width_from_nm, C_NM_PER_PS};

/// Fundamental Ti:sapphire peak.
pub const FUNDAMENTAL_NM: f64 = 773.2;
/// Fundamental spectral linewidth (FWHM).
pub const FUNDAMENTAL_LINEWIDTH_NM: f64 = 0.2;
pub const SIGNAL_CENTER_NM: f64 = 515.0;
pub const IDLER_CENTER_NM: f64 = 1550.0;

/// Gaussian pump pulse spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpSpec {
    pub center_wavelength_nm: f64,
    /// Intensity FWHM of the pump spectrum.
    pub fwhm_bandwidth_nm: f64,
}

impl Default for PumpSpec {
    /// Second harmonic of 773.2 nm; FWHM = 0.2 nm / √2.
    fn default() -> Self {
        Self {
            center_wavelength_nm: FUNDAMENTAL_NM / 2.0,
            fwhm_bandwidth_nm: FUNDAMENTAL_LINEWIDTH_NM / std::f64::consts::SQRT_2,
        }
    }
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength_nm > 0.0) || !self.center_wavelength_nm.is_finite() {
            return Err(Error::config("pump center_wavelength_nm must be > 0"));
        }
        if !(self.fwhm_bandwidth_nm > 0.0) || self.fwhm_bandwidth_nm >= 0.1 * self.center_wavelength_nm {
            return Err(Error::config(
                "pump fwhm_bandwidth_nm must be > 0 and much smaller than the center wavelength",
            ));
        }
        Ok(())
    }

    pub fn center_omega(&self) -> f64 {
        omega_from_nm(self.center_wavelength_nm)
    }

    pub fn fwhm_omega(&self) -> f64 {
        omega_width_from_nm(self.center_wavelength_nm, self.fwhm_bandwidth_nm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    #[default]
    Lbo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PmModel {
    #[default]
    Sellmeier,
    Linearized,
}

/// First-order phase-mismatch coefficients: Δk = τ_s δω_s + τ_i δω_i.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearizedCoeffs {
    /// ps/m; times rad/ps gives 1/m.
    pub tau_s_ps_per_m: f64,
    pub tau_i_ps_per_m: f64,
    pub signal_center_nm: f64,
    pub idler_center_nm: f64,
}

impl Default for LinearizedCoeffs {
    /// Tuned with [`tune_linearized`] against 1.55 nm / 13.6 nm marginal
    /// FWHMs on the default pump and grid.
    fn default() -> Self {
        Self {
            tau_s_ps_per_m: TUNED_TAU_S,
            tau_i_ps_per_m: TUNED_TAU_I,
            signal_center_nm: SIGNAL_CENTER_NM,
            idler_center_nm: IDLER_CENTER_NM,
        }
    }
}

// frozen output of `tune_linearized` on the default pump/grid
const TUNED_TAU_S: f64 = 103.280_039_7;
const TUNED_TAU_I: f64 = 208.658_828_1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrystalSpec {
    pub length_mm: f64,
    /// Azimuth in the XY principal plane.
    pub phi_deg: f64,
    pub material: Material,
    pub pm_model: PmModel,
    pub linearized: Option<LinearizedCoeffs>,
}

impl Default for CrystalSpec {
    fn default() -> Self {
        Self {
            length_mm: 5.0,
            phi_deg: 25.0,
            material: Material::Lbo,
            pm_model: PmModel::Sellmeier,
            linearized: Some(LinearizedCoeffs::default()),
        }
    }
}

impl CrystalSpec {
    pub fn linearized_default() -> Self {
        Self { pm_model: PmModel::Linearized, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_mm > 0.0) || !self.length_mm.is_finite() {
            return Err(Error::config("crystal length_mm must be > 0"));
        }
        if !(0.0..=90.0).contains(&self.phi_deg) {
            return Err(Error::config("crystal phi_deg must lie in [0, 90]"));
        }
        Ok(())
    }

    pub fn length_m(&self) -> f64 {
        self.length_mm * 1e-3
    }
}

/// Uniformly spaced angular-frequency axis (rad/ps).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl GridAxis {
    /// `len` points centred on ω(`center_nm`), spanning the ω-extent of ±`half_span_nm`.
    pub fn centered_on_wavelength(center_nm: f64, half_span_nm: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::config("grid axes need at least 2 points"));
        }
        if !(half_span_nm > 0.0) || half_span_nm >= center_nm {
            return Err(Error::config("grid half span must be positive and below the center"));
        }
        let wc = omega_from_nm(center_nm);
        let half = 0.5 * (omega_from_nm(center_nm - half_span_nm) - omega_from_nm(center_nm + half_span_nm));
        let step = 2.0 * half / (len - 1) as f64;
        Ok(Self { start: wc - half, step, len })
    }

    #[inline]
    pub fn omega(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.omega(i)).collect()
    }

    pub fn wavelength_nm(&self, i: usize) -> f64 {
        nm_from_omega(self.omega(i))
    }

    pub fn end(&self) -> f64 {
        self.omega(self.len - 1)
    }

    /// Cell index containing `omega` (cells are centred on the grid points).
    pub fn cell_of(&self, omega: f64) -> Option<usize> {
        let k = ((omega - self.start) / self.step + 0.5).floor();
        (k >= 0.0 && (k as usize) < self.len).then_some(k as usize)
    }
}

/// Rectangular (ω_s, ω_i) domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub signal: GridAxis,
    pub idler: GridAxis,
}

impl FrequencyGrid {
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Ok(Self {
            signal: GridAxis::centered_on_wavelength(
                spec.signal_center_nm,
                spec.signal_half_span_nm,
                spec.signal_points,
            )?,
            idler: GridAxis::centered_on_wavelength(
                spec.idler_center_nm,
                spec.idler_half_span_nm,
                spec.idler_points,
            )?,
        })
    }

    pub fn cell_measure(&self) -> f64 {
        self.signal.step * self.idler.step
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ax) in [("signal", &self.signal), ("idler", &self.idler)] {
            if ax.len < 2 || !(ax.step > 0.0) || !ax.start.is_finite() {
                return Err(Error::config(format!("{name} axis must be strictly increasing with >= 2 points")));
            }
        }
        Ok(())
    }
}

/// Configuration form of [`FrequencyGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub signal_center_nm: f64,
    pub signal_half_span_nm: f64,
    pub signal_points: usize,
    pub idler_center_nm: f64,
    pub idler_half_span_nm: f64,
    pub idler_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            signal_center_nm: SIGNAL_CENTER_NM,
            signal_half_span_nm: 4.0,
            signal_points: 512,
            idler_center_nm: IDLER_CENTER_NM,
            idler_half_span_nm: 35.0,
            idler_points: 512,
        }
    }
}

impl GridSpec {
    pub fn with_points(mut self, n_s: usize, n_i: usize) -> Self {
        self.signal_points = n_s;
        self.idler_points = n_i;
        self
    }
}

/// Complex amplitude on a [`FrequencyGrid`], row-major with signal rows.
#[derive(Clone, Debug, PartialEq)]
pub struct JsaGrid {
    pub grid: FrequencyGrid,
    pub amplitude: Vec<Complex64>,
    pub normalized: bool,
}

impl JsaGrid {
    pub fn new(grid: FrequencyGrid, amplitude: Vec<Complex64>) -> Result<Self> {
        if amplitude.len() != grid.signal.len * grid.idler.len {
            return Err(Error::ShapeMismatch(format!(
                "amplitude has {} cells, grid {}x{}",
                amplitude.len(),
                grid.signal.len,
                grid.idler.len
            )));
        }
        Ok(Self { grid, amplitude, normalized: false })
    }

    pub fn n_signal(&self) -> usize {
        self.grid.signal.len
    }

    pub fn n_idler(&self) -> usize {
        self.grid.idler.len
    }

    #[inline]
    pub fn at(&self, s: usize, i: usize) -> Complex64 {
        self.amplitude[s * self.grid.idler.len + i]
    }

    /// Σ|f|² Δω_s Δω_i, summed in row-major order.
    pub fn norm_sq(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell_measure()
    }

    pub fn normalize(&mut self) -> Result<()> {
        if self.amplitude.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("joint spectral amplitude"));
        }
        let n = self.norm_sq();
        if n <= 0.0 {
            return Err(Error::ZeroAmplitude);
        }
        let s = 1.0 / n.sqrt();
        for a in &mut self.amplitude {
            *a *= s;
        }
        self.normalized = true;
        Ok(())
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.norm_sqr()).collect()
    }

    /// ∫|f|² dω_i as a function of ω_s.
    pub fn signal_marginal(&self) -> Vec<f64> {
        let ni = self.n_idler();
        self.amplitude
            .chunks(ni)
            .map(|row| row.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.idler.step)
            .collect()
    }

    /// ∫|f|² dω_s as a function of ω_i.
    pub fn idler_marginal(&self) -> Vec<f64> {
        let ni = self.n_idler();
        let mut m = vec![0.0; ni];
        for row in self.amplitude.chunks(ni) {
            for (acc, a) in m.iter_mut().zip(row) {
                *acc += a.norm_sqr();
            }
        }
        m.iter_mut().for_each(|v| *v *= self.grid.signal.step);
        m
    }

    /// FWHM (nm) of the signal marginal, from interpolated half-maximum crossings.
    pub fn signal_fwhm_nm(&self) -> Option<f64> {
        marginal_fwhm_nm(&self.grid.signal, &self.signal_marginal())
    }

    pub fn idler_fwhm_nm(&self) -> Option<f64> {
        marginal_fwhm_nm(&self.grid.idler, &self.idler_marginal())
    }
}

/// Width in wavelength between the outermost half-maximum crossings around the peak.
pub fn marginal_fwhm_nm(axis: &GridAxis, m: &[f64]) -> Option<f64> {
    let (k, &peak) = m.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(peak > 0.0) {
        return None;
    }
    let half = 0.5 * peak;
    let mut j = k;
    while j > 0 && m[j] >= half {
        j -= 1;
    }
    if m[j] >= half {
        return None;
    }
    let left = axis.omega(j) + (half - m[j]) / (m[j + 1] - m[j]) * axis.step;
    let mut j = k;
    while j + 1 < m.len() && m[j] >= half {
        j += 1;
    }
    if m[j] >= half {
        return None;
    }
    let right = axis.omega(j - 1) + (half - m[j - 1]) / (m[j] - m[j - 1]) * axis.step;
    Some(nm_from_omega(left) - nm_from_omega(right))
}

/// Gaussian pump amplitude, unit peak at ω_s + ω_i = ω_p.
pub fn pump_envelope(omega_s: f64, omega_i: f64, pump: &PumpSpec) -> Complex64 {
    envelope_from_detuning(omega_s + omega_i - pump.center_omega(), pump.fwhm_omega())
}

#[inline]
fn envelope_from_detuning(detuning: f64, fwhm: f64) -> Complex64 {
    // intensity exp(-4 ln2 δ²/F²)  =>  amplitude exp(-2 ln2 δ²/F²)
    let x = detuning / fwhm;
    Complex64::new((-2.0 * std::f64::consts::LN_2 * x * x).exp(), 0.0)
}

#[inline]
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// Δk = k_p − k_s − k_i in 1/m.
pub fn phase_mismatch(omega_s: f64, omega_i: f64, crystal: &CrystalSpec, _pump: &PumpSpec) -> Result<f64> {
    match crystal.pm_model {
        PmModel::Linearized => {
            let c = crystal.linearized.ok_or(Error::MissingLinearizedCoefficients)?;
            Ok(linearized_dk(&c, omega_s, omega_i))
        }
        PmModel::Sellmeier => {
            let phi = crystal.phi_deg.to_radians();
            let k_s = wavenumber(lbo::z_index(nm_from_omega(omega_s))?, omega_s);
            let k_i = wavenumber(lbo::z_index(nm_from_omega(omega_i))?, omega_i);
            let wp = omega_s + omega_i;
            let k_p = wavenumber(lbo::xy_plane_e_index(nm_from_omega(wp), phi)?, wp);
            Ok(k_p - k_s - k_i)
        }
    }
}

#[inline]
fn linearized_dk(c: &LinearizedCoeffs, omega_s: f64, omega_i: f64) -> f64 {
    c.tau_s_ps_per_m * (omega_s - omega_from_nm(c.signal_center_nm))
        + c.tau_i_ps_per_m * (omega_i - omega_from_nm(c.idler_center_nm))
}

/// n ω / c in 1/m.
#[inline]
fn wavenumber(n: f64, omega: f64) -> f64 {
    n * omega / C_NM_PER_PS * 1e9
}

/// Evaluates the amplitude on `grid` without normalising.
pub fn evaluate_jsa(pump: &PumpSpec, crystal: &CrystalSpec, grid: &FrequencyGrid) -> Result<JsaGrid> {
    pump.validate()?;
    crystal.validate()?;
    grid.validate()?;
    let (ns, ni) = (grid.signal.len, grid.idler.len);
    let half_l = 0.5 * crystal.length_m();
    let wp = pump.center_omega();
    let fwhm = pump.fwhm_omega();

    // per-axis wave numbers for the Sellmeier path
    let (ks, ki) = match crystal.pm_model {
        PmModel::Sellmeier => {
            let ks = (0..ns)
                .map(|s| {
                    let w = grid.signal.omega(s);
                    Ok(wavenumber(lbo::z_index(nm_from_omega(w))?, w))
                })
                .collect::<Result<Vec<_>>>()?;
            let ki = (0..ni)
                .map(|i| {
                    let w = grid.idler.omega(i);
                    Ok(wavenumber(lbo::z_index(nm_from_omega(w))?, w))
                })
                .collect::<Result<Vec<_>>>()?;
            (ks, ki)
        }
        PmModel::Linearized => {
            if crystal.linearized.is_none() {
                return Err(Error::MissingLinearizedCoefficients);
            }
            (Vec::new(), Vec::new())
        }
    };
    let phi = crystal.phi_deg.to_radians();

    let mut amplitude = vec![Complex64::new(0.0, 0.0); ns * ni];
    amplitude
        .par_chunks_mut(ni)
        .enumerate()
        .try_for_each(|(s, row)| -> Result<()> {
            let w_s = grid.signal.omega(s);
            for (i, cell) in row.iter_mut().enumerate() {
                let w_i = grid.idler.omega(i);
                let dk = match crystal.pm_model {
                    PmModel::Linearized => linearized_dk(crystal.linearized.as_ref().unwrap(), w_s, w_i),
                    PmModel::Sellmeier => {
                        let w = w_s + w_i;
                        wavenumber(lbo::xy_plane_e_index(nm_from_omega(w), phi)?, w) - ks[s] - ki[i]
                    }
                };
                *cell = envelope_from_detuning(w_s + w_i - wp, fwhm) * sinc(dk * half_l);
            }
            Ok(())
        })?;
    JsaGrid::new(*grid, amplitude)
}

/// Pump envelope × phase-matching sinc, normalised to unit Σ|f|²ΔωΔω.
pub fn compute_jsa(pump: &PumpSpec, crystal: &CrystalSpec, grid: &FrequencyGrid) -> Result<JsaGrid> {
    let mut jsa = evaluate_jsa(pump, crystal, grid)?;
    jsa.normalize()?;
    Ok(jsa)
}

/// Solves for (τ_s, τ_i) so the linearized model's marginal FWHMs hit the
/// targets. Damped Newton iteration with a finite-difference Jacobian.
pub fn tune_linearized(
    pump: &PumpSpec,
    grid: &FrequencyGrid,
    start: LinearizedCoeffs,
    target_signal_nm: f64,
    target_idler_nm: f64,
) -> Result<LinearizedCoeffs> {
    let widths = |c: LinearizedCoeffs| -> Result<[f64; 2]> {
        let crystal = CrystalSpec { pm_model: PmModel::Linearized, linearized: Some(c), ..CrystalSpec::default() };
        let j = evaluate_jsa(pump, &crystal, grid)?;
        match (j.signal_fwhm_nm(), j.idler_fwhm_nm()) {
            (Some(s), Some(i)) => Ok([s / target_signal_nm - 1.0, i / target_idler_nm - 1.0]),
            _ => Err(Error::data("marginal FWHM undefined on this grid")),
        }
    };
    let mut c = start;
    for _ in 0..40 {
        let r = widths(c)?;
        if r[0].abs() < 1e-6 && r[1].abs() < 1e-6 {
            return Ok(c);
        }
        let h_s = 1e-4 * c.tau_s_ps_per_m.abs().max(1.0);
        let h_i = 1e-4 * c.tau_i_ps_per_m.abs().max(1.0);
        let rs = widths(LinearizedCoeffs { tau_s_ps_per_m: c.tau_s_ps_per_m + h_s, ..c })?;
        let ri = widths(LinearizedCoeffs { tau_i_ps_per_m: c.tau_i_ps_per_m + h_i, ..c })?;
        let j = [
            [(rs[0] - r[0]) / h_s, (ri[0] - r[0]) / h_i],
            [(rs[1] - r[1]) / h_s, (ri[1] - r[1]) / h_i],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::data("singular Jacobian while tuning linearized coefficients"));
        }
        let ds = -(j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let di = -(-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        c.tau_s_ps_per_m += ds;
        c.tau_i_ps_per_m += di;
    }
    Err(Error::data("linearized coefficient tuning did not converge"))
}

/// Draws photon-pair wavelengths with probability ∝ |f|² per cell, uniform within the cell.
#[derive(Clone, Debug)]
pub struct PairSampler {
    grid: FrequencyGrid,
    index: WeightedIndex<f64>,
}

impl PairSampler {
    pub fn new(jsa: &JsaGrid) -> Result<Self> {
        let weights = jsa.intensity();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("joint spectral intensity"));
        }
        let index = WeightedIndex::new(&weights).map_err(|_| Error::ZeroAmplitude)?;
        Ok(Self { grid: jsa.grid, index })
    }

    /// (λ_s, λ_i) in nm.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let (ws, wi) = self.sample_omega(rng);
        (nm_from_omega(ws), nm_from_omega(wi))
    }

    /// (ω_s, ω_i) in rad/ps.
    pub fn sample_omega<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let cell = self.index.sample(rng);
        let ni = self.grid.idler.len;
        let (s, i) = (cell / ni, cell % ni);
        let us: f64 = rng.random::<f64>() - 0.5;
        let ui: f64 = rng.random::<f64>() - 0.5;
        (
            self.grid.signal.omega(s) + us * self.grid.signal.step,
            self.grid.idler.omega(i) + ui * self.grid.idler.step,
        )
    }
}

/// `n` i.i.d. pairs (λ_s, λ_i) in nm, deterministic in `seed`.
pub fn sample_pairs(jsa: &JsaGrid, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let sampler = PairSampler::new(jsa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}
