//! Schmidt decomposition of a discretised joint spectral amplitude.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::Histogram2D;
use crate::spdc::{FrequencyGrid, GridAxis, JsaGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchmidtReport {
    /// Descending, Σλ² = 1.
    pub eigenvalues: Vec<f64>,
    pub schmidt_number: f64,
    pub purity: f64,
    /// Relative Frobenius error of the truncated reconstruction, when modes were computed.
    pub residual: Option<f64>,
}

impl SchmidtReport {
    pub fn from_singular_values(mut s: Vec<f64>) -> Result<Self> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("singular values"));
        }
        s.sort_by(|a, b| b.total_cmp(a));
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::ZeroAmplitude);
        }
        let eigenvalues: Vec<f64> = s.iter().map(|v| v / norm).collect();
        let purity: f64 = eigenvalues.iter().map(|l| l.powi(4)).sum();
        Ok(Self { eigenvalues, schmidt_number: 1.0 / purity, purity, residual: None })
    }
}

/// Schmidt modes, orthonormal under ∫ dω on their axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtModes {
    pub signal: Vec<Vec<Complex64>>,
    pub idler: Vec<Vec<Complex64>>,
    /// √(Σ|f|²ΔωΔω) of the input; f = scale · Σ λ_j g_j h_j.
    pub scale: f64,
}

impl SchmidtModes {
    pub fn reconstruct(&self, eigenvalues: &[f64]) -> Vec<Complex64> {
        let ns = self.signal.first().map_or(0, Vec::len);
        let ni = self.idler.first().map_or(0, Vec::len);
        let mut out = vec![Complex64::new(0.0, 0.0); ns * ni];
        for ((g, h), &l) in self.signal.iter().zip(&self.idler).zip(eigenvalues) {
            let w = l * self.scale;
            for (s, &gs) in g.iter().enumerate() {
                let gw = gs * w;
                for (o, &hi) in out[s * ni..(s + 1) * ni].iter_mut().zip(h) {
                    *o += gw * hi;
                }
            }
        }
        out
    }
}

fn check_finite(jsa: &JsaGrid) -> Result<()> {
    if jsa.amplitude.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::NonFinite("joint spectral amplitude"));
    }
    if jsa.amplitude.iter().all(|a| a.re == 0.0 && a.im == 0.0) {
        return Err(Error::ZeroAmplitude);
    }
    Ok(())
}

fn is_real(jsa: &JsaGrid) -> bool {
    jsa.amplitude.iter().all(|a| a.im == 0.0)
}

/// Orthonormal eigenvectors of M Mᴴ as complex columns, largest eigenvalue first.
///
/// Complex Gram matrices go through the real embedding [[Re G, −Im G], [Im G, Re G]],
/// in which every complex eigenvector u appears twice, as [Re u; Im u] and
/// [−Im u; Re u]. Vectors are taken in descending order and kept if they add
/// a new complex direction (Gram-Schmidt residual above ½).
fn gram_eigenvectors(m: &[Complex64], ns: usize, ni: usize, real: bool) -> Vec<Vec<Complex64>> {
    let row = |r: usize| &m[r * ni..(r + 1) * ni];
    if real {
        let g = DMatrix::from_fn(ns, ns, |a, b| row(a).iter().zip(row(b)).map(|(x, y)| x.re * y.re).sum::<f64>());
        let e = SymmetricEigen::new(g);
        let mut order: Vec<usize> = (0..ns).collect();
        order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        return order
            .iter()
            .map(|&k| (0..ns).map(|r| Complex64::new(e.eigenvectors[(r, k)], 0.0)).collect())
            .collect();
    }
    let mut g = vec![Complex64::new(0.0, 0.0); ns * ns];
    for a in 0..ns {
        for b in a..ns {
            let v: Complex64 = row(a).iter().zip(row(b)).map(|(x, y)| x * y.conj()).sum();
            g[a * ns + b] = v;
            g[b * ns + a] = v.conj();
        }
    }
    let emb = DMatrix::from_fn(2 * ns, 2 * ns, |r, c| {
        let v = g[(r % ns) * ns + c % ns];
        match (r < ns, c < ns) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    let e = SymmetricEigen::new(emb);
    let mut order: Vec<usize> = (0..2 * ns).collect();
    order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    let mut us: Vec<Vec<Complex64>> = Vec::with_capacity(ns);
    for &k in &order {
        if us.len() == ns {
            break;
        }
        let mut u: Vec<Complex64> =
            (0..ns).map(|r| Complex64::new(e.eigenvectors[(r, k)], e.eigenvectors[(r + ns, k)])).collect();
        for q in &us {
            let dot: Complex64 = q.iter().zip(&u).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in u.iter_mut().zip(q) {
                *x -= dot * y;
            }
        }
        let n = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.5 {
            u.iter_mut().for_each(|x| *x /= n);
            us.push(u);
        }
    }
    us
}

struct Factorization {
    /// Descending.
    singular_values: Vec<f64>,
    u: Vec<Vec<Complex64>>,
    /// Rows of Vᴴ: M = Σ σ_j u_j ⊗ vh_j.
    vh: Vec<Vec<Complex64>>,
}

/// SVD of the measure-weighted matrix f·√(Δω_s Δω_i).
///
/// Built on the Hermitian eigenproblem of M Mᴴ; σ_j is then recomputed as
/// ‖u_jᴴ M‖ so small singular values keep full relative precision.
/// (nalgebra's bidiagonal SVD returns inconsistent factors on some
/// rank-deficient inputs.)
fn factorize(jsa: &JsaGrid) -> Factorization {
    let (ns, ni) = (jsa.n_signal(), jsa.n_idler());
    let w = jsa.grid.cell_measure().sqrt();
    let m: Vec<Complex64> = jsa.amplitude.iter().map(|a| a * w).collect();
    let us = gram_eigenvectors(&m, ns, ni, is_real(jsa));
    let mut parts: Vec<(f64, Vec<Complex64>, Vec<Complex64>)> = us
        .into_iter()
        .map(|u| {
            let mut vh = vec![Complex64::new(0.0, 0.0); ni];
            for (r, ur) in u.iter().enumerate() {
                let c = ur.conj();
                for (o, x) in vh.iter_mut().zip(&m[r * ni..(r + 1) * ni]) {
                    *o += c * x;
                }
            }
            let s = vh.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if s > 0.0 {
                vh.iter_mut().for_each(|x| *x /= s);
            }
            (s, u, vh)
        })
        .collect();
    parts.sort_by(|a, b| b.0.total_cmp(&a.0));
    parts.truncate(ns.min(ni));
    let mut f = Factorization { singular_values: Vec::new(), u: Vec::new(), vh: Vec::new() };
    for (s, u, vh) in parts {
        f.singular_values.push(s);
        f.u.push(u);
        f.vh.push(vh);
    }
    f
}

/// Eigenvalues, K and P only.
pub fn schmidt_report(jsa: &JsaGrid) -> Result<SchmidtReport> {
    check_finite(jsa)?;
    SchmidtReport::from_singular_values(factorize(jsa).singular_values)
}

/// Full decomposition f = scale · Σ_j λ_j g_j(ω_s) h_j(ω_i).
///
/// `mode_count` limits the returned modes (default min(n_s, n_i)); the
/// eigenvalue spectrum, K and P always use every singular value.
pub fn schmidt_decompose(jsa: &JsaGrid, mode_count: Option<usize>) -> Result<(SchmidtReport, SchmidtModes)> {
    check_finite(jsa)?;
    let (ns, ni) = (jsa.n_signal(), jsa.n_idler());
    let keep = mode_count.unwrap_or(ns.min(ni)).min(ns.min(ni));
    let (ds, di) = (jsa.grid.signal.step.sqrt(), jsa.grid.idler.step.sqrt());
    let f = factorize(jsa);
    let mut report = SchmidtReport::from_singular_values(f.singular_values)?;
    let signal = f.u.into_iter().take(keep).map(|u| u.into_iter().map(|x| x / ds).collect()).collect();
    let idler = f.vh.into_iter().take(keep).map(|v| v.into_iter().map(|x| x / di).collect()).collect();
    let modes = SchmidtModes { signal, idler, scale: jsa.norm_sq().sqrt() };

    let rec = modes.reconstruct(&report.eigenvalues);
    let num: f64 = rec.iter().zip(&jsa.amplitude).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = jsa.amplitude.iter().map(|a| a.norm_sqr()).sum();
    report.residual = Some((num / den).sqrt());
    Ok((report, modes))
}

/// Zero-phase amplitude √I from a non-negative intensity matrix (row-major, signal rows).
pub fn jsa_from_intensity(intensity: &[f64], grid: FrequencyGrid) -> Result<JsaGrid> {
    if intensity.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("intensity"));
    }
    if let Some(v) = intensity.iter().find(|v| **v < 0.0) {
        return Err(Error::OutOfDomain { what: "intensity", value: *v, domain: ">= 0".into() });
    }
    let amp = intensity.iter().map(|&v| Complex64::new(v.sqrt(), 0.0)).collect();
    let mut jsa = JsaGrid::new(grid, amp)?;
    jsa.normalize()?;
    Ok(jsa)
}

/// Grid whose axes are the histogram bin centres in ps.
pub fn grid_from_histogram(jsi: &Histogram2D) -> Result<FrequencyGrid> {
    let ax = |a: &crate::histogram::BinAxis| GridAxis { start: a.center_ps(0), step: a.width_ps(), len: a.bins };
    Ok(FrequencyGrid { signal: ax(&jsi.signal), idler: ax(&jsi.idler) })
}

/// Amplitude = √counts per cell, zero phase, normalised. Axes are the bin centres (ps).
pub fn jsa_from_jsi(jsi: &Histogram2D) -> Result<JsaGrid> {
    let intensity: Vec<f64> = jsi.counts.iter().map(|&c| c as f64).collect();
    jsa_from_intensity(&intensity, grid_from_histogram(jsi)?)
}

/// Median of all cells.
pub fn flat_background(intensity: &[f64]) -> f64 {
    if intensity.is_empty() {
        return 0.0;
    }
    let mut v = intensity.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Subtracts `level` from every cell, clamping at zero.
pub fn subtract_background(intensity: &[f64], level: f64) -> Vec<f64> {
    intensity.iter().map(|&v| (v - level).max(0.0)).collect()
}
