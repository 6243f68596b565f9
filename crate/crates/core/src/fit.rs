//! Levenberg-Marquardt peak fits with a constant baseline.
//!
//! ```text
//! gaussian      A·exp(−(x−c)²/(2w²)) + B      FWHM = 2√(2 ln 2)·w
//! sinc_squared  A·sinc²((x−c)/w) + B          FWHM = 2·1.39156·w
//! ```

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::histogram::Histogram1D;
use crate::units::FWHM_PER_SIGMA;

/// Root of sinc(u) = 1/√2.
pub const SINC2_HALF_WIDTH: f64 = 1.391_557_378_251_51;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakModel {
    Gaussian,
    SincSquared,
}

impl PeakModel {
    pub fn fwhm_per_width(self) -> f64 {
        match self {
            PeakModel::Gaussian => FWHM_PER_SIGMA,
            PeakModel::SincSquared => 2.0 * SINC2_HALF_WIDTH,
        }
    }

    #[inline]
    fn shape(self, u: f64) -> f64 {
        match self {
            PeakModel::Gaussian => (-0.5 * u * u).exp(),
            PeakModel::SincSquared => {
                let s = sinc(u);
                s * s
            }
        }
    }

    /// d shape / du
    #[inline]
    fn dshape(self, u: f64) -> f64 {
        match self {
            PeakModel::Gaussian => -u * (-0.5 * u * u).exp(),
            PeakModel::SincSquared => {
                let ds = if u.abs() < 1e-4 { -u / 3.0 } else { (u.cos() - sinc(u)) / u };
                2.0 * sinc(u) * ds
            }
        }
    }

    pub fn eval(self, x: f64, p: &FitParams) -> f64 {
        p.amplitude * self.shape((x - p.center) / p.width) + p.baseline
    }
}

#[inline]
fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0
    } else {
        u.sin() / u
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// 1 / max(count, 1)
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub weighting: Weighting,
    /// Restrict sinc² fits to ±`n` central-lobe widths (2πw) around the centre.
    pub sinc_window_lobes: Option<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { weighting: Weighting::Uniform, sinc_window_lobes: Some(1.5), max_iterations: 200, tolerance: 1e-8 }
    }
}

impl FitOptions {
    pub fn full_range() -> Self {
        Self { sinc_window_lobes: None, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub center: f64,
    /// Model-native width (σ or w).
    pub width: f64,
    pub amplitude: f64,
    pub baseline: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFitResult {
    pub model: PeakModel,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub fwhm: f64,
    /// √Σ weight·(model − y)² over the fitted points.
    pub residual_norm: f64,
    pub iterations: usize,
    pub points_used: usize,
    pub converged: bool,
}

impl PeakFitResult {
    fn failed(model: PeakModel, p: FitParams) -> Self {
        Self {
            model,
            center: p.center,
            width: p.width,
            amplitude: p.amplitude,
            baseline: p.baseline,
            fwhm: f64::NAN,
            residual_norm: f64::NAN,
            iterations: 0,
            points_used: 0,
            converged: false,
        }
    }

    pub fn params(&self) -> FitParams {
        FitParams { center: self.center, width: self.width, amplitude: self.amplitude, baseline: self.baseline }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Argmax centre, max − median amplitude, median baseline, width from the half-max crossings.
pub fn initial_guess(x: &[f64], y: &[f64], model: PeakModel) -> Option<FitParams> {
    if x.len() != y.len() || x.len() < 3 {
        return None;
    }
    let (k, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let base = median(y);
    let amp = ymax - base;
    if !(amp > 0.0) {
        return None;
    }
    let half = base + 0.5 * amp;
    let cross = |range: &mut dyn Iterator<Item = usize>, outer: i64| -> f64 {
        let mut prev = k;
        for j in range {
            if y[j] < half {
                let t = (y[prev] - half) / (y[prev] - y[j]);
                return x[prev] + t * (x[j] - x[prev]);
            }
            prev = j;
        }
        x[(outer.max(0) as usize).min(x.len() - 1)]
    };
    let left = cross(&mut (0..k).rev(), 0);
    let right = cross(&mut (k + 1..x.len()), x.len() as i64 - 1);
    let mut fwhm = (right - left).abs();
    if !(fwhm > 0.0) {
        fwhm = if x.len() > 1 { (x[1] - x[0]).abs() } else { 1.0 };
    }
    Some(FitParams { center: x[k], width: fwhm / model.fwhm_per_width(), amplitude: amp, baseline: base })
}

fn lm(x: &[f64], y: &[f64], wts: &[f64], model: PeakModel, start: FitParams, opts: &FitOptions) -> (FitParams, usize, bool) {
    let to_v = |p: &FitParams| Vector4::new(p.center, p.width, p.amplitude, p.baseline);
    let from_v = |v: &Vector4<f64>| FitParams { center: v[0], width: v[1], amplitude: v[2], baseline: v[3] };
    let cost = |p: &FitParams| -> f64 {
        x.iter().zip(y).zip(wts).map(|((&xi, &yi), &w)| w * (model.eval(xi, p) - yi).powi(2)).sum()
    };

    let mut p = to_v(&start);
    let mut c = cost(&start);
    let mut lambda = 1e-3;
    for it in 1..=opts.max_iterations {
        let fp = from_v(&p);
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for ((&xi, &yi), &w) in x.iter().zip(y).zip(wts) {
            let u = (xi - fp.center) / fp.width;
            let sh = model.shape(u);
            let dsh = model.dshape(u);
            let g = Vector4::new(
                -fp.amplitude * dsh / fp.width,
                -fp.amplitude * dsh * u / fp.width,
                sh,
                1.0,
            );
            let r = fp.amplitude * sh + fp.baseline - yi;
            jtj += w * g * g.transpose();
            jtr += w * r * g;
        }
        loop {
            let mut a = jtj;
            for d in 0..4 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let step = match a.lu().solve(&(-jtr)) {
                Some(s) => s,
                None => return (from_v(&p), it, false),
            };
            let cand = p + step;
            let cp = from_v(&cand);
            let cc = if cp.width > 0.0 { cost(&cp) } else { f64::INFINITY };
            if cc.is_finite() && cc <= c {
                // parameter scales: width for c/w, amplitude for A/B
                let scale = Vector4::new(cp.width, cp.width, cp.amplitude.abs(), cp.amplitude.abs());
                let small = (0..4).all(|d| step[d].abs() <= opts.tolerance * cand[d].abs().max(scale[d]));
                p = cand;
                c = cc;
                lambda = (lambda * 0.3).max(1e-12);
                if small {
                    return (from_v(&p), it, true);
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill step left at machine precision
                return (from_v(&p), it, true);
            }
        }
    }
    (from_v(&p), opts.max_iterations, false)
}

/// Least-squares fit of `model` to (x, y).
pub fn fit_peak_xy(x: &[f64], y: &[f64], model: PeakModel, opts: &FitOptions) -> PeakFitResult {
    let nonzero = y.iter().filter(|v| **v != 0.0).count();
    let Some(start) = initial_guess(x, y, model).filter(|_| nonzero >= 5) else {
        let p = FitParams { center: f64::NAN, width: f64::NAN, amplitude: 0.0, baseline: 0.0 };
        return PeakFitResult::failed(model, p);
    };

    let select = |p: &FitParams| -> Vec<usize> {
        match (model, opts.sinc_window_lobes) {
            (PeakModel::SincSquared, Some(n)) => {
                let half = n * 2.0 * std::f64::consts::PI * p.width;
                (0..x.len()).filter(|&k| (x[k] - p.center).abs() <= half).collect()
            }
            _ => (0..x.len()).collect(),
        }
    };

    let mut p = start;
    let mut idx = select(&p);
    let mut total_it = 0;
    let mut converged = false;
    for _ in 0..4 {
        if idx.len() < 5 {
            converged = false;
            break;
        }
        let xs: Vec<f64> = idx.iter().map(|&k| x[k]).collect();
        let ys: Vec<f64> = idx.iter().map(|&k| y[k]).collect();
        let ws: Vec<f64> = match opts.weighting {
            Weighting::Uniform => vec![1.0; ys.len()],
            Weighting::Poisson => ys.iter().map(|v| 1.0 / v.max(1.0)).collect(),
        };
        let (np, it, ok) = lm(&xs, &ys, &ws, model, p, opts);
        p = np;
        total_it += it;
        converged = ok;
        let next = select(&p);
        if next == idx {
            break;
        }
        idx = next;
    }

    let res: f64 = idx
        .iter()
        .map(|&k| {
            let w = match opts.weighting {
                Weighting::Uniform => 1.0,
                Weighting::Poisson => 1.0 / y[k].max(1.0),
            };
            w * (model.eval(x[k], &p) - y[k]).powi(2)
        })
        .sum();
    let converged = converged && p.width > 0.0 && p.width.is_finite();
    PeakFitResult {
        model,
        center: p.center,
        width: p.width.abs(),
        amplitude: p.amplitude,
        baseline: p.baseline,
        fwhm: p.width.abs() * model.fwhm_per_width(),
        residual_norm: res.sqrt(),
        iterations: total_it,
        points_used: idx.len(),
        converged,
    }
}

/// Fit against bin centres in ps.
pub fn fit_peak(h: &Histogram1D, model: PeakModel, opts: &FitOptions) -> PeakFitResult {
    let (x, y) = h.points_ps();
    fit_peak_xy(&x, &y, model, opts)
}
