//! Synthetic seven-channel time-tag streams from a joint spectral amplitude.
//!
//! Per laser pulse n at t_n = n / rep_rate:
//!
//! * sync tag when n mod divider = 0;
//! * Poisson(μ) pairs, each with (λ_s, λ_i) drawn from |f|²;
//! * signal arm (η_s): photoelectron at t_e = t_n + mcp_delay + N(σ_mcp),
//!   MCP at t_e, X1 at t_e + x/v, X2 at t_e + t_a − x/v (plus anode jitter),
//!   Y1/Y2 likewise for a small y spread;
//! * idler arm (η_i): SNSPD at t_n + mcp_delay + T(λ_i) + N(σ_snspd);
//! * dark MCP/anode assemblies and dark SNSPD clicks, homogeneous Poisson.
//!
//! Generation runs in blocks of pulses, each with its own ChaCha stream, so
//! the output does not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{DldCalibration, FibreCalibration};
use crate::error::{Error, Result};
use crate::histogram::{BinAxis, Histogram1D};
use crate::spdc::{JsaGrid, PairSampler};
use crate::tagstream::{ChannelMap, StreamHeader, TimeTag, DEFAULT_TICK_PS};
use crate::units::{nm_from_omega, FWHM_PER_SIGMA};

pub const BLOCK_PULSES: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeadTimes {
    pub mcp_ps: f64,
    pub anode_ps: f64,
    pub snspd_ps: f64,
    pub sync_ps: f64,
}

impl Default for DeadTimes {
    fn default() -> Self {
        Self { mcp_ps: 0.0, anode_ps: 0.0, snspd_ps: 0.0, sync_ps: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub rep_rate_hz: f64,
    pub sync_divider: u64,
    /// Mean number of pairs per pulse.
    pub pair_prob_per_pulse: f64,
    pub eta_signal: f64,
    pub eta_idler: f64,
    pub mcp_jitter_fwhm_ps: f64,
    pub dtx_jitter_fwhm_ps: f64,
    /// FWHM of the MCP − SNSPD difference.
    pub snspd_mcp_conv_jitter_fwhm_ps: f64,
    /// Photoelectron delay after the laser pulse.
    pub mcp_delay_ps: f64,
    pub dld_dark_rate_hz: f64,
    pub snspd_dark_rate_hz: f64,
    /// Full width of the uniform y spread on the anode.
    pub y_spread_mm: f64,
    pub dld: DldCalibration,
    pub fibre: FibreCalibration,
    pub dead_time: DeadTimes,
    pub duration_s: f64,
    pub tick_ps: u32,
    pub channels: ChannelMap,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        let mut c = Self {
            rep_rate_hz: 76e6,
            sync_divider: 63,
            pair_prob_per_pulse: 0.0,
            eta_signal: 0.0,
            eta_idler: 0.0,
            mcp_jitter_fwhm_ps: 263.0,
            dtx_jitter_fwhm_ps: 263.0,
            snspd_mcp_conv_jitter_fwhm_ps: 310.0,
            mcp_delay_ps: 5_000.0,
            dld_dark_rate_hz: 1_000.0,
            snspd_dark_rate_hz: 100.0,
            y_spread_mm: 1.0,
            dld: DldCalibration::default(),
            fibre: FibreCalibration::default(),
            dead_time: DeadTimes::default(),
            duration_s: 1.0,
            tick_ps: DEFAULT_TICK_PS,
            channels: ChannelMap::default(),
            seed: 20_240_773,
        };
        let t = tune_rates(&RateTargets::default(), &c);
        c.pair_prob_per_pulse = t.pair_prob_per_pulse;
        c.eta_signal = t.eta_signal;
        c.eta_idler = t.eta_idler;
        c
    }
}

impl AcquisitionConfig {
    /// No jitter, no dark counts, no dead time.
    pub fn ideal(mut self) -> Self {
        self.mcp_jitter_fwhm_ps = 0.0;
        self.dtx_jitter_fwhm_ps = 0.0;
        self.snspd_mcp_conv_jitter_fwhm_ps = 0.0;
        self.dld_dark_rate_hz = 0.0;
        self.snspd_dark_rate_hz = 0.0;
        self.dead_time = DeadTimes::default();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        prob("pair_prob_per_pulse", self.pair_prob_per_pulse)?;
        prob("eta_signal", self.eta_signal)?;
        prob("eta_idler", self.eta_idler)?;
        if !(self.rep_rate_hz > 0.0) || !self.rep_rate_hz.is_finite() {
            return Err(Error::config("rep_rate_hz must be > 0"));
        }
        if self.sync_divider < 1 {
            return Err(Error::config("sync_divider must be >= 1"));
        }
        for (name, v) in [
            ("mcp_jitter_fwhm_ps", self.mcp_jitter_fwhm_ps),
            ("dtx_jitter_fwhm_ps", self.dtx_jitter_fwhm_ps),
            ("dld_dark_rate_hz", self.dld_dark_rate_hz),
            ("snspd_dark_rate_hz", self.snspd_dark_rate_hz),
            ("y_spread_mm", self.y_spread_mm),
            ("duration_s", self.duration_s),
            ("dead_time.mcp_ps", self.dead_time.mcp_ps),
            ("dead_time.anode_ps", self.dead_time.anode_ps),
            ("dead_time.snspd_ps", self.dead_time.snspd_ps),
            ("dead_time.sync_ps", self.dead_time.sync_ps),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        if self.snspd_mcp_conv_jitter_fwhm_ps < self.mcp_jitter_fwhm_ps {
            return Err(Error::config("snspd_mcp_conv_jitter_fwhm_ps must be >= mcp_jitter_fwhm_ps"));
        }
        if self.tick_ps == 0 {
            return Err(Error::config("tick_ps must be >= 1"));
        }
        self.dld.validate()?;
        self.fibre.validate()?;
        self.channels.validate()
    }

    pub fn pulse_period_ps(&self) -> f64 {
        1e12 / self.rep_rate_hz
    }

    pub fn sync_period_ps(&self) -> f64 {
        self.pulse_period_ps() * self.sync_divider as f64
    }

    /// Index of the last pulse, floor(duration · rep_rate).
    pub fn last_pulse(&self) -> u64 {
        (self.duration_s * self.rep_rate_hz).floor() as u64
    }

    /// Number of pulses that can emit pairs, ceil(duration · rep_rate).
    pub fn pair_pulses(&self) -> u64 {
        (self.duration_s * self.rep_rate_hz).ceil() as u64
    }

    /// SNSPD-arm jitter so that the MCP − SNSPD spread has the convolved FWHM.
    pub fn snspd_jitter_fwhm_ps(&self) -> f64 {
        (self.snspd_mcp_conv_jitter_fwhm_ps.powi(2) - self.mcp_jitter_fwhm_ps.powi(2)).max(0.0).sqrt()
    }

    pub fn header(&self) -> StreamHeader {
        StreamHeader::new(self.tick_ps, self.channels)
    }

    #[inline]
    fn pulse_tick(&self, n: u64) -> i64 {
        (n as f64 * self.pulse_period_ps() / self.tick_ps as f64).round() as i64
    }

    #[inline]
    fn offset_ticks(&self, ps: f64) -> i64 {
        (ps / self.tick_ps as f64).round() as i64
    }
}

/// Observed rates the acquisition should reproduce.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateTargets {
    pub singles_hz: f64,
    pub coincidences_hz: f64,
}

impl Default for RateTargets {
    fn default() -> Self {
        Self { singles_hz: 6.1e4, coincidences_hz: 2.2e4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedRates {
    pub pair_rate_hz: f64,
    pub pair_prob_per_pulse: f64,
    pub eta_signal: f64,
    pub eta_idler: f64,
    /// Expected fraction of signal detections surviving the DLD assembly.
    pub assembly_survival: f64,
}

/// Solves the rate algebra for both detectors at `singles_hz`:
///
/// ```text
/// MCP   = R·η_s + dark_dld
/// SNSPD = R·η_i + dark_snspd
/// C     = R·η_s·η_i·s,   s = exp(−MCP·w_dld)
/// ```
///
/// where s is the chance that no other anode pulse lands in the 4·t_a
/// assembly window.
pub fn tune_rates(t: &RateTargets, cfg: &AcquisitionConfig) -> TunedRates {
    let w_s = 4.0 * cfg.dld.t_a_ps * 1e-12;
    let survival = (-t.singles_hz * w_s).exp();
    let a = (t.singles_hz - cfg.dld_dark_rate_hz).max(0.0);
    let b = (t.singles_hz - cfg.snspd_dark_rate_hz).max(0.0);
    let c = t.coincidences_hz / survival;
    let r = if c > 0.0 { a * b / c } else { 0.0 };
    let (es, ei) = if r > 0.0 { (a / r, b / r) } else { (0.0, 0.0) };
    TunedRates {
        pair_rate_hz: r,
        pair_prob_per_pulse: r / cfg.rep_rate_hz,
        eta_signal: es,
        eta_idler: ei,
        assembly_survival: survival,
    }
}

/// Expected singles per second with zero dead time: (MCP, SNSPD, sync).
pub fn expected_singles_hz(cfg: &AcquisitionConfig) -> (f64, f64, f64) {
    let r = cfg.rep_rate_hz * cfg.pair_prob_per_pulse;
    (
        r * cfg.eta_signal + cfg.dld_dark_rate_hz,
        r * cfg.eta_idler + cfg.snspd_dark_rate_hz,
        cfg.rep_rate_hz / cfg.sync_divider as f64,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pulse: u64,
    pub lambda_s_nm: f64,
    pub lambda_i_nm: f64,
    pub signal_detected: bool,
    pub idler_detected: bool,
    pub mcp: Option<usize>,
    pub x1: Option<usize>,
    pub x2: Option<usize>,
    pub y1: Option<usize>,
    pub y2: Option<usize>,
    pub snspd: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pairs: Vec<PairRecord>,
    pub sync_tags: u64,
    pub dark_dld_assemblies: u64,
    pub dark_snspd: u64,
    pub dead_time_dropped: u64,
}

impl GroundTruth {
    /// Pairs whose signal and idler tags all survived into the stream.
    pub fn detected_pairs(&self) -> usize {
        self.pairs.iter().filter(|p| p.mcp.is_some() && p.x1.is_some() && p.x2.is_some() && p.snspd.is_some()).count()
    }
}

#[derive(Clone, Copy)]
enum Role {
    Mcp,
    X1,
    X2,
    Y1,
    Y2,
    Snspd,
}

const NO_PAIR: u32 = u32::MAX;

struct BlockOut {
    tags: Vec<TimeTag>,
    /// (local pair index, role) per tag; NO_PAIR for sync and darks.
    labels: Vec<(u32, u8)>,
    pairs: Vec<PairRecord>,
    syncs: u64,
    dark_dld: u64,
    dark_snspd: u64,
}

struct Noise {
    mcp: Option<Normal<f64>>,
    anode: Option<Normal<f64>>,
    snspd: Option<Normal<f64>>,
}

fn normal(fwhm: f64) -> Option<Normal<f64>> {
    (fwhm > 0.0).then(|| Normal::new(0.0, fwhm / FWHM_PER_SIGMA).unwrap())
}

#[inline]
fn draw<R: Rng>(d: &Option<Normal<f64>>, rng: &mut R) -> f64 {
    d.as_ref().map_or(0.0, |n| n.sample(rng))
}

fn generate_block(cfg: &AcquisitionConfig, sampler: &PairSampler, noise: &Noise, block: u64) -> BlockOut {
    let last = cfg.last_pulse();
    let n0 = block * BLOCK_PULSES;
    let n1 = ((block + 1) * BLOCK_PULSES).min(last + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(block);
    let ch = cfg.channels;
    let mut out = BlockOut { tags: Vec::new(), labels: Vec::new(), pairs: Vec::new(), syncs: 0, dark_dld: 0, dark_snspd: 0 };
    let push = |out: &mut BlockOut, c: u16, t: i64, label: (u32, u8)| -> usize {
        out.tags.push(TimeTag::new(c, t.max(0) as u64));
        out.labels.push(label);
        out.tags.len() - 1
    };

    let first_sync = n0.div_ceil(cfg.sync_divider) * cfg.sync_divider;
    let mut n = first_sync;
    while n < n1 {
        push(&mut out, ch.sync, cfg.pulse_tick(n), (NO_PAIR, 0));
        out.syncs += 1;
        n += cfg.sync_divider;
    }

    // pairs only on pulses with t_n < duration
    let len = n1.min(cfg.pair_pulses()).saturating_sub(n0);
    let mean = cfg.pair_prob_per_pulse * len as f64;
    let n_pairs = if mean > 0.0 { Poisson::new(mean).unwrap().sample(&mut rng) as u64 } else { 0 };
    let mut pulses: Vec<u64> = (0..n_pairs).map(|_| n0 + rng.random_range(0..len)).collect();
    pulses.sort_unstable();

    let sig_jitter = |d: &Option<Normal<f64>>, rng: &mut ChaCha8Rng| draw(d, rng) / std::f64::consts::SQRT_2;
    let dld = cfg.dld;
    let y_len = dld.active_length_mm();
    for pulse in pulses {
        let (ws, wi) = sampler.sample_omega(&mut rng);
        let (ls, li) = (nm_from_omega(ws), nm_from_omega(wi));
        let det_s = rng.random::<f64>() < cfg.eta_signal;
        let det_i = rng.random::<f64>() < cfg.eta_idler;
        // fixed draw count per pair keeps the stream layout independent of the outcome
        let j_mcp = draw(&noise.mcp, &mut rng);
        let j_x1 = sig_jitter(&noise.anode, &mut rng);
        let j_x2 = sig_jitter(&noise.anode, &mut rng);
        let j_y1 = sig_jitter(&noise.anode, &mut rng);
        let j_y2 = sig_jitter(&noise.anode, &mut rng);
        let j_sn = draw(&noise.snspd, &mut rng);
        let y_off: f64 = (rng.random::<f64>() - 0.5) * cfg.y_spread_mm;

        let idx = out.pairs.len() as u32;
        let mut rec = PairRecord {
            pulse,
            lambda_s_nm: ls,
            lambda_i_nm: li,
            signal_detected: false,
            idler_detected: false,
            mcp: None,
            x1: None,
            x2: None,
            y1: None,
            y2: None,
            snspd: None,
        };
        let tp = cfg.pulse_tick(pulse);
        let x = dld.position_from_wavelength(ls);
        if det_s && (0.0..=dld.active_length_mm()).contains(&x) {
            rec.signal_detected = true;
            let te = cfg.mcp_delay_ps + j_mcp;
            let y = 0.5 * y_len + y_off;
            let tx = x / dld.v_mm_per_ps;
            let ty = y / dld.v_mm_per_ps;
            rec.mcp = Some(push(&mut out, ch.mcp, tp + cfg.offset_ticks(te), (idx, Role::Mcp as u8)));
            rec.x1 = Some(push(&mut out, ch.dld_x1, tp + cfg.offset_ticks(te + tx + j_x1), (idx, Role::X1 as u8)));
            rec.x2 = Some(push(
                &mut out,
                ch.dld_x2,
                tp + cfg.offset_ticks(te + dld.t_a_ps - tx + j_x2),
                (idx, Role::X2 as u8),
            ));
            rec.y1 = Some(push(&mut out, ch.dld_y1, tp + cfg.offset_ticks(te + ty + j_y1), (idx, Role::Y1 as u8)));
            rec.y2 = Some(push(
                &mut out,
                ch.dld_y2,
                tp + cfg.offset_ticks(te + dld.t_a_ps - ty + j_y2),
                (idx, Role::Y2 as u8),
            ));
        }
        if det_i {
            rec.idler_detected = true;
            let t = cfg.mcp_delay_ps + cfg.fibre.delay_ps(li) + j_sn;
            rec.snspd = Some(push(&mut out, ch.snspd, tp + cfg.offset_ticks(t), (idx, Role::Snspd as u8)));
        }
        out.pairs.push(rec);
    }

    // darks over this block's share of [0, duration)
    let period = cfg.pulse_period_ps();
    let t_lo = n0 as f64 * period;
    let t_hi = (n1 as f64 * period).min(cfg.duration_s * 1e12);
    if t_hi > t_lo {
        let span_s = (t_hi - t_lo) * 1e-12;
        let tick = cfg.tick_ps as f64;
        let q = |ps: f64| (ps / tick).round() as i64;
        if cfg.dld_dark_rate_hz > 0.0 {
            let k = Poisson::new(cfg.dld_dark_rate_hz * span_s).unwrap().sample(&mut rng) as u64;
            for _ in 0..k {
                let t = rng.random_range(t_lo..t_hi);
                let tx = rng.random_range(0.0..dld.t_a_ps);
                let ty = 0.5 * dld.t_a_ps + (rng.random::<f64>() - 0.5) * cfg.y_spread_mm / dld.v_mm_per_ps;
                push(&mut out, ch.mcp, q(t), (NO_PAIR, 0));
                push(&mut out, ch.dld_x1, q(t + tx), (NO_PAIR, 0));
                push(&mut out, ch.dld_x2, q(t + dld.t_a_ps - tx), (NO_PAIR, 0));
                push(&mut out, ch.dld_y1, q(t + ty), (NO_PAIR, 0));
                push(&mut out, ch.dld_y2, q(t + dld.t_a_ps - ty), (NO_PAIR, 0));
            }
            out.dark_dld = k;
        }
        if cfg.snspd_dark_rate_hz > 0.0 {
            let k = Poisson::new(cfg.snspd_dark_rate_hz * span_s).unwrap().sample(&mut rng) as u64;
            for _ in 0..k {
                let t = rng.random_range(t_lo..t_hi);
                push(&mut out, ch.snspd, q(t), (NO_PAIR, 0));
            }
            out.dark_snspd = k;
        }
    }
    out
}

/// Synthesises the sorted stream and its ground truth. Deterministic in `cfg.seed`.
pub fn generate(jsa: &JsaGrid, cfg: &AcquisitionConfig) -> Result<(Vec<TimeTag>, GroundTruth)> {
    cfg.validate()?;
    if !jsa.normalized {
        return Err(Error::data("generate expects a normalized JSA"));
    }
    let sampler = PairSampler::new(jsa)?;
    let noise = Noise {
        mcp: normal(cfg.mcp_jitter_fwhm_ps),
        anode: normal(cfg.dtx_jitter_fwhm_ps),
        snspd: normal(cfg.snspd_jitter_fwhm_ps()),
    };
    let n_blocks = cfg.last_pulse() / BLOCK_PULSES + 1;
    let blocks: Vec<BlockOut> =
        (0..n_blocks).into_par_iter().map(|b| generate_block(cfg, &sampler, &noise, b)).collect();

    let mut truth = GroundTruth::default();
    let total: usize = blocks.iter().map(|b| b.tags.len()).sum();
    let mut tags = Vec::with_capacity(total);
    let mut labels: Vec<(u32, u8)> = Vec::with_capacity(total);
    for b in blocks {
        let base = truth.pairs.len() as u32;
        tags.extend_from_slice(&b.tags);
        labels.extend(b.labels.iter().map(|&(p, r)| if p == NO_PAIR { (p, r) } else { (p + base, r) }));
        truth.pairs.extend(b.pairs);
        truth.sync_tags += b.syncs;
        truth.dark_dld_assemblies += b.dark_dld;
        truth.dark_snspd += b.dark_snspd;
    }

    // stable sort on (timestamp, channel) keeps generation order within ties
    let mut order: Vec<u32> = (0..tags.len() as u32).collect();
    order.par_sort_by_key(|&k| tags[k as usize].key());

    let dead = |c: u16| -> i64 {
        let ch = cfg.channels;
        let ps = if c == ch.mcp {
            cfg.dead_time.mcp_ps
        } else if c == ch.snspd {
            cfg.dead_time.snspd_ps
        } else if c == ch.sync {
            cfg.dead_time.sync_ps
        } else {
            cfg.dead_time.anode_ps
        };
        (ps / cfg.tick_ps as f64).round() as i64
    };
    let dead_ticks: Vec<i64> = (0..=cfg.channels.max_id()).map(dead).collect();
    let mut last_kept: Vec<Option<u64>> = vec![None; dead_ticks.len()];

    let mut sorted = Vec::with_capacity(tags.len());
    for k in order {
        let tag = tags[k as usize];
        let c = tag.channel as usize;
        if let Some(prev) = last_kept[c] {
            if ((tag.timestamp - prev) as i64) < dead_ticks[c] {
                truth.dead_time_dropped += 1;
                let (p, r) = labels[k as usize];
                if p != NO_PAIR {
                    set_index(&mut truth.pairs[p as usize], r, None);
                } else if tag.channel == cfg.channels.sync {
                    truth.sync_tags -= 1;
                }
                continue;
            }
        }
        last_kept[c] = Some(tag.timestamp);
        let (p, r) = labels[k as usize];
        if p != NO_PAIR {
            set_index(&mut truth.pairs[p as usize], r, Some(sorted.len()));
        }
        sorted.push(tag);
    }
    Ok((sorted, truth))
}

fn set_index(rec: &mut PairRecord, role: u8, v: Option<usize>) {
    let slot = match role {
        r if r == Role::Mcp as u8 => &mut rec.mcp,
        r if r == Role::X1 as u8 => &mut rec.x1,
        r if r == Role::X2 as u8 => &mut rec.x2,
        r if r == Role::Y1 as u8 => &mut rec.y1,
        r if r == Role::Y2 as u8 => &mut rec.y2,
        _ => &mut rec.snspd,
    };
    *slot = v;
}

/// Analytic Gaussian IRF (FWHM = mcp_jitter) binned at tick resolution,
/// scaled to `events`. Bins cover ±6σ around the photoelectron delay.
pub fn irf_reference(cfg: &AcquisitionConfig, events: u64) -> Result<Histogram1D> {
    cfg.validate()?;
    let tick = cfg.tick_ps as f64;
    let sigma = cfg.mcp_jitter_fwhm_ps / FWHM_PER_SIGMA;
    let c = cfg.mcp_delay_ps;
    let half = ((6.0 * sigma / tick).ceil() as i64).max(2);
    let center = (c / tick).round() as i64;
    let axis = BinAxis::new(center - half, 1, (2 * half + 1) as usize, cfg.tick_ps)?;
    let mut h = Histogram1D::new(axis);
    for k in 0..axis.bins {
        // tick value v collects times in [(v − ½)·tick, (v + ½)·tick)
        let v = axis.edge(k) as f64;
        let p = if sigma > 0.0 {
            let z = |t: f64| 0.5 * libm::erfc(-(t - c) / (sigma * std::f64::consts::SQRT_2));
            z((v + 0.5) * tick) - z((v - 0.5) * tick)
        } else if axis.edge(k) == center {
            1.0
        } else {
            0.0
        };
        h.counts[k] = (p * events as f64).round() as u64;
    }
    Ok(h)
}
