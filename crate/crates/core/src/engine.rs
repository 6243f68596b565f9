//! Streaming coincidence engine.
//!
//! One pass over a sorted stream:
//!
//! * each MCP opens a window (t, t + w]; it becomes a [`DldEvent`] iff exactly
//!   one X1 and one X2 land inside, otherwise it is tallied as ambiguous;
//! * the event's sync offset is taken from the latest preceding sync tag;
//! * every SNSPD tag with τ = t(SNSPD) − t(MCP) inside the idler gate makes a
//!   [`Coincidence`]; a copy of the gate shifted by one sync period counts
//!   accidentals.
//!
//! Memory is bounded by the window and gate spans. Parallel builds split the
//! MCP tags into contiguous ranges, each run with enough look-behind and
//! look-ahead that the merged output equals the serial pass.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{BinAxis, Histogram1D, Histogram2D};
use crate::tagstream::{ChannelMap, StreamHeader, TimeTag};

/// Tags per parallel chunk.
pub const CHUNK_TAGS: usize = 1 << 19;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo_ps: f64,
    pub hi_ps: f64,
    pub bin_ticks: i64,
}

impl AxisSpec {
    pub fn resolve(&self, tick_ps: u32) -> Result<BinAxis> {
        if !self.lo_ps.is_finite() || !self.hi_ps.is_finite() {
            return Err(Error::config("axis bounds must be finite"));
        }
        let t = tick_ps as f64;
        BinAxis::covering((self.lo_ps / t).round() as i64, (self.hi_ps / t).round() as i64, self.bin_ticks, tick_ps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventBuildConfig {
    /// X/Y search window after each MCP tag; defaults to 4·t_a.
    pub dld_window_ps: f64,
    pub t_a_ps: f64,
    /// Allowance beyond ±t_a for |Δt_x|.
    pub guard_ps: f64,
    pub gate_center_ps: f64,
    pub gate_halfwidth_ps: f64,
    /// Shift of the accidental gate, one sync period by default.
    pub accidental_offset_ps: f64,
    /// Fold sync offsets modulo the laser period before histogramming/slicing.
    pub fold_period_ps: Option<f64>,
    pub irf: AxisSpec,
    pub signal: AxisSpec,
    pub idler: AxisSpec,
    pub dt_y: AxisSpec,
}

impl Default for EventBuildConfig {
    fn default() -> Self {
        Self {
            dld_window_ps: 320_000.0,
            t_a_ps: 80_000.0,
            guard_ps: 2_000.0,
            gate_center_ps: 7.7e6,
            gate_halfwidth_ps: 10_000.0,
            accidental_offset_ps: 63.0 * 1e12 / 76e6,
            fold_period_ps: None,
            irf: AxisSpec { lo_ps: 0.0, hi_ps: 830_000.0, bin_ticks: 1 },
            signal: AxisSpec { lo_ps: -18_600.0, hi_ps: 18_600.0, bin_ticks: 8 },
            idler: AxisSpec { lo_ps: 7.7e6 - 9_000.0, hi_ps: 7.7e6 + 9_000.0, bin_ticks: 4 },
            dt_y: AxisSpec { lo_ps: -20_000.0, hi_ps: 20_000.0, bin_ticks: 8 },
        }
    }
}

impl EventBuildConfig {
    /// Laser-period folding with a matching IRF axis.
    pub fn folded(mut self, period_ps: f64) -> Self {
        self.fold_period_ps = Some(period_ps);
        self.irf = AxisSpec { lo_ps: 0.0, hi_ps: period_ps, bin_ticks: 1 };
        self
    }

    pub fn resolve(&self, header: &StreamHeader) -> Result<ResolvedBuild> {
        self.resolve_with(header.tick_ps, header.channel_map)
    }

    pub fn resolve_with(&self, tick_ps: u32, channels: ChannelMap) -> Result<ResolvedBuild> {
        if tick_ps == 0 {
            return Err(Error::config("tick_ps must be >= 1"));
        }
        channels.validate()?;
        for (name, v) in [
            ("dld_window_ps", self.dld_window_ps),
            ("t_a_ps", self.t_a_ps),
            ("guard_ps", self.guard_ps),
            ("gate_halfwidth_ps", self.gate_halfwidth_ps),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.t_a_ps > 0.0) || !(self.dld_window_ps > 0.0) {
            return Err(Error::config("t_a_ps and dld_window_ps must be > 0"));
        }
        if !self.gate_center_ps.is_finite() || !self.accidental_offset_ps.is_finite() {
            return Err(Error::config("gate positions must be finite"));
        }
        let t = tick_ps as f64;
        let q = |ps: f64| (ps / t).round() as i64;
        let fold_ticks = match self.fold_period_ps {
            Some(p) if p > 0.0 && p.is_finite() => Some(p / t),
            Some(_) => return Err(Error::config("fold_period_ps must be > 0")),
            None => None,
        };
        let c = q(self.gate_center_ps);
        let h = q(self.gate_halfwidth_ps);
        let a = c + q(self.accidental_offset_ps);
        Ok(ResolvedBuild {
            tick_ps,
            channels,
            window: q(self.dld_window_ps).max(1),
            dt_limit: q(self.t_a_ps + self.guard_ps),
            gate: (c - h, c + h),
            accidental_gate: (a - h, a + h),
            fold_ticks,
            irf: self.irf.resolve(tick_ps)?,
            signal: self.signal.resolve(tick_ps)?,
            idler: self.idler.resolve(tick_ps)?,
            dt_y: self.dt_y.resolve(tick_ps)?,
        })
    }
}

/// [`EventBuildConfig`] in ticks.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedBuild {
    pub tick_ps: u32,
    pub channels: ChannelMap,
    pub window: i64,
    pub dt_limit: i64,
    /// Inclusive τ bounds.
    pub gate: (i64, i64),
    pub accidental_gate: (i64, i64),
    pub fold_ticks: Option<f64>,
    pub irf: BinAxis,
    pub signal: BinAxis,
    pub idler: BinAxis,
    pub dt_y: BinAxis,
}

impl ResolvedBuild {
    fn snspd_lo(&self) -> i64 {
        self.gate.0.min(self.accidental_gate.0)
    }

    fn snspd_hi(&self) -> i64 {
        self.gate.1.max(self.accidental_gate.1)
    }

    /// Span after an MCP tag beyond which it can no longer change.
    fn horizon(&self) -> i64 {
        self.window.max(self.snspd_hi()).max(0)
    }

    /// Sync offset folded to one laser period when folding is enabled.
    #[inline]
    pub fn offset(&self, ev: &DldEvent) -> Option<i64> {
        let off = ev.t_sync_offset?;
        Some(match self.fold_ticks {
            Some(p) => {
                let k = (off as f64 / p).floor();
                off - (k * p).round() as i64
            }
            None => off,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DldEvent {
    pub t_mcp: u64,
    /// t(X1) − t(X2).
    pub dt_x: i64,
    pub dt_y: Option<i64>,
    /// t_mcp − t(latest preceding sync), None before the first sync.
    pub t_sync_offset: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coincidence {
    pub dld: DldEvent,
    pub tau_idler: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub tags: u64,
    pub mcp_triggers: u64,
    pub events: u64,
    /// MCP triggers without an X1 or X2 candidate.
    pub missing_anode: u64,
    /// MCP triggers with two or more X1 or X2 candidates.
    pub ambiguous_anode: u64,
    pub out_of_guard: u64,
    pub sync_less_events: u64,
    pub coincidences: u64,
    /// Events with more than one SNSPD tag in the gate.
    pub multi_hit_events: u64,
    pub accidentals: u64,
}

impl Diagnostics {
    fn add(&mut self, o: &Self) {
        self.tags += o.tags;
        self.mcp_triggers += o.mcp_triggers;
        self.events += o.events;
        self.missing_anode += o.missing_anode;
        self.ambiguous_anode += o.ambiguous_anode;
        self.out_of_guard += o.out_of_guard;
        self.sync_less_events += o.sync_less_events;
        self.coincidences += o.coincidences;
        self.multi_hit_events += o.multi_hit_events;
        self.accidentals += o.accidentals;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuildOutput {
    pub events: Vec<DldEvent>,
    pub coincidences: Vec<Coincidence>,
    pub diagnostics: Diagnostics,
    /// Tag count per channel id.
    pub singles: Vec<u64>,
}

impl BuildOutput {
    fn append(&mut self, mut o: BuildOutput) {
        self.events.append(&mut o.events);
        self.coincidences.append(&mut o.coincidences);
        self.diagnostics.add(&o.diagnostics);
        if self.singles.len() < o.singles.len() {
            self.singles.resize(o.singles.len(), 0);
        }
        for (a, b) in self.singles.iter_mut().zip(&o.singles) {
            *a += b;
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Hits {
    n: u32,
    t: u64,
}

impl Hits {
    #[inline]
    fn hit(&mut self, t: u64) {
        self.n += 1;
        self.t = t;
    }

    fn single(&self) -> Option<u64> {
        (self.n == 1).then_some(self.t)
    }
}

struct Pending {
    t: u64,
    sync: Option<u64>,
    x1: Hits,
    x2: Hits,
    y1: Hits,
    y2: Hits,
}

/// Push-based engine; feed sorted tags, then [`Engine::finish`].
pub struct Engine {
    cfg: ResolvedBuild,
    last_sync: Option<u64>,
    last_t: Option<(u64, u16)>,
    pending: VecDeque<Pending>,
    awaiting: VecDeque<usize>,
    snspd: VecDeque<u64>,
    out: BuildOutput,
}

impl Engine {
    pub fn new(cfg: ResolvedBuild) -> Self {
        let n = cfg.channels.max_id() as usize + 1;
        Self {
            cfg,
            last_sync: None,
            last_t: None,
            pending: VecDeque::new(),
            awaiting: VecDeque::new(),
            snspd: VecDeque::new(),
            out: BuildOutput { singles: vec![0; n], ..Default::default() },
        }
    }

    pub fn push(&mut self, tag: TimeTag) -> Result<()> {
        if let Some(prev) = self.last_t {
            if tag.key() < prev {
                return Err(Error::Unsorted { index: self.out.diagnostics.tags as usize });
            }
        }
        self.last_t = Some(tag.key());
        if let Some(s) = self.out.singles.get_mut(tag.channel as usize) {
            *s += 1;
        }
        self.out.diagnostics.tags += 1;
        self.step(tag, true);
        Ok(())
    }

    /// `own` says whether an MCP tag opens an event in this engine.
    #[inline]
    fn step(&mut self, tag: TimeTag, own: bool) {
        let t = tag.timestamp;
        self.advance(t);
        let ch = &self.cfg.channels;
        let c = tag.channel;
        if c == ch.sync {
            self.last_sync = Some(t);
        } else if c == ch.mcp {
            if own {
                self.out.diagnostics.mcp_triggers += 1;
                self.pending.push_back(Pending {
                    t,
                    sync: self.last_sync,
                    x1: Hits::default(),
                    x2: Hits::default(),
                    y1: Hits::default(),
                    y2: Hits::default(),
                });
            }
        } else if c == ch.snspd {
            self.prune_snspd(t);
            self.snspd.push_back(t);
        } else {
            let slot: fn(&mut Pending) -> &mut Hits = if c == ch.dld_x1 {
                |p| &mut p.x1
            } else if c == ch.dld_x2 {
                |p| &mut p.x2
            } else if c == ch.dld_y1 {
                |p| &mut p.y1
            } else if c == ch.dld_y2 {
                |p| &mut p.y2
            } else {
                return;
            };
            // pending entries all satisfy t ≤ t_mcp + w after advance()
            for p in self.pending.iter_mut().rev() {
                if p.t < t {
                    slot(p).hit(t);
                }
            }
        }
    }

    /// Finalises MCP windows and idler gates that closed before `t`.
    #[inline]
    fn advance(&mut self, t: u64) {
        let w = self.cfg.window as u64;
        while let Some(p) = self.pending.front() {
            if p.t + w >= t {
                break;
            }
            let p = self.pending.pop_front().unwrap();
            self.finalize(p);
        }
        let hi = self.cfg.snspd_hi();
        while let Some(&k) = self.awaiting.front() {
            if self.out.events[k].t_mcp as i64 + hi >= t as i64 {
                break;
            }
            self.awaiting.pop_front();
            self.complete(k);
        }
    }

    fn finalize(&mut self, p: Pending) {
        let d = &mut self.out.diagnostics;
        let (x1, x2) = match (p.x1.single(), p.x2.single()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                if p.x1.n == 0 || p.x2.n == 0 {
                    d.missing_anode += 1;
                } else {
                    d.ambiguous_anode += 1;
                }
                return;
            }
        };
        let dt_x = x1 as i64 - x2 as i64;
        if dt_x.abs() > self.cfg.dt_limit {
            d.out_of_guard += 1;
            return;
        }
        let dt_y = match (p.y1.single(), p.y2.single()) {
            (Some(a), Some(b)) => Some(a as i64 - b as i64),
            _ => None,
        };
        let t_sync_offset = p.sync.map(|s| (p.t - s) as i64);
        if t_sync_offset.is_none() {
            d.sync_less_events += 1;
        }
        d.events += 1;
        self.out.events.push(DldEvent { t_mcp: p.t, dt_x, dt_y, t_sync_offset });
        self.awaiting.push_back(self.out.events.len() - 1);
    }

    fn complete(&mut self, k: usize) {
        let ev = self.out.events[k];
        let t0 = ev.t_mcp as i64;
        let range = |(lo, hi): (i64, i64)| {
            let a = self.snspd.partition_point(|&s| (s as i64) < t0 + lo);
            let b = self.snspd.partition_point(|&s| (s as i64) <= t0 + hi);
            a..b
        };
        let g = range(self.cfg.gate);
        let acc = range(self.cfg.accidental_gate).len() as u64;
        let n = g.len() as u64;
        for i in g {
            let tau = self.snspd[i] as i64 - t0;
            self.out.coincidences.push(Coincidence { dld: ev, tau_idler: tau });
        }
        let d = &mut self.out.diagnostics;
        d.coincidences += n;
        d.multi_hit_events += (n > 1) as u64;
        d.accidentals += acc;
    }

    fn prune_snspd(&mut self, now: u64) {
        let oldest = self
            .awaiting
            .front()
            .map(|&k| self.out.events[k].t_mcp)
            .or(self.pending.front().map(|p| p.t))
            .unwrap_or(now);
        let bound = oldest as i64 + self.cfg.snspd_lo();
        while let Some(&s) = self.snspd.front() {
            if (s as i64) >= bound {
                break;
            }
            self.snspd.pop_front();
        }
    }

    pub fn finish(mut self) -> BuildOutput {
        while let Some(p) = self.pending.pop_front() {
            self.finalize(p);
        }
        while let Some(k) = self.awaiting.pop_front() {
            self.complete(k);
        }
        self.out
    }
}

/// Serial single pass.
pub fn build(tags: &[TimeTag], cfg: &ResolvedBuild) -> Result<BuildOutput> {
    let mut e = Engine::new(cfg.clone());
    for &t in tags {
        e.push(t)?;
    }
    Ok(e.finish())
}

/// Runs the MCP tags with indices in `own` over the slice of the stream they can see.
fn build_range(tags: &[TimeTag], own: std::ops::Range<usize>, cfg: &ResolvedBuild) -> BuildOutput {
    let mut e = Engine::new(cfg.clone());
    if own.is_empty() {
        return e.finish();
    }
    let sync = cfg.channels.sync;
    let t_first = tags[own.start].timestamp as i64;
    let mut start = own.start;
    let lo = cfg.snspd_lo().min(0);
    if lo < 0 {
        start = tags[..start].partition_point(|t| (t.timestamp as i64) < t_first + lo);
    }
    if let Some(s) = tags[..own.start].iter().rposition(|t| t.channel == sync) {
        start = start.min(s);
    }
    let t_last = tags[own.end - 1].timestamp as i64;
    let stop = own.end + tags[own.end..].partition_point(|t| (t.timestamp as i64) <= t_last + cfg.horizon());
    for (i, &tag) in tags[start..stop].iter().enumerate() {
        let i = i + start;
        let own_i = own.contains(&i);
        if own_i {
            if let Some(s) = e.out.singles.get_mut(tag.channel as usize) {
                *s += 1;
            }
            e.out.diagnostics.tags += 1;
        }
        e.step(tag, own_i);
    }
    e.finish()
}

/// Build with `chunks` contiguous ranges; output is independent of `chunks`.
pub fn build_chunked(tags: &[TimeTag], cfg: &ResolvedBuild, chunks: usize) -> Result<BuildOutput> {
    if let Some(i) = crate::tagstream::first_unsorted(tags) {
        return Err(Error::Unsorted { index: i });
    }
    let k = chunks.max(1);
    let n = tags.len();
    let bounds: Vec<std::ops::Range<usize>> = (0..k).map(|c| c * n / k..(c + 1) * n / k).collect();
    let parts: Vec<BuildOutput> = bounds.into_par_iter().map(|r| build_range(tags, r, cfg)).collect();
    let mut out = BuildOutput { singles: vec![0; cfg.channels.max_id() as usize + 1], ..Default::default() };
    for p in parts {
        out.append(p);
    }
    Ok(out)
}

/// Parallel build on a pool of `threads` workers (0 = rayon default).
pub fn build_parallel(tags: &[TimeTag], cfg: &ResolvedBuild, threads: usize) -> Result<BuildOutput> {
    let chunks = tags.len().div_ceil(CHUNK_TAGS).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| build_chunked(tags, cfg, chunks))
}

/// DLD events alone.
pub fn build_dld_events(tags: &[TimeTag], cfg: &ResolvedBuild) -> Result<(Vec<DldEvent>, Diagnostics)> {
    let out = build(tags, cfg)?;
    Ok((out.events, out.diagnostics))
}

/// Two-pointer gate match of events against SNSPD tags; agrees with [`build`].
pub fn build_coincidences(events: &[DldEvent], tags: &[TimeTag], cfg: &ResolvedBuild) -> Vec<Coincidence> {
    let sn: Vec<i64> = tags.iter().filter(|t| t.channel == cfg.channels.snspd).map(|t| t.timestamp as i64).collect();
    let (lo, hi) = cfg.gate;
    let mut out = Vec::new();
    let mut j = 0;
    for ev in events {
        let t0 = ev.t_mcp as i64;
        while j < sn.len() && sn[j] < t0 + lo {
            j += 1;
        }
        let mut k = j;
        while k < sn.len() && sn[k] <= t0 + hi {
            out.push(Coincidence { dld: *ev, tau_idler: sn[k] - t0 });
            k += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histograms {
    /// Sync offset of every event.
    pub irf: Histogram1D,
    /// Δt_x of every event.
    pub signal_spectrum: Histogram1D,
    /// τ of every coincidence.
    pub idler_spectrum: Histogram1D,
    pub dt_y: Histogram1D,
    /// (Δt_x, τ) of every coincidence.
    pub jsi: Histogram2D,
}

pub fn accumulate_histograms(coincidences: &[Coincidence], events: &[DldEvent], cfg: &ResolvedBuild) -> Histograms {
    let mut h = Histograms {
        irf: Histogram1D::new(cfg.irf),
        signal_spectrum: Histogram1D::new(cfg.signal),
        idler_spectrum: Histogram1D::new(cfg.idler),
        dt_y: Histogram1D::new(cfg.dt_y),
        jsi: Histogram2D::new(cfg.signal, cfg.idler),
    };
    for ev in events {
        if let Some(o) = cfg.offset(ev) {
            h.irf.add(o);
        }
        h.signal_spectrum.add(ev.dt_x);
        if let Some(y) = ev.dt_y {
            h.dt_y.add(y);
        }
    }
    for c in coincidences {
        h.idler_spectrum.add(c.tau_idler);
        h.jsi.add(c.dld.dt_x, c.tau_idler);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSet {
    pub window_width: i64,
    pub window_origin: i64,
    pub frames: Vec<Histogram2D>,
    /// Coincidences outside every frame, including sync-less ones.
    pub out_of_window: Histogram2D,
}

impl SliceSet {
    pub fn frame_totals(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.in_range()).collect()
    }
}

/// Partitions the JSI by (folded) sync offset into `n` windows of `width` ticks from `origin`.
pub fn slice_time_resolved(
    coincidences: &[Coincidence],
    cfg: &ResolvedBuild,
    width: i64,
    origin: i64,
    n: usize,
) -> Result<SliceSet> {
    if width < 1 {
        return Err(Error::config("slice window must be at least one tick"));
    }
    let blank = Histogram2D::new(cfg.signal, cfg.idler);
    let mut frames = vec![blank.clone(); n];
    let mut out = blank;
    for c in coincidences {
        let k = cfg.offset(&c.dld).map(|o| (o - origin).div_euclid(width)).filter(|k| *k >= 0 && (*k as usize) < n);
        match k {
            Some(k) => frames[k as usize].add(c.dld.dt_x, c.tau_idler),
            None => out.add(c.dld.dt_x, c.tau_idler),
        }
    }
    Ok(SliceSet { window_width: width, window_origin: origin, frames, out_of_window: out })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub duration_s: f64,
    pub singles_hz: Vec<(String, f64)>,
    pub coincidence_hz: f64,
    pub accidental_hz: f64,
    /// Coincidences over displaced-gate accidentals; None without accidentals.
    pub coincidence_to_accidental: Option<f64>,
    /// Coincidences over MCP singles.
    pub coincidence_to_singles: Option<f64>,
}

pub fn rates_report(out: &BuildOutput, channels: &ChannelMap, duration_s: f64) -> Result<RatesReport> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::data("rates need a positive duration"));
    }
    let names = ["mcp", "dld_x1", "dld_x2", "dld_y1", "dld_y2", "snspd", "sync"];
    let singles_hz: Vec<(String, f64)> = names
        .iter()
        .zip(channels.ids())
        .map(|(n, id)| (n.to_string(), out.singles.get(id as usize).copied().unwrap_or(0) as f64 / duration_s))
        .collect();
    let c = out.diagnostics.coincidences as f64;
    let a = out.diagnostics.accidentals as f64;
    let mcp = singles_hz[0].1 * duration_s;
    Ok(RatesReport {
        duration_s,
        coincidence_hz: c / duration_s,
        accidental_hz: a / duration_s,
        coincidence_to_accidental: (a > 0.0).then(|| c / a),
        coincidence_to_singles: (mcp > 0.0).then(|| c / mcp),
        singles_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CH: ChannelMap = ChannelMap { mcp: 0, dld_x1: 1, dld_x2: 2, dld_y1: 3, dld_y2: 4, snspd: 5, sync: 6 };

    fn cfg_small() -> ResolvedBuild {
        let c = EventBuildConfig {
            dld_window_ps: 160.0 * 25.0,
            t_a_ps: 40.0 * 25.0,
            guard_ps: 10.0 * 25.0,
            gate_center_ps: 500.0 * 25.0,
            gate_halfwidth_ps: 20.0 * 25.0,
            accidental_offset_ps: 300.0 * 25.0,
            irf: AxisSpec { lo_ps: 0.0, hi_ps: 25_000.0, bin_ticks: 1 },
            signal: AxisSpec { lo_ps: -1_250.0, hi_ps: 1_250.0, bin_ticks: 2 },
            idler: AxisSpec { lo_ps: 480.0 * 25.0, hi_ps: 520.0 * 25.0, bin_ticks: 1 },
            ..Default::default()
        };
        c.resolve_with(25, CH).unwrap()
    }

    fn sorted(mut v: Vec<TimeTag>) -> Vec<TimeTag> {
        v.sort_by_key(|t| t.key());
        v
    }

    #[test]
    fn direct_event_and_rejection() {
        let c = cfg_small();
        let tags = sorted(vec![
            TimeTag::new(6, 900),
            TimeTag::new(0, 1000),
            TimeTag::new(1, 1010),
            TimeTag::new(2, 1030),
            TimeTag::new(0, 5000),
            TimeTag::new(1, 5010),
            TimeTag::new(1, 5012),
            TimeTag::new(2, 5030),
        ]);
        let (ev, d) = build_dld_events(&tags, &c).unwrap();
        assert_eq!(ev, vec![DldEvent { t_mcp: 1000, dt_x: -20, dt_y: None, t_sync_offset: Some(100) }]);
        assert_eq!(d.ambiguous_anode, 1);
    }

    #[test]
    fn gate_boundaries() {
        let c = cfg_small();
        let base = vec![TimeTag::new(0, 0), TimeTag::new(1, 10), TimeTag::new(2, 30)];
        for (t, n) in [(500u64, 1usize), (520, 1), (480, 1), (521, 0), (479, 0)] {
            let mut v = base.clone();
            v.push(TimeTag::new(5, t));
            let out = build(&sorted(v), &c).unwrap();
            assert_eq!(out.coincidences.len(), n, "snspd at {t}");
            if n == 1 {
                assert_eq!(out.coincidences[0].tau_idler, t as i64);
            }
        }
    }

    #[test]
    fn empty_stream() {
        let c = cfg_small();
        let out = build(&[], &c).unwrap();
        let h = accumulate_histograms(&out.coincidences, &out.events, &c);
        assert_eq!(h.jsi.in_range() + h.irf.total() + h.signal_spectrum.total(), 0);
        assert!(rates_report(&out, &CH, 0.0).is_err());
    }

    #[test]
    fn unsorted_rejected() {
        let c = cfg_small();
        assert!(matches!(build(&[TimeTag::new(0, 5), TimeTag::new(0, 4)], &c), Err(Error::Unsorted { .. })));
    }

    /// O(n²) reference matcher.
    fn brute(tags: &[TimeTag], c: &ResolvedBuild) -> (Vec<DldEvent>, Vec<Coincidence>, u64) {
        let mut ev = Vec::new();
        let mut co = Vec::new();
        let mut acc = 0;
        for (i, m) in tags.iter().enumerate().filter(|(_, t)| t.channel == 0) {
            let tm = m.timestamp as i64;
            let inw = |ch: u16| -> Vec<i64> {
                tags.iter()
                    .filter(|t| t.channel == ch && (t.timestamp as i64) > tm && (t.timestamp as i64) <= tm + c.window)
                    .map(|t| t.timestamp as i64)
                    .collect()
            };
            let (x1, x2, y1, y2) = (inw(1), inw(2), inw(3), inw(4));
            if x1.len() != 1 || x2.len() != 1 || (x1[0] - x2[0]).abs() > c.dt_limit {
                continue;
            }
            let sync = tags[..i].iter().rev().find(|t| t.channel == 6).map(|t| tm - t.timestamp as i64);
            let dt_y = (y1.len() == 1 && y2.len() == 1).then(|| y1[0] - y2[0]);
            let e = DldEvent { t_mcp: m.timestamp, dt_x: x1[0] - x2[0], dt_y, t_sync_offset: sync };
            ev.push(e);
            for s in tags.iter().filter(|t| t.channel == 5) {
                let tau = s.timestamp as i64 - tm;
                if tau >= c.gate.0 && tau <= c.gate.1 {
                    co.push(Coincidence { dld: e, tau_idler: tau });
                }
                if tau >= c.accidental_gate.0 && tau <= c.accidental_gate.1 {
                    acc += 1;
                }
            }
        }
        (ev, co, acc)
    }

    fn planted(seed: u64, triples: usize) -> Vec<TimeTag> {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vec::new();
        for k in 0..triples {
            let t = k as u64 * 97 + r.random_range(0..40);
            v.push(TimeTag::new(0, t));
            let x = r.random_range(0..=40);
            v.push(TimeTag::new(1, t + x));
            v.push(TimeTag::new(2, t + 40 - x));
            if r.random_bool(0.7) {
                v.push(TimeTag::new(5, t + 500 + r.random_range(0..30) - 15));
            }
            if r.random_bool(0.1) {
                v.push(TimeTag::new(6, t + r.random_range(0..60)));
            }
            if r.random_bool(0.2) {
                v.push(TimeTag::new(r.random_range(0..6), t + r.random_range(0..300)));
            }
        }
        sorted(v)
    }

    #[test]
    fn matches_brute_force() {
        let c = cfg_small();
        let tags = planted(7, 2_000);
        let out = build(&tags, &c).unwrap();
        let (ev, co, acc) = brute(&tags, &c);
        assert_eq!(out.events, ev);
        assert_eq!(out.coincidences, co);
        assert_eq!(out.diagnostics.accidentals, acc);
        assert_eq!(build_coincidences(&out.events, &tags, &c), co);
        assert_eq!(out.diagnostics.events as usize, ev.len());
    }

    #[test]
    fn slicing_one_window_is_static() {
        let c = cfg_small();
        let tags = planted(3, 500);
        let out = build(&tags, &c).unwrap();
        let h = accumulate_histograms(&out.coincidences, &out.events, &c);
        let s = slice_time_resolved(&out.coincidences, &c, 1 << 40, -(1 << 39), 1).unwrap();
        let mut merged = s.frames[0].clone();
        merged.merge_from(&s.out_of_window).unwrap();
        assert_eq!(merged, h.jsi);
        assert!(slice_time_resolved(&out.coincidences, &c, 0, 0, 3).is_err());
    }

    #[test]
    fn folding_wraps_into_one_period() {
        let mut c = cfg_small();
        c.fold_ticks = Some(526.315_789);
        let ev = |o| DldEvent { t_mcp: 0, dt_x: 0, dt_y: None, t_sync_offset: Some(o) };
        assert_eq!(c.offset(&ev(200)), Some(200));
        assert_eq!(c.offset(&ev(726)), Some(200));
        assert_eq!(c.offset(&ev((62.0f64 * 526.315_789).round() as i64 + 200)), Some(200));
    }

    #[test]
    fn monotone_in_appended_tags() {
        let c = cfg_small();
        let tags = planted(11, 300);
        let out = build(&tags, &c).unwrap();
        let last = tags.last().unwrap().timestamp;
        let mut more = tags.clone();
        more.extend((1..50).map(|k| TimeTag::new((k % 6) as u16, last + k * 3)));
        let ext = build(&more, &c).unwrap();
        let cutoff = last - c.horizon() as u64;
        let early = |v: &[DldEvent]| v.iter().filter(|e| e.t_mcp < cutoff).copied().collect::<Vec<_>>();
        assert_eq!(early(&out.events), early(&ext.events));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn chunking_invariance(seed in 0u64..1000, chunks in 1usize..17, n in 0usize..400) {
            let c = cfg_small();
            let tags = planted(seed, n);
            let serial = build(&tags, &c).unwrap();
            let par = build_chunked(&tags, &c, chunks).unwrap();
            prop_assert_eq!(&serial, &par);
            let hs = accumulate_histograms(&serial.coincidences, &serial.events, &c);
            let hp = accumulate_histograms(&par.coincidences, &par.events, &c);
            prop_assert_eq!(hs, hp);
        }

        #[test]
        fn slice_partition_identity(seed in 0u64..1000, width in 1i64..40, origin in -20i64..60, frames in 1usize..8) {
            let c = cfg_small();
            let tags = planted(seed, 300);
            let out = build(&tags, &c).unwrap();
            let h = accumulate_histograms(&out.coincidences, &out.events, &c);
            let s = slice_time_resolved(&out.coincidences, &c, width, origin, frames).unwrap();
            let mut sum = s.out_of_window.clone();
            for f in &s.frames {
                sum.merge_from(f).unwrap();
            }
            prop_assert_eq!(sum.counts, h.jsi.counts);
            prop_assert_eq!(sum.out_of_range, h.jsi.out_of_range);
        }
    }
}
