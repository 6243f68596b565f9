//! Integer-count histograms over tick-valued axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform binning of signed tick values: bin k covers [origin + k·width, origin + (k+1)·width).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinAxis {
    pub origin: i64,
    pub width: i64,
    pub bins: usize,
    pub tick_ps: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Under,
    Bin(usize),
    Over,
}

impl BinAxis {
    pub fn new(origin: i64, width: i64, bins: usize, tick_ps: u32) -> Result<Self> {
        if width < 1 || bins == 0 || tick_ps == 0 {
            return Err(Error::config("bin axes need width >= 1 tick and at least one bin"));
        }
        Ok(Self { origin, width, bins, tick_ps })
    }

    /// Smallest axis of `width`-tick bins covering [lo, hi].
    pub fn covering(lo: i64, hi: i64, width: i64, tick_ps: u32) -> Result<Self> {
        if hi < lo {
            return Err(Error::config("empty bin range"));
        }
        let span = hi - lo + 1;
        Self::new(lo, width, ((span + width - 1) / width) as usize, tick_ps)
    }

    #[inline]
    pub fn slot(&self, v: i64) -> Slot {
        if v < self.origin {
            return Slot::Under;
        }
        let k = ((v - self.origin) / self.width) as u64;
        if k >= self.bins as u64 {
            Slot::Over
        } else {
            Slot::Bin(k as usize)
        }
    }

    #[inline]
    pub fn index(&self, v: i64) -> Option<usize> {
        match self.slot(v) {
            Slot::Bin(k) => Some(k),
            _ => None,
        }
    }

    pub fn end(&self) -> i64 {
        self.origin + self.width * self.bins as i64
    }

    pub fn edge(&self, k: usize) -> i64 {
        self.origin + self.width * k as i64
    }

    /// Bin centre in ticks.
    pub fn center(&self, k: usize) -> f64 {
        self.edge(k) as f64 + 0.5 * (self.width - 1) as f64
    }

    pub fn center_ps(&self, k: usize) -> f64 {
        self.center(k) * self.tick_ps as f64
    }

    pub fn width_ps(&self) -> f64 {
        (self.width * self.tick_ps as i64) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub axis: BinAxis,
    pub counts: Vec<u64>,
    pub under: u64,
    pub over: u64,
}

impl Histogram1D {
    pub fn new(axis: BinAxis) -> Self {
        Self { axis, counts: vec![0; axis.bins], under: 0, over: 0 }
    }

    #[inline]
    pub fn add(&mut self, v: i64) {
        match self.axis.slot(v) {
            Slot::Under => self.under += 1,
            Slot::Over => self.over += 1,
            Slot::Bin(k) => self.counts[k] += 1,
        }
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of accumulated values, including under/overflow.
    pub fn total(&self) -> u64 {
        self.in_range() + self.under + self.over
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if self.axis != other.axis {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.axis, other.axis)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.under += other.under;
        self.over += other.over;
        Ok(())
    }

    /// Bin centres (ps) paired with counts.
    pub fn points_ps(&self) -> (Vec<f64>, Vec<f64>) {
        let x = (0..self.axis.bins).map(|k| self.axis.center_ps(k)).collect();
        let y = self.counts.iter().map(|&c| c as f64).collect();
        (x, y)
    }
}

pub fn merge_histograms(a: &Histogram1D, b: &Histogram1D) -> Result<Histogram1D> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

/// Joint histogram, row-major with signal rows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub signal: BinAxis,
    pub idler: BinAxis,
    pub counts: Vec<u64>,
    pub out_of_range: u64,
}

impl Histogram2D {
    pub fn new(signal: BinAxis, idler: BinAxis) -> Self {
        Self { signal, idler, counts: vec![0; signal.bins * idler.bins], out_of_range: 0 }
    }

    pub fn from_counts(signal: BinAxis, idler: BinAxis, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != signal.bins * idler.bins {
            return Err(Error::ShapeMismatch(format!(
                "{} counts for a {}x{} histogram",
                counts.len(),
                signal.bins,
                idler.bins
            )));
        }
        Ok(Self { signal, idler, counts, out_of_range: 0 })
    }

    #[inline]
    pub fn cell(&self, s: i64, i: i64) -> Option<usize> {
        Some(self.signal.index(s)? * self.idler.bins + self.idler.index(i)?)
    }

    #[inline]
    pub fn add(&mut self, s: i64, i: i64) {
        match self.cell(s, i) {
            Some(c) => self.counts[c] += 1,
            None => self.out_of_range += 1,
        }
    }

    #[inline]
    pub fn at(&self, s: usize, i: usize) -> u64 {
        self.counts[s * self.idler.bins + i]
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.signal == other.signal && self.idler == other.idler
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch("2-D histogram axes differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.out_of_range += other.out_of_range;
        Ok(())
    }

    pub fn signal_projection(&self) -> Vec<u64> {
        self.counts.chunks(self.idler.bins).map(|r| r.iter().sum()).collect()
    }

    pub fn idler_projection(&self) -> Vec<u64> {
        let mut p = vec![0u64; self.idler.bins];
        for row in self.counts.chunks(self.idler.bins) {
            for (a, b) in p.iter_mut().zip(row) {
                *a += b;
            }
        }
        p
    }
}

pub fn merge_histograms_2d(a: &Histogram2D, b: &Histogram2D) -> Result<Histogram2D> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}
