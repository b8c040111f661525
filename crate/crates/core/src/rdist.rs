//! Stack (reuse) distances and the hit-ratio functions built from them.
//!
//! The distance of a reuse is the number of distinct other blocks touched
//! strictly between two consecutive accesses to the same block. Under LRU a
//! reuse at distance `d` hits iff the cache holds more than `d` blocks.
//!
//! TRD counts every reuse. URD keeps only reuses that end in a read
//! (RAR, RAW); write reuses still refresh recency but record no sample.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::classifier::ClassifiedRequest;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceMode {
    Trd,
    Urd,
}

impl fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMode::Trd => "TRD",
            DistanceMode::Urd => "URD",
        })
    }
}

/// Fenwick tree of 0/1 marks, one slot per stream position.
struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0; n + 1],
        }
    }

    fn add(&mut self, pos: usize, delta: i32) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] = self.tree[i].wrapping_add_signed(delta);
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `0..end`.
    fn prefix(&self, end: usize) -> u64 {
        let mut i = end;
        let mut s = 0u64;
        while i > 0 {
            s += u64::from(self.tree[i]);
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Distance of every access to the previous access of the same block within
/// `stream`, or `None` when the block has not appeared earlier in it.
///
/// Runs in O(n log n): the tree marks each block's most recent position, so
/// the marks strictly between two accesses count the distinct blocks seen in
/// between.
pub fn reuse_distances(stream: &[ClassifiedRequest]) -> Result<Vec<Option<u64>>> {
    let mut marks = Fenwick::new(stream.len());
    let mut last: HashMap<u64, usize> = HashMap::with_capacity(stream.len() / 2);
    let mut out = Vec::with_capacity(stream.len());
    for (t, r) in stream.iter().enumerate() {
        if r.req.len_blocks != 1 {
            return Err(Error::InvalidInput(format!(
                "stack distance needs single-block requests, got length {} at block {}",
                r.req.len_blocks, r.req.block
            )));
        }
        let dist = match last.insert(r.req.block, t) {
            Some(p) => {
                let d = marks.prefix(t) - marks.prefix(p + 1);
                marks.add(p, -1);
                Some(d)
            }
            None => None,
        };
        marks.add(t, 1);
        out.push(dist);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DistanceHistogram {
    pub counts: BTreeMap<u64, u64>,
}

impl DistanceHistogram {
    fn record(&mut self, d: u64) {
        *self.counts.entry(d).or_insert(0) += 1;
    }

    /// Largest recorded distance, -1 when there was no reuse.
    pub fn max(&self) -> i64 {
        self.counts.keys().next_back().map_or(-1, |&d| d as i64)
    }

    pub fn samples(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// TRD and URD histograms of one stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReuseProfile {
    pub trd_hist: DistanceHistogram,
    pub urd_hist: DistanceHistogram,
    pub total_accesses: u64,
}

impl ReuseProfile {
    pub fn build(stream: &[ClassifiedRequest]) -> Result<Self> {
        let dists = reuse_distances(stream)?;
        let mut p = ReuseProfile {
            total_accesses: stream.len() as u64,
            ..Default::default()
        };
        for (r, d) in stream.iter().zip(dists) {
            if let Some(d) = d {
                p.trd_hist.record(d);
                if r.class.is_useful_reuse() {
                    p.urd_hist.record(d);
                }
            }
        }
        Ok(p)
    }

    pub fn histogram(&self, mode: DistanceMode) -> &DistanceHistogram {
        match mode {
            DistanceMode::Trd => &self.trd_hist,
            DistanceMode::Urd => &self.urd_hist,
        }
    }

    pub fn max_trd(&self) -> i64 {
        self.trd_hist.max()
    }

    pub fn max_urd(&self) -> i64 {
        self.urd_hist.max()
    }

    pub fn max(&self, mode: DistanceMode) -> i64 {
        self.histogram(mode).max()
    }
}

/// Histogram of distances for one mode.
pub fn stack_distance(
    stream: &[ClassifiedRequest],
    mode: DistanceMode,
) -> Result<DistanceHistogram> {
    let profile = ReuseProfile::build(stream)?;
    Ok(match mode {
        DistanceMode::Trd => profile.trd_hist,
        DistanceMode::Urd => profile.urd_hist,
    })
}

/// Non-decreasing step function from cache size (blocks) to hit ratio.
///
/// `eval(c)` is 0 below the first breakpoint and `values[i]` for
/// `breakpoints[i] <= c < breakpoints[i + 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HitRatioFn {
    breakpoints: Vec<u64>,
    values: Vec<f64>,
}

impl HitRatioFn {
    pub fn zero() -> Self {
        HitRatioFn::default()
    }

    pub fn from_steps(breakpoints: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() {
            return Err(Error::InvalidInput(
                "hit-ratio function needs one value per breakpoint".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "breakpoints must be strictly ascending".into(),
            ));
        }
        let mut prev = 0.0;
        for &v in &values {
            if !(prev..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "hit ratios must be non-decreasing within [0, 1], got {v} after {prev}"
                )));
            }
            prev = v;
        }
        Ok(HitRatioFn {
            breakpoints,
            values,
        })
    }

    pub fn eval(&self, c: u64) -> f64 {
        match self.breakpoints.partition_point(|&m| m <= c) {
            0 => 0.0,
            i => self.values[i - 1],
        }
    }

    pub fn breakpoints(&self) -> &[u64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn steps(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.breakpoints
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// H(c) = (reuses with distance <= c - 1) / total accesses, for the chosen mode.
pub fn hit_ratio_fn(profile: &ReuseProfile, mode: DistanceMode) -> HitRatioFn {
    if profile.total_accesses == 0 {
        return HitRatioFn::zero();
    }
    let total = profile.total_accesses as f64;
    let mut cum = 0u64;
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    for (&d, &n) in &profile.histogram(mode).counts {
        cum += n;
        breakpoints.push(d + 1);
        values.push(cum as f64 / total);
    }
    HitRatioFn {
        breakpoints,
        values,
    }
}

/// Blocks needed to capture every reuse of the given mode: max distance + 1,
/// or 0 without reuse.
pub fn distance_based_size(profile: &ReuseProfile, mode: DistanceMode) -> u64 {
    (profile.max(mode) + 1) as u64
}

pub fn urd_based_size(profile: &ReuseProfile) -> u64 {
    distance_based_size(profile, DistanceMode::Urd)
}

pub fn trd_based_size(profile: &ReuseProfile) -> u64 {
    distance_based_size(profile, DistanceMode::Trd)
}
