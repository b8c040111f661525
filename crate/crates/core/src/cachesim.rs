//! Exact per-VM LRU SSD cache simulator.
//!
//! Read hits are the only hits that count. Each block written into the SSD
//! (read-miss fill or cached write) is one SSD write; dirty blocks leaving the
//! cache are written back to the HDD.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::classifier::{ClassCounts, ClassifiedRequest};
use crate::trace::Op;
use crate::{Error, Result};

pub const DEFAULT_T_HDD_US: u64 = 5_000;
pub const DEFAULT_T_SSD_US: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WritePolicy {
    /// Write-back: writes go to the SSD and reach the HDD on eviction.
    Wb,
    /// Write-through: writes go to both devices.
    Wt,
    /// Read-only: writes bypass the SSD and invalidate any cached copy.
    Ro,
}

impl fmt::Display for WritePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WritePolicy::Wb => "WB",
            WritePolicy::Wt => "WT",
            WritePolicy::Ro => "RO",
        })
    }
}

impl FromStr for WritePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wb" => Ok(WritePolicy::Wb),
            "wt" => Ok(WritePolicy::Wt),
            "ro" => Ok(WritePolicy::Ro),
            _ => Err(Error::Config(format!("unknown write policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheConfig {
    pub size_blocks: u64,
    pub policy: WritePolicy,
    pub t_hdd_us: u64,
    pub t_ssd_us: u64,
}

impl CacheConfig {
    pub fn new(size_blocks: u64, policy: WritePolicy) -> Self {
        CacheConfig {
            size_blocks,
            policy,
            t_hdd_us: DEFAULT_T_HDD_US,
            t_ssd_us: DEFAULT_T_SSD_US,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_ssd_us >= self.t_hdd_us {
            return Err(Error::Config(format!(
                "SSD latency {} us must be below HDD latency {} us",
                self.t_ssd_us, self.t_hdd_us
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimReport {
    pub read_hits: u64,
    pub read_misses: u64,
    /// Writes that found their block resident.
    pub write_hits: u64,
    pub writes: u64,
    pub ssd_writes: u64,
    pub hdd_reads: u64,
    pub hdd_writes: u64,
    pub latency_total_us: u64,
    pub class_counts: ClassCounts,
}

impl SimReport {
    pub fn reads(&self) -> u64 {
        self.read_hits + self.read_misses
    }

    pub fn requests(&self) -> u64 {
        self.reads() + self.writes
    }

    /// Read hits over reads; 0 when there were no reads.
    pub fn read_hit_ratio(&self) -> f64 {
        match self.reads() {
            0 => 0.0,
            n => self.read_hits as f64 / n as f64,
        }
    }

    pub fn mean_latency_us(&self) -> Option<f64> {
        match self.requests() {
            0 => None,
            n => Some(self.latency_total_us as f64 / n as f64),
        }
    }

    pub fn merge(&mut self, o: &SimReport) {
        self.read_hits += o.read_hits;
        self.read_misses += o.read_misses;
        self.write_hits += o.write_hits;
        self.writes += o.writes;
        self.ssd_writes += o.ssd_writes;
        self.hdd_reads += o.hdd_reads;
        self.hdd_writes += o.hdd_writes;
        self.latency_total_us += o.latency_total_us;
        self.class_counts.merge(&o.class_counts);
    }
}

const NIL: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    block: u64,
    dirty: bool,
    prev: usize,
    next: usize,
}

/// Doubly linked recency list over a slab, indexed by block.
#[derive(Debug, Clone)]
struct Lru {
    index: HashMap<u64, usize>,
    nodes: Vec<Node>,
    free: Vec<usize>,
    /// Most recently used.
    head: usize,
    /// Least recently used.
    tail: usize,
}

impl Lru {
    fn new() -> Self {
        Lru {
            index: HashMap::new(),
            nodes: Vec::new(),
            free: Vec::new(),
            head: NIL,
            tail: NIL,
        }
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn unlink(&mut self, i: usize) {
        let (prev, next) = (self.nodes[i].prev, self.nodes[i].next);
        match prev {
            NIL => self.head = next,
            p => self.nodes[p].next = next,
        }
        match next {
            NIL => self.tail = prev,
            n => self.nodes[n].prev = prev,
        }
    }

    fn push_front(&mut self, i: usize) {
        self.nodes[i].prev = NIL;
        self.nodes[i].next = self.head;
        match self.head {
            NIL => self.tail = i,
            h => self.nodes[h].prev = i,
        }
        self.head = i;
    }

    /// Moves a resident block to MRU; returns its slot.
    fn touch(&mut self, block: u64) -> Option<usize> {
        let i = *self.index.get(&block)?;
        if self.head != i {
            self.unlink(i);
            self.push_front(i);
        }
        Some(i)
    }

    fn insert_front(&mut self, block: u64, dirty: bool) {
        let node = Node {
            block,
            dirty,
            prev: NIL,
            next: NIL,
        };
        let i = match self.free.pop() {
            Some(i) => {
                self.nodes[i] = node;
                i
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        };
        self.index.insert(block, i);
        self.push_front(i);
    }

    fn remove(&mut self, block: u64) -> Option<bool> {
        let i = self.index.remove(&block)?;
        self.unlink(i);
        self.free.push(i);
        Some(self.nodes[i].dirty)
    }

    fn pop_lru(&mut self) -> Option<(u64, bool)> {
        if self.tail == NIL {
            return None;
        }
        let block = self.nodes[self.tail].block;
        self.remove(block).map(|dirty| (block, dirty))
    }

    fn clean_all(&mut self) -> u64 {
        let mut n = 0;
        let mut i = self.head;
        while i != NIL {
            if self.nodes[i].dirty {
                self.nodes[i].dirty = false;
                n += 1;
            }
            i = self.nodes[i].next;
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    /// The block was in the cache when the request arrived.
    pub resident: bool,
}

/// A single VM's cache. State persists across calls, so the orchestrator can
/// resize it and change policy between intervals.
#[derive(Debug, Clone)]
pub struct CacheSim {
    cfg: CacheConfig,
    lru: Lru,
    report: SimReport,
}

impl CacheSim {
    pub fn new(cfg: CacheConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(CacheSim {
            cfg,
            lru: Lru::new(),
            report: SimReport::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn resident_blocks(&self) -> usize {
        self.lru.len()
    }

    pub fn contains(&self, block: u64) -> bool {
        self.lru.index.contains_key(&block)
    }

    fn insert(&mut self, block: u64, dirty: bool) {
        if self.lru.len() as u64 >= self.cfg.size_blocks {
            if let Some((_, true)) = self.lru.pop_lru() {
                self.report.hdd_writes += 1;
            }
        }
        self.lru.insert_front(block, dirty);
        self.report.ssd_writes += 1;
    }

    pub fn access(&mut self, r: &ClassifiedRequest) -> AccessOutcome {
        let block = r.req.block;
        let (t_hdd, t_ssd) = (self.cfg.t_hdd_us, self.cfg.t_ssd_us);
        self.report.class_counts.add(r.class);
        let resident = self.lru.touch(block);
        let outcome = AccessOutcome {
            resident: resident.is_some(),
        };

        match r.req.op {
            Op::Read => match resident {
                Some(_) => {
                    self.report.read_hits += 1;
                    self.report.latency_total_us += t_ssd;
                }
                None => {
                    self.report.read_misses += 1;
                    self.report.hdd_reads += 1;
                    self.report.latency_total_us += t_hdd;
                    if self.cfg.size_blocks > 0 {
                        self.insert(block, false);
                    }
                }
            },
            Op::Write => {
                self.report.writes += 1;
                if resident.is_some() {
                    self.report.write_hits += 1;
                }
                if self.cfg.size_blocks == 0 {
                    self.report.hdd_writes += 1;
                    self.report.latency_total_us += t_hdd;
                    return outcome;
                }
                match self.cfg.policy {
                    WritePolicy::Wb => {
                        self.report.latency_total_us += t_ssd;
                        match resident {
                            Some(i) => {
                                self.lru.nodes[i].dirty = true;
                                self.report.ssd_writes += 1;
                            }
                            None => self.insert(block, true),
                        }
                    }
                    WritePolicy::Wt => {
                        self.report.latency_total_us += t_hdd;
                        self.report.hdd_writes += 1;
                        match resident {
                            Some(i) => {
                                self.lru.nodes[i].dirty = false;
                                self.report.ssd_writes += 1;
                            }
                            None => self.insert(block, false),
                        }
                    }
                    WritePolicy::Ro => {
                        self.report.latency_total_us += t_hdd;
                        self.report.hdd_writes += 1;
                        // The new data supersedes any dirty copy.
                        self.lru.remove(block);
                    }
                }
            }
        }
        outcome
    }

    pub fn run(&mut self, stream: &[ClassifiedRequest]) -> Result<()> {
        for r in stream {
            if r.req.len_blocks != 1 {
                return Err(Error::InvalidInput(format!(
                    "simulator needs single-block requests, got length {} at block {}",
                    r.req.len_blocks, r.req.block
                )));
            }
            self.access(r);
        }
        Ok(())
    }

    /// Writes every dirty block back to the HDD.
    pub fn flush(&mut self) {
        self.report.hdd_writes += self.lru.clean_all();
    }

    /// Changes the write policy, flushing dirty blocks when leaving WB.
    pub fn set_policy(&mut self, policy: WritePolicy) {
        if self.cfg.policy == WritePolicy::Wb && policy != WritePolicy::Wb {
            self.flush();
        }
        self.cfg.policy = policy;
    }

    /// Shrinking drops blocks from the LRU end; growing adds empty slots.
    pub fn resize(&mut self, size_blocks: u64) {
        while self.lru.len() as u64 > size_blocks {
            if let Some((_, true)) = self.lru.pop_lru() {
                self.report.hdd_writes += 1;
            }
        }
        self.cfg.size_blocks = size_blocks;
    }

    pub fn report(&self) -> &SimReport {
        &self.report
    }

    /// Returns the counters gathered so far and resets them; cache contents stay.
    pub fn take_report(&mut self) -> SimReport {
        std::mem::take(&mut self.report)
    }
}

/// Runs a whole stream through a cold cache.
pub fn simulate(stream: &[ClassifiedRequest], cfg: CacheConfig) -> Result<SimReport> {
    let mut sim = CacheSim::new(cfg)?;
    sim.run(stream)?;
    Ok(sim.take_report())
}

/// SSD writes of a write-back cache that never evicts: CR + CW + WAR + WAW.
pub fn total_writes_model(counts: &ClassCounts) -> u64 {
    use crate::classifier::AccessClass::*;
    counts[Cr] + counts[Cw] + counts[War] + counts[Waw]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{classify, AccessClass};
    use crate::rdist::reuse_distances;
    use crate::trace::synth::example_trace;
    use crate::trace::IoRequest;
    use proptest::prelude::*;

    fn example() -> Vec<ClassifiedRequest> {
        classify(&example_trace(0, 1, 100).unwrap()).unwrap()
    }

    fn stream(ops: &[(u64, bool)]) -> Vec<ClassifiedRequest> {
        let reqs: Vec<IoRequest> = ops
            .iter()
            .enumerate()
            .map(|(i, &(b, w))| {
                IoRequest::new(0, i as u64, b, if w { Op::Write } else { Op::Read })
            })
            .collect();
        classify(&reqs).unwrap()
    }

    #[test]
    fn example_hits_match_at_trd_and_urd_sizes() {
        let s = example();
        let at5 = simulate(&s, CacheConfig::new(5, WritePolicy::Wb)).unwrap();
        let at2 = simulate(&s, CacheConfig::new(2, WritePolicy::Wb)).unwrap();
        assert_eq!(at5.read_hits, 1);
        assert_eq!(at2.read_hits, 1);
        // At 5 blocks the final write also finds block 2 resident.
        assert_eq!(at5.write_hits, 1);
        assert_eq!(at2.write_hits, 0);
    }

    #[test]
    fn zero_size_is_pure_hdd() {
        let s = stream(&[(1, false), (1, false), (2, true), (2, false), (1, true)]);
        for policy in [WritePolicy::Wb, WritePolicy::Wt, WritePolicy::Ro] {
            let r = simulate(&s, CacheConfig::new(0, policy)).unwrap();
            assert_eq!(r.read_hits, 0);
            assert_eq!(r.hdd_reads, 3);
            assert_eq!(r.hdd_writes, 2);
            assert_eq!(r.ssd_writes, 0);
            assert_eq!(r.latency_total_us, 5 * DEFAULT_T_HDD_US);
        }
    }

    #[test]
    fn write_back_defers_hdd_writes_until_eviction() {
        // W1 W2 R3 with one slot: W2 evicts dirty 1, R3 evicts dirty 2.
        let s = stream(&[(1, true), (2, true), (3, false)]);
        let r = simulate(&s, CacheConfig::new(1, WritePolicy::Wb)).unwrap();
        assert_eq!(r.ssd_writes, 3);
        assert_eq!(r.hdd_writes, 2);
        assert_eq!(r.hdd_reads, 1);
        assert_eq!(r.latency_total_us, 2 * DEFAULT_T_SSD_US + DEFAULT_T_HDD_US);
    }

    #[test]
    fn write_through_writes_both_devices() {
        let s = stream(&[(1, true), (1, false), (1, true)]);
        let r = simulate(&s, CacheConfig::new(4, WritePolicy::Wt)).unwrap();
        assert_eq!((r.ssd_writes, r.hdd_writes, r.read_hits), (2, 2, 1));
        assert_eq!(r.latency_total_us, 2 * DEFAULT_T_HDD_US + DEFAULT_T_SSD_US);
    }

    #[test]
    fn read_only_invalidates_and_misses_raw() {
        let s = stream(&[(1, false), (1, true), (1, false)]);
        let r = simulate(&s, CacheConfig::new(4, WritePolicy::Ro)).unwrap();
        assert_eq!(r.class_counts[AccessClass::Raw], 1);
        assert_eq!(r.read_hits, 0);
        assert_eq!(r.read_misses, 2);
        assert_eq!(r.ssd_writes, 2);
        assert_eq!(r.hdd_writes, 1);
    }

    #[test]
    fn leaving_write_back_flushes_dirty_blocks() {
        let mut sim = CacheSim::new(CacheConfig::new(8, WritePolicy::Wb)).unwrap();
        sim.run(&stream(&[(1, true), (2, true), (3, false)]))
            .unwrap();
        assert_eq!(sim.report().hdd_writes, 0);
        sim.set_policy(WritePolicy::Ro);
        assert_eq!(sim.report().hdd_writes, 2);
        sim.set_policy(WritePolicy::Wb);
        assert_eq!(sim.report().hdd_writes, 2);
    }

    #[test]
    fn shrink_drops_lru_end() {
        let mut sim = CacheSim::new(CacheConfig::new(4, WritePolicy::Wb)).unwrap();
        sim.run(&stream(&[(1, true), (2, false), (3, false), (4, false)]))
            .unwrap();
        sim.resize(2);
        assert_eq!(sim.resident_blocks(), 2);
        assert!(sim.contains(3) && sim.contains(4) && !sim.contains(1));
        assert_eq!(sim.report().hdd_writes, 1);
    }

    #[test]
    fn write_model_is_a_direct_sum() {
        use AccessClass::*;
        let c =
            ClassCounts::from_pairs(&[(Cr, 2), (Cw, 3), (War, 1), (Waw, 0), (Rar, 5), (Raw, 4)]);
        assert_eq!(total_writes_model(&c), 6);
    }

    #[test]
    fn all_rar_after_cold_reads_costs_one_write_per_block() {
        let ops: Vec<(u64, bool)> = (0..3).flat_map(|_| (0..5).map(|b| (b, false))).collect();
        let s = stream(&ops);
        let counts = ClassCounts::of_stream(&s);
        assert_eq!(total_writes_model(&counts), 5);
        let r = simulate(&s, CacheConfig::new(5, WritePolicy::Wb)).unwrap();
        assert_eq!(r.ssd_writes, 5);
    }

    #[test]
    fn latency_order_is_validated() {
        let cfg = CacheConfig {
            t_ssd_us: 10,
            t_hdd_us: 10,
            ..CacheConfig::new(1, WritePolicy::Wb)
        };
        assert!(CacheSim::new(cfg).is_err());
    }

    fn arb_ops() -> impl Strategy<Value = Vec<(u64, bool)>> {
        (1u64..24).prop_flat_map(|n| prop::collection::vec((0..n, any::<bool>()), 0..250))
    }

    proptest! {
        #[test]
        fn read_hits_monotone_in_size(ops in arb_ops(), policy in prop_oneof![Just(WritePolicy::Wb), Just(WritePolicy::Wt), Just(WritePolicy::Ro)]) {
            let s = stream(&ops);
            let mut prev = 0;
            for size in 0..26 {
                let r = simulate(&s, CacheConfig::new(size, policy)).unwrap();
                prop_assert!(r.read_hits >= prev);
                prop_assert_eq!(r.reads(), ops.iter().filter(|o| !o.1).count() as u64);
                prev = r.read_hits;
            }
        }

        #[test]
        fn write_back_residency_is_distance_below_size(ops in arb_ops(), size in 1u64..20) {
            let s = stream(&ops);
            let dists = reuse_distances(&s).unwrap();
            let mut sim = CacheSim::new(CacheConfig::new(size, WritePolicy::Wb)).unwrap();
            for (r, d) in s.iter().zip(dists) {
                let out = sim.access(r);
                prop_assert_eq!(out.resident, d.is_some_and(|d| d < size));
            }
        }

        #[test]
        fn endurance_ordering(ops in arb_ops(), size in 0u64..20) {
            let s = stream(&ops);
            let wb = simulate(&s, CacheConfig::new(size, WritePolicy::Wb)).unwrap();
            let wt = simulate(&s, CacheConfig::new(size, WritePolicy::Wt)).unwrap();
            let ro = simulate(&s, CacheConfig::new(size, WritePolicy::Ro)).unwrap();
            prop_assert_eq!(wb.ssd_writes, wt.ssd_writes);
            prop_assert!(ro.ssd_writes <= wb.ssd_writes);
        }

        #[test]
        fn no_evict_write_back_matches_write_model(ops in arb_ops()) {
            let s = stream(&ops);
            let distinct = ops.iter().map(|o| o.0).collect::<std::collections::HashSet<_>>().len() as u64;
            let r = simulate(&s, CacheConfig::new(distinct.max(1), WritePolicy::Wb)).unwrap();
            prop_assert_eq!(r.ssd_writes, total_writes_model(&ClassCounts::of_stream(&s)));
        }
    }
}
