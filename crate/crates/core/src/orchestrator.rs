//! The interval loop.
//!
//! Each interval every VM replays its requests under the allocation and
//! policy decided at the end of the previous interval (initially `c_min`
//! blocks and WB). The interval's classified requests are then profiled;
//! the profiles drive the partitioner and policy assignment for the next
//! interval. Classification history and cache contents persist across
//! intervals; reuse distances are measured within each interval.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::cachesim::{
    CacheConfig, CacheSim, SimReport, WritePolicy, DEFAULT_T_HDD_US, DEFAULT_T_SSD_US,
};
use crate::classifier::{write_ratio, ClassCounts, Classifier};
use crate::partitioner::{allocate, PartitionProblem, Solver, VmDemand, DEFAULT_C_MIN};
use crate::policy::{PolicyState, DEFAULT_WTHRESHOLD};
use crate::rdist::{distance_based_size, hit_ratio_fn, DistanceMode, ReuseProfile};
use crate::trace::{check_block_size, expand_multiblock, IoRequest, VmId, DEFAULT_BLOCK_SIZE};
use crate::{Error, Result};

/// MSR timestamps are Windows FILETIME values (100 ns ticks).
pub const MSR_TICKS_PER_MS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunMode {
    /// URD sizing with per-VM write policy.
    Eci,
    /// TRD sizing, always write-back.
    TrdBaseline,
}

impl RunMode {
    pub fn distance_mode(self) -> DistanceMode {
        match self {
            RunMode::Eci => DistanceMode::Urd,
            RunMode::TrdBaseline => DistanceMode::Trd,
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Eci => "eci",
            RunMode::TrdBaseline => "trd",
        })
    }
}

impl FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eci" | "urd" => Ok(RunMode::Eci),
            "trd" | "trd_baseline" => Ok(RunMode::TrdBaseline),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Interval length in trace timestamp units.
    pub interval_ticks: u64,
    pub mode: RunMode,
    pub capacity_blocks: u64,
    pub block_size_bytes: u32,
    pub wthreshold: f64,
    pub c_min: u64,
    pub t_hdd_us: u64,
    pub t_ssd_us: u64,
    pub seed: u64,
    /// VMs pinned to RO in ECI mode.
    pub force_ro: Vec<VmId>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            interval_ticks: 10 * 60 * 1000 * MSR_TICKS_PER_MS,
            mode: RunMode::Eci,
            capacity_blocks: 3_000_000,
            block_size_bytes: DEFAULT_BLOCK_SIZE,
            wthreshold: DEFAULT_WTHRESHOLD,
            c_min: DEFAULT_C_MIN,
            t_hdd_us: DEFAULT_T_HDD_US,
            t_ssd_us: DEFAULT_T_SSD_US,
            seed: 0,
            force_ro: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self, vm_count: usize) -> Result<()> {
        if self.interval_ticks == 0 {
            return Err(Error::Config("interval must be positive".into()));
        }
        check_block_size(self.block_size_bytes)?;
        if !(0.0..=1.0).contains(&self.wthreshold) {
            return Err(Error::Config(format!(
                "wthreshold {} outside [0, 1]",
                self.wthreshold
            )));
        }
        if self.t_ssd_us >= self.t_hdd_us {
            return Err(Error::Config(format!(
                "SSD latency {} us must be below HDD latency {} us",
                self.t_ssd_us, self.t_hdd_us
            )));
        }
        let required = (vm_count as u64).saturating_mul(self.c_min);
        if self.capacity_blocks < required {
            return Err(Error::Capacity {
                capacity: self.capacity_blocks,
                required,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmInterval {
    pub vm_id: VmId,
    /// Requests of this VM in the interval.
    pub requests: u64,
    /// Cache size in effect during the interval.
    pub alloc_blocks: u64,
    /// Write policy in effect during the interval.
    pub policy: WritePolicy,
    pub sim: SimReport,
    pub class_counts: ClassCounts,
    pub max_trd: i64,
    pub max_urd: i64,
    /// Size suggested by this interval's profile (before clamping).
    pub demand_blocks: u64,
    pub write_ratio: Option<f64>,
    /// Decisions for the next interval.
    pub next_alloc_blocks: u64,
    pub next_policy: WritePolicy,
}

impl VmInterval {
    pub fn is_active(&self) -> bool {
        self.requests > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub interval: usize,
    pub vms: Vec<VmInterval>,
    /// Whether the demands computed from this interval fit the capacity.
    pub feasible: bool,
    pub solver: Option<Solver>,
    pub aggregate: SimReport,
    pub aggregate_alloc_blocks: u64,
}

impl IntervalReport {
    pub fn aggregate_latency_us(&self) -> u64 {
        self.aggregate.latency_total_us
    }

    pub fn aggregate_ssd_writes(&self) -> u64 {
        self.aggregate.ssd_writes
    }
}

/// Performance per allocated block: `(1 / mean latency) / allocated blocks`.
fn ppc(sim: &SimReport, alloc_blocks: f64) -> Option<f64> {
    let lat = sim.mean_latency_us()?;
    if alloc_blocks <= 0.0 || lat <= 0.0 {
        return None;
    }
    Some(1.0 / lat / alloc_blocks)
}

/// Per-VM performance-per-cost for one interval, and the mean over VMs that
/// had a non-zero allocation and at least one request.
pub fn perf_per_cost(report: &IntervalReport) -> (Vec<(VmId, Option<f64>)>, Option<f64>) {
    let per_vm: Vec<(VmId, Option<f64>)> = report
        .vms
        .iter()
        .map(|v| (v.vm_id, ppc(&v.sim, v.alloc_blocks as f64)))
        .collect();
    let vals: Vec<f64> = per_vm.iter().filter_map(|(_, p)| *p).collect();
    let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    (per_vm, mean)
}

struct VmState {
    vm_id: VmId,
    requests: Vec<IoRequest>,
    cursor: usize,
    classifier: Classifier,
    sim: CacheSim,
    alloc: u64,
}

struct Measured {
    sim: SimReport,
    counts: ClassCounts,
    profile: ReuseProfile,
    requests: u64,
}

impl VmState {
    fn step(&mut self, end_ts: u64) -> Result<Measured> {
        let start = self.cursor;
        while self.cursor < self.requests.len() && self.requests[self.cursor].ts < end_ts {
            self.cursor += 1;
        }
        let slice = &self.requests[start..self.cursor];
        let tagged = self.classifier.classify(slice)?;
        self.sim.run(&tagged)?;
        Ok(Measured {
            sim: self.sim.take_report(),
            counts: self.classifier.take_counts(),
            profile: ReuseProfile::build(&tagged)?,
            requests: slice.len() as u64,
        })
    }
}

pub fn run(
    traces: &BTreeMap<VmId, Vec<IoRequest>>,
    cfg: &RunConfig,
) -> Result<Vec<IntervalReport>> {
    run_timed(traces, cfg).map(|(reports, _)| reports)
}

/// Like [`run`], also returning the wall time spent on each interval.
pub fn run_timed(
    traces: &BTreeMap<VmId, Vec<IoRequest>>,
    cfg: &RunConfig,
) -> Result<(Vec<IntervalReport>, Vec<Duration>)> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("no VM traces to run".into()));
    }
    cfg.validate(traces.len())?;

    let mut vms = Vec::with_capacity(traces.len());
    for (&vm_id, reqs) in traces {
        if let Some(i) = reqs.iter().position(|r| r.vm_id != vm_id) {
            return Err(Error::InvalidInput(format!(
                "request {i} of VM {vm_id}'s trace belongs to VM {}",
                reqs[i].vm_id
            )));
        }
        if reqs.windows(2).any(|w| w[0].ts > w[1].ts) {
            return Err(Error::InvalidInput(format!(
                "trace of VM {vm_id} is not time-sorted"
            )));
        }
        for r in reqs {
            r.validate()?;
        }
        vms.push(VmState {
            vm_id,
            requests: expand_multiblock(reqs),
            cursor: 0,
            classifier: Classifier::new(),
            sim: CacheSim::new(CacheConfig {
                size_blocks: cfg.c_min,
                policy: WritePolicy::Wb,
                t_hdd_us: cfg.t_hdd_us,
                t_ssd_us: cfg.t_ssd_us,
            })?,
            alloc: cfg.c_min,
        });
    }

    let (first, last) = vms
        .iter()
        .flat_map(|v| [v.requests.first(), v.requests.last()])
        .flatten()
        .fold((u64::MAX, 0), |(lo, hi), r| (lo.min(r.ts), hi.max(r.ts)));
    let intervals = if first > last {
        0
    } else {
        ((last - first) / cfg.interval_ticks + 1) as usize
    };

    let mode = cfg.mode.distance_mode();
    let mut policies =
        PolicyState::new(cfg.wthreshold).with_forced_ro(cfg.force_ro.iter().copied());
    let mut reports = Vec::with_capacity(intervals);
    let mut timings = Vec::with_capacity(intervals);

    for k in 0..intervals {
        let started = Instant::now();
        let end_ts = first.saturating_add((k as u64 + 1).saturating_mul(cfg.interval_ticks));
        let measured: Vec<Measured> = vms
            .par_iter_mut()
            .map(|v| v.step(end_ts))
            .collect::<Result<_>>()?;

        // Partition among VMs active in this interval; idle VMs keep c_min.
        let active: Vec<usize> = (0..vms.len())
            .filter(|&i| measured[i].requests > 0)
            .collect();
        let idle = (vms.len() - active.len()) as u64;
        let demands: Vec<u64> = measured
            .iter()
            .map(|m| distance_based_size(&m.profile, mode))
            .collect();
        let mut next_alloc = vec![cfg.c_min; vms.len()];
        let mut feasible = true;
        let mut solver = None;
        if !active.is_empty() {
            let problem = PartitionProblem {
                capacity_blocks: cfg.capacity_blocks - idle * cfg.c_min,
                vms: active
                    .iter()
                    .map(|&i| {
                        VmDemand::new(
                            vms[i].vm_id,
                            hit_ratio_fn(&measured[i].profile, mode),
                            demands[i],
                            cfg.c_min,
                        )
                    })
                    .collect(),
                t_hdd_us: cfg.t_hdd_us,
                t_ssd_us: cfg.t_ssd_us,
            };
            let plan = allocate(&problem)?;
            for (&i, &c) in active.iter().zip(&plan.alloc) {
                next_alloc[i] = c;
            }
            feasible = plan.feasible;
            solver = Some(plan.solver);
        }

        let mut rows = Vec::with_capacity(vms.len());
        let mut aggregate = SimReport::default();
        let mut aggregate_alloc = 0;
        for ((v, m), &next) in vms.iter_mut().zip(measured).zip(&next_alloc) {
            let applied_policy = v.sim.config().policy;
            let next_policy = match cfg.mode {
                RunMode::Eci => policies.decide(v.vm_id, &m.counts).policy,
                RunMode::TrdBaseline => WritePolicy::Wb,
            };
            aggregate.merge(&m.sim);
            aggregate_alloc += v.alloc;
            rows.push(VmInterval {
                vm_id: v.vm_id,
                requests: m.requests,
                alloc_blocks: v.alloc,
                policy: applied_policy,
                max_trd: m.profile.max_trd(),
                max_urd: m.profile.max_urd(),
                demand_blocks: distance_based_size(&m.profile, mode),
                write_ratio: write_ratio(&m.counts).ok(),
                class_counts: m.counts,
                sim: m.sim,
                next_alloc_blocks: next,
                next_policy,
            });
            v.sim.set_policy(next_policy);
            v.sim.resize(next);
            v.alloc = next;
        }
        reports.push(IntervalReport {
            interval: k,
            vms: rows,
            feasible,
            solver,
            aggregate,
            aggregate_alloc_blocks: aggregate_alloc,
        });
        timings.push(started.elapsed());
    }
    Ok((reports, timings))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VmSummary {
    pub sim: SimReport,
    /// Sum of allocations over the intervals in which the VM was active.
    pub alloc_block_intervals: u64,
    pub active_intervals: u64,
}

impl VmSummary {
    pub fn mean_alloc_blocks(&self) -> f64 {
        match self.active_intervals {
            0 => 0.0,
            n => self.alloc_block_intervals as f64 / n as f64,
        }
    }

    pub fn perf_per_cost(&self) -> Option<f64> {
        ppc(&self.sim, self.mean_alloc_blocks())
    }
}

/// Whole-run totals per VM and overall.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub per_vm: BTreeMap<VmId, VmSummary>,
    pub total: VmSummary,
}

impl RunSummary {
    pub fn from_reports(reports: &[IntervalReport]) -> Self {
        let mut s = RunSummary::default();
        for r in reports {
            for v in r.vms.iter().filter(|v| v.is_active()) {
                let e = s.per_vm.entry(v.vm_id).or_default();
                e.sim.merge(&v.sim);
                e.alloc_block_intervals += v.alloc_blocks;
                e.active_intervals += 1;
                s.total.sim.merge(&v.sim);
                s.total.alloc_block_intervals += v.alloc_blocks;
            }
            if r.vms.iter().any(VmInterval::is_active) {
                s.total.active_intervals += 1;
            }
        }
        s
    }

    /// Mean of per-VM performance-per-cost.
    pub fn mean_perf_per_cost(&self) -> Option<f64> {
        let vals: Vec<f64> = self
            .per_vm
            .values()
            .filter_map(VmSummary::perf_per_cost)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::split_by_vm;
    use crate::trace::synth::{example_trace, gen_corner_case, CornerCase, GenParams};

    fn cfg(mode: RunMode, c_min: u64, interval: u64) -> RunConfig {
        RunConfig {
            interval_ticks: interval,
            mode,
            capacity_blocks: 1_000,
            c_min,
            ..RunConfig::default()
        }
    }

    fn single(reqs: Vec<IoRequest>) -> BTreeMap<VmId, Vec<IoRequest>> {
        BTreeMap::from([(0, reqs)])
    }

    #[test]
    fn repeated_example_allocations_settle_on_distance_sizes() {
        let traces = single(example_trace(0, 4, 100).unwrap());
        for (mode, c_min, expected) in [
            (RunMode::Eci, 1, 2),
            (RunMode::TrdBaseline, 1, 5),
            (RunMode::Eci, 3, 3),
            (RunMode::TrdBaseline, 8, 8),
        ] {
            let reports = run(&traces, &cfg(mode, c_min, 100)).unwrap();
            assert_eq!(reports.len(), 4);
            assert_eq!(reports[0].vms[0].alloc_blocks, c_min);
            for r in &reports[1..] {
                assert_eq!(r.vms[0].alloc_blocks, expected, "{mode} c_min={c_min}");
            }
        }
    }

    #[test]
    fn baseline_is_always_write_back() {
        let traces = single(example_trace(0, 4, 100).unwrap());
        let reports = run(&traces, &cfg(RunMode::TrdBaseline, 1, 100)).unwrap();
        assert!(reports.iter().all(|r| r.vms[0].policy == WritePolicy::Wb));
        // ECI flips to RO once the repeated pattern turns its writes into reuses.
        let eci = run(&traces, &cfg(RunMode::Eci, 1, 100)).unwrap();
        assert_eq!(eci[1].vms[0].policy, WritePolicy::Wb);
        assert_eq!(eci[2].vms[0].policy, WritePolicy::Ro);
    }

    #[test]
    fn seq_random_underestimates() {
        let kind = CornerCase::SeqRandom {
            seq_len: 10,
            random_len: 20,
            tail_len: 2,
        };
        let traces = single(gen_corner_case(kind, GenParams::new(0, 100, 5)).unwrap());
        let reports = run(&traces, &cfg(RunMode::Eci, 0, 100)).unwrap();
        assert_eq!(reports[0].vms[0].max_urd, -1);
        assert_eq!(reports[0].vms[0].next_alloc_blocks, 0);
        assert_eq!(reports[1].vms[0].sim.read_hits, 0);
        assert!(reports[1].vms[0].next_alloc_blocks > 0);
        assert_eq!(reports[2].vms[0].sim.read_hits, 0);
    }

    #[test]
    fn request_counts_are_conserved() {
        let mut reqs = example_trace(0, 3, 50).unwrap();
        reqs.extend(example_trace(1, 5, 30).unwrap());
        let traces = split_by_vm(&reqs);
        let reports = run(&traces, &cfg(RunMode::Eci, 1, 40)).unwrap();
        let total: u64 = reports
            .iter()
            .flat_map(|r| &r.vms)
            .map(|v| v.requests)
            .sum();
        assert_eq!(total, reqs.len() as u64);
        for r in &reports {
            let mut agg = SimReport::default();
            for v in &r.vms {
                agg.merge(&v.sim);
            }
            assert_eq!(agg, r.aggregate);
        }
    }

    #[test]
    fn idle_vms_keep_minimum_and_are_excluded() {
        let mut reqs = example_trace(0, 1, 100).unwrap();
        reqs.extend(example_trace(1, 3, 100).unwrap());
        let traces = split_by_vm(&reqs);
        let reports = run(&traces, &cfg(RunMode::TrdBaseline, 2, 100)).unwrap();
        assert!(!reports[1].vms[0].is_active());
        assert_eq!(reports[1].vms[0].next_alloc_blocks, 2);
        assert_eq!(reports[1].vms[1].next_alloc_blocks, 5);
    }

    #[test]
    fn invalid_configs_fail_before_work() {
        let traces = single(example_trace(0, 1, 100).unwrap());
        let bad = [
            RunConfig {
                interval_ticks: 0,
                ..cfg(RunMode::Eci, 1, 1)
            },
            RunConfig {
                capacity_blocks: 0,
                ..cfg(RunMode::Eci, 1, 1)
            },
            RunConfig {
                wthreshold: 1.5,
                ..cfg(RunMode::Eci, 1, 1)
            },
            RunConfig {
                t_ssd_us: 9_000,
                ..cfg(RunMode::Eci, 1, 1)
            },
            RunConfig {
                block_size_bytes: 1000,
                ..cfg(RunMode::Eci, 1, 1)
            },
        ];
        for c in bad {
            assert!(run(&traces, &c).is_err(), "{c:?}");
        }
        let mut unsorted = example_trace(0, 2, 10).unwrap();
        unsorted.swap(0, 9);
        assert!(run(&single(unsorted), &cfg(RunMode::Eci, 1, 10)).is_err());
    }

    #[test]
    fn perf_per_cost_scales_inversely_with_allocation() {
        let traces = single(example_trace(0, 1, 100).unwrap());
        let small = run(&traces, &cfg(RunMode::Eci, 2, 100)).unwrap();
        let large = run(&traces, &cfg(RunMode::Eci, 5, 100)).unwrap();
        let (_, a) = perf_per_cost(&small[0]);
        let (_, b) = perf_per_cost(&large[0]);
        // One read hit in both cases, so latencies match and only the size differs.
        assert_eq!(
            small[0].aggregate.latency_total_us,
            large[0].aggregate.latency_total_us
        );
        assert!((a.unwrap() / b.unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_allocation_is_excluded_from_ppc() {
        let traces = single(example_trace(0, 1, 100).unwrap());
        let r = run(&traces, &cfg(RunMode::Eci, 0, 100)).unwrap();
        let (per_vm, mean) = perf_per_cost(&r[0]);
        assert_eq!(per_vm, vec![(0, None)]);
        assert_eq!(mean, None);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut reqs = example_trace(0, 6, 20).unwrap();
        reqs.extend(
            gen_corner_case(
                CornerCase::RandomSeq {
                    local_blocks: 6,
                    random_len: 15,
                    seq_len: 8,
                },
                GenParams::new(1, 20, 9),
            )
            .unwrap(),
        );
        let traces = split_by_vm(&reqs);
        let c = cfg(RunMode::Eci, 1, 20);
        assert_eq!(run(&traces, &c).unwrap(), run(&traces, &c).unwrap());
    }
}
