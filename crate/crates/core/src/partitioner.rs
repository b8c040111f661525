//! Splitting the shared SSD capacity across VMs.
//!
//! When every VM's demand fits, each VM gets its demand. Otherwise the
//! allocation minimizes the summed per-VM latency
//! `h(c) * t_ssd + (1 - h(c)) * t_hdd` subject to `sum(c) <= C` and
//! `c_min <= c <= demand`. Because every `h` is a step function only its
//! breakpoints are worth buying, which makes the problem a multiple-choice
//! knapsack. It is solved exactly by merging per-VM Pareto frontiers of
//! (blocks, hit ratio); if the frontier grows past [`MAX_FRONTIER`] the
//! solver falls back to a greedy walk over each VM's concave majorant.

use crate::rdist::HitRatioFn;
use crate::trace::VmId;
use crate::{Error, Result};

/// Default minimum allocation per VM, in blocks.
pub const DEFAULT_C_MIN: u64 = 1_000;

/// Frontier size above which the exact solver gives way to the greedy one.
pub const MAX_FRONTIER: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq)]
pub struct VmDemand {
    pub vm_id: VmId,
    pub hit_fn: HitRatioFn,
    pub demand_blocks: u64,
    /// Carried for callers; every VM currently counts equally.
    pub weight: f64,
    pub c_min: u64,
}

impl VmDemand {
    pub fn new(vm_id: VmId, hit_fn: HitRatioFn, demand_blocks: u64, c_min: u64) -> Self {
        VmDemand {
            vm_id,
            hit_fn,
            demand_blocks,
            weight: 1.0,
            c_min,
        }
    }

    /// Demand clamped up to the minimum allocation.
    pub fn upper(&self) -> u64 {
        self.demand_blocks.max(self.c_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionProblem {
    pub capacity_blocks: u64,
    pub vms: Vec<VmDemand>,
    pub t_hdd_us: u64,
    pub t_ssd_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// All demands fit; nothing to optimize.
    Demands,
    Exact,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    /// Allocated blocks, in the order of `PartitionProblem::vms`.
    pub alloc: Vec<u64>,
    pub feasible: bool,
    /// Summed per-VM latency of the allocation, in microseconds.
    pub objective_us: f64,
    pub solver: Solver,
}

pub fn feasibility_check(demands: &[u64], capacity_blocks: u64) -> bool {
    demands
        .iter()
        .try_fold(0u64, |acc, &d| acc.checked_add(d))
        .is_some_and(|sum| sum <= capacity_blocks)
}

pub fn vm_latency(hit_fn: &HitRatioFn, c: u64, t_hdd_us: u64, t_ssd_us: u64) -> f64 {
    let h = hit_fn.eval(c);
    h * t_ssd_us as f64 + (1.0 - h) * t_hdd_us as f64
}

/// Sum of per-VM latencies for an allocation.
pub fn total_latency(problem: &PartitionProblem, alloc: &[u64]) -> f64 {
    problem
        .vms
        .iter()
        .zip(alloc)
        .map(|(vm, &c)| vm_latency(&vm.hit_fn, c, problem.t_hdd_us, problem.t_ssd_us))
        .sum()
}

/// Diagnostic score `(C - sum(c)) + hsum * t_ssd + (N - hsum) * t_hdd`.
///
/// It adds unused blocks to microseconds, so it is reported for comparison
/// and never optimized.
pub fn slack_latency_score(alloc: &[u64], problem: &PartitionProblem) -> f64 {
    let hsum: f64 = problem
        .vms
        .iter()
        .zip(alloc)
        .map(|(vm, &c)| vm.hit_fn.eval(c))
        .sum();
    let used: u64 = alloc.iter().sum();
    let slack = problem.capacity_blocks as f64 - used as f64;
    let n = problem.vms.len() as f64;
    slack + hsum * problem.t_ssd_us as f64 + (n - hsum) * problem.t_hdd_us as f64
}

/// Allocation choices worth considering for one VM: its minimum plus every
/// breakpoint up to its demand where the hit ratio rises. Costs are blocks
/// above `c_min`.
fn candidates(vm: &VmDemand) -> Vec<(u64, f64)> {
    let upper = vm.upper();
    let mut out = vec![(0, vm.hit_fn.eval(vm.c_min))];
    for (m, h) in vm.hit_fn.steps() {
        if m > vm.c_min && m <= upper && h > out.last().unwrap().1 {
            out.push((m - vm.c_min, h));
        }
    }
    out
}

#[derive(Clone, Copy)]
struct Entry {
    cost: u64,
    value: f64,
    prev: usize,
    pick: usize,
}

fn solve_exact(cands: &[Vec<(u64, f64)>], budget: u64) -> Option<Vec<usize>> {
    let mut stages: Vec<Vec<Entry>> = Vec::with_capacity(cands.len());
    let mut frontier = vec![Entry {
        cost: 0,
        value: 0.0,
        prev: 0,
        pick: 0,
    }];
    for vm_cands in cands {
        let mut next: Vec<Entry> = Vec::with_capacity(frontier.len() * vm_cands.len());
        for (prev, e) in frontier.iter().enumerate() {
            for (pick, &(cost, h)) in vm_cands.iter().enumerate() {
                let cost = e.cost + cost;
                if cost <= budget {
                    next.push(Entry {
                        cost,
                        value: e.value + h,
                        prev,
                        pick,
                    });
                }
            }
        }
        // Keep the Pareto set: ascending cost with strictly rising value.
        // The stable sort keeps the first-generated entry among equal costs,
        // which favours cheaper choices for earlier VMs.
        next.sort_by(|a, b| a.cost.cmp(&b.cost).then(b.value.total_cmp(&a.value)));
        let mut pareto: Vec<Entry> = Vec::new();
        for e in next {
            if pareto.last().is_none_or(|last| e.value > last.value) {
                pareto.push(e);
            }
        }
        if pareto.len() > MAX_FRONTIER {
            return None;
        }
        stages.push(std::mem::replace(&mut frontier, pareto));
    }
    stages.push(frontier);

    // Best value; the earliest such entry is also the cheapest.
    let last = stages.last().unwrap();
    let mut best = 0;
    for (i, e) in last.iter().enumerate() {
        if e.value > last[best].value {
            best = i;
        }
    }
    let mut picks = vec![0; cands.len()];
    let mut idx = best;
    for vm in (0..cands.len()).rev() {
        let e = stages[vm + 1][idx];
        picks[vm] = e.pick;
        idx = e.prev;
    }
    Some(picks)
}

/// Upper concave hull of a VM's candidate points, as indices into `points`.
fn concave_majorant(points: &[(u64, f64)]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..points.len() {
        while hull.len() >= 2 {
            let (a, b) = (points[hull[hull.len() - 2]], points[hull[hull.len() - 1]]);
            let c = points[i];
            // Drop b when it lies on or below the chord from a to c.
            let cross = (b.0 - a.0) as f64 * (c.1 - a.1) - (c.0 - a.0) as f64 * (b.1 - a.1);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

fn solve_greedy(cands: &[Vec<(u64, f64)>], budget: u64) -> Vec<usize> {
    let hulls: Vec<Vec<usize>> = cands.iter().map(|c| concave_majorant(c)).collect();
    let mut pos = vec![0usize; cands.len()];
    let mut blocked = vec![false; cands.len()];
    let mut remaining = budget;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for vm in 0..cands.len() {
            if blocked[vm] || pos[vm] + 1 >= hulls[vm].len() {
                continue;
            }
            let (c0, h0) = cands[vm][hulls[vm][pos[vm]]];
            let (c1, h1) = cands[vm][hulls[vm][pos[vm] + 1]];
            let slope = (h1 - h0) / (c1 - c0) as f64;
            if best.is_none_or(|(_, s)| slope > s) {
                best = Some((vm, slope));
            }
        }
        let Some((vm, _)) = best else { break };
        let step = cands[vm][hulls[vm][pos[vm] + 1]].0 - cands[vm][hulls[vm][pos[vm]]].0;
        if step <= remaining {
            remaining -= step;
            pos[vm] += 1;
        } else {
            blocked[vm] = true;
        }
    }
    pos.iter().zip(&hulls).map(|(&p, hull)| hull[p]).collect()
}

pub fn allocate(problem: &PartitionProblem) -> Result<AllocationPlan> {
    if problem.t_ssd_us >= problem.t_hdd_us {
        return Err(Error::Config(
            "SSD latency must be below HDD latency".into(),
        ));
    }
    let required: u64 = problem.vms.iter().map(|v| v.c_min).sum();
    if required > problem.capacity_blocks {
        return Err(Error::Capacity {
            capacity: problem.capacity_blocks,
            required,
        });
    }

    let demands: Vec<u64> = problem.vms.iter().map(VmDemand::upper).collect();
    let (alloc, feasible, solver) = if feasibility_check(&demands, problem.capacity_blocks) {
        (demands, true, Solver::Demands)
    } else {
        let cands: Vec<Vec<(u64, f64)>> = problem.vms.iter().map(candidates).collect();
        let budget = problem.capacity_blocks - required;
        let (picks, solver) = match solve_exact(&cands, budget) {
            Some(p) => (p, Solver::Exact),
            None => (solve_greedy(&cands, budget), Solver::Greedy),
        };
        let alloc = problem
            .vms
            .iter()
            .zip(&cands)
            .zip(picks)
            .map(|((vm, c), pick)| vm.c_min + c[pick].0)
            .collect();
        (alloc, false, solver)
    };

    let used: u64 = alloc.iter().sum();
    assert!(
        used <= problem.capacity_blocks,
        "allocation exceeds capacity"
    );
    for (vm, &c) in problem.vms.iter().zip(&alloc) {
        assert!(
            vm.c_min <= c && c <= vm.upper(),
            "allocation out of bounds for VM {}",
            vm.vm_id
        );
    }
    Ok(AllocationPlan {
        objective_us: total_latency(problem, &alloc),
        alloc,
        feasible,
        solver,
    })
}
