//! Per-VM write-policy selection from the interval's write ratio.

use std::collections::{BTreeMap, BTreeSet};

use crate::cachesim::WritePolicy;
use crate::classifier::{write_ratio, ClassCounts};
use crate::trace::VmId;

pub const DEFAULT_WTHRESHOLD: f64 = 0.5;

/// RO when `(WAW + WAR) / total >= wthreshold`, WB otherwise. An empty
/// interval keeps `previous`.
pub fn assign_policy(counts: &ClassCounts, wthreshold: f64, previous: WritePolicy) -> WritePolicy {
    match write_ratio(counts) {
        Ok(r) if r >= wthreshold => WritePolicy::Ro,
        Ok(_) => WritePolicy::Wb,
        Err(_) => previous,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub vm_id: VmId,
    /// `None` for an empty interval.
    pub write_ratio: Option<f64>,
    pub policy: WritePolicy,
}

/// Current policy of every VM. VMs start on WB.
#[derive(Debug, Clone)]
pub struct PolicyState {
    policies: BTreeMap<VmId, WritePolicy>,
    wthreshold: f64,
    force_ro: BTreeSet<VmId>,
}

impl PolicyState {
    pub fn new(wthreshold: f64) -> Self {
        PolicyState {
            policies: BTreeMap::new(),
            wthreshold,
            force_ro: BTreeSet::new(),
        }
    }

    /// Pins these VMs to RO regardless of their write ratio.
    pub fn with_forced_ro(mut self, vms: impl IntoIterator<Item = VmId>) -> Self {
        self.force_ro.extend(vms);
        self
    }

    pub fn wthreshold(&self) -> f64 {
        self.wthreshold
    }

    pub fn current(&self, vm: VmId) -> WritePolicy {
        self.policies.get(&vm).copied().unwrap_or(WritePolicy::Wb)
    }

    pub fn decide(&mut self, vm: VmId, counts: &ClassCounts) -> PolicyDecision {
        let previous = self.current(vm);
        let policy = if self.force_ro.contains(&vm) {
            WritePolicy::Ro
        } else {
            assign_policy(counts, self.wthreshold, previous)
        };
        self.policies.insert(vm, policy);
        PolicyDecision {
            vm_id: vm,
            write_ratio: write_ratio(counts).ok(),
            policy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cachesim::{simulate, CacheConfig};
    use crate::classifier::{classify, AccessClass::*};
    use crate::trace::{IoRequest, Op};
    use proptest::prelude::*;

    #[test]
    fn write_heavy_interval_goes_read_only() {
        let wdev = ClassCounts::from_pairs(&[(Waw, 77), (Rar, 23)]);
        assert_eq!(assign_policy(&wdev, 0.5, WritePolicy::Wb), WritePolicy::Ro);
    }

    #[test]
    fn read_dominated_interval_stays_write_back() {
        let hm = ClassCounts::from_pairs(&[(Rar, 92), (Cr, 8)]);
        assert_eq!(assign_policy(&hm, 0.5, WritePolicy::Wb), WritePolicy::Wb);
        assert_eq!(assign_policy(&hm, 0.5, WritePolicy::Ro), WritePolicy::Wb);
    }

    #[test]
    fn forced_ro_overrides_the_rule() {
        let hm = ClassCounts::from_pairs(&[(Rar, 92), (Cr, 8)]);
        let mut state = PolicyState::new(0.5).with_forced_ro([1]);
        assert_eq!(state.decide(0, &hm).policy, WritePolicy::Wb);
        assert_eq!(state.decide(1, &hm).policy, WritePolicy::Ro);
    }

    #[test]
    fn boundary_is_inclusive() {
        let c = ClassCounts::from_pairs(&[(War, 5), (Rar, 5)]);
        assert_eq!(assign_policy(&c, 0.5, WritePolicy::Wb), WritePolicy::Ro);
    }

    #[test]
    fn empty_interval_keeps_previous_policy() {
        let mut state = PolicyState::new(0.5);
        assert_eq!(state.current(3), WritePolicy::Wb);
        state.decide(3, &ClassCounts::from_pairs(&[(Waw, 9), (Rar, 1)]));
        let d = state.decide(3, &ClassCounts::default());
        assert_eq!(d.policy, WritePolicy::Ro);
        assert_eq!(d.write_ratio, None);
    }

    fn arb_counts() -> impl Strategy<Value = ClassCounts> {
        prop::array::uniform6(0u64..50).prop_map(|n| {
            ClassCounts::from_pairs(&[
                (Cr, n[0]),
                (Cw, n[1]),
                (Rar, n[2]),
                (Raw, n[3]),
                (War, n[4]),
                (Waw, n[5]),
            ])
        })
    }

    proptest! {
        #[test]
        fn raising_threshold_never_creates_ro(c in arb_counts(), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            if assign_policy(&c, lo, WritePolicy::Wb) == WritePolicy::Wb {
                prop_assert_eq!(assign_policy(&c, hi, WritePolicy::Wb), WritePolicy::Wb);
            }
        }

        /// Without read-after-write reuse, RO keeps every read hit and saves
        /// at least one SSD write when the stream writes at all.
        #[test]
        fn read_only_saves_writes_without_raw(ops in prop::collection::vec((0u64..16, any::<bool>()), 1..200), size in 1u64..20) {
            // Reads never follow writes to the same block: keep a block's
            // writes after its last read.
            let mut written = std::collections::HashSet::new();
            let reqs: Vec<IoRequest> = ops
                .iter()
                .enumerate()
                .filter_map(|(i, &(b, w))| {
                    if w {
                        written.insert(b);
                        Some(IoRequest::new(0, i as u64, b, Op::Write))
                    } else if written.contains(&b) {
                        None
                    } else {
                        Some(IoRequest::new(0, i as u64, b, Op::Read))
                    }
                })
                .collect();
            let s = classify(&reqs).unwrap();
            prop_assert_eq!(ClassCounts::of_stream(&s)[Raw], 0);
            let wb = simulate(&s, CacheConfig::new(size, WritePolicy::Wb)).unwrap();
            let ro = simulate(&s, CacheConfig::new(size, WritePolicy::Ro)).unwrap();
            prop_assert!(ro.read_hits >= wb.read_hits);
            if reqs.iter().any(|r| r.op == Op::Write) {
                prop_assert!(ro.ssd_writes < wb.ssd_writes);
            }
        }
    }
}
