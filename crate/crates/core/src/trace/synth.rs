//! Deterministic synthetic workloads.
//!
//! Every generator lays its requests out interval by interval: request `i`
//! of interval `k` gets timestamp `k * interval_ticks + i`, so slicing the
//! output with the same `interval_ticks` recovers the intended intervals.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{IoRequest, Op, VmId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub vm_id: VmId,
    pub base_block: u64,
    pub interval_ticks: u64,
    pub seed: u64,
}

impl GenParams {
    pub fn new(vm_id: VmId, interval_ticks: u64, seed: u64) -> Self {
        GenParams {
            vm_id,
            base_block: 0,
            interval_ticks,
            seed,
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ (u64::from(self.vm_id) << 48))
    }
}

/// Workloads on which URD-based sizing makes a poor call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerCase {
    /// Interval 1 reads `seq_len` blocks sequentially; interval 2 issues
    /// `random_len` random re-reads of those blocks; interval 3 re-reads
    /// `tail_len` distinct blocks of interval 1.
    SeqRandom {
        seq_len: u64,
        random_len: usize,
        tail_len: usize,
    },
    /// Interval 1 issues `random_len` random reads over `local_blocks`
    /// blocks; interval 2 writes `seq_len` fresh blocks sequentially;
    /// interval 3 re-reads the distinct interval-1 blocks once each in
    /// first-touch order.
    RandomSeq {
        local_blocks: u64,
        random_len: usize,
        seq_len: u64,
    },
    /// The same sequential read run of `run_len` blocks in each of
    /// `repeats` intervals.
    SemiSequential { run_len: u64, repeats: usize },
}

/// Builds an interval-aligned stream from per-interval block/op lists.
struct Layout {
    params: GenParams,
    out: Vec<IoRequest>,
    interval: u64,
    pos: u64,
}

impl Layout {
    fn new(params: GenParams) -> Self {
        Layout {
            params,
            out: Vec::new(),
            interval: 0,
            pos: 0,
        }
    }

    fn push(&mut self, block: u64, op: Op) -> Result<()> {
        if self.pos >= self.params.interval_ticks {
            return Err(Error::InvalidInput(format!(
                "interval {} holds more than interval_ticks = {} requests",
                self.interval, self.params.interval_ticks
            )));
        }
        let ts = self.interval * self.params.interval_ticks + self.pos;
        self.out.push(IoRequest::new(
            self.params.vm_id,
            ts,
            self.params.base_block + block,
            op,
        ));
        self.pos += 1;
        Ok(())
    }

    fn next_interval(&mut self) {
        self.interval += 1;
        self.pos = 0;
    }
}

pub fn gen_corner_case(kind: CornerCase, params: GenParams) -> Result<Vec<IoRequest>> {
    if params.interval_ticks == 0 {
        return Err(Error::InvalidInput(
            "interval_ticks must be positive".into(),
        ));
    }
    let mut rng = params.rng();
    let mut lay = Layout::new(params);
    match kind {
        CornerCase::SeqRandom {
            seq_len,
            random_len,
            tail_len,
        } => {
            if seq_len == 0 || random_len == 0 || tail_len == 0 {
                return Err(Error::InvalidInput(
                    "SeqRandom ranges must be non-empty".into(),
                ));
            }
            if tail_len as u64 > seq_len {
                return Err(Error::InvalidInput(
                    "SeqRandom tail cannot exceed the sequential pass".into(),
                ));
            }
            for b in 0..seq_len {
                lay.push(b, Op::Read)?;
            }
            lay.next_interval();
            for _ in 0..random_len {
                lay.push(rng.gen_range(0..seq_len), Op::Read)?;
            }
            lay.next_interval();
            let all: Vec<u64> = (0..seq_len).collect();
            for &b in all.choose_multiple(&mut rng, tail_len) {
                lay.push(b, Op::Read)?;
            }
        }
        CornerCase::RandomSeq {
            local_blocks,
            random_len,
            seq_len,
        } => {
            if local_blocks == 0 || random_len == 0 || seq_len == 0 {
                return Err(Error::InvalidInput(
                    "RandomSeq ranges must be non-empty".into(),
                ));
            }
            let mut first_touch = Vec::new();
            for _ in 0..random_len {
                let b = rng.gen_range(0..local_blocks);
                if !first_touch.contains(&b) {
                    first_touch.push(b);
                }
                lay.push(b, Op::Read)?;
            }
            lay.next_interval();
            for b in 0..seq_len {
                lay.push(local_blocks + b, Op::Write)?;
            }
            lay.next_interval();
            for b in first_touch {
                lay.push(b, Op::Read)?;
            }
        }
        CornerCase::SemiSequential { run_len, repeats } => {
            if run_len == 0 || repeats == 0 {
                return Err(Error::InvalidInput(
                    "SemiSequential ranges must be non-empty".into(),
                ));
            }
            for k in 0..repeats {
                if k > 0 {
                    lay.next_interval();
                }
                for b in 0..run_len {
                    lay.push(b, Op::Read)?;
                }
            }
        }
    }
    Ok(lay.out)
}

/// W1, R2, R1, W3, R4, W5, W2: seven single-block requests whose longest
/// reuse is a write-after-read.
pub const EXAMPLE_PATTERN: [(Op, u64); 7] = [
    (Op::Write, 1),
    (Op::Read, 2),
    (Op::Read, 1),
    (Op::Write, 3),
    (Op::Read, 4),
    (Op::Write, 5),
    (Op::Write, 2),
];

/// The seven-request pattern repeated once per interval.
pub fn example_trace(vm_id: VmId, intervals: usize, interval_ticks: u64) -> Result<Vec<IoRequest>> {
    let mut lay = Layout::new(GenParams::new(vm_id, interval_ticks, 0));
    for k in 0..intervals {
        if k > 0 {
            lay.next_interval();
        }
        for &(op, block) in &EXAMPLE_PATTERN {
            lay.push(block, op)?;
        }
    }
    Ok(lay.out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixKind {
    /// Fresh read groups with short read-after-read reuse, followed by a
    /// shuffled pass of writes over a recurring write set (write-after-write
    /// reuse at long distance).
    WriteHeavy,
    /// Fresh groups written once then read back twice (read-after-write
    /// and read-after-read reuse, no write reuse).
    ReadHeavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixParams {
    pub kind: MixKind,
    /// Blocks per fresh group; the read reuse distance is `group - 1`.
    pub group: u64,
    /// Size of the recurring write set (WriteHeavy only).
    pub write_set: u64,
    pub cycles_per_interval: usize,
    pub intervals: usize,
}

/// A reuse-stable workload: every interval holds whole cycles built from the
/// same template, so each interval has the same reuse structure.
pub fn gen_mix(mix: MixParams, params: GenParams) -> Result<Vec<IoRequest>> {
    if mix.group == 0 || mix.cycles_per_interval == 0 || mix.intervals == 0 {
        return Err(Error::InvalidInput("mix ranges must be non-empty".into()));
    }
    if mix.kind == MixKind::WriteHeavy && mix.write_set == 0 {
        return Err(Error::InvalidInput(
            "write-heavy mix needs a write set".into(),
        ));
    }
    let mut rng = params.rng();
    let mut lay = Layout::new(params);
    let mut write_set: Vec<u64> = (0..mix.write_set).collect();
    let mut fresh = mix.write_set;

    for k in 0..mix.intervals {
        if k > 0 {
            lay.next_interval();
        }
        for _ in 0..mix.cycles_per_interval {
            let group: Vec<u64> = (fresh..fresh + mix.group).collect();
            fresh += mix.group;
            match mix.kind {
                MixKind::WriteHeavy => {
                    for _ in 0..2 {
                        for &b in &group {
                            lay.push(b, Op::Read)?;
                        }
                    }
                    write_set.shuffle(&mut rng);
                    for &b in &write_set {
                        lay.push(b, Op::Write)?;
                    }
                }
                MixKind::ReadHeavy => {
                    for &b in &group {
                        lay.push(b, Op::Write)?;
                    }
                    for _ in 0..2 {
                        for &b in &group {
                            lay.push(b, Op::Read)?;
                        }
                    }
                }
            }
        }
    }
    Ok(lay.out)
}

/// The four-VM mix used for ECI-vs-baseline comparisons: VMs 0 and 1 are
/// write-heavy, VMs 2 and 3 read-heavy.
pub fn four_vm_mix(
    seed: u64,
    intervals: usize,
    interval_ticks: u64,
) -> Result<Vec<Vec<IoRequest>>> {
    let specs = [
        (MixKind::WriteHeavy, 24, 72),
        (MixKind::WriteHeavy, 32, 96),
        (MixKind::ReadHeavy, 40, 0),
        (MixKind::ReadHeavy, 16, 0),
    ];
    specs
        .iter()
        .enumerate()
        .map(|(vm, &(kind, group, write_set))| {
            gen_mix(
                MixParams {
                    kind,
                    group,
                    write_set,
                    cycles_per_interval: 4,
                    intervals,
                },
                GenParams {
                    vm_id: vm as VmId,
                    base_block: 1 << 32,
                    interval_ticks,
                    seed,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GenParams {
        GenParams::new(0, 1000, 7)
    }

    #[test]
    fn seq_random_first_interval_is_a_sequential_pass() {
        let kind = CornerCase::SeqRandom {
            seq_len: 10,
            random_len: 12,
            tail_len: 2,
        };
        let reqs = gen_corner_case(kind, params()).unwrap();
        assert_eq!(reqs.len(), 24);
        let first: Vec<u64> = reqs[..10].iter().map(|r| r.block).collect();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
        assert!(reqs[10..22]
            .iter()
            .all(|r| r.block < 10 && (1000..2000).contains(&r.ts)));
        assert_ne!(reqs[22].block, reqs[23].block);
        assert!(reqs[22..].iter().all(|r| r.ts >= 2000));
    }

    #[test]
    fn generators_are_deterministic_per_seed() {
        let kind = CornerCase::RandomSeq {
            local_blocks: 6,
            random_len: 20,
            seq_len: 8,
        };
        let a = gen_corner_case(kind, params()).unwrap();
        let b = gen_corner_case(kind, params()).unwrap();
        assert_eq!(a, b);
        let c = gen_corner_case(
            kind,
            GenParams {
                seed: 8,
                ..params()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_seq_repeats_interval_one_addresses() {
        let kind = CornerCase::RandomSeq {
            local_blocks: 5,
            random_len: 15,
            seq_len: 6,
        };
        let reqs = gen_corner_case(kind, params()).unwrap();
        let i1: Vec<u64> = reqs
            .iter()
            .filter(|r| r.ts < 1000)
            .map(|r| r.block)
            .collect();
        let i2: Vec<&IoRequest> = reqs
            .iter()
            .filter(|r| (1000..2000).contains(&r.ts))
            .collect();
        let i3: Vec<u64> = reqs
            .iter()
            .filter(|r| r.ts >= 2000)
            .map(|r| r.block)
            .collect();
        assert!(i2.iter().all(|r| r.op == Op::Write && r.block >= 5));
        let mut distinct = Vec::new();
        for b in i1 {
            if !distinct.contains(&b) {
                distinct.push(b);
            }
        }
        assert_eq!(i3, distinct);
    }

    #[test]
    fn empty_ranges_are_rejected() {
        for kind in [
            CornerCase::SeqRandom {
                seq_len: 0,
                random_len: 1,
                tail_len: 1,
            },
            CornerCase::RandomSeq {
                local_blocks: 3,
                random_len: 0,
                seq_len: 1,
            },
            CornerCase::SemiSequential {
                run_len: 4,
                repeats: 0,
            },
        ] {
            assert!(gen_corner_case(kind, params()).is_err(), "{kind:?}");
        }
    }

    #[test]
    fn overfull_interval_is_rejected() {
        let kind = CornerCase::SemiSequential {
            run_len: 10,
            repeats: 2,
        };
        assert!(gen_corner_case(kind, GenParams::new(0, 5, 0)).is_err());
    }

    #[test]
    fn mix_is_interval_aligned() {
        let mix = MixParams {
            kind: MixKind::WriteHeavy,
            group: 4,
            write_set: 12,
            cycles_per_interval: 3,
            intervals: 2,
        };
        let reqs = gen_mix(mix, GenParams::new(1, 100, 3)).unwrap();
        assert_eq!(reqs.len(), 2 * 3 * (8 + 12));
        assert_eq!(reqs.iter().filter(|r| r.ts < 100).count(), 60);
        assert!(reqs.iter().all(|r| r.vm_id == 1));
    }
}
