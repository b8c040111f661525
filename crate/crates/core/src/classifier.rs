//! Access-class tagging: each access is classified by its own op and the op
//! of the previous access to the same block.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Index, IndexMut};

use crate::trace::{IoRequest, Op};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessClass {
    /// Cold read: first access to the block is a read.
    Cr,
    /// Cold write.
    Cw,
    /// Read after read.
    Rar,
    /// Read after write.
    Raw,
    /// Write after read.
    War,
    /// Write after write.
    Waw,
}

impl AccessClass {
    pub const ALL: [AccessClass; 6] = [
        AccessClass::Cr,
        AccessClass::Cw,
        AccessClass::Rar,
        AccessClass::Raw,
        AccessClass::War,
        AccessClass::Waw,
    ];

    pub fn of(current: Op, previous: Option<Op>) -> Self {
        match (current, previous) {
            (Op::Read, None) => AccessClass::Cr,
            (Op::Write, None) => AccessClass::Cw,
            (Op::Read, Some(Op::Read)) => AccessClass::Rar,
            (Op::Read, Some(Op::Write)) => AccessClass::Raw,
            (Op::Write, Some(Op::Read)) => AccessClass::War,
            (Op::Write, Some(Op::Write)) => AccessClass::Waw,
        }
    }

    pub fn is_cold(self) -> bool {
        matches!(self, AccessClass::Cr | AccessClass::Cw)
    }

    /// RAR and RAW: reuses that can turn into read hits.
    pub fn is_useful_reuse(self) -> bool {
        matches!(self, AccessClass::Rar | AccessClass::Raw)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AccessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessClass::Cr => "CR",
            AccessClass::Cw => "CW",
            AccessClass::Rar => "RAR",
            AccessClass::Raw => "RAW",
            AccessClass::War => "WAR",
            AccessClass::Waw => "WAW",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifiedRequest {
    pub req: IoRequest,
    pub class: AccessClass,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ClassCounts {
    counts: [u64; 6],
}

impl ClassCounts {
    pub fn from_pairs(pairs: &[(AccessClass, u64)]) -> Self {
        let mut c = ClassCounts::default();
        for &(class, n) in pairs {
            c[class] += n;
        }
        c
    }

    pub fn add(&mut self, class: AccessClass) {
        self[class] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ClassCounts) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    pub fn of_stream(stream: &[ClassifiedRequest]) -> Self {
        let mut c = ClassCounts::default();
        for r in stream {
            c.add(r.class);
        }
        c
    }
}

impl Index<AccessClass> for ClassCounts {
    type Output = u64;
    fn index(&self, class: AccessClass) -> &u64 {
        &self.counts[class.index()]
    }
}

impl IndexMut<AccessClass> for ClassCounts {
    fn index_mut(&mut self, class: AccessClass) -> &mut u64 {
        &mut self.counts[class.index()]
    }
}

/// (WAW + WAR) / total.
pub fn write_ratio(counts: &ClassCounts) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let writes = counts[AccessClass::Waw] + counts[AccessClass::War];
    Ok(writes as f64 / total as f64)
}

/// Per-VM classifier. History spans the classifier's lifetime, so a block
/// first seen in an earlier interval is not cold in a later one.
#[derive(Debug, Clone, Default)]
pub struct Classifier {
    last_op: HashMap<u64, Op>,
    counts: ClassCounts,
}

impl Classifier {
    pub fn new() -> Self {
        Classifier::default()
    }

    pub fn classify_one(&mut self, req: IoRequest) -> Result<ClassifiedRequest> {
        if req.len_blocks != 1 {
            return Err(Error::InvalidInput(format!(
                "classifier expects single-block requests, got length {} at block {}",
                req.len_blocks, req.block
            )));
        }
        let previous = self.last_op.insert(req.block, req.op);
        let class = AccessClass::of(req.op, previous);
        self.counts.add(class);
        Ok(ClassifiedRequest { req, class })
    }

    pub fn classify(&mut self, stream: &[IoRequest]) -> Result<Vec<ClassifiedRequest>> {
        stream.iter().map(|&r| self.classify_one(r)).collect()
    }

    /// Counts accumulated since construction or the last [`take_counts`](Self::take_counts).
    pub fn counts(&self) -> &ClassCounts {
        &self.counts
    }

    pub fn take_counts(&mut self) -> ClassCounts {
        std::mem::take(&mut self.counts)
    }
}

/// Classifies a whole single-VM stream with fresh history.
pub fn classify(stream: &[IoRequest]) -> Result<Vec<ClassifiedRequest>> {
    Classifier::new().classify(stream)
}
