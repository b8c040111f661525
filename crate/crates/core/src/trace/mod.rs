//! Block I/O request streams: parsing, expansion and synthetic workloads.

mod binary;
mod msr;
pub mod synth;

pub use binary::{read_binary, write_binary, BINARY_MAGIC};
pub use msr::{parse_msr, write_msr, MsrParse, VmMap};

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Default cache block size in bytes.
pub const DEFAULT_BLOCK_SIZE: u32 = 8192;

pub type VmId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Read,
    Write,
}

impl Op {
    pub fn is_read(self) -> bool {
        self == Op::Read
    }
}

/// One block-level access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IoRequest {
    pub vm_id: VmId,
    /// Trace-native timestamp.
    pub ts: u64,
    pub block: u64,
    pub op: Op,
    pub len_blocks: u32,
}

impl IoRequest {
    pub fn new(vm_id: VmId, ts: u64, block: u64, op: Op) -> Self {
        IoRequest {
            vm_id,
            ts,
            block,
            op,
            len_blocks: 1,
        }
    }

    pub fn read(vm_id: VmId, ts: u64, block: u64) -> Self {
        Self::new(vm_id, ts, block, Op::Read)
    }

    pub fn write(vm_id: VmId, ts: u64, block: u64) -> Self {
        Self::new(vm_id, ts, block, Op::Write)
    }

    pub fn validate(&self) -> Result<()> {
        if self.len_blocks == 0 {
            return Err(Error::InvalidInput(format!(
                "request at block {} has zero length",
                self.block
            )));
        }
        if self.block.checked_add(u64::from(self.len_blocks)).is_none() {
            return Err(Error::InvalidInput(format!(
                "request at block {} with length {} overflows the address space",
                self.block, self.len_blocks
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSource {
    MsrCsv,
    Synthetic,
    InternalBinary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMeta {
    pub block_size_bytes: u32,
    pub vm_count: usize,
    pub source: TraceSource,
}

impl TraceMeta {
    pub fn new(block_size_bytes: u32, vm_count: usize, source: TraceSource) -> Result<Self> {
        check_block_size(block_size_bytes)?;
        if vm_count == 0 {
            return Err(Error::InvalidInput("trace has no VMs".into()));
        }
        Ok(TraceMeta {
            block_size_bytes,
            vm_count,
            source,
        })
    }
}

pub(crate) fn check_block_size(block_size_bytes: u32) -> Result<()> {
    if block_size_bytes == 0 || !block_size_bytes.is_power_of_two() {
        return Err(Error::Config(format!(
            "block size {block_size_bytes} is not a positive power of two"
        )));
    }
    Ok(())
}

/// Splits every multi-block request into consecutive single-block requests
/// carrying the same VM, timestamp and op.
pub fn expand_multiblock(reqs: &[IoRequest]) -> Vec<IoRequest> {
    let total: usize = reqs.iter().map(|r| r.len_blocks as usize).sum();
    let mut out = Vec::with_capacity(total);
    for r in reqs {
        for i in 0..u64::from(r.len_blocks) {
            out.push(IoRequest {
                block: r.block + i,
                len_blocks: 1,
                ..*r
            });
        }
    }
    out
}

/// Groups a mixed stream by VM, keeping each VM's relative order.
pub fn split_by_vm(reqs: &[IoRequest]) -> BTreeMap<VmId, Vec<IoRequest>> {
    let mut map: BTreeMap<VmId, Vec<IoRequest>> = BTreeMap::new();
    for r in reqs {
        map.entry(r.vm_id).or_default().push(*r);
    }
    map
}
