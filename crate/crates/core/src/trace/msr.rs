//! MSR Cambridge CSV records:
//! `Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{check_block_size, IoRequest, Op, VmId};
use crate::{Error, Result};

/// Maps `(Hostname, DiskNumber)` pairs to VM ids.
///
/// With `auto_assign` enabled, unseen pairs get the next free id in order of
/// first appearance; otherwise an unmapped pair is an input error.
#[derive(Debug, Clone, Default)]
pub struct VmMap {
    entries: BTreeMap<(String, u32), VmId>,
    auto_assign: bool,
}

impl VmMap {
    pub fn auto() -> Self {
        VmMap {
            entries: BTreeMap::new(),
            auto_assign: true,
        }
    }

    pub fn strict() -> Self {
        VmMap::default()
    }

    pub fn insert(&mut self, host: &str, disk: u32, vm_id: VmId) {
        self.entries.insert((host.to_string(), disk), vm_id);
    }

    pub fn set_auto_assign(&mut self, on: bool) {
        self.auto_assign = on;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&mut self, host: &str, disk: u32) -> Option<VmId> {
        if let Some(&id) = self.entries.get(&(host.to_string(), disk)) {
            return Some(id);
        }
        if !self.auto_assign {
            return None;
        }
        let next = self.entries.values().map(|&v| v + 1).max().unwrap_or(0);
        self.entries.insert((host.to_string(), disk), next);
        Some(next)
    }

    /// Reverse lookup used when serializing.
    pub fn origin(&self, vm_id: VmId) -> Option<(&str, u32)> {
        self.entries
            .iter()
            .find(|(_, &v)| v == vm_id)
            .map(|((h, d), _)| (h.as_str(), *d))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32, VmId)> {
        self.entries.iter().map(|((h, d), &v)| (h.as_str(), *d, v))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MsrParse {
    pub requests: Vec<IoRequest>,
    /// Records skipped because their Size was zero.
    pub skipped_zero_size: usize,
}

pub fn parse_msr<R: BufRead>(input: R, block_size_bytes: u32, vms: &mut VmMap) -> Result<MsrParse> {
    check_block_size(block_size_bytes)?;
    let bs = u64::from(block_size_bytes);
    let mut out = MsrParse::default();

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: line_no, msg };

        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", fields.len())));
        }
        let num = |i: usize, name: &str| -> Result<u64> {
            fields[i].parse::<u64>().map_err(|_| {
                bad(format!(
                    "{name} {:?} is not a non-negative integer",
                    fields[i]
                ))
            })
        };
        let ts = num(0, "Timestamp")?;
        let host = fields[1];
        let disk = u32::try_from(num(2, "DiskNumber")?)
            .map_err(|_| bad("DiskNumber out of range".into()))?;
        let op = if fields[3].eq_ignore_ascii_case("read") {
            Op::Read
        } else if fields[3].eq_ignore_ascii_case("write") {
            Op::Write
        } else {
            return Err(bad(format!("unknown request type {:?}", fields[3])));
        };
        let offset = num(4, "Offset")?;
        let size = num(5, "Size")?;
        // ResponseTime is validated but not used.
        num(6, "ResponseTime")?;

        if size == 0 {
            out.skipped_zero_size += 1;
            continue;
        }
        let span = (offset % bs)
            .checked_add(size)
            .ok_or_else(|| bad("Size overflows".into()))?;
        let len_blocks = u32::try_from(span.div_ceil(bs))
            .map_err(|_| bad("request spans too many blocks".into()))?;
        let vm_id = vms
            .resolve(host, disk)
            .ok_or_else(|| bad(format!("no VM assigned to {host}/{disk}")))?;
        let req = IoRequest {
            vm_id,
            ts,
            block: offset / bs,
            op,
            len_blocks,
        };
        req.validate().map_err(|e| bad(e.to_string()))?;
        out.requests.push(req);
    }
    Ok(out)
}

/// Writes requests back as MSR records. Hostname and DiskNumber come from the
/// reverse of `vms`; unmapped VMs are written as `vm<id>`, disk 0.
/// ResponseTime is written as 0.
pub fn write_msr<W: Write>(
    mut out: W,
    reqs: &[IoRequest],
    block_size_bytes: u32,
    vms: &VmMap,
) -> Result<()> {
    check_block_size(block_size_bytes)?;
    let bs = u64::from(block_size_bytes);
    for r in reqs {
        let op = match r.op {
            Op::Read => "Read",
            Op::Write => "Write",
        };
        let offset = r.block * bs;
        let size = u64::from(r.len_blocks) * bs;
        match vms.origin(r.vm_id) {
            Some((host, disk)) => writeln!(
                out,
                "{},{},{},{},{},{},0",
                r.ts, host, disk, op, offset, size
            )?,
            None => writeln!(out, "{},vm{},0,{},{},{},0", r.ts, r.vm_id, op, offset, size)?,
        }
    }
    Ok(())
}
