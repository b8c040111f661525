//! Compact binary trace: magic `ECI1` followed by fixed-width little-endian
//! records `(vm_id: u16, ts: u64, block: u64, op: u8)`, one per block.

use std::io::{self, Read, Write};

use super::{IoRequest, Op};
use crate::{Error, Result};

pub const BINARY_MAGIC: [u8; 4] = *b"ECI1";
const RECORD_LEN: usize = 2 + 8 + 8 + 1;

/// Requests must already be single-block; use
/// [`expand_multiblock`](super::expand_multiblock) first.
pub fn write_binary<W: Write>(mut out: W, reqs: &[IoRequest]) -> Result<()> {
    out.write_all(&BINARY_MAGIC)?;
    let mut rec = [0u8; RECORD_LEN];
    for r in reqs {
        if r.len_blocks != 1 {
            return Err(Error::InvalidInput(format!(
                "binary records are single-block, got length {} at block {}",
                r.len_blocks, r.block
            )));
        }
        rec[0..2].copy_from_slice(&r.vm_id.to_le_bytes());
        rec[2..10].copy_from_slice(&r.ts.to_le_bytes());
        rec[10..18].copy_from_slice(&r.block.to_le_bytes());
        rec[18] = match r.op {
            Op::Read => 0,
            Op::Write => 1,
        };
        out.write_all(&rec)?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Vec<IoRequest>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::InvalidInput("binary trace is truncated".into()),
        _ => Error::Io(e),
    })?;
    if magic != BINARY_MAGIC {
        return Err(Error::InvalidInput("missing ECI1 magic".into()));
    }
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    if data.len() % RECORD_LEN != 0 {
        return Err(Error::InvalidInput(format!(
            "binary trace length {} is not a whole number of records",
            data.len()
        )));
    }
    data.chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let op = match rec[18] {
                0 => Op::Read,
                1 => Op::Write,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "record {i}: bad op byte {other}"
                    )))
                }
            };
            Ok(IoRequest {
                vm_id: u16::from_le_bytes([rec[0], rec[1]]),
                ts: u64::from_le_bytes(rec[2..10].try_into().unwrap()),
                block: u64::from_le_bytes(rec[10..18].try_into().unwrap()),
                op,
                len_blocks: 1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian() {
        let mut buf = Vec::new();
        write_binary(&mut buf, &[IoRequest::write(0x0102, 3, 4)]).unwrap();
        assert_eq!(&buf[..4], b"ECI1");
        assert_eq!(buf.len(), 4 + RECORD_LEN);
        assert_eq!(&buf[4..6], &[0x02, 0x01]);
        assert_eq!(buf[6], 3);
        assert_eq!(buf[14], 4);
        assert_eq!(buf[22], 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_binary(&b"ECI0"[..]).is_err());
        assert!(read_binary(&b"EC"[..]).is_err());
        assert!(read_binary(&b"ECI1\x00\x00"[..]).is_err());
        let multi = IoRequest {
            len_blocks: 2,
            ..IoRequest::read(0, 0, 0)
        };
        assert!(write_binary(Vec::new(), &[multi]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(raw in prop::collection::vec((any::<u16>(), any::<u64>(), any::<u64>(), any::<bool>()), 0..64)) {
            let reqs: Vec<IoRequest> = raw
                .into_iter()
                .map(|(vm, ts, block, w)| IoRequest::new(vm, ts, block, if w { Op::Write } else { Op::Read }))
                .collect();
            let mut buf = Vec::new();
            write_binary(&mut buf, &reqs).unwrap();
            prop_assert_eq!(read_binary(buf.as_slice()).unwrap(), reqs);
        }
    }
}
