//! Binary key file holding one permutation per channel.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"MCOT" | version: u8 = 1 | channels: u32 | points: u32 | channels × points × u32
//! ```
//!
//! Block `c` lists, for every source index `i`, the target index the channel-`c`
//! plan sends it to. Only exact permutation plans can be written.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::TransportPlan;

pub const MAGIC: &[u8; 4] = b"MCOT";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

pub fn encode_key<T: Scalar>(plans: &[TransportPlan<T>]) -> Result<Vec<u8>> {
    let points = plans.first().map_or(0, TransportPlan::n);
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * plans.len() * points);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&u32::try_from(plans.len()).map_err(too_big)?.to_le_bytes());
    out.extend_from_slice(&u32::try_from(points).map_err(too_big)?.to_le_bytes());
    for (c, plan) in plans.iter().enumerate() {
        let perm = plan.as_permutation().ok_or_else(|| {
            Error::PlanKind(format!("channel {c} holds a regularized plan, which cannot be a key"))
        })?;
        if perm.len() != points {
            return Err(Error::ShapeMismatch(format!(
                "channel {c} has {} points, channel 0 has {points}",
                perm.len()
            )));
        }
        for &j in perm {
            out.extend_from_slice(&(j as u32).to_le_bytes());
        }
    }
    Ok(out)
}

fn too_big(_: std::num::TryFromIntError) -> Error {
    Error::InvalidArgument("key dimension exceeds u32".into())
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_key<T: Scalar>(bytes: &[u8]) -> Result<Vec<TransportPlan<T>>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated(format!("{} bytes is shorter than the magic", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { expected: "MCOT" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("key header needs {HEADER_LEN} bytes, got {}", bytes.len())));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let channels = read_u32(bytes, 5) as usize;
    let points = read_u32(bytes, 9) as usize;
    let expected = channels
        .checked_mul(points)
        .and_then(|k| k.checked_mul(4))
        .and_then(|k| k.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Truncated("declared key size overflows".into()))?;
    if bytes.len() < expected {
        return Err(Error::Truncated(format!(
            "{channels}x{points} key needs {expected} bytes, got {}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::InvalidArgument(format!(
            "{} unexpected trailing bytes after key",
            bytes.len() - expected
        )));
    }
    let mut plans = Vec::with_capacity(channels);
    let mut seen = vec![false; points];
    for c in 0..channels {
        seen.fill(false);
        let mut perm = Vec::with_capacity(points);
        for i in 0..points {
            let index = read_u32(bytes, HEADER_LEN + 4 * (c * points + i));
            let j = index as usize;
            if j >= points {
                return Err(Error::IndexOutOfRange { channel: c, index, points });
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::NotPermutation { channel: c, index });
            }
            perm.push(j);
        }
        plans.push(TransportPlan::from_permutation(perm)?);
    }
    Ok(plans)
}

pub fn write_key<T: Scalar>(plans: &[TransportPlan<T>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_key(plans)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_key<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<TransportPlan<T>>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_key(&bytes)
}
