//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "STGO" | version u8 = 1 | base u32 | use_mcot u8 | mlp_hidden u32 | epoch u32 | noise seed u64
//! for hide net, then reveal net:
//!     stage count u32, then per stage: in u32 | out u32 | kernel u32 | resample u8
//! parameter count u64 | parameters as f64, in declaration order
//! ```
//!
//! `epoch` is the number of completed epochs, where resumed training picks up.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::model::{NetConfig, StegoModel};
use super::unet::{Resample, StageSpec, UNet};

pub const MAGIC: &[u8; 4] = b"STGO";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: StegoModel<T>,
    pub epoch: usize,
}

fn u32_of(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v).map(u32::to_le_bytes).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in 32 bits")))
}

pub fn encode_checkpoint<T: Scalar>(model: &StegoModel<T>, epoch: usize) -> Result<Vec<u8>> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(64 + 8 * model.params().len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend(u32_of(cfg.base, "base")?);
    out.push(cfg.use_mcot as u8);
    out.extend(u32_of(cfg.mlp_hidden, "mlp_hidden")?);
    out.extend(u32_of(epoch, "epoch")?);
    out.extend(model.noise_seed().to_le_bytes());
    for net in [model.hide_net(), model.reveal_net()] {
        out.extend(u32_of(net.stages().len(), "stage count")?);
        for s in net.stages() {
            out.extend(u32_of(s.in_channels, "channels")?);
            out.extend(u32_of(s.out_channels, "channels")?);
            out.extend(u32_of(s.kernel, "kernel")?);
            out.push(s.resample.code());
        }
    }
    out.extend((model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend(p.to_le_f64_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("checkpoint ends inside {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic { expected: "STGO" });
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let base = r.u32("header")?;
    let use_mcot = match r.u8("header")? {
        0 => false,
        1 => true,
        v => return Err(Error::ModelMismatch(format!("transport flag must be 0 or 1, got {v}"))),
    };
    let mlp_hidden = r.u32("header")?;
    let epoch = r.u32("header")?;
    let noise_seed = r.u64("header")?;
    let mut nets = Vec::with_capacity(2);
    for _ in 0..2 {
        let count = r.u32("stage list")?;
        if count > 64 {
            return Err(Error::ModelMismatch(format!("{count} stages")));
        }
        let mut stages = Vec::with_capacity(count);
        for _ in 0..count {
            let in_channels = r.u32("stage list")?;
            let out_channels = r.u32("stage list")?;
            let kernel = r.u32("stage list")?;
            let code = r.u8("stage list")?;
            let resample = Resample::from_code(code)
                .ok_or_else(|| Error::ModelMismatch(format!("unknown resample code {code}")))?;
            stages.push(StageSpec { in_channels, out_channels, kernel, resample });
        }
        nets.push(UNet::from_stages(stages)?);
    }
    let n = r.u64("parameter count")?;
    let remaining = (bytes.len() - r.pos) as u64;
    if n.checked_mul(8) != Some(remaining) {
        return Err(Error::Truncated(format!("{n} parameters declared, {remaining} bytes follow")));
    }
    let params = r
        .take(remaining as usize, "parameters")?
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    let reveal = nets.pop().expect("two nets");
    let hide = nets.pop().expect("two nets");
    let model = StegoModel::from_parts(NetConfig { base, use_mcot, mlp_hidden }, hide, reveal, noise_seed, params)?;
    Ok(Checkpoint { model, epoch })
}

pub fn save_checkpoint<T: Scalar>(model: &StegoModel<T>, epoch: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model, epoch)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn round_trip_is_exact() {
        for use_mcot in [true, false] {
            let cfg = NetConfig { base: 4, use_mcot, mlp_hidden: 3 };
            let model = StegoModel::<f64>::new(cfg, &mut SeededRng::new(1)).unwrap();
            let bytes = encode_checkpoint(&model, 7).unwrap();
            let back: Checkpoint<f64> = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back.epoch, 7);
            assert_eq!(back.model, model);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let model = StegoModel::<f64>::new(NetConfig { base: 2, use_mcot: true, mlp_hidden: 2 }, &mut SeededRng::new(2)).unwrap();
        let bytes = encode_checkpoint(&model, 0).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint::<f64>(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_checkpoint::<f64>(&bad), Err(Error::UnsupportedVersion(9))));
        assert!(matches!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));
        let mut bad = bytes.clone();
        bad[5] = 4; // base width no longer matches the stage lists
        assert!(matches!(decode_checkpoint::<f64>(&bad), Err(Error::ModelMismatch(_))));
    }
}
