//! Binary model file.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic          8 bytes  "NOMALSTM"
//! format_version u32
//! scheme u8, user u8, reserved u16
//! n              u32
//! frames u64, batch u64, lr f64, snr_lo f64, snr_hi f64, seed u64,
//! sigma1_sq f64, sigma2_sq f64, p1 f64, p2 f64
//! tensor count   u32, then per tensor: rank u32, dims u32 * rank
//! param count    u64, then f64 * count (tensors in network order)
//! trace length   u64, then f64 * length
//! crc32          u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{ModelArtifact, TrainConfig};
use crate::channel::PowerConfig;
use crate::error::{Error, Result};
use crate::framing::{Scheme, User};
use crate::neural::{Network, Tensor};

pub const MAGIC: &[u8; 8] = b"NOMALSTM";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(artifact: &ModelArtifact) -> Vec<u8> {
    let mut out = Vec::new();
    let c = &artifact.config;
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match c.scheme {
        Scheme::TwoSlot => 0,
        Scheme::ThreeSlot => 1,
    });
    out.push(match c.user {
        User::Ue1 => 0,
        User::Ue2 => 1,
    });
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(c.n as u32).to_le_bytes());
    out.extend_from_slice(&c.frames.to_le_bytes());
    out.extend_from_slice(&(c.batch as u64).to_le_bytes());
    for v in [c.lr, c.snr_db_range.0, c.snr_db_range.1] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    for v in [c.sigma1_sq, c.sigma2_sq, c.power.p1, c.power.p2] {
        out.extend_from_slice(&v.to_le_bytes());
    }

    let params = artifact.net.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for t in &params {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    let count: usize = params.iter().map(|t| t.len()).sum();
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for t in &params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(artifact.training_loss_trace.len() as u64).to_le_bytes());
    for v in &artifact.training_loss_trace {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64()?;
        // Every counted item is at least one f64.
        if n > (self.buf.len() - self.pos) as u64 / 8 {
            return Err(Error::Corrupt(format!(
                "{what} count {n} exceeds file size"
            )));
        }
        Ok(n as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelArtifact> {
    if bytes.len() < MAGIC.len() + 4 + 4 {
        return Err(Error::Corrupt("truncated".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(Error::Corrupt(
            "checksum mismatch (truncated or modified file)".into(),
        ));
    }

    let mut r = Reader { buf: body, pos: 12 };
    let scheme = match r.u8()? {
        0 => Scheme::TwoSlot,
        1 => Scheme::ThreeSlot,
        s => return Err(Error::Corrupt(format!("unknown scheme tag {s}"))),
    };
    let user = match r.u8()? {
        0 => User::Ue1,
        1 => User::Ue2,
        u => return Err(Error::Corrupt(format!("unknown user tag {u}"))),
    };
    let _reserved = r.u16()?;
    let n = r.u32()? as usize;
    let frames = r.u64()?;
    let batch = r.u64()? as usize;
    let lr = r.f64()?;
    let snr_db_range = (r.f64()?, r.f64()?);
    let seed = r.u64()?;
    let sigma1_sq = r.f64()?;
    let sigma2_sq = r.f64()?;
    let power = PowerConfig {
        p1: r.f64()?,
        p2: r.f64()?,
    };
    let config = TrainConfig {
        scheme,
        user,
        n,
        frames,
        batch,
        lr,
        snr_db_range,
        seed,
        sigma1_sq,
        sigma2_sq,
        power,
    };

    let tensors = r.u32()? as usize;
    if tensors != 8 {
        return Err(Error::Corrupt(format!(
            "expected 8 tensors, header says {tensors}"
        )));
    }
    let mut shapes = Vec::with_capacity(tensors);
    for _ in 0..tensors {
        let rank = r.u32()? as usize;
        if rank == 0 || rank > 2 {
            return Err(Error::Corrupt(format!("tensor rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        shapes.push(dims);
    }
    let count = r.len("parameter")?;
    let declared: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if declared != count {
        return Err(Error::Corrupt(format!(
            "shape table covers {declared} parameters, blob has {count}"
        )));
    }
    let mut params = Vec::with_capacity(tensors);
    for shape in &shapes {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        params.push(Tensor::from_vec(shape, data)?);
    }
    let net = Network::from_params(params).map_err(|e| Error::Corrupt(e.to_string()))?;
    if net.input_dim() != scheme.feature_dim() || net.output_dim() != 2 {
        return Err(Error::Corrupt(format!(
            "network shape {}->{} does not fit the {} scheme",
            net.input_dim(),
            net.output_dim(),
            scheme.name()
        )));
    }
    let trace_len = r.len("trace")?;
    let trace = (0..trace_len)
        .map(|_| r.f64())
        .collect::<Result<Vec<_>>>()?;
    if r.pos != body.len() {
        return Err(Error::Corrupt("trailing bytes".into()));
    }
    Ok(ModelArtifact {
        net,
        config,
        format_version: version,
        training_loss_trace: trace,
    })
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    let bytes = encode(artifact);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelArtifact> {
    decode(&fs::read(path)?)
}
