//! Binary containers for expert trajectories (`BTMT`) and Bezier surrogates
//! (`BTMB`). All numbers are little-endian; parameters are stored as `f32`
//! and the file ends with a CRC32 of everything before it.

use std::path::Path;

use btm_core::bezier::BezierPath;
use btm_core::ParamVector;

use crate::atomic::write_atomic;
use crate::error::{BtmError, Result};

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"BTMT";
pub const SURROGATE_MAGIC: [u8; 4] = *b"BTMB";
pub const FORMAT_VERSION: u32 = 1;

/// Decoded contents of a trajectory container.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPayload {
    pub checkpoints: Vec<ParamVector>,
    pub train_losses: Vec<f64>,
}

impl TrajectoryPayload {
    pub fn param_count(&self) -> usize {
        self.checkpoints.first().map_or(0, |c| c.len())
    }
}

fn push_f32s(buf: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn seal(mut buf: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn encode_trajectory(checkpoints: &[ParamVector], train_losses: &[f64]) -> Vec<u8> {
    let n = checkpoints.first().map_or(0, |c| c.len());
    let mut buf = Vec::with_capacity(24 + 4 * (n * checkpoints.len() + train_losses.len()));
    buf.extend_from_slice(&TRAJECTORY_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(checkpoints.len() as u32).to_le_bytes());
    for c in checkpoints {
        assert_eq!(c.len(), n, "checkpoints must share one dimension");
        push_f32s(&mut buf, c);
    }
    push_f32s(&mut buf, train_losses);
    seal(buf)
}

pub fn encode_surrogate(path: &BezierPath) -> Vec<u8> {
    let n = path.param_count();
    let mut buf = Vec::with_capacity(20 + 12 * n);
    buf.extend_from_slice(&SURROGATE_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    push_f32s(&mut buf, &path.theta0);
    push_f32s(&mut buf, &path.phi);
    push_f32s(&mut buf, &path.theta_t);
    seal(buf)
}

/// Why a container failed to decode.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("{0}")]
    Invalid(&'static str),
}

type DecodeResult<T> = std::result::Result<T, DecodeError>;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }

    fn f32s(&mut self, n: usize) -> Vec<f64> {
        self.take(4 * n)
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect()
    }
}

/// Checks magic, version, length and checksum; returns a reader positioned
/// after the version field.
fn open<'a>(bytes: &'a [u8], magic: [u8; 4], fixed_header: usize) -> DecodeResult<Reader<'a>> {
    if bytes.len() < 8 {
        return Err(DecodeError::Truncated {
            expected: fixed_header + 4,
            found: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(DecodeError::BadMagic(found));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    if bytes.len() < fixed_header + 4 {
        return Err(DecodeError::Truncated {
            expected: fixed_header + 4,
            found: bytes.len(),
        });
    }
    Ok(Reader { bytes, pos: 8 })
}

fn check_tail(bytes: &[u8], body_len: usize) -> DecodeResult<()> {
    let expected = body_len + 4;
    if bytes.len() != expected {
        return Err(DecodeError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(DecodeError::Checksum { stored, computed });
    }
    Ok(())
}

fn body_len(header: usize, floats: u64) -> DecodeResult<usize> {
    floats
        .checked_mul(4)
        .and_then(|b| b.checked_add(header as u64))
        .and_then(|b| usize::try_from(b).ok())
        .ok_or(DecodeError::Invalid("declared size overflows"))
}

pub fn decode_trajectory(bytes: &[u8]) -> DecodeResult<TrajectoryPayload> {
    const HEADER: usize = 4 + 4 + 8 + 4;
    let mut r = open(bytes, TRAJECTORY_MAGIC, HEADER)?;
    let n = r.u64();
    let count = u64::from(r.u32());
    let floats = n
        .checked_mul(count)
        .and_then(|f| f.checked_add(count))
        .ok_or(DecodeError::Invalid("declared size overflows"))?;
    check_tail(bytes, body_len(HEADER, floats)?)?;
    let n = n as usize;
    let checkpoints = (0..count).map(|_| ParamVector(r.f32s(n))).collect();
    let train_losses = r.f32s(count as usize);
    Ok(TrajectoryPayload {
        checkpoints,
        train_losses,
    })
}

pub fn decode_surrogate(bytes: &[u8]) -> DecodeResult<BezierPath> {
    const HEADER: usize = 4 + 4 + 8;
    let mut r = open(bytes, SURROGATE_MAGIC, HEADER)?;
    let n = r.u64();
    let floats = n.checked_mul(3).ok_or(DecodeError::Invalid("declared size overflows"))?;
    check_tail(bytes, body_len(HEADER, floats)?)?;
    let n = n as usize;
    let theta0 = ParamVector(r.f32s(n));
    let phi = ParamVector(r.f32s(n));
    let theta_t = ParamVector(r.f32s(n));
    BezierPath::new(theta0, phi, theta_t).map_err(|_| DecodeError::Invalid("inconsistent control points"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| BtmError::io(path, e))
}

pub fn write_trajectory(path: &Path, checkpoints: &[ParamVector], train_losses: &[f64]) -> Result<()> {
    write_atomic(path, &encode_trajectory(checkpoints, train_losses))
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryPayload> {
    decode_trajectory(&read_bytes(path)?).map_err(|e| BtmError::format(path, e.to_string()))
}

pub fn write_surrogate(path: &Path, surrogate: &BezierPath) -> Result<()> {
    write_atomic(path, &encode_surrogate(surrogate))
}

pub fn read_surrogate(path: &Path) -> Result<BezierPath> {
    decode_surrogate(&read_bytes(path)?).map_err(|e| BtmError::format(path, e.to_string()))
}

/// Rounds every value through `f32`, the precision of the containers.
pub fn to_f32_precision(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| f64::from(v as f32)).collect()
}
