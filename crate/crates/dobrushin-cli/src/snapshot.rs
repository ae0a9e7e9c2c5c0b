//! Bit-packed snapshot files.
//!
//! A file starts with a preamble and is followed by zero or more records.
//! All integers are little-endian.
//!
//! Preamble:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 8     | magic `DOBRSNPF`                        |
//! | 4     | format version (`1`)                    |
//! | 2     | length `L` of the tool version string   |
//! | L     | tool version (UTF-8)                    |
//! | 32    | SHA-256 of the producing config         |
//! | 8     | seed                                    |
//!
//! Record:
//!
//! | bytes | field                                             |
//! |-------|---------------------------------------------------|
//! | 4     | magic `SNAP`                                      |
//! | 4     | format version (`1`)                              |
//! | 24    | box: `x_lo, x_hi, y_lo, y_hi, z_lo, z_hi` as i32  |
//! | 8     | β as IEEE-754 f64                                 |
//! | 8     | seed                                              |
//! | 8     | replica                                           |
//! | 8     | sweep index                                       |
//! | 8     | number of cells `N`                               |
//! | 32    | SHA-256 of the payload                            |
//! | ⌈N/8⌉ | spins, 1 bit per cell (1 = plus) in canonical cell order, least significant bit first |

use std::path::Path;

use dobrushin::ising::SpinConfig;
use dobrushin::lattice::BoxDims;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const FILE_MAGIC: &[u8; 8] = b"DOBRSNPF";
pub const RECORD_MAGIC: &[u8; 4] = b"SNAP";
pub const FORMAT_VERSION: u32 = 1;

/// One stored configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub beta: f64,
    pub seed: u64,
    pub replica: u64,
    pub sweep: u64,
    pub config: SpinConfig,
}

/// A decoded snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub tool_version: String,
    pub config_hash: [u8; 32],
    pub seed: u64,
    pub records: Vec<Snapshot>,
}

/// Pack spins into bits in canonical cell order.
pub fn pack(config: &SpinConfig) -> Vec<u8> {
    let spins = config.spins();
    let mut out = vec![0u8; spins.len().div_ceil(8)];
    for (k, &s) in spins.iter().enumerate() {
        if s == 1 {
            out[k / 8] |= 1 << (k % 8);
        }
    }
    out
}

/// Unpack `n` spins.
pub fn unpack(dims: BoxDims, bytes: &[u8]) -> Result<SpinConfig, String> {
    let n = dims.cell_count();
    if bytes.len() != n.div_ceil(8) {
        return Err(format!("payload has {} bytes, expected {}", bytes.len(), n.div_ceil(8)));
    }
    let spins = (0..n)
        .map(|k| if bytes[k / 8] >> (k % 8) & 1 == 1 { 1 } else { -1 })
        .collect();
    SpinConfig::from_spins(dims, spins).map_err(|e| e.to_string())
}

/// Serialise the preamble.
pub fn encode_preamble(tool_version: &str, config_hash: &[u8; 32], seed: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(FILE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tool_version.len() as u16).to_le_bytes());
    out.extend_from_slice(tool_version.as_bytes());
    out.extend_from_slice(config_hash);
    out.extend_from_slice(&seed.to_le_bytes());
    out
}

/// Serialise one record.
pub fn encode_record(s: &Snapshot) -> Vec<u8> {
    let d = s.config.dims();
    let payload = pack(&s.config);
    let mut out = Vec::with_capacity(112 + payload.len());
    out.extend_from_slice(RECORD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [d.x_lo, d.x_hi, d.y_lo, d.y_hi, d.z_lo, d.z_hi] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&s.beta.to_bits().to_le_bytes());
    for v in [s.seed, s.replica, s.sweep, d.cell_count() as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    out
}

/// Serialise a whole file.
pub fn encode_file(f: &SnapshotFile) -> Vec<u8> {
    let mut out = encode_preamble(&f.tool_version, &f.config_hash, f.seed);
    for r in &f.records {
        out.extend(encode_record(r));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.take(2)?.try_into().ok()?))
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn i32(&mut self) -> Option<i32> {
        Some(i32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Decode a file image.
pub fn decode_file(bytes: &[u8]) -> Result<SnapshotFile, String> {
    let mut r = Reader { bytes, pos: 0 };
    let short = || "truncated preamble".to_string();
    if r.take(8).ok_or_else(short)? != FILE_MAGIC {
        return Err("not a snapshot file (bad magic)".into());
    }
    let version = r.u32().ok_or_else(short)?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let len = r.u16().ok_or_else(short)? as usize;
    let tool_version = String::from_utf8(r.take(len).ok_or_else(short)?.to_vec())
        .map_err(|_| "tool version is not UTF-8".to_string())?;
    let config_hash: [u8; 32] = r.take(32).ok_or_else(short)?.try_into().expect("32 bytes");
    let seed = r.u64().ok_or_else(short)?;
    let mut records = Vec::new();
    while r.pos < bytes.len() {
        let k = records.len();
        let short = || format!("record {k}: truncated header");
        if r.take(4).ok_or_else(short)? != RECORD_MAGIC {
            return Err(format!("record {k}: bad magic"));
        }
        let v = r.u32().ok_or_else(short)?;
        if v != FORMAT_VERSION {
            return Err(format!("record {k}: unsupported format version {v}"));
        }
        let mut b = [0i32; 6];
        for slot in &mut b {
            *slot = r.i32().ok_or_else(short)?;
        }
        let dims = BoxDims::general((b[0], b[1]), (b[2], b[3]), (b[4], b[5]))
            .map_err(|e| format!("record {k}: {e}"))?;
        let beta = f64::from_bits(r.u64().ok_or_else(short)?);
        let seed = r.u64().ok_or_else(short)?;
        let replica = r.u64().ok_or_else(short)?;
        let sweep = r.u64().ok_or_else(short)?;
        let n = r.u64().ok_or_else(short)? as usize;
        if n != dims.cell_count() {
            return Err(format!("record {k}: cell count {n} does not match the box"));
        }
        let checksum = r.take(32).ok_or_else(short)?;
        let available = (bytes.len() - r.pos).min(n.div_ceil(8));
        let payload = r.take(available).expect("in range");
        if Sha256::digest(payload).as_slice() != checksum {
            return Err(format!("record {k}: checksum mismatch"));
        }
        let config = unpack(dims, payload).map_err(|e| format!("record {k}: {e}"))?;
        records.push(Snapshot {
            beta,
            seed,
            replica,
            sweep,
            config,
        });
    }
    Ok(SnapshotFile {
        tool_version,
        config_hash,
        seed,
        records,
    })
}

/// Read and decode a snapshot file.
pub fn read(path: &Path) -> Result<SnapshotFile, CliError> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingArtifact(path.to_path_buf()),
        _ => CliError::io(path, e),
    })?;
    decode_file(&bytes).map_err(|reason| CliError::CorruptSnapshot {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dobrushin::Cell;

    fn sample() -> SnapshotFile {
        let d = BoxDims::lambda(2, 1, 2).unwrap();
        let col = SpinConfig::flat_with_plus(d, &[Cell::at(0, 0, 0), Cell::at(0, 0, 1)]).unwrap();
        SnapshotFile {
            tool_version: "0.1.0".into(),
            config_hash: [7; 32],
            seed: 9,
            records: vec![
                Snapshot { beta: 1.0, seed: 9, replica: 0, sweep: 3, config: SpinConfig::flat(d) },
                Snapshot { beta: 1.0, seed: 9, replica: 1, sweep: 4, config: col },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        assert_eq!(decode_file(&encode_file(&f)).unwrap(), f);
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = encode_file(&sample());
        let err = decode_file(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.contains("checksum"), "{err}");
    }

    #[test]
    fn flipped_bit_is_detected() {
        let mut bytes = encode_file(&sample());
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert!(decode_file(&bytes).unwrap_err().contains("checksum"));
    }

    #[test]
    fn packing_is_lsb_first() {
        let d = BoxDims::general((0, 0), (0, 0), (-1, 0)).unwrap();
        let c = SpinConfig::flat(d);
        // Canonical order puts the lower cell (plus) first.
        let bits = pack(&c);
        assert_eq!(bits.len(), 1);
        assert_eq!(bits[0].count_ones(), 1);
        assert_eq!(unpack(d, &bits).unwrap(), c);
    }
}
