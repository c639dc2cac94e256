//! Bit-exact binary persistence with incremental append.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CBMS"
//!      4     4  format version (currently 1)
//!      8     8  recall_size
//!     16     8  cue_capacity
//!     24     8  learned_count
//!     32     1  precision tag (0 = f64, 1 = f32)
//!     33     3  reserved, zero
//!     36     4  CRC-32 over the whole body
//!     40     8  theta
//!     48     8  threshold
//!     56     8  eps_w
//!     64     8  eps_v
//!     72     8  init_weight
//!     80     -  body: learned_count records
//! ```
//!
//! Each body record is `cue_id: u64`, `pattern_id: u64`, `learned: u8`
//! (always 1; unlearned cues are implicit in the capacity), then the `w`
//! and `v` rows at the tagged width. Weight bytes are the exact bit
//! patterns of the in-memory values, so a load reproduces the store bit
//! for bit.
//!
//! Appending never rewrites an existing record byte: new records go on the
//! end, and only the header's learned count and checksum change. The
//! existing body is re-checksummed on the way, so corruption is caught
//! before the file is touched.

use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

use crate::memory::{CueRecord, Hyperparams, MemoryError, MemoryStore};
use crate::precision::{Precision, Real};

const MAGIC: [u8; 4] = *b"CBMS";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 80;
const RECORD_PREFIX_LEN: usize = 17; // cue_id + pattern_id + learned flag

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O failed: {0}")]
    Io(#[from] io::Error),
    #[error("not a memory store file (magic {found:?})")]
    BadMagic { found: [u8; 4] },
    #[error("store format version {found} is not supported (this build reads {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("unknown precision tag {tag}")]
    UnknownPrecision { tag: u8 },
    #[error("store holds {file} weights but {requested} was requested")]
    PrecisionMismatch {
        file: Precision,
        requested: Precision,
    },
    #[error("store file truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error(
        "store body checksum mismatch: header says {stored:#010x}, body hashes to {computed:#010x}"
    )]
    BadChecksum { stored: u32, computed: u32 },
    #[error("cue {cue_id} appears more than once")]
    DuplicateCue { cue_id: u64 },
    #[error("record for cue {cue_id} is malformed")]
    CorruptRecord { cue_id: u64 },
    #[error(transparent)]
    Malformed(#[from] MemoryError),
}

/// Header contents of a store file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreMeta {
    pub version: u32,
    pub recall_size: usize,
    pub cue_capacity: usize,
    pub learned_count: usize,
    pub precision: Precision,
    pub params: Hyperparams,
    pub checksum: u32,
}

fn encode_header(meta: &StoreMeta) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    LittleEndian::write_u32(&mut h[4..8], meta.version);
    LittleEndian::write_u64(&mut h[8..16], meta.recall_size as u64);
    LittleEndian::write_u64(&mut h[16..24], meta.cue_capacity as u64);
    LittleEndian::write_u64(&mut h[24..32], meta.learned_count as u64);
    h[32] = meta.precision.tag();
    LittleEndian::write_u32(&mut h[36..40], meta.checksum);
    LittleEndian::write_f64(&mut h[40..48], meta.params.theta);
    LittleEndian::write_f64(&mut h[48..56], meta.params.threshold);
    LittleEndian::write_f64(&mut h[56..64], meta.params.eps_w);
    LittleEndian::write_f64(&mut h[64..72], meta.params.eps_v);
    LittleEndian::write_f64(&mut h[72..80], meta.params.init_weight);
    h
}

fn decode_header(h: &[u8; HEADER_LEN]) -> Result<StoreMeta, StoreError> {
    if h[0..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&h[0..4]);
        return Err(StoreError::BadMagic { found });
    }
    let version = LittleEndian::read_u32(&h[4..8]);
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let precision =
        Precision::from_tag(h[32]).ok_or(StoreError::UnknownPrecision { tag: h[32] })?;
    Ok(StoreMeta {
        version,
        recall_size: LittleEndian::read_u64(&h[8..16]) as usize,
        cue_capacity: LittleEndian::read_u64(&h[16..24]) as usize,
        learned_count: LittleEndian::read_u64(&h[24..32]) as usize,
        precision,
        params: Hyperparams {
            theta: LittleEndian::read_f64(&h[40..48]),
            threshold: LittleEndian::read_f64(&h[48..56]),
            eps_w: LittleEndian::read_f64(&h[56..64]),
            eps_v: LittleEndian::read_f64(&h[64..72]),
            init_weight: LittleEndian::read_f64(&h[72..80]),
        },
        checksum: LittleEndian::read_u32(&h[36..40]),
    })
}

fn record_len<F: Real>(recall_size: usize) -> usize {
    RECORD_PREFIX_LEN + 2 * recall_size * F::BYTES
}

fn encode_record<F: Real>(rec: &CueRecord<F>, buf: &mut [u8]) {
    LittleEndian::write_u64(&mut buf[0..8], rec.cue_id);
    LittleEndian::write_u64(&mut buf[8..16], rec.pattern_id);
    buf[16] = 1;
    let b = F::BYTES;
    let mut at = RECORD_PREFIX_LEN;
    for row in [&rec.w, &rec.v] {
        for &x in row.iter() {
            x.write_le(&mut buf[at..at + b]);
            at += b;
        }
    }
}

fn decode_record<F: Real>(buf: &[u8], recall_size: usize) -> Result<CueRecord<F>, StoreError> {
    let cue_id = LittleEndian::read_u64(&buf[0..8]);
    let pattern_id = LittleEndian::read_u64(&buf[8..16]);
    if buf[16] != 1 {
        return Err(StoreError::CorruptRecord { cue_id });
    }
    let b = F::BYTES;
    let mut at = RECORD_PREFIX_LEN;
    let mut read_row = || {
        let mut row = Vec::with_capacity(recall_size);
        for _ in 0..recall_size {
            row.push(F::read_le(&buf[at..at + b]));
            at += b;
        }
        row
    };
    let w = read_row();
    let v = read_row();
    Ok(CueRecord {
        cue_id,
        pattern_id,
        w,
        v,
    })
}

fn expected_file_len(learned_count: usize, record_len: usize) -> Result<u64, StoreError> {
    (learned_count as u64)
        .checked_mul(record_len as u64)
        .and_then(|body| body.checked_add(HEADER_LEN as u64))
        .ok_or(StoreError::Truncated {
            expected: u64::MAX,
            actual: 0,
        })
}

/// Writes the whole store to `path`, replacing any existing file. The body
/// streams through a fixed-size buffer, so full-scale stores never sit in
/// memory twice.
pub fn save<F: Real>(
    store: &MemoryStore<F>,
    path: impl AsRef<Path>,
) -> Result<StoreMeta, StoreError> {
    let mut file = File::create(path)?;
    let rec_len = record_len::<F>(store.recall_size());
    let mut hasher = crc32fast::Hasher::new();
    let mut buf = vec![0u8; rec_len];
    {
        let mut w = BufWriter::new(&mut file);
        w.write_all(&[0u8; HEADER_LEN])?;
        for rec in store.records() {
            encode_record(rec, &mut buf);
            hasher.update(&buf);
            w.write_all(&buf)?;
        }
        w.flush()?;
    }
    let meta = StoreMeta {
        version: FORMAT_VERSION,
        recall_size: store.recall_size(),
        cue_capacity: store.cue_capacity(),
        learned_count: store.learned_count(),
        precision: F::PRECISION,
        params: *store.params(),
        checksum: hasher.finalize(),
    };
    file.seek(SeekFrom::Start(0))?;
    file.write_all(&encode_header(&meta))?;
    file.sync_all()?;
    Ok(meta)
}

/// Reads just the header: enough to learn the precision, shape and
/// hyperparameters without touching the body. The checksum is reported,
/// not verified.
pub fn read_meta(path: impl AsRef<Path>) -> Result<StoreMeta, StoreError> {
    let mut file = File::open(path)?;
    let len = file.metadata()?.len();
    if len < HEADER_LEN as u64 {
        return Err(StoreError::Truncated {
            expected: HEADER_LEN as u64,
            actual: len,
        });
    }
    let mut h = [0u8; HEADER_LEN];
    file.read_exact(&mut h)?;
    decode_header(&h)
}

/// Loads a store saved at width `F`, verifying the body checksum. Records
/// are accepted in any on-disk order and sorted by cue id.
pub fn load<F: Real>(path: impl AsRef<Path>) -> Result<MemoryStore<F>, StoreError> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut reader = BufReader::new(file);
    if file_len < HEADER_LEN as u64 {
        return Err(StoreError::Truncated {
            expected: HEADER_LEN as u64,
            actual: file_len,
        });
    }
    let mut h = [0u8; HEADER_LEN];
    reader.read_exact(&mut h)?;
    let meta = decode_header(&h)?;
    if meta.precision != F::PRECISION {
        return Err(StoreError::PrecisionMismatch {
            file: meta.precision,
            requested: F::PRECISION,
        });
    }
    let rec_len = record_len::<F>(meta.recall_size);
    let expected = expected_file_len(meta.learned_count, rec_len)?;
    if file_len != expected {
        return Err(StoreError::Truncated {
            expected,
            actual: file_len,
        });
    }

    let mut hasher = crc32fast::Hasher::new();
    let mut buf = vec![0u8; rec_len];
    let mut records = Vec::with_capacity(meta.learned_count);
    for _ in 0..meta.learned_count {
        reader.read_exact(&mut buf)?;
        hasher.update(&buf);
        records.push(decode_record::<F>(&buf, meta.recall_size)?);
    }
    let computed = hasher.finalize();
    if computed != meta.checksum {
        return Err(StoreError::BadChecksum {
            stored: meta.checksum,
            computed,
        });
    }

    records.sort_by_key(|r: &CueRecord<F>| r.cue_id);
    for pair in records.windows(2) {
        if pair[0].cue_id == pair[1].cue_id {
            return Err(StoreError::DuplicateCue {
                cue_id: pair[0].cue_id,
            });
        }
    }
    Ok(MemoryStore::from_parts(
        meta.params,
        meta.recall_size,
        meta.cue_capacity,
        records,
    )?)
}

/// Appends freshly learned records to an existing store file.
///
/// The existing body is streamed once to re-verify its checksum and
/// collect cue ids; nothing is written unless that passes and none of the
/// new ids collide. Existing record bytes are never rewritten — only the
/// header's learned count and checksum change.
pub fn append_learned<F: Real>(
    path: impl AsRef<Path>,
    records: &[CueRecord<F>],
) -> Result<StoreMeta, StoreError> {
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let file_len = file.metadata()?.len();
    if file_len < HEADER_LEN as u64 {
        return Err(StoreError::Truncated {
            expected: HEADER_LEN as u64,
            actual: file_len,
        });
    }
    let mut h = [0u8; HEADER_LEN];
    file.read_exact(&mut h)?;
    let meta = decode_header(&h)?;
    if meta.precision != F::PRECISION {
        return Err(StoreError::PrecisionMismatch {
            file: meta.precision,
            requested: F::PRECISION,
        });
    }
    let rec_len = record_len::<F>(meta.recall_size);
    let expected = expected_file_len(meta.learned_count, rec_len)?;
    if file_len != expected {
        return Err(StoreError::Truncated {
            expected,
            actual: file_len,
        });
    }

    // Validate the new batch against the header's shape before reading the
    // body: cheap failures first.
    for (i, rec) in records.iter().enumerate() {
        if rec.cue_id >= meta.cue_capacity as u64 {
            return Err(MemoryError::IndexOutOfRange {
                cue_id: rec.cue_id,
                capacity: meta.cue_capacity,
            }
            .into());
        }
        for row in [&rec.w, &rec.v] {
            if row.len() != meta.recall_size {
                return Err(MemoryError::RowLengthMismatch {
                    cue_id: rec.cue_id,
                    expected: meta.recall_size,
                    actual: row.len(),
                }
                .into());
            }
        }
        for other in &records[..i] {
            if other.cue_id == rec.cue_id {
                return Err(StoreError::DuplicateCue { cue_id: rec.cue_id });
            }
        }
    }

    let mut hasher = crc32fast::Hasher::new();
    let mut buf = vec![0u8; rec_len];
    let mut existing_ids = Vec::with_capacity(meta.learned_count);
    {
        let mut reader = BufReader::new(&mut file);
        for _ in 0..meta.learned_count {
            reader.read_exact(&mut buf)?;
            hasher.update(&buf);
            existing_ids.push(LittleEndian::read_u64(&buf[0..8]));
        }
    }
    let computed = hasher.clone().finalize();
    if computed != meta.checksum {
        return Err(StoreError::BadChecksum {
            stored: meta.checksum,
            computed,
        });
    }
    for rec in records {
        if existing_ids.contains(&rec.cue_id) {
            return Err(StoreError::DuplicateCue { cue_id: rec.cue_id });
        }
    }

    file.seek(SeekFrom::End(0))?;
    {
        let mut w = BufWriter::new(&mut file);
        for rec in records {
            encode_record(rec, &mut buf);
            hasher.update(&buf);
            w.write_all(&buf)?;
        }
        w.flush()?;
    }
    let meta = StoreMeta {
        learned_count: meta.learned_count + records.len(),
        checksum: hasher.finalize(),
        ..meta
    };
    file.seek(SeekFrom::Start(0))?;
    file.write_all(&encode_header(&meta))?;
    file.sync_all()?;
    Ok(meta)
}
