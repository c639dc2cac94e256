//! IDX image ingestion and pattern preparation.
//!
//! Raw images are u8 grids in the IDX3 container (big-endian header, magic
//! 0x00000803). Before storage each image is scaled so its components'
//! squares sum to one; that puts every pattern on the unit sphere and makes
//! responses comparable across images of different total brightness. The
//! original pixels and their Euclidean norm travel with the pattern so a
//! reconstruction can be requantized back to bytes.

use byteorder::{BigEndian, ByteOrder};
use thiserror::Error;

use crate::precision::Real;

const IDX3_MAGIC: u32 = 0x0000_0803;
const IDX3_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("not an IDX image file (magic 0x{magic:08x})")]
    BadMagic { magic: u32 },
    #[error("file truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("image dimensions overflow the address space")]
    SizeOverflow,
    #[error("image {index} is out of range (set holds {count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("cannot normalize an all-zero image")]
    ZeroImage,
    #[error("raw pixel count {actual} does not match {expected} components")]
    LengthMismatch { expected: usize, actual: usize },
}

/// A set of same-sized u8 images, stored as one flat pixel buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImageSet {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    // Bytes past the promised payload in the source file. Kept so callers
    // can warn; everything else ignores them.
    trailing_bytes: usize,
}

impl RawImageSet {
    /// Wraps a flat pixel buffer. `pixels.len()` must be a multiple of
    /// `rows * cols`.
    pub fn from_pixels(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self, IngestError> {
        let image_len = rows.checked_mul(cols).ok_or(IngestError::SizeOverflow)?;
        if image_len == 0 || !pixels.len().is_multiple_of(image_len) {
            return Err(IngestError::Truncated {
                expected: pixels.len().next_multiple_of(image_len.max(1)),
                actual: pixels.len(),
            });
        }
        Ok(RawImageSet {
            rows,
            cols,
            pixels,
            trailing_bytes: 0,
        })
    }

    pub fn count(&self) -> usize {
        self.pixels.len() / self.image_len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pixels per image.
    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    /// Bytes the source file carried beyond the promised payload.
    pub fn trailing_bytes(&self) -> usize {
        self.trailing_bytes
    }

    pub fn image(&self, index: usize) -> Result<&[u8], IngestError> {
        let len = self.image_len();
        let count = self.count();
        if index >= count {
            return Err(IngestError::IndexOutOfRange { index, count });
        }
        Ok(&self.pixels[index * len..(index + 1) * len])
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.pixels.chunks_exact(self.image_len())
    }

    /// Mean over images of the per-image pixel sum.
    pub fn mean_total_intensity(&self) -> f64 {
        if self.count() == 0 {
            return 0.0;
        }
        let total: u64 = self.pixels.iter().map(|&p| p as u64).sum();
        total as f64 / self.count() as f64
    }

    /// Serializes back to the IDX3 container (trailing bytes are not
    /// reproduced).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; IDX3_HEADER_LEN + self.pixels.len()];
        BigEndian::write_u32(&mut out[0..4], IDX3_MAGIC);
        BigEndian::write_u32(&mut out[4..8], self.count() as u32);
        BigEndian::write_u32(&mut out[8..12], self.rows as u32);
        BigEndian::write_u32(&mut out[12..16], self.cols as u32);
        out[IDX3_HEADER_LEN..].copy_from_slice(&self.pixels);
        out
    }
}

/// Parses an IDX3 image file. A payload shorter than the header promises
/// is an error; extra bytes after it are tolerated and surfaced through
/// [`RawImageSet::trailing_bytes`].
pub fn parse_idx(bytes: &[u8]) -> Result<RawImageSet, IngestError> {
    if bytes.len() < IDX3_HEADER_LEN {
        return Err(IngestError::Truncated {
            expected: IDX3_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic = BigEndian::read_u32(&bytes[0..4]);
    if magic != IDX3_MAGIC {
        return Err(IngestError::BadMagic { magic });
    }
    let count = BigEndian::read_u32(&bytes[4..8]) as usize;
    let rows = BigEndian::read_u32(&bytes[8..12]) as usize;
    let cols = BigEndian::read_u32(&bytes[12..16]) as usize;
    if rows == 0 || cols == 0 {
        return Err(IngestError::SizeOverflow);
    }
    let pixel_len = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .and_then(|n| n.checked_add(IDX3_HEADER_LEN))
        .ok_or(IngestError::SizeOverflow)?;
    if bytes.len() < pixel_len {
        return Err(IngestError::Truncated {
            expected: pixel_len,
            actual: bytes.len(),
        });
    }
    let mut set = RawImageSet::from_pixels(rows, cols, bytes[IDX3_HEADER_LEN..pixel_len].to_vec())?;
    set.trailing_bytes = bytes.len() - pixel_len;
    Ok(set)
}

/// A pattern vector, optionally still carrying its source pixels.
///
/// Patterns produced by [`normalize`] satisfy the unit-sphere restriction;
/// probe-only patterns (partial probes, synthetic vectors, unlearned
/// reconstructions) are exempt and flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern<F: Real> {
    values: Vec<F>,
    raw: Option<Vec<u8>>,
    // Euclidean norm of the raw pixels; the scale that maps values back to bytes.
    raw_norm: Option<f64>,
    sum: f64,
    norm_sq: f64,
    probe_only: bool,
}

fn sums<F: Real>(values: &[F]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut norm_sq = 0.0;
    for v in values {
        let x = v.as_f64();
        sum += x;
        norm_sq += x * x;
    }
    (sum, norm_sq)
}

impl<F: Real> Pattern<F> {
    fn assemble(
        values: Vec<F>,
        raw: Option<Vec<u8>>,
        raw_norm: Option<f64>,
        probe_only: bool,
    ) -> Self {
        let (sum, norm_sq) = sums(&values);
        Pattern {
            values,
            raw,
            raw_norm,
            sum,
            norm_sq,
            probe_only,
        }
    }

    /// Wraps arbitrary components, e.g. a synthetic probe. No raw pixels;
    /// flagged probe-only.
    pub fn from_values(values: Vec<F>) -> Self {
        Pattern::assemble(values, None, None, true)
    }

    /// Pairs components with an 8-bit rendering of them, as produced by
    /// [`crate::metrics::quantize_to_u8`]. The raw norm is recomputed from
    /// the given pixels.
    pub fn with_raw(values: Vec<F>, raw: Vec<u8>) -> Result<Self, IngestError> {
        if raw.len() != values.len() {
            return Err(IngestError::LengthMismatch {
                expected: values.len(),
                actual: raw.len(),
            });
        }
        let sum_sq: u64 = raw.iter().map(|&p| (p as u64) * (p as u64)).sum();
        let norm = (sum_sq as f64).sqrt();
        Ok(Pattern::assemble(values, Some(raw), Some(norm), true))
    }

    pub(crate) fn reconstructed(values: Vec<F>, probe_only: bool) -> Self {
        Pattern::assemble(values, None, None, probe_only)
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn into_values(self) -> Vec<F> {
        self.values
    }

    pub fn raw(&self) -> Option<&[u8]> {
        self.raw.as_deref()
    }

    pub fn raw_norm(&self) -> Option<f64> {
        self.raw_norm
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Component sum, accumulated in f64 at construction.
    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// Sum of squared components, accumulated in f64 at construction.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// True for patterns exempt from the unit-norm restriction.
    pub fn probe_only(&self) -> bool {
        self.probe_only
    }

    /// True when the squared norm sits within the width's tolerance of one.
    pub fn is_normalized(&self) -> bool {
        (self.norm_sq - 1.0).abs() <= F::NORM_TOL.as_f64()
    }
}

/// Scales raw pixels onto the unit sphere: component j becomes
/// `raw[j] / sqrt(sum of raw squares)`. The division runs in f64 and each
/// quotient is then rounded once to the target width.
pub fn normalize<F: Real>(raw: &[u8]) -> Result<Pattern<F>, IngestError> {
    let sum_sq: u64 = raw.iter().map(|&p| (p as u64) * (p as u64)).sum();
    if sum_sq == 0 {
        return Err(IngestError::ZeroImage);
    }
    let norm = (sum_sq as f64).sqrt();
    let values = raw.iter().map(|&p| F::of(p as f64 / norm)).collect();
    Ok(Pattern::assemble(
        values,
        Some(raw.to_vec()),
        Some(norm),
        false,
    ))
}

/// Which half of a pattern a partial probe keeps. Halves split the flat
/// component order, so for row-major images Upper is the top half of the
/// picture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HalfRegion {
    Upper,
    Lower,
}

/// Zeroes the half of `pattern` that `keep` does not name. Kept components
/// are copied bit-exactly and nothing is renormalized, so an Upper and a
/// Lower probe of the same pattern sum back to it. The result is flagged
/// probe-only.
pub fn partial_probe<F: Real>(pattern: &Pattern<F>, keep: HalfRegion) -> Pattern<F> {
    let n = pattern.values.len();
    let mid = n / 2;
    let kept = match keep {
        HalfRegion::Upper => 0..mid,
        HalfRegion::Lower => mid..n,
    };
    let mut values = vec![F::zero(); n];
    values[kept.clone()].copy_from_slice(&pattern.values[kept.clone()]);
    let raw = pattern.raw.as_ref().map(|raw| {
        let mut masked = vec![0u8; raw.len()];
        masked[kept.clone()].copy_from_slice(&raw[kept]);
        masked
    });
    // Kept components still carry the full image's scale, so the original
    // raw norm stays attached.
    Pattern::assemble(values, raw, pattern.raw_norm, true)
}

/// Ink mask of a pattern: raw pixel > 0 where raw pixels exist, else
/// component > 0.
pub fn binarize<F: Real>(pattern: &Pattern<F>) -> Vec<bool> {
    match &pattern.raw {
        Some(raw) => raw.iter().map(|&p| p > 0).collect(),
        None => binarize_above(&pattern.values, F::zero()),
    }
}

/// Mask of components strictly above `threshold`.
pub fn binarize_above<F: Real>(values: &[F], threshold: F) -> Vec<bool> {
    values.iter().map(|&v| v > threshold).collect()
}
