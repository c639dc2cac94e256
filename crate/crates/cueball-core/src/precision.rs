//! Scalar abstraction so every kernel can run in either f64 or f32.
//!
//! The two widths are not interchangeable at the bit level: a store file
//! records which one produced it, and loading requires asking for the same
//! width back. [`Real`] carries the handful of width-specific facts the
//! rest of the crate needs (byte size, a normalization tolerance scaled to
//! the machine epsilon, little-endian serialization) on top of the usual
//! float arithmetic.

use std::fmt::{self, Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::AddAssign;
use std::str::FromStr;

use byteorder::{ByteOrder, LittleEndian};
use num_traits::Float;

/// Floating-point width usable by the memory kernels.
pub trait Real:
    Float + AddAssign + Sum + Send + Sync + Display + LowerExp + Debug + 'static
{
    /// Canonical name, as written by the CLI (`f64` / `f32`).
    const NAME: &'static str;
    /// Serialized size of one component.
    const BYTES: usize;
    /// |sum of squares - 1| at or below this counts as normalized.
    const NORM_TOL: Self;
    /// Store-file tag for this width.
    const PRECISION: Precision;

    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Raw bit pattern, for exactness assertions. f32 occupies the low 32 bits.
    fn bits(self) -> u64;
    /// Reads one component from the first `BYTES` of `buf`, little-endian.
    fn read_le(buf: &[u8]) -> Self;
    /// Writes one component into the first `BYTES` of `buf`, little-endian.
    fn write_le(self, buf: &mut [u8]);
}

impl Real for f64 {
    const NAME: &'static str = "f64";
    const BYTES: usize = 8;
    const NORM_TOL: f64 = 1e-9;
    const PRECISION: Precision = Precision::Double;

    #[inline]
    fn of(v: f64) -> f64 {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn bits(self) -> u64 {
        self.to_bits()
    }

    #[inline]
    fn read_le(buf: &[u8]) -> f64 {
        LittleEndian::read_f64(buf)
    }

    #[inline]
    fn write_le(self, buf: &mut [u8]) {
        LittleEndian::write_f64(buf, self);
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";
    const BYTES: usize = 4;
    const NORM_TOL: f32 = 1e-4;
    const PRECISION: Precision = Precision::Single;

    #[inline]
    fn of(v: f64) -> f32 {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn bits(self) -> u64 {
        self.to_bits() as u64
    }

    #[inline]
    fn read_le(buf: &[u8]) -> f32 {
        LittleEndian::read_f32(buf)
    }

    #[inline]
    fn write_le(self, buf: &mut [u8]) {
        LittleEndian::write_f32(buf, self);
    }
}

/// Width tag carried by store files and CLI flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    Double,
    Single,
}

impl Precision {
    /// Byte tag used in the store header. Double is 0 so that a zeroed
    /// header field still names the default width.
    pub fn tag(self) -> u8 {
        match self {
            Precision::Double => 0,
            Precision::Single => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Precision> {
        match tag {
            0 => Some(Precision::Double),
            1 => Some(Precision::Single),
            _ => None,
        }
    }

    /// Serialized size of one weight component at this width.
    pub fn bytes(self) -> usize {
        match self {
            Precision::Double => 8,
            Precision::Single => 4,
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Double => f.write_str("f64"),
            Precision::Single => f.write_str("f32"),
        }
    }
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Precision, String> {
        match s {
            "f64" => Ok(Precision::Double),
            "f32" => Ok(Precision::Single),
            other => Err(format!("unknown precision {other:?}, expected f32 or f64")),
        }
    }
}
