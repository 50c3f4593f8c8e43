//! Fixed-rate lossy codec for 3D double-precision regions, plus a lossless
//! passthrough codec used as the correctness oracle.
//!
//! A region is split into 4x4x4 cells and every cell is coded independently
//! into exactly `64 * bits_per_value` bits, so payload sizes are known before
//! any data is seen. Per cell:
//!
//! 1. gather 64 values, replicating the last row/column/plane into partial cells;
//! 2. find the largest base-2 exponent `e` with `max |x| < 2^e`;
//! 3. quantize to `round(x * 2^(53 - e))` (the largest value keeps all 53
//!    significand bits);
//! 4. apply the two-level S-transform along x, then y, then z;
//! 5. reorder coefficients by total transform level and map to 58-bit negabinary;
//! 6. write a 16-bit exponent field followed by embedded bit planes, most
//!    significant first, stopping at the cell budget.
//!
//! See `docs/payload-format.md` for the byte layout.

mod bits;
mod fixed_rate;
mod transform;

use thiserror::Error;

pub use fixed_rate::{COEFF_PLANES, EXPONENT_BITS, ZERO_CELL_FLAG};
pub use transform::{
    lift_forward, lift_inverse, negabinary_map, negabinary_range, negabinary_unmap, LIFT_INPUT_LIMIT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("rate {0} outside [8, 64] bits per value")]
    InvalidRate(u32),
    #[error("region extents {0:?} must be >= 1 per axis")]
    EmptyRegion([usize; 3]),
    #[error("region extents {0:?} exceed the addressable cell grid")]
    RegionTooLarge([usize; 3]),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("input holds {actual} values, extents require {expected}")]
    InputLength { expected: usize, actual: usize },
    #[error("payload length {actual} bytes, expected {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error("lifting input exceeds guard-bit limit")]
    LiftOverflow,
}

/// Bits spent per value in fixed-rate mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rate(u32);

impl Rate {
    pub const MIN: u32 = 8;
    pub const MAX: u32 = 64;

    pub fn new(bits_per_value: u32) -> Result<Self, CodecError> {
        if (Self::MIN..=Self::MAX).contains(&bits_per_value) {
            Ok(Self(bits_per_value))
        } else {
            Err(CodecError::InvalidRate(bits_per_value))
        }
    }

    pub fn bits_per_value(self) -> u32 {
        self.0
    }

    /// Bits per 4x4x4 cell, exponent field included.
    pub fn cell_bits(self) -> usize {
        64 * self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Codec {
    FixedRate(Rate),
    Passthrough,
}

impl Codec {
    pub fn fixed_rate(bits_per_value: u32) -> Result<Self, CodecError> {
        Rate::new(bits_per_value).map(Codec::FixedRate)
    }

    pub fn is_lossless(&self) -> bool {
        matches!(self, Codec::Passthrough)
    }

    /// Payload size in bytes for a region of the given extents.
    pub fn payload_bytes(&self, extents: [usize; 3]) -> usize {
        match self {
            Codec::Passthrough => extents.iter().product::<usize>() * 8,
            Codec::FixedRate(rate) => cell_count(extents) * rate.cell_bits() / 8,
        }
    }
}

/// Cells per axis, rounding partial cells up.
pub fn cell_grid(extents: [usize; 3]) -> [usize; 3] {
    extents.map(|n| n.div_ceil(4))
}

pub fn cell_count(extents: [usize; 3]) -> usize {
    cell_grid(extents).iter().product()
}

/// Encoded region. `bytes` is the little-endian bit stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPayload {
    codec: Codec,
    extents: [usize; 3],
    bytes: Vec<u8>,
}

impl EncodedPayload {
    /// Reassembles a payload from its parts, e.g. after a transfer.
    pub fn from_parts(codec: Codec, extents: [usize; 3], bytes: Vec<u8>) -> Result<Self, CodecError> {
        let expected = codec.payload_bytes(extents);
        if bytes.len() != expected {
            return Err(CodecError::PayloadLength { expected, actual: bytes.len() });
        }
        Ok(Self { codec, extents, bytes })
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn cell_grid(&self) -> [usize; 3] {
        cell_grid(self.extents)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// In-place access for fixed-size write-back; the length cannot change.
    pub(crate) fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn decode(&self) -> Result<Vec<f64>, CodecError> {
        decode(self)
    }
}

fn check_region(extents: [usize; 3], len: usize) -> Result<(), CodecError> {
    if extents.contains(&0) {
        return Err(CodecError::EmptyRegion(extents));
    }
    let n = extents
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .filter(|n| n.checked_mul(64 * 8).is_some())
        .ok_or(CodecError::RegionTooLarge(extents))?;
    if n != len {
        return Err(CodecError::InputLength { expected: n, actual: len });
    }
    Ok(())
}

/// Encodes `values` (x fastest, z slowest) of the given extents.
pub fn encode(codec: Codec, values: &[f64], extents: [usize; 3]) -> Result<EncodedPayload, CodecError> {
    check_region(extents, values.len())?;
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(CodecError::NonFinite { index });
    }
    let bytes = match codec {
        Codec::Passthrough => {
            let mut out = Vec::with_capacity(values.len() * 8);
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        }
        Codec::FixedRate(rate) => fixed_rate::encode(rate, values, extents),
    };
    debug_assert_eq!(bytes.len(), codec.payload_bytes(extents));
    Ok(EncodedPayload { codec, extents, bytes })
}

pub fn decode(payload: &EncodedPayload) -> Result<Vec<f64>, CodecError> {
    let mut out = vec![0.0; payload.extents.iter().product()];
    decode_into(payload.codec, payload.extents, &payload.bytes, &mut out)?;
    Ok(out)
}

/// Decodes a raw payload straight into `out`, whose length must match the
/// extents.
pub fn decode_into(codec: Codec, extents: [usize; 3], bytes: &[u8], out: &mut [f64]) -> Result<(), CodecError> {
    check_region(extents, out.len())?;
    let expected = codec.payload_bytes(extents);
    if bytes.len() != expected {
        return Err(CodecError::PayloadLength { expected, actual: bytes.len() });
    }
    match codec {
        Codec::Passthrough => {
            for (o, c) in out.iter_mut().zip(bytes.chunks_exact(8)) {
                *o = f64::from_le_bytes(c.try_into().unwrap());
            }
            Ok(())
        }
        Codec::FixedRate(rate) => fixed_rate::decode(rate, extents, bytes, out),
    }
}
