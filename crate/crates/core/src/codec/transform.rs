//! Integer primitives of the fixed-rate coder: the two-level S-transform and
//! the negabinary mapping.

use super::CodecError;

/// Largest magnitude accepted by [`lift_forward`]: a 64-bit word minus the
/// sign bit and two guard bits for lifting growth.
pub const LIFT_INPUT_LIMIT: i64 = 1 << 61;

#[inline]
fn s_pair(a: i64, b: i64) -> (i64, i64) {
    ((a + b) >> 1, a - b)
}

#[inline]
fn s_pair_inv(s: i64, d: i64) -> (i64, i64) {
    // a + b = 2s + parity(d); the sum is even so the shift is exact.
    let a = s + ((d + (d & 1)) >> 1);
    (a, a - d)
}

/// Forward two-level S-transform of a 4-vector, output `(ss, dd, d0, d1)`.
#[inline]
pub(crate) fn fwd4(v: [i64; 4]) -> [i64; 4] {
    let (s0, d0) = s_pair(v[0], v[1]);
    let (s1, d1) = s_pair(v[2], v[3]);
    let (ss, dd) = s_pair(s0, s1);
    [ss, dd, d0, d1]
}

#[inline]
pub(crate) fn inv4(c: [i64; 4]) -> [i64; 4] {
    let (s0, s1) = s_pair_inv(c[0], c[1]);
    let (a, b) = s_pair_inv(s0, c[2]);
    let (e, f) = s_pair_inv(s1, c[3]);
    [a, b, e, f]
}

/// Per-position transform level of [`fwd4`]'s output (0 = DC).
pub(crate) const LEVEL: [u32; 4] = [0, 1, 2, 2];

pub fn lift_forward(v: [i64; 4]) -> Result<[i64; 4], CodecError> {
    if v.iter().any(|x| x.unsigned_abs() > LIFT_INPUT_LIMIT as u64) {
        return Err(CodecError::LiftOverflow);
    }
    Ok(fwd4(v))
}

/// Exact inverse of [`lift_forward`].
pub fn lift_inverse(c: [i64; 4]) -> Result<[i64; 4], CodecError> {
    if c.iter().any(|x| x.unsigned_abs() > 2 * LIFT_INPUT_LIMIT as u64) {
        return Err(CodecError::LiftOverflow);
    }
    Ok(inv4(c))
}

#[inline]
fn width_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[inline]
fn nb_mask(width: u32) -> u64 {
    0xaaaa_aaaa_aaaa_aaaa & width_mask(width)
}

/// Maps `q` to its base -2 digits in a `width`-bit word.
#[inline]
pub fn negabinary_map(q: i64, width: u32) -> u64 {
    let m = nb_mask(width);
    ((q as u64).wrapping_add(m) ^ m) & width_mask(width)
}

#[inline]
pub fn negabinary_unmap(u: u64, width: u32) -> i64 {
    let m = nb_mask(width);
    ((u ^ m).wrapping_sub(m)) as i64
}

/// Inclusive range of integers representable in a `width`-bit negabinary word
/// (`width <= 62`).
pub fn negabinary_range(width: u32) -> (i64, i64) {
    let m = nb_mask(width);
    (-(m as i128) as i64, (width_mask(width) as i128 - m as i128) as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Base -2 digits by repeated division.
    fn base_minus_two(mut q: i64) -> u64 {
        let mut out = 0u64;
        let mut bit = 0;
        while q != 0 {
            let r = q.rem_euclid(2);
            out |= (r as u64) << bit;
            q = (q - r) / -2;
            bit += 1;
        }
        out
    }

    #[test]
    fn negabinary_small_values() {
        assert_eq!(negabinary_map(0, 4), 0);
        assert_eq!(negabinary_map(1, 4), 1);
        assert_eq!(negabinary_map(-1, 4), 3);
        assert_eq!(negabinary_map(2, 4), 6);
        for q in [1, -1, 2] {
            assert_eq!(negabinary_map(q, 4), base_minus_two(q));
        }
    }

    #[test]
    fn negabinary_range_bounds_roundtrip() {
        for width in [4u32, 8, 58, 62] {
            let (lo, hi) = negabinary_range(width);
            for q in [lo, lo + 1, -1, 0, 1, hi - 1, hi] {
                assert_eq!(negabinary_unmap(negabinary_map(q, width), width), q, "w={width} q={q}");
            }
        }
        assert_eq!(negabinary_range(4), (-10, 5));
    }

    #[test]
    fn constant_vector_keeps_only_dc() {
        assert_eq!(lift_forward([0; 4]).unwrap(), [0; 4]);
        for c in [1i64, -7, 12345, -(1 << 40)] {
            assert_eq!(lift_forward([c; 4]).unwrap(), [c, 0, 0, 0]);
        }
    }

    #[test]
    fn lift_rejects_out_of_range() {
        assert!(lift_forward([LIFT_INPUT_LIMIT + 1, 0, 0, 0]).is_err());
        assert!(lift_forward([LIFT_INPUT_LIMIT, -LIFT_INPUT_LIMIT, 0, 0]).is_ok());
    }

    proptest! {
        #[test]
        fn negabinary_matches_base_minus_two(q in -(1i64 << 55)..(1i64 << 55)) {
            let u = negabinary_map(q, 58);
            prop_assert_eq!(u, base_minus_two(q));
            prop_assert_eq!(negabinary_unmap(u, 58), q);
        }

        #[test]
        fn lift_roundtrip(v in prop::array::uniform4(-LIFT_INPUT_LIMIT..=LIFT_INPUT_LIMIT)) {
            let c = lift_forward(v).unwrap();
            prop_assert_eq!(lift_inverse(c).unwrap(), v);
        }
    }
}
