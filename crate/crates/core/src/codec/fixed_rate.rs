//! Per-cell fixed-rate coding.

use super::bits::{BitReader, BitWriter};
use super::transform::{fwd4, inv4, negabinary_map, negabinary_unmap, LEVEL};
use super::{cell_count, cell_grid, CodecError, Rate};

/// Width of the exponent field that opens every cell.
pub const EXPONENT_BITS: usize = 16;
/// Exponent field value marking an all-zero cell.
pub const ZERO_CELL_FLAG: u16 = 0xffff;
/// Negabinary word width of the transformed coefficients. Quantized values
/// satisfy `|q| <= 2^53`; three lifting passes grow that to at most `2^56`,
/// which fits the 58-bit negabinary range.
pub const COEFF_PLANES: u32 = 58;

const EXP_BIAS: i32 = 1100;
const QUANT_BITS: i32 = 53;
const MIN_EXP: i32 = -1073;
const MAX_EXP: i32 = 1024;

/// Coefficient order: ascending total transform level, ties by linear index.
const ORDER: [usize; 64] = coefficient_order();

const fn coefficient_order() -> [usize; 64] {
    let mut order = [0usize; 64];
    let mut n = 0;
    let mut level = 0;
    while level <= 6 {
        let mut idx = 0;
        while idx < 64 {
            let l = LEVEL[idx & 3] + LEVEL[(idx >> 2) & 3] + LEVEL[idx >> 4];
            if l == level {
                order[n] = idx;
                n += 1;
            }
            idx += 1;
        }
        level += 1;
    }
    order
}

/// Split into significand and power of two: `|x| = m * 2^k`.
#[inline]
fn split(x: f64) -> (u64, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

/// Smallest `e` with `|x| < 2^e`, for nonzero finite `x`.
#[inline]
fn exponent_of(x: f64) -> i32 {
    let (m, k) = split(x);
    k + (64 - m.leading_zeros() as i32)
}

#[inline]
fn quantize(x: f64, emax: i32) -> i64 {
    if x == 0.0 {
        return 0;
    }
    let (m, k) = split(x);
    let shift = emax - QUANT_BITS - k;
    let q = if shift <= 0 {
        m << (-shift)
    } else if shift >= 64 {
        0
    } else {
        (m + (1u64 << (shift - 1))) >> shift
    };
    if x.is_sign_negative() {
        -(q as i64)
    } else {
        q as i64
    }
}

/// `x * 2^n` with a single rounding at the end.
fn ldexp(x: f64, n: i32) -> f64 {
    let pow2 = |e: i32| f64::from_bits(((e + 1023) as u64) << 52);
    if (-1022..=1023).contains(&n) {
        x * pow2(n)
    } else if n < -1022 {
        x * pow2(n + 1022) * pow2(-1022)
    } else {
        x * pow2(n - 1023) * pow2(1023)
    }
}

#[inline]
fn dequantize(q: i64, emax: i32) -> f64 {
    ldexp(q as f64, emax - QUANT_BITS)
}

fn forward_transform(c: &mut [i64; 64]) {
    for (stride, outer) in [(1usize, [4usize, 16]), (4, [1, 16]), (16, [1, 4])] {
        for a in 0..4 {
            for b in 0..4 {
                let base = a * outer[0] + b * outer[1];
                let v = [c[base], c[base + stride], c[base + 2 * stride], c[base + 3 * stride]];
                let t = fwd4(v);
                for (p, x) in t.into_iter().enumerate() {
                    c[base + p * stride] = x;
                }
            }
        }
    }
}

fn inverse_transform(c: &mut [i64; 64]) {
    for (stride, outer) in [(16usize, [1usize, 4]), (4, [1, 16]), (1, [4, 16])] {
        for a in 0..4 {
            for b in 0..4 {
                let base = a * outer[0] + b * outer[1];
                let v = [c[base], c[base + stride], c[base + 2 * stride], c[base + 3 * stride]];
                let t = inv4(v);
                for (p, x) in t.into_iter().enumerate() {
                    c[base + p * stride] = x;
                }
            }
        }
    }
}

/// Embedded bit-plane coding with unary group tests for not-yet-significant
/// coefficients. Writes at most `maxbits` bits.
fn encode_planes(w: &mut BitWriter, maxbits: usize, coeffs: &[u64; 64]) {
    let mut bits = maxbits;
    let mut n = 0usize;
    let mut k = COEFF_PLANES;
    while bits > 0 && k > 0 {
        k -= 1;
        let mut x = 0u64;
        for (i, &c) in coeffs.iter().enumerate() {
            x |= ((c >> k) & 1) << i;
        }
        // coefficients already significant: verbatim
        let m = n.min(bits);
        bits -= m;
        w.write_bits(x, m);
        x = if m == 64 { 0 } else { x >> m };
        // the rest: "any more ones?" then unary position
        while n < 64 && bits > 0 {
            bits -= 1;
            if !w.write_bit(x != 0) {
                break;
            }
            while n < 63 && bits > 0 {
                bits -= 1;
                if w.write_bit(x & 1 != 0) {
                    break;
                }
                x >>= 1;
                n += 1;
            }
            x >>= 1;
            n += 1;
        }
    }
}

fn decode_planes(r: &mut BitReader, maxbits: usize, coeffs: &mut [u64; 64]) {
    let mut bits = maxbits;
    let mut n = 0usize;
    let mut k = COEFF_PLANES;
    *coeffs = [0; 64];
    while bits > 0 && k > 0 {
        k -= 1;
        let m = n.min(bits);
        bits -= m;
        let mut x = r.read_bits(m);
        while n < 64 && bits > 0 {
            bits -= 1;
            if !r.read_bit() {
                break;
            }
            while n < 63 && bits > 0 {
                bits -= 1;
                if r.read_bit() {
                    break;
                }
                n += 1;
            }
            x |= 1u64 << n;
            n += 1;
        }
        let mut i = 0;
        while x != 0 {
            coeffs[i] |= (x & 1) << k;
            x >>= 1;
            i += 1;
        }
    }
}

fn encode_cell(w: &mut BitWriter, rate: Rate, vals: &[f64; 64]) {
    let start = w.position();
    let emax = vals.iter().filter(|v| **v != 0.0).map(|&v| exponent_of(v)).max();
    match emax {
        None => w.write_bits(ZERO_CELL_FLAG as u64, EXPONENT_BITS),
        Some(emax) => {
            w.write_bits((emax + EXP_BIAS) as u64, EXPONENT_BITS);
            let mut q = [0i64; 64];
            for (qi, &v) in q.iter_mut().zip(vals) {
                *qi = quantize(v, emax);
            }
            forward_transform(&mut q);
            let mut u = [0u64; 64];
            for (ui, &src) in u.iter_mut().zip(ORDER.iter()) {
                *ui = negabinary_map(q[src], COEFF_PLANES);
            }
            encode_planes(w, rate.cell_bits() - EXPONENT_BITS, &u);
        }
    }
    w.pad_to(start + rate.cell_bits());
}

fn decode_cell(r: &mut BitReader, rate: Rate, out: &mut [f64; 64]) -> Result<(), CodecError> {
    let field = r.read_bits(EXPONENT_BITS) as u16;
    if field == ZERO_CELL_FLAG {
        *out = [0.0; 64];
        return Ok(());
    }
    let emax = field as i32 - EXP_BIAS;
    if !(MIN_EXP..=MAX_EXP).contains(&emax) {
        return Err(CodecError::Corrupt(format!("exponent field {field:#06x} out of range")));
    }
    let mut u = [0u64; 64];
    decode_planes(r, rate.cell_bits() - EXPONENT_BITS, &mut u);
    let mut q = [0i64; 64];
    for (&ui, &dst) in u.iter().zip(ORDER.iter()) {
        q[dst] = negabinary_unmap(ui, COEFF_PLANES);
    }
    inverse_transform(&mut q);
    for (o, &qi) in out.iter_mut().zip(&q) {
        *o = dequantize(qi, emax);
    }
    Ok(())
}

pub(super) fn encode(rate: Rate, values: &[f64], extents: [usize; 3]) -> Vec<u8> {
    let [ex, ey, ez] = extents;
    let [cx, cy, cz] = cell_grid(extents);
    let mut w = BitWriter::with_capacity(cell_count(extents) * rate.cell_bits());
    let mut cell = [0.0f64; 64];
    for kz in 0..cz {
        for ky in 0..cy {
            for kx in 0..cx {
                for k in 0..4 {
                    let z = (kz * 4 + k).min(ez - 1);
                    for j in 0..4 {
                        let y = (ky * 4 + j).min(ey - 1);
                        let row = (z * ey + y) * ex;
                        for i in 0..4 {
                            let x = (kx * 4 + i).min(ex - 1);
                            cell[k * 16 + j * 4 + i] = values[row + x];
                        }
                    }
                }
                encode_cell(&mut w, rate, &cell);
            }
        }
    }
    w.into_bytes()
}

pub(super) fn decode(rate: Rate, extents: [usize; 3], bytes: &[u8], out: &mut [f64]) -> Result<(), CodecError> {
    let [ex, ey, ez] = extents;
    let [cx, cy, cz] = cell_grid(extents);
    let mut r = BitReader::new(bytes);
    let mut cell = [0.0f64; 64];
    let mut index = 0usize;
    for kz in 0..cz {
        for ky in 0..cy {
            for kx in 0..cx {
                r.seek(index * rate.cell_bits());
                decode_cell(&mut r, rate, &mut cell)?;
                index += 1;
                for k in 0..4 {
                    let z = kz * 4 + k;
                    if z >= ez {
                        break;
                    }
                    for j in 0..4 {
                        let y = ky * 4 + j;
                        if y >= ey {
                            break;
                        }
                        let row = (z * ey + y) * ex;
                        for i in 0..4 {
                            let x = kx * 4 + i;
                            if x >= ex {
                                break;
                            }
                            out[row + x] = cell[k * 16 + j * 4 + i];
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_a_permutation_starting_at_dc() {
        let mut seen = [false; 64];
        for &i in &ORDER {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert_eq!(ORDER[0], 0);
        // first-level details along each axis come next
        assert_eq!(&ORDER[1..4], &[1, 4, 16]);
        assert_eq!(ORDER[63], 63);
    }

    #[test]
    fn exponent_bounds() {
        assert_eq!(exponent_of(1.0), 1);
        assert_eq!(exponent_of(0.75), 0);
        assert_eq!(exponent_of(-1500.0), 11);
        assert_eq!(exponent_of(5e-324), MIN_EXP);
        assert_eq!(exponent_of(f64::MAX), MAX_EXP);
    }

    #[test]
    fn quantize_keeps_full_significand_of_cell_max() {
        for x in [1.0 / 3.0, -7.1, 1e300, 2.2e-308, 5e-324, 1e-320] {
            let e = exponent_of(x);
            assert_eq!(dequantize(quantize(x, e), e).to_bits(), x.to_bits(), "{x}");
        }
    }

    #[test]
    fn transform_roundtrip_on_cell() {
        let mut c = [0i64; 64];
        for (i, v) in c.iter_mut().enumerate() {
            *v = ((i as i64 * 7919) % 1013 - 500) << 43;
        }
        let orig = c;
        forward_transform(&mut c);
        inverse_transform(&mut c);
        assert_eq!(c, orig);
    }

    #[test]
    fn constant_cell_transforms_to_dc_only() {
        let mut c = [123_456_789i64; 64];
        forward_transform(&mut c);
        assert_eq!(c[0], 123_456_789);
        assert!(c[1..].iter().all(|&x| x == 0));
    }

    #[test]
    fn full_budget_plane_coding_is_lossless() {
        let mut u = [0u64; 64];
        for (i, v) in u.iter_mut().enumerate() {
            *v = (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> (64 - COEFF_PLANES);
        }
        let budget = 64 * COEFF_PLANES as usize + 64 * 2;
        let mut w = BitWriter::with_capacity(budget);
        encode_planes(&mut w, budget, &u);
        let bytes = w.into_bytes();
        let mut r = BitReader::new(&bytes);
        let mut back = [0u64; 64];
        decode_planes(&mut r, budget, &mut back);
        assert_eq!(back, u);
    }
}
