//! GF(2^8) arithmetic under the reduction polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D).
//!
//! Multiplication and inversion go through log/antilog tables built at compile
//! time. The generator 0x02 is primitive for 0x11D, so the antilog table walks
//! every nonzero element exactly once.

use thiserror::Error;

/// Reduction polynomial including the x^8 term.
pub const POLY: u16 = 0x11D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    // Doubled so exp[log a + log b] never needs a modulo.
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    Tables { exp, log }
}

static TABLES: Tables = build_tables();

/// Field addition (and subtraction): XOR.
#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let idx = TABLES.log[a as usize] as usize + TABLES.log[b as usize] as usize;
    TABLES.exp[idx]
}

pub fn inv(a: u8) -> Result<u8, FieldError> {
    if a == 0 {
        return Err(FieldError::ZeroInverse);
    }
    Ok(TABLES.exp[255 - TABLES.log[a as usize] as usize])
}

/// `a / b`; errors when `b` is zero.
pub fn div(a: u8, b: u8) -> Result<u8, FieldError> {
    Ok(mul(a, inv(b)?))
}

/// `dst[i] ^= c * src[i]` over the common prefix of both slices.
pub fn mul_add_slice(dst: &mut [u8], src: &[u8], c: u8) {
    match c {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= *s),
        _ => {
            let lc = TABLES.log[c as usize] as usize;
            for (d, &s) in dst.iter_mut().zip(src) {
                if s != 0 {
                    *d ^= TABLES.exp[lc + TABLES.log[s as usize] as usize];
                }
            }
        }
    }
}

/// `buf[i] *= c` in place.
pub fn scale_slice(buf: &mut [u8], c: u8) {
    match c {
        0 => buf.fill(0),
        1 => {}
        _ => buf.iter_mut().for_each(|b| *b = mul(*b, c)),
    }
}

/// Newtype view of a field element with operator overloads, for code that
/// reads better with `+` and `*` than with free functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0);
    pub const ONE: Gf256 = Gf256(1);

    pub fn inverse(self) -> Result<Gf256, FieldError> {
        inv(self.0).map(Gf256)
    }
}

impl std::ops::Add for Gf256 {
    type Output = Gf256;
    fn add(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl std::ops::Mul for Gf256 {
    type Output = Gf256;
    fn mul(self, rhs: Gf256) -> Gf256 {
        Gf256(mul(self.0, rhs.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Carry-less shift-and-add multiply reduced by 0x11D; shares nothing with the tables.
    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut acc: u8 = 0;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= (POLY & 0xFF) as u8;
            }
            b >>= 1;
        }
        acc
    }

    #[test]
    fn mul_examples() {
        assert_eq!(mul(0, 0x5A), 0);
        assert_eq!(mul(1, 0x5A), 0x5A);
        assert_eq!(slow_mul(0x02, 0x87), 0x13);
        assert_eq!(mul(0x02, 0x87), 0x13);
    }

    #[test]
    fn table_mul_matches_shift_and_reduce_exhaustively() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), slow_mul(a, b), "{a:#x} * {b:#x}");
            }
        }
    }

    #[test]
    fn every_nonzero_element_has_an_inverse() {
        assert_eq!(inv(1), Ok(1));
        assert_eq!(inv(0), Err(FieldError::ZeroInverse));
        for a in 1..=255u8 {
            let ai = inv(a).unwrap();
            assert_eq!(slow_mul(a, ai), 1, "a = {a:#x}");
            assert_eq!(inv(ai).unwrap(), a);
        }
    }

    #[test]
    fn distributive_and_commutative() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), mul(b, a));
                for c in [0u8, 1, 2, 0x1D, 0x80, 0xFF, a.wrapping_mul(7)] {
                    assert_eq!(mul(a, b ^ c), mul(a, b) ^ mul(a, c));
                }
            }
        }
    }

    #[test]
    fn slice_helpers() {
        let src = [1u8, 2, 3, 0, 0xFF];
        let mut dst = [0u8; 5];
        mul_add_slice(&mut dst, &src, 0x53);
        for i in 0..5 {
            assert_eq!(dst[i], slow_mul(src[i], 0x53));
        }
        scale_slice(&mut dst, inv(0x53).unwrap());
        assert_eq!(dst, src);
        assert_eq!(div(6, 3).unwrap(), mul(6, inv(3).unwrap()));
        assert_eq!(Gf256(3) * Gf256(7) + Gf256::ONE, Gf256(mul(3, 7) ^ 1));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn associative(a: u8, b: u8, c: u8) {
            prop_assert_eq!(mul(mul(a, b), c), mul(a, mul(b, c)));
        }
    }
}
