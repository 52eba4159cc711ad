use crate::error::{Error, Result};

/// Field layout of an IEEE 754 binary interchange format.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FloatFormat {
    pub exponent_bits: u32,
    pub mantissa_bits: u32,
}

impl FloatFormat {
    pub const FP32: FloatFormat = FloatFormat {
        exponent_bits: 8,
        mantissa_bits: 23,
    };
    pub const FP16: FloatFormat = FloatFormat {
        exponent_bits: 5,
        mantissa_bits: 10,
    };

    pub fn width(self) -> u32 {
        1 + self.exponent_bits + self.mantissa_bits
    }

    pub fn bias(self) -> i32 {
        (1 << (self.exponent_bits - 1)) - 1
    }

    fn exponent_mask(self) -> u32 {
        (1 << self.exponent_bits) - 1
    }

    fn mantissa_mask(self) -> u32 {
        (1 << self.mantissa_bits) - 1
    }

    fn sign_shift(self) -> u32 {
        self.exponent_bits + self.mantissa_bits
    }

    /// Splits a bit pattern into sign, biased exponent and mantissa fields.
    pub fn parts(self, bits: u32) -> FpParts {
        let sign = ((bits >> self.sign_shift()) & 1) as u8;
        let biased_exponent = (bits >> self.mantissa_bits) & self.exponent_mask();
        let mantissa = bits & self.mantissa_mask();
        let class = if biased_exponent == self.exponent_mask() {
            if mantissa == 0 {
                FpClass::Inf
            } else {
                FpClass::NaN
            }
        } else if biased_exponent == 0 {
            if mantissa == 0 {
                FpClass::Zero
            } else {
                FpClass::Subnormal
            }
        } else {
            FpClass::Normal
        };
        FpParts {
            sign,
            biased_exponent,
            mantissa,
            class,
        }
    }

    /// Value of a bit pattern. Both formats embed exactly in `f64`.
    pub fn value(self, bits: u32) -> f64 {
        self.value_of(&self.parts(bits))
    }

    fn value_of(self, p: &FpParts) -> f64 {
        let sign = if p.sign == 1 { -1.0 } else { 1.0 };
        let m = self.mantissa_bits as i32;
        match p.class {
            FpClass::Zero => sign * 0.0,
            FpClass::Inf => sign * f64::INFINITY,
            FpClass::NaN => f64::NAN.copysign(sign),
            FpClass::Subnormal => sign * p.mantissa as f64 * pow2(1 - self.bias() - m),
            FpClass::Normal => {
                let significand = ((1u64 << m) | p.mantissa as u64) as f64;
                sign * significand * pow2(p.biased_exponent as i32 - self.bias() - m)
            }
        }
    }

    /// Nearest encoding under round-half-to-even. Magnitudes past the largest
    /// finite value round to infinity; NaN maps to the quiet NaN with the
    /// input's sign.
    pub fn encode(self, value: f64) -> u32 {
        let sign = (value.is_sign_negative() as u32) << self.sign_shift();
        let inf = self.exponent_mask() << self.mantissa_bits;
        if value.is_nan() {
            return sign | inf | (1 << (self.mantissa_bits - 1));
        }
        if value.is_infinite() {
            return sign | inf;
        }
        let raw = value.abs().to_bits();
        let exp_field = ((raw >> 52) & 0x7ff) as i32;
        if exp_field == 0 {
            // Zero or an f64 subnormal, far below half the smallest subnormal
            // of either target format.
            return sign;
        }
        let significand = (1u64 << 52) | (raw & ((1u64 << 52) - 1));
        let exponent = exp_field - 1023;
        let emin = 1 - self.bias();
        let m = self.mantissa_bits as i32;

        if exponent >= emin {
            let mut q = round_half_even(significand, (52 - m) as u32);
            let mut exponent = exponent;
            if q == 1u64 << (m + 1) {
                q >>= 1;
                exponent += 1;
            }
            let biased = exponent + self.bias();
            if biased >= self.exponent_mask() as i32 {
                return sign | inf;
            }
            sign | ((biased as u32) << self.mantissa_bits) | (q as u32 & self.mantissa_mask())
        } else {
            // Subnormal target: a carry into bit `m` lands in the exponent
            // field and yields the smallest normal, as required.
            let shift = (52 - m + (emin - exponent)) as u32;
            sign | round_half_even(significand, shift) as u32
        }
    }
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

fn round_half_even(x: u64, shift: u32) -> u64 {
    if shift == 0 {
        return x;
    }
    if shift >= 64 {
        return 0;
    }
    let q = x >> shift;
    let rem = x & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FpClass {
    Normal,
    Subnormal,
    Zero,
    Inf,
    NaN,
}

/// Decomposed fields of a floating-point bit pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FpParts {
    pub sign: u8,
    pub biased_exponent: u32,
    pub mantissa: u32,
    pub class: FpClass,
}

/// Decodes `bits` as `format`. Every pattern of the right width decodes;
/// wider inputs are rejected.
pub fn decode_fp(bits: u32, format: FloatFormat) -> Result<(f64, FpParts)> {
    if format.width() < 32 && bits >> format.width() != 0 {
        return Err(Error::OutOfBounds(format!(
            "bit pattern {bits:#x} wider than {} bits",
            format.width()
        )));
    }
    let parts = format.parts(bits);
    Ok((format.value_of(&parts), parts))
}

pub fn encode_fp(value: f64, format: FloatFormat) -> u32 {
    format.encode(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    const F32: FloatFormat = FloatFormat::FP32;
    const F16: FloatFormat = FloatFormat::FP16;

    #[test]
    fn decodes_reference_patterns() {
        let (v, p) = decode_fp(0x3F80_0000, F32).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(p.class, FpClass::Normal);
        assert_eq!(p.biased_exponent, 127);

        let (v, p) = decode_fp(0x7FC0_0000, F32).unwrap();
        assert!(v.is_nan());
        assert_eq!(p.class, FpClass::NaN);

        let (v, _) = decode_fp(0x3C00, F16).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn all_fe_word_is_large_negative_normal() {
        let (v, p) = decode_fp(0xFEFE_FEFE, F32).unwrap();
        assert_eq!(p.class, FpClass::Normal);
        assert_eq!(v, f32::from_bits(0xFEFE_FEFE) as f64);
        assert!((v / -1.69e38 - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn rejects_wide_patterns() {
        assert!(decode_fp(0x1_0000, F16).is_err());
    }

    #[test]
    fn encodes_reference_values() {
        assert_eq!(encode_fp(1.0, F16), 0x3C00);
        assert_eq!(encode_fp(-0.0, F32), 0x8000_0000);
        assert_eq!(encode_fp(7.0e4, F16), 0x7C00);
        assert_eq!(encode_fp(-7.0e4, F16), 0xFC00);
        assert_eq!(encode_fp(65504.0, F16), 0x7BFF);
        // Halfway between max finite and the next (virtual) step rounds to Inf.
        assert_eq!(encode_fp(65520.0, F16), 0x7C00);
        assert_eq!(encode_fp(65519.99, F16), 0x7BFF);
    }

    #[test]
    fn subnormal_edges() {
        let tiny = 2f64.powi(-24);
        assert_eq!(encode_fp(tiny, F16), 0x0001);
        // Exactly half the smallest subnormal ties to even zero.
        assert_eq!(encode_fp(tiny / 2.0, F16), 0x0000);
        assert_eq!(encode_fp(tiny * 0.75, F16), 0x0001);
        // Largest subnormal rounding up into the smallest normal.
        let below_min_normal = 2f64.powi(-14) - 2f64.powi(-26);
        assert_eq!(encode_fp(below_min_normal, F16), 0x0400);
        assert_eq!(decode_fp(0x0001, F16).unwrap().1.class, FpClass::Subnormal);
    }

    #[test]
    fn ties_round_to_even() {
        // 1 + 2^-11 lies halfway between 1.0 and the next FP16 value.
        assert_eq!(encode_fp(1.0 + 2f64.powi(-11), F16), 0x3C00);
        assert_eq!(encode_fp(1.0 + 3.0 * 2f64.powi(-11), F16), 0x3C02);
    }

    #[test]
    fn nan_keeps_sign_and_class() {
        let bits = encode_fp(-f64::NAN, F32);
        assert_eq!(F32.parts(bits).class, FpClass::NaN);
        assert_eq!(F32.parts(bits).sign, 1);
    }
}
