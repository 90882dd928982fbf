//! Scalar arithmetic backends for the moment engine and high-precision time generation.
//!
//! Two backends are used: exact rationals, and binary fixed point with a
//! configurable number of fractional bits. Fixed point never needs gcd
//! reductions, which keeps long antiderivative chains over irrational
//! breakpoints cheap.

use astro_float::{BigFloat, Consts, RoundingMode, Sign, Word};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub(crate) trait Ring: Send + Sync {
    type E: Clone + Send + Sync;

    fn zero(&self) -> Self::E;
    fn from_ratio(&self, r: &BigRational) -> Self::E;
    fn to_ratio(&self, a: &Self::E) -> BigRational;
    fn add(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn sub(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn mul(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn neg(&self, a: &Self::E) -> Self::E;
    fn div_int(&self, a: &Self::E, d: u64) -> Self::E;
}

pub(crate) struct ExactRing;

impl Ring for ExactRing {
    type E = BigRational;

    fn zero(&self) -> BigRational {
        BigRational::zero()
    }
    fn from_ratio(&self, r: &BigRational) -> BigRational {
        r.clone()
    }
    fn to_ratio(&self, a: &BigRational) -> BigRational {
        a.clone()
    }
    fn add(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a + b
    }
    fn sub(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a - b
    }
    fn mul(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
    fn neg(&self, a: &BigRational) -> BigRational {
        -a
    }
    fn div_int(&self, a: &BigRational, d: u64) -> BigRational {
        a / BigRational::from_integer(BigInt::from(d))
    }
}

/// Fixed point: an element `n` stands for `n · 2^-frac`.
pub(crate) struct FixedRing {
    pub frac: u32,
    half: BigInt,
}

impl FixedRing {
    pub fn new(frac: u32) -> Self {
        FixedRing { frac, half: BigInt::one() << (frac - 1) }
    }
}

impl Ring for FixedRing {
    type E = BigInt;

    fn zero(&self) -> BigInt {
        BigInt::zero()
    }
    fn from_ratio(&self, r: &BigRational) -> BigInt {
        round_div(&(r.numer() << self.frac), r.denom())
    }
    fn to_ratio(&self, a: &BigInt) -> BigRational {
        BigRational::new(a.clone(), BigInt::one() << self.frac)
    }
    fn add(&self, a: &BigInt, b: &BigInt) -> BigInt {
        a + b
    }
    fn sub(&self, a: &BigInt, b: &BigInt) -> BigInt {
        a - b
    }
    fn mul(&self, a: &BigInt, b: &BigInt) -> BigInt {
        (a * b + &self.half) >> self.frac
    }
    fn neg(&self, a: &BigInt) -> BigInt {
        -a
    }
    fn div_int(&self, a: &BigInt, d: u64) -> BigInt {
        round_div(a, &BigInt::from(d))
    }
}

fn round_div(n: &BigInt, d: &BigInt) -> BigInt {
    let (q, r) = n.div_mod_floor(d);
    if (r << 1u32) >= *d {
        q + 1
    } else {
        q
    }
}

/// Rounds `r` to the nearest multiple of `2^-bits`.
pub fn round_to_bits(r: &BigRational, bits: u32) -> BigRational {
    let n = round_div(&(r.numer() << bits), r.denom());
    BigRational::new(n, BigInt::one() << bits)
}

/// Exact value of a finite astro-float number.
pub(crate) fn bigfloat_to_ratio(x: &BigFloat) -> Result<BigRational> {
    let (words, _, sign, exp, _) = x
        .as_raw_parts()
        .ok_or_else(|| Error::Numeric("non-finite multiprecision value".into()))?;
    let word_bits = (std::mem::size_of::<Word>() * 8) as i64;
    let mut digits: Vec<u32> = Vec::with_capacity(words.len() * 2);
    for &w in words {
        let w = w as u64;
        digits.push(w as u32);
        if word_bits == 64 {
            digits.push((w >> 32) as u32);
        }
    }
    let m = BigInt::from(BigUint::new(digits));
    if m.is_zero() {
        return Ok(BigRational::zero());
    }
    // value = 0.m · 2^exp with the mantissa spanning all words
    let shift = exp as i64 - word_bits * words.len() as i64;
    let mut r = if shift >= 0 {
        BigRational::from_integer(m << shift as u64)
    } else {
        BigRational::new(m, BigInt::one() << (-shift) as u64)
    };
    if sign == Sign::Neg {
        r = -r;
    }
    Ok(r)
}

/// `sin²(j π / d)` to `bits` fractional bits, exact whenever the value is rational.
pub fn sin_squared_pi_fraction(j: u64, d: u64, bits: u32) -> Result<(BigRational, bool)> {
    if d == 0 {
        return Err(Error::InvalidArgument("zero denominator".into()));
    }
    let g = j.gcd(&d);
    // sin²(x) has period π: reduce j/d modulo 1
    let (jr, dr) = ((j / g) % (d / g), d / g);
    let exact = |n: i64, m: i64| Ok((BigRational::new(BigInt::from(n), BigInt::from(m)), true));
    match (jr, dr) {
        (0, _) => return exact(0, 1),
        (1, 2) => return exact(1, 1),
        (1, 4) | (3, 4) => return exact(1, 2),
        (1, 6) | (5, 6) => return exact(1, 4),
        (1, 3) | (2, 3) => return exact(3, 4),
        _ => {}
    }
    let p = bits as usize + 64;
    let rm = RoundingMode::ToEven;
    let mut cc = Consts::new().map_err(|e| Error::Numeric(format!("{e:?}")))?;
    let pi = cc.pi(p, rm);
    let x = pi
        .mul(&BigFloat::from_u64(jr, p), p, rm)
        .div(&BigFloat::from_u64(dr, p), p, rm);
    let s = x.sin(p, rm, &mut cc);
    let s2 = s.mul(&s, p, rm);
    let r = bigfloat_to_ratio(&s2)?;
    Ok((round_to_bits(&r, bits), false))
}

/// Exact rational value of a positive finite duration.
pub(crate) fn f64_to_ratio(x: f64) -> Result<BigRational> {
    match BigRational::from_float(x) {
        Some(r) if x > 0.0 => Ok(r),
        _ => Err(Error::InvalidArgument(format!("duration must be positive and finite, got {x}"))),
    }
}

/// Nearest f64 of a rational, correctly rounded (ties to even).
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let n = r.numer().abs();
    let d = r.denom();
    let s = 55 - (n.bits() as i64 - d.bits() as i64);
    let (num, den) = if s >= 0 { (n << s as u64, d.clone()) } else { (n, d << (-s) as u64) };
    let (q, rem) = num.div_rem(&den);
    let extra = q.bits() as i64 - 53;
    let mut mant = &q >> extra as u64;
    let low = &q - (&mant << extra as u64);
    let half = BigInt::one() << (extra - 1) as u64;
    let odd = mant.bit(0);
    if low > half || (low == half && (!rem.is_zero() || odd)) {
        mant += 1;
    }
    let m = mant.to_f64().expect("53-bit mantissa");
    let e = extra - s;
    let e1 = (e / 2) as i32;
    let v = m * 2f64.powi(e1) * 2f64.powi(e as i32 - e1);
    if r.is_negative() {
        -v
    } else {
        v
    }
}
