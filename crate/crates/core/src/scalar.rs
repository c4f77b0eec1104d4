//! Gaussian rationals a + b*i with exact `BigRational` components.
//!
//! This is the coefficient field for every polynomial in the engine. The
//! imaginary unit is a first-class value so that conjugation and the chart
//! involution are exact.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar {
    pub re: BigRational,
    pub im: BigRational,
}

impl Scalar {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Scalar { re, im }
    }

    pub fn zero() -> Self {
        Scalar { re: BigRational::zero(), im: BigRational::zero() }
    }

    pub fn one() -> Self {
        Scalar { re: BigRational::one(), im: BigRational::zero() }
    }

    pub fn i() -> Self {
        Scalar { re: BigRational::zero(), im: BigRational::one() }
    }

    pub fn from_int(n: i64) -> Self {
        Scalar { re: BigRational::from_integer(BigInt::from(n)), im: BigRational::zero() }
    }

    /// Exact rational p/q (q nonzero).
    pub fn from_ratio(p: i64, q: i64) -> Self {
        assert!(q != 0, "zero denominator");
        Scalar {
            re: BigRational::new(BigInt::from(p), BigInt::from(q)),
            im: BigRational::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Scalar { re: self.re.clone(), im: -self.im.clone() }
    }

    /// Squared modulus a^2 + b^2 (a rational number, as a real Scalar).
    pub fn norm_sqr(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn inv(&self) -> Self {
        let n = self.norm_sqr();
        assert!(!n.is_zero(), "division by zero scalar");
        Scalar { re: &self.re / &n, im: -&self.im / &n }
    }

    pub fn pow(&self, mut e: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Scalar::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }

    /// True when this is a positive integer; returns it when small enough.
    pub fn as_positive_integer(&self) -> Option<u64> {
        if !self.im.is_zero() || !self.re.denom().is_one() || !self.re.is_positive() {
            return None;
        }
        let n = self.re.numer();
        u64::try_from(n.clone()).ok()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            return write!(f, "{}", self.re);
        }
        if self.re.is_zero() {
            if self.im.is_one() {
                return write!(f, "i");
            }
            if self.im == -BigRational::one() {
                return write!(f, "-i");
            }
            return write!(f, "{}*i", self.im);
        }
        if self.im.is_positive() {
            write!(f, "{}+{}*i", self.re, self.im)
        } else {
            write!(f, "{}{}*i", self.re, self.im)
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, |$a:ident, $b:ident| $body:expr) => {
        impl<'a, 'b> $trait<&'b Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &'b Scalar) -> Scalar {
                let $a = self;
                let $b = rhs;
                $body
            }
        }
        impl $trait<Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                $trait::$method(&self, &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Scalar { re: &a.re + &b.re, im: &a.im + &b.im });
binop!(Sub, sub, |a, b| Scalar { re: &a.re - &b.re, im: &a.im - &b.im });
binop!(Mul, mul, |a, b| Scalar {
    re: &a.re * &b.re - &a.im * &b.im,
    im: &a.re * &b.im + &a.im * &b.re,
});
binop!(Div, div, |a, b| a * &b.inv());

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar { re: -self.re, im: -self.im }
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar { re: -self.re.clone(), im: -self.im.clone() }
    }
}

impl AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, rhs: &Scalar) {
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

impl SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, rhs: &Scalar) {
        self.re -= &rhs.re;
        self.im -= &rhs.im;
    }
}

impl MulAssign<&Scalar> for Scalar {
    fn mul_assign(&mut self, rhs: &Scalar) {
        *self = &*self * rhs;
    }
}

fn ratio_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn ratio_from_string(s: &str) -> Result<BigRational, String> {
    let parse_int = |t: &str| t.trim().parse::<BigInt>().map_err(|e| e.to_string());
    match s.split_once('/') {
        Some((p, q)) => {
            let num = parse_int(p)?;
            let den = parse_int(q)?;
            if den.is_zero() {
                return Err("zero denominator".into());
            }
            Ok(BigRational::new(num, den))
        }
        None => Ok(BigRational::from_integer(parse_int(s)?)),
    }
}

#[derive(Serialize, Deserialize)]
struct ScalarRepr {
    re: String,
    im: String,
}

impl Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScalarRepr { re: ratio_to_string(&self.re), im: ratio_to_string(&self.im) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ScalarRepr::deserialize(d)?;
        let re = ratio_from_string(&repr.re).map_err(serde::de::Error::custom)?;
        let im = ratio_from_string(&repr.im).map_err(serde::de::Error::custom)?;
        Ok(Scalar { re, im })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_axioms_spot_checks() {
        let a = Scalar::new(
            BigRational::new(BigInt::from(3), BigInt::from(2)),
            BigRational::from_integer(BigInt::from(-1)),
        );
        let b = Scalar::i();
        assert_eq!(&(&a * &b) * &b.inv(), a);
        assert_eq!(&a + &(-&a), Scalar::zero());
        assert_eq!(&b * &b, Scalar::from_int(-1));
    }

    #[test]
    fn conjugation_is_involutive_and_multiplicative() {
        let a = Scalar::new(
            BigRational::new(BigInt::from(1), BigInt::from(3)),
            BigRational::from_integer(BigInt::from(2)),
        );
        let b = Scalar::new(
            BigRational::from_integer(BigInt::from(-2)),
            BigRational::new(BigInt::from(5), BigInt::from(7)),
        );
        assert_eq!(a.conj().conj(), a);
        assert_eq!((&a * &b).conj(), &a.conj() * &b.conj());
    }

    #[test]
    fn serde_round_trip() {
        let a = Scalar::new(
            BigRational::new(BigInt::from(-7), BigInt::from(4)),
            BigRational::new(BigInt::from(1), BigInt::from(6)),
        );
        let s = serde_json::to_string(&a).unwrap();
        let back: Scalar = serde_json::from_str(&s).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn positive_integer_detection() {
        assert_eq!(Scalar::from_int(5).as_positive_integer(), Some(5));
        assert_eq!(Scalar::from_int(-5).as_positive_integer(), None);
        assert_eq!(Scalar::from_ratio(1, 2).as_positive_integer(), None);
        assert_eq!(Scalar::i().as_positive_integer(), None);
    }
}
