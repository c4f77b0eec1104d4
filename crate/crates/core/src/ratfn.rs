//! Rational functions in the chart variables, kept in canonical form.
//!
//! Invariants: denominator nonzero and monic under graded-lex, and
//! gcd(num, den) = 1. With both enforced, structural equality is semantic
//! equality, which is the foundation of every identity check in the engine.

use crate::poly::{gcd, Poly};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalFn {
    pub num: Poly,
    pub den: Poly,
}

impl RationalFn {
    /// Canonicalize a num/den pair: reduce by the gcd, make den monic.
    pub fn new(num: Poly, den: Poly) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        if num.is_zero() {
            return RationalFn { den: Poly::one(num.nvars), num };
        }
        let g = gcd(&num, &den);
        let (mut num, mut den) = if g.is_constant() {
            (num, den)
        } else {
            (
                num.div_exact(&g).expect("gcd divides numerator"),
                den.div_exact(&g).expect("gcd divides denominator"),
            )
        };
        let lc = den.leading().expect("nonzero").1.clone();
        if !lc.is_one() {
            let inv = lc.inv();
            num = num.scale(&inv);
            den = den.scale(&inv);
        }
        RationalFn { num, den }
    }

    pub fn zero(n: usize) -> Self {
        RationalFn { num: Poly::zero(2 * n), den: Poly::one(2 * n) }
    }

    pub fn one(n: usize) -> Self {
        RationalFn { num: Poly::one(2 * n), den: Poly::one(2 * n) }
    }

    pub fn constant(n: usize, c: Scalar) -> Self {
        RationalFn { num: Poly::constant(2 * n, c), den: Poly::one(2 * n) }
    }

    pub fn from_poly(p: Poly) -> Self {
        RationalFn { den: Poly::one(p.nvars), num: p }
    }

    /// The chart variable z^{i+1} (0-based index).
    pub fn z(n: usize, i: usize) -> Self {
        RationalFn::from_poly(Poly::var(2 * n, i))
    }

    /// The chart variable zb^{i+1} (0-based index).
    pub fn zb(n: usize, i: usize) -> Self {
        RationalFn::from_poly(Poly::var(2 * n, n + i))
    }

    pub fn nvars(&self) -> usize {
        self.num.nvars
    }

    pub fn chart_dim(&self) -> usize {
        self.num.nvars / 2
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }

    pub fn as_constant(&self) -> Option<Scalar> {
        if self.den.is_constant() {
            // den is monic, hence exactly 1
            self.num.as_constant()
        } else {
            None
        }
    }

    pub fn add(&self, other: &RationalFn) -> RationalFn {
        RationalFn::new(
            self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            self.den.mul(&other.den),
        )
    }

    pub fn sub(&self, other: &RationalFn) -> RationalFn {
        RationalFn::new(
            self.num.mul(&other.den).sub(&other.num.mul(&self.den)),
            self.den.mul(&other.den),
        )
    }

    pub fn neg(&self) -> RationalFn {
        RationalFn { num: self.num.neg(), den: self.den.clone() }
    }

    pub fn mul(&self, other: &RationalFn) -> RationalFn {
        // cross-reduce first to keep intermediate degrees down
        let g1 = gcd(&self.num, &other.den);
        let g2 = gcd(&other.num, &self.den);
        let n1 = self.num.div_exact(&g1).expect("gcd divides");
        let d2 = other.den.div_exact(&g1).expect("gcd divides");
        let n2 = other.num.div_exact(&g2).expect("gcd divides");
        let d1 = self.den.div_exact(&g2).expect("gcd divides");
        RationalFn::new(n1.mul(&n2), d1.mul(&d2))
    }

    pub fn scale(&self, c: &Scalar) -> RationalFn {
        RationalFn { num: self.num.scale(c), den: self.den.clone() }
    }

    pub fn inv(&self) -> RationalFn {
        assert!(!self.is_zero(), "inverting zero rational function");
        RationalFn::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, other: &RationalFn) -> RationalFn {
        self.mul(&other.inv())
    }

    pub fn pow(&self, e: u32) -> RationalFn {
        let mut acc = RationalFn::one(self.chart_dim());
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// Quotient-rule derivative with respect to chart variable `var`
    /// (0..n are the z's, n..2n the zb's).
    pub fn deriv(&self, var: usize) -> RationalFn {
        let dn = self.num.deriv(var);
        let dd = self.den.deriv(var);
        if dd.is_zero() {
            return RationalFn::new(dn, self.den.clone());
        }
        RationalFn::new(
            dn.mul(&self.den).sub(&self.num.mul(&dd)),
            self.den.mul(&self.den),
        )
    }

    /// Holomorphic derivative d/dz^i.
    pub fn d_z(&self, i: usize) -> RationalFn {
        self.deriv(i)
    }

    /// Anti-holomorphic derivative d/dzb^j.
    pub fn d_zb(&self, j: usize) -> RationalFn {
        self.deriv(self.chart_dim() + j)
    }

    pub fn conj_involution(&self) -> RationalFn {
        RationalFn::new(self.num.conj_involution(), self.den.conj_involution())
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.num.depends_on(var) || self.den.depends_on(var)
    }

    /// True when no zb variable occurs.
    pub fn is_holomorphic(&self) -> bool {
        let n = self.chart_dim();
        (n..2 * n).all(|v| !self.depends_on(v))
    }

    /// Substitute chart variables by rational functions.
    pub fn substitute(&self, images: &[RationalFn]) -> RationalFn {
        assert_eq!(images.len(), self.nvars());
        let out_n = images
            .first()
            .map(|r| r.chart_dim())
            .unwrap_or(self.chart_dim());
        let sub_poly = |p: &Poly| -> RationalFn {
            let mut acc = RationalFn::zero(out_n);
            for (m, c) in &p.terms {
                let mut term = RationalFn::constant(out_n, c.clone());
                for (v, &e) in m.0.iter().enumerate() {
                    if e > 0 {
                        term = term.mul(&images[v].pow(e as u32));
                    }
                }
                acc = acc.add(&term);
            }
            acc
        };
        sub_poly(&self.num).div(&sub_poly(&self.den))
    }

    pub fn to_latex(&self) -> String {
        let n = self.chart_dim();
        let mut names = Vec::new();
        for i in 0..n {
            names.push(format!("z^{{{}}}", i + 1));
        }
        for i in 0..n {
            names.push(format!("\\bar{{z}}^{{{}}}", i + 1));
        }
        if self.den.is_constant() {
            self.num.to_latex(&names)
        } else {
            format!(
                "\\frac{{{}}}{{{}}}",
                self.num.to_latex(&names),
                self.den.to_latex(&names)
            )
        }
    }
}

impl fmt::Display for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_constant() {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({})/({})", self.num, self.den)
        }
    }
}

impl fmt::Debug for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}
