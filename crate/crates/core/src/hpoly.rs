//! Laurent polynomials in the formal parameter h with rational-function
//! coefficients. Ordinary admissible data live in nonnegative powers; the
//! Karabegov form carries a single h^{-1} term.

use crate::error::{Error, Result};
use crate::ratfn::RationalFn;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HPoly {
    pub n: usize,
    pub coeffs: BTreeMap<i32, RationalFn>,
}

impl HPoly {
    pub fn zero(n: usize) -> Self {
        HPoly { n, coeffs: BTreeMap::new() }
    }

    pub fn from_ratfn(r: RationalFn) -> Self {
        let n = r.chart_dim();
        let mut h = HPoly::zero(n);
        h.insert(0, r);
        h
    }

    pub fn constant(n: usize, c: Scalar) -> Self {
        HPoly::from_ratfn(RationalFn::constant(n, c))
    }

    pub fn hbar(n: usize) -> Self {
        let mut h = HPoly::zero(n);
        h.insert(1, RationalFn::one(n));
        h
    }

    pub fn insert(&mut self, pow: i32, r: RationalFn) {
        if r.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.coeffs.entry(pow) {
            Entry::Vacant(v) => {
                v.insert(r);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get().add(&r);
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn coeff(&self, pow: i32) -> RationalFn {
        self.coeffs
            .get(&pow)
            .cloned()
            .unwrap_or_else(|| RationalFn::zero(self.n))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn deg(&self) -> i32 {
        self.coeffs.keys().next_back().copied().unwrap_or(0)
    }

    pub fn min_deg(&self) -> i32 {
        self.coeffs.keys().next().copied().unwrap_or(0)
    }

    pub fn add(&self, other: &HPoly) -> HPoly {
        let mut out = self.clone();
        for (&p, r) in &other.coeffs {
            out.insert(p, r.clone());
        }
        out
    }

    pub fn sub(&self, other: &HPoly) -> HPoly {
        let mut out = self.clone();
        for (&p, r) in &other.coeffs {
            out.insert(p, r.neg());
        }
        out
    }

    pub fn neg(&self) -> HPoly {
        HPoly {
            n: self.n,
            coeffs: self.coeffs.iter().map(|(&p, r)| (p, r.neg())).collect(),
        }
    }

    pub fn mul(&self, other: &HPoly) -> HPoly {
        let mut out = HPoly::zero(self.n);
        for (&pa, ra) in &self.coeffs {
            for (&pb, rb) in &other.coeffs {
                out.insert(pa + pb, ra.mul(rb));
            }
        }
        out
    }

    pub fn scale(&self, c: &Scalar) -> HPoly {
        if c.is_zero() {
            return HPoly::zero(self.n);
        }
        HPoly {
            n: self.n,
            coeffs: self.coeffs.iter().map(|(&p, r)| (p, r.scale(c))).collect(),
        }
    }

    pub fn scale_hpow(&self, shift: i32) -> HPoly {
        HPoly {
            n: self.n,
            coeffs: self.coeffs.iter().map(|(&p, r)| (p + shift, r.clone())).collect(),
        }
    }

    pub fn conj_involution(&self) -> HPoly {
        HPoly {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .map(|(&p, r)| (p, r.conj_involution()))
                .collect(),
        }
    }

    /// Exact substitution h -> 1/k for nonzero k.
    pub fn evaluate(&self, k: &Scalar) -> Result<RationalFn> {
        if k.is_zero() {
            return Err(Error::ZeroLevel);
        }
        let kinv = k.inv();
        let mut acc = RationalFn::zero(self.n);
        for (&p, r) in &self.coeffs {
            let factor = if p >= 0 {
                kinv.pow(p as u32)
            } else {
                k.pow((-p) as u32)
            };
            acc = acc.add(&r.scale(&factor));
        }
        Ok(acc)
    }
}

impl fmt::Display for HPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&p, r) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match p {
                0 => write!(f, "{r}")?,
                1 => write!(f, "({r})*h")?,
                _ => write!(f, "({r})*h^{p}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for HPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_at_level() {
        // h * f at k = 2 gives f/2
        let n = 1;
        let f = RationalFn::z(n, 0);
        let hf = HPoly::hbar(n).mul(&HPoly::from_ratfn(f.clone()));
        let ev = hf.evaluate(&Scalar::from_int(2)).unwrap();
        assert_eq!(ev, f.scale(&Scalar::from_ratio(1, 2)));
        assert!(hf.evaluate(&Scalar::zero()).is_err());
    }

    #[test]
    fn laurent_part() {
        let n = 1;
        let mut k = HPoly::zero(n);
        k.insert(-1, RationalFn::one(n));
        k.insert(0, RationalFn::zb(n, 0).neg());
        assert_eq!(k.min_deg(), -1);
        let ev = k.evaluate(&Scalar::from_int(3)).unwrap();
        // h^{-1} -> 3
        let expect = RationalFn::constant(n, Scalar::from_int(3))
            .sub(&RationalFn::zb(n, 0));
        assert_eq!(ev, expect);
    }
}
