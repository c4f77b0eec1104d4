//! Sparse multivariate polynomials over Gaussian rationals.
//!
//! Variables are the chart coordinates: indices `0..n` are `z1..zn` and
//! `n..2n` are `zb1..zbn`. Monomials are exponent vectors under graded-lex
//! order; no zero coefficients are stored.
//!
//! The gcd is a primitive-part subresultant PRS, recursing on the variable
//! set. Degrees stay small in this engine, so no modular tricks are needed.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent vector, length 2n. Ordered graded-lex so leading terms are
/// well-defined.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Mono(pub Vec<u16>);

impl Mono {
    pub fn constant(nvars: usize) -> Self {
        Mono(vec![0; nvars])
    }

    pub fn var(nvars: usize, idx: usize) -> Self {
        let mut e = vec![0; nvars];
        e[idx] = 1;
        Mono(e)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn mul(&self, other: &Mono) -> Mono {
        Mono(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Componentwise difference; None when not divisible.
    pub fn div(&self, other: &Mono) -> Option<Mono> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            if a < b {
                return None;
            }
            out.push(a - b);
        }
        Some(Mono(out))
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Poly {
    pub nvars: usize,
    pub terms: BTreeMap<Mono, Scalar>,
}

/// JSON form: sparse exponent-string -> coefficient map ("2,0,1,0": {...}).
#[derive(Serialize, Deserialize)]
struct PolyRepr {
    nvars: usize,
    terms: BTreeMap<String, Scalar>,
}

impl Serialize for Poly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let key = m
                    .0
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                (key, c.clone())
            })
            .collect();
        PolyRepr { nvars: self.nvars, terms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Poly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PolyRepr::deserialize(d)?;
        let mut out = Poly::zero(repr.nvars);
        for (key, c) in repr.terms {
            let exps: std::result::Result<Vec<u16>, _> =
                key.split(',').map(|t| t.trim().parse::<u16>()).collect();
            let exps = exps.map_err(serde::de::Error::custom)?;
            if exps.len() != repr.nvars {
                return Err(serde::de::Error::custom("exponent vector length mismatch"));
            }
            out.insert(Mono(exps), c);
        }
        Ok(out)
    }
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Scalar) -> Self {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(Mono::constant(nvars), c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, Scalar::one())
    }

    pub fn var(nvars: usize, idx: usize) -> Self {
        let mut p = Poly::zero(nvars);
        p.terms.insert(Mono::var(nvars, idx), Scalar::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.len() <= 1 && self.terms.keys().all(Mono::is_constant)
    }

    /// The constant value when `is_constant`, else None.
    pub fn as_constant(&self) -> Option<Scalar> {
        if self.terms.is_empty() {
            return Some(Scalar::zero());
        }
        if self.terms.len() == 1 {
            let (m, c) = self.terms.iter().next().unwrap();
            if m.is_constant() {
                return Some(c.clone());
            }
        }
        None
    }

    pub fn insert(&mut self, m: Mono, c: Scalar) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = &*o.get() + &c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert(m.clone(), -c);
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.insert(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, c: &Scalar) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::one(self.nvars);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn deriv(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut m2 = m.clone();
            m2.0[var] = e - 1;
            out.insert(m2, c * &Scalar::from_int(e as i64));
        }
        out
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|m| m.0[var] as u32).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Mono::total_degree).max().unwrap_or(0)
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.terms.keys().any(|m| m.0[var] > 0)
    }

    /// Leading (monomial, coefficient) under graded-lex.
    pub fn leading(&self) -> Option<(&Mono, &Scalar)> {
        self.terms.iter().next_back()
    }

    /// Chart involution: swap z^i with zb^i and conjugate coefficients.
    pub fn conj_involution(&self) -> Poly {
        let n = self.nvars / 2;
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let mut e = vec![0u16; self.nvars];
            for i in 0..n {
                e[i] = m.0[n + i];
                e[n + i] = m.0[i];
            }
            out.insert(Mono(e), c.conj());
        }
        out
    }

    /// Substitute each variable by the given polynomial.
    pub fn substitute(&self, images: &[Poly]) -> Poly {
        assert_eq!(images.len(), self.nvars);
        let out_nvars = images.first().map(|p| p.nvars).unwrap_or(self.nvars);
        let mut out = Poly::zero(out_nvars);
        for (m, c) in &self.terms {
            let mut term = Poly::constant(out_nvars, c.clone());
            for (v, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul(&images[v].pow(e as u32));
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// Exact division; None when the division leaves a remainder.
    pub fn div_exact(&self, divisor: &Poly) -> Option<Poly> {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        let mut rem = self.clone();
        let mut quot = Poly::zero(self.nvars);
        let (dm, dc) = {
            let (m, c) = divisor.leading().unwrap();
            (m.clone(), c.clone())
        };
        let dcinv = dc.inv();
        while let Some((rm, rc)) = rem.leading().map(|(m, c)| (m.clone(), c.clone())) {
            let q = rm.div(&dm)?;
            let qc = &rc * &dcinv;
            quot.insert(q.clone(), qc.clone());
            let mut piece = Poly::zero(self.nvars);
            piece.terms.insert(q, qc);
            rem = rem.sub(&piece.mul(divisor));
        }
        Some(quot)
    }

    /// Divide all coefficients by the leading coefficient.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => self.clone(),
            Some((_, c)) => self.scale(&c.inv()),
        }
    }

    fn first_active_var(&self, other: &Poly) -> Option<usize> {
        (0..self.nvars).find(|&v| self.depends_on(v) || other.depends_on(v))
    }

    /// View as univariate in `var` with Poly coefficients in the rest.
    fn coeffs_in(&self, var: usize) -> Vec<Poly> {
        let d = self.degree_in(var) as usize;
        let mut out = vec![Poly::zero(self.nvars); d + 1];
        for (m, c) in &self.terms {
            let e = m.0[var] as usize;
            let mut m2 = m.clone();
            m2.0[var] = 0;
            out[e].insert(m2, c.clone());
        }
        out
    }

    fn from_coeffs_in(nvars: usize, var: usize, coeffs: &[Poly]) -> Poly {
        let mut out = Poly::zero(nvars);
        for (e, c) in coeffs.iter().enumerate() {
            for (m, k) in &c.terms {
                let mut m2 = m.clone();
                m2.0[var] = e as u16;
                out.insert(m2, k.clone());
            }
        }
        out
    }

    /// Content with respect to `var`: gcd of the univariate coefficients.
    fn content_in(&self, var: usize) -> Poly {
        let coeffs = self.coeffs_in(var);
        let mut g = Poly::zero(self.nvars);
        for c in coeffs.iter().filter(|c| !c.is_zero()) {
            g = gcd(&g, c);
            if g.is_constant() {
                break;
            }
        }
        g
    }

    pub fn to_latex(&self, names: &[String]) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut parts = Vec::new();
        for (m, c) in self.terms.iter().rev() {
            let mut s = String::new();
            if !c.is_one() || m.is_constant() {
                s.push_str(&format!("{c}"));
            }
            for (v, &e) in m.0.iter().enumerate() {
                if e == 1 {
                    s.push_str(&names[v]);
                } else if e > 1 {
                    s.push_str(&format!("{}^{{{e}}}", names[v]));
                }
            }
            parts.push(s);
        }
        parts.join(" + ")
    }
}

/// Pseudo-remainder of `f` by `g` in the variable `var` (g nonzero in it).
fn pseudo_rem(f: &Poly, g: &Poly, var: usize) -> Poly {
    let dg = g.degree_in(var);
    let gc = g.coeffs_in(var)[dg as usize].clone();
    let mut r = f.clone();
    loop {
        if r.is_zero() {
            return r;
        }
        let dr = r.degree_in(var);
        if dr < dg {
            return r;
        }
        let rc = r.coeffs_in(var)[dr as usize].clone();
        // r <- gc*r - rc * x^(dr-dg) * g
        let mut shift = Poly::zero(f.nvars);
        let mut m = Mono::constant(f.nvars);
        m.0[var] = (dr - dg) as u16;
        shift.terms.insert(m, Scalar::one());
        r = r.mul(&gc).sub(&rc.mul(&shift).mul(g));
    }
}

/// Gcd normalized to monic leading coefficient.
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    if a.is_constant() || b.is_constant() {
        return Poly::one(a.nvars);
    }
    let var = match a.first_active_var(b) {
        Some(v) => v,
        None => return Poly::one(a.nvars),
    };
    if !a.depends_on(var) {
        // gcd divides the content of b with respect to var
        return gcd(a, &b.content_in(var));
    }
    if !b.depends_on(var) {
        return gcd(&a.content_in(var), b);
    }

    let ca = a.content_in(var);
    let cb = b.content_in(var);
    let pa = a.div_exact(&ca).expect("content divides");
    let pb = b.div_exact(&cb).expect("content divides");
    let cg = gcd(&ca, &cb);

    let (mut f, mut g) = if pa.degree_in(var) >= pb.degree_in(var) {
        (pa, pb)
    } else {
        (pb, pa)
    };
    loop {
        let r = pseudo_rem(&f, &g, var);
        if r.is_zero() {
            break;
        }
        if r.degree_in(var) == 0 {
            // coprime in var; gcd is the content part only
            return cg.monic();
        }
        let rc = r.content_in(var);
        let rp = r.div_exact(&rc).expect("content divides");
        f = g;
        g = rp;
    }
    cg.mul(&g).monic()
}

fn fmt_poly(p: &Poly, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if p.is_zero() {
        return write!(f, "0");
    }
    let n = p.nvars / 2;
    let mut first = true;
    for (m, c) in p.terms.iter().rev() {
        if !first {
            write!(f, " + ")?;
        }
        first = false;
        let mut factors = Vec::new();
        for (v, &e) in m.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let name = if v < n {
                format!("z{}", v + 1)
            } else {
                format!("zb{}", v - n + 1)
            };
            if e == 1 {
                factors.push(name);
            } else {
                factors.push(format!("{name}^{e}"));
            }
        }
        if factors.is_empty() {
            write!(f, "{c}")?;
        } else if c.is_one() {
            write!(f, "{}", factors.join("*"))?;
        } else {
            write!(f, "({c})*{}", factors.join("*"))?;
        }
    }
    Ok(())
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_poly(self, f)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_poly(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(n: usize, i: usize) -> Poly {
        Poly::var(2 * n, i)
    }

    fn zb(n: usize, i: usize) -> Poly {
        Poly::var(2 * n, n + i)
    }

    #[test]
    fn ring_ops() {
        let p = z(1, 0).add(&zb(1, 0)); // z + zb
        let q = z(1, 0).sub(&zb(1, 0)); // z - zb
        let prod = p.mul(&q);
        let expect = z(1, 0).pow(2).sub(&zb(1, 0).pow(2));
        assert_eq!(prod, expect);
    }

    #[test]
    fn derivative_and_involution() {
        // p = z^2 * zb + i*z
        let p = z(1, 0)
            .pow(2)
            .mul(&zb(1, 0))
            .add(&z(1, 0).scale(&Scalar::i()));
        let dp = p.deriv(0);
        let expect = z(1, 0)
            .mul(&zb(1, 0))
            .scale(&Scalar::from_int(2))
            .add(&Poly::constant(2, Scalar::i()));
        assert_eq!(dp, expect);
        // involution: z <-> zb, i -> -i
        let pc = p.conj_involution();
        let expect_c = zb(1, 0)
            .pow(2)
            .mul(&z(1, 0))
            .add(&zb(1, 0).scale(&-Scalar::i()));
        assert_eq!(pc, expect_c);
        assert_eq!(pc.conj_involution(), p);
    }

    #[test]
    fn exact_division() {
        let u = z(1, 0).mul(&zb(1, 0));
        let d = Poly::one(2).add(&u); // 1 + z*zb
        let f = d.pow(3);
        let q = f.div_exact(&d).unwrap();
        assert_eq!(q, d.pow(2));
        assert!(f.add(&Poly::one(2)).div_exact(&d).is_none());
    }

    #[test]
    fn gcd_powers_of_common_factor() {
        let u = z(1, 0).mul(&zb(1, 0));
        let d = Poly::one(2).add(&u);
        let a = d.pow(3).mul(&z(1, 0));
        let b = d.pow(2).mul(&zb(1, 0));
        let g = gcd(&a, &b);
        assert_eq!(g, d.pow(2).monic());
    }

    #[test]
    fn gcd_coprime() {
        let a = z(1, 0).add(&Poly::one(2));
        let b = zb(1, 0).add(&Poly::one(2));
        assert_eq!(gcd(&a, &b), Poly::one(2));
    }

    #[test]
    fn gcd_two_vars_mixed() {
        let n = 2;
        let f = z(n, 0).add(&z(n, 1)); // z1 + z2
        let a = f.pow(2).mul(&zb(n, 0));
        let b = f.mul(&zb(n, 0).pow(2));
        let g = gcd(&a, &b);
        assert_eq!(g, f.mul(&zb(n, 0)).monic());
    }

    #[test]
    fn substitution_composes() {
        // p(z, zb) = z*zb; substitute z -> z^2, zb -> 1+zb
        let p = z(1, 0).mul(&zb(1, 0));
        let images = vec![z(1, 0).pow(2), Poly::one(2).add(&zb(1, 0))];
        let q = p.substitute(&images);
        let expect = z(1, 0).pow(2).mul(&Poly::one(2).add(&zb(1, 0)));
        assert_eq!(q, expect);
    }
}
