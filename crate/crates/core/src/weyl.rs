//! Operator calculus on form-valued sections of the complexified Weyl bundle.
//!
//! A section is a finite sum of terms
//!     coeff * dz^I ^ dzb^J (x) y^K yb^L h^m
//! with rational-function coefficients. The form indices I, J are strictly
//! increasing, the fiber multisets K, L sorted. Canonical form (no stored
//! zeros, sorted indices) makes equality decidable: a - b == 0.
//!
//! h is formal throughout; `evaluate_hbar` substitutes h = 1/k exactly and
//! operations then run in `HbarMode::Level(k)`.

use crate::error::{Error, Result};
use crate::geometry::ChartGeometry;
use crate::hpoly::HPoly;
use crate::ratfn::RationalFn;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Truncation bounds for fiber degrees and h powers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trunc {
    pub max_y: u16,
    pub max_ybar: u16,
    pub max_h: u16,
}

impl Trunc {
    pub fn new(max_y: u16, max_ybar: u16, max_h: u16) -> Self {
        Trunc { max_y, max_ybar, max_h }
    }

    pub fn meet(&self, other: &Trunc) -> Trunc {
        Trunc {
            max_y: self.max_y.min(other.max_y),
            max_ybar: self.max_ybar.min(other.max_ybar),
            max_h: self.max_h.min(other.max_h),
        }
    }
}

impl Default for Trunc {
    fn default() -> Self {
        Trunc { max_y: 6, max_ybar: 6, max_h: 12 }
    }
}

/// Per-bound exactness: `true` means the section is a genuine polynomial
/// within that bound, `false` means correct only modulo dropped terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exactness {
    pub y: bool,
    pub ybar: bool,
    pub h: bool,
}

impl Exactness {
    pub fn exact() -> Self {
        Exactness { y: true, ybar: true, h: true }
    }

    pub fn and(&self, other: &Exactness) -> Exactness {
        Exactness { y: self.y && other.y, ybar: self.ybar && other.ybar, h: self.h && other.h }
    }
}

/// Whether h is a formal variable or evaluated at 1/k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum HbarMode {
    Formal,
    Level(Scalar),
}

impl HbarMode {
    pub fn level(&self) -> Option<&Scalar> {
        match self {
            HbarMode::Formal => None,
            HbarMode::Level(k) => Some(k),
        }
    }
}

/// Index data of a single term. Form indices strictly increasing, fiber
/// multisets sorted; chart indices are 0-based.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct TermIndex {
    pub dz: Vec<u8>,
    pub dzbar: Vec<u8>,
    pub y: Vec<u8>,
    pub ybar: Vec<u8>,
    pub hpow: u16,
}

impl TermIndex {
    pub fn scalar() -> Self {
        TermIndex { dz: vec![], dzbar: vec![], y: vec![], ybar: vec![], hpow: 0 }
    }

    pub fn form_degree(&self) -> usize {
        self.dz.len() + self.dzbar.len()
    }

    /// Fiber type (p, q) = (#y, #ybar).
    pub fn fiber_type(&self) -> (usize, usize) {
        (self.y.len(), self.ybar.len())
    }

    /// Weight 2*#ybar + 2*hpow.
    pub fn weight(&self) -> i64 {
        2 * self.ybar.len() as i64 + 2 * self.hpow as i64
    }

    fn canonical(&self) -> bool {
        let strict = |v: &[u8]| v.windows(2).all(|w| w[0] < w[1]);
        let sorted = |v: &[u8]| v.windows(2).all(|w| w[0] <= w[1]);
        strict(&self.dz) && strict(&self.dzbar) && sorted(&self.y) && sorted(&self.ybar)
    }
}

/// Sign of the shuffle sorting the concatenation of two sorted index lists;
/// None when they share an element (wedge vanishes).
fn shuffle_sign(a: &[u8], b: &[u8]) -> Option<i8> {
    let mut inversions = 0usize;
    for &x in a {
        for &y in b {
            if x == y {
                return None;
            }
            if y < x {
                inversions += 1;
            }
        }
    }
    Some(if inversions % 2 == 0 { 1 } else { -1 })
}

fn merge_sorted(a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out
}

fn multiplicity(v: &[u8], x: u8) -> usize {
    v.iter().filter(|&&e| e == x).count()
}

fn remove_one(v: &[u8], x: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.len().saturating_sub(1));
    let mut removed = false;
    for &e in v {
        if !removed && e == x {
            removed = true;
        } else {
            out.push(e);
        }
    }
    out
}

fn insert_sorted(v: &[u8], x: u8) -> Vec<u8> {
    let mut out = v.to_vec();
    let pos = out.partition_point(|&e| e <= x);
    out.insert(pos, x);
    out
}

#[derive(Clone)]
pub struct WeylSection {
    pub n: usize,
    pub trunc: Trunc,
    pub exact: Exactness,
    pub terms: BTreeMap<TermIndex, RationalFn>,
}

/// JSON form: terms as an array of {dzI, dzbarJ, yK, ybarL, hpow, coeff}.
#[derive(Serialize, Deserialize)]
struct TermRepr {
    #[serde(rename = "dzI")]
    dz: Vec<u8>,
    #[serde(rename = "dzbarJ")]
    dzbar: Vec<u8>,
    #[serde(rename = "yK")]
    y: Vec<u8>,
    #[serde(rename = "ybarL")]
    ybar: Vec<u8>,
    hpow: u16,
    coeff: RationalFn,
}

#[derive(Serialize, Deserialize)]
struct SectionRepr {
    n: usize,
    trunc: Trunc,
    exact: Exactness,
    terms: Vec<TermRepr>,
}

impl Serialize for WeylSection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let terms = self
            .terms
            .iter()
            .map(|(i, c)| TermRepr {
                dz: i.dz.clone(),
                dzbar: i.dzbar.clone(),
                y: i.y.clone(),
                ybar: i.ybar.clone(),
                hpow: i.hpow,
                coeff: c.clone(),
            })
            .collect();
        SectionRepr { n: self.n, trunc: self.trunc, exact: self.exact, terms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeylSection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SectionRepr::deserialize(d)?;
        let mut out = WeylSection::zero(repr.n, repr.trunc);
        for t in repr.terms {
            let idx = TermIndex { dz: t.dz, dzbar: t.dzbar, y: t.y, ybar: t.ybar, hpow: t.hpow };
            if !idx.canonical() {
                return Err(serde::de::Error::custom("non-canonical term index"));
            }
            out.insert(idx, t.coeff);
        }
        out.exact = repr.exact;
        Ok(out)
    }
}

impl PartialEq for WeylSection {
    /// Data equality: same chart dimension and identical canonical terms.
    /// Truncation metadata is deliberately not compared.
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.terms == other.terms
    }
}

impl WeylSection {
    pub fn zero(n: usize, trunc: Trunc) -> Self {
        WeylSection { n, trunc, exact: Exactness::exact(), terms: BTreeMap::new() }
    }

    pub fn scalar(n: usize, trunc: Trunc, c: RationalFn) -> Self {
        let mut s = WeylSection::zero(n, trunc);
        s.insert(TermIndex::scalar(), c);
        s
    }

    pub fn scalar_h(n: usize, trunc: Trunc, h: &HPoly) -> Self {
        let mut s = WeylSection::zero(n, trunc);
        for (&p, r) in &h.coeffs {
            assert!(p >= 0, "weyl sections carry nonnegative h powers");
            s.insert(TermIndex { hpow: p as u16, ..TermIndex::scalar() }, r.clone());
        }
        s
    }

    pub fn monomial(n: usize, trunc: Trunc, idx: TermIndex, c: RationalFn) -> Self {
        debug_assert!(idx.canonical());
        let mut s = WeylSection::zero(n, trunc);
        s.insert(idx, c);
        s
    }

    pub fn y_var(n: usize, trunc: Trunc, i: usize) -> Self {
        WeylSection::monomial(
            n,
            trunc,
            TermIndex { y: vec![i as u8], ..TermIndex::scalar() },
            RationalFn::one(n),
        )
    }

    pub fn ybar_var(n: usize, trunc: Trunc, j: usize) -> Self {
        WeylSection::monomial(
            n,
            trunc,
            TermIndex { ybar: vec![j as u8], ..TermIndex::scalar() },
            RationalFn::one(n),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Insert with truncation: out-of-bound terms are dropped and the
    /// corresponding exactness flag cleared.
    pub fn insert(&mut self, idx: TermIndex, c: RationalFn) {
        if c.is_zero() {
            return;
        }
        if idx.y.len() > self.trunc.max_y as usize {
            self.exact.y = false;
            return;
        }
        if idx.ybar.len() > self.trunc.max_ybar as usize {
            self.exact.ybar = false;
            return;
        }
        if idx.hpow > self.trunc.max_h {
            self.exact.h = false;
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(idx) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get().add(&c);
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &WeylSection) -> WeylSection {
        debug_assert_eq!(self.n, other.n);
        let mut out = WeylSection {
            n: self.n,
            trunc: self.trunc.meet(&other.trunc),
            exact: self.exact.and(&other.exact),
            terms: BTreeMap::new(),
        };
        for (idx, c) in self.terms.iter().chain(other.terms.iter()) {
            out.insert(idx.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &WeylSection) -> WeylSection {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> WeylSection {
        WeylSection {
            n: self.n,
            trunc: self.trunc,
            exact: self.exact,
            terms: self.terms.iter().map(|(i, c)| (i.clone(), c.neg())).collect(),
        }
    }

    pub fn scale(&self, c: &Scalar) -> WeylSection {
        if c.is_zero() {
            return WeylSection::zero(self.n, self.trunc);
        }
        WeylSection {
            n: self.n,
            trunc: self.trunc,
            exact: self.exact,
            terms: self.terms.iter().map(|(i, k)| (i.clone(), k.scale(c))).collect(),
        }
    }

    pub fn scale_ratfn(&self, r: &RationalFn) -> WeylSection {
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (i, c) in &self.terms {
            out.insert(i.clone(), c.mul(r));
        }
        out
    }

    /// Multiply by h^shift.
    pub fn scale_hpow(&self, shift: u16) -> WeylSection {
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (i, c) in &self.terms {
            let mut idx = i.clone();
            idx.hpow += shift;
            out.insert(idx, c.clone());
        }
        out
    }

    /// Commutative product: wedge the forms, merge the fiber multisets.
    pub fn product(&self, other: &WeylSection) -> WeylSection {
        debug_assert_eq!(self.n, other.n);
        let mut out = WeylSection {
            n: self.n,
            trunc: self.trunc.meet(&other.trunc),
            exact: self.exact.and(&other.exact),
            terms: BTreeMap::new(),
        };
        for (ia, ca) in &self.terms {
            for (ib, cb) in &other.terms {
                let Some((idx, sign)) = merge_term_indices(ia, ib) else { continue };
                let mut c = ca.mul(cb);
                if sign < 0 {
                    c = c.neg();
                }
                out.insert(idx, c);
            }
        }
        out
    }

    /// Maximum term weight (2*#ybar + 2*hpow); zero for the empty section.
    pub fn weight(&self) -> i64 {
        self.terms.keys().map(TermIndex::weight).max().unwrap_or(0)
    }

    /// Discard terms of weight > cap. Exact projection.
    pub fn filtration_cut(&self, cap: i64) -> WeylSection {
        WeylSection {
            n: self.n,
            trunc: self.trunc,
            exact: self.exact,
            terms: self
                .terms
                .iter()
                .filter(|(i, _)| i.weight() <= cap)
                .map(|(i, c)| (i.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn max_y_degree(&self) -> usize {
        self.terms.keys().map(|i| i.y.len()).max().unwrap_or(0)
    }

    pub fn max_ybar_degree(&self) -> usize {
        self.terms.keys().map(|i| i.ybar.len()).max().unwrap_or(0)
    }

    pub fn max_hpow(&self) -> u16 {
        self.terms.keys().map(|i| i.hpow).max().unwrap_or(0)
    }

    pub fn is_hbar_free(&self) -> bool {
        self.terms.keys().all(|i| i.hpow == 0)
    }

    /// Restrict to terms whose y-degree lies in the window (inclusive).
    pub fn y_degree_part(&self, lo: usize, hi: usize) -> WeylSection {
        WeylSection {
            n: self.n,
            trunc: self.trunc,
            exact: self.exact,
            terms: self
                .terms
                .iter()
                .filter(|(i, _)| (lo..=hi).contains(&i.y.len()))
                .map(|(i, c)| (i.clone(), c.clone()))
                .collect(),
        }
    }

    /// Projection onto terms with no dz factor and no y factor.
    pub fn pi_0star(&self) -> WeylSection {
        WeylSection {
            n: self.n,
            trunc: self.trunc,
            exact: self.exact,
            terms: self
                .terms
                .iter()
                .filter(|(i, _)| i.dz.is_empty() && i.y.is_empty())
                .map(|(i, c)| (i.clone(), c.clone()))
                .collect(),
        }
    }

    /// Projection onto terms with no dzb factor and no ybar factor.
    pub fn pi_star0(&self) -> WeylSection {
        WeylSection {
            n: self.n,
            trunc: self.trunc,
            exact: self.exact,
            terms: self
                .terms
                .iter()
                .filter(|(i, _)| i.dzbar.is_empty() && i.ybar.is_empty())
                .map(|(i, c)| (i.clone(), c.clone()))
                .collect(),
        }
    }

    /// Symbol map: set all fiber variables to zero, keep scalar 0-forms.
    pub fn symbol(&self) -> HPoly {
        let mut h = HPoly::zero(self.n);
        for (i, c) in &self.terms {
            if i.dz.is_empty() && i.dzbar.is_empty() && i.y.is_empty() && i.ybar.is_empty() {
                h.insert(i.hpow as i32, c.clone());
            }
        }
        h
    }

    /// delta^{1,0}: dz^i ^ d/dy^i.
    pub fn delta10(&self) -> WeylSection {
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (idx, c) in &self.terms {
            let mut seen = [false; 256];
            for &i in &idx.y {
                if seen[i as usize] {
                    continue;
                }
                seen[i as usize] = true;
                let mult = multiplicity(&idx.y, i);
                let Some(sign) = shuffle_sign(&[i], &idx.dz) else { continue };
                let mut t = idx.clone();
                t.dz = insert_sorted(&idx.dz, i);
                t.y = remove_one(&idx.y, i);
                let mut coeff = c.scale(&Scalar::from_int(mult as i64));
                if sign < 0 {
                    coeff = coeff.neg();
                }
                out.insert(t, coeff);
            }
        }
        out
    }

    /// delta^{0,1}: dzb^j ^ d/dyb^j.
    pub fn delta01(&self) -> WeylSection {
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (idx, c) in &self.terms {
            let cross = if idx.dz.len() % 2 == 0 { 1i64 } else { -1 };
            let mut seen = [false; 256];
            for &j in &idx.ybar {
                if seen[j as usize] {
                    continue;
                }
                seen[j as usize] = true;
                let mult = multiplicity(&idx.ybar, j);
                let Some(sign) = shuffle_sign(&[j], &idx.dzbar) else { continue };
                let mut t = idx.clone();
                t.dzbar = insert_sorted(&idx.dzbar, j);
                t.ybar = remove_one(&idx.ybar, j);
                let mut coeff = c.scale(&Scalar::from_int(mult as i64 * cross));
                if sign < 0 {
                    coeff = coeff.neg();
                }
                out.insert(t, coeff);
            }
        }
        out
    }

    pub fn delta(&self) -> WeylSection {
        self.delta10().add(&self.delta01())
    }

    /// (delta^{1,0})^{-1}: per-term (1/(p1+p2)) y^k iota_{dz^k}; zero on
    /// terms with p1 + p2 = 0.
    pub fn delta10_inv(&self) -> WeylSection {
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (idx, c) in &self.terms {
            let norm = idx.dz.len() + idx.y.len();
            if norm == 0 {
                continue;
            }
            let factor = Scalar::from_ratio(1, norm as i64);
            for (pos, &k) in idx.dz.iter().enumerate() {
                let mut t = idx.clone();
                t.dz.remove(pos);
                t.y = insert_sorted(&idx.y, k);
                let mut coeff = c.scale(&factor);
                if pos % 2 == 1 {
                    coeff = coeff.neg();
                }
                out.insert(t, coeff);
            }
        }
        out
    }

    /// (delta^{0,1})^{-1}: per-term (1/(q1+q2)) yb^j iota_{dzb^j}.
    pub fn delta01_inv(&self) -> WeylSection {
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (idx, c) in &self.terms {
            let norm = idx.dzbar.len() + idx.ybar.len();
            if norm == 0 {
                continue;
            }
            let factor = Scalar::from_ratio(1, norm as i64);
            let cross = if idx.dz.len() % 2 == 0 { 1i64 } else { -1 };
            for (pos, &j) in idx.dzbar.iter().enumerate() {
                let mut t = idx.clone();
                t.dzbar.remove(pos);
                t.ybar = insert_sorted(&idx.ybar, j);
                let mut coeff = c.scale(&factor).scale(&Scalar::from_int(cross));
                if pos % 2 == 1 {
                    coeff = coeff.neg();
                }
                out.insert(t, coeff);
            }
        }
        out
    }

    /// Homotopy inverse for the full fiberwise de Rham differential:
    /// (1/(p+q+a+b)) (y^k iota_{dz^k} + yb^j iota_{dzb^j}).
    pub fn delta_inv(&self) -> WeylSection {
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (idx, c) in &self.terms {
            let norm = idx.dz.len() + idx.dzbar.len() + idx.y.len() + idx.ybar.len();
            if norm == 0 {
                continue;
            }
            let factor = Scalar::from_ratio(1, norm as i64);
            for (pos, &k) in idx.dz.iter().enumerate() {
                let mut t = idx.clone();
                t.dz.remove(pos);
                t.y = insert_sorted(&idx.y, k);
                let mut coeff = c.scale(&factor);
                if pos % 2 == 1 {
                    coeff = coeff.neg();
                }
                out.insert(t, coeff);
            }
            let cross = if idx.dz.len() % 2 == 0 { 1i64 } else { -1 };
            for (pos, &j) in idx.dzbar.iter().enumerate() {
                let mut t = idx.clone();
                t.dzbar.remove(pos);
                t.ybar = insert_sorted(&idx.ybar, j);
                let mut coeff = c.scale(&factor).scale(&Scalar::from_int(cross));
                if pos % 2 == 1 {
                    coeff = coeff.neg();
                }
                out.insert(t, coeff);
            }
        }
        out
    }

    /// (1,0)-part of the Levi-Civita extension: d_z on coefficients plus
    /// Gamma contraction on the y slots.
    pub fn nabla10(&self, g: &ChartGeometry) -> Result<WeylSection> {
        if self.n != g.n {
            return Err(Error::DimensionMismatch(self.n, g.n));
        }
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (idx, c) in &self.terms {
            for v in 0..self.n {
                let dc = c.deriv(v);
                if dc.is_zero() {
                    continue;
                }
                if let Some(sign) = shuffle_sign(&[v as u8], &idx.dz) {
                    let mut t = idx.clone();
                    t.dz = insert_sorted(&idx.dz, v as u8);
                    out.insert(t, if sign < 0 { dc.neg() } else { dc });
                }
            }
            let mut seen = [false; 256];
            for &i in &idx.y {
                if seen[i as usize] {
                    continue;
                }
                seen[i as usize] = true;
                let mult = multiplicity(&idx.y, i) as i64;
                for a in 0..self.n {
                    let Some(sign) = shuffle_sign(&[a as u8], &idx.dz) else { continue };
                    for b in 0..self.n {
                        let gamma = g.gamma(i as usize, a, b);
                        if gamma.is_zero() {
                            continue;
                        }
                        let mut t = idx.clone();
                        t.dz = insert_sorted(&idx.dz, a as u8);
                        t.y = insert_sorted(&remove_one(&idx.y, i), b as u8);
                        let mut coeff = c.mul(gamma).scale(&Scalar::from_int(-mult));
                        if sign < 0 {
                            coeff = coeff.neg();
                        }
                        out.insert(t, coeff);
                    }
                }
            }
        }
        Ok(out)
    }

    /// (0,1)-part: d_zb on coefficients plus conjugate Gamma on yb slots.
    pub fn nabla01(&self, g: &ChartGeometry) -> Result<WeylSection> {
        if self.n != g.n {
            return Err(Error::DimensionMismatch(self.n, g.n));
        }
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (idx, c) in &self.terms {
            let cross = if idx.dz.len() % 2 == 0 { 1i64 } else { -1 };
            for v in 0..self.n {
                let dc = c.d_zb(v);
                if dc.is_zero() {
                    continue;
                }
                if let Some(sign) = shuffle_sign(&[v as u8], &idx.dzbar) {
                    let mut t = idx.clone();
                    t.dzbar = insert_sorted(&idx.dzbar, v as u8);
                    let mut coeff = dc.scale(&Scalar::from_int(cross));
                    if sign < 0 {
                        coeff = coeff.neg();
                    }
                    out.insert(t, coeff);
                }
            }
            let mut seen = [false; 256];
            for &j in &idx.ybar {
                if seen[j as usize] {
                    continue;
                }
                seen[j as usize] = true;
                let mult = multiplicity(&idx.ybar, j) as i64;
                for a in 0..self.n {
                    let Some(sign) = shuffle_sign(&[a as u8], &idx.dzbar) else { continue };
                    for b in 0..self.n {
                        let gamma = g.gamma_bar(j as usize, a, b);
                        if gamma.is_zero() {
                            continue;
                        }
                        let mut t = idx.clone();
                        t.dzbar = insert_sorted(&idx.dzbar, a as u8);
                        t.ybar = insert_sorted(&remove_one(&idx.ybar, j), b as u8);
                        let mut coeff = c.mul(&gamma).scale(&Scalar::from_int(-mult * cross));
                        if sign < 0 {
                            coeff = coeff.neg();
                        }
                        out.insert(t, coeff);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn nabla(&self, g: &ChartGeometry) -> Result<WeylSection> {
        Ok(self.nabla10(g)?.add(&self.nabla01(g)?))
    }

    /// (delta^{1,0})^{-1} after nabla^{1,0}; raises y-degree by one.
    pub fn nabla_tilde10(&self, g: &ChartGeometry) -> Result<WeylSection> {
        Ok(self.nabla10(g)?.delta10_inv())
    }

    /// Exact substitution h -> 1/k; the result is h-free.
    pub fn evaluate_hbar(&self, k: &Scalar) -> Result<WeylSection> {
        if k.is_zero() {
            return Err(Error::ZeroLevel);
        }
        let kinv = k.inv();
        let mut out = WeylSection::zero(self.n, self.trunc);
        out.exact = self.exact;
        for (idx, c) in &self.terms {
            let mut t = idx.clone();
            let p = t.hpow;
            t.hpow = 0;
            out.insert(t, c.scale(&kinv.pow(p as u32)));
        }
        Ok(out)
    }

    pub fn to_latex(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut parts = Vec::new();
        for (idx, c) in &self.terms {
            let mut s = format!("\\left({}\\right)", c.to_latex());
            for &i in &idx.dz {
                s.push_str(&format!(" dz^{{{}}}", i + 1));
            }
            for &j in &idx.dzbar {
                s.push_str(&format!(" d\\bar{{z}}^{{{}}}", j + 1));
            }
            for &i in &idx.y {
                s.push_str(&format!(" y^{{{}}}", i + 1));
            }
            for &j in &idx.ybar {
                s.push_str(&format!(" \\bar{{y}}^{{{}}}", j + 1));
            }
            if idx.hpow == 1 {
                s.push_str(" \\hbar");
            } else if idx.hpow > 1 {
                s.push_str(&format!(" \\hbar^{{{}}}", idx.hpow));
            }
            parts.push(s);
        }
        parts.join(" + ")
    }
}

/// Wedge-merge two term indices: forms concatenate with Koszul sign, fiber
/// multisets merge, h powers add. None when the wedge vanishes.
fn merge_term_indices(a: &TermIndex, b: &TermIndex) -> Option<(TermIndex, i8)> {
    let s1 = shuffle_sign(&a.dz, &b.dz)?;
    let s2 = shuffle_sign(&a.dzbar, &b.dzbar)?;
    // b's dz block crosses a's dzbar block
    let cross = if (a.dzbar.len() * b.dz.len()) % 2 == 0 { 1 } else { -1 };
    Some((
        TermIndex {
            dz: merge_sorted(&a.dz, &b.dz),
            dzbar: merge_sorted(&a.dzbar, &b.dzbar),
            y: merge_sorted(&a.y, &b.y),
            ybar: merge_sorted(&a.ybar, &b.ybar),
            hpow: a.hpow + b.hpow,
        },
        s1 * s2 * cross,
    ))
}

/// Fiberwise Wick product: pairings contract d/dy on the left factor with
/// d/dyb on the right against omega^{i jbar}, weighted h^k / k!.
pub fn wick_mul(
    a: &WeylSection,
    b: &WeylSection,
    g: &ChartGeometry,
    mode: &HbarMode,
) -> Result<WeylSection> {
    if a.n != g.n || b.n != g.n {
        return Err(Error::DimensionMismatch(a.n.max(b.n), g.n));
    }
    if mode.level().is_some() && (!a.is_hbar_free() || !b.is_hbar_free()) {
        return Err(Error::HbarModeMismatch { expected: "h-free (evaluated)", found: "formal" });
    }
    let mut out = WeylSection {
        n: a.n,
        trunc: a.trunc.meet(&b.trunc),
        exact: a.exact.and(&b.exact),
        terms: BTreeMap::new(),
    };
    for (ia, ca) in &a.terms {
        for (ib, cb) in &b.terms {
            let Some((base, sign)) = merge_term_indices(ia, ib) else { continue };
            let mut c0 = ca.mul(cb);
            if sign < 0 {
                c0 = c0.neg();
            }
            // contraction states: (remaining y of a, remaining ybar of b, coeff)
            let mut states: Vec<(Vec<u8>, Vec<u8>, RationalFn)> =
                vec![(ia.y.clone(), ib.ybar.clone(), c0)];
            let mut k = 0u32;
            let mut factorial = Scalar::one();
            loop {
                if k > 0 {
                    factorial = factorial * Scalar::from_int(k as i64);
                }
                let weight = match mode {
                    HbarMode::Formal => factorial.inv(),
                    HbarMode::Level(kv) => kv.inv().pow(k) * factorial.inv(),
                };
                for (ya, ybb, c) in &states {
                    let mut idx = base.clone();
                    idx.y = merge_sorted(ya, &ib.y);
                    idx.ybar = merge_sorted(&ia.ybar, ybb);
                    if let HbarMode::Formal = mode {
                        idx.hpow = base.hpow + k as u16;
                    }
                    out.insert(idx, c.scale(&weight));
                }
                let mut next: Vec<(Vec<u8>, Vec<u8>, RationalFn)> = Vec::new();
                for (ya, ybb, c) in &states {
                    if ya.is_empty() || ybb.is_empty() {
                        continue;
                    }
                    let mut seen_i = [false; 256];
                    for &i in ya {
                        if seen_i[i as usize] {
                            continue;
                        }
                        seen_i[i as usize] = true;
                        let mi = multiplicity(ya, i) as i64;
                        let mut seen_j = [false; 256];
                        for &j in ybb {
                            if seen_j[j as usize] {
                                continue;
                            }
                            seen_j[j as usize] = true;
                            let mj = multiplicity(ybb, j) as i64;
                            let p = g.pairing(i as usize, j as usize);
                            if p.is_zero() {
                                continue;
                            }
                            next.push((
                                remove_one(ya, i),
                                remove_one(ybb, j),
                                c.mul(p).scale(&Scalar::from_int(mi * mj)),
                            ));
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                states = next;
                k += 1;
            }
        }
    }
    Ok(out)
}

/// Graded bracket by form degree: [a, b] = a*b - (-1)^{|a||b|} b*a.
pub fn graded_bracket(
    a: &WeylSection,
    b: &WeylSection,
    g: &ChartGeometry,
    mode: &HbarMode,
) -> Result<WeylSection> {
    let split = |s: &WeylSection| -> (WeylSection, WeylSection) {
        let mut even = WeylSection::zero(s.n, s.trunc);
        let mut odd = WeylSection::zero(s.n, s.trunc);
        even.exact = s.exact;
        odd.exact = s.exact;
        for (i, c) in &s.terms {
            if i.form_degree() % 2 == 0 {
                even.insert(i.clone(), c.clone());
            } else {
                odd.insert(i.clone(), c.clone());
            }
        }
        (even, odd)
    };
    let (ae, ao) = split(a);
    let (be, bo) = split(b);
    let mut out = WeylSection::zero(a.n, a.trunc.meet(&b.trunc));
    // only odd*odd flips the sign of the reversed product
    for (x, y, sgn) in [
        (&ae, &be, 1i64),
        (&ae, &bo, 1),
        (&ao, &be, 1),
        (&ao, &bo, -1),
    ] {
        if x.is_zero() || y.is_zero() {
            continue;
        }
        let fwd = wick_mul(x, y, g, mode)?;
        let rev = wick_mul(y, x, g, mode)?;
        out = out.add(&fwd).sub(&rev.scale(&Scalar::from_int(sgn)));
    }
    Ok(out)
}

/// (1/h)[a, b]: in formal mode the bracket must have no h-free part; at a
/// level k the division is multiplication by k.
pub fn bracket_over_hbar(
    a: &WeylSection,
    b: &WeylSection,
    g: &ChartGeometry,
    mode: &HbarMode,
) -> Result<WeylSection> {
    let br = graded_bracket(a, b, g, mode)?;
    div_hbar(&br, mode)
}

/// Divide by h: shift h powers down in formal mode, multiply by k at level k.
pub fn div_hbar(s: &WeylSection, mode: &HbarMode) -> Result<WeylSection> {
    match mode {
        HbarMode::Formal => {
            let mut out = WeylSection::zero(s.n, s.trunc);
            out.exact = s.exact;
            for (idx, c) in &s.terms {
                if idx.hpow == 0 {
                    return Err(Error::HbarDivision(format!("{idx:?} : {c}")));
                }
                let mut t = idx.clone();
                t.hpow -= 1;
                out.insert(t, c.clone());
            }
            Ok(out)
        }
        HbarMode::Level(k) => Ok(s.scale(k)),
    }
}

fn fmt_section(s: &WeylSection, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if s.is_zero() {
        return write!(f, "0");
    }
    let mut first = true;
    for (idx, c) in &s.terms {
        if !first {
            write!(f, " + ")?;
        }
        first = false;
        write!(f, "({c})")?;
        for &i in &idx.dz {
            write!(f, " dz{}", i + 1)?;
        }
        for &j in &idx.dzbar {
            write!(f, " dzb{}", j + 1)?;
        }
        for &i in &idx.y {
            write!(f, " y{}", i + 1)?;
        }
        for &j in &idx.ybar {
            write!(f, " yb{}", j + 1)?;
        }
        if idx.hpow > 0 {
            write!(f, " h^{}", idx.hpow)?;
        }
    }
    Ok(())
}

impl fmt::Display for WeylSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_section(self, f)
    }
}

impl fmt::Debug for WeylSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_section(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, GeometryPreset};

    fn flat1() -> ChartGeometry {
        build_geometry(GeometryPreset::Flat(1)).unwrap()
    }

    fn tr() -> Trunc {
        Trunc::default()
    }

    fn y(g: &ChartGeometry) -> WeylSection {
        WeylSection::y_var(g.n, tr(), 0)
    }

    fn yb(g: &ChartGeometry) -> WeylSection {
        WeylSection::ybar_var(g.n, tr(), 0)
    }

    fn hbar_term(n: usize) -> WeylSection {
        WeylSection::monomial(
            n,
            tr(),
            TermIndex { hpow: 1, ..TermIndex::scalar() },
            RationalFn::one(n),
        )
    }

    #[test]
    fn wick_flat_basic() {
        let g = flat1();
        let f = &HbarMode::Formal;
        // y * yb = y yb + h
        let lhs = wick_mul(&y(&g), &yb(&g), &g, f).unwrap();
        let expect = y(&g).product(&yb(&g)).add(&hbar_term(1));
        assert!(lhs.sub(&expect).is_zero());
        // yb * y = yb y with no h term
        let rhs = wick_mul(&yb(&g), &y(&g), &g, f).unwrap();
        assert!(rhs.sub(&y(&g).product(&yb(&g))).is_zero());
    }

    #[test]
    fn wick_fiber_constants_multiply() {
        let g = flat1();
        let f = &HbarMode::Formal;
        let a = WeylSection::scalar(1, tr(), RationalFn::z(1, 0));
        let b = WeylSection::scalar(1, tr(), RationalFn::zb(1, 0).pow(2));
        let p = wick_mul(&a, &b, &g, f).unwrap();
        assert!(p.sub(&a.product(&b)).is_zero());
    }

    #[test]
    fn bracket_flat() {
        let g = flat1();
        let f = &HbarMode::Formal;
        let br = graded_bracket(&y(&g), &yb(&g), &g, f).unwrap();
        assert!(br.sub(&hbar_term(1)).is_zero());
        let br2 = graded_bracket(&yb(&g), &y(&g), &g, f).unwrap();
        assert!(br2.add(&hbar_term(1)).is_zero());
        // [a, a] = 0 for even form degree
        let a = y(&g).product(&yb(&g)).add(&WeylSection::scalar(1, tr(), RationalFn::z(1, 0)));
        assert!(graded_bracket(&a, &a, &g, f).unwrap().is_zero());
    }

    #[test]
    fn bracket_engine_convention_value() {
        // [omega_{1 jbar} yb^j, (dg/dz) y] = -h dg/dz for holomorphic g = z^2
        let g = flat1();
        let f = &HbarMode::Formal;
        let a = yb(&g); // omega = 1 on flat
        let dg = RationalFn::z(1, 0).scale(&Scalar::from_int(2));
        let b = y(&g).scale_ratfn(&dg);
        let br = graded_bracket(&a, &b, &g, f).unwrap();
        let expect = WeylSection::monomial(
            1,
            tr(),
            TermIndex { hpow: 1, ..TermIndex::scalar() },
            dg.neg(),
        );
        assert!(br.sub(&expect).is_zero());
    }

    #[test]
    fn wick_associativity_fixed_triples() {
        let g = flat1();
        let f = &HbarMode::Formal;
        let a = y(&g).product(&y(&g)).add(&yb(&g).scale_ratfn(&RationalFn::z(1, 0)));
        let b = y(&g).product(&yb(&g)).add(&WeylSection::scalar(1, tr(), RationalFn::zb(1, 0)));
        let c = yb(&g).product(&yb(&g)).add(&y(&g));
        let ab_c = wick_mul(&wick_mul(&a, &b, &g, f).unwrap(), &c, &g, f).unwrap();
        let a_bc = wick_mul(&a, &wick_mul(&b, &c, &g, f).unwrap(), &g, f).unwrap();
        assert!(ab_c.sub(&a_bc).is_zero());
    }

    #[test]
    fn wick_associativity_curved() {
        let g = build_geometry(GeometryPreset::Cp1).unwrap();
        let f = &HbarMode::Formal;
        let a = y(&g).product(&y(&g)).scale_ratfn(&g.omega[0][0]);
        let b = yb(&g).add(&y(&g).scale_ratfn(&RationalFn::z(1, 0)));
        let c = yb(&g).product(&yb(&g));
        let ab_c = wick_mul(&wick_mul(&a, &b, &g, f).unwrap(), &c, &g, f).unwrap();
        let a_bc = wick_mul(&a, &wick_mul(&b, &c, &g, f).unwrap(), &g, f).unwrap();
        assert!(ab_c.sub(&a_bc).is_zero());
    }

    #[test]
    fn delta_examples() {
        let g = flat1();
        // delta10(y^2) = 2 dz (x) y
        let y2 = y(&g).product(&y(&g));
        let d = y2.delta10();
        let expect = WeylSection::monomial(
            1,
            tr(),
            TermIndex { dz: vec![0], y: vec![0], ..TermIndex::scalar() },
            RationalFn::constant(1, Scalar::from_int(2)),
        );
        assert!(d.sub(&expect).is_zero());
        assert!(yb(&g).delta10().is_zero());
        let f = WeylSection::scalar(1, tr(), RationalFn::z(1, 0));
        assert!(f.delta().is_zero());
    }

    #[test]
    fn delta_inverse_examples() {
        let n = 1;
        let dz = WeylSection::monomial(
            n,
            tr(),
            TermIndex { dz: vec![0], ..TermIndex::scalar() },
            RationalFn::one(n),
        );
        // (delta10)^{-1}(dz) = y
        assert!(dz.delta10_inv().sub(&WeylSection::y_var(n, tr(), 0)).is_zero());
        // (delta10)^{-1}(dz (x) y) = y^2 / 2
        let dzy = WeylSection::monomial(
            n,
            tr(),
            TermIndex { dz: vec![0], y: vec![0], ..TermIndex::scalar() },
            RationalFn::one(n),
        );
        let half_y2 = WeylSection::monomial(
            n,
            tr(),
            TermIndex { y: vec![0, 0], ..TermIndex::scalar() },
            RationalFn::constant(n, Scalar::from_ratio(1, 2)),
        );
        assert!(dzy.delta10_inv().sub(&half_y2).is_zero());
    }

    fn messy_section(n: usize) -> WeylSection {
        // a deliberately mixed fixed section exercising all slots
        let mut s = WeylSection::zero(n, tr());
        s.insert(
            TermIndex { dz: vec![0], dzbar: vec![0], y: vec![0, 0], ybar: vec![0], hpow: 1 },
            RationalFn::z(n, 0),
        );
        s.insert(
            TermIndex { dz: vec![], dzbar: vec![0], y: vec![0], ybar: vec![0, 0], hpow: 0 },
            RationalFn::zb(n, 0).add(&RationalFn::one(n)),
        );
        s.insert(
            TermIndex { dz: vec![0], dzbar: vec![], y: vec![], ybar: vec![0], hpow: 2 },
            RationalFn::constant(n, Scalar::i()),
        );
        s.insert(TermIndex::scalar(), RationalFn::z(n, 0).mul(&RationalFn::zb(n, 0)));
        s
    }

    #[test]
    fn delta_squares_to_zero_and_homotopy() {
        let s = messy_section(1);
        assert!(s.delta10().delta10().is_zero());
        assert!(s.delta01().delta01().is_zero());
        assert!(s.delta().delta().is_zero());
        // id - pi_{0,*} = d10 d10inv + d10inv d10
        let lhs = s.sub(&s.pi_0star());
        let rhs = s.delta10_inv().delta10().add(&s.delta10().delta10_inv());
        assert!(lhs.sub(&rhs).is_zero());
        // (0,1) twin
        let lhs2 = s.sub(&s.pi_star0());
        let rhs2 = s.delta01_inv().delta01().add(&s.delta01().delta01_inv());
        assert!(lhs2.sub(&rhs2).is_zero());
        // full homotopy: id - pi_00 = delta delta_inv + delta_inv delta
        let scalar_part =
            WeylSection::scalar(1, tr(), RationalFn::z(1, 0).mul(&RationalFn::zb(1, 0)));
        let lhs3 = s.sub(&scalar_part);
        let rhs3 = s.delta_inv().delta().add(&s.delta().delta_inv());
        assert!(lhs3.sub(&rhs3).is_zero());
    }

    #[test]
    fn pi_projections() {
        let g = flat1();
        let f = WeylSection::scalar(1, tr(), RationalFn::z(1, 0));
        let s = f.add(&y(&g)).add(&yb(&g));
        let p = s.pi_0star();
        assert!(p.sub(&f.add(&yb(&g))).is_zero());
        assert!(p.pi_0star().sub(&p).is_zero());
        let dz_yb = WeylSection::monomial(
            1,
            tr(),
            TermIndex { dz: vec![0], dzbar: vec![], y: vec![], ybar: vec![0], hpow: 0 },
            RationalFn::one(1),
        );
        assert!(dz_yb.pi_0star().is_zero());
    }

    #[test]
    fn symbol_examples() {
        let g = flat1();
        let f = RationalFn::z(1, 0).mul(&RationalFn::zb(1, 0));
        let s = WeylSection::scalar(1, tr(), f.clone())
            .add(&y(&g).scale_ratfn(&RationalFn::zb(1, 0)));
        assert_eq!(s.symbol(), HPoly::from_ratfn(f.clone()));
        let hf = WeylSection::scalar(1, tr(), f.clone()).scale_hpow(1);
        assert_eq!(hf.symbol(), HPoly::from_ratfn(f).scale_hpow(1));
    }

    #[test]
    fn nabla_flat_is_exterior_derivative() {
        let g = flat1();
        let s = WeylSection::scalar(1, tr(), RationalFn::z(1, 0).mul(&RationalFn::zb(1, 0)));
        let ds = s.nabla(&g).unwrap();
        let mut expect = WeylSection::zero(1, tr());
        expect.insert(
            TermIndex { dz: vec![0], ..TermIndex::scalar() },
            RationalFn::zb(1, 0),
        );
        expect.insert(
            TermIndex { dzbar: vec![0], ..TermIndex::scalar() },
            RationalFn::z(1, 0),
        );
        assert!(ds.sub(&expect).is_zero());
    }

    #[test]
    fn metric_parallelism_every_preset() {
        for preset in [
            GeometryPreset::Flat(1),
            GeometryPreset::Flat(2),
            GeometryPreset::Cp1,
            GeometryPreset::Disc,
        ] {
            let g = build_geometry(preset.clone()).unwrap();
            // omega_{i jbar} dzb^j (x) y^i
            let mut s = WeylSection::zero(g.n, tr());
            for i in 0..g.n {
                for j in 0..g.n {
                    s.insert(
                        TermIndex {
                            dzbar: vec![j as u8],
                            y: vec![i as u8],
                            ..TermIndex::scalar()
                        },
                        g.omega[i][j].clone(),
                    );
                }
            }
            assert!(s.nabla(&g).unwrap().is_zero(), "not parallel on {preset}");
            // conjugate block
            let mut t = WeylSection::zero(g.n, tr());
            for i in 0..g.n {
                for j in 0..g.n {
                    t.insert(
                        TermIndex {
                            dz: vec![i as u8],
                            ybar: vec![j as u8],
                            ..TermIndex::scalar()
                        },
                        g.omega[i][j].clone(),
                    );
                }
            }
            assert!(t.nabla(&g).unwrap().is_zero(), "conjugate not parallel on {preset}");
        }
    }

    /// R_nabla as a section: R_{i jbar k lbar} dz^i ^ dzb^j (x) y^k yb^l.
    fn curvature_section(g: &ChartGeometry) -> WeylSection {
        let mut s = WeylSection::zero(g.n, tr());
        for i in 0..g.n {
            for j in 0..g.n {
                for k in 0..g.n {
                    for l in 0..g.n {
                        s.insert(
                            TermIndex {
                                dz: vec![i as u8],
                                dzbar: vec![j as u8],
                                y: vec![k as u8],
                                ybar: vec![l as u8],
                                hpow: 0,
                            },
                            g.curvature[i][j][k][l].clone(),
                        );
                    }
                }
            }
        }
        s
    }

    #[test]
    fn nabla_squared_is_curvature_bracket() {
        let g = build_geometry(GeometryPreset::Cp1).unwrap();
        let f = &HbarMode::Formal;
        let r = curvature_section(&g);
        let s = messy_section(1);
        let lhs = s.nabla(&g).unwrap().nabla(&g).unwrap();
        let rhs = bracket_over_hbar(&r, &s, &g, f).unwrap();
        assert!(lhs.sub(&rhs).is_zero());
    }

    #[test]
    fn nabla_is_wick_derivation() {
        let g = build_geometry(GeometryPreset::Cp1).unwrap();
        let f = &HbarMode::Formal;
        let a = y(&g).product(&y(&g)).scale_ratfn(&RationalFn::zb(1, 0));
        let b = yb(&g).scale_ratfn(&g.omega[0][0]);
        let lhs = wick_mul(&a, &b, &g, f).unwrap().nabla(&g).unwrap();
        let rhs = wick_mul(&a.nabla(&g).unwrap(), &b, &g, f)
            .unwrap()
            .add(&wick_mul(&a, &b.nabla(&g).unwrap(), &g, f).unwrap());
        // a is a 0-form so no Koszul sign on the second term
        assert!(lhs.sub(&rhs).is_zero());
    }

    #[test]
    fn nabla_tilde_examples() {
        let g = flat1();
        let z = WeylSection::scalar(1, tr(), RationalFn::z(1, 0));
        let t1 = z.nabla_tilde10(&g).unwrap();
        assert!(t1.sub(&y(&g)).is_zero());
        assert!(t1.nabla_tilde10(&g).unwrap().is_zero());
        let c = WeylSection::scalar(1, tr(), RationalFn::one(1));
        assert!(c.nabla_tilde10(&g).unwrap().is_zero());
    }

    #[test]
    fn nabla_tilde_raises_y_degree_by_one() {
        let g = build_geometry(GeometryPreset::Cp1).unwrap();
        let s = y(&g).product(&y(&g)).scale_ratfn(&RationalFn::zb(1, 0));
        let t = s.nabla_tilde10(&g).unwrap();
        assert!(t.terms.keys().all(|i| i.y.len() == 3));
    }

    #[test]
    fn evaluate_hbar_examples() {
        let g = flat1();
        let f = RationalFn::z(1, 0);
        let hf = WeylSection::scalar(1, tr(), f.clone()).scale_hpow(1);
        let ev = hf.evaluate_hbar(&Scalar::from_int(2)).unwrap();
        assert!(ev
            .sub(&WeylSection::scalar(1, tr(), f.scale(&Scalar::from_ratio(1, 2))))
            .is_zero());
        // ev_1(y * yb) = y yb + 1
        let prod = wick_mul(&y(&g), &yb(&g), &g, &HbarMode::Formal).unwrap();
        let ev1 = prod.evaluate_hbar(&Scalar::one()).unwrap();
        let expect = y(&g)
            .product(&yb(&g))
            .add(&WeylSection::scalar(1, tr(), RationalFn::one(1)));
        assert!(ev1.sub(&expect).is_zero());
    }

    #[test]
    fn evaluate_is_star_homomorphism() {
        let g = build_geometry(GeometryPreset::Cp1).unwrap();
        let k = Scalar::from_int(3);
        let a = messy_section(1);
        let b = y(&g).add(&yb(&g).scale_ratfn(&g.omega[0][0])).scale_hpow(1);
        let lhs = wick_mul(&a, &b, &g, &HbarMode::Formal)
            .unwrap()
            .evaluate_hbar(&k)
            .unwrap();
        let rhs = wick_mul(
            &a.evaluate_hbar(&k).unwrap(),
            &b.evaluate_hbar(&k).unwrap(),
            &g,
            &HbarMode::Level(k.clone()),
        )
        .unwrap();
        assert!(lhs.sub(&rhs).is_zero());
        // evaluate commutes with delta and symbol
        assert!(a
            .delta()
            .evaluate_hbar(&k)
            .unwrap()
            .sub(&a.evaluate_hbar(&k).unwrap().delta())
            .is_zero());
        assert_eq!(
            a.symbol().evaluate(&k).unwrap(),
            a.evaluate_hbar(&k).unwrap().symbol().coeff(0)
        );
    }

    #[test]
    fn weights() {
        let g = flat1();
        assert_eq!(yb(&g).weight(), 2);
        let y5 = y(&g)
            .product(&y(&g))
            .product(&y(&g))
            .product(&y(&g))
            .product(&y(&g));
        assert_eq!(y5.weight(), 0);
        assert_eq!(hbar_term(1).weight(), 2);
        // weight is subadditive under the Wick product
        let a = messy_section(1);
        let b = yb(&g).product(&yb(&g)).scale_hpow(1);
        let p = wick_mul(&a, &b, &g, &HbarMode::Formal).unwrap();
        assert!(p.weight() <= a.weight() + b.weight());
        let cut = p.filtration_cut(2);
        assert!(cut.weight() <= 2);
    }

    #[test]
    fn truncation_drops_and_flags() {
        let mut s = WeylSection::zero(1, Trunc::new(1, 6, 12));
        s.insert(
            TermIndex { y: vec![0, 0], ..TermIndex::scalar() },
            RationalFn::one(1),
        );
        assert!(s.is_zero());
        assert!(!s.exact.y);
        assert!(s.exact.ybar);
    }

    #[test]
    fn serde_round_trip() {
        let s = messy_section(1);
        let json = serde_json::to_string(&s).unwrap();
        let back: WeylSection = serde_json::from_str(&json).unwrap();
        assert!(s.sub(&back).is_zero());
    }
}
