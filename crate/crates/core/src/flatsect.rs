//! Flat sections of the Weyl bundle, the induced star product of functions,
//! quantizable-function classification, and the twisted-differential-operator
//! structure checks.

use crate::error::{Error, Result};
use crate::fedosov::FedosovData;
use crate::geometry::{build_geometry, poisson_bracket, GeometryPreset};
use crate::hpoly::HPoly;
use crate::ratfn::RationalFn;
use crate::scalar::Scalar;
use crate::weyl::{bracket_over_hbar, wick_mul, HbarMode, TermIndex, WeylSection};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How a flat section was produced; exact quantizability verdicts are only
/// claimed for the generator constructions whose stabilization is structural.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Holomorphic,
    UFunction,
    StarProduct,
    Reconstruction,
    Moment,
    General,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatSection {
    pub section: WeylSection,
    pub symbol: HPoly,
    /// D(section) verified zero through this y-degree.
    pub certified_y_degree: usize,
    /// The defining iteration completed one full pass without change.
    pub stabilized: bool,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ExactBound(usize),
    BoundedBy(usize),
    UnboundedWithinTest,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantizabilityReport {
    pub max_ybar_degree_observed: usize,
    pub tested_through_y_degree: usize,
    pub verdict: Verdict,
}

fn iteration_cap(s: &WeylSection) -> usize {
    s.trunc.max_y as usize + s.trunc.max_ybar as usize + 2 * s.trunc.max_h as usize + 4
}

/// Certify D(o) = 0 through the window allowed by the truncations involved.
fn certify(fd: &FedosovData, o: &WeylSection) -> Result<usize> {
    let d = fd.apply(o)?;
    let exact = o.exact.y
        && o.exact.ybar
        && fd.i_alpha.exact.y
        && (o.max_y_degree() as u16) < o.trunc.max_y;
    if exact {
        if !d.is_zero() {
            return Err(Error::FlatCertification(format!(
                "exact section fails flatness: {} residual terms",
                d.terms.len()
            )));
        }
        return Ok(o.trunc.max_y as usize);
    }
    let window = fd.certified_y_degree();
    let bad = d.y_degree_part(0, window);
    if !bad.is_zero() {
        return Err(Error::FlatCertification(format!(
            "D(O) has {} nonzero terms through y-degree {window}",
            bad.terms.len()
        )));
    }
    Ok(window)
}

/// Prolong a holomorphic function: O_f = sum_k (nabla_tilde^{1,0})^k f.
/// The result lives in the holomorphic Weyl bundle (no ybar, no h).
pub fn flat_prolong_holomorphic(f: &RationalFn, fd: &FedosovData) -> Result<FlatSection> {
    if !f.is_holomorphic() {
        return Err(Error::NotHolomorphic(format!("{f}")));
    }
    let g = &fd.geometry;
    let trunc = fd.gamma.trunc;
    let mut section = WeylSection::scalar(g.n, trunc, f.clone());
    let mut term = section.clone();
    let mut stabilized = false;
    for _ in 0..iteration_cap(&section) {
        term = term.nabla_tilde10(g)?;
        if term.is_zero() {
            stabilized = true;
            break;
        }
        section = section.add(&term);
    }
    let stabilized = stabilized || section.max_y_degree() == trunc.max_y as usize;
    let certified_y_degree = certify(fd, &section)?;
    Ok(FlatSection {
        symbol: section.symbol(),
        section,
        certified_y_degree,
        stabilized,
        provenance: Provenance::Holomorphic,
    })
}

/// The unique flat section with the given symbol, as the fixpoint of
/// O = f + delta^{-1}((nabla + (1/h)[I_alpha, -]) O).
pub fn flat_section_of_function(f: &HPoly, fd: &FedosovData) -> Result<FlatSection> {
    let g = &fd.geometry;
    let trunc = fd.gamma.trunc;
    let seed = match fd.mode() {
        HbarMode::Formal => WeylSection::scalar_h(g.n, trunc, f),
        HbarMode::Level(k) => WeylSection::scalar(g.n, trunc, f.evaluate(k)?),
    };
    let mut o = seed.clone();
    let mut stabilized = false;
    for _ in 0..iteration_cap(&seed) {
        let inner = o.nabla(g)?.add(&bracket_over_hbar(&fd.i_alpha, &o, g, fd.mode())?);
        let next = seed.add(&inner.delta_inv());
        if next.sub(&o).is_zero() {
            stabilized = true;
            break;
        }
        o = next;
    }
    if !stabilized {
        return Err(Error::NoFixpoint(iteration_cap(&seed)));
    }
    let certified_y_degree = certify(fd, &o)?;
    Ok(FlatSection {
        symbol: o.symbol(),
        section: o,
        certified_y_degree,
        stabilized,
        provenance: Provenance::General,
    })
}

/// sigma(O_f * O_g), the star product of functions.
pub fn star_of_functions(f: &HPoly, g: &HPoly, fd: &FedosovData) -> Result<HPoly> {
    let of = flat_section_of_function(f, fd)?;
    let og = flat_section_of_function(g, fd)?;
    Ok(star_of_sections(&of, &og, fd)?.symbol)
}

/// Star product of certified flat sections; flatness of the product is
/// inherited, with the combined provenance.
pub fn star_of_sections(
    a: &FlatSection,
    b: &FlatSection,
    fd: &FedosovData,
) -> Result<FlatSection> {
    let prod = wick_mul(&a.section, &b.section, &fd.geometry, fd.mode())?;
    let certified_y_degree = certify(fd, &prod)?;
    Ok(FlatSection {
        symbol: prod.symbol(),
        section: prod,
        certified_y_degree,
        stabilized: a.stabilized && b.stabilized,
        provenance: Provenance::StarProduct,
    })
}

/// The symbol of the quantizable generator u_j = d_rho_j + d_phi_j.
pub fn u_symbol(fd: &FedosovData, j: usize) -> HPoly {
    HPoly::from_ratfn(fd.geometry.d_rho[j].clone()).add(&fd.alpha.d_phi[j])
}

/// Build the flat section of u_j and verify its structure: ybar-degree
/// exactly 1 and purely anti-holomorphic part u_j + omega_{j mbar} yb^m.
pub fn build_u(fd: &FedosovData, j: usize) -> Result<FlatSection> {
    let g = &fd.geometry;
    let mut fs = flat_section_of_function(&u_symbol(fd, j), fd)?;
    if fs.section.max_ybar_degree() != 1 {
        return Err(Error::FlatCertification(format!(
            "u_{} section has ybar-degree {}, expected 1",
            j + 1,
            fs.section.max_ybar_degree()
        )));
    }
    let mut expect = match fd.mode() {
        HbarMode::Formal => WeylSection::scalar_h(g.n, fs.section.trunc, &u_symbol(fd, j)),
        HbarMode::Level(k) => WeylSection::scalar(
            g.n,
            fs.section.trunc,
            u_symbol(fd, j).evaluate(k)?,
        ),
    };
    for m in 0..g.n {
        expect.insert(
            TermIndex { ybar: vec![m as u8], ..TermIndex::scalar() },
            g.omega[j][m].clone(),
        );
    }
    if !fs.section.pi_0star().sub(&expect).is_zero() {
        return Err(Error::FlatCertification(format!(
            "u_{} anti-holomorphic part differs from u + omega yb",
            j + 1
        )));
    }
    fs.provenance = Provenance::UFunction;
    Ok(fs)
}

/// Scan the term set and classify the anti-holomorphic degree.
pub fn quantizability_check(s: &FlatSection) -> QuantizabilityReport {
    let observed = s.section.max_ybar_degree();
    let tested = s.section.trunc.max_y as usize;
    let structural = matches!(
        s.provenance,
        Provenance::Holomorphic | Provenance::UFunction | Provenance::StarProduct | Provenance::Moment
    );
    let verdict = if s.stabilized && structural {
        Verdict::ExactBound(observed)
    } else if observed < s.section.trunc.max_ybar as usize {
        Verdict::BoundedBy(observed)
    } else {
        Verdict::UnboundedWithinTest
    };
    QuantizabilityReport {
        max_ybar_degree_observed: observed,
        tested_through_y_degree: tested,
        verdict,
    }
}

/// The unique (nabla^{1,0} - delta^{1,0})-closed prolongation of a purely
/// anti-holomorphic section.
pub fn reconstruct_from_antiholomorphic(
    a0: &WeylSection,
    fd: &FedosovData,
) -> Result<WeylSection> {
    if !a0.terms.keys().all(|t| t.dz.is_empty() && t.y.is_empty()) {
        return Err(Error::Invalid("input is not purely anti-holomorphic".into()));
    }
    let g = &fd.geometry;
    let mut out = a0.clone();
    let mut term = a0.clone();
    for _ in 0..iteration_cap(a0) {
        term = term.nabla_tilde10(g)?;
        if term.is_zero() {
            break;
        }
        out = out.add(&term);
    }
    Ok(out)
}

/// Components of a symmetric tangent field, keyed by sorted multi-index.
pub type SymField = BTreeMap<Vec<u8>, RationalFn>;

/// Graded symbol at level N: contract the top anti-holomorphic part with N
/// copies of the inverse metric. Requires an exact bound.
pub fn graded_symbol_psi(s: &FlatSection, fd: &FedosovData) -> Result<SymField> {
    let report = quantizability_check(s);
    let level = match report.verdict {
        Verdict::ExactBound(b) => b,
        _ => return Err(Error::BoundNotExact),
    };
    let g = &fd.geometry;
    let top = s.section.pi_0star();
    let mut out: SymField = BTreeMap::new();
    for (idx, c) in &top.terms {
        if idx.ybar.len() != level || !idx.dzbar.is_empty() {
            continue;
        }
        // contract each ybar^{l} with omega^{lbar m}
        let mut states: Vec<(Vec<u8>, RationalFn)> = vec![(vec![], c.clone())];
        for &l in &idx.ybar {
            let mut next = Vec::new();
            for (acc, coeff) in &states {
                for m in 0..g.n {
                    let w = &g.omega_inv[l as usize][m];
                    if w.is_zero() {
                        continue;
                    }
                    let mut acc2 = acc.clone();
                    acc2.push(m as u8);
                    next.push((acc2, coeff.mul(w)));
                }
            }
            states = next;
        }
        for (mut key, coeff) in states {
            key.sort_unstable();
            match out.entry(key) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(coeff);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    let sum = o.get().add(&coeff);
                    if sum.is_zero() {
                        o.remove();
                    } else {
                        *o.get_mut() = sum;
                    }
                }
            }
        }
    }
    // dbar-closedness of the components
    for (key, v) in &out {
        for j in 0..g.n {
            if !v.d_zb(j).is_zero() {
                return Err(Error::FlatCertification(format!(
                    "graded symbol component {key:?} is not dbar-closed"
                )));
            }
        }
    }
    Ok(out)
}

/// Measure the Poisson constant: the h-linear antisymmetric part of the star
/// product equals lambda * {f, g} for a single global lambda.
pub fn measure_poisson_lambda(fd: &FedosovData, pairs: &[(HPoly, HPoly)]) -> Result<Scalar> {
    let g = &fd.geometry;
    let mut lambda: Option<Scalar> = None;
    for (f, h) in pairs {
        let fg = star_of_functions(f, h, fd)?;
        let gf = star_of_functions(h, f, fd)?;
        let comm1 = fg.sub(&gf).coeff(1);
        let pb = poisson_bracket(g, &f.coeff(0), &h.coeff(0));
        if pb.is_zero() {
            if !comm1.is_zero() {
                return Err(Error::Invalid(format!(
                    "commutator {comm1} nonzero while Poisson bracket vanishes"
                )));
            }
            continue;
        }
        let ratio = comm1.div(&pb);
        let Some(c) = ratio.as_constant() else {
            return Err(Error::Invalid(format!("non-constant ratio {ratio}")));
        };
        match &lambda {
            None => lambda = Some(c),
            Some(prev) if *prev == c => {}
            Some(prev) => {
                return Err(Error::Invalid(format!(
                    "inconsistent Poisson constant: {prev} vs {c}"
                )));
            }
        }
    }
    lambda.ok_or_else(|| Error::Invalid("no pair with nonzero Poisson bracket".into()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TdoReport {
    pub filtration_drop_ok: bool,
    pub bracket_constant_ok: bool,
    pub psi_of_u_is_unit_field: bool,
    pub cocycle_dbar_closed: bool,
    pub cocycle_d_closed: bool,
    pub karabegov_matches: bool,
}

impl TdoReport {
    pub fn all_ok(&self) -> bool {
        self.filtration_drop_ok
            && self.bracket_constant_ok
            && self.psi_of_u_is_unit_field
            && self.cocycle_dbar_closed
            && self.cocycle_d_closed
            && self.karabegov_matches
    }
}

/// The transition cocycle d(rho_0 - rho_1) of the two standard charts of the
/// projective line, expressed in the first chart. Only meaningful for cp1.
pub fn cp1_two_chart_cocycle() -> Result<RationalFn> {
    let g0 = build_geometry(GeometryPreset::Cp1)?;
    let n = 1;
    // pull back the second-chart potential derivative along w = 1/z:
    // (d rho_1)(z) = (d_w rho)(1/z, 1/zb) * (-1/z^2)
    let images = vec![RationalFn::z(n, 0).inv(), RationalFn::zb(n, 0).inv()];
    let pulled = g0.d_rho[0]
        .substitute(&images)
        .mul(&RationalFn::z(n, 0).pow(2).inv())
        .neg();
    Ok(g0.d_rho[0].sub(&pulled))
}

/// Verify the TDO structure at level k: filtration drop of brackets, the
/// bracket constant -1/k against holomorphic generators, psi on the u's,
/// the two-chart cocycle, and the Karabegov form.
pub fn tdo_checks(fd: &FedosovData, samples: &[HPoly]) -> Result<TdoReport> {
    let g = &fd.geometry;
    let k = match fd.mode() {
        HbarMode::Level(k) => k.clone(),
        HbarMode::Formal => {
            return Err(Error::HbarModeMismatch { expected: "evaluated", found: "formal" })
        }
    };

    // (i) filtration drop on sample pairs
    let mut filtration_drop_ok = true;
    let sections: Vec<FlatSection> = samples
        .iter()
        .map(|f| flat_section_of_function(f, fd))
        .collect::<Result<_>>()?;
    for a in &sections {
        for b in &sections {
            let br = bracket_over_hbar(&a.section, &b.section, g, fd.mode())?;
            let bound = a.section.max_ybar_degree() + b.section.max_ybar_degree();
            // the commutator itself drops one ybar before the h-division
            let comm = wick_mul(&a.section, &b.section, g, fd.mode())?
                .sub(&wick_mul(&b.section, &a.section, g, fd.mode())?);
            if comm.max_ybar_degree() + 1 > bound && !comm.is_zero() {
                filtration_drop_ok = false;
            }
            let _ = br;
        }
    }

    // (ii) [O_{u_j}, O_g] = -(1/k) O_{dg/dz_j} for holomorphic samples
    let mut bracket_constant_ok = true;
    let holo = [
        RationalFn::z(g.n, 0),
        RationalFn::z(g.n, 0).pow(2),
    ];
    for j in 0..g.n {
        let ou = build_u(fd, j)?;
        for f in &holo {
            let of = flat_prolong_holomorphic(f, fd)?;
            let br = graded_bracket_sections(&ou.section, &of.section, fd)?;
            let expect = flat_prolong_holomorphic(&f.deriv(j), fd)?
                .section
                .scale(&-k.inv());
            let window = fd.certified_y_degree().saturating_sub(1);
            if !br.sub(&expect).y_degree_part(0, window).is_zero() {
                bracket_constant_ok = false;
            }
        }
    }

    // (iii) psi(O_{u_j}) = d_{y^j} with unit coefficient
    let mut psi_of_u_is_unit_field = true;
    for j in 0..g.n {
        let ou = build_u(fd, j)?;
        let psi = graded_symbol_psi(&ou, fd)?;
        let expect_key = vec![j as u8];
        let ok = psi.len() == 1
            && psi
                .get(&expect_key)
                .map(|c| c.is_one())
                .unwrap_or(false);
        if !ok {
            psi_of_u_is_unit_field = false;
        }
    }

    // (iv) two-chart cocycle on cp1
    let (cocycle_dbar_closed, cocycle_d_closed) = if g.preset == GeometryPreset::Cp1 {
        let c = cp1_two_chart_cocycle()?;
        // frozen expected value 1/z
        let expect = RationalFn::z(1, 0).inv();
        let value_ok = c.sub(&expect).is_zero();
        (value_ok && c.d_zb(0).is_zero(), value_ok)
    } else {
        (true, true)
    };

    // (v) Karabegov form equals (1/h)(omega - alpha)
    let kforms = crate::fedosov::karabegov_form(fd);
    let mut karabegov_matches = true;
    for i in 0..g.n {
        for j in 0..g.n {
            let mut expect = HPoly::zero(g.n);
            expect.insert(-1, g.omega[i][j].clone());
            expect = expect.sub(&fd.alpha.form[i][j].scale_hpow(-1));
            if kforms[i][j] != expect {
                karabegov_matches = false;
            }
        }
    }

    Ok(TdoReport {
        filtration_drop_ok,
        bracket_constant_ok,
        psi_of_u_is_unit_field,
        cocycle_dbar_closed,
        cocycle_d_closed,
        karabegov_matches,
    })
}

/// (1/h)[a, b] with the connection's mode.
pub fn graded_bracket_sections(
    a: &WeylSection,
    b: &WeylSection,
    fd: &FedosovData,
) -> Result<WeylSection> {
    bracket_over_hbar(a, b, &fd.geometry, fd.mode())
}

/// Flatness probe for the symbol-uniqueness witness omega_{j mbar} yb^m.
/// Returns true when the witness is flat (symbol uniqueness fails).
pub fn uniqueness_witness_is_flat(fd: &FedosovData) -> Result<bool> {
    let g = &fd.geometry;
    let mut w = WeylSection::zero(g.n, fd.gamma.trunc);
    for m in 0..g.n {
        w.insert(
            TermIndex { ybar: vec![m as u8], ..TermIndex::scalar() },
            g.omega[0][m].clone(),
        );
    }
    Ok(fd.apply(&w)?.is_zero())
}
