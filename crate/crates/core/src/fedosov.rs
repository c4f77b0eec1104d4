//! Degree-by-degree solution of the Fedosov equation on a Kahler chart and
//! the flat connection it generates.
//!
//! Under the literal Wick product the quadratic generator of the fiberwise
//! de Rham differential satisfies (1/h)[sigma0, -] = +delta with
//! sigma0 = omega_{i jbar}(dzb^j (x) y^i - dz^i (x) yb^j). The connection
//! D = nabla - delta + (1/h)[I_alpha, -] therefore has the bracket form
//! D = nabla + (1/h)[gamma, -] with gamma = -sigma0 + I_alpha, and flatness
//! is equivalent to
//!     nabla(gamma) + (1/h) gamma*gamma + R_nabla = omega + alpha.
//! The residual certificate below is that identity moved to one side; the
//! solver accepts a connection only when it vanishes identically through
//! the truncation window.

use crate::error::{Error, Result};
use crate::geometry::{alpha_form, AlphaData, ChartGeometry};
use crate::hpoly::HPoly;
use crate::ratfn::RationalFn;
use crate::scalar::Scalar;
use crate::weyl::{
    bracket_over_hbar, div_hbar, graded_bracket, wick_mul, HbarMode, TermIndex, Trunc,
    WeylSection,
};
use serde::{Deserialize, Serialize};

pub use crate::geometry::AlphaSpec;

/// The Kahler form as a scalar-valued 2-form section.
pub fn omega_section(g: &ChartGeometry, trunc: Trunc) -> WeylSection {
    let mut s = WeylSection::zero(g.n, trunc);
    for i in 0..g.n {
        for j in 0..g.n {
            s.insert(
                TermIndex { dz: vec![i as u8], dzbar: vec![j as u8], ..TermIndex::scalar() },
                g.omega[i][j].clone(),
            );
        }
    }
    s
}

/// R_nabla = R_{i jbar k lbar} dz^i ^ dzb^j (x) y^k yb^l.
pub fn curvature_section(g: &ChartGeometry, trunc: Trunc) -> WeylSection {
    let mut s = WeylSection::zero(g.n, trunc);
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

/// sigma0 = omega_{i jbar}(dzb^j (x) y^i - dz^i (x) yb^j); the generator
/// with (1/h)[sigma0, -] = +delta.
pub fn sigma0_section(g: &ChartGeometry, trunc: Trunc) -> WeylSection {
    let mut s = WeylSection::zero(g.n, trunc);
    for i in 0..g.n {
        for j in 0..g.n {
            s.insert(
                TermIndex { dzbar: vec![j as u8], y: vec![i as u8], ..TermIndex::scalar() },
                g.omega[i][j].clone(),
            );
            s.insert(
                TermIndex { dz: vec![i as u8], ybar: vec![j as u8], ..TermIndex::scalar() },
                g.omega[i][j].neg(),
            );
        }
    }
    s
}

/// alpha as a scalar 2-form section with h-polynomial coefficients.
pub fn alpha_section(g: &ChartGeometry, a: &AlphaData, trunc: Trunc) -> WeylSection {
    let mut s = WeylSection::zero(g.n, trunc);
    for i in 0..g.n {
        for j in 0..g.n {
            for (&p, r) in &a.form[i][j].coeffs {
                debug_assert!(p >= 0);
                s.insert(
                    TermIndex {
                        dz: vec![i as u8],
                        dzbar: vec![j as u8],
                        hpow: p as u16,
                        ..TermIndex::scalar()
                    },
                    r.clone(),
                );
            }
        }
    }
    s
}

/// dbar_phi as a (0,1)-form section.
pub fn dbar_phi_section(g: &ChartGeometry, a: &AlphaData, trunc: Trunc) -> WeylSection {
    let mut s = WeylSection::zero(g.n, trunc);
    for j in 0..g.n {
        for (&p, r) in &a.dbar_phi[j].coeffs {
            debug_assert!(p >= 0);
            s.insert(
                TermIndex { dzbar: vec![j as u8], hpow: p as u16, ..TermIndex::scalar() },
                r.clone(),
            );
        }
    }
    s
}

/// Solved connection data with its residual certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FedosovData {
    pub geometry: ChartGeometry,
    pub alpha: AlphaData,
    pub max_y: u16,
    pub hbar_mode: HbarMode,
    /// Curvature-seeded part; every term has ybar-degree exactly 1.
    pub i_part: WeylSection,
    /// Potential-seeded part; ybar-free, h-polynomial.
    pub j_part: WeylSection,
    /// I + J, the bracket term of the connection.
    pub i_alpha: WeylSection,
    /// -sigma0 + I_alpha; D = nabla + (1/h)[gamma, -].
    pub gamma: WeylSection,
    /// Full residual as computed; certified zero through `certified_y_degree`.
    pub residual: WeylSection,
}

impl FedosovData {
    /// Residual coefficients are exact through this y-degree.
    pub fn certified_y_degree(&self) -> usize {
        self.max_y as usize - 1
    }

    pub fn mode(&self) -> &HbarMode {
        &self.hbar_mode
    }

    /// Evaluate h -> 1/k in every stored section.
    pub fn evaluate(&self, k: &Scalar) -> Result<FedosovData> {
        if k.is_zero() {
            return Err(Error::ZeroLevel);
        }
        Ok(FedosovData {
            geometry: self.geometry.clone(),
            alpha: self.alpha.clone(),
            max_y: self.max_y,
            hbar_mode: HbarMode::Level(k.clone()),
            i_part: self.i_part.evaluate_hbar(k)?,
            j_part: self.j_part.evaluate_hbar(k)?,
            i_alpha: self.i_alpha.evaluate_hbar(k)?,
            gamma: self.gamma.evaluate_hbar(k)?,
            residual: self.residual.evaluate_hbar(k)?,
        })
    }

    /// D a = nabla a - delta a + (1/h)[I_alpha, a].
    pub fn apply(&self, a: &WeylSection) -> Result<WeylSection> {
        let g = &self.geometry;
        let br = bracket_over_hbar(&self.i_alpha, a, g, &self.hbar_mode)?;
        Ok(a.nabla(g)?.sub(&a.delta()).add(&br))
    }
}

fn max_passes(max_y: u16) -> usize {
    max_y as usize + 4
}

/// Solve for I by the delta^{1,0}-homotopy fixpoint seeded at the curvature,
/// build J from the closed-form potential series, and certify the residual.
pub fn solve_fedosov(g: &ChartGeometry, spec: &AlphaSpec, max_y: u16) -> Result<FedosovData> {
    if max_y < 2 {
        return Err(Error::TruncationTooSmall("max_y must be at least 2".into()));
    }
    let alpha = alpha_form(g, spec)?;
    solve_with_alpha(g, alpha, max_y)
}

pub fn solve_with_alpha(
    g: &ChartGeometry,
    alpha: AlphaData,
    max_y: u16,
) -> Result<FedosovData> {
    let alpha_h_deg = alpha
        .form
        .iter()
        .flatten()
        .map(|h| h.deg())
        .max()
        .unwrap_or(0)
        .max(0) as u16;
    let trunc = Trunc::new(max_y, max_y, (alpha_h_deg + 2) * max_y + 4);

    // I: fixpoint of I = delta10_inv(R_nabla) + delta10_inv(nabla10 I)
    let seed = curvature_section(g, trunc).delta10_inv();
    let mut i_part = seed.clone();
    let mut stable = false;
    for _ in 0..max_passes(max_y) {
        let next = seed.add(&i_part.nabla10(g)?.delta10_inv());
        if next.sub(&i_part).is_zero() {
            stable = true;
            break;
        }
        i_part = next;
    }
    if !stable {
        return Err(Error::NoFixpoint(max_passes(max_y)));
    }

    // J = -sum_{m>=1} (nabla_tilde^{1,0})^m (dbar_phi)
    let mut j_part = WeylSection::zero(g.n, trunc);
    let mut term = dbar_phi_section(g, &alpha, trunc);
    for _ in 0..max_passes(max_y) {
        term = term.nabla_tilde10(g)?;
        if term.is_zero() {
            break;
        }
        j_part = j_part.sub(&term);
    }

    let i_alpha = i_part.add(&j_part);
    let gamma = sigma0_section(g, trunc).neg().add(&i_alpha);

    let mut fd = FedosovData {
        geometry: g.clone(),
        alpha,
        max_y,
        hbar_mode: HbarMode::Formal,
        i_part,
        j_part,
        i_alpha,
        gamma,
        residual: WeylSection::zero(g.n, trunc),
    };
    fd.residual = fedosov_residual(&fd)?;

    let window = fd.residual.y_degree_part(0, fd.certified_y_degree());
    if !window.is_zero() {
        return Err(Error::ResidualNonzero(format!(
            "{} terms survive through y-degree {}; (0,2)-part {}",
            window.terms.len(),
            fd.certified_y_degree(),
            if window.terms.keys().any(|t| t.dzbar.len() == 2) { "nonzero" } else { "zero" },
        )));
    }
    verify_shape(&fd)?;
    Ok(fd)
}

/// Structural invariants of the solved data: fiber shape of I and J, gauge
/// normalization, and h-polynomial admissibility.
fn verify_shape(fd: &FedosovData) -> Result<()> {
    if !fd.i_part.terms.keys().all(|t| t.ybar.len() == 1 && t.dzbar.len() == 1 && t.dz.is_empty())
    {
        return Err(Error::ResidualNonzero("I is not of type (0,1) with ybar-degree 1".into()));
    }
    if !fd.j_part.terms.keys().all(|t| t.ybar.is_empty() && t.dzbar.len() == 1 && t.dz.is_empty())
    {
        return Err(Error::ResidualNonzero("J is not of type (0,1) with ybar-degree 0".into()));
    }
    if !fd.i_alpha.delta10_inv().is_zero() || !fd.i_alpha.pi_0star().is_zero() {
        return Err(Error::ResidualNonzero("gauge normalization failed".into()));
    }
    let alpha_deg = fd
        .alpha
        .form
        .iter()
        .flatten()
        .map(|h| h.deg())
        .max()
        .unwrap_or(0);
    if (fd.gamma.max_hpow() as i32) > alpha_deg.max(0) {
        return Err(Error::ResidualNonzero("gamma exceeds the h-degree of alpha".into()));
    }
    Ok(())
}

/// nabla(gamma) + (1/h) gamma*gamma + R_nabla - omega - alpha; identically
/// zero through the certified window for a valid connection.
pub fn fedosov_residual(fd: &FedosovData) -> Result<WeylSection> {
    let g = &fd.geometry;
    let trunc = fd.gamma.trunc;
    let mode = &fd.hbar_mode;
    let gg = wick_mul(&fd.gamma, &fd.gamma, g, mode)?;
    let gg_over_h = div_hbar(&gg, mode)?;
    let mut omega = omega_section(g, trunc);
    let mut alpha = alpha_section(g, &fd.alpha, trunc);
    if let HbarMode::Level(k) = mode {
        omega = omega.evaluate_hbar(k)?;
        alpha = alpha.evaluate_hbar(k)?;
    }
    Ok(fd
        .gamma
        .nabla(g)?
        .add(&gg_over_h)
        .add(&curvature_section(g, trunc))
        .sub(&omega)
        .sub(&alpha))
}

/// The Karabegov form (1/h)(omega - alpha) as a Laurent h-matrix.
pub fn karabegov_form(fd: &FedosovData) -> Vec<Vec<HPoly>> {
    let g = &fd.geometry;
    let mut out = vec![vec![HPoly::zero(g.n); g.n]; g.n];
    for i in 0..g.n {
        for j in 0..g.n {
            let mut h = HPoly::zero(g.n);
            h.insert(-1, g.omega[i][j].clone());
            out[i][j] = h.sub(&fd.alpha.form[i][j].scale_hpow(-1));
        }
    }
    out
}

/// D_alpha (or D_{alpha,k}) applied to a section.
pub fn connection_apply(fd: &FedosovData, a: &WeylSection) -> Result<WeylSection> {
    fd.apply(a)
}
