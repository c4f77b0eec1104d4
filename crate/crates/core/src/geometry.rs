//! Chart-level Kahler data: metric, inverse, Christoffel symbols, curvature,
//! Ricci form, and potential derivatives, all as exact rational functions.
//!
//! Potentials themselves are logarithms on the curved presets, so only their
//! first derivatives are stored; every downstream formula consumes
//! derivatives only, which keeps the coefficient ring closed.

use crate::error::{Error, Result};
use crate::hpoly::HPoly;
use crate::ratfn::RationalFn;

use serde::{Deserialize, Serialize};

pub type Mat = Vec<Vec<RationalFn>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeometryPreset {
    Flat(usize),
    Cp1,
    Disc,
    Custom,
}

impl std::fmt::Display for GeometryPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeometryPreset::Flat(n) => write!(f, "flat:{n}"),
            GeometryPreset::Cp1 => write!(f, "cp1"),
            GeometryPreset::Disc => write!(f, "disc"),
            GeometryPreset::Custom => write!(f, "custom"),
        }
    }
}

impl GeometryPreset {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("flat:") {
            let n: usize = rest
                .parse()
                .map_err(|_| Error::Invalid(format!("bad flat dimension {rest:?}")))?;
            if n == 0 {
                return Err(Error::Invalid("flat dimension must be positive".into()));
            }
            return Ok(GeometryPreset::Flat(n));
        }
        match s {
            "cp1" => Ok(GeometryPreset::Cp1),
            "disc" => Ok(GeometryPreset::Disc),
            _ => Err(Error::Invalid(format!("unknown geometry preset {s:?}"))),
        }
    }
}

/// One holomorphic chart of a model Kahler manifold with all derived tensors
/// assembled and verified at construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartGeometry {
    pub n: usize,
    pub preset: GeometryPreset,
    /// omega[i][j] = omega_{i jbar}
    pub omega: Mat,
    /// omega_inv[i][j] = omega^{ibar j}; omega_inv * omega = id
    pub omega_inv: Mat,
    /// christoffel[k][i][j] = Gamma^k_{ij}, symmetric in (i, j)
    pub christoffel: Vec<Mat>,
    /// curvature[i][j][k][l] = R_{i jbar k lbar}
    pub curvature: Vec<Vec<Mat>>,
    /// ricci[i][j] = Ric_{i jbar} = R_{i jbar k lbar} omega^{lbar k}
    pub ricci: Mat,
    /// d_rho[i] = d rho / d z^i for the Kahler potential rho
    pub d_rho: Vec<RationalFn>,
    /// dbar_rho[j] = d rho / d zb^j
    pub dbar_rho: Vec<RationalFn>,
    pub det_omega: RationalFn,
    /// d_log_det[i] = d(log det omega)/d z^i
    pub d_log_det: Vec<RationalFn>,
    pub dbar_log_det: Vec<RationalFn>,
}

impl ChartGeometry {
    /// Wick pairing weight between d/dy^i and d/dyb^j, i.e. omega^{i jbar}.
    pub fn pairing(&self, i: usize, j: usize) -> &RationalFn {
        &self.omega_inv[j][i]
    }

    pub fn gamma(&self, k: usize, i: usize, j: usize) -> &RationalFn {
        &self.christoffel[k][i][j]
    }

    /// Conjugate Christoffel Gammabar^k_{ij} for the ybar/dzb slots.
    pub fn gamma_bar(&self, k: usize, i: usize, j: usize) -> RationalFn {
        self.christoffel[k][i][j].conj_involution()
    }
}

fn mat_zero(n: usize) -> Mat {
    vec![vec![RationalFn::zero(n); n]; n]
}

fn identity(n: usize) -> Mat {
    let mut m = mat_zero(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = RationalFn::one(n);
    }
    m
}

/// Gauss-Jordan inverse over the rational function field.
fn invert(m: &Mat, n: usize) -> Result<Mat> {
    let mut a = m.clone();
    let mut inv = identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .ok_or(Error::SingularMetric)?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        let pinv = p.inv();
        for c in 0..n {
            a[col][c] = a[col][c].mul(&pinv);
            inv[col][c] = inv[col][c].mul(&pinv);
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for c in 0..n {
                a[r][c] = a[r][c].sub(&factor.mul(&a[col][c]));
                inv[r][c] = inv[r][c].sub(&factor.mul(&inv[col][c]));
            }
        }
    }
    Ok(inv)
}

fn determinant(m: &Mat, n: usize) -> RationalFn {
    // cofactor expansion; n is 1 or 2 for the presets and stays small
    match n {
        0 => RationalFn::one(0),
        1 => m[0][0].clone(),
        _ => {
            let mut det = RationalFn::zero(m[0][0].chart_dim());
            for (j, entry) in m[0].iter().enumerate() {
                if entry.is_zero() {
                    continue;
                }
                let minor: Mat = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != j)
                            .map(|(_, v)| v.clone())
                            .collect()
                    })
                    .collect();
                let cof = entry.mul(&determinant(&minor, n - 1));
                if j % 2 == 0 {
                    det = det.add(&cof);
                } else {
                    det = det.sub(&cof);
                }
            }
            det
        }
    }
}

/// Assemble a chart from metric and potential-derivative data, verifying the
/// Kahler condition, metric invertibility and potential consistency.
pub fn build_custom(
    preset: GeometryPreset,
    omega: Mat,
    d_rho: Vec<RationalFn>,
) -> Result<ChartGeometry> {
    let n = omega.len();
    // Kahler condition d_k omega_{i jbar} = d_i omega_{k jbar}
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if !omega[i][j].deriv(k).sub(&omega[k][j].deriv(i)).is_zero() {
                    return Err(Error::NotKahler(k, i, j));
                }
            }
        }
    }
    // potential consistency dbar_j (d_rho_i) = omega_{i jbar}
    for i in 0..n {
        for j in 0..n {
            if !d_rho[i].d_zb(j).sub(&omega[i][j]).is_zero() {
                return Err(Error::PotentialMismatch(i, j));
            }
        }
    }
    let omega_inv = invert(&omega, n)?;

    // Gamma^k_{ij} = omega^{lbar k} d_i omega_{j lbar}
    let mut christoffel = vec![mat_zero(n); n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut g = RationalFn::zero(n);
                for l in 0..n {
                    g = g.add(&omega_inv[l][k].mul(&omega[j][l].deriv(i)));
                }
                christoffel[k][i][j] = g;
            }
        }
    }

    // R_{i jbar k lbar} = - omega_{m lbar} dbar_j Gamma^m_{ik}
    let mut curvature = vec![vec![mat_zero(n); n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut r = RationalFn::zero(n);
                    for m in 0..n {
                        r = r.add(&omega[m][l].mul(&christoffel[m][i][k].d_zb(j)));
                    }
                    curvature[i][j][k][l] = r.neg();
                }
            }
        }
    }

    // Ric_{i jbar} = R_{i jbar k lbar} omega^{lbar k}
    let mut ricci = mat_zero(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = RationalFn::zero(n);
            for k in 0..n {
                for l in 0..n {
                    s = s.add(&curvature[i][j][k][l].mul(&omega_inv[l][k]));
                }
            }
            ricci[i][j] = s;
        }
    }

    let det_omega = determinant(&omega, n);
    let d_log_det: Vec<_> = (0..n)
        .map(|i| det_omega.deriv(i).div(&det_omega))
        .collect();
    let dbar_log_det: Vec<_> = (0..n)
        .map(|j| det_omega.d_zb(j).div(&det_omega))
        .collect();
    let dbar_rho: Vec<_> = d_rho.iter().map(RationalFn::conj_involution).collect();

    Ok(ChartGeometry {
        n,
        preset,
        omega,
        omega_inv,
        christoffel,
        curvature,
        ricci,
        d_rho,
        dbar_rho,
        det_omega,
        d_log_det,
        dbar_log_det,
    })
}

pub fn build_geometry(preset: GeometryPreset) -> Result<ChartGeometry> {
    match preset {
        GeometryPreset::Flat(n) => {
            let mut omega = mat_zero(n);
            for (i, row) in omega.iter_mut().enumerate() {
                row[i] = RationalFn::one(n);
            }
            let d_rho: Vec<_> = (0..n).map(|i| RationalFn::zb(n, i)).collect();
            build_custom(GeometryPreset::Flat(n), omega, d_rho)
        }
        GeometryPreset::Cp1 => {
            let n = 1;
            let u = RationalFn::z(n, 0).mul(&RationalFn::zb(n, 0));
            let d = RationalFn::one(n).add(&u);
            let omega = vec![vec![d.pow(2).inv()]];
            let d_rho = vec![RationalFn::zb(n, 0).div(&d)];
            build_custom(GeometryPreset::Cp1, omega, d_rho)
        }
        GeometryPreset::Disc => {
            let n = 1;
            let u = RationalFn::z(n, 0).mul(&RationalFn::zb(n, 0));
            let d = RationalFn::one(n).sub(&u);
            let omega = vec![vec![d.pow(2).inv()]];
            let d_rho = vec![RationalFn::zb(n, 0).div(&d)];
            build_custom(GeometryPreset::Disc, omega, d_rho)
        }
        GeometryPreset::Custom => Err(Error::Invalid(
            "custom geometry requires explicit omega and d_rho; use build_custom".into(),
        )),
    }
}

/// Hamiltonian vector field of f under iota_{X_f} omega = df:
/// X_f = (omega^{jbar k} dbar_j f) d_k - (omega^{gbar i} d_i f) dbar_g.
/// Returns (holomorphic components, anti-holomorphic components).
pub fn hamiltonian_field(g: &ChartGeometry, f: &RationalFn) -> (Vec<RationalFn>, Vec<RationalFn>) {
    let n = g.n;
    let mut hol = vec![RationalFn::zero(n); n];
    let mut anti = vec![RationalFn::zero(n); n];
    for k in 0..n {
        for j in 0..n {
            hol[k] = hol[k].add(&g.omega_inv[j][k].mul(&f.d_zb(j)));
        }
    }
    for gamma in 0..n {
        for i in 0..n {
            anti[gamma] = anti[gamma].sub(&g.omega_inv[gamma][i].mul(&f.deriv(i)));
        }
    }
    (hol, anti)
}

/// Poisson bracket {f, g} = X_f(g) under the pinned convention above.
pub fn poisson_bracket(geo: &ChartGeometry, f: &RationalFn, g: &RationalFn) -> RationalFn {
    let (hol, anti) = hamiltonian_field(geo, f);
    let mut out = RationalFn::zero(geo.n);
    for k in 0..geo.n {
        out = out.add(&hol[k].mul(&g.deriv(k)));
        out = out.add(&anti[k].mul(&g.d_zb(k)));
    }
    out
}

/// Choice of the closed (1,1)-form entering the Fedosov equation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaSpec {
    Zero,
    /// Scalar multiple of the Kahler form: the engine-normalized form is
    /// -h*omega, the normalization that makes the level-1 connection
    /// degenerate on the anti-holomorphic line (see `fedosov`).
    HbarOmega,
    /// h * d dbar log det(omega) = -h * Ric; its Karabegov form matches
    /// Berezin-Toeplitz quantization.
    BerezinToeplitz,
    Custom {
        form: Vec<Vec<HPoly>>,
        dbar_phi: Vec<HPoly>,
    },
}

impl std::fmt::Display for AlphaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlphaSpec::Zero => write!(f, "zero"),
            AlphaSpec::HbarOmega => write!(f, "hbar_omega"),
            AlphaSpec::BerezinToeplitz => write!(f, "berezin_toeplitz"),
            AlphaSpec::Custom { .. } => write!(f, "custom"),
        }
    }
}

impl AlphaSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" | "0" => Ok(AlphaSpec::Zero),
            "hbar_omega" => Ok(AlphaSpec::HbarOmega),
            "berezin_toeplitz" | "bt" => Ok(AlphaSpec::BerezinToeplitz),
            _ => Err(Error::Invalid(format!("unknown alpha spec {s:?}"))),
        }
    }
}

/// A closed (1,1)-form with h-polynomial coefficients together with the
/// potential derivative data used by the Fedosov solver and the u-functions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaData {
    pub spec: AlphaSpec,
    /// form[i][j] = coefficient of dz^i ^ dzb^j
    pub form: Vec<Vec<HPoly>>,
    /// dbar_phi[j] = (0,1)-derivative components of a potential phi of alpha
    pub dbar_phi: Vec<HPoly>,
    /// d_phi[i] = (1,0)-derivative components of the same potential
    pub d_phi: Vec<HPoly>,
}

/// Build the alpha form and matching potential derivatives for a chart.
pub fn alpha_form(g: &ChartGeometry, spec: &AlphaSpec) -> Result<AlphaData> {
    let n = g.n;
    let data = match spec {
        AlphaSpec::Zero => AlphaData {
            spec: spec.clone(),
            form: vec![vec![HPoly::zero(n); n]; n],
            dbar_phi: vec![HPoly::zero(n); n],
            d_phi: vec![HPoly::zero(n); n],
        },
        AlphaSpec::HbarOmega => {
            let mut form = vec![vec![HPoly::zero(n); n]; n];
            for i in 0..n {
                for j in 0..n {
                    form[i][j] = HPoly::from_ratfn(g.omega[i][j].neg()).scale_hpow(1);
                }
            }
            AlphaData {
                spec: spec.clone(),
                form,
                dbar_phi: g
                    .dbar_rho
                    .iter()
                    .map(|r| HPoly::from_ratfn(r.neg()).scale_hpow(1))
                    .collect(),
                d_phi: g
                    .d_rho
                    .iter()
                    .map(|r| HPoly::from_ratfn(r.neg()).scale_hpow(1))
                    .collect(),
            }
        }
        AlphaSpec::BerezinToeplitz => {
            let mut form = vec![vec![HPoly::zero(n); n]; n];
            for i in 0..n {
                for j in 0..n {
                    form[i][j] =
                        HPoly::from_ratfn(g.dbar_log_det[j].deriv(i)).scale_hpow(1);
                }
            }
            AlphaData {
                spec: spec.clone(),
                form,
                dbar_phi: g
                    .dbar_log_det
                    .iter()
                    .map(|r| HPoly::from_ratfn(r.clone()).scale_hpow(1))
                    .collect(),
                d_phi: g
                    .d_log_det
                    .iter()
                    .map(|r| HPoly::from_ratfn(r.clone()).scale_hpow(1))
                    .collect(),
            }
        }
        AlphaSpec::Custom { form, dbar_phi } => {
            if form.iter().flatten().any(|h| h.min_deg() < 0)
                || dbar_phi.iter().any(|h| h.min_deg() < 0)
            {
                return Err(Error::Invalid("custom alpha must be an h-polynomial".into()));
            }
            let d_phi = dbar_phi.iter().map(HPoly::conj_involution).collect();
            AlphaData { spec: spec.clone(), form: form.clone(), dbar_phi: dbar_phi.clone(), d_phi }
        }
    };
    verify_alpha(g, &data)?;
    Ok(data)
}

/// Closedness of alpha and exactness d(dbar_phi) = alpha, per h-power.
fn verify_alpha(g: &ChartGeometry, a: &AlphaData) -> Result<()> {
    let n = g.n;
    let powers: Vec<i32> = a
        .form
        .iter()
        .flatten()
        .chain(a.dbar_phi.iter())
        .flat_map(|h| h.coeffs.keys().copied())
        .collect();
    for &p in &powers {
        // d-closed: d_k alpha_{i jbar} antisymmetrized in (k, i)
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let lhs = a.form[i][j].coeff(p).deriv(k);
                    let rhs = a.form[k][j].coeff(p).deriv(i);
                    if !lhs.sub(&rhs).is_zero() {
                        return Err(Error::AlphaNotClosed);
                    }
                }
            }
        }
        // dbar-closed: dbar_l alpha_{i jbar} symmetric under (l, j)
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let lhs = a.form[i][j].coeff(p).d_zb(l);
                    let rhs = a.form[i][l].coeff(p).d_zb(j);
                    if !lhs.sub(&rhs).is_zero() {
                        return Err(Error::AlphaNotClosed);
                    }
                }
            }
        }
        // d(dbar_phi) = alpha
        for i in 0..n {
            for j in 0..n {
                let lhs = a.dbar_phi[j].coeff(p).deriv(i);
                if !lhs.sub(&a.form[i][j].coeff(p)).is_zero() {
                    return Err(Error::AlphaPhiMismatch);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;

    fn one_form(n: usize) -> RationalFn {
        RationalFn::one(n)
    }

    #[test]
    fn flat_is_degenerate() {
        let g = build_geometry(GeometryPreset::Flat(2)).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!(g.christoffel[k][i][j].is_zero());
                    for l in 0..2 {
                        assert!(g.curvature[k][i][j][l].is_zero());
                    }
                }
            }
        }
        assert_eq!(g.d_rho[0], RationalFn::zb(2, 0));
        assert_eq!(g.det_omega, one_form(2));
    }

    /// Independent oracle: R_{i jbar k lbar} by direct differentiation of the
    /// metric, without Christoffel assembly.
    fn curvature_direct(g: &ChartGeometry, i: usize, j: usize, k: usize, l: usize) -> RationalFn {
        let n = g.n;
        let mut r = g.omega[i][j].deriv(k).d_zb(l).neg();
        for p in 0..n {
            for q in 0..n {
                let t = g.omega_inv[q][p]
                    .mul(&g.omega[i][q].deriv(k))
                    .mul(&g.omega[p][j].d_zb(l));
                r = r.add(&t);
            }
        }
        r
    }

    #[test]
    fn cp1_curvature_matches_direct_oracle() {
        let g = build_geometry(GeometryPreset::Cp1).unwrap();
        let n = 1;
        let u = RationalFn::z(n, 0).mul(&RationalFn::zb(n, 0));
        let d = RationalFn::one(n).add(&u);
        // assembled value
        let r = &g.curvature[0][0][0][0];
        // frozen expected value 2/(1+u)^4, computed by hand from the oracle
        let expect = RationalFn::constant(n, Scalar::from_int(2)).div(&d.pow(4));
        assert_eq!(*r, expect);
        assert_eq!(*r, curvature_direct(&g, 0, 0, 0, 0));
        // Ricci = 2*omega on cp1
        assert_eq!(g.ricci[0][0], g.omega[0][0].scale(&Scalar::from_int(2)));
    }

    #[test]
    fn disc_curvature_opposite_sign() {
        let g = build_geometry(GeometryPreset::Disc).unwrap();
        let n = 1;
        let u = RationalFn::z(n, 0).mul(&RationalFn::zb(n, 0));
        let d = RationalFn::one(n).sub(&u);
        let expect = RationalFn::constant(n, Scalar::from_int(-2)).div(&d.pow(4));
        assert_eq!(g.curvature[0][0][0][0], expect);
        assert_eq!(g.curvature[0][0][0][0], curvature_direct(&g, 0, 0, 0, 0));
        assert_eq!(g.ricci[0][0], g.omega[0][0].scale(&Scalar::from_int(-2)));
    }

    #[test]
    fn invariants_all_presets() {
        for preset in [
            GeometryPreset::Flat(1),
            GeometryPreset::Flat(2),
            GeometryPreset::Cp1,
            GeometryPreset::Disc,
        ] {
            let g = build_geometry(preset.clone()).unwrap();
            let n = g.n;
            // omega_inv * omega = id
            for i in 0..n {
                for j in 0..n {
                    let mut s = RationalFn::zero(n);
                    for a in 0..n {
                        s = s.add(&g.omega_inv[i][a].mul(&g.omega[a][j]));
                    }
                    let expect = if i == j { RationalFn::one(n) } else { RationalFn::zero(n) };
                    assert_eq!(s, expect, "inverse failed on {preset}");
                }
            }
            // Hermitian symmetry
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(g.omega[i][j].conj_involution(), g.omega[j][i]);
                }
            }
            // Christoffel trace equals d log det
            for i in 0..n {
                let mut tr = RationalFn::zero(n);
                for p in 0..n {
                    tr = tr.add(&g.christoffel[p][i][p]);
                }
                assert_eq!(tr, g.d_log_det[i], "trace identity failed on {preset}");
            }
        }
    }

    #[test]
    fn kahler_violation_reports_indices() {
        // omega_{1 1bar} = 1, omega_{2 2bar} = 1 + z1 zb2 is not Kahler
        let n = 2;
        let mut omega = mat_zero(n);
        omega[0][0] = RationalFn::one(n);
        omega[1][1] = RationalFn::one(n).add(&RationalFn::z(n, 0).mul(&RationalFn::zb(n, 1)));
        let d_rho = vec![RationalFn::zb(n, 0), RationalFn::zb(n, 1)];
        match build_custom(GeometryPreset::Custom, omega, d_rho) {
            Err(Error::NotKahler(..)) => {}
            other => panic!("expected Kahler violation, got {other:?}"),
        }
    }

    #[test]
    fn potential_mismatch_detected() {
        let n = 1;
        let omega = vec![vec![RationalFn::one(n)]];
        let d_rho = vec![RationalFn::z(n, 0)]; // wrong: dbar(z) = 0 != 1
        match build_custom(GeometryPreset::Custom, omega, d_rho) {
            Err(Error::PotentialMismatch(0, 0)) => {}
            other => panic!("expected potential mismatch, got {other:?}"),
        }
    }

    #[test]
    fn alpha_presets_verify() {
        for preset in [GeometryPreset::Flat(1), GeometryPreset::Cp1, GeometryPreset::Disc] {
            let g = build_geometry(preset).unwrap();
            for spec in [AlphaSpec::Zero, AlphaSpec::HbarOmega, AlphaSpec::BerezinToeplitz] {
                alpha_form(&g, &spec).unwrap();
            }
        }
    }

    #[test]
    fn bt_alpha_is_minus_h_ricci() {
        for preset in [GeometryPreset::Cp1, GeometryPreset::Disc] {
            let g = build_geometry(preset).unwrap();
            let a = alpha_form(&g, &AlphaSpec::BerezinToeplitz).unwrap();
            assert_eq!(a.form[0][0].coeff(1), g.ricci[0][0].neg());
        }
    }

    #[test]
    fn custom_alpha_rejects_unclosed() {
        let g = build_geometry(GeometryPreset::Flat(2)).unwrap();
        let n = 2;
        let mut form = vec![vec![HPoly::zero(n); n]; n];
        // alpha_{1 1bar} = h*z2 is not d-closed
        form[0][0] = HPoly::from_ratfn(RationalFn::z(n, 1)).scale_hpow(1);
        let spec = AlphaSpec::Custom { form, dbar_phi: vec![HPoly::zero(n); n] };
        assert!(matches!(alpha_form(&g, &spec), Err(Error::AlphaNotClosed)));
    }
}
