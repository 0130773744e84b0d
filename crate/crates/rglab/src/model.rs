//! Model data: single-particle energies, magnetic fields, and coupling
//! matrices for the XXZ and XYZ Richardson-Gaudin families, plus
//! Hamiltonian/charge builders and integrability-condition checks.
//!
//! Coupling conventions (fixed here, used crate-wide):
//!
//! * For XXZ family sets, `CouplingSet` stores the *family* values
//!   (`Γx = 1/d`, `Γz = 1/d` for the rational family, etc.) with `g` kept as a
//!   separate factor, matching how the integrability conditions are stated.
//! * Charge building always uses the Cartesian convention: `Γ^α_ik` multiplies
//!   `S_i^α S_k^α`. [`charge_couplings_xxz`] converts a family set into that
//!   form (`Γ^α_cart = g·Γ^α_family`); this is the scaling under which the
//!   charges actually commute (the pairing-form coefficient is then `gΓx/2`,
//!   which resolves a factor-2 ambiguity in the usual presentation).
//! * XYZ field sets produced by [`build_fields_xyz`] are already Cartesian
//!   with `g` folded into the `Γ` matrices.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qops::{frobenius_norm, spin_ops, CMat, SpinSystem};

/// XXZ coupling family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Rational,
    Trigonometric,
    Hyperbolic,
}

/// Family coupling values `(Γx(d), Γz(d))` for `d = εi − εj`:
/// rational `(1/d, 1/d)`, trigonometric `(1/sin d, cot d)`,
/// hyperbolic `(1/sinh d, coth d)`.
pub fn coupling_family(kind: FamilyKind, ei: f64, ej: f64) -> Result<(f64, f64)> {
    let d = ei - ej;
    match kind {
        FamilyKind::Rational => {
            if d.abs() < 1e-12 {
                return Err(Error::SingularDifference(d));
            }
            Ok((1.0 / d, 1.0 / d))
        }
        FamilyKind::Trigonometric => {
            let s = d.sin();
            if s.abs() < 1e-12 {
                return Err(Error::SingularDifference(s));
            }
            Ok((1.0 / s, d.cos() / s))
        }
        FamilyKind::Hyperbolic => {
            let s = d.sinh();
            if s.abs() < 1e-12 {
                return Err(Error::SingularDifference(s));
            }
            Ok((1.0 / s, d.cosh() / s))
        }
    }
}

/// Parameters of the arbitrary-field XYZ parametrization.
#[derive(Debug, Clone)]
pub struct XYZFieldParams {
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub beta_x: f64,
    pub beta_y: f64,
    pub delta: C64,
    pub lambda: C64,
    pub epsilon: Vec<f64>,
    pub g: f64,
}

impl XYZFieldParams {
    fn validate(&self) -> Result<()> {
        check_distinct(&self.epsilon)?;
        for (i, &e) in self.epsilon.iter().enumerate() {
            let fx = self.alpha_x * e + self.beta_x;
            let fy = self.alpha_y * e + self.beta_y;
            if fx <= 0.0 {
                return Err(Error::NonPositiveRadicand { site: i + 1, value: fx });
            }
            if fy <= 0.0 {
                return Err(Error::NonPositiveRadicand { site: i + 1, value: fy });
            }
        }
        Ok(())
    }
}

fn check_distinct(epsilon: &[f64]) -> Result<()> {
    for i in 0..epsilon.len() {
        for j in (i + 1)..epsilon.len() {
            if (epsilon[i] - epsilon[j]).abs() < 1e-12 {
                return Err(Error::EpsilonNotDistinct);
            }
        }
    }
    Ok(())
}

/// The model data `{ε_i, g, B_i^α, Γ^α_ij}`: everything needed to build
/// charges and Hamiltonians. `Γ` diagonals are structurally zero.
#[derive(Debug, Clone)]
pub struct CouplingSet {
    pub epsilon: Vec<f64>,
    pub g: f64,
    pub bx: Vec<C64>,
    pub by: Vec<C64>,
    pub bz: Vec<f64>,
    pub gamma_x: Array2<C64>,
    pub gamma_y: Array2<C64>,
    pub gamma_z: Array2<C64>,
}

impl CouplingSet {
    /// Validated constructor: ε pairwise distinct, Γ diagonals exactly zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        epsilon: Vec<f64>,
        g: f64,
        bx: Vec<C64>,
        by: Vec<C64>,
        bz: Vec<f64>,
        gamma_x: Array2<C64>,
        gamma_y: Array2<C64>,
        gamma_z: Array2<C64>,
    ) -> Result<Self> {
        check_distinct(&epsilon)?;
        let n = epsilon.len();
        for (name, v) in [("bx", bx.len()), ("by", by.len()), ("bz", bz.len())] {
            if v != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has length {v}, expected {n}"
                )));
            }
        }
        for (name, m) in [("gamma_x", &gamma_x), ("gamma_y", &gamma_y), ("gamma_z", &gamma_z)] {
            if m.dim() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {:?}, expected ({n}, {n})",
                    m.dim()
                )));
            }
            for i in 0..n {
                if m[(i, i)].norm() != 0.0 {
                    return Err(Error::DimensionMismatch(format!(
                        "{name} has nonzero diagonal entry at {i}"
                    )));
                }
            }
        }
        Ok(CouplingSet { epsilon, g, bx, by, bz, gamma_x, gamma_y, gamma_z })
    }

    pub fn site_count(&self) -> usize {
        self.epsilon.len()
    }
}

/// Build the full XYZ arbitrary-field coupling set:
/// `B^x_i = δ/√(αx εi+βx)`, `B^y_i = λ/√(αy εi+βy)`, `B^z_i = 1`, and with
/// `fx = αx ε+βx`, `fy = αy ε+βy`:
/// `Γ^x_ij = g√(fx_i fy_j)/(εi−εj)`, `Γ^y_ij = g√(fy_i fx_j)/(εi−εj)`,
/// `Γ^z_ij = g√(fx_j fy_j)/(εi−εj)` (both `Γ^z` factors at index `j`).
pub fn build_fields_xyz(p: &XYZFieldParams) -> Result<CouplingSet> {
    p.validate()?;
    let n = p.epsilon.len();
    let fx: Vec<f64> = p.epsilon.iter().map(|&e| p.alpha_x * e + p.beta_x).collect();
    let fy: Vec<f64> = p.epsilon.iter().map(|&e| p.alpha_y * e + p.beta_y).collect();
    let bx: Vec<C64> = fx.iter().map(|&f| p.delta / f.sqrt()).collect();
    let by: Vec<C64> = fy.iter().map(|&f| p.lambda / f.sqrt()).collect();
    let bz = vec![1.0; n];
    let mut gx: Array2<C64> = Array2::zeros((n, n));
    let mut gy: Array2<C64> = Array2::zeros((n, n));
    let mut gz: Array2<C64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = p.epsilon[i] - p.epsilon[j];
            gx[(i, j)] = C64::new(p.g * (fx[i] * fy[j]).sqrt() / d, 0.0);
            gy[(i, j)] = C64::new(p.g * (fy[i] * fx[j]).sqrt() / d, 0.0);
            gz[(i, j)] = C64::new(p.g * (fx[j] * fy[j]).sqrt() / d, 0.0);
        }
    }
    CouplingSet::new(p.epsilon.clone(), p.g, bx, by, bz, gx, gy, gz)
}

/// Build an XXZ family coupling set. `Γ` matrices hold the *family* values
/// (`g` is stored separately); `gamma_y` mirrors `gamma_x` (XXZ shape).
/// `B = (0, 0, 1)` at every site. With `imaginary_x` set, `Γ^x` is multiplied
/// by `i` (the PT deformation `Γ^x_ij = iγ_ij`).
pub fn xxz_coupling_set(
    kind: FamilyKind,
    epsilon: &[f64],
    g: f64,
    imaginary_x: bool,
) -> Result<CouplingSet> {
    check_distinct(epsilon)?;
    let n = epsilon.len();
    let mut gx: Array2<C64> = Array2::zeros((n, n));
    let mut gz: Array2<C64> = Array2::zeros((n, n));
    let phase = if imaginary_x { C64::new(0.0, 1.0) } else { C64::new(1.0, 0.0) };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (x, z) = coupling_family(kind, epsilon[i], epsilon[j])?;
            gx[(i, j)] = phase * x;
            gz[(i, j)] = C64::new(z, 0.0);
        }
    }
    CouplingSet::new(
        epsilon.to_vec(),
        g,
        vec![C64::new(0.0, 0.0); n],
        vec![C64::new(0.0, 0.0); n],
        vec![1.0; n],
        gx.clone(),
        gx,
        gz,
    )
}

/// Convert an XXZ family set into charge-ready Cartesian couplings:
/// `Γ^α_cart = g·Γ^α_family` for α ∈ {x, y, z} (with `Γ^y = Γ^x`), `B=(0,0,1)`.
/// Under this scaling the charges built by [`build_charge`] mutually commute.
pub fn charge_couplings_xxz(cs: &CouplingSet) -> Result<CouplingSet> {
    let g = C64::new(cs.g, 0.0);
    CouplingSet::new(
        cs.epsilon.clone(),
        cs.g,
        cs.bx.clone(),
        cs.by.clone(),
        cs.bz.clone(),
        cs.gamma_x.mapv(|v| v * g),
        cs.gamma_y.mapv(|v| v * g),
        cs.gamma_z.mapv(|v| v * g),
    )
}

/// Residuals of the XXZ integrability conditions.
#[derive(Debug, Clone, Copy)]
pub struct XxzIntegrabilityReport {
    /// `max |Γx_ij + Γx_ji|`
    pub antisymmetry_x: f64,
    /// `max |Γz_ij + Γz_ji|`
    pub antisymmetry_z: f64,
    /// `max |Γx_ij Γx_jk − Γx_ik (Γz_ij + Γz_jk)|`
    pub triple: f64,
}

impl XxzIntegrabilityReport {
    pub fn max(&self) -> f64 {
        self.antisymmetry_x.max(self.antisymmetry_z).max(self.triple)
    }
}

/// Check the XXZ integrability conditions on an XXZ-shaped set
/// (`gamma_y == gamma_x`). The conditions are homogeneous in `Γ`, so they may
/// be evaluated on family or `g`-scaled matrices alike.
pub fn check_integrability_xxz(cs: &CouplingSet) -> XxzIntegrabilityReport {
    let n = cs.site_count();
    let gx = &cs.gamma_x;
    let gz = &cs.gamma_z;
    let mut ax = 0.0f64;
    let mut az = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            ax = ax.max((gx[(i, j)] + gx[(j, i)]).norm());
            az = az.max((gz[(i, j)] + gz[(j, i)]).norm());
        }
    }
    let mut triple = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i == j || j == k || i == k {
                    continue;
                }
                let r = gx[(i, j)] * gx[(j, k)] - gx[(i, k)] * (gz[(i, j)] + gz[(j, k)]);
                triple = triple.max(r.norm());
            }
        }
    }
    XxzIntegrabilityReport { antisymmetry_x: ax, antisymmetry_z: az, triple }
}

/// Residuals of the XYZ integrability conditions.
#[derive(Debug, Clone, Copy)]
pub struct XyzIntegrabilityReport {
    /// `max |Γ^β_ij B^α_j + Γ^γ_ji B^α_i|` over i≠j and all axis permutations.
    ///
    /// Note: the second superscript is the *third* axis γ of the permutation;
    /// the variant with Γ^α there (as sometimes quoted) does not vanish on
    /// integrable sets and is not the condition actually equivalent to
    /// commuting charges.
    pub linear: f64,
    /// `max |Γ^α_ik Γ^β_jk − Γ^α_ij Γ^γ_jk − Γ^β_ji Γ^γ_ik|` over distinct
    /// i, j, k and all axis permutations.
    pub quadratic: f64,
}

impl XyzIntegrabilityReport {
    pub fn max(&self) -> f64 {
        self.linear.max(self.quadratic)
    }
}

fn axis_gamma<'a>(cs: &'a CouplingSet, axis: usize) -> &'a Array2<C64> {
    match axis {
        0 => &cs.gamma_x,
        1 => &cs.gamma_y,
        _ => &cs.gamma_z,
    }
}

fn axis_b(cs: &CouplingSet, axis: usize, i: usize) -> C64 {
    match axis {
        0 => cs.bx[i],
        1 => cs.by[i],
        _ => C64::new(cs.bz[i], 0.0),
    }
}

/// Check the XYZ integrability conditions on a full (Cartesian) coupling set.
pub fn check_integrability_xyz(cs: &CouplingSet) -> XyzIntegrabilityReport {
    let n = cs.site_count();
    const PERMS: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut linear = 0.0f64;
    let mut quadratic = 0.0f64;
    for [a, b, c] in PERMS {
        let ga = axis_gamma(cs, a);
        let gb = axis_gamma(cs, b);
        let gc = axis_gamma(cs, c);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let r = gb[(i, j)] * axis_b(cs, a, j) + gc[(j, i)] * axis_b(cs, a, i);
                linear = linear.max(r.norm());
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let r = ga[(i, k)] * gb[(j, k)]
                        - ga[(i, j)] * gc[(j, k)]
                        - gb[(j, i)] * gc[(i, k)];
                    quadratic = quadratic.max(r.norm());
                }
            }
        }
    }
    XyzIntegrabilityReport { linear, quadratic }
}

/// The XXZ pairing Hamiltonian, literally
/// `H = Σ ε_i S_i^z + g Σ_{i≠j} (Γx_ij (S_i^+S_j^− + S_i^−S_j^+) + Γz_ij S_i^z S_j^z)`
/// on the stored (family-convention) `Γ` matrices.
///
/// Note that `S_i^+S_j^− + S_i^−S_j^+` is symmetric under `i↔j`, so for
/// antisymmetric `Γ` (the integrable families) the interaction cancels in this
/// double sum; the interacting integrable Hamiltonian is a combination of
/// charges instead (see [`build_hamiltonian_from_charges`]).
pub fn build_hamiltonian_xxz(sys: &SpinSystem, cs: &CouplingSet) -> Result<CMat> {
    let n = cs.site_count();
    if n != sys.site_count() {
        return Err(Error::DimensionMismatch(format!(
            "coupling set has {n} sites, system has {}",
            sys.site_count()
        )));
    }
    let dim = sys.hilbert_dim();
    let mut h: CMat = Array2::zeros((dim, dim));
    let mut ops = Vec::with_capacity(n);
    for i in 1..=n {
        ops.push(spin_ops(sys, i)?);
    }
    for i in 0..n {
        let (_, _, sz, _, _) = &ops[i];
        h = h + sz.mapv(|v| v * cs.epsilon[i]);
    }
    let g = C64::new(cs.g, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (_, _, szi, spi, smi) = &ops[i];
            let (_, _, szj, spj, smj) = &ops[j];
            let flip = spi.dot(smj) + smi.dot(spj);
            let zz = szi.dot(szj);
            h = h + flip.mapv(|v| v * (g * cs.gamma_x[(i, j)]))
                + zz.mapv(|v| v * (g * cs.gamma_z[(i, j)]));
        }
    }
    Ok(h)
}

/// Spin-operator normalization for charge building.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeNormalization {
    /// `S^α = σ^α/2` (the default physical convention).
    Spin,
    /// Bare Pauli matrices `σ^α` (the normalization under which the quadratic
    /// operator relation holds with κ = 1).
    Pauli,
}

/// The conserved charge `Q_i = B⃗_i·S⃗_i + Σ_{k≠i} Σ_α Γ^α_ik S_i^α S_k^α`
/// built from Cartesian couplings (1-based site index `i`).
pub fn build_charge(sys: &SpinSystem, cs: &CouplingSet, i: usize) -> Result<CMat> {
    build_charge_normalized(sys, cs, i, ChargeNormalization::Spin)
}

/// [`build_charge`] with an explicit spin-operator normalization.
pub fn build_charge_normalized(
    sys: &SpinSystem,
    cs: &CouplingSet,
    i: usize,
    norm: ChargeNormalization,
) -> Result<CMat> {
    let n = cs.site_count();
    if n != sys.site_count() {
        return Err(Error::DimensionMismatch(format!(
            "coupling set has {n} sites, system has {}",
            sys.site_count()
        )));
    }
    if i == 0 || i > n {
        return Err(Error::SiteIndexOutOfRange { index: i, sites: n });
    }
    let scale = match norm {
        ChargeNormalization::Spin => 1.0,
        ChargeNormalization::Pauli => 2.0,
    };
    let spin_axes = |site: usize| -> Result<[CMat; 3]> {
        let (sx, sy, sz, _, _) = spin_ops(sys, site)?;
        Ok([
            sx.mapv(|v| v * scale),
            sy.mapv(|v| v * scale),
            sz.mapv(|v| v * scale),
        ])
    };
    let si = spin_axes(i)?;
    let idx = i - 1;
    let dim = sys.hilbert_dim();
    let mut q: CMat = Array2::zeros((dim, dim));
    q = q + si[0].mapv(|v| v * cs.bx[idx])
        + si[1].mapv(|v| v * cs.by[idx])
        + si[2].mapv(|v| v * cs.bz[idx]);
    for k in 1..=n {
        if k == i {
            continue;
        }
        let sk = spin_axes(k)?;
        let kdx = k - 1;
        for (axis, gm) in
            [&cs.gamma_x, &cs.gamma_y, &cs.gamma_z].iter().enumerate()
        {
            let coeff = gm[(idx, kdx)];
            if coeff.norm() == 0.0 {
                continue;
            }
            q = q + si[axis].dot(&sk[axis]).mapv(|v| v * coeff);
        }
    }
    Ok(q)
}

/// Weighted charge combination `H = Σ α_i Q_i`.
pub fn build_hamiltonian_from_charges(charges: &[CMat], weights: &[f64]) -> Result<CMat> {
    if charges.len() != weights.len() {
        return Err(Error::LengthMismatch { got: weights.len(), expected: charges.len() });
    }
    if charges.is_empty() {
        return Err(Error::DimensionMismatch("empty charge list".into()));
    }
    let dim = charges[0].nrows();
    let mut h: CMat = Array2::zeros((dim, dim));
    for (q, &w) in charges.iter().zip(weights) {
        if q.dim() != (dim, dim) {
            return Err(Error::DimensionMismatch("charge dimensions differ".into()));
        }
        h = h + q.mapv(|v| v * w);
    }
    Ok(h)
}

/// Relative non-Hermiticity `‖A − A†‖_F / ‖A‖_F` (0 for the zero matrix).
pub fn non_hermiticity(a: &CMat) -> f64 {
    let n = frobenius_norm(a);
    if n == 0.0 {
        return 0.0;
    }
    frobenius_norm(&(a - &crate::qops::dagger(a))) / n
}

/// The Fig.-2-style XYZ parameter set used throughout the tests:
/// `N=4, ε=(0.1,0.3,0.5,0.7), α=1, β=0.5`, with `δ = λ` given by the caller.
pub fn reference_xyz_params(g: f64, delta_lambda: C64) -> XYZFieldParams {
    XYZFieldParams {
        alpha_x: 1.0,
        alpha_y: 1.0,
        beta_x: 0.5,
        beta_y: 0.5,
        delta: delta_lambda,
        lambda: delta_lambda,
        epsilon: vec![0.1, 0.3, 0.5, 0.7],
        g,
    }
}
