//! Conserved-charge suite: build all `Q_i`, verify mutual commutation,
//! evaluate the quadratic operator relations `Q_i² = Σ_j C_ij Q_j + κK_i`,
//! and the transfer-matrix sanity check.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{build_charge_normalized, ChargeNormalization, CouplingSet};
use crate::qops::{commutator, frobenius_norm, identity, spin_ops, CMat, SpinSystem};

/// All N conserved charges of a coupling set, with the normalization they
/// were built under and a copy of their source couplings.
#[derive(Debug, Clone)]
pub struct ChargeSet {
    pub charges: Vec<CMat>,
    pub normalization: ChargeNormalization,
    pub source: CouplingSet,
}

impl ChargeSet {
    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }
}

/// Build all charges `Q_1..Q_N`. Runs data-parallel over sites when the
/// `parallel` feature is enabled; results are collected in site order either
/// way, so output is identical across both code paths.
pub fn build_all(
    sys: &SpinSystem,
    cs: &CouplingSet,
    normalization: ChargeNormalization,
) -> Result<ChargeSet> {
    let n = cs.site_count();
    #[cfg(feature = "parallel")]
    let charges: Result<Vec<CMat>> = (1..=n)
        .into_par_iter()
        .map(|i| build_charge_normalized(sys, cs, i, normalization))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let charges: Result<Vec<CMat>> = (1..=n)
        .map(|i| build_charge_normalized(sys, cs, i, normalization))
        .collect();
    Ok(ChargeSet { charges: charges?, normalization, source: cs.clone() })
}

/// Max over i<j of `‖[Q_i, Q_j]‖_F / (‖Q_i‖_F ‖Q_j‖_F)`; when a Hamiltonian
/// is supplied, `‖[Q_i, H]‖_F / (‖Q_i‖_F ‖H‖_F)` terms are folded into the
/// same maximum. Pairwise residuals are computed in parallel (ordered
/// collection, sequential reduction — bit-identical to the sequential path).
pub fn commutation_report(set: &ChargeSet, h: Option<&CMat>) -> f64 {
    let n = set.charges.len();
    let norms: Vec<f64> = set.charges.iter().map(frobenius_norm).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    let residual = |&(i, j): &(usize, usize)| -> f64 {
        let scale = norms[i] * norms[j];
        if scale == 0.0 {
            return 0.0;
        }
        frobenius_norm(&commutator(&set.charges[i], &set.charges[j])) / scale
    };
    #[cfg(feature = "parallel")]
    let residuals: Vec<f64> = pairs.par_iter().map(residual).collect();
    #[cfg(not(feature = "parallel"))]
    let residuals: Vec<f64> = pairs.iter().map(residual).collect();
    let mut max = residuals.iter().copied().fold(0.0f64, f64::max);
    if let Some(h) = h {
        let nh = frobenius_norm(h);
        if nh > 0.0 {
            for (q, &nq) in set.charges.iter().zip(&norms) {
                if nq > 0.0 {
                    max = max.max(frobenius_norm(&commutator(q, h)) / (nq * nh));
                }
            }
        }
    }
    max
}

/// Coefficients of the quadratic relation `Q_i² = Σ_{j≠i} C_ij Q_j + κK_i`.
#[derive(Debug, Clone)]
pub struct QuadraticRelation {
    /// `C_ij` with zero diagonal, from the linear-terms branch where usable.
    pub c: Array2<C64>,
    /// `K_i = Σ_α (B_i^α)² + Σ_α Σ_{k≠i} (Γ^α_ik)²` (complex squares, verbatim).
    pub k: Vec<C64>,
    /// Max spread between all usable branch evaluations of any `C_ik`.
    pub branch_agreement: f64,
}

const DENOM_TOL: f64 = 1e-12;

/// Evaluate both closed-form branches of `C_ik` for every usable axis and the
/// verbatim `K_i`. The linear-terms branch `C_ik = 2B_i^αΓ^α_ik/B_k^α` is
/// preferred where a denominator survives; the quadratic-terms branch
/// `C_ik = −2Γ^β_ikΓ^γ_ik/Γ^α_ki` is evaluated as a consistency check.
pub fn quadratic_coeffs(cs: &CouplingSet) -> Result<QuadraticRelation> {
    let n = cs.site_count();
    let gammas = [&cs.gamma_x, &cs.gamma_y, &cs.gamma_z];
    let b = |axis: usize, i: usize| -> C64 {
        match axis {
            0 => cs.bx[i],
            1 => cs.by[i],
            _ => C64::new(cs.bz[i], 0.0),
        }
    };
    let mut k = Vec::with_capacity(n);
    for i in 0..n {
        let mut ki = C64::new(0.0, 0.0);
        for axis in 0..3 {
            let bi = b(axis, i);
            ki += bi * bi;
            for kk in 0..n {
                if kk != i {
                    let g = gammas[axis][(i, kk)];
                    ki += g * g;
                }
            }
        }
        k.push(ki);
    }
    let mut c: Array2<C64> = Array2::zeros((n, n));
    let mut agreement = 0.0f64;
    for i in 0..n {
        for kk in 0..n {
            if kk == i {
                continue;
            }
            let mut values: Vec<C64> = Vec::new();
            let mut chosen: Option<C64> = None;
            for axis in 0..3 {
                let denom = b(axis, kk);
                if denom.norm() > DENOM_TOL {
                    let v = 2.0 * b(axis, i) * gammas[axis][(i, kk)] / denom;
                    if chosen.is_none() {
                        chosen = Some(v);
                    }
                    values.push(v);
                }
            }
            for axis in 0..3 {
                let denom = gammas[axis][(kk, i)];
                if denom.norm() > DENOM_TOL {
                    let (beta, gamma) = match axis {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    let v = -2.0 * gammas[beta][(i, kk)] * gammas[gamma][(i, kk)] / denom;
                    if chosen.is_none() {
                        chosen = Some(v);
                    }
                    values.push(v);
                }
            }
            let chosen = chosen.ok_or(Error::AllDenominatorsVanish { i, k: kk })?;
            c[(i, kk)] = chosen;
            for a in 0..values.len() {
                for bb in (a + 1)..values.len() {
                    agreement = agreement.max((values[a] - values[bb]).norm());
                }
            }
        }
    }
    Ok(QuadraticRelation { c, k, branch_agreement: agreement })
}

/// Result of checking the quadratic relation against actual charge matrices.
#[derive(Debug, Clone)]
pub struct QuadraticResidual {
    /// `‖Q_i² − Σ_{j≠i} C_ij Q_j − κK_i·I‖_F` per charge, at the chosen κ.
    pub per_charge: Vec<f64>,
    /// κ ∈ {1, 1/4, 1/2} minimizing the summed residual (the normalization
    /// convention of `K_i` is calibrated, not assumed).
    pub kappa: f64,
}

pub fn quadratic_residual(set: &ChargeSet, qr: &QuadraticRelation) -> Result<QuadraticResidual> {
    let n = set.charges.len();
    if qr.k.len() != n || qr.c.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "quadratic relation sized for {} charges, set has {n}",
            qr.k.len()
        )));
    }
    let dim = set.charges[0].nrows();
    let eye = identity(dim);
    let mut best: Option<QuadraticResidual> = None;
    for kappa in [1.0, 0.25, 0.5] {
        let mut per = Vec::with_capacity(n);
        for i in 0..n {
            let mut rhs: CMat = eye.mapv(|v| v * (qr.k[i] * kappa));
            for j in 0..n {
                if j != i {
                    rhs = rhs + set.charges[j].mapv(|v| v * qr.c[(i, j)]);
                }
            }
            let qsq = set.charges[i].dot(&set.charges[i]);
            per.push(frobenius_norm(&(&qsq - &rhs)));
        }
        let total: f64 = per.iter().sum();
        let better = match &best {
            None => true,
            Some(b) => total < b.per_charge.iter().sum::<f64>(),
        };
        if better {
            best = Some(QuadraticResidual { per_charge: per, kappa });
        }
    }
    Ok(best.expect("kappa candidates nonempty"))
}

/// Transfer matrix `T(u) = Σ_i S_i^z / (u − ε_i)` (stated form, implemented
/// verbatim; note the site Lax matrix is traceless, so this is the
/// conventional generating object rather than a literal trace).
pub fn transfer_matrix(sys: &SpinSystem, cs: &CouplingSet, u: C64) -> Result<CMat> {
    let n = cs.site_count();
    if n != sys.site_count() {
        return Err(Error::DimensionMismatch(format!(
            "coupling set has {n} sites, system has {}",
            sys.site_count()
        )));
    }
    let dim = sys.hilbert_dim();
    let mut t: CMat = Array2::zeros((dim, dim));
    for i in 1..=n {
        let d = u - cs.epsilon[i - 1];
        if d.norm() < 1e-12 {
            return Err(Error::PoleAtEpsilon(i - 1));
        }
        let (_, _, sz, _, _) = spin_ops(sys, i)?;
        t = t + sz.mapv(|v| v / d);
    }
    Ok(t)
}
