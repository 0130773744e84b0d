//! PT-symmetry machinery: parity operator, PT residuals, signature and the
//! C operator, the metric ρ = PC, the diagonal η-ansatz, Hermitian
//! counterparts, and the CP/ρ inner products.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Inverse, Solve, UPLO};
use num_complex::Complex64 as C64;

use crate::eig::{classify_spectrum, PTTag, SpectralDecomposition};
use crate::error::{Error, Result};
use crate::model::CouplingSet;
use crate::qops::{
    conjugate_entrywise, dagger, frobenius_norm, hermiticity_residual, spin_ops, sz_eigenvalue,
    CMat, CVec, SpinSystem,
};

/// Parity `P = ⊗_i σ_i^z`: diagonal ±1, `P² = I`, conjugation sends
/// `(S^x, S^y, S^z) → (−S^x, −S^y, S^z)` at every site.
pub fn parity_op(sys: &SpinSystem) -> CMat {
    let dim = sys.hilbert_dim();
    let n = sys.site_count();
    let mut p: CMat = Array2::zeros((dim, dim));
    for idx in 0..dim {
        let mut v = 1.0;
        for i in 1..=n {
            v *= 2.0 * sz_eigenvalue(sys, i, idx);
        }
        p[(idx, idx)] = C64::new(v, 0.0);
    }
    p
}

/// PT residual in the conjugation form: `‖P·H*·P⁻¹ − H‖_F / ‖H‖_F`
/// (time reversal = entrywise conjugation in the computational basis).
pub fn pt_residual(h: &CMat, p: &CMat) -> f64 {
    let nh = frobenius_norm(h);
    if nh == 0.0 {
        return 0.0;
    }
    let transformed = p.dot(&conjugate_entrywise(h)).dot(&p.inv().expect("P invertible"));
    frobenius_norm(&(&transformed - h)) / nh
}

/// P-pseudo-Hermiticity residual: `‖P·H†·P⁻¹ − H‖_F / ‖H‖_F`.
///
/// For the imaginary-field XYZ charges this dagger identity holds exactly,
/// while the entrywise-conjugation form [`pt_residual`] does not (the charges
/// are not complex-symmetric). The dagger form is the one that guarantees
/// `P|φ_n⟩ ∝ |ψ_n⟩` for real eigenvalues, which the signature machinery uses.
pub fn pseudo_hermiticity_residual(h: &CMat, p: &CMat) -> f64 {
    let nh = frobenius_norm(h);
    if nh == 0.0 {
        return 0.0;
    }
    let transformed = p.dot(&dagger(h)).dot(&p.inv().expect("P invertible"));
    frobenius_norm(&(&transformed - h)) / nh
}

/// Signature, C operator, and metric ρ = PC for a given decomposition.
#[derive(Debug, Clone)]
pub struct PTOperators {
    pub p: CMat,
    pub signature: Vec<i32>,
    pub c: CMat,
    pub rho: CMat,
    /// Max deviation of `|⟨ψ_n|P|φ_n⟩|` from 1 over all levels. This is
    /// `‖φ_n‖²/|φ_n†Pφ_n| − 1 ≥ 0` and vanishes only in the Hermitian limit,
    /// so it is reported as a diagnostic rather than required to be tiny.
    pub max_overlap_deviation: f64,
}

/// Compute the signature `s_n = ⟨ψ_n|P|φ_n⟩ ∈ {±1}` and
/// `C = Σ_n s_n |φ_n⟩⟨ψ_n|` from a biorthonormalized decomposition.
///
/// Requires the exact PT phase: every eigenvalue real within `tol`
/// (else [`Error::BrokenPTPhase`]). Each overlap `⟨ψ_n|P|φ_n⟩` must have a
/// well-defined sign: its magnitude may deviate from 1 by at most 0.5
/// (else [`Error::SignatureNotUnimodular`] — the P-ansatz does not apply).
pub fn signature_and_c(decomp: &SpectralDecomposition, p: &CMat, tol: f64) -> Result<PTOperators> {
    let class = classify_spectrum(&decomp.eigenvalues, tol);
    let complex_count = class.tags.iter().filter(|t| !matches!(t, PTTag::Real)).count();
    if complex_count > 0 {
        return Err(Error::BrokenPTPhase(complex_count));
    }
    let (signature, c, dev) = build_c(decomp, p, Some(0.5))?;
    let rho = p.dot(&c);
    Ok(PTOperators { p: p.clone(), signature, c, rho, max_overlap_deviation: dev })
}

/// Lenient variant of [`signature_and_c`] for dynamics in partially broken
/// PT phases: the sign rule is applied to every level (no unimodularity
/// gate), and the number of complex eigenvalues is returned alongside so the
/// caller can surface a broken-phase flag.
pub fn signature_and_c_lenient(
    decomp: &SpectralDecomposition,
    p: &CMat,
    tol: f64,
) -> Result<(PTOperators, usize)> {
    let class = classify_spectrum(&decomp.eigenvalues, tol);
    let complex_count = class.tags.iter().filter(|t| !matches!(t, PTTag::Real)).count();
    let (signature, c, dev) = build_c(decomp, p, None)?;
    let rho = p.dot(&c);
    Ok((
        PTOperators { p: p.clone(), signature, c, rho, max_overlap_deviation: dev },
        complex_count,
    ))
}

/// Shared C construction. With `unimodular_tol = Some(t)`, errors when any
/// overlap magnitude deviates from 1 by more than `t`; with `None`, falls back
/// to the sign of the real part (lenient mode for dynamics in broken phases).
pub(crate) fn build_c(
    decomp: &SpectralDecomposition,
    p: &CMat,
    unimodular_tol: Option<f64>,
) -> Result<(Vec<i32>, CMat, f64)> {
    let dim = decomp.eigenvalues.len();
    let mut c: CMat = Array2::zeros((dim, dim));
    let mut signature = Vec::with_capacity(dim);
    let mut max_dev = 0.0f64;
    for n in 0..dim {
        let phi = decomp.right_vector(n);
        let p_phi = p.dot(&phi);
        // ⟨ψ_n|P|φ_n⟩
        let overlap = decomp.left_project(n, &p_phi);
        let dev = (overlap.norm() - 1.0).abs();
        max_dev = max_dev.max(dev);
        if let Some(t) = unimodular_tol {
            if dev > t {
                return Err(Error::SignatureNotUnimodular(dev));
            }
        }
        let s = if overlap.re >= 0.0 { 1 } else { -1 };
        signature.push(s);
        let sgn = C64::new(s as f64, 0.0);
        for r in 0..dim {
            for col in 0..dim {
                c[(r, col)] += sgn * decomp.right[(r, n)] * decomp.left[(col, n)].conj();
            }
        }
    }
    Ok((signature, c, max_dev))
}

/// Metric `ρ = PC` together with its diagnostics: the Hermiticity residual of
/// ρ and its minimal eigenvalue (positivity is checked, not assumed).
#[derive(Debug, Clone)]
pub struct MetricRho {
    pub rho: CMat,
    pub hermiticity_residual: f64,
    pub min_eigenvalue: f64,
}

pub fn metric_rho(p: &CMat, c: &CMat) -> MetricRho {
    let rho = p.dot(c);
    let herm = hermiticity_residual(&rho);
    // Eigenvalues of the Hermitian part ½(ρ + ρ†).
    let sym = rho.mapv(|v| v * 0.5) + dagger(&rho).mapv(|v| v * 0.5);
    let min_eigenvalue = match sym.eigh(UPLO::Upper) {
        Ok((evals, _)) => evals.iter().copied().fold(f64::INFINITY, f64::min),
        Err(_) => f64::NAN,
    };
    MetricRho { rho, hermiticity_residual: herm, min_eigenvalue }
}

/// Intertwining residual `‖H†ρ − ρH‖_F / (‖H‖_F·‖ρ‖_F)` (0 for H = 0).
pub fn intertwining_residual(h: &CMat, rho: &CMat) -> f64 {
    let scale = frobenius_norm(h) * frobenius_norm(rho);
    if scale == 0.0 {
        return 0.0;
    }
    frobenius_norm(&(dagger(h).dot(rho) - rho.dot(h))) / scale
}

/// Diagonal η-ansatz `η = exp(−½ Σ q_i S_i^z)` with `ρ = η†η = exp(−Σ q_i S_i^z)`.
#[derive(Debug, Clone)]
pub struct EtaAnsatz {
    pub q: Vec<f64>,
    pub eta: CMat,
    pub rho_ansatz: CMat,
    /// Max deviation of the exact conjugation `η S_i^± η⁻¹` from the BCH
    /// scalars `e^{∓q_i/2} S_i^±` over all sites.
    pub consistency_residual: f64,
}

/// Build the η-ansatz for real parameters `q`.
pub fn eta_from_q(sys: &SpinSystem, q: &[f64]) -> Result<EtaAnsatz> {
    let n = sys.site_count();
    if q.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "q has length {}, expected {n}",
            q.len()
        )));
    }
    let dim = sys.hilbert_dim();
    let mut eta: CMat = Array2::zeros((dim, dim));
    let mut eta_inv: CMat = Array2::zeros((dim, dim));
    let mut rho: CMat = Array2::zeros((dim, dim));
    for idx in 0..dim {
        let qz: f64 = (1..=n).map(|i| q[i - 1] * sz_eigenvalue(sys, i, idx)).sum();
        eta[(idx, idx)] = C64::new((-0.5 * qz).exp(), 0.0);
        eta_inv[(idx, idx)] = C64::new((0.5 * qz).exp(), 0.0);
        rho[(idx, idx)] = C64::new((-qz).exp(), 0.0);
    }
    // Exact BCH check: η S_i^+ η⁻¹ = e^{−q_i/2} S_i^+, η S_i^− η⁻¹ = e^{+q_i/2} S_i^−.
    let mut residual = 0.0f64;
    for i in 1..=n {
        let (_, _, _, sp, sm) = spin_ops(sys, i)?;
        let lhs = eta.dot(&sp).dot(&eta_inv);
        let rhs = sp.mapv(|v| v * (-q[i - 1] / 2.0).exp());
        residual = residual.max(frobenius_norm(&(&lhs - &rhs)));
        let lhs = eta.dot(&sm).dot(&eta_inv);
        let rhs = sm.mapv(|v| v * (q[i - 1] / 2.0).exp());
        residual = residual.max(frobenius_norm(&(&lhs - &rhs)));
    }
    Ok(EtaAnsatz { q: q.to_vec(), eta, rho_ansatz: rho, consistency_residual: residual })
}

/// Objective `F(q) = Σ_{i≠j} Im(Γ^x_ij e^{q_i−q_j})²` of the Hermitization
/// condition on the transformed couplings.
fn q_objective(cs: &CouplingSet, q: &[f64]) -> f64 {
    let n = cs.site_count();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let im = cs.gamma_x[(i, j)].im * (q[i] - q[j]).exp();
            f += im * im;
        }
    }
    f
}

/// Solve for the η-ansatz parameters of an imaginary-coupling XXZ set by
/// minimizing `Σ_{i≠j} Im(Γ^x_ij e^{q_i−q_j})²` over real `q` (gauge `Σq = 0`,
/// damped Newton on the strictly convex objective).
///
/// The literal condition `Im(Γ̃^x_ij) = 0` has no real-q solution for nonzero
/// real γ (the exponential factor can never rotate `iγ` onto the real axis),
/// so when the minimized residual `√F` exceeds `1e−10·(1 + max|Γ^x|)` the
/// solver reports [`Error::Inapplicable`] with that residual: the diagonal
/// η-ansatz cannot Hermitize this coupling pattern.
pub fn solve_q_xxz(cs: &CouplingSet) -> Result<Vec<f64>> {
    let n = cs.site_count();
    let mut q = vec![0.0f64; n];
    let max_gamma = cs
        .gamma_x
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max);
    let tol = 1e-10 * (1.0 + max_gamma);
    let mut f = q_objective(cs, &q);
    for _ in 0..200 {
        if f.sqrt() <= tol {
            break;
        }
        // t_ij = Im(Γ_ij)²e^{2(q_i−q_j)}; ∇_i F = 2Σ_j (t_ij − t_ji);
        // Hessian H_ii = 4Σ_j (t_ij + t_ji), H_ij = −4(t_ij + t_ji).
        let mut t = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let im = cs.gamma_x[(i, j)].im;
                    t[i][j] = im * im * (2.0 * (q[i] - q[j])).exp();
                }
            }
        }
        let mut grad = Array1::<f64>::zeros(n);
        let mut hess = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                grad[i] += 2.0 * (t[i][j] - t[j][i]);
                hess[(i, i)] += 4.0 * (t[i][j] + t[j][i]);
                hess[(i, j)] -= 4.0 * (t[i][j] + t[j][i]);
            }
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= 1e-14 * (1.0 + f) {
            break; // stationary point of the convex objective = global minimum
        }
        // Regularize the (constant-direction-singular) Hessian and solve.
        let mu = 1e-10 * (1.0 + hess.diag().iter().copied().fold(0.0f64, f64::max));
        for i in 0..n {
            hess[(i, i)] += mu;
        }
        let step = match hess.solve(&grad) {
            Ok(s) => s,
            Err(_) => grad.mapv(|g| g / (1.0 + hess.diag().iter().sum::<f64>())),
        };
        // Damped update with strict decrease; project out the mean (gauge).
        let mut lambda = 1.0;
        let mut advanced = false;
        while lambda > 1e-8 {
            let mut trial: Vec<f64> = q.iter().zip(&step).map(|(qi, s)| qi - lambda * s).collect();
            let mean = trial.iter().sum::<f64>() / n as f64;
            for v in &mut trial {
                *v -= mean;
            }
            let ft = q_objective(cs, &trial);
            if ft < f {
                q = trial;
                f = ft;
                advanced = true;
                break;
            }
            lambda *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    let residual = f.sqrt();
    if residual > tol {
        return Err(Error::Inapplicable(residual));
    }
    Ok(q)
}

/// The per-site rule `e^{q_i} = |B^x_i|⁻¹` for purely imaginary transverse
/// fields, with the consistency residual `√F(q)` of the coupling condition.
/// Errors with [`Error::ZeroLongitudinalField`]-style validation if any
/// `B^x_i` vanishes (the rule is then undefined).
pub fn q_from_field_rule(cs: &CouplingSet) -> Result<(Vec<f64>, f64)> {
    let mut q = Vec::with_capacity(cs.site_count());
    for (i, b) in cs.bx.iter().enumerate() {
        let m = b.norm();
        if m < 1e-300 {
            return Err(Error::Config(format!(
                "field rule undefined: |B^x_{}| = 0",
                i + 1
            )));
        }
        q.push(-m.ln());
    }
    let residual = q_objective_full(cs, &q).sqrt();
    Ok((q, residual))
}

/// Like [`q_objective`] but including the transformed-field conditions
/// `Im(e^{q_i} B^{x,y}_i)` alongside the coupling terms.
fn q_objective_full(cs: &CouplingSet, q: &[f64]) -> f64 {
    let mut f = q_objective(cs, q);
    for (i, (&bx, &by)) in cs.bx.iter().zip(&cs.by).enumerate() {
        let ex = q[i].exp();
        f += (bx.im * ex).powi(2) + (by.im * ex).powi(2);
    }
    f
}

/// Hermitian counterpart `h = η H η⁻¹` with its Hermiticity residual
/// (small only when the ansatz is applicable; the spectrum is preserved for
/// every invertible η regardless).
#[derive(Debug, Clone)]
pub struct HermitianCounterpart {
    pub h: CMat,
    pub hermiticity_residual: f64,
}

pub fn hermitian_counterpart(h: &CMat, eta: &CMat) -> Result<HermitianCounterpart> {
    if h.dim() != eta.dim() {
        return Err(Error::DimensionMismatch(format!(
            "H is {:?}, eta is {:?}",
            h.dim(),
            eta.dim()
        )));
    }
    let eta_inv = eta
        .inv()
        .map_err(|e| Error::Lapack(format!("eta not invertible: {e}")))?;
    let ht = eta.dot(h).dot(&eta_inv);
    let res = hermiticity_residual(&ht);
    Ok(HermitianCounterpart { h: ht, hermiticity_residual: res })
}

/// The closed-form transformed charge
/// `Q̃_i = e^{q_i}B^x_iS^x_i + e^{q_i}B^y_iS^y_i + B^z_iS^z_i
///        + Σ_{k≠i}(e^{q_i+q_k}Γ^x_ik S^xS^x + e^{q_i+q_k}Γ^y_ik S^yS^y + Γ^z_ik S^zS^z)`,
/// and its discrepancy against the exact conjugation `η⁻¹ Q_i η`.
///
/// The discrepancy is expected to be nonzero in general: the closed form
/// assumes `η⁻¹S^xη = e^{q}S^x`, but only the ladder operators `S^±` transform
/// multiplicatively under the diagonal η; `S^x` and `S^y` mix.
#[derive(Debug, Clone)]
pub struct TransformedChargeReport {
    pub closed_form: CMat,
    pub exact: CMat,
    /// `‖exact − closed_form‖_F / ‖exact‖_F`
    pub discrepancy: f64,
}

pub fn transformed_charge_report(
    sys: &SpinSystem,
    cs: &CouplingSet,
    q: &[f64],
    i: usize,
) -> Result<TransformedChargeReport> {
    let n = cs.site_count();
    if i == 0 || i > n {
        return Err(Error::SiteIndexOutOfRange { index: i, sites: n });
    }
    if q.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "q has length {}, expected {n}",
            q.len()
        )));
    }
    let ansatz = eta_from_q(sys, q)?;
    let qi = crate::model::build_charge(sys, cs, i)?;
    let eta_inv = ansatz.eta.inv().expect("diagonal positive eta invertible");
    let exact = eta_inv.dot(&qi).dot(&ansatz.eta);

    let idx = i - 1;
    let (sxi, syi, szi, _, _) = spin_ops(sys, i)?;
    let eqi = q[idx].exp();
    let mut closed = sxi.mapv(|v| v * (cs.bx[idx] * eqi))
        + syi.mapv(|v| v * (cs.by[idx] * eqi))
        + szi.mapv(|v| v * cs.bz[idx]);
    for k in 1..=n {
        if k == i {
            continue;
        }
        let kdx = k - 1;
        let (sxk, syk, szk, _, _) = spin_ops(sys, k)?;
        let eik = (q[idx] + q[kdx]).exp();
        closed = closed
            + sxi.dot(&sxk).mapv(|v| v * (cs.gamma_x[(idx, kdx)] * eik))
            + syi.dot(&syk).mapv(|v| v * (cs.gamma_y[(idx, kdx)] * eik))
            + szi.dot(&szk).mapv(|v| v * cs.gamma_z[(idx, kdx)]);
    }
    let ne = frobenius_norm(&exact);
    let discrepancy = if ne == 0.0 {
        frobenius_norm(&closed)
    } else {
        frobenius_norm(&(&exact - &closed)) / ne
    };
    Ok(TransformedChargeReport { closed_form: closed, exact, discrepancy })
}

/// ρ-inner product `⟨φ|ρ|ψ⟩`.
pub fn inner_rho(phi: &CVec, psi: &CVec, rho: &CMat) -> Result<C64> {
    if phi.len() != psi.len() || rho.dim() != (phi.len(), phi.len()) {
        return Err(Error::DimensionMismatch(format!(
            "inner_rho: phi {}, psi {}, rho {:?}",
            phi.len(),
            psi.len(),
            rho.dim()
        )));
    }
    let rpsi = rho.dot(psi);
    Ok(phi.iter().zip(rpsi.iter()).map(|(a, b)| a.conj() * b).sum())
}

/// CP expectation `⟨ψ|CPA|ψ⟩ / ⟨ψ|CP|ψ⟩`; [`Error::VanishingNorm`] when the
/// denominator magnitude drops below 1e−12.
pub fn expectation_cp(a: &CMat, psi: &CVec, c: &CMat, p: &CMat) -> Result<C64> {
    let dim = psi.len();
    if a.dim() != (dim, dim) || c.dim() != (dim, dim) || p.dim() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "expectation_cp: psi {}, A {:?}, C {:?}, P {:?}",
            dim,
            a.dim(),
            c.dim(),
            p.dim()
        )));
    }
    let cp = c.dot(p);
    let denom: C64 = psi
        .iter()
        .zip(cp.dot(psi).iter())
        .map(|(x, y)| x.conj() * y)
        .sum();
    if denom.norm() < 1e-12 {
        return Err(Error::VanishingNorm(denom.norm()));
    }
    let numer: C64 = psi
        .iter()
        .zip(cp.dot(&a.dot(psi)).iter())
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(numer / denom)
}
