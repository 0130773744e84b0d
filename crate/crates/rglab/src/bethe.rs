//! Richardson–Bethe solver for the rational pairing model: damped Newton
//! with analytic Jacobian and a g-homotopy for the root equations, Bethe
//! state construction, and validation against exact diagonalization.
//!
//! Validation Hamiltonian (re-derived from the one-pair consistency of the
//! root equation's ½ factor): `H_R = Σ_i 2ε_i S_i^z + g Σ_{i,j} S_i^+ S_j^−`
//! (uniform pairing, the double sum including i = j).

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use num_complex::Complex64 as C64;

use crate::eig::eig_general;
use crate::error::{Error, Result};
use crate::qops::{spin_ops, CMat, CVec, SpinSystem};

/// Problem statement: `M` pairs over `N` distinct levels with coupling `g`.
#[derive(Debug, Clone)]
pub struct RichardsonProblem {
    pub epsilon: Vec<f64>,
    pub m: usize,
}

impl RichardsonProblem {
    pub fn new(epsilon: Vec<f64>, m: usize) -> Result<Self> {
        let n = epsilon.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if (epsilon[i] - epsilon[j]).abs() < 1e-12 {
                    return Err(Error::EpsilonNotDistinct);
                }
            }
        }
        if m == 0 || m > n {
            return Err(Error::InvalidPairCount { m, n });
        }
        Ok(RichardsonProblem { epsilon, m })
    }
}

/// Solved Bethe roots with the achieved residual and the homotopy trace.
#[derive(Debug, Clone)]
pub struct BetheRoots {
    pub roots: Vec<C64>,
    /// `max_α |equation value|` at the target coupling.
    pub residual: f64,
    /// `(g, roots)` checkpoints along the homotopy.
    pub trace: Vec<(f64, Vec<C64>)>,
}

/// Richardson equation values
/// `f_α = 1/g + ½ Σ_j 1/(ε_j − E_α) − Σ_{β≠α} 1/(E_β − E_α)`.
fn equations(epsilon: &[f64], g: f64, roots: &[C64]) -> Vec<C64> {
    let m = roots.len();
    let mut f = vec![C64::new(1.0 / g, 0.0); m];
    for (a, fa) in f.iter_mut().enumerate() {
        for &e in epsilon {
            *fa += 0.5 / (C64::new(e, 0.0) - roots[a]);
        }
        for b in 0..m {
            if b != a {
                *fa -= 1.0 / (roots[b] - roots[a]);
            }
        }
    }
    f
}

fn residual_of(f: &[C64]) -> f64 {
    f.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn jacobian(epsilon: &[f64], roots: &[C64]) -> Array2<C64> {
    let m = roots.len();
    let mut j: Array2<C64> = Array2::zeros((m, m));
    for a in 0..m {
        let mut diag = C64::new(0.0, 0.0);
        for &e in epsilon {
            let d = C64::new(e, 0.0) - roots[a];
            diag += 0.5 / (d * d);
        }
        for b in 0..m {
            if b != a {
                let d = roots[b] - roots[a];
                diag -= 1.0 / (d * d);
                j[(a, b)] = 1.0 / (d * d);
            }
        }
        j[(a, a)] = diag;
    }
    j
}

fn solve_tol(g: f64) -> f64 {
    1e-11 * 1.0f64.max(1.0 / g.abs())
}

/// Damped Newton at fixed g: accepts `E ∓ λ·step` whichever strictly
/// decreases the residual, halving λ to a floor. Returns the roots on
/// convergence, `None` when stuck.
fn newton_at(epsilon: &[f64], g: f64, start: &[C64]) -> Option<(Vec<C64>, f64)> {
    let m = start.len();
    let mut roots = start.to_vec();
    let mut f = equations(epsilon, g, &roots);
    let mut res = residual_of(&f);
    let tol = solve_tol(g);
    for _ in 0..100 {
        if res <= tol {
            return Some((roots, res));
        }
        let j = jacobian(epsilon, &roots);
        let rhs: Array1<C64> = Array1::from_vec(f.clone());
        let step = j.solve(&rhs).ok()?;
        let mut lambda = 1.0f64;
        let mut advanced = false;
        while lambda >= 1e-7 {
            // Evaluate both displacement signs and take the better one.
            let mut best: Option<(Vec<C64>, Vec<C64>, f64)> = None;
            for sign in [1.0, -1.0] {
                let trial: Vec<C64> = (0..m)
                    .map(|a| roots[a] + sign * lambda * step[a])
                    .collect();
                let ft = equations(epsilon, g, &trial);
                let rt = residual_of(&ft);
                if rt.is_finite() && best.as_ref().map(|b| rt < b.2).unwrap_or(true) {
                    best = Some((trial, ft, rt));
                }
            }
            if let Some((trial, ft, rt)) = best {
                if rt < res {
                    roots = trial;
                    f = ft;
                    res = rt;
                    advanced = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    if res <= tol {
        Some((roots, res))
    } else {
        None
    }
}

const MIN_GAP: f64 = 1e-10;

fn min_root_gap(roots: &[C64]) -> f64 {
    let m = roots.len();
    let mut gap = f64::INFINITY;
    for a in 0..m {
        for b in (a + 1)..m {
            gap = gap.min((roots[a] - roots[b]).norm());
        }
    }
    gap
}

/// Solve the Richardson equations at `target_g` by homotopy from a weak
/// coupling of the same sign (seed `E_α = ε_α + g₀/2`), with adaptive
/// doubling/halving of the g-step and damped Newton at every checkpoint.
pub fn solve_richardson(p: &RichardsonProblem, target_g: f64) -> Result<BetheRoots> {
    if target_g == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    match solve_with_seed_offset(p, target_g, 0.0) {
        Ok(r) => Ok(r),
        Err(Error::RootCollision(_)) | Err(Error::NonConvergence { .. }) => {
            // Documented deterministic retry: small fixed imaginary stagger
            // on the seeds to break a symmetric collision.
            solve_with_seed_offset(p, target_g, 1e-4)
        }
        Err(e) => Err(e),
    }
}

fn solve_with_seed_offset(
    p: &RichardsonProblem,
    target_g: f64,
    imag_seed: f64,
) -> Result<BetheRoots> {
    let sign = target_g.signum();
    let g0 = sign * target_g.abs().min(0.01);
    let mut roots: Vec<C64> = (0..p.m)
        .map(|a| C64::new(p.epsilon[a] + g0 / 2.0, imag_seed * (a as f64 + 1.0)))
        .collect();
    let mut trace: Vec<(f64, Vec<C64>)> = Vec::new();

    let mut cur_g = g0;
    let (r, _res) = newton_at(&p.epsilon, cur_g, &roots).ok_or(Error::NonConvergence {
        residual: residual_of(&equations(&p.epsilon, cur_g, &roots)),
        g_reached: cur_g,
    })?;
    roots = r;
    trace.push((cur_g, roots.clone()));

    // Geometric homotopy in |g|: each outer step tries to double the reached
    // magnitude (capped at the target), halving the increment on Newton
    // failure down to a floor. A bounded deterministic imaginary stagger of
    // the current roots lets the continuation cross real-axis root
    // collisions, where the root pair must leave the real line and purely
    // real Newton iterates stall.
    let mut staggers = 0usize;
    while (target_g - cur_g).abs() > 1e-15 {
        let remaining = (target_g - cur_g).abs();
        let mut step = remaining.min(cur_g.abs());
        loop {
            let next_g = cur_g + sign * step;
            match newton_at(&p.epsilon, next_g, &roots) {
                Some((r, _)) => {
                    roots = r;
                    cur_g = next_g;
                    trace.push((cur_g, roots.clone()));
                    break;
                }
                None => {
                    step /= 2.0;
                    if step < 1e-7 {
                        if staggers < 3 {
                            staggers += 1;
                            for (a, root) in roots.iter_mut().enumerate() {
                                *root += C64::new(0.0, 1e-4 * (a as f64 + 1.0));
                            }
                            step = remaining.min(cur_g.abs());
                        } else {
                            let res = residual_of(&equations(&p.epsilon, cur_g, &roots));
                            return Err(Error::NonConvergence {
                                residual: res,
                                g_reached: cur_g,
                            });
                        }
                    }
                }
            }
        }
    }
    let residual = residual_of(&equations(&p.epsilon, target_g, &roots));
    let gap = min_root_gap(&roots);
    if p.m > 1 && gap < MIN_GAP {
        return Err(Error::RootCollision(gap));
    }
    Ok(BetheRoots { roots, residual, trace })
}

/// Bethe product state `Π_a (Σ_i S_i^+/(ε_i − E_a)) |↓…↓⟩`, returned raw and
/// normalized.
#[derive(Debug, Clone)]
pub struct BetheState {
    pub raw: CVec,
    pub normalized: CVec,
}

pub fn bethe_state(sys: &SpinSystem, epsilon: &[f64], roots: &[C64]) -> Result<BetheState> {
    let n = sys.site_count();
    if epsilon.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "epsilon has {} entries, system has {n} sites",
            epsilon.len()
        )));
    }
    for (i, &e) in epsilon.iter().enumerate() {
        for r in roots {
            if (C64::new(e, 0.0) - r).norm() < 1e-12 {
                return Err(Error::RootAtEpsilon(i));
            }
        }
    }
    let dim = sys.hilbert_dim();
    // All-down product state: every bit set (|1⟩ = spin-down).
    let mut state: CVec = Array1::zeros(dim);
    state[dim - 1] = C64::new(1.0, 0.0);
    if !roots.is_empty() {
        let raising: Vec<CMat> = (1..=n)
            .map(|i| spin_ops(sys, i).map(|(_, _, _, sp, _)| sp))
            .collect::<Result<_>>()?;
        for r in roots {
            let mut op_applied: CVec = Array1::zeros(dim);
            for (i, sp) in raising.iter().enumerate() {
                let w = 1.0 / (C64::new(epsilon[i], 0.0) - r);
                op_applied = op_applied + sp.dot(&state).mapv(|v| v * w);
            }
            state = op_applied;
        }
    }
    let norm = state.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-300 {
        return Err(Error::VanishingNorm(norm));
    }
    let normalized = state.mapv(|v| v / norm);
    Ok(BetheState { raw: state, normalized })
}

/// The validation Hamiltonian `H_R = Σ_i 2ε_i S_i^z + g Σ_{i,j} S_i^+ S_j^−`.
pub fn pairing_hamiltonian(sys: &SpinSystem, epsilon: &[f64], g: f64) -> Result<CMat> {
    let n = sys.site_count();
    if epsilon.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "epsilon has {} entries, system has {n} sites",
            epsilon.len()
        )));
    }
    let dim = sys.hilbert_dim();
    let mut h: CMat = Array2::zeros((dim, dim));
    let mut sp_total: CMat = Array2::zeros((dim, dim));
    let mut sm_total: CMat = Array2::zeros((dim, dim));
    for i in 1..=n {
        let (_, _, sz, sp, sm) = spin_ops(sys, i)?;
        h = h + sz.mapv(|v| v * (2.0 * epsilon[i - 1]));
        sp_total = sp_total + sp;
        sm_total = sm_total + sm;
    }
    h = h + sp_total.dot(&sm_total).mapv(|v| v * g);
    Ok(h)
}

/// Rayleigh quotient, eigen-equation residual, and best overlap with the
/// exact eigenvectors of `H_R`.
#[derive(Debug, Clone)]
pub struct EigenstateCheck {
    pub rayleigh: C64,
    pub residual: f64,
    pub best_overlap: f64,
}

pub fn verify_eigenstate(h_r: &CMat, state: &CVec) -> Result<EigenstateCheck> {
    let dim = state.len();
    if h_r.dim() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "H_R is {:?}, state has length {dim}",
            h_r.dim()
        )));
    }
    let norm2: f64 = state.iter().map(|v| v.norm_sqr()).sum();
    if norm2 < 1e-24 {
        return Err(Error::VanishingNorm(norm2.sqrt()));
    }
    let hs = h_r.dot(state);
    let rayleigh: C64 =
        state.iter().zip(hs.iter()).map(|(a, b)| a.conj() * b).sum::<C64>() / norm2;
    let res_vec = &hs - &state.mapv(|v| v * rayleigh);
    let residual = res_vec.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() / norm2.sqrt();
    let dec = eig_general(h_r, 1e-10)?;
    let mut best = 0.0f64;
    for nvec in 0..dim {
        let v = dec.right_vector(nvec);
        let vnorm2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        let ov: C64 = v.iter().zip(state.iter()).map(|(a, b)| a.conj() * b).sum();
        best = best.max(ov.norm() / (vnorm2.sqrt() * norm2.sqrt()));
    }
    Ok(EigenstateCheck { rayleigh, residual, best_overlap: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_two_level_single_pair() {
        let p = RichardsonProblem::new(vec![0.0, 1.0], 1).unwrap();
        let g = -0.2;
        let sol = solve_richardson(&p, g).unwrap();
        assert!(sol.residual <= 1e-10);
        // quadratic closed form: 10E² − 8E − 1 = 0 for g = −0.2 → lower root
        let expect = (8.0 - 104.0f64.sqrt()) / 20.0;
        assert_abs_diff_eq!(sol.roots[0].re, expect, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.roots[0].re, -0.10990195, epsilon = 1e-7);
        assert!(sol.roots[0].im.abs() < 1e-10);
    }

    #[test]
    fn weak_coupling_limit() {
        let p = RichardsonProblem::new(vec![0.1, 0.3, 0.5, 0.7], 2).unwrap();
        let g = 1e-4;
        let sol = solve_richardson(&p, g).unwrap();
        for (a, r) in sol.roots.iter().enumerate() {
            assert!((r - C64::new(p.epsilon[a], 0.0)).norm() < 10.0 * g.abs());
        }
    }

    #[test]
    fn reference_roots_n4() {
        let eps = vec![0.1, 0.3, 0.5, 0.7];
        let p1 = RichardsonProblem::new(eps.clone(), 1).unwrap();
        let s1 = solve_richardson(&p1, -0.2).unwrap();
        assert!(s1.residual <= 1e-10);
        assert_abs_diff_eq!(s1.roots[0].re, -0.11229977, epsilon = 1e-7);
        let p2 = RichardsonProblem::new(eps, 2).unwrap();
        let s2 = solve_richardson(&p2, -0.2).unwrap();
        assert!(s2.residual <= 1e-10);
        let mut re: Vec<f64> = s2.roots.iter().map(|r| r.re).collect();
        re.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(re[0], -0.0236068, epsilon = 1e-6);
        assert_abs_diff_eq!(re[1], 0.4236068, epsilon = 1e-6);
    }

    #[test]
    fn roots_conjugation_closed_and_deterministic() {
        let p = RichardsonProblem::new(vec![0.1, 0.3, 0.5, 0.7], 2).unwrap();
        let a = solve_richardson(&p, -0.8).unwrap();
        let b = solve_richardson(&p, -0.8).unwrap();
        for (x, y) in a.roots.iter().zip(&b.roots) {
            assert_eq!(x, y); // bitwise determinism
        }
        // multiset closed under conjugation
        for r in &a.roots {
            let conj = r.conj();
            let found = a.roots.iter().any(|s| (s - conj).norm() < 1e-8);
            assert!(found, "conjugate of {r} missing from {:?}", a.roots);
        }
    }

    #[test]
    fn epsilon_permutation_invariance() {
        let g = -0.3;
        let a = solve_richardson(
            &RichardsonProblem::new(vec![0.1, 0.3, 0.5], 3).unwrap(),
            g,
        )
        .unwrap();
        let b = solve_richardson(
            &RichardsonProblem::new(vec![0.5, 0.1, 0.3], 3).unwrap(),
            g,
        )
        .unwrap();
        for r in &a.roots {
            assert!(b.roots.iter().any(|s| (s - r).norm() < 1e-8));
        }
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            RichardsonProblem::new(vec![0.1, 0.1], 1),
            Err(Error::EpsilonNotDistinct)
        ));
        assert!(matches!(
            RichardsonProblem::new(vec![0.1, 0.3], 3),
            Err(Error::InvalidPairCount { m: 3, n: 2 })
        ));
        let p = RichardsonProblem::new(vec![0.1, 0.3], 1).unwrap();
        assert!(matches!(solve_richardson(&p, 0.0), Err(Error::ZeroCoupling)));
    }

    #[test]
    fn bethe_state_shapes() {
        let sys = SpinSystem::new(3).unwrap();
        let eps = [0.1, 0.3, 0.5];
        // M = 0 → all-down state (last basis index under the bit convention)
        let s = bethe_state(&sys, &eps, &[]).unwrap();
        assert_abs_diff_eq!(s.normalized[7].re, 1.0, epsilon = 1e-15);
        // M = 1: amplitudes ∝ 1/(ε_i − E) on single-flip states
        let e = C64::new(-0.2, 0.0);
        let s = bethe_state(&sys, &eps, &[e]).unwrap();
        // single-flip states: site i up, others down → index has bit i clear.
        // site 1 up: 011 = 3; site 2 up: 101 = 5; site 3 up: 110 = 6.
        let amp = |i: usize| 1.0 / (C64::new(eps[i], 0.0) - e);
        let expect = [(3usize, amp(0)), (5, amp(1)), (6, amp(2))];
        for (idx, a) in expect {
            let ratio = s.raw[idx] / a;
            assert!((ratio - s.raw[3] / amp(0)).norm() < 1e-12);
        }
        for idx in [0usize, 1, 2, 4, 7] {
            assert!(s.raw[idx].norm() < 1e-15);
        }
        // root at epsilon rejected
        assert!(matches!(
            bethe_state(&sys, &eps, &[C64::new(0.3, 0.0)]),
            Err(Error::RootAtEpsilon(1))
        ));
    }

    #[test]
    fn all_down_state_is_exact_eigenstate() {
        let sys = SpinSystem::new(3).unwrap();
        let eps = [0.1, 0.3, 0.5];
        let h = pairing_hamiltonian(&sys, &eps, -0.4).unwrap();
        let s = bethe_state(&sys, &eps, &[]).unwrap();
        let chk = verify_eigenstate(&h, &s.normalized).unwrap();
        assert!(chk.residual < 1e-12);
        // E = −Σ ε_i  (2ε·(−½) per site) plus no pairing contribution
        assert_abs_diff_eq!(chk.rayleigh.re, -(0.1 + 0.3 + 0.5), epsilon = 1e-12);
    }

    #[test]
    fn solved_roots_give_exact_eigenstates() {
        let sys = SpinSystem::new(4).unwrap();
        let eps = [0.1, 0.3, 0.5, 0.7];
        let g = -0.2;
        let h = pairing_hamiltonian(&sys, &eps, g).unwrap();
        for m in [1usize, 2] {
            let p = RichardsonProblem::new(eps.to_vec(), m).unwrap();
            let sol = solve_richardson(&p, g).unwrap();
            let st = bethe_state(&sys, &eps, &sol.roots).unwrap();
            let chk = verify_eigenstate(&h, &st.normalized).unwrap();
            assert!(chk.best_overlap > 1.0 - 1e-8, "M={m}: overlap {}", chk.best_overlap);
            assert!(chk.residual < 1e-7, "M={m}: residual {:.3e}", chk.residual);
        }
    }

    #[test]
    fn full_filling_eigenstate() {
        let sys = SpinSystem::new(3).unwrap();
        let eps = [0.1, 0.3, 0.5];
        let g = -0.3;
        let p = RichardsonProblem::new(eps.to_vec(), 3).unwrap();
        let sol = solve_richardson(&p, g).unwrap();
        let h = pairing_hamiltonian(&sys, &eps, g).unwrap();
        let st = bethe_state(&sys, &eps, &sol.roots).unwrap();
        let chk = verify_eigenstate(&h, &st.normalized).unwrap();
        assert!(chk.best_overlap > 1.0 - 1e-8);
    }

    #[test]
    fn random_state_negative_control() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let sys = SpinSystem::new(3).unwrap();
        let eps = [0.1, 0.3, 0.5];
        let h = pairing_hamiltonian(&sys, &eps, -0.4).unwrap();
        let mut v: CVec = Array1::zeros(8);
        for x in v.iter_mut() {
            *x = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let v = v.mapv(|x| x / n);
        let chk = verify_eigenstate(&h, &v).unwrap();
        assert!(chk.residual > 0.05, "random state looked like an eigenstate");
    }
}
