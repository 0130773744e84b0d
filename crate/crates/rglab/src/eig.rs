//! General (non-Hermitian) complex eigendecomposition with biorthonormalized
//! left/right eigenvector pairs, plus PT spectrum classification.
//!
//! Right vectors `|φ_n⟩` solve `A|φ_n⟩ = E_n|φ_n⟩`; left vectors `|ψ_n⟩` are
//! right eigenvectors of `A†` matched by conjugate eigenvalue and rescaled so
//! that `⟨ψ_n|φ_m⟩ = δ_nm`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Inverse};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qops::{dagger, frobenius_norm, identity, CMat, CVec};

/// Eigenvalues with paired, biorthonormalized left/right eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Eigenvalues `E_n`.
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors as matrix columns (`|φ_n⟩` in column `n`).
    pub right: CMat,
    /// Left eigenvectors as matrix columns (`|ψ_n⟩` in column `n`),
    /// normalized so `ψ_n† φ_m = δ_nm`.
    pub left: CMat,
    /// `max |left† · right − I|` after normalization.
    pub biorth_residual: f64,
    /// Per-eigenpair near-defective flags (ambiguous conjugate matching or
    /// ill-conditioned normalization).
    pub condition_flags: Vec<bool>,
}

impl SpectralDecomposition {
    /// `⟨ψ_n|` applied to a vector: `ψ_n† x`.
    pub fn left_project(&self, n: usize, x: &CVec) -> C64 {
        self.left.column(n).iter().zip(x.iter()).map(|(l, v)| l.conj() * v).sum()
    }

    /// Column `n` of the right eigenvector matrix.
    pub fn right_vector(&self, n: usize) -> CVec {
        self.right.column(n).to_owned()
    }
}

/// Per-eigenvalue PT tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PTTag {
    Real,
    /// Partner index of the complex-conjugate eigenvalue.
    ConjugatePair(usize),
    UnpairedComplex,
}

/// PT classification of a full spectrum.
#[derive(Debug, Clone)]
pub struct PTClassification {
    pub tags: Vec<PTTag>,
    pub tol: f64,
}

impl PTClassification {
    pub fn count(&self, want: fn(&PTTag) -> bool) -> usize {
        self.tags.iter().filter(|t| want(t)).count()
    }

    pub fn n_real(&self) -> usize {
        self.count(|t| matches!(t, PTTag::Real))
    }

    pub fn n_paired(&self) -> usize {
        self.count(|t| matches!(t, PTTag::ConjugatePair(_)))
    }

    pub fn n_unpaired(&self) -> usize {
        self.count(|t| matches!(t, PTTag::UnpairedComplex))
    }
}

fn eig_columns(a: &CMat) -> Result<(Array1<C64>, Array2<C64>)> {
    a.eig().map_err(|e| Error::Lapack(e.to_string()))
}

/// Greedy conjugate matching of `A†` eigenpairs to `A` eigenpairs.
/// Returns (permutation, max matching distance).
fn match_conjugates(evals: &[C64], adj_evals: &[C64]) -> (Vec<usize>, f64) {
    let d = evals.len();
    let mut used = vec![false; d];
    let mut perm = vec![0usize; d];
    let mut worst = 0.0f64;
    for (n, e) in evals.iter().enumerate() {
        let mut best = usize::MAX;
        let mut best_dist = f64::INFINITY;
        for (m, mu) in adj_evals.iter().enumerate() {
            if used[m] {
                continue;
            }
            let dist = (mu.conj() - e).norm();
            if dist < best_dist {
                best_dist = dist;
                best = m;
            }
        }
        used[best] = true;
        perm[n] = best;
        worst = worst.max(best_dist / e.norm().max(1.0));
    }
    (perm, worst)
}

/// Group eigenvalue indices into clusters of near-degenerate values.
fn degeneracy_clusters(evals: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let d = evals.len();
    let mut assigned = vec![false; d];
    let mut clusters = Vec::new();
    for n in 0..d {
        if assigned[n] {
            continue;
        }
        let mut cluster = vec![n];
        assigned[n] = true;
        for m in (n + 1)..d {
            if assigned[m] {
                continue;
            }
            let near = cluster.iter().any(|&k| {
                (evals[k] - evals[m]).norm() <= tol * evals[k].norm().max(1.0)
            });
            if near {
                cluster.push(m);
                assigned[m] = true;
            }
        }
        clusters.push(cluster);
    }
    clusters
}

fn biorth_residual(left: &CMat, right: &CMat) -> f64 {
    let gram = dagger(left).dot(right);
    let d = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            let dev = (gram[(i, j)] - target).norm();
            if !dev.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(dev);
        }
    }
    worst
}

/// Fallback: left vectors from the inverse of the right-eigenvector matrix,
/// `W = (V⁻¹)†`, exact biorthonormality when `V` is well-conditioned.
fn left_from_inverse(right: &CMat) -> Result<CMat> {
    let vinv = right.inv().map_err(|e| Error::Lapack(e.to_string()))?;
    let cond = frobenius_norm(right) * frobenius_norm(&vinv);
    if cond > 1e8 {
        return Err(Error::NearDefective(format!(
            "right eigenvector matrix condition estimate {cond:.3e} exceeds 1e8"
        )));
    }
    Ok(dagger(&vinv))
}

/// Full biorthogonal eigendecomposition of a general complex matrix.
///
/// `tol` controls conjugate-matching ambiguity, degeneracy clustering, and the
/// acceptable biorthogonality residual (typical value: `1e-8`).
pub fn eig_general(a: &CMat, tol: f64) -> Result<SpectralDecomposition> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::DimensionMismatch(format!("matrix is {r}x{c}, not square")));
    }
    let (evals, right) = eig_columns(a)?;
    let evals: Vec<C64> = evals.to_vec();
    let (adj_evals, adj_vecs) = eig_columns(&dagger(a))?;
    let adj_evals: Vec<C64> = adj_evals.to_vec();

    let (perm, match_dist) = match_conjugates(&evals, &adj_evals);
    let mut left = Array2::zeros((r, r));
    for (n, &m) in perm.iter().enumerate() {
        left.column_mut(n).assign(&adj_vecs.column(m));
    }
    let mut flags = vec![match_dist > tol.max(1e-10) * 100.0; r];

    // Biorthonormalize: exact cluster-block solves for (near-)degenerate groups,
    // plain rescale ⟨ψ_n|φ_n⟩ → 1 otherwise.
    let clusters = degeneracy_clusters(&evals, tol.max(1e-10));
    let mut normalization_failed = false;
    for cluster in &clusters {
        if cluster.len() == 1 {
            let n = cluster[0];
            let g: C64 = left
                .column(n)
                .iter()
                .zip(right.column(n).iter())
                .map(|(l, v)| l.conj() * v)
                .sum();
            if g.norm() < 1e-12 {
                normalization_failed = true;
                flags[n] = true;
                continue;
            }
            let scale = C64::new(1.0, 0.0) / g.conj();
            left.column_mut(n).mapv_inplace(|v| v * scale);
        } else {
            // Solve the k×k Gram system so that W_c† V_c = I inside the cluster.
            let k = cluster.len();
            let mut gram = Array2::zeros((k, k));
            for (a_idx, &n) in cluster.iter().enumerate() {
                for (b_idx, &m) in cluster.iter().enumerate() {
                    gram[(a_idx, b_idx)] = left
                        .column(n)
                        .iter()
                        .zip(right.column(m).iter())
                        .map(|(l, v)| l.conj() * v)
                        .sum();
                }
            }
            match gram.inv() {
                Ok(ginv) if frobenius_norm(&ginv) > 1e8 => {
                    // Gram block is effectively singular: the cluster is
                    // near-defective and the rotation would produce
                    // astronomically large left vectors.
                    normalization_failed = true;
                    for &m in cluster {
                        flags[m] = true;
                    }
                }
                Ok(ginv) => {
                    // W_new = W_c · (G⁻¹)† gives W_new† V_c = G⁻¹ G = I.
                    let ginv_dag = dagger(&ginv);
                    let mut block = Array2::zeros((r, k));
                    for (b_idx, &m) in cluster.iter().enumerate() {
                        block.column_mut(b_idx).assign(&left.column(m));
                    }
                    let rotated = block.dot(&ginv_dag);
                    for (b_idx, &m) in cluster.iter().enumerate() {
                        left.column_mut(m).assign(&rotated.column(b_idx));
                    }
                }
                Err(_) => {
                    normalization_failed = true;
                    for &m in cluster {
                        flags[m] = true;
                    }
                }
            }
        }
    }

    let mut residual = if normalization_failed { f64::INFINITY } else { biorth_residual(&left, &right) };

    if residual > tol.max(1e-8) * 10.0 {
        // Conjugate matching or cluster solve was not good enough; fall back to
        // the inverse route if the right-vector matrix allows it.
        match left_from_inverse(&right) {
            Ok(w) => {
                left = w;
                flags.iter_mut().for_each(|f| *f = false);
                residual = biorth_residual(&left, &right);
            }
            Err(e) => return Err(e),
        }
        if !residual.is_finite() || residual > 1e-6 {
            return Err(Error::NearDefective(format!(
                "biorthogonality residual {residual:.3e} after inverse fallback"
            )));
        }
    }

    Ok(SpectralDecomposition {
        eigenvalues: evals,
        right,
        left,
        biorth_residual: residual,
        condition_flags: flags,
    })
}

/// Tag each eigenvalue Real / ConjugatePair / UnpairedComplex.
///
/// An eigenvalue is Real when `|Im E| ≤ tol·max(1, |E|)`; remaining complex
/// values are greedily matched into mutual conjugate pairs with threshold
/// `|E_a − conj(E_b)| ≤ tol·max(1, |E_a|)`.
pub fn classify_spectrum(eigenvalues: &[C64], tol: f64) -> PTClassification {
    let d = eigenvalues.len();
    let mut tags: Vec<Option<PTTag>> = vec![None; d];
    for (n, e) in eigenvalues.iter().enumerate() {
        if e.im.abs() <= tol * e.norm().max(1.0) {
            tags[n] = Some(PTTag::Real);
        }
    }
    for n in 0..d {
        if tags[n].is_some() {
            continue;
        }
        let e = eigenvalues[n];
        let mut best = usize::MAX;
        let mut best_dist = f64::INFINITY;
        for (m, f) in eigenvalues.iter().enumerate() {
            if m == n || tags[m].is_some() {
                continue;
            }
            let dist = (e - f.conj()).norm();
            if dist < best_dist {
                best_dist = dist;
                best = m;
            }
        }
        if best != usize::MAX && best_dist <= tol * e.norm().max(1.0) {
            tags[n] = Some(PTTag::ConjugatePair(best));
            tags[best] = Some(PTTag::ConjugatePair(n));
        } else {
            tags[n] = Some(PTTag::UnpairedComplex);
        }
    }
    PTClassification { tags: tags.into_iter().map(|t| t.unwrap()).collect(), tol }
}

/// Reconstruction residual `‖A − Σ E_n φ_n ψ_n†‖_F / ‖A‖_F`.
pub fn reconstruction_residual(a: &CMat, dec: &SpectralDecomposition) -> f64 {
    let d = a.nrows();
    let mut sum: CMat = Array2::zeros((d, d));
    for n in 0..d {
        let v = dec.right.column(n);
        let w = dec.left.column(n);
        for i in 0..d {
            for j in 0..d {
                sum[(i, j)] += dec.eigenvalues[n] * v[i] * w[j].conj();
            }
        }
    }
    frobenius_norm(&(a - &sum)) / frobenius_norm(a).max(1e-300)
}

/// `max |W†V − I|` for an external check of the resolution of identity.
pub fn identity_resolution_residual(dec: &SpectralDecomposition) -> f64 {
    let d = dec.right.nrows();
    let mut sum: CMat = Array2::zeros((d, d));
    for n in 0..d {
        let v = dec.right.column(n);
        let w = dec.left.column(n);
        for i in 0..d {
            for j in 0..d {
                sum[(i, j)] += v[i] * w[j].conj();
            }
        }
    }
    frobenius_norm(&(sum - identity(d)))
}
