//! Operator kernel: spin-1/2 operators, tensor-product site embedding, and the
//! small matrix-algebra toolbox every other module builds on.
//!
//! Conventions (fixed crate-wide):
//! * basis label `|0⟩` is spin-up (`S^z|0⟩ = +1/2|0⟩`), `|1⟩` is spin-down;
//! * site 1 is the most significant bit of the computational-basis index, so
//!   [`site_operator`] is a left fold of Kronecker products.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense complex matrix on the full Hilbert space.
pub type CMat = Array2<C64>;
/// Complex state vector.
pub type CVec = Array1<C64>;

/// A lattice of `N` spin-1/2 sites; fixes the Hilbert dimension `2^N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpinSystem {
    site_count: usize,
    hilbert_dim: usize,
}

impl SpinSystem {
    /// Create a system of `n` sites. Rejects `n` outside `1..=12` (dense cap).
    pub fn new(n: usize) -> Result<Self> {
        if !(1..=12).contains(&n) {
            return Err(Error::SiteCountOutOfRange(n));
        }
        Ok(SpinSystem { site_count: n, hilbert_dim: 1 << n })
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }
}

/// Pauli axis selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// The standard 2x2 Pauli matrix for `axis` (unitary, Hermitian, traceless).
pub fn pauli(axis: PauliAxis) -> CMat {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match axis {
        PauliAxis::X => ndarray::array![[o, l], [l, o]],
        PauliAxis::Y => ndarray::array![[o, -i], [i, o]],
        PauliAxis::Z => ndarray::array![[l, o], [o, -l]],
    }
}

/// Identity matrix of dimension `dim`.
pub fn identity(dim: usize) -> CMat {
    Array2::from_diag_elem(dim, C64::new(1.0, 0.0))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for ia in 0..ra {
        for ja in 0..ca {
            let av = a[(ia, ja)];
            if av == C64::new(0.0, 0.0) {
                continue;
            }
            for ib in 0..rb {
                for jb in 0..cb {
                    out[(ia * rb + ib, ja * cb + jb)] = av * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Embed a local 2x2 operator at site `i` (1-based): `I ⊗ … ⊗ local ⊗ … ⊗ I`,
/// with site 1 at the most significant bit.
pub fn site_operator(sys: &SpinSystem, i: usize, local: &CMat) -> Result<CMat> {
    if i == 0 || i > sys.site_count() {
        return Err(Error::SiteIndexOutOfRange { index: i, sites: sys.site_count() });
    }
    if local.dim() != (2, 2) {
        return Err(Error::DimensionMismatch(format!(
            "local operator must be 2x2, got {:?}",
            local.dim()
        )));
    }
    let mut out = identity(1);
    for site in 1..=sys.site_count() {
        let factor = if site == i { local.clone() } else { identity(2) };
        out = kron(&out, &factor);
    }
    Ok(out)
}

/// The full set of spin operators at site `i`: `(S^x, S^y, S^z, S^+, S^-)`
/// with `S^α = σ^α/2` and `S^± = S^x ± iS^y`.
pub fn spin_ops(sys: &SpinSystem, i: usize) -> Result<(CMat, CMat, CMat, CMat, CMat)> {
    let half = C64::new(0.5, 0.0);
    let sx = site_operator(sys, i, &pauli(PauliAxis::X))?.mapv(|v| v * half);
    let sy = site_operator(sys, i, &pauli(PauliAxis::Y))?.mapv(|v| v * half);
    let sz = site_operator(sys, i, &pauli(PauliAxis::Z))?.mapv(|v| v * half);
    let iu = C64::new(0.0, 1.0);
    let sp = &sx + &sy.mapv(|v| v * iu);
    let sm = &sx - &sy.mapv(|v| v * iu);
    Ok((sx, sy, sz, sp, sm))
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|v| v.conj())
}

/// `AB - BA`.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

/// `AB + BA`.
pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) + b.dot(a)
}

/// Frobenius norm.
pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Entrywise complex conjugation (no transpose).
pub fn conjugate_entrywise(a: &CMat) -> CMat {
    a.mapv(|v| v.conj())
}

/// Matrix trace.
pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

/// Relative Hermiticity defect `‖A − A†‖_F / max(1, ‖A‖_F)`.
pub fn hermiticity_residual(a: &CMat) -> f64 {
    frobenius_norm(&(a - &dagger(a))) / frobenius_norm(a).max(1.0)
}

/// Exponential of a diagonal matrix. Rejects matrices with off-diagonal weight
/// above `1e-12` of the entry scale.
pub fn matrix_exponential_diagonal(d: &CMat) -> Result<CMat> {
    let (r, c) = d.dim();
    if r != c {
        return Err(Error::DimensionMismatch(format!("matrix is {r}x{c}, not square")));
    }
    let mut max_off = 0.0f64;
    for i in 0..r {
        for j in 0..c {
            if i != j {
                max_off = max_off.max(d[(i, j)].norm());
            }
        }
    }
    if max_off > 1e-12 {
        return Err(Error::NotDiagonal(max_off));
    }
    let mut out = Array2::zeros((r, r));
    for i in 0..r {
        out[(i, i)] = d[(i, i)].exp();
    }
    Ok(out)
}

/// `S^z` eigenvalue (+1/2 or −1/2) of site `i` (1-based) in basis state `index`.
pub fn sz_eigenvalue(sys: &SpinSystem, i: usize, index: usize) -> f64 {
    let bit = (index >> (sys.site_count() - i)) & 1;
    if bit == 0 {
        0.5
    } else {
        -0.5
    }
}
