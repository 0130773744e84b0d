//! Time evolution: closed-system Schrödinger dynamics under a possibly
//! non-Hermitian Hamiltonian (standard or CP-weighted expectations) and
//! open-system Lindblad dynamics with lowering jump operators, plus the
//! steady-state window metric.

use num_complex::Complex64 as C64;

use crate::eig::eig_general;
use crate::error::{Error, Result};
use crate::ptsym::{expectation_cp, PTOperators};
use crate::qops::{dagger, hermiticity_residual, spin_ops, CMat, CVec, SpinSystem};

/// Which expectation/propagation rule a trajectory was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolutionMode {
    ClosedStandard,
    ClosedCPWeighted,
    Lindblad,
}

impl EvolutionMode {
    pub fn label(&self) -> &'static str {
        match self {
            EvolutionMode::ClosedStandard => "closed_standard",
            EvolutionMode::ClosedCPWeighted => "closed_cp",
            EvolutionMode::Lindblad => "lindblad",
        }
    }
}

/// Propagation method selection for closed evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMethod {
    /// Spectral when the decomposition is well-conditioned, else RK4.
    Auto,
    Spectral,
    RK4,
}

/// Per-site expectation traces over a time grid (ħ = 1 throughout; times are
/// in inverse energy units).
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `sx[t_index][site_index]`, similarly `sy`, `sz`.
    pub sx: Vec<Vec<f64>>,
    pub sy: Vec<Vec<f64>>,
    pub sz: Vec<Vec<f64>>,
    /// State norm (closed) or density-matrix trace (Lindblad) per sample.
    pub norm_or_trace: Vec<f64>,
    pub mode: EvolutionMode,
    /// Set when the underlying spectrum contains complex eigenvalues
    /// (CP weighting then rests on the lenient sign rule).
    pub broken_pt: bool,
    /// Largest imaginary part discarded when realifying expectations.
    pub max_imag: f64,
}

/// Lindblad dissipator specification: jump operators `L_k = √γ σ_k^−` on the
/// listed (1-based) sites.
#[derive(Debug, Clone)]
pub struct LindbladSpec {
    pub gamma: f64,
    pub jump_sites: Vec<usize>,
}

fn system_for_dim(dim: usize) -> Result<SpinSystem> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {dim} is not a power of two"
        )));
    }
    SpinSystem::new(dim.trailing_zeros() as usize)
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Config("empty time grid".into()));
    }
    if t_grid[0] < 0.0 {
        return Err(Error::Config("time grid must start at t >= 0".into()));
    }
    for w in t_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config("time grid must be strictly increasing".into()));
        }
    }
    Ok(())
}

fn site_spin_matrices(sys: &SpinSystem) -> Result<Vec<[CMat; 3]>> {
    (1..=sys.site_count())
        .map(|i| {
            let (sx, sy, sz, _, _) = spin_ops(sys, i)?;
            Ok([sx, sy, sz])
        })
        .collect()
}

fn vdot(a: &CVec, b: &CVec) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

const DEFAULT_DT: f64 = 1e-3;

/// Closed-system evolution `i d|ψ⟩/dt = H|ψ⟩` sampled on `t_grid`.
///
/// The propagator is spectral (`ψ(t) = Σ_n e^{−iE_n t}|φ_n⟩⟨ψ_n|ψ0⟩`) when the
/// eigendecomposition is well-conditioned, with an RK4 fallback otherwise.
/// `mode = ClosedCPWeighted` requires `pt` (C and P operators); broken-phase
/// spectra are allowed but flagged on the record.
pub fn evolve_closed(
    h: &CMat,
    psi0: &CVec,
    t_grid: &[f64],
    mode: EvolutionMode,
    pt: Option<&PTOperators>,
) -> Result<TrajectoryRecord> {
    evolve_closed_with(h, psi0, t_grid, mode, pt, PropagationMethod::Auto, DEFAULT_DT)
}

/// [`evolve_closed`] with explicit method and RK4 step (used by tests and the
/// cross-method convergence checks).
pub fn evolve_closed_with(
    h: &CMat,
    psi0: &CVec,
    t_grid: &[f64],
    mode: EvolutionMode,
    pt: Option<&PTOperators>,
    method: PropagationMethod,
    dt: f64,
) -> Result<TrajectoryRecord> {
    let dim = psi0.len();
    if h.dim() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "H is {:?}, psi0 has length {dim}",
            h.dim()
        )));
    }
    if mode == EvolutionMode::Lindblad {
        return Err(Error::Config(
            "Lindblad mode requires evolve_lindblad".into(),
        ));
    }
    if mode == EvolutionMode::ClosedCPWeighted && pt.is_none() {
        return Err(Error::Config(
            "CP-weighted mode requires PT operators (C and P)".into(),
        ));
    }
    check_grid(t_grid)?;
    let sys = system_for_dim(dim)?;
    let spins = site_spin_matrices(&sys)?;

    // Decide the propagation path and the broken-phase flag.
    let decomp = eig_general(h, 1e-8);
    let (spectral, broken_pt) = match &decomp {
        Ok(d) => {
            let cls = crate::eig::classify_spectrum(&d.eigenvalues, 1e-8);
            let broken = cls.n_real() != d.eigenvalues.len();
            let ok = d.biorth_residual < 1e-6;
            (ok, broken)
        }
        Err(_) => (false, false),
    };
    let use_spectral = match method {
        PropagationMethod::Auto => spectral,
        PropagationMethod::Spectral => {
            if !spectral {
                return Err(Error::NearDefective(
                    "spectral propagation requested but decomposition ill-conditioned".into(),
                ));
            }
            true
        }
        PropagationMethod::RK4 => false,
    };

    let mut states: Vec<CVec> = Vec::with_capacity(t_grid.len());
    if use_spectral {
        let d = decomp.as_ref().expect("checked above");
        let coeffs: Vec<C64> = (0..dim).map(|n| d.left_project(n, psi0)).collect();
        for &t in t_grid {
            let mut psi: CVec = CVec::zeros(dim);
            for n in 0..dim {
                let phase = (-C64::i() * d.eigenvalues[n] * t).exp();
                let w = coeffs[n] * phase;
                for r in 0..dim {
                    psi[r] += w * d.right[(r, n)];
                }
            }
            states.push(psi);
        }
    } else {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("invalid RK4 step {dt}")));
        }
        let rhs = |psi: &CVec| -> CVec { h.dot(psi).mapv(|v| -C64::i() * v) };
        let mut psi = psi0.clone();
        let mut t = 0.0;
        for &target in t_grid {
            while t < target - 1e-15 {
                let step = dt.min(target - t);
                let k1 = rhs(&psi);
                let k2 = rhs(&(&psi + &k1.mapv(|v| v * (step / 2.0))));
                let k3 = rhs(&(&psi + &k2.mapv(|v| v * (step / 2.0))));
                let k4 = rhs(&(&psi + &k3.mapv(|v| v * step)));
                psi = &psi
                    + &(k1 + k2.mapv(|v| v * 2.0) + k3.mapv(|v| v * 2.0) + k4)
                        .mapv(|v| v * (step / 6.0));
                t += step;
            }
            states.push(psi.clone());
        }
    }

    // Expectations.
    let n_sites = sys.site_count();
    let mut sx = Vec::with_capacity(states.len());
    let mut sy = Vec::with_capacity(states.len());
    let mut sz = Vec::with_capacity(states.len());
    let mut norms = Vec::with_capacity(states.len());
    let mut max_imag = 0.0f64;
    for psi in &states {
        let mut rx = Vec::with_capacity(n_sites);
        let mut ry = Vec::with_capacity(n_sites);
        let mut rz = Vec::with_capacity(n_sites);
        match mode {
            EvolutionMode::ClosedStandard => {
                let nrm2 = vdot(psi, psi).re;
                if nrm2 < 1e-24 {
                    return Err(Error::VanishingNorm(nrm2.sqrt()));
                }
                for site in &spins {
                    for (axis, out) in [&mut rx, &mut ry, &mut rz].into_iter().enumerate() {
                        let v = vdot(psi, &site[axis].dot(psi)) / nrm2;
                        max_imag = max_imag.max(v.im.abs());
                        out.push(v.re);
                    }
                }
                norms.push(nrm2.sqrt());
            }
            EvolutionMode::ClosedCPWeighted => {
                let ops = pt.expect("checked above");
                for site in &spins {
                    for (axis, out) in [&mut rx, &mut ry, &mut rz].into_iter().enumerate() {
                        let v = expectation_cp(&site[axis], psi, &ops.c, &ops.p)?;
                        max_imag = max_imag.max(v.im.abs());
                        out.push(v.re);
                    }
                }
                let cp_norm = vdot(psi, &ops.c.dot(&ops.p).dot(psi)).norm();
                norms.push(cp_norm);
            }
            EvolutionMode::Lindblad => unreachable!(),
        }
        sx.push(rx);
        sy.push(ry);
        sz.push(rz);
    }
    Ok(TrajectoryRecord {
        times: t_grid.to_vec(),
        sx,
        sy,
        sz,
        norm_or_trace: norms,
        mode,
        broken_pt,
        max_imag,
    })
}

/// Lindblad master-equation evolution
/// `dρ/dt = −i[H,ρ] + Σ_k (L_kρL_k† − ½{L_k†L_k, ρ})`, RK4 with automatic
/// step halving when positivity degrades.
///
/// `H` must be Hermitian within 1e−10 relative residual; trace and
/// Hermiticity are checked within 1e−8 and the minimal eigenvalue must stay
/// above −1e−8 at every sample.
pub fn evolve_lindblad(
    h: &CMat,
    rho0: &CMat,
    spec: &LindbladSpec,
    t_grid: &[f64],
) -> Result<TrajectoryRecord> {
    evolve_lindblad_with(h, rho0, spec, t_grid, DEFAULT_DT)
}

/// [`evolve_lindblad`] with an explicit initial RK4 step.
pub fn evolve_lindblad_with(
    h: &CMat,
    rho0: &CMat,
    spec: &LindbladSpec,
    t_grid: &[f64],
    dt0: f64,
) -> Result<TrajectoryRecord> {
    let dim = rho0.nrows();
    if rho0.dim() != (dim, dim) || h.dim() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "H is {:?}, rho0 is {:?}",
            h.dim(),
            rho0.dim()
        )));
    }
    let herm = hermiticity_residual(h);
    if herm > 1e-10 {
        return Err(Error::NonHermitianHamiltonian(herm));
    }
    if spec.gamma < 0.0 {
        return Err(Error::NegativeGamma(spec.gamma));
    }
    check_grid(t_grid)?;
    let sys = system_for_dim(dim)?;
    let n_sites = sys.site_count();
    for &s in &spec.jump_sites {
        if s == 0 || s > n_sites {
            return Err(Error::SiteIndexOutOfRange { index: s, sites: n_sites });
        }
    }
    let spins = site_spin_matrices(&sys)?;
    let sqrt_gamma = spec.gamma.sqrt();
    let jumps: Vec<CMat> = spec
        .jump_sites
        .iter()
        .map(|&s| {
            let (_, _, _, _, sm) = spin_ops(&sys, s)?;
            Ok(sm.mapv(|v| v * sqrt_gamma))
        })
        .collect::<Result<_>>()?;
    let jump_dags: Vec<CMat> = jumps.iter().map(dagger).collect();
    let ldl: Vec<CMat> = jump_dags.iter().zip(&jumps).map(|(ld, l)| ld.dot(l)).collect();

    let rhs = |rho: &CMat| -> CMat {
        let mut d = (h.dot(rho) - rho.dot(h)).mapv(|v| -C64::i() * v);
        for (k, l) in jumps.iter().enumerate() {
            let gain = l.dot(rho).dot(&jump_dags[k]);
            let loss = ldl[k].dot(rho) + rho.dot(&ldl[k]);
            d = d + gain - loss.mapv(|v| v * 0.5);
        }
        d
    };

    let mut dt = dt0;
    'retry: for attempt in 0..6 {
        let mut rho = rho0.clone();
        let mut t = 0.0;
        let mut sx = Vec::with_capacity(t_grid.len());
        let mut sy = Vec::with_capacity(t_grid.len());
        let mut sz = Vec::with_capacity(t_grid.len());
        let mut traces = Vec::with_capacity(t_grid.len());
        let mut max_imag = 0.0f64;
        let mut worst_min_eig = f64::INFINITY;
        for &target in t_grid {
            while t < target - 1e-15 {
                let step = dt.min(target - t);
                let k1 = rhs(&rho);
                let k2 = rhs(&(&rho + &k1.mapv(|v| v * (step / 2.0))));
                let k3 = rhs(&(&rho + &k2.mapv(|v| v * (step / 2.0))));
                let k4 = rhs(&(&rho + &k3.mapv(|v| v * step)));
                rho = &rho
                    + &(k1 + k2.mapv(|v| v * 2.0) + k3.mapv(|v| v * 2.0) + k4)
                        .mapv(|v| v * (step / 6.0));
                t += step;
            }
            // Sample-time sanity: trace, Hermiticity, positivity.
            let tr = crate::qops::trace(&rho);
            let tr0 = crate::qops::trace(rho0).re;
            if (tr.re - tr0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
                if attempt < 5 {
                    dt /= 2.0;
                    continue 'retry;
                }
                return Err(Error::PositivityLost(tr.re - tr0));
            }
            if hermiticity_residual(&rho) > 1e-8 {
                if attempt < 5 {
                    dt /= 2.0;
                    continue 'retry;
                }
                return Err(Error::PositivityLost(f64::NAN));
            }
            let min_eig = {
                use ndarray_linalg::{Eigh, UPLO};
                let sym = rho.mapv(|v| v * 0.5) + dagger(&rho).mapv(|v| v * 0.5);
                match sym.eigh(UPLO::Upper) {
                    Ok((ev, _)) => ev.iter().copied().fold(f64::INFINITY, f64::min),
                    Err(e) => return Err(Error::Lapack(format!("rho eigh failed: {e}"))),
                }
            };
            worst_min_eig = worst_min_eig.min(min_eig);
            if min_eig < -1e-8 {
                if attempt < 5 {
                    dt /= 2.0;
                    continue 'retry;
                }
                return Err(Error::PositivityLost(min_eig));
            }
            let mut rx = Vec::with_capacity(n_sites);
            let mut ry = Vec::with_capacity(n_sites);
            let mut rz = Vec::with_capacity(n_sites);
            for site in &spins {
                for (axis, out) in [&mut rx, &mut ry, &mut rz].into_iter().enumerate() {
                    let v = crate::qops::trace(&site[axis].dot(&rho));
                    max_imag = max_imag.max(v.im.abs());
                    out.push(v.re);
                }
            }
            sx.push(rx);
            sy.push(ry);
            sz.push(rz);
            traces.push(tr.re);
        }
        return Ok(TrajectoryRecord {
            times: t_grid.to_vec(),
            sx,
            sy,
            sz,
            norm_or_trace: traces,
            mode: EvolutionMode::Lindblad,
            broken_pt: false,
            max_imag,
        });
    }
    unreachable!("retry loop returns or errors")
}

/// Per-site `(std deviation, least-squares drift slope)` of `⟨S^z⟩` over the
/// window `[t_a, t_b]` (inclusive). At least 10 samples must fall inside.
pub fn steady_state_metric(tr: &TrajectoryRecord, window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let (a, b) = window;
    let idx: Vec<usize> = tr
        .times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= a - 1e-12 && t <= b + 1e-12)
        .map(|(i, _)| i)
        .collect();
    if idx.len() < 10 {
        return Err(Error::WindowTooSmall(idx.len()));
    }
    let n_sites = tr.sz.first().map(|v| v.len()).unwrap_or(0);
    let m = idx.len() as f64;
    let tbar = idx.iter().map(|&i| tr.times[i]).sum::<f64>() / m;
    let stt: f64 = idx.iter().map(|&i| (tr.times[i] - tbar).powi(2)).sum();
    let mut out = Vec::with_capacity(n_sites);
    for site in 0..n_sites {
        let mean = idx.iter().map(|&i| tr.sz[i][site]).sum::<f64>() / m;
        let var = idx.iter().map(|&i| (tr.sz[i][site] - mean).powi(2)).sum::<f64>() / m;
        let sty: f64 = idx
            .iter()
            .map(|&i| (tr.times[i] - tbar) * (tr.sz[i][site] - mean))
            .sum();
        let slope = if stt > 0.0 { sty / stt } else { 0.0 };
        out.push((var.sqrt(), slope));
    }
    Ok(out)
}
