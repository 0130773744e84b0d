//! End-to-end acceptance suite: twelve numbered criteria, one pass/fail line
//! each. The suite panics at the end if any criterion fails, after printing
//! the status of every criterion (run with `--nocapture` to see the lines on
//! success as well).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use rglab::bethe::{
    bethe_state, pairing_hamiltonian, solve_richardson, verify_eigenstate, RichardsonProblem,
};
use rglab::charges::{build_all, commutation_report, quadratic_coeffs, quadratic_residual};
use rglab::cli::{couplings_export, run_config, RunConfig};
use rglab::dynamics::{
    evolve_closed, evolve_lindblad, steady_state_metric, EvolutionMode, LindbladSpec,
};
use rglab::eig::{classify_spectrum, eig_general};
use rglab::error::Result;
use rglab::model::{
    build_fields_xyz, check_integrability_xyz, reference_xyz_params, ChargeNormalization,
    CouplingSet,
};
use rglab::perturb::{corrections, scaling_validation, split_hamiltonian, InnerProduct};
use rglab::ptsym::{intertwining_residual, metric_rho, parity_op, signature_and_c};
use rglab::qops::{frobenius_norm, identity, spin_ops, CMat, CVec, SpinSystem};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn fig2_set(g: f64, delta_lambda: C64) -> CouplingSet {
    build_fields_xyz(&reference_xyz_params(g, delta_lambda)).unwrap()
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

// --- criterion 1: integrability + commutation on the reference set ---------

fn criterion_1() -> String {
    let sys = SpinSystem::new(4).unwrap();
    let mut worst = 0.0f64;
    for g in [0.1, 1.0] {
        let cs = fig2_set(g, c(0.0, 0.5));
        let report = check_integrability_xyz(&cs);
        assert!(report.max() < 1e-10, "integrability residual {} at g={g}", report.max());
        let set = build_all(&sys, &cs, ChargeNormalization::Spin).unwrap();
        let comm = commutation_report(&set, None);
        assert!(comm < 1e-10, "commutation residual {comm} at g={g}");
        worst = worst.max(report.max()).max(comm);
    }
    format!("integrability and commutation residuals < 1e-10 (worst {worst:.2e})")
}

// --- criterion 2: PT dichotomy of every charge spectrum --------------------

fn criterion_2() -> String {
    let sys = SpinSystem::new(4).unwrap();
    let mut total = 0usize;
    for g in [0.1, 1.0] {
        let cs = fig2_set(g, c(0.0, 0.5));
        let set = build_all(&sys, &cs, ChargeNormalization::Spin).unwrap();
        for q in &set.charges {
            let dec = eig_general(q, 1e-10).unwrap();
            let class = classify_spectrum(&dec.eigenvalues, 1e-8);
            assert_eq!(class.n_unpaired(), 0, "unpaired complex eigenvalues at g={g}");
            total += class.tags.len();
        }
    }
    format!("{total} eigenvalues all tagged real or conjugate-pair, none unpaired")
}

// --- criterion 3: quadratic operator relation ------------------------------

fn criterion_3() -> String {
    let sys = SpinSystem::new(4).unwrap();
    let mut kappa = 0.0;
    for dl in [c(0.0, 0.5), c(0.5, 0.0)] {
        let cs = fig2_set(0.1, dl);
        let set = build_all(&sys, &cs, ChargeNormalization::Pauli).unwrap();
        let qr = quadratic_coeffs(&cs).unwrap();
        assert!(qr.branch_agreement < 1e-8, "branch spread {}", qr.branch_agreement);
        let res = quadratic_residual(&set, &qr).unwrap();
        for (i, r) in res.per_charge.iter().enumerate() {
            assert!(*r < 1e-8, "quadratic residual {r} for charge {}", i + 1);
        }
        kappa = res.kappa;
    }
    format!("quadratic residuals < 1e-8, branches agree, calibrated kappa = {kappa}")
}

// --- criterion 4: metric and C on the PT-exact sector ----------------------

fn criterion_4() -> String {
    // 2x2 PT dimer with sigma_x parity.
    let h = ndarray::array![[c(0.0, 0.5), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, -0.5)]];
    let p = ndarray::array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
    let dec = eig_general(&h, 1e-10).unwrap();
    let ops = signature_and_c(&dec, &p, 1e-8).unwrap();
    let c2 = frobenius_norm(&(&ops.c.dot(&ops.c) - &identity(2)));
    assert!(c2 < 1e-8, "C^2 != I on dimer: {c2}");
    let rho = metric_rho(&p, &ops.c);
    let inter = intertwining_residual(&h, &rho.rho);
    assert!(inter < 1e-8, "dimer intertwining residual {inter}");

    // Any reference charge with fully real spectrum gets the same check.
    let sys = SpinSystem::new(4).unwrap();
    let cs = fig2_set(0.1, c(0.0, 0.5));
    let set = build_all(&sys, &cs, ChargeNormalization::Spin).unwrap();
    let parity = parity_op(&sys);
    let mut real_charges = 0usize;
    for q in &set.charges {
        let dec = eig_general(q, 1e-10).unwrap();
        if classify_spectrum(&dec.eigenvalues, 1e-8).n_real() == dec.eigenvalues.len() {
            if let Ok(ops) = signature_and_c(&dec, &parity, 1e-8) {
                let c2 = frobenius_norm(&(&ops.c.dot(&ops.c) - &identity(16)));
                assert!(c2 < 1e-8, "C^2 != I on charge: {c2}");
                let inter = intertwining_residual(q, &metric_rho(&parity, &ops.c).rho);
                assert!(inter < 1e-8, "charge intertwining residual {inter}");
                real_charges += 1;
            }
        }
    }
    format!(
        "dimer metric intertwines within 1e-8, C^2 = I; {real_charges} fully-real charge(s) \
         passed the same check"
    )
}

// --- criterion 5: similarity invariance of the spectrum --------------------

fn criterion_5() -> String {
    use rand::{Rng, SeedableRng};
    let sys = SpinSystem::new(4).unwrap();
    let cs = fig2_set(0.1, c(0.0, 0.5));
    let set = build_all(&sys, &cs, ChargeNormalization::Spin).unwrap();
    let h = &set.charges[0];
    let dim = h.nrows();
    let base: Vec<C64> = eig_general(h, 1e-10).unwrap().eigenvalues;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    for trial in 0..20 {
        let eta: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
        let mut transformed: CMat = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                transformed[(i, j)] = h[(i, j)] * (eta[i] / eta[j]);
            }
        }
        let evals = eig_general(&transformed, 1e-10).unwrap().eigenvalues;
        // Multiset comparison by greedy nearest matching (sorting is unstable
        // for conjugate pairs with nearly equal real parts).
        let mut used = vec![false; dim];
        for a in &base {
            let (best, dist) = evals
                .iter()
                .enumerate()
                .filter(|(m, _)| !used[*m])
                .map(|(m, e)| (m, (e - a).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert!(dist < 1e-8, "trial {trial}: no partner for {a} within 1e-8 ({dist:.2e})");
            used[best] = true;
        }
    }
    "eigenvalue multiset invariant under 20 random diagonal similarity transforms".into()
}

// --- criterion 6: closed-form dynamics -------------------------------------

fn criterion_6() -> String {
    // Larmor precession: H = omega S^z, psi0 = (|0> + |1>)/sqrt(2).
    let sys = SpinSystem::new(1).unwrap();
    let (_, _, sz, _, _) = spin_ops(&sys, 1).unwrap();
    let omega = 1.0;
    let h = sz.mapv(|v| v * omega);
    let amp = 1.0 / 2f64.sqrt();
    let psi0: CVec = Array1::from(vec![c(amp, 0.0), c(amp, 0.0)]);
    let t_grid: Vec<f64> = (0..=20_000).map(|k| k as f64 * 1e-3).collect();
    let tr = evolve_closed(&h, &psi0, &t_grid, EvolutionMode::ClosedStandard, None).unwrap();
    let mut worst_x = 0.0f64;
    for (ti, &t) in tr.times.iter().enumerate() {
        worst_x = worst_x.max((tr.sx[ti][0] - 0.5 * (omega * t).cos()).abs());
    }
    assert!(worst_x < 1e-6, "Larmor deviation {worst_x}");

    // Amplitude damping: H = 0, gamma = 0.2, rho0 = |0><0| (spin-up).
    let gamma = 0.2;
    let h0: CMat = Array2::zeros((2, 2));
    let mut rho0: CMat = Array2::zeros((2, 2));
    rho0[(0, 0)] = c(1.0, 0.0);
    let spec = LindbladSpec { gamma, jump_sites: vec![1] };
    let t_grid: Vec<f64> = (0..=200).map(|k| k as f64 * 0.1).collect();
    let tr = evolve_lindblad(&h0, &rho0, &spec, &t_grid).unwrap();
    let mut worst_z = 0.0f64;
    for (ti, &t) in tr.times.iter().enumerate() {
        worst_z = worst_z.max((tr.sz[ti][0] - ((-gamma * t).exp() - 0.5)).abs());
    }
    assert!(worst_z < 1e-5, "amplitude damping deviation {worst_z}");
    format!("Larmor within {worst_x:.1e}, amplitude damping within {worst_z:.1e}")
}

fn fig3_closed(g: f64) -> rglab::dynamics::TrajectoryRecord {
    let sys = SpinSystem::new(4).unwrap();
    let cs = fig2_set(g, c(0.0, 0.5));
    let set = build_all(&sys, &cs, ChargeNormalization::Spin).unwrap();
    let h = &set.charges[0];
    let dec = eig_general(h, 1e-10).unwrap();
    let p = parity_op(&sys);
    let (pt, _) = rglab::ptsym::signature_and_c_lenient(&dec, &p, 1e-8).unwrap();
    let mut psi0: CVec = Array1::zeros(16);
    psi0[0] = c(1.0, 0.0);
    let t_grid: Vec<f64> = (0..=500).map(|k| k as f64 * 0.1).collect();
    evolve_closed(h, &psi0, &t_grid, EvolutionMode::ClosedCPWeighted, Some(&pt)).unwrap()
}

fn fig3f_lindblad() -> Result<rglab::dynamics::TrajectoryRecord> {
    let sys = SpinSystem::new(4)?;
    let cs = fig2_set(1.0, c(0.5, 0.0));
    let set = build_all(&sys, &cs, ChargeNormalization::Spin)?;
    let mut rho0: CMat = Array2::zeros((16, 16));
    rho0[(0, 0)] = c(1.0, 0.0);
    let spec = LindbladSpec { gamma: 0.05, jump_sites: vec![1, 2, 3, 4] };
    let t_grid: Vec<f64> = (0..=500).map(|k| k as f64 * 0.1).collect();
    evolve_lindblad(&set.charges[0], &rho0, &spec, &t_grid)
}

// --- criterion 7: Lindblad conservation on the strong-coupling open run ----

fn criterion_7() -> String {
    let tr = fig3f_lindblad().unwrap();
    let trace_dev =
        tr.norm_or_trace.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
    // Positivity (min eigenvalue >= -1e-8) is enforced inside the integrator;
    // reaching this point certifies it held at every sample.
    assert!(trace_dev < 1e-8, "trace deviation {trace_dev}");
    format!("trace within {trace_dev:.1e} of 1 and positivity enforced at all samples")
}

// --- criterion 8: steady-state contrast (weak PT vs strong coupling) -------

fn criterion_8() -> String {
    let weak = fig3_closed(0.1);
    let strong = fig3_closed(1.0);
    let m_weak = steady_state_metric(&weak, (40.0, 50.0)).unwrap();
    let m_strong = steady_state_metric(&strong, (40.0, 50.0)).unwrap();
    let fmt = |m: &[(f64, f64)]| {
        m.iter().map(|(s, _)| format!("{s:.2e}")).collect::<Vec<_>>().join(", ")
    };
    for site in 0..4 {
        assert!(
            m_weak[site].0 > m_strong[site].0,
            "late-window std per site: weak coupling [{}] vs strong coupling [{}] — the \
             weak-coupling CP trajectory is dominated by a single broken-PT mode whose \
             growth the CP normalization cancels, leaving a quieter late-time window than \
             the strong-coupling run (see README, steady-state contrast note)",
            fmt(&m_weak),
            fmt(&m_strong),
        );
    }
    format!(
        "late-window std weak [{}] > strong [{}] per site",
        fmt(&m_weak),
        fmt(&m_strong)
    )
}

// --- criterion 9: perturbation theory --------------------------------------

fn g0_transverse_set(eps: &[f64], b: f64) -> CouplingSet {
    let n = eps.len();
    CouplingSet::new(
        eps.to_vec(),
        0.0,
        vec![c(b, 0.0); n],
        vec![c(0.0, 0.0); n],
        eps.to_vec(), // B^z_i = eps_i
        Array2::zeros((n, n)),
        Array2::zeros((n, n)),
        Array2::zeros((n, n)),
    )
    .unwrap()
}

fn criterion_9() -> String {
    let sys = SpinSystem::new(4).unwrap();
    let cs = g0_transverse_set(&[0.1, 0.3, 0.5, 0.7], 0.03);
    let split = split_hamiltonian(&sys, &cs).unwrap();
    let t = corrections(&sys, &split, InnerProduct::Standard, 1e-9).unwrap();
    let degenerate: Vec<usize> = (0..16).filter(|&n| t.degenerate[n]).collect();
    assert_eq!(degenerate.len(), 2, "expected the E = 0 doublet, got {degenerate:?}");
    for &n in &degenerate {
        assert!(t.e0[n].norm() < 1e-12, "degenerate cluster not at E = 0");
    }
    for n in 0..16 {
        if !t.degenerate[n] {
            assert!(t.e1[n].norm() < 1e-10, "E1 = {} at level {n}", t.e1[n].norm());
        }
    }

    let scales: Vec<f64> = (0..8).map(|k| 0.001 * 2f64.powi(k)).collect();

    // Two-level closed-form case: error after E2 is O(s^4).
    let sys1 = SpinSystem::new(1).unwrap();
    let cs1 = g0_transverse_set(&[1.0], 1.0);
    let split1 = split_hamiltonian(&sys1, &cs1).unwrap();
    let slopes1 = scaling_validation(&sys1, &split1, &scales, InnerProduct::Standard).unwrap();
    for s in slopes1.iter().flatten() {
        assert!(*s >= 3.9, "two-level slope {s} < 3.9");
    }

    // Generic multilevel case: error after E2 is O(s^3).
    let cs4 = g0_transverse_set(&[0.13, 0.37, 0.71, 1.03], 1.0);
    let split4 = split_hamiltonian(&sys, &cs4).unwrap();
    let slopes4 = scaling_validation(&sys, &split4, &scales, InnerProduct::Standard).unwrap();
    let mut counted = 0usize;
    for s in slopes4.iter().flatten() {
        assert!(*s >= 2.7, "generic slope {s} < 2.7");
        counted += 1;
    }
    assert!(counted >= 8, "only {counted} levels tracked through the scaling sweep");
    "degenerate doublet detected, nondegenerate E1 = 0, scaling slopes >= 3.9 / >= 2.7".into()
}

// --- criterion 10: Bethe solver --------------------------------------------

fn criterion_10() -> String {
    // N=2, M=1 quadratic-formula oracle: for eps = (0, 1), g = -0.2 the
    // equation 1/g - 1/(2E) + 1/(2(1-E)) = 0 reduces to 5E^2 - 4E - 1/2 = 0
    // with lower root (8 - sqrt(104))/20.
    let p2 = RichardsonProblem::new(vec![0.0, 1.0], 1).unwrap();
    let r2 = solve_richardson(&p2, -0.2).unwrap();
    let oracle = (8.0 - 104f64.sqrt()) / 20.0;
    assert!(
        (r2.roots[0] - c(oracle, 0.0)).norm() < 1e-10,
        "N=2 root {} vs oracle {oracle}",
        r2.roots[0]
    );

    // g -> 0 continuity ratio test at N=4, M=2.
    let eps4 = vec![0.1, 0.3, 0.5, 0.7];
    let p4 = RichardsonProblem::new(eps4.clone(), 2).unwrap();
    let dev_at = |g: f64| -> Vec<f64> {
        let r = solve_richardson(&p4, g).unwrap();
        (0..2).map(|a| (r.roots[a] - c(eps4[a], 0.0)).norm()).collect()
    };
    let d3 = dev_at(1e-3);
    let d4 = dev_at(1e-4);
    for a in 0..2 {
        let ratio = d3[a] / d4[a];
        assert!(
            (9.0..=11.0).contains(&ratio),
            "deviation ratio {ratio} at root {a} not ~10 (|roots - eps| not O(g))"
        );
    }

    // Eigenstate overlaps against exact diagonalization of H_R.
    let sys = SpinSystem::new(4).unwrap();
    let h_r = pairing_hamiltonian(&sys, &eps4, -0.2).unwrap();
    let mut overlaps = Vec::new();
    for (m, floor) in [(1usize, 1.0 - 1e-8), (2usize, 1.0 - 1e-6)] {
        let p = RichardsonProblem::new(eps4.clone(), m).unwrap();
        let roots = solve_richardson(&p, -0.2).unwrap();
        let state = bethe_state(&sys, &eps4, &roots.roots).unwrap();
        let check = verify_eigenstate(&h_r, &state.normalized).unwrap();
        assert!(
            check.best_overlap > floor,
            "M={m} overlap {} below {floor}",
            check.best_overlap
        );
        overlaps.push(check.best_overlap);
    }
    format!(
        "quadratic-formula root matched, O(g) ratio test passed, overlaps {:.12} / {:.12}",
        overlaps[0], overlaps[1]
    )
}

// --- criterion 11: coupling-family spot checks -----------------------------

fn criterion_11() -> String {
    let rows = couplings_export(&[0.5, std::f64::consts::FRAC_PI_2, 20.0]).unwrap();
    let find = |fam: &str, d: f64| {
        rows.iter().find(|r| r.family == fam && (r.d - d).abs() < 1e-12).unwrap()
    };
    let rat = find("rational", 0.5);
    assert!((rat.gamma_x - 2.0).abs() < 1e-12 && (rat.gamma_z - 2.0).abs() < 1e-12);
    let trig = find("trigonometric", std::f64::consts::FRAC_PI_2);
    assert!((trig.gamma_x - 1.0).abs() < 1e-12 && trig.gamma_z.abs() < 1e-12);
    let hyp = find("hyperbolic", 20.0);
    assert!((hyp.gamma_z - 1.0).abs() < 1e-3);
    "rational(0.5) = (2,2), trig(pi/2) = (1,0), hyperbolic Gamma_z(20) ~ 1".into()
}

// --- criterion 12: bundled-config determinism ------------------------------

fn criterion_12() -> String {
    let dir = configs_dir();
    let mut names = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("config directory {}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    assert!(!entries.is_empty(), "no bundled configs found in {}", dir.display());
    for path in entries {
        let cfg = RunConfig::from_path(&path).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_config(&cfg, d1.path(), false).unwrap();
        run_config(&cfg, d2.path(), false).unwrap();
        let mut files: Vec<_> = std::fs::read_dir(d1.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        files.sort();
        for f in &files {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(
                a,
                b,
                "artifact {:?} of {} differs between runs",
                f,
                path.display()
            );
        }
        names.push(path.file_name().unwrap().to_string_lossy().into_owned());
    }
    format!("byte-identical double runs for {}", names.join(", "))
}

/// Supplementary to criterion 8: the measured late-window behavior, frozen as
/// a regression. With the CP expectation rule the contrast is *inverted*
/// relative to the narrative claim: the weak-coupling run is frozen by its
/// dominant broken-PT mode (std ~1e-5..1e-4 per site over t in [40, 50]),
/// while the strong-coupling run still drifts slightly (std ~1e-3). A Python
/// reference implementation reproduces the same numbers for both
/// C-construction variants, so this is a property of the model and
/// expectation rule, not of this implementation.
#[test]
fn steady_state_contrast_frozen_inversion() {
    let weak = steady_state_metric(&fig3_closed(0.1), (40.0, 50.0)).unwrap();
    let strong = steady_state_metric(&fig3_closed(1.0), (40.0, 50.0)).unwrap();
    for site in 0..4 {
        let (w, s) = (weak[site].0, strong[site].0);
        assert!(w < s, "inversion lost at site {}: weak {w:.2e} vs strong {s:.2e}", site + 1);
        assert!(w < 1e-3, "weak-coupling late std {w:.2e} left its frozen range at site {}", site + 1);
        assert!(
            (1e-4..1e-2).contains(&s),
            "strong-coupling late std {s:.2e} left its frozen range at site {}",
            site + 1
        );
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> String>)> = vec![
        (1, "integrability + commutation", Box::new(criterion_1)),
        (2, "PT spectrum dichotomy", Box::new(criterion_2)),
        (3, "quadratic operator relation", Box::new(criterion_3)),
        (4, "metric / intertwining / C^2 = I", Box::new(criterion_4)),
        (5, "similarity invariance", Box::new(criterion_5)),
        (6, "closed-form dynamics", Box::new(criterion_6)),
        (7, "Lindblad conservation", Box::new(criterion_7)),
        (8, "steady-state contrast", Box::new(criterion_8)),
        (9, "perturbation theory", Box::new(criterion_9)),
        (10, "Bethe solver", Box::new(criterion_10)),
        (11, "coupling-family spot checks", Box::new(criterion_11)),
        (12, "bundled-config determinism", Box::new(criterion_12)),
    ];

    let mut failures: BTreeMap<usize, String> = BTreeMap::new();
    for (num, name, body) in &criteria {
        match catch_unwind(AssertUnwindSafe(body)) {
            Ok(detail) => println!("criterion {num:2} [{name}]: PASS - {detail}"),
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "non-string panic".into());
                println!("criterion {num:2} [{name}]: FAIL - {msg}");
                failures.insert(*num, msg);
            }
        }
    }
    assert!(
        failures.is_empty(),
        "failed criteria: {:?}",
        failures.keys().collect::<Vec<_>>()
    );
}
