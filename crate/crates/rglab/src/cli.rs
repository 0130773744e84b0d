//! Command-line front end: JSON config parsing, experiment orchestration, and
//! deterministic CSV/JSON emission.
//!
//! A run is described by a single UTF-8 JSON document with three blocks:
//! `model` (family and parameters), `task` (what to compute), and an optional
//! `output` block. Complex numbers are encoded as `{"re": x, "im": y}`.
//! Unknown keys are rejected everywhere.
//!
//! Output contract: every run writes `summary.json`; tasks additionally write
//! fixed-schema CSVs (`spectrum.csv`, `trajectory.csv`, `corrections.csv`,
//! `quadratic.csv`, `couplings.csv`) or `bethe.json`. Floats in CSVs are
//! printed with 17 significant digits and all outputs are byte-identical
//! across repeated runs of the same config on the same build. Wall time goes
//! to standard error only, never into the artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bethe::{
    bethe_state, pairing_hamiltonian, solve_richardson, verify_eigenstate, RichardsonProblem,
};
use crate::charges::{build_all, commutation_report, quadratic_coeffs, quadratic_residual};
use crate::dynamics::{
    evolve_closed, evolve_lindblad, steady_state_metric, EvolutionMode, LindbladSpec,
    TrajectoryRecord,
};
use crate::eig::{classify_spectrum, eig_general, PTTag};
use crate::error::{Error, Result};
use crate::model::{
    build_fields_xyz, build_hamiltonian_from_charges, charge_couplings_xxz,
    check_integrability_xxz, check_integrability_xyz, coupling_family, xxz_coupling_set,
    ChargeNormalization, CouplingSet, FamilyKind, XYZFieldParams,
};
use crate::perturb::{corrections, split_hamiltonian, InnerProduct};
use crate::ptsym::{parity_op, signature_and_c_lenient};
use crate::qops::{CMat, CVec, SpinSystem};

/// Fixed header of `spectrum.csv`.
pub const SPECTRUM_CSV_HEADER: &str = "charge_index,eig_index,re,im,tag,partner";
/// Fixed header of `trajectory.csv`.
pub const TRAJECTORY_CSV_HEADER: &str = "t,site,sx,sy,sz,norm_or_trace,mode";
/// Fixed header of `couplings.csv`.
pub const COUPLINGS_CSV_HEADER: &str = "family,d,gamma_x,gamma_z,nearest_pole";

/// Command-line flags.
#[derive(Debug, Parser)]
#[command(name = "rglab", about = "Integrable PT-symmetric Richardson-Gaudin laboratory")]
pub struct CliArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config's output block).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker thread count for the parallel charge/commutator paths.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Assert that the run uses no randomness (always true; recorded in the
    /// summary).
    #[arg(long)]
    pub seedless: bool,
}

/// Complex number as it appears in configs and JSON artifacts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComplexParam {
    pub re: f64,
    pub im: f64,
}

impl From<ComplexParam> for C64 {
    fn from(c: ComplexParam) -> Self {
        C64::new(c.re, c.im)
    }
}

impl From<C64> for ComplexParam {
    fn from(c: C64) -> Self {
        ComplexParam { re: c.re, im: c.im }
    }
}

/// Model family selector (config spelling).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub enum FamilyConfig {
    #[serde(rename = "xxz-rational")]
    XxzRational,
    #[serde(rename = "xxz-trig")]
    XxzTrig,
    #[serde(rename = "xxz-hyperbolic")]
    XxzHyperbolic,
    #[serde(rename = "xyz-field")]
    XyzField,
}

impl FamilyConfig {
    fn xxz_kind(self) -> Option<FamilyKind> {
        match self {
            FamilyConfig::XxzRational => Some(FamilyKind::Rational),
            FamilyConfig::XxzTrig => Some(FamilyKind::Trigonometric),
            FamilyConfig::XxzHyperbolic => Some(FamilyKind::Hyperbolic),
            FamilyConfig::XyzField => None,
        }
    }
}

fn default_alpha() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    0.5
}

fn default_complex_zero() -> ComplexParam {
    ComplexParam { re: 0.0, im: 0.0 }
}

/// Model block: family plus physical parameters. The `alpha/beta/delta/lambda`
/// fields apply to the `xyz-field` family only; `imaginary_x_coupling`
/// applies to the XXZ families only (multiplies Γ^x by i).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub family: FamilyConfig,
    pub n: usize,
    pub epsilon: Vec<f64>,
    pub g: f64,
    #[serde(default = "default_alpha")]
    pub alpha_x: f64,
    #[serde(default = "default_alpha")]
    pub alpha_y: f64,
    #[serde(default = "default_beta")]
    pub beta_x: f64,
    #[serde(default = "default_beta")]
    pub beta_y: f64,
    #[serde(default = "default_complex_zero")]
    pub delta: ComplexParam,
    #[serde(default = "default_complex_zero")]
    pub lambda: ComplexParam,
    #[serde(default)]
    pub imaginary_x_coupling: bool,
}

/// Task selector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Spectrum,
    Charges,
    Integrability,
    Dynamics,
    Lindblad,
    Perturb,
    Bethe,
    Couplings,
}

impl TaskKind {
    fn label(self) -> &'static str {
        match self {
            TaskKind::Spectrum => "spectrum",
            TaskKind::Charges => "charges",
            TaskKind::Integrability => "integrability",
            TaskKind::Dynamics => "dynamics",
            TaskKind::Lindblad => "lindblad",
            TaskKind::Perturb => "perturb",
            TaskKind::Bethe => "bethe",
            TaskKind::Couplings => "couplings",
        }
    }
}

/// Task block: kind plus kind-specific parameters (all optional with
/// documented defaults).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    pub kind: TaskKind,
    /// Final time of the sampling grid (dynamics/lindblad; default 50).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Sample spacing of the output grid (dynamics/lindblad; default 0.1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Damping constant γ ≥ 0 (lindblad; default 0.05).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Initial product state as a bitstring, site 1 first, '0' = spin-up
    /// (dynamics/lindblad; default all '0').
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    /// Expectation rule: "standard" or "cp" (dynamics); inner product:
    /// "standard" or "cpt" (perturb).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Late-time window `[t_a, t_b]` for steady-state statistics
    /// (dynamics/lindblad; optional).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Number of Bethe pairs M (bethe; default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Charge weights for the evolved Hamiltonian `H = Σ w_i Q_i`
    /// (dynamics/lindblad; default `Q_1`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Energy-difference grid for the couplings export (couplings; default
    /// 0.05..=2.0 in steps of 0.05).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Vec<f64>>,
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

/// Output block: destination directory and artifact formats.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { directory: None, formats: default_formats() }
    }
}

/// Full run configuration (one JSON document).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub task: TaskBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    /// Parse and schema-validate a config document.
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_str(&fs::read_to_string(path)?)
    }

    /// Re-check physical invariants before any computation.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.n == 0 || m.n > 12 {
            return Err(Error::SiteCountOutOfRange(m.n));
        }
        if m.epsilon.len() != m.n {
            return Err(Error::Config(format!(
                "model.n = {} but epsilon has {} entries",
                m.n,
                m.epsilon.len()
            )));
        }
        for i in 0..m.epsilon.len() {
            for j in (i + 1)..m.epsilon.len() {
                if (m.epsilon[i] - m.epsilon[j]).abs() < 1e-12 {
                    return Err(Error::EpsilonNotDistinct);
                }
            }
        }
        if let Some(gamma) = self.task.gamma {
            if gamma < 0.0 {
                return Err(Error::NegativeGamma(gamma));
            }
        }
        if let Some(mm) = self.task.m {
            if mm == 0 || mm > m.n {
                return Err(Error::InvalidPairCount { m: mm, n: m.n });
            }
        }
        if let Some(w) = &self.task.window {
            if w[1] <= w[0] {
                return Err(Error::Config(format!(
                    "window [{}, {}] is not increasing",
                    w[0], w[1]
                )));
            }
        }
        if let Some(weights) = &self.task.weights {
            if weights.len() != m.n {
                return Err(Error::LengthMismatch { got: weights.len(), expected: m.n });
            }
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(Error::Config(format!("unknown output format '{f}'")));
            }
        }
        Ok(())
    }
}

/// Deterministic run summary: config echo plus headline metrics. Contains no
/// timestamps; wall time is reported on standard error only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub task: String,
    pub seedless: bool,
    pub exit_status: i32,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub config: RunConfig,
}

fn fmt_f(x: f64) -> String {
    // 17 significant digits: enough to round-trip any f64 exactly.
    format!("{:.16e}", x)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 64 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_text(path, &text)
}

/// Build the charge-ready Cartesian coupling set for the configured model.
pub fn coupling_set_for(model: &ModelBlock) -> Result<CouplingSet> {
    match model.family.xxz_kind() {
        Some(kind) => {
            let family =
                xxz_coupling_set(kind, &model.epsilon, model.g, model.imaginary_x_coupling)?;
            charge_couplings_xxz(&family)
        }
        None => build_fields_xyz(&XYZFieldParams {
            alpha_x: model.alpha_x,
            alpha_y: model.alpha_y,
            beta_x: model.beta_x,
            beta_y: model.beta_y,
            delta: model.delta.into(),
            lambda: model.lambda.into(),
            epsilon: model.epsilon.clone(),
            g: model.g,
        }),
    }
}

fn parse_bitstring(s: &str, n: usize) -> Result<usize> {
    if s.len() != n || !s.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::InvalidBitstring(s.to_string()));
    }
    // Site 1 is the most significant bit; '0' = spin-up.
    Ok(s.chars().fold(0usize, |idx, c| (idx << 1) | (c == '1') as usize))
}

fn basis_state(dim: usize, index: usize) -> CVec {
    let mut psi: CVec = Array1::zeros(dim);
    psi[index] = C64::new(1.0, 0.0);
    psi
}

fn sample_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_max > 0.0) || !(dt > 0.0) {
        return Err(Error::Config(format!("need t_max > 0 and dt > 0, got {t_max}, {dt}")));
    }
    let steps = (t_max / dt).round() as usize;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

fn trajectory_rows(tr: &TrajectoryRecord) -> Vec<String> {
    let mut rows = Vec::new();
    let label = tr.mode.label();
    for (ti, &t) in tr.times.iter().enumerate() {
        for site in 0..tr.sx[ti].len() {
            rows.push(format!(
                "{},{},{},{},{},{},{}",
                fmt_f(t),
                site + 1,
                fmt_f(tr.sx[ti][site]),
                fmt_f(tr.sy[ti][site]),
                fmt_f(tr.sz[ti][site]),
                fmt_f(tr.norm_or_trace[ti]),
                label,
            ));
        }
    }
    rows
}

fn steady_metrics(
    tr: &TrajectoryRecord,
    window: Option<[f64; 2]>,
    metrics: &mut BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    if let Some([a, b]) = window {
        for (site, (std, drift)) in steady_state_metric(tr, (a, b))?.iter().enumerate() {
            metrics.insert(format!("steady_std_site{}", site + 1), json_f64(*std));
            metrics.insert(format!("steady_drift_site{}", site + 1), json_f64(*drift));
        }
    }
    Ok(())
}

fn json_f64(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

fn tag_fields(tag: &PTTag) -> (&'static str, String) {
    match tag {
        PTTag::Real => ("real", String::new()),
        PTTag::ConjugatePair(m) => ("pair", m.to_string()),
        PTTag::UnpairedComplex => ("unpaired", String::new()),
    }
}

/// One row of the coupling-family export.
#[derive(Debug, Clone)]
pub struct CouplingRow {
    pub family: &'static str,
    pub d: f64,
    pub gamma_x: f64,
    pub gamma_z: f64,
    /// Location of the nearest coupling pole on the d-axis.
    pub nearest_pole: f64,
}

/// Evaluate `(Γ^x(d), Γ^z(d))` for all three families over `d_grid`.
/// Grid points within 1e−6 of a pole are rejected.
pub fn couplings_export(d_grid: &[f64]) -> Result<Vec<CouplingRow>> {
    let families = [
        ("rational", FamilyKind::Rational),
        ("trigonometric", FamilyKind::Trigonometric),
        ("hyperbolic", FamilyKind::Hyperbolic),
    ];
    let mut rows = Vec::with_capacity(3 * d_grid.len());
    for (name, kind) in families {
        for &d in d_grid {
            let pole = match kind {
                // Poles of 1/d and 1/sinh at d = 0; of 1/sin at d = kπ.
                FamilyKind::Rational | FamilyKind::Hyperbolic => 0.0,
                FamilyKind::Trigonometric => {
                    (d / std::f64::consts::PI).round() * std::f64::consts::PI
                }
            };
            if (d - pole).abs() < 1e-6 {
                return Err(Error::Config(format!(
                    "coupling grid point d = {d} lies within 1e-6 of the {name} pole at {pole}"
                )));
            }
            let (gx, gz) = coupling_family(kind, d, 0.0)?;
            rows.push(CouplingRow { family: name, d, gamma_x: gx, gamma_z: gz, nearest_pole: pole });
        }
    }
    Ok(rows)
}

fn default_d_grid() -> Vec<f64> {
    (1..=40).map(|k| k as f64 * 0.05).collect()
}

struct TaskOutput {
    metrics: BTreeMap<String, serde_json::Value>,
    /// (file name, header, rows) for CSV artifacts.
    csv: Vec<(&'static str, &'static str, Vec<String>)>,
    /// (file name, pretty JSON value) for JSON artifacts.
    json: Vec<(&'static str, serde_json::Value)>,
}

impl TaskOutput {
    fn new() -> Self {
        TaskOutput { metrics: BTreeMap::new(), csv: Vec::new(), json: Vec::new() }
    }
}

fn evolved_hamiltonian(sys: &SpinSystem, cs: &CouplingSet, task: &TaskBlock) -> Result<CMat> {
    let set = build_all(sys, cs, ChargeNormalization::Spin)?;
    let default_weights: Vec<f64> = (0..set.len()).map(|i| (i == 0) as u8 as f64).collect();
    let weights = task.weights.clone().unwrap_or(default_weights);
    build_hamiltonian_from_charges(&set.charges, &weights)
}

fn run_spectrum(sys: &SpinSystem, cs: &CouplingSet) -> Result<TaskOutput> {
    let set = build_all(sys, cs, ChargeNormalization::Spin)?;
    let mut out = TaskOutput::new();
    let mut rows = Vec::new();
    let (mut n_real, mut n_paired, mut n_unpaired) = (0usize, 0usize, 0usize);
    for (ci, q) in set.charges.iter().enumerate() {
        let dec = eig_general(q, 1e-10)?;
        let mut evals = dec.eigenvalues.clone();
        evals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let class = classify_spectrum(&evals, 1e-8);
        n_real += class.n_real();
        n_paired += class.n_paired();
        n_unpaired += class.n_unpaired();
        for (ei, (e, tag)) in evals.iter().zip(&class.tags).enumerate() {
            let (label, partner) = tag_fields(tag);
            rows.push(format!(
                "{},{},{},{},{},{}",
                ci + 1,
                ei,
                fmt_f(e.re),
                fmt_f(e.im),
                label,
                partner,
            ));
        }
    }
    out.csv.push(("spectrum.csv", SPECTRUM_CSV_HEADER, rows));
    out.metrics.insert("n_real".into(), serde_json::json!(n_real));
    out.metrics.insert("n_paired".into(), serde_json::json!(n_paired));
    out.metrics.insert("n_unpaired".into(), serde_json::json!(n_unpaired));
    Ok(out)
}

fn run_charges(sys: &SpinSystem, cs: &CouplingSet) -> Result<TaskOutput> {
    let mut out = TaskOutput::new();
    let set = build_all(sys, cs, ChargeNormalization::Pauli)?;
    let commutation = commutation_report(&set, None);
    let qr = quadratic_coeffs(cs)?;
    let res = quadratic_residual(&set, &qr)?;
    let rows: Vec<String> = res
        .per_charge
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{},{}", i + 1, fmt_f(*r)))
        .collect();
    out.csv.push(("quadratic.csv", "charge_index,residual", rows));
    out.metrics.insert("max_commutator_residual".into(), json_f64(commutation));
    out.metrics.insert("branch_agreement".into(), json_f64(qr.branch_agreement));
    out.metrics.insert("kappa".into(), json_f64(res.kappa));
    out.metrics.insert(
        "max_quadratic_residual".into(),
        json_f64(res.per_charge.iter().copied().fold(0.0, f64::max)),
    );
    Ok(out)
}

fn run_integrability(
    sys: &SpinSystem,
    model: &ModelBlock,
    cs: &CouplingSet,
) -> Result<TaskOutput> {
    let mut out = TaskOutput::new();
    match model.family.xxz_kind() {
        Some(kind) => {
            let family =
                xxz_coupling_set(kind, &model.epsilon, model.g, model.imaginary_x_coupling)?;
            let report = check_integrability_xxz(&family);
            out.metrics.insert("antisymmetry_x".into(), json_f64(report.antisymmetry_x));
            out.metrics.insert("antisymmetry_z".into(), json_f64(report.antisymmetry_z));
            out.metrics.insert("triple".into(), json_f64(report.triple));
            out.metrics.insert("max_residual".into(), json_f64(report.max()));
        }
        None => {
            let report = check_integrability_xyz(cs);
            out.metrics.insert("linear".into(), json_f64(report.linear));
            out.metrics.insert("quadratic".into(), json_f64(report.quadratic));
            out.metrics.insert("max_residual".into(), json_f64(report.max()));
        }
    }
    let set = build_all(sys, cs, ChargeNormalization::Spin)?;
    out.metrics
        .insert("max_commutator_residual".into(), json_f64(commutation_report(&set, None)));
    Ok(out)
}

fn run_dynamics(sys: &SpinSystem, cs: &CouplingSet, task: &TaskBlock) -> Result<TaskOutput> {
    let h = evolved_hamiltonian(sys, cs, task)?;
    let t_grid = sample_grid(task.t_max.unwrap_or(50.0), task.dt.unwrap_or(0.1))?;
    let initial = task.initial.clone().unwrap_or_else(|| "0".repeat(sys.site_count()));
    let psi0 = basis_state(sys.hilbert_dim(), parse_bitstring(&initial, sys.site_count())?);
    let mode = task.mode.as_deref().unwrap_or("standard");
    let (mode, pt) = match mode {
        "standard" => (EvolutionMode::ClosedStandard, None),
        "cp" => {
            let dec = eig_general(&h, 1e-10)?;
            let p = parity_op(sys);
            let (pt, _complex) = signature_and_c_lenient(&dec, &p, 1e-8)?;
            (EvolutionMode::ClosedCPWeighted, Some(pt))
        }
        other => return Err(Error::Config(format!("unknown dynamics mode '{other}'"))),
    };
    let tr = evolve_closed(&h, &psi0, &t_grid, mode, pt.as_ref())?;
    let mut out = TaskOutput::new();
    out.csv.push(("trajectory.csv", TRAJECTORY_CSV_HEADER, trajectory_rows(&tr)));
    out.metrics.insert("broken_pt".into(), serde_json::json!(tr.broken_pt));
    out.metrics.insert("max_imag".into(), json_f64(tr.max_imag));
    steady_metrics(&tr, task.window, &mut out.metrics)?;
    Ok(out)
}

fn run_lindblad(sys: &SpinSystem, cs: &CouplingSet, task: &TaskBlock) -> Result<TaskOutput> {
    let h = evolved_hamiltonian(sys, cs, task)?;
    let t_grid = sample_grid(task.t_max.unwrap_or(50.0), task.dt.unwrap_or(0.1))?;
    let initial = task.initial.clone().unwrap_or_else(|| "0".repeat(sys.site_count()));
    let index = parse_bitstring(&initial, sys.site_count())?;
    let dim = sys.hilbert_dim();
    let mut rho0: CMat = Array2::zeros((dim, dim));
    rho0[(index, index)] = C64::new(1.0, 0.0);
    let spec = LindbladSpec {
        gamma: task.gamma.unwrap_or(0.05),
        jump_sites: (1..=sys.site_count()).collect(),
    };
    let tr = evolve_lindblad(&h, &rho0, &spec, &t_grid)?;
    let mut out = TaskOutput::new();
    out.csv.push(("trajectory.csv", TRAJECTORY_CSV_HEADER, trajectory_rows(&tr)));
    let trace_dev =
        tr.norm_or_trace.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
    out.metrics.insert("max_trace_deviation".into(), json_f64(trace_dev));
    steady_metrics(&tr, task.window, &mut out.metrics)?;
    Ok(out)
}

fn run_perturb(sys: &SpinSystem, cs: &CouplingSet, task: &TaskBlock) -> Result<TaskOutput> {
    let split = split_hamiltonian(sys, cs)?;
    let inner = match task.mode.as_deref().unwrap_or("cpt") {
        "cpt" => InnerProduct::CPT,
        "standard" => InnerProduct::Standard,
        other => return Err(Error::Config(format!("unknown perturb mode '{other}'"))),
    };
    let table = corrections(sys, &split, inner, 1e-10)?;
    let mut rows = Vec::new();
    let mut max_e1_nondeg = 0.0f64;
    for n in 0..table.e0.len() {
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{}",
            n,
            fmt_f(table.e0[n].re),
            fmt_f(table.e0[n].im),
            fmt_f(table.e1[n].re),
            fmt_f(table.e1[n].im),
            fmt_f(table.e2[n].re),
            fmt_f(table.e2[n].im),
            table.degenerate[n],
            table.unresolved[n],
        ));
        if !table.degenerate[n] {
            max_e1_nondeg = max_e1_nondeg.max(table.e1[n].norm());
        }
    }
    let mut out = TaskOutput::new();
    out.csv.push((
        "corrections.csv",
        "level,e0_re,e0_im,e1_re,e1_im,e2_re,e2_im,degenerate,unresolved",
        rows,
    ));
    out.metrics.insert("smallness".into(), json_f64(split.smallness));
    out.metrics.insert(
        "n_degenerate".into(),
        serde_json::json!(table.degenerate.iter().filter(|&&d| d).count()),
    );
    out.metrics.insert("max_e1_nondegenerate".into(), json_f64(max_e1_nondeg));
    Ok(out)
}

fn run_bethe(sys: &SpinSystem, model: &ModelBlock, task: &TaskBlock) -> Result<TaskOutput> {
    let m = task.m.unwrap_or(1);
    let problem = RichardsonProblem::new(model.epsilon.clone(), m)?;
    let roots = solve_richardson(&problem, model.g)?;
    let state = bethe_state(sys, &model.epsilon, &roots.roots)?;
    let h_r = pairing_hamiltonian(sys, &model.epsilon, model.g)?;
    let check = verify_eigenstate(&h_r, &state.normalized)?;
    let mut out = TaskOutput::new();
    out.json.push((
        "bethe.json",
        serde_json::json!({
            "m": m,
            "g": model.g,
            "roots": roots.roots.iter()
                .map(|r| ComplexParam::from(*r))
                .map(|c| serde_json::json!({"re": c.re, "im": c.im}))
                .collect::<Vec<_>>(),
            "equation_residual": roots.residual,
            "rayleigh": {"re": check.rayleigh.re, "im": check.rayleigh.im},
            "state_residual": check.residual,
            "best_overlap": check.best_overlap,
        }),
    ));
    out.metrics.insert("equation_residual".into(), json_f64(roots.residual));
    out.metrics.insert("state_residual".into(), json_f64(check.residual));
    out.metrics.insert("best_overlap".into(), json_f64(check.best_overlap));
    Ok(out)
}

fn run_couplings(task: &TaskBlock) -> Result<TaskOutput> {
    let grid = task.d_grid.clone().unwrap_or_else(default_d_grid);
    let rows = couplings_export(&grid)?;
    let mut out = TaskOutput::new();
    out.csv.push((
        "couplings.csv",
        COUPLINGS_CSV_HEADER,
        rows.iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{}",
                    r.family,
                    fmt_f(r.d),
                    fmt_f(r.gamma_x),
                    fmt_f(r.gamma_z),
                    fmt_f(r.nearest_pole),
                )
            })
            .collect(),
    ));
    out.metrics.insert("n_rows".into(), serde_json::json!(rows.len()));
    Ok(out)
}

/// Execute a validated config and write artifacts into `out_dir`.
/// Returns the summary that was written to `summary.json`.
pub fn run_config(cfg: &RunConfig, out_dir: &Path, seedless: bool) -> Result<RunSummary> {
    let sys = SpinSystem::new(cfg.model.n)?;
    let output = match cfg.task.kind {
        TaskKind::Couplings => run_couplings(&cfg.task)?,
        TaskKind::Bethe => run_bethe(&sys, &cfg.model, &cfg.task)?,
        kind => {
            let cs = coupling_set_for(&cfg.model)?;
            match kind {
                TaskKind::Spectrum => run_spectrum(&sys, &cs)?,
                TaskKind::Charges => run_charges(&sys, &cs)?,
                TaskKind::Integrability => run_integrability(&sys, &cfg.model, &cs)?,
                TaskKind::Dynamics => run_dynamics(&sys, &cs, &cfg.task)?,
                TaskKind::Lindblad => run_lindblad(&sys, &cs, &cfg.task)?,
                TaskKind::Perturb => run_perturb(&sys, &cs, &cfg.task)?,
                TaskKind::Bethe | TaskKind::Couplings => unreachable!(),
            }
        }
    };

    fs::create_dir_all(out_dir)?;
    let formats = &cfg.output.formats;
    if formats.iter().any(|f| f == "csv") {
        for (name, header, rows) in &output.csv {
            write_csv(&out_dir.join(name), header, rows)?;
        }
    }
    if formats.iter().any(|f| f == "json") {
        for (name, value) in &output.json {
            let text = serde_json::to_string_pretty(value)
                .map_err(|e| Error::Config(format!("{e}")))?;
            write_text(&out_dir.join(name), &format!("{text}\n"))?;
        }
    }

    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        task: cfg.task.kind.label().to_string(),
        seedless,
        exit_status: 0,
        metrics: output.metrics,
        config: cfg.clone(),
    };
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Config(format!("{e}")))?;
    write_text(&out_dir.join("summary.json"), &format!("{text}\n"))?;
    Ok(summary)
}

/// Top-level entry point for the binary: parse config, run, write artifacts.
pub fn run(args: &CliArgs) -> Result<RunSummary> {
    #[cfg(feature = "parallel")]
    if let Some(threads) = args.threads {
        // Ignore the error if a global pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = args.threads;

    let cfg = RunConfig::from_path(&args.config)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    run_config(&cfg, &out_dir, args.seedless)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fig2_config(task: &str) -> String {
        format!(
            r#"{{
                "model": {{
                    "family": "xyz-field", "n": 4,
                    "epsilon": [0.1, 0.3, 0.5, 0.7], "g": 0.1,
                    "delta": {{"re": 0.0, "im": 0.5}},
                    "lambda": {{"re": 0.0, "im": 0.5}}
                }},
                "task": {{"kind": "{task}"}}
            }}"#
        )
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{"model": {"family": "xxz-rational", "n": 2, "epsilon": [0.1, 0.3],
            "g": 0.1, "bogus": 1}, "task": {"kind": "spectrum"}}"#;
        assert!(matches!(RunConfig::from_str(text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_duplicate_epsilon() {
        let text = r#"{"model": {"family": "xxz-rational", "n": 2, "epsilon": [0.1, 0.1],
            "g": 0.1}, "task": {"kind": "spectrum"}}"#;
        let err = RunConfig::from_str(text).unwrap_err();
        assert!(matches!(err, Error::EpsilonNotDistinct));
        assert_eq!(err.exit_code(), 2);
        assert_eq!(format!("{err}"), "epsilon entries must be distinct");
    }

    #[test]
    fn rejects_negative_gamma_and_bad_m() {
        let base = r#"{"model": {"family": "xxz-rational", "n": 2, "epsilon": [0.1, 0.3],
            "g": 0.1}, "task": {"kind": "lindblad", "gamma": -0.1}}"#;
        assert!(matches!(RunConfig::from_str(base), Err(Error::NegativeGamma(_))));
        let bad_m = r#"{"model": {"family": "xxz-rational", "n": 2, "epsilon": [0.1, 0.3],
            "g": 0.1}, "task": {"kind": "bethe", "m": 5}}"#;
        assert!(matches!(
            RunConfig::from_str(bad_m),
            Err(Error::InvalidPairCount { m: 5, n: 2 })
        ));
    }

    #[test]
    fn bitstring_parsing() {
        assert_eq!(parse_bitstring("0000", 4).unwrap(), 0);
        assert_eq!(parse_bitstring("1111", 4).unwrap(), 15);
        assert_eq!(parse_bitstring("0001", 4).unwrap(), 1);
        assert_eq!(parse_bitstring("1000", 4).unwrap(), 8);
        assert!(matches!(parse_bitstring("012", 3), Err(Error::InvalidBitstring(_))));
        assert!(matches!(parse_bitstring("00", 3), Err(Error::InvalidBitstring(_))));
    }

    #[test]
    fn couplings_export_spot_values() {
        let rows = couplings_export(&[0.5, std::f64::consts::FRAC_PI_2, 20.0]).unwrap();
        let find = |fam: &str, d: f64| {
            rows.iter()
                .find(|r| r.family == fam && (r.d - d).abs() < 1e-12)
                .unwrap()
        };
        let rat = find("rational", 0.5);
        assert_abs_diff_eq!(rat.gamma_x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rat.gamma_z, 2.0, epsilon = 1e-12);
        let trig = find("trigonometric", std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(trig.gamma_x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trig.gamma_z, 0.0, epsilon = 1e-12);
        let hyp = find("hyperbolic", 20.0);
        assert!((hyp.gamma_z - 1.0).abs() < 1e-3);
    }

    #[test]
    fn couplings_export_rejects_pole() {
        assert!(couplings_export(&[1e-9]).is_err());
        assert!(couplings_export(&[std::f64::consts::PI]).is_err());
    }

    #[test]
    fn spectrum_task_runs_and_tags_everything() {
        let cfg = RunConfig::from_str(&fig2_config("spectrum")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = run_config(&cfg, dir.path(), true).unwrap();
        assert_eq!(summary.metrics["n_unpaired"], serde_json::json!(0));
        let text = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SPECTRUM_CSV_HEADER);
        // 4 charges x 16 eigenvalues
        assert_eq!(lines.count(), 64);
    }

    #[test]
    fn summary_round_trips_byte_identically() {
        let cfg = RunConfig::from_str(&fig2_config("integrability")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_config(&cfg, dir.path(), false).unwrap();
        let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let parsed: RunSummary = serde_json::from_str(&text).unwrap();
        let re = format!("{}\n", serde_json::to_string_pretty(&parsed).unwrap());
        assert_eq!(text, re);
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let cfg = RunConfig::from_str(&fig2_config("charges")).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_config(&cfg, d1.path(), false).unwrap();
        run_config(&cfg, d2.path(), false).unwrap();
        for name in ["summary.json", "quadratic.csv"] {
            let a = fs::read(d1.path().join(name)).unwrap();
            let b = fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between identical runs");
        }
    }

    #[test]
    fn bethe_task_emits_roots_json() {
        let text = r#"{"model": {"family": "xxz-rational", "n": 4,
            "epsilon": [0.1, 0.3, 0.5, 0.7], "g": -0.2},
            "task": {"kind": "bethe", "m": 1}}"#;
        let cfg = RunConfig::from_str(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = run_config(&cfg, dir.path(), false).unwrap();
        assert!(summary.metrics["best_overlap"].as_f64().unwrap() > 1.0 - 1e-8);
        let doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("bethe.json")).unwrap())
                .unwrap();
        let root = doc["roots"][0]["re"].as_f64().unwrap();
        assert_abs_diff_eq!(root, -0.11229977013692845, epsilon = 1e-8);
    }

    #[test]
    fn dynamics_task_writes_trajectory() {
        let text = r#"{"model": {"family": "xyz-field", "n": 4,
            "epsilon": [0.1, 0.3, 0.5, 0.7], "g": 0.1,
            "delta": {"re": 0.0, "im": 0.5}, "lambda": {"re": 0.0, "im": 0.5}},
            "task": {"kind": "dynamics", "mode": "cp", "t_max": 2.0, "dt": 0.5,
                     "initial": "0000"}}"#;
        let cfg = RunConfig::from_str(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_config(&cfg, dir.path(), false).unwrap();
        let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRAJECTORY_CSV_HEADER);
        // 5 samples x 4 sites
        assert_eq!(lines.count(), 20);
    }
}
