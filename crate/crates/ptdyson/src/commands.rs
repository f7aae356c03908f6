//! One function per subcommand. Each returns a report plus CSV tables and
//! never panics on module errors: those become failed checks.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ptdyson_core::algebra::fock::{fock_relation_deviation, fock_spectrum};
use ptdyson_core::algebra::{commutation_table, jacobi_defect, QuadraticOperator};
use ptdyson_core::dynamic_map::{
    advance, constants_from_jet, integrate, jet_from_coefficients, metric_min_eigenvalue, quasi_hermiticity_defect,
    quasi_hermiticity_residual, IntegrationConstants, Trajectory,
};
use ptdyson_core::model::{
    build_hamiltonian, classify, eigenfrequencies, energy, mode_frequencies, ModelParams, RegimeKind,
};
use ptdyson_core::schrodinger::{
    advance_coupled, ermakov_residual, evolve as evolve_coupled, fixed_point_start, norm_1d, product_state,
    pulled_back_decay, pull_back, quasi_norm, tdse_residual, Component, CoupledState, Grid1D, WaveSpec,
};
use ptdyson_core::dynamic_map::metric_factors;
use ptdyson_core::static_map::{solve_static, static_residual};
use ptdyson_core::Error;

use crate::config::ScenarioConfig;
use crate::report::{num, Bound, Check, RunReport, Table};

pub const TABLE_TOL: f64 = 1e-12;
pub const ORACLE_TOL: f64 = 1e-8;
pub const ORACLE_MARGIN: usize = 2;
pub const JACOBI_TOL: f64 = 1e-10;
pub const JACOBI_TRIPLES: usize = 100;
pub const STATIC_FREQ_TOL: f64 = 1e-10;
pub const LEVEL_TOL: f64 = 1e-6;
pub const REAL_SPECTRUM_TOL: f64 = 1e-8;
pub const COMPLEX_SPECTRUM_MIN: f64 = 0.1;
pub const CLOSED_FORM_TOL: f64 = 1e-6;
pub const QH_FOCK_TOL: f64 = 1e-6;
pub const QH_FOCK_SAMPLES: usize = 5;
pub const QH_FOCK_STEP: f64 = 1e-4;
pub const NORM_DRIFT_TOL: f64 = 1e-6;
pub const ERMAKOV_SAMPLES: usize = 11;
pub const ERMAKOV_STEP: f64 = 5e-4;
pub const TDSE_STEP: f64 = 1e-3;
pub const TDSE_RATIO_SLACK: f64 = 0.2;
pub const SWEEP_POINTS: usize = 41;
pub const WORKERS_ENV: &str = "PTDYSON_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    VerifyAlgebra,
    Classify,
    Static,
    SolveMap,
    VerifyMetric,
    Evolve,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::VerifyAlgebra,
        Command::Classify,
        Command::Static,
        Command::SolveMap,
        Command::VerifyMetric,
        Command::Evolve,
        Command::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyAlgebra => "verify-algebra",
            Command::Classify => "classify",
            Command::Static => "static",
            Command::SolveMap => "solve-map",
            Command::VerifyMetric => "verify-metric",
            Command::Evolve => "evolve",
            Command::Sweep => "sweep",
        }
    }

    /// Base file name for outputs, e.g. `solve_map`.
    pub fn file_stem(self) -> String {
        self.name().replace('-', "_")
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown subcommand {s}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: RunReport,
    pub table: Table,
}

pub fn run(cmd: Command, cfg: &ScenarioConfig) -> Outcome {
    let p = cfg.params().expect("validated config");
    match cmd {
        Command::VerifyAlgebra => verify_algebra(cfg),
        Command::Classify => classify_cmd(cfg, &p),
        Command::Static => static_cmd(&p, cfg),
        Command::SolveMap => solve_map(cfg, &p),
        Command::VerifyMetric => verify_metric(cfg, &p),
        Command::Evolve => evolve(cfg, &p),
        Command::Sweep => sweep(cfg, &p),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn random_operator(rng: &mut ChaCha8Rng) -> QuadraticOperator {
    let re = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let im = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    QuadraticOperator::from_matrix(re.zip_map(&im, C64::new))
}

pub fn verify_algebra(cfg: &ScenarioConfig) -> Outcome {
    let mut report = RunReport::new("verify-algebra");
    let mut table = Table::new(&["relation", "bracket_deviation", "fock_deviation"]);
    let rows = commutation_table();
    let mut oracle = 0.0f64;
    for rel in &rows {
        let dev = rel.deviation();
        let fdev = fock_relation_deviation(rel, cfg.fock.n, ORACLE_MARGIN);
        oracle = oracle.max(fdev);
        report.push(Check::at_most(&format!("table {}", rel.name), dev, TABLE_TOL));
        table.push(vec![rel.name.clone(), num(dev), num(fdev)]);
    }
    report.info(format!("relations={} fock_n={} margin={ORACLE_MARGIN}", rows.len(), cfg.fock.n));
    report.push(Check::at_most("fock-oracle", oracle, ORACLE_TOL));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let jac = (0..JACOBI_TRIPLES)
        .map(|_| {
            let (a, b, c) = (random_operator(&mut rng), random_operator(&mut rng), random_operator(&mut rng));
            jacobi_defect(&a, &b, &c)
        })
        .fold(0.0, f64::max);
    report.push(Check::at_most("jacobi", jac, JACOBI_TOL));
    Outcome { report, table }
}

/// Lowest `k` eigenvalues by real part.
fn lowest(mut ev: Vec<C64>, k: usize) -> Vec<C64> {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev.truncate(k);
    ev
}

pub fn classify_cmd(cfg: &ScenarioConfig, p: &ModelParams) -> Outcome {
    let mut report = RunReport::new("classify");
    let mut table = Table::new(&["n1", "n2", "predicted_re", "predicted_im", "fock_re", "fock_im"]);
    let regime = classify(p, p.default_tolerance());
    report.info(format!("regime={:?} delta={:?}", regime.kind, regime.delta));
    let s = eigenfrequencies(p);
    report.info(format!("omega_x={} omega_y={}", s.omega_x, s.omega_y));
    // levels with n1 + n2 <= 2
    let levels: Vec<(u32, u32)> = (0..=2u32).flat_map(|t| (0..=t).map(move |a| (t - a, a))).collect();
    let ev = match fock_spectrum(&build_hamiltonian(p), cfg.fock.spectrum) {
        Ok(ev) => lowest(ev, levels.len() + 4),
        Err(e) => {
            report.push(Check::failed("fock-levels", LEVEL_TOL, Bound::AtMost, e));
            return Outcome { report, table };
        }
    };
    let mut worst = 0.0f64;
    for &(a, b) in &levels {
        let e = energy(p, a, b);
        let near = *ev.iter().min_by(|x, y| (*x - e).norm().total_cmp(&(*y - e).norm())).unwrap();
        worst = worst.max((near - e).norm());
        table.push(vec![a.to_string(), b.to_string(), num(e.re), num(e.im), num(near.re), num(near.im)]);
    }
    let low = &ev[..levels.len()];
    let max_im = max_of(low.iter().map(|z| z.im.abs()));
    report.info(format!("fock_n={} max_abs_im_lowest={max_im:e}", cfg.fock.spectrum));
    match regime.kind {
        RegimeKind::Unbroken => {
            report.push(Check::at_most("fock-levels", worst, LEVEL_TOL));
            report.push(Check::at_most("spectrum-real", max_im, REAL_SPECTRUM_TOL));
        }
        RegimeKind::Broken => {
            report.push(Check::at_most("fock-levels", worst, LEVEL_TOL));
            report.push(Check::above("spectrum-complex", max_im, COMPLEX_SPECTRUM_MIN));
        }
        // defective at δ = 0: truncated eigenvalues split like √ε, so only report
        RegimeKind::Exceptional => report.info(format!("level_deviation={worst:e}")),
    }
    Outcome { report, table }
}

pub fn static_cmd(p: &ModelParams, cfg: &ScenarioConfig) -> Outcome {
    let mut report = RunReport::new("static");
    let mut table = Table::new(&["quantity", "value"]);
    let split = (p.m() * p.omega_minus_sq()).abs() - 2.0 * p.lambda().abs();
    let sol = match solve_static(p) {
        Ok(s) => s,
        Err(e) => {
            report.push(Check::failed("static-map-domain", 0.0, Bound::Above, format!("{e:?}: {e}")));
            return Outcome { report, table };
        }
    };
    report.push(Check::above("static-map-domain", split, 0.0));
    let resid = static_residual(p, sol.theta);
    report.push(Check::at_most("static-antiherm-residual", resid, cfg.tolerances.hermiticity));
    let modes = mode_frequencies(p);
    let dev = (sol.omega_x_sq - modes.omega_x_sq().re).abs().max((sol.omega_y_sq - modes.omega_y_sq().re).abs());
    report.push(Check::at_most("static-frequencies", dev, STATIC_FREQ_TOL));
    let control = static_residual(p, 0.5 * sol.theta);
    report.info(format!("theta={} half_theta_residual={control:e}", sol.theta));
    for (k, v) in [
        ("theta", sol.theta),
        ("omega_x_sq", sol.omega_x_sq),
        ("omega_y_sq", sol.omega_y_sq),
        ("antiherm_residual", resid),
        ("half_theta_residual", control),
    ] {
        table.push(vec![k.to_string(), num(v)]);
    }
    Outcome { report, table }
}

/// Integration constants used for the closed-form cross-check: those from
/// the config, or the ones reproducing the initial α_- jet.
fn cross_check_constants(
    cfg: &ScenarioConfig,
    p: &ModelParams,
    c0: &ptdyson_core::dynamic_map::MapCoefficients,
) -> ptdyson_core::Result<IntegrationConstants> {
    match cfg.integration_constants(p) {
        Some(k) => Ok(k),
        None => constants_from_jet(&jet_from_coefficients(c0, p), p),
    }
}

fn trajectory(cfg: &ScenarioConfig, p: &ModelParams, report: &mut RunReport) -> Option<(Trajectory, IntegrationConstants)> {
    let run = || {
        let c0 = cfg.initial_coefficients(p)?;
        let k = cross_check_constants(cfg, p, &c0)?;
        Ok::<_, Error>((integrate(&c0, p, &cfg.window(), cfg.tolerances.ode, Some(&k))?, k))
    };
    match run() {
        Ok(x) => Some(x),
        Err(e) => {
            report.push(Check::failed("integrate", 0.0, Bound::AtMost, e));
            None
        }
    }
}

pub fn solve_map(cfg: &ScenarioConfig, p: &ModelParams) -> Outcome {
    let mut report = RunReport::new("solve-map");
    let mut table = Table::new(&[
        "t",
        "alpha_minus",
        "theta_plus",
        "alpha_plus",
        "theta_minus",
        "M_plus",
        "M_minus",
        "omega_plus_sq",
        "omega_minus_sq",
        "g",
        "antiherm_residual",
        "metric_min_eig",
    ]);
    let Some((traj, k)) = trajectory(cfg, p, &mut report) else {
        return Outcome { report, table };
    };
    report.info(format!("integration_constants={:?}", k.c));
    let mut min_eig = f64::INFINITY;
    let mut eig_err = None;
    for s in &traj.samples {
        let c = &s.coefficients;
        let eig = metric_min_eigenvalue(c, cfg.fock.n);
        match &eig {
            Ok(v) => min_eig = min_eig.min(*v),
            Err(e) => {
                eig_err.get_or_insert((c.t, e.clone()));
            }
        }
        let hp = &s.params;
        table.push(vec![
            num(c.t),
            num(c.alpha_minus),
            num(c.theta_plus),
            num(c.alpha_plus),
            num(c.theta_minus),
            num(hp.m_plus),
            num(hp.m_minus),
            num(hp.omega_plus_sq),
            num(hp.omega_minus_sq),
            num(hp.g),
            num(s.antiherm_residual),
            opt(eig.ok()),
        ]);
    }
    let resid = max_of(traj.samples.iter().map(|s| s.antiherm_residual));
    report.push(Check::at_most("tdde-antiherm-residual", resid, cfg.tolerances.hermiticity));
    let mismatch = max_of(traj.samples.iter().filter_map(|s| s.closed_form_mismatch));
    report.push(Check::at_most("closed-form-agreement", mismatch, CLOSED_FORM_TOL));
    let positive = Check::above("metric-positive", min_eig, 0.0);
    report.push(match eig_err {
        Some((t, e)) => positive.with_detail(format!("t={t}: {e}")).failed_anyway(),
        None => positive,
    });
    report.info(format!("accepted_steps={} max_step_residual={:e}", traj.dense.accepted_steps(), traj.max_step_residual));
    Outcome { report, table }
}

trait FailedAnyway {
    fn failed_anyway(self) -> Self;
}

impl FailedAnyway for Check {
    fn failed_anyway(mut self) -> Self {
        self.passed = false;
        self
    }
}

/// Evenly spread indices into 0..n, at most `k` of them.
fn spread(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut v: Vec<usize> = (0..k).map(|i| i * (n - 1) / (k - 1)).collect();
    v.dedup();
    v
}

pub fn verify_metric(cfg: &ScenarioConfig, p: &ModelParams) -> Outcome {
    let mut report = RunReport::new("verify-metric");
    let (n_lo, n_hi) = (cfg.fock.work, cfg.fock.work + 8);
    let lo_name = format!("fock_residual_n{n_lo}");
    let hi_name = format!("fock_residual_n{n_hi}");
    let mut table = Table::new(&["t", "metric_min_eig", "qh_defect", &lo_name, &hi_name]);
    let Some((traj, _)) = trajectory(cfg, p, &mut report) else {
        return Outcome { report, table };
    };
    let oracle_at = spread(traj.samples.len(), QH_FOCK_SAMPLES);
    let tol = cfg.tolerances.ode.min(1e-12);
    let mut min_eig = f64::INFINITY;
    let mut defect = 0.0f64;
    let mut first_err: Option<String> = None;
    let (mut converged, mut worst_converged) = (0usize, 0.0f64);
    for (i, s) in traj.samples.iter().enumerate() {
        let c = &s.coefficients;
        let eig = metric_min_eigenvalue(c, cfg.fock.n);
        let qh = quasi_hermiticity_defect(c, p);
        let oracle = if oracle_at.contains(&i) {
            let pair = (|| {
                let before = advance(c, p, -QH_FOCK_STEP, tol)?;
                let after = advance(c, p, QH_FOCK_STEP, tol)?;
                let r = |n| quasi_hermiticity_residual(p, &before, c, &after, QH_FOCK_STEP, n, cfg.fock.keep);
                Ok::<_, Error>((r(n_lo)?, r(n_hi)?))
            })();
            match pair {
                Ok((a, b)) => {
                    if (a - b).abs() <= QH_FOCK_TOL {
                        converged += 1;
                        worst_converged = worst_converged.max(b);
                    }
                    report.info(format!("fock oracle t={}: N={n_lo} {a:e}, N={n_hi} {b:e}", c.t));
                    Some((a, b))
                }
                Err(e) => {
                    report.info(format!("fock oracle t={}: {e}", c.t));
                    None
                }
            }
        } else {
            None
        };
        for r in [&eig, &qh] {
            if let Err(e) = r {
                first_err.get_or_insert(format!("t={}: {e}", c.t));
            }
        }
        if let Ok(v) = eig {
            min_eig = min_eig.min(v);
        }
        if let Ok(v) = qh {
            defect = defect.max(v);
        }
        table.push(vec![
            num(c.t),
            opt(eig.as_ref().ok().copied()),
            opt(qh.as_ref().ok().copied()),
            opt(oracle.map(|x| x.0)),
            opt(oracle.map(|x| x.1)),
        ]);
    }
    let (mut pos, mut qhc) = (
        Check::above("metric-positive", min_eig, 0.0),
        Check::at_most("quasi-hermiticity", defect, cfg.tolerances.hermiticity),
    );
    if let Some(e) = first_err {
        pos = pos.with_detail(&e).failed_anyway();
        qhc = qhc.with_detail(&e).failed_anyway();
    }
    report.push(pos);
    report.push(qhc);
    let mut oracle = Check::at_most("quasi-hermiticity-fock", worst_converged, QH_FOCK_TOL)
        .with_detail(format!("{converged} of {} oracle samples converged in N", oracle_at.len()));
    if converged == 0 {
        oracle = oracle.failed_anyway();
    }
    report.push(oracle);
    Outcome { report, table }
}

/// TDSE residual of the (1, 0) product state at `s` on a square grid.
pub fn tdse_at(s: &CoupledState, p: &ModelParams, extent: f64, points: usize, tol: f64) -> ptdyson_core::Result<f64> {
    let g = Grid1D::new(-extent, extent, points)?;
    let state = |dt: f64| {
        let x = advance_coupled(s, p, dt, tol)?;
        product_state(g, g, 1, 0, &x, p)
    };
    let hp = ptdyson_core::dynamic_map::hermitian_params(&s.coefficients, p)?;
    tdse_residual(&state(-TDSE_STEP)?, &state(0.0)?, &state(TDSE_STEP)?, TDSE_STEP, &hp)
}

pub fn evolve(cfg: &ScenarioConfig, p: &ModelParams) -> Outcome {
    let mut report = RunReport::new("evolve");
    let mut table = Table::new(&[
        "t",
        "rho_minus",
        "rho_dot_minus",
        "rho_plus",
        "rho_dot_plus",
        "phase_integral_minus",
        "phase_integral_plus",
        "norm_minus",
        "norm_plus",
        "quasi_norm",
        "pulled_back_decay",
    ]);
    let tol = cfg.tolerances.ode;
    let run = || {
        let c0 = cfg.initial_coefficients(p)?;
        let s0 = fixed_point_start(&c0, p)?;
        evolve_coupled(&s0, p, &cfg.window(), tol)
    };
    let ev = match run() {
        Ok(ev) => ev,
        Err(e) => {
            report.push(Check::failed("evolve", 0.0, Bound::AtMost, e));
            return Outcome { report, table };
        }
    };
    let samples = &ev.samples;
    let fine = Grid1D::new(-cfg.grid.fine_extent, cfg.grid.fine_extent, cfg.grid.fine_points);
    let coarse = Grid1D::new(-cfg.grid.extent, cfg.grid.extent, cfg.grid.points);
    let (fine, coarse) = match (fine, coarse) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            report.push(Check::failed("grid", 0.0, Bound::AtMost, e));
            return Outcome { report, table };
        }
    };

    // Ermakov residual at spread samples
    let etol = tol.min(1e-12);
    let mut erm = Ok(0.0f64);
    for i in spread(samples.len(), ERMAKOV_SAMPLES) {
        erm = erm.and_then(|w| ermakov_residual(&samples[i], p, ERMAKOV_STEP, etol).map(|r| w.max(r)));
    }
    report.push(match erm {
        Ok(v) => Check::at_most("ermakov-residual", v, cfg.tolerances.ermakov),
        Err(e) => Check::failed("ermakov-residual", cfg.tolerances.ermakov, Bound::AtMost, e),
    });

    let mut norms0: Option<[f64; 2]> = None;
    let mut drift = 0.0f64;
    let mut q0: Option<f64> = None;
    let mut qdrift = 0.0f64;
    let mut q_err: Option<String> = None;
    let mut q_ok = 0usize;
    let mut bad_decay = Vec::new();
    for s in samples {
        let c = &s.coefficients;
        let hp = match ptdyson_core::dynamic_map::hermitian_params(c, p) {
            Ok(h) => h,
            Err(e) => {
                q_err.get_or_insert(format!("t={}: {e}", c.t));
                continue;
            }
        };
        let mut norms = [0.0; 2];
        for (k, comp) in [Component::Minus, Component::Plus].into_iter().enumerate() {
            let spec = WaveSpec::new(0, comp).unwrap();
            norms[k] = norm_1d(&spec, s.state(comp), &hp, &fine);
        }
        let n0 = *norms0.get_or_insert(norms);
        drift = drift.max((norms[0] / n0[0] - 1.0).abs()).max((norms[1] / n0[1] - 1.0).abs());
        let decay = pulled_back_decay(s, p);
        if let Ok(d) = decay {
            if d <= 0.0 {
                bad_decay.push(c.t);
            }
        }
        let q = product_state(coarse, coarse, 0, 0, s, p)
            .and_then(|phi| pull_back(c, &phi))
            .and_then(|psi| quasi_norm(&psi, &metric_factors(c)));
        let qv = match q {
            Ok(v) => {
                let base = *q0.get_or_insert(v);
                qdrift = qdrift.max((v / base - 1.0).abs());
                q_ok += 1;
                Some(v)
            }
            Err(e) => {
                q_err.get_or_insert(format!("t={}: {e:?}", c.t));
                None
            }
        };
        table.push(vec![
            num(c.t),
            num(s.minus.rho),
            num(s.minus.rho_dot),
            num(s.plus.rho),
            num(s.plus.rho_dot),
            num(s.phase_integral[0]),
            num(s.phase_integral[1]),
            num(norms[0]),
            num(norms[1]),
            opt(qv),
            opt(decay.ok()),
        ]);
    }
    report.push(Check::at_most("norm-drift-1d", drift, NORM_DRIFT_TOL));

    // second-order convergence in the grid spacing at the middle sample
    let mid = &samples[samples.len() / 2];
    let n = cfg.grid.fine_points;
    let res = tdse_at(mid, p, cfg.grid.fine_extent, n, etol)
        .and_then(|a| tdse_at(mid, p, cfg.grid.fine_extent, 2 * n - 1, etol).map(|b| (a, b)));
    let tdse = match res {
        Ok((a, b)) => {
            report.info(format!("tdse t={} points={n}: {a:e}, points={}: {b:e}", mid.t(), 2 * n - 1));
            Check::ratio("tdse-convergence", a / b, 4, TDSE_RATIO_SLACK)
        }
        Err(e) => Check::failed("tdse-convergence", TDSE_RATIO_SLACK, Bound::RatioNear(4), e),
    };
    report.push(tdse);

    let mut qc = Check::at_most("quasi-norm", qdrift, cfg.tolerances.grid);
    if let Some(e) = q_err {
        report.info(format!("quasi-norm drift over the {q_ok} of {} samples that evaluated: {qdrift:e}", samples.len()));
        qc = qc.with_detail(format!("first failure {e}")).failed_anyway();
    }
    report.push(qc);
    if let (Some(first), Some(last)) = (bad_decay.first(), bad_decay.last()) {
        report.info(format!(
            "pulled-back ground state is not square integrable at {} samples (t in [{first}, {last}])",
            bad_decay.len()
        ));
    }
    Outcome { report, table }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub delta: f64,
    pub regime: RegimeKind,
    pub static_residual: Option<f64>,
    pub antiherm_residual: Option<f64>,
    pub qh_defect: Option<f64>,
    pub metric_min_eig: Option<f64>,
    /// Time at which integration stopped, when it did.
    pub breakdown_t: Option<f64>,
    pub status: String,
}

pub fn sweep_point(cfg: &ScenarioConfig, base: &ModelParams, lambda: f64) -> SweepPoint {
    let p = ModelParams::new(base.m(), base.omega_x(), base.omega_y(), lambda).expect("finite lambda");
    let regime = classify(&p, p.default_tolerance());
    let static_residual = solve_static(&p).ok().map(|s| static_residual(&p, s.theta));
    let run = || {
        let c0 = cfg.initial_coefficients(&p)?;
        let traj = integrate(&c0, &p, &cfg.window(), cfg.tolerances.ode, None)?;
        let resid = max_of(traj.samples.iter().map(|s| s.antiherm_residual));
        let mut qh = 0.0f64;
        for s in &traj.samples {
            qh = qh.max(quasi_hermiticity_defect(&s.coefficients, &p)?);
        }
        let last = &traj.samples.last().unwrap().coefficients;
        Ok::<_, Error>((resid, qh, metric_min_eigenvalue(last, cfg.fock.n)?))
    };
    let (antiherm_residual, qh_defect, metric_min_eig, breakdown_t, status) = match run() {
        Ok((a, q, m)) => (Some(a), Some(q), Some(m), None, "ok".to_string()),
        Err(e) => {
            let t = match e {
                Error::StepFailure { t, .. } => Some(t),
                _ => None,
            };
            (None, None, None, t, e.to_string())
        }
    };
    SweepPoint {
        lambda,
        delta: regime.delta,
        regime: regime.kind,
        static_residual,
        antiherm_residual,
        qh_defect,
        metric_min_eig,
        breakdown_t,
        status,
    }
}

/// λ from 0 to twice the exceptional coupling m|Ω_-²|/2 (or to 2|λ| when
/// the bare frequencies coincide).
pub fn sweep_lambdas(p: &ModelParams) -> Vec<f64> {
    let ep = p.m() * p.omega_minus_sq().abs() / 2.0;
    let top = 2.0 * if ep > 0.0 { ep } else { p.lambda().abs().max(1.0) };
    (0..SWEEP_POINTS).map(|k| top * k as f64 / (SWEEP_POINTS - 1) as f64).collect()
}

fn workers() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0)
}

pub fn sweep(cfg: &ScenarioConfig, p: &ModelParams) -> Outcome {
    let mut report = RunReport::new("sweep");
    let mut table = Table::new(&[
        "lambda",
        "delta",
        "regime",
        "static_residual",
        "max_antiherm_residual",
        "max_qh_defect",
        "metric_min_eig_end",
        "breakdown_t",
        "status",
    ]);
    let lambdas = sweep_lambdas(p);
    let compute = || lambdas.par_iter().map(|&l| sweep_point(cfg, p, l)).collect::<Vec<_>>();
    let points = match workers().map(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build()) {
        Some(Ok(pool)) => pool.install(compute),
        _ => compute(),
    };
    for pt in &points {
        table.push(vec![
            num(pt.lambda),
            num(pt.delta),
            format!("{:?}", pt.regime),
            opt(pt.static_residual),
            opt(pt.antiherm_residual),
            opt(pt.qh_defect),
            opt(pt.metric_min_eig),
            opt(pt.breakdown_t),
            pt.status.clone(),
        ]);
    }
    let count = |k: RegimeKind| points.iter().filter(|x| x.regime == k).count();
    let (unbroken, broken) = (count(RegimeKind::Unbroken), count(RegimeKind::Broken));
    report.info(format!(
        "points={} unbroken={unbroken} broken={broken} exceptional={}",
        points.len(),
        count(RegimeKind::Exceptional)
    ));
    report.push(Check::above("crosses-exceptional-point", (unbroken.min(broken)) as f64, 0.0));
    // small-amplitude maps exist globally only while PT symmetry is unbroken;
    // broken-regime trajectories may leave the chart in finite time
    let failed: Vec<&SweepPoint> =
        points.iter().filter(|x| x.status != "ok" && x.regime == RegimeKind::Unbroken).collect();
    let mut done = Check::at_most("unbroken-points-integrated", failed.len() as f64, 0.0);
    if let Some(f) = failed.first() {
        done = done.with_detail(format!("lambda={}: {}", f.lambda, f.status));
    }
    report.push(done);
    let stopped: Vec<String> = points
        .iter()
        .filter(|x| x.regime != RegimeKind::Unbroken && x.status != "ok")
        .map(|x| format!("{}@{}", x.lambda, opt(x.breakdown_t)))
        .collect();
    if !stopped.is_empty() {
        report.info(format!("non-unbroken points that stopped early (lambda@t): {}", stopped.join(" ")));
    }
    let resid = max_of(points.iter().filter_map(|x| x.antiherm_residual));
    report.push(Check::at_most("tdde-antiherm-residual", resid, cfg.tolerances.hermiticity));
    let qh = max_of(points.iter().filter_map(|x| x.qh_defect));
    report.push(Check::at_most("quasi-hermiticity", qh, cfg.tolerances.hermiticity));
    Outcome { report, table }
}
