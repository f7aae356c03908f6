//! Time-dependent Dyson map η(t) = e^{α_- L_-} e^{θ_+ J_+} e^{α_+ L_+} e^{θ_- J_-}.
//!
//! The coefficient equations, the α_- jet and its closed forms, recovery of
//! the other three coefficients from the jet, the Hermitian counterpart
//! h(t) and the metric ρ = η†η.

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix4, SMatrix, SVector, Vector4};
use num_complex::Complex64 as C64;


use crate::algebra::fock::{fock_product, fock_sparse};
use crate::algebra::{adjoint_chain, anti_hermitian_residual, gauge_term, generator, Coord, FlowFactor, GeneratorId, QuadraticOperator};
use crate::dual::{Dual, Real};
use crate::error::{Error, Result};
use crate::linalg::{expmv, SparseMatrix};
use crate::model::{build_hamiltonian, classify, ModelParams, RegimeKind};
use crate::ode::{solve, DenseSolution, OdeOptions};

const CHART_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCoefficients {
    pub t: f64,
    pub alpha_minus: f64,
    pub theta_plus: f64,
    pub alpha_plus: f64,
    pub theta_minus: f64,
}

impl MapCoefficients {
    pub fn new(t: f64, alpha_minus: f64, theta_plus: f64, alpha_plus: f64, theta_minus: f64) -> Self {
        MapCoefficients { t, alpha_minus, theta_plus, alpha_plus, theta_minus }
    }

    /// (α_-, θ_+, α_+, θ_-)
    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha_minus, self.theta_plus, self.alpha_plus, self.theta_minus]
    }

    pub fn from_array(t: f64, a: [f64; 4]) -> Self {
        MapCoefficients::new(t, a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// (α̇_-, θ̇_+, α̇_+, θ̇_-)
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientRates {
    pub alpha_minus: f64,
    pub theta_plus: f64,
    pub alpha_plus: f64,
    pub theta_minus: f64,
}

impl CoefficientRates {
    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha_minus, self.theta_plus, self.alpha_plus, self.theta_minus]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        CoefficientRates { alpha_minus: a[0], theta_plus: a[1], alpha_plus: a[2], theta_minus: a[3] }
    }

    pub fn zero() -> Self {
        Self::from_array([0.0; 4])
    }
}

/// α_- and its first three time derivatives at time t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaJet {
    pub t: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl AlphaJet {
    /// The fourth derivative implied by α'''' + 2Ω_+²α'' + δα = 0.
    pub fn fourth_derivative(&self, p: &ModelParams) -> f64 {
        -2.0 * p.omega_plus_sq() * self.a2 - p.delta() * self.a0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConstants {
    pub kind: RegimeKind,
    pub c: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Sign choices s₁ (α_+) and s₂ (θ_-) in the recovery formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Branches {
    pub s1: Sign,
    pub s2: Sign,
}

impl Branches {
    pub const ALL: [Branches; 4] = [
        Branches { s1: Sign::Plus, s2: Sign::Plus },
        Branches { s1: Sign::Plus, s2: Sign::Minus },
        Branches { s1: Sign::Minus, s2: Sign::Plus },
        Branches { s1: Sign::Minus, s2: Sign::Minus },
    ];

    pub fn new(s1: Sign, s2: Sign) -> Self {
        Branches { s1, s2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryIntermediates {
    pub beta: f64,
    pub gamma: f64,
    pub branches: Branches,
}

/// Parameters of h(t) = h_{x,-} + h_{y,+}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianOscParams {
    pub m_plus: f64,
    pub m_minus: f64,
    pub omega_plus_sq: f64,
    pub omega_minus_sq: f64,
    pub g: f64,
    pub theta: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

/// Time derivatives of the h(t) parameters along the coefficient flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianOscRates {
    pub m_plus: f64,
    pub m_minus: f64,
    pub omega_plus_sq: f64,
    pub omega_minus_sq: f64,
    pub g: f64,
}

fn chart<T: Real>(c: &[T; 4]) -> Result<()> {
    let [am, tp, ap, _] = *c;
    if tp.cos().value().abs() < CHART_EPS {
        return Err(Error::SingularConfiguration("cos theta_+ vanishes"));
    }
    if (tp.cos().scale(2.0) + ap * am).value().abs() < CHART_EPS {
        return Err(Error::SingularConfiguration("2 cos theta_+ + alpha_+ alpha_- vanishes"));
    }
    if c.iter().any(|v| !v.value().is_finite()) {
        return Err(Error::SingularConfiguration("non-finite coefficients"));
    }
    Ok(())
}

fn rhs_generic<T: Real>(c: &[T; 4], p: &ModelParams) -> Result<[T; 4]> {
    chart(c)?;
    let [am, tp, ap, tm] = *c;
    let m = p.m();
    let big = T::cst(2.0 * m * m * p.omega_plus_sq()) - ap * ap;
    let split = p.m() * p.omega_minus_sq();
    let lam = p.lambda();
    let d = tp.cos().scale(2.0) + ap * am;
    let am_dot = tp.sin().scale(-2.0 / m);
    let tp_dot = am * big / tp.cos().scale(4.0 * m) - ap.scale(1.0 / m);
    let ap_dot = big * tp.tan().scale(1.0 / (2.0 * m)) + tm.sinh().scale(split) - tm.cosh().scale(2.0 * lam);
    let tm_dot = am * (tm.sinh().scale(2.0 * lam) - tm.cosh().scale(split)) / d;
    Ok([am_dot, tp_dot, ap_dot, tm_dot])
}

/// Right-hand side of the coefficient equations that keep h(t) Hermitian.
pub fn ode_rhs(c: &MapCoefficients, p: &ModelParams) -> Result<CoefficientRates> {
    rhs_generic::<f64>(&c.to_array(), p).map(CoefficientRates::from_array)
}

/// Flow factors of η in product order L_-, J_+, L_+, J_-.
pub fn dyson_factors(c: &MapCoefficients) -> [FlowFactor; 4] {
    [
        FlowFactor::new(GeneratorId::Lm, c.alpha_minus),
        FlowFactor::new(GeneratorId::Jp, c.theta_plus),
        FlowFactor::new(GeneratorId::Lp, c.alpha_plus),
        FlowFactor::new(GeneratorId::Jm, c.theta_minus),
    ]
}

/// Seven factors whose product is ρ = η†η.
pub fn metric_factors(c: &MapCoefficients) -> [FlowFactor; 7] {
    [
        FlowFactor::new(GeneratorId::Jm, c.theta_minus),
        FlowFactor::new(GeneratorId::Lp, c.alpha_plus),
        FlowFactor::new(GeneratorId::Jp, c.theta_plus),
        FlowFactor::new(GeneratorId::Lm, 2.0 * c.alpha_minus),
        FlowFactor::new(GeneratorId::Jp, c.theta_plus),
        FlowFactor::new(GeneratorId::Lp, c.alpha_plus),
        FlowFactor::new(GeneratorId::Jm, c.theta_minus),
    ]
}

/// η H η^{-1} + i(∂_t η)η^{-1}.
pub fn evaluate_tdde(c: &MapCoefficients, rates: &CoefficientRates, p: &ModelParams) -> Result<QuadraticOperator> {
    if !c.is_finite() || rates.to_array().iter().any(|r| !r.is_finite()) {
        return Err(Error::SingularConfiguration("non-finite coefficients"));
    }
    let f = dyson_factors(c);
    Ok(adjoint_chain(&f, &build_hamiltonian(p)) + gauge_term(&f, &rates.to_array())?)
}

/// Solves Im[evaluate_tdde] = 0 for the four rates by least squares over
/// the ten independent entries. Returns the rates and the largest
/// remaining imaginary entry.
pub fn hermiticity_rates(c: &MapCoefficients, p: &ModelParams) -> Result<(CoefficientRates, f64)> {
    let base = evaluate_tdde(c, &CoefficientRates::zero(), p)?;
    let upper = |q: &QuadraticOperator| -> SVector<f64, 10> {
        let im = q.imag_part();
        let mut v = SVector::<f64, 10>::zeros();
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                v[k] = im[(i, j)];
                k += 1;
            }
        }
        v
    };
    let b = -upper(&base);
    let f = dyson_factors(c);
    let mut a = SMatrix::<f64, 10, 4>::zeros();
    for k in 0..4 {
        let mut r = [0.0; 4];
        r[k] = 1.0;
        a.set_column(k, &upper(&gauge_term(&f, &r)?));
    }
    let normal = a.transpose() * a;
    let inv = normal
        .try_inverse()
        .ok_or(Error::SingularConfiguration("rate equations are degenerate"))?;
    let x = inv * (a.transpose() * b);
    let rates = CoefficientRates::from_array([x[0], x[1], x[2], x[3]]);
    let resid = evaluate_tdde(c, &rates, p)?.imag_part().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok((rates, resid))
}

fn jet_generic<T: Real>(c: &[T; 4], p: &ModelParams) -> [T; 4] {
    let [am, tp, ap, tm] = *c;
    let m = p.m();
    let op2 = p.omega_plus_sq();
    let split = m * p.omega_minus_sq();
    let d = tp.cos().scale(2.0) + ap * am;
    let a1 = tp.sin().scale(-2.0 / m);
    let a2 = ap * (tp.cos().scale(4.0) + ap * am).scale(1.0 / (2.0 * m * m)) - am.scale(op2);
    let a3 = (tm.sinh().scale(split) - tm.cosh().scale(2.0 * p.lambda())) * d.scale(1.0 / (m * m))
        + tp.sin().scale(4.0 * op2 / m);
    [am, a1, a2, a3]
}

/// The α_- jet implied by the coefficients through the first-order system.
pub fn jet_from_coefficients(c: &MapCoefficients, p: &ModelParams) -> AlphaJet {
    let [a0, a1, a2, a3] = jet_generic::<f64>(&c.to_array(), p);
    AlphaJet { t: c.t, a0, a1, a2, a3 }
}

/// (Δ_+, Δ_-) for δ > 0, (Δ̃_+, Δ̃_-) for δ < 0 and (√2 Ω_+, 0) at δ = 0.
pub fn regime_frequencies(p: &ModelParams) -> (f64, f64) {
    let op2 = p.omega_plus_sq();
    let inner = 2.0
        * (p.omega_x() * p.omega_x() * p.omega_y() * p.omega_y() + p.lambda() * p.lambda() / (p.m() * p.m())).sqrt();
    match classify(p, p.default_tolerance()).kind {
        RegimeKind::Unbroken => ((op2 + inner).sqrt(), (op2 - inner).max(0.0).sqrt()),
        RegimeKind::Broken => ((inner + op2).sqrt(), (inner - op2).max(0.0).sqrt()),
        RegimeKind::Exceptional => ((2.0 * op2).sqrt(), 0.0),
    }
}

// Jets (value and three derivatives) of the four basis solutions.
fn basis_jets(kind: RegimeKind, p: &ModelParams, t: f64) -> [[f64; 4]; 4] {
    let (wp, wm) = regime_frequencies(p);
    let trig = |w: f64| {
        let (s, c) = num_traits::Float::sin_cos(w * t);
        [[c, -w * s, -w * w * c, w * w * w * s], [s, w * c, -w * w * s, -w * w * w * c]]
    };
    let hyp = |w: f64| {
        let (s, c) = ((w * t).sinh(), (w * t).cosh());
        [[c, w * s, w * w * c, w * w * w * s], [s, w * c, w * w * s, w * w * w * c]]
    };
    let [b1, b2] = trig(wp);
    let [b3, b4] = match kind {
        RegimeKind::Unbroken => trig(wm),
        RegimeKind::Broken => hyp(wm),
        RegimeKind::Exceptional => [[t, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
    };
    [b1, b2, b3, b4]
}

/// Closed-form α_- jet from integration constants.
pub fn alpha_closed_form(k: &IntegrationConstants, p: &ModelParams, t: f64) -> Result<AlphaJet> {
    let found = classify(p, p.default_tolerance()).kind;
    if found != k.kind {
        return Err(Error::RegimeMismatch { expected: k.kind, found });
    }
    let b = basis_jets(k.kind, p, t);
    let mut d = [0.0; 4];
    for (j, bj) in b.iter().enumerate() {
        for i in 0..4 {
            d[i] += k.c[j] * bj[i];
        }
    }
    Ok(AlphaJet { t, a0: d[0], a1: d[1], a2: d[2], a3: d[3] })
}

/// Integration constants whose closed form reproduces `jet` at jet.t.
pub fn constants_from_jet(jet: &AlphaJet, p: &ModelParams) -> Result<IntegrationConstants> {
    let kind = classify(p, p.default_tolerance()).kind;
    let b = basis_jets(kind, p, jet.t);
    let m = Matrix4::from_fn(|i, j| b[j][i]);
    let rhs = Vector4::new(jet.a0, jet.a1, jet.a2, jet.a3);
    let c = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularConfiguration("basis jets are degenerate"))?;
    Ok(IntegrationConstants { kind, c: [c[0], c[1], c[2], c[3]] })
}

fn recover_generic<T: Real>(jet: &[T; 4], p: &ModelParams, br: Branches) -> Result<([T; 4], T, T)> {
    let [a0, a1, a2, a3] = *jet;
    let m = p.m();
    let op2 = p.omega_plus_sq();
    let ma1 = a1.scale(m);
    if ma1.value().abs() > 2.0 {
        return Err(Error::ThetaPlusDomain { m_alpha_dot: ma1.value() });
    }
    if a0.value() == 0.0 {
        return Err(Error::AlphaMinusZero);
    }
    let denom = m * p.omega_minus_sq() - 2.0 * p.lambda();
    if denom.abs() <= 1e-14 * (m * p.omega_plus_sq()).max(2.0 * p.lambda().abs()) {
        return Err(Error::ExceptionalDenominator);
    }
    let theta_plus = -(ma1.scale(0.5)).asin();
    let beta_sq = T::cst(4.0) + (a0 * a0).scale(2.0 * m * m * op2) - (a1 * a1 - (a0 * a2).scale(2.0)).scale(m * m);
    if beta_sq.value() < 0.0 {
        return Err(Error::BetaRadicand { value: beta_sq.value() });
    }
    let beta = beta_sq.sqrt();
    let two_cos = (T::cst(4.0) - ma1 * ma1).sqrt();
    let alpha_plus = match br.s1 {
        // (β − 2cos θ_+)/α_- without the cancellation
        Sign::Plus => (a0.scale(op2) + a2).scale(2.0 * m * m) / (beta + two_cos),
        Sign::Minus => -(two_cos + beta) / a0,
    };
    let gamma = a1.scale(2.0 * op2) + a3;
    let s1 = br.s1.value();
    let q = (gamma * gamma).scale(m * m) + beta_sq.scale(p.delta());
    if q.value() < 0.0 {
        return Err(Error::LogDomain { value: q.value() });
    }
    let arg = (gamma.scale(s1 * m * m) + q.sqrt().scale(br.s2.value() * m)) / beta.scale(denom);
    if !(arg.value() > 0.0) {
        return Err(Error::LogDomain { value: arg.value() });
    }
    Ok(([a0, theta_plus, alpha_plus, arg.ln()], beta, gamma))
}

/// θ_+, α_+ and θ_- from the α_- jet on the chosen branches.
pub fn recover_with_intermediates(
    jet: &AlphaJet,
    p: &ModelParams,
    branches: Branches,
) -> Result<(MapCoefficients, RecoveryIntermediates)> {
    let (c, beta, gamma) = recover_generic::<f64>(&[jet.a0, jet.a1, jet.a2, jet.a3], p, branches)?;
    Ok((MapCoefficients::from_array(jet.t, c), RecoveryIntermediates { beta, gamma, branches }))
}

pub fn recover(jet: &AlphaJet, p: &ModelParams, branches: Branches) -> Result<MapCoefficients> {
    recover_with_intermediates(jet, p, branches).map(|(c, _)| c)
}

/// max |d/dt recover(jet) − ode_rhs(recover(jet))| with the time derivative
/// taken exactly through the fourth-order equation.
pub fn recovery_residual(jet: &AlphaJet, p: &ModelParams, branches: Branches) -> Result<f64> {
    let a4 = jet.fourth_derivative(p);
    let dj = [
        Dual::new(jet.a0, jet.a1),
        Dual::new(jet.a1, jet.a2),
        Dual::new(jet.a2, jet.a3),
        Dual::new(jet.a3, a4),
    ];
    let (c, _, _) = recover_generic(&dj, p, branches)?;
    let vals = c.map(|d| d.re);
    let rhs = rhs_generic::<f64>(&vals, p)?;
    Ok((0..4).fold(0.0, |m: f64, i| m.max((c[i].eps - rhs[i]).abs())))
}

/// Coefficients (0, 0, 0, θ_-*) at the static fixed point, tanh θ_-* = 2λ/(mΩ_-²).
/// Zero θ_- outside the unbroken regime.
pub fn static_fixed_point(p: &ModelParams, t: f64) -> MapCoefficients {
    let r = 2.0 * p.lambda() / (p.m() * p.omega_minus_sq());
    let tm = if p.lambda() == 0.0 || !(r.abs() < 1.0) { 0.0 } else { num_traits::Float::atanh(r) };
    MapCoefficients::new(t, 0.0, 0.0, 0.0, tm)
}

/// Picks (s₁, s₂) at a trajectory start.
///
/// Every admissible branch satisfies the first-order system, so among the
/// branches whose recovery residual is within 10× of the best (or 1e-7)
/// the one nearest to `reference` wins. Without a reference the static
/// fixed point is used.
pub fn select_branches(jet: &AlphaJet, p: &ModelParams, reference: Option<&MapCoefficients>) -> Result<Branches> {
    let fallback = static_fixed_point(p, jet.t);
    let reference = reference.unwrap_or(&fallback).to_array();
    let mut first_err = None;
    let mut cands = Vec::new();
    for br in Branches::ALL {
        match recover(jet, p, br).and_then(|c| recovery_residual(jet, p, br).map(|r| (c, r))) {
            Ok((c, r)) => cands.push((br, c, r)),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = cands.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
    let cutoff = (10.0 * best).max(1e-7);
    cands
        .iter()
        .filter(|x| x.2 <= cutoff)
        .min_by(|x, y| {
            let dist = |c: &MapCoefficients| {
                c.to_array().iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            };
            dist(&x.1).partial_cmp(&dist(&y.1)).unwrap()
        })
        .map(|x| x.0)
        .ok_or_else(|| first_err.unwrap_or(Error::SingularConfiguration("no admissible branch")))
}

fn hermitian_generic<T: Real>(c: &[T; 4], p: &ModelParams) -> Result<[T; 8]> {
    chart(c)?;
    let [am, tp, ap, tm] = *c;
    let m = p.m();
    let split = m * p.omega_minus_sq();
    let d = tp.cos().scale(2.0) + ap * am;
    let theta = (tm.sinh().scale(2.0 * p.lambda()) - tm.cosh().scale(split)) / d;
    let base = (T::cst(2.0 * m * m * p.omega_plus_sq()) - ap * ap) / tp.cos().scale(16.0 * m);
    let gp = base + (theta * tp.cos()).scale(0.25);
    let gm = base - (theta * tp.cos()).scale(0.25);
    let den_p = tp.cos() + (am * am * gp).scale(m);
    let den_m = tp.cos() + (am * am * gm).scale(m);
    if den_p.value().abs() < CHART_EPS || den_m.value().abs() < CHART_EPS {
        return Err(Error::SingularConfiguration("time-dependent mass diverges"));
    }
    let mp = T::cst(m) / den_p;
    let mm = T::cst(m) / den_m;
    let wp2 = gm.scale(4.0) / mp;
    let wm2 = gp.scale(4.0) / mm;
    let g = (am * theta * tp.sin()).scale(0.25);
    Ok([mp, mm, wp2, wm2, g, theta, gp, gm])
}

/// M_±, ω_±², g, Θ and Γ_± of h(t).
pub fn hermitian_params(c: &MapCoefficients, p: &ModelParams) -> Result<HermitianOscParams> {
    let [m_plus, m_minus, omega_plus_sq, omega_minus_sq, g, theta, gamma_plus, gamma_minus] =
        hermitian_generic::<f64>(&c.to_array(), p)?;
    Ok(HermitianOscParams { m_plus, m_minus, omega_plus_sq, omega_minus_sq, g, theta, gamma_plus, gamma_minus })
}

/// Exact time derivatives of M_±, ω_±², g along the coefficient flow.
pub fn hermitian_rates(c: &MapCoefficients, p: &ModelParams) -> Result<HermitianOscRates> {
    let r = ode_rhs(c, p)?.to_array();
    let v = c.to_array();
    let d: [Dual; 4] = core::array::from_fn(|i| Dual::new(v[i], r[i]));
    let h = hermitian_generic(&d, p)?;
    Ok(HermitianOscRates {
        m_plus: h[0].eps,
        m_minus: h[1].eps,
        omega_plus_sq: h[2].eps,
        omega_minus_sq: h[3].eps,
        g: h[4].eps,
    })
}

/// h = p_x²/2M_- + M_-ω_-²x²/2 − g{x,p_x} + p_y²/2M_+ + M_+ω_+²y²/2 + g{y,p_y}.
pub fn reassemble_hermitian(hp: &HermitianOscParams) -> QuadraticOperator {
    use Coord::*;
    QuadraticOperator::zero()
        .with_re(Px, Px, 1.0 / hp.m_minus)
        .with_re(X, X, hp.m_minus * hp.omega_minus_sq)
        .with_re(X, Px, -2.0 * hp.g)
        .with_re(Py, Py, 1.0 / hp.m_plus)
        .with_re(Y, Y, hp.m_plus * hp.omega_plus_sq)
        .with_re(Y, Py, 2.0 * hp.g)
}

/// η in the truncated number basis.
pub fn fock_eta(c: &MapCoefficients, n: usize) -> Result<DMatrix<C64>> {
    fock_product(&dyson_factors(c), n)
}

/// ρ = η†η in the truncated number basis.
pub fn fock_metric(c: &MapCoefficients, n: usize) -> Result<DMatrix<C64>> {
    fock_product(&metric_factors(c), n)
}

/// Smallest eigenvalue of the truncated metric.
///
/// ρ is badly conditioned, so this uses λ_min(ρ) = 1/σ_max(η^{-1})² with
/// η^{-1} assembled from the inverse flows. Principal submatrices (such as
/// an interior block) have λ_min at least this large.
pub fn metric_min_eigenvalue(c: &MapCoefficients, n: usize) -> Result<f64> {
    let inv: Vec<FlowFactor> = dyson_factors(c).iter().rev().map(|f| f.inverse()).collect();
    let b = fock_product(&inv, n)?;
    let top = (b.adjoint() * &b).symmetric_eigenvalues().max();
    if !(top > 0.0 && top.is_finite()) {
        return Err(Error::ConvergenceFailure("metric spectrum"));
    }
    Ok(1.0 / top)
}

/// Rates of the seven metric factors, matching [`metric_factors`].
pub fn metric_rates(r: &CoefficientRates) -> [f64; 7] {
    [r.theta_minus, r.alpha_plus, r.theta_plus, 2.0 * r.alpha_minus, r.theta_plus, r.alpha_plus, r.theta_minus]
}

/// Quasi-Hermiticity iρ̇ = H†ρ − ρH checked on quadratic forms.
///
/// Multiplying by ρ^{-1} on the right turns the relation into
/// ρHρ^{-1} + iρ̇ρ^{-1} = H†, which is evaluated exactly with the
/// coefficient rates from [`ode_rhs`]. Returns the defect relative to ‖H‖.
pub fn quasi_hermiticity_defect(c: &MapCoefficients, p: &ModelParams) -> Result<f64> {
    let rates = ode_rhs(c, p)?;
    let f = metric_factors(c);
    let h = build_hamiltonian(p);
    let lhs = adjoint_chain(&f, &h) + gauge_term(&f, &metric_rates(&rates))?;
    let h_dag = QuadraticOperator::from_matrix(h.coeff().map(|z| z.conj()));
    Ok((lhs - h_dag).max_abs() / h.max_abs())
}

fn apply_chain(factors: &[FlowFactor], gens: &[(GeneratorId, SparseMatrix)], v: &[C64]) -> Result<Vec<C64>> {
    let mut out = v.to_vec();
    for f in factors.iter().rev() {
        let g = &gens.iter().find(|(id, _)| *id == f.generator).unwrap().1;
        out = expmv(g, C64::from(f.coefficient), &out, 1e-12)?;
    }
    Ok(out)
}

/// ‖iρ̇ − (H†ρ − ρH)‖ / ‖H†ρ‖ in the number basis, on the block with both
/// occupation numbers below `keep`, working in an N = `n_work` truncation.
///
/// Only meaningful where ρ maps low number states to normalizable ones;
/// otherwise the value drifts with `n_work`.
///
/// ρ̇ is the central difference of the metrics built from `before` and
/// `after`, which sit `dt` either side of `at`.
pub fn quasi_hermiticity_residual(
    p: &ModelParams,
    before: &MapCoefficients,
    at: &MapCoefficients,
    after: &MapCoefficients,
    dt: f64,
    n_work: usize,
    keep: usize,
) -> Result<f64> {
    let dim = n_work * n_work;
    let ids = [GeneratorId::Jm, GeneratorId::Lp, GeneratorId::Jp, GeneratorId::Lm];
    let gens: Vec<(GeneratorId, SparseMatrix)> = ids.iter().map(|&g| (g, fock_sparse(&generator(g), n_work))).collect();
    let h = fock_sparse(&build_hamiltonian(p), n_work);
    let hd = h.adjoint();
    let inside = |k: usize| k / n_work < keep && k % n_work < keep;
    let (mut num, mut den) = (0.0, 0.0);
    for j in (0..dim).filter(|&k| inside(k)) {
        let mut e = alloc::vec![C64::new(0.0, 0.0); dim];
        e[j] = C64::new(1.0, 0.0);
        let rho_e = apply_chain(&metric_factors(at), &gens, &e)?;
        let rho_p = apply_chain(&metric_factors(after), &gens, &e)?;
        let rho_m = apply_chain(&metric_factors(before), &gens, &e)?;
        let rho_h = apply_chain(&metric_factors(at), &gens, &h.mul_vec(&e))?;
        let hd_rho = hd.mul_vec(&rho_e);
        for i in (0..dim).filter(|&k| inside(k)) {
            let drho = (rho_p[i] - rho_m[i]) / (2.0 * dt);
            let r = C64::new(0.0, 1.0) * drho - (hd_rho[i] - rho_h[i]);
            num += r.norm_sqr();
            den += hd_rho[i].norm_sqr();
        }
    }
    Ok((num / den).sqrt())
}

/// Moves coefficients by dt (either sign) along the first-order system.
pub fn advance(c: &MapCoefficients, p: &ModelParams, dt: f64, tol: f64) -> Result<MapCoefficients> {
    if dt == 0.0 {
        return Ok(*c);
    }
    let s = dt.signum();
    let sol = solve(
        |_, y: &[f64; 4]| rhs_generic::<f64>(y, p).map(|r| r.map(|v| s * v)),
        0.0,
        c.to_array(),
        dt.abs(),
        &[],
        &OdeOptions::with_tol(tol),
        |_, _| Ok(()),
    )?;
    Ok(MapCoefficients::from_array(c.t + dt, *sol.states().last().unwrap()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
    pub samples: usize,
}

impl TimeWindow {
    /// Evenly spaced sample times including both ends.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.samples.max(2);
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    self.end
                } else {
                    self.start + (self.end - self.start) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub coefficients: MapCoefficients,
    pub rates: CoefficientRates,
    pub jet: AlphaJet,
    pub params: HermitianOscParams,
    pub antiherm_residual: f64,
    /// |α_-(integrated) − α_-(closed form)| when constants were supplied.
    pub closed_form_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub dense: DenseSolution<4>,
    /// Largest Hermiticity residual seen on any accepted step.
    pub max_step_residual: f64,
}

impl Trajectory {
    pub fn coefficients_at(&self, t: f64) -> Option<MapCoefficients> {
        self.dense.eval(t).map(|y| MapCoefficients::from_array(t, y))
    }
}

/// Adaptive integration of the coefficient equations over the window.
pub fn integrate(
    initial: &MapCoefficients,
    p: &ModelParams,
    window: &TimeWindow,
    tol: f64,
    constants: Option<&IntegrationConstants>,
) -> Result<Trajectory> {
    if initial.t != window.start {
        return Err(Error::InvalidParams("initial coefficients must sit at the window start"));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParams("tolerance must be positive"));
    }
    let times = window.sample_times();
    let mut worst = 0.0f64;
    let dense = solve(
        |_, y: &[f64; 4]| rhs_generic::<f64>(y, p),
        window.start,
        initial.to_array(),
        window.end,
        &times,
        &OdeOptions::with_tol(tol),
        |t, y| {
            let c = MapCoefficients::from_array(t, *y);
            let r = anti_hermitian_residual(&evaluate_tdde(&c, &ode_rhs(&c, p)?, p)?);
            worst = worst.max(r);
            if r > 10.0 * tol {
                return Err(Error::StepFailure { t, reason: "Hermiticity residual above tolerance" });
            }
            Ok(())
        },
    )?;
    let mut samples = Vec::with_capacity(times.len());
    for &t in &times {
        let c = MapCoefficients::from_array(t, dense.eval(t).unwrap());
        let rates = ode_rhs(&c, p)?;
        let residual = anti_hermitian_residual(&evaluate_tdde(&c, &rates, p)?);
        let mismatch = match constants {
            Some(k) => Some((alpha_closed_form(k, p, t)?.a0 - c.alpha_minus).abs()),
            None => None,
        };
        samples.push(TrajectorySample {
            coefficients: c,
            rates,
            jet: jet_from_coefficients(&c, p),
            params: hermitian_params(&c, p)?,
            antiherm_residual: residual,
            closed_form_mismatch: mismatch,
        });
    }
    Ok(Trajectory { samples, dense, max_step_residual: worst })
}

/// Coefficients straight from the closed-form jet on fixed branches.
pub fn closed_form_coefficients(
    k: &IntegrationConstants,
    p: &ModelParams,
    t: f64,
    branches: Branches,
) -> Result<MapCoefficients> {
    recover(&alpha_closed_form(k, p, t)?, p, branches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::hermitian_split;
    use crate::static_map::{solve_static, static_hermitian};

    fn setup_a() -> ModelParams {
        ModelParams::new(1.0, 1.0, 2.0, 1.0).unwrap()
    }

    fn setup_b() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn rhs_at_origin() {
        let p = setup_a();
        let r = ode_rhs(&MapCoefficients::new(0.0, 0.0, 0.0, 0.0, 0.0), &p).unwrap();
        assert_eq!(r.to_array(), [0.0, 0.0, -2.0 * p.lambda(), 0.0]);
    }

    #[test]
    fn fixed_point_is_static() {
        let p = setup_a();
        let c = static_fixed_point(&p, 0.0);
        let r = ode_rhs(&c, &p).unwrap();
        assert!(r.to_array().iter().all(|v| v.abs() < 1e-14));
        let h = evaluate_tdde(&c, &CoefficientRates::zero(), &p).unwrap();
        let (herm, _) = hermitian_split(&h);
        let st = static_hermitian(&p, solve_static(&p).unwrap().theta);
        assert!((herm - st).max_abs() < 1e-10);
        assert!(anti_hermitian_residual(&h) < 1e-12);
    }

    #[test]
    fn rhs_matches_mechanical_solve() {
        let p = setup_b();
        let c = MapCoefficients::new(0.0, 0.4, -0.3, 0.7, 0.2);
        let (mech, resid) = hermiticity_rates(&c, &p).unwrap();
        let r = ode_rhs(&c, &p).unwrap();
        assert!(resid < 1e-12);
        for (a, b) in mech.to_array().iter().zip(r.to_array()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn chart_errors() {
        let p = setup_a();
        let c = MapCoefficients::new(0.0, 0.0, core::f64::consts::FRAC_PI_2, 0.0, 0.0);
        assert!(matches!(ode_rhs(&c, &p), Err(Error::SingularConfiguration(_))));
        let d = MapCoefficients::new(0.0, 1.0, 0.0, -2.0, 0.0);
        assert!(matches!(ode_rhs(&d, &p), Err(Error::SingularConfiguration(_))));
    }

    #[test]
    fn closed_form_examples() {
        let p = setup_a();
        let (dp, _) = regime_frequencies(&p);
        let k = IntegrationConstants { kind: RegimeKind::Unbroken, c: [1.0, 0.0, 0.0, 0.0] };
        let j = alpha_closed_form(&k, &p, 0.0).unwrap();
        assert_eq!(j.a0, 1.0);
        assert!((j.a2 + dp * dp).abs() < 1e-12);
        let bad = IntegrationConstants { kind: RegimeKind::Broken, c: [1.0, 0.0, 0.0, 0.0] };
        assert!(matches!(alpha_closed_form(&bad, &p, 0.0), Err(Error::RegimeMismatch { .. })));

        let b = setup_b();
        let (_, dm) = regime_frequencies(&b);
        let k = IntegrationConstants { kind: RegimeKind::Broken, c: [0.0, 0.0, 1.0, 0.0] };
        let j = alpha_closed_form(&k, &b, 2.0).unwrap();
        assert!((j.a0 - (2.0 * dm).cosh()).abs() < 1e-12);
    }

    #[test]
    fn recovery_roundtrip() {
        let p = setup_b();
        let c = MapCoefficients::new(0.0, 1.0, 0.0, 1.5, 0.25);
        let jet = jet_from_coefficients(&c, &p);
        let br = select_branches(&jet, &p, Some(&c)).unwrap();
        let back = recover(&jet, &p, br).unwrap();
        for (a, b) in back.to_array().iter().zip(c.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(recovery_residual(&jet, &p, br).unwrap() < 1e-10);
    }

    #[test]
    fn recovery_errors() {
        let p = setup_a();
        let j = AlphaJet { t: 0.0, a0: 0.0, a1: 0.1, a2: 0.0, a3: 0.0 };
        assert_eq!(recover(&j, &p, Branches::ALL[0]), Err(Error::AlphaMinusZero));
        let j = AlphaJet { t: 0.0, a0: 0.1, a1: 2.5, a2: 0.0, a3: 0.0 };
        assert!(matches!(recover(&j, &p, Branches::ALL[0]), Err(Error::ThetaPlusDomain { .. })));
        let c = ModelParams::new(1.0, 1.0, 3f64.sqrt(), 1.0).unwrap();
        let j = AlphaJet { t: 0.0, a0: 0.1, a1: 0.0, a2: 0.0, a3: 0.0 };
        assert_eq!(recover(&j, &c, Branches::ALL[0]), Err(Error::ExceptionalDenominator));
    }

    #[test]
    fn hermitian_params_reassemble() {
        let p = setup_b();
        let c = MapCoefficients::new(0.3, 1.0, 0.1, 1.5, 0.25);
        let hp = hermitian_params(&c, &p).unwrap();
        let tdde = evaluate_tdde(&c, &ode_rhs(&c, &p).unwrap(), &p).unwrap();
        let (herm, _) = hermitian_split(&tdde);
        assert!((herm - reassemble_hermitian(&hp)).max_abs() < 1e-12);
        assert!(hp.g != 0.0);
    }

    #[test]
    fn hermitian_rates_match_finite_difference() {
        let p = setup_b();
        let c = MapCoefficients::new(0.0, 1.0, 0.1, 1.5, 0.25);
        let r = hermitian_rates(&c, &p).unwrap();
        let h = 1e-5;
        let up = hermitian_params(&advance(&c, &p, h, 1e-13).unwrap(), &p).unwrap();
        let dn = hermitian_params(&advance(&c, &p, -h, 1e-13).unwrap(), &p).unwrap();
        assert!(((up.m_plus - dn.m_plus) / (2.0 * h) - r.m_plus).abs() < 1e-6);
        assert!(((up.g - dn.g) / (2.0 * h) - r.g).abs() < 1e-6);
        assert!(((up.omega_minus_sq - dn.omega_minus_sq) / (2.0 * h) - r.omega_minus_sq).abs() < 1e-6);
    }

    #[test]
    fn zero_data_without_coupling_is_constant() {
        let p = ModelParams::new(1.0, 1.0, 2.0, 0.0).unwrap();
        let w = TimeWindow { start: 0.0, end: 3.0, samples: 7 };
        let tr = integrate(&MapCoefficients::new(0.0, 0.0, 0.0, 0.0, 0.0), &p, &w, 1e-10, None).unwrap();
        for s in &tr.samples {
            assert_eq!(s.coefficients.to_array(), [0.0; 4]);
        }
    }

    #[test]
    fn quasi_hermiticity_holds_on_forms() {
        let p = setup_b();
        let c = MapCoefficients::new(0.0, 1.0, 0.0, 1.5, 0.25);
        assert!(quasi_hermiticity_defect(&c, &p).unwrap() < 1e-12);
        let a = setup_a();
        assert!(quasi_hermiticity_defect(&static_fixed_point(&a, 0.0), &a).unwrap() < 1e-12);
    }

    #[test]
    fn quasi_hermiticity_in_number_basis() {
        let p = setup_b();
        let c = MapCoefficients::new(0.0, 0.1, 0.05, 0.1, 0.05);
        let dt = 1e-4;
        let (b, a) = (advance(&c, &p, -dt, 1e-13).unwrap(), advance(&c, &p, dt, 1e-13).unwrap());
        let r = quasi_hermiticity_residual(&p, &b, &c, &a, dt, 16, 4).unwrap();
        assert!(r < 1e-6, "{r}");
        // frozen coefficients violate the relation
        let r = quasi_hermiticity_residual(&p, &c, &c, &c, dt, 16, 4).unwrap();
        assert!(r > 1e-3, "{r}");
    }

    #[test]
    fn metric_of_zero_map_is_identity() {
        let c = MapCoefficients::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let rho = fock_metric(&c, 5).unwrap();
        assert!(crate::linalg::max_abs(&(rho - DMatrix::identity(25, 25))) < 1e-15);
        assert!((metric_min_eigenvalue(&c, 5).unwrap() - 1.0).abs() < 1e-12);
    }
}
