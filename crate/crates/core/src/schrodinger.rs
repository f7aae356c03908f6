//! The decoupled Hermitian oscillators h_{x,-} and h_{y,+}: dissipative
//! Ermakov–Pinney integration, the Gaussian × Hermite wavefunctions, grid
//! checks of the Schrödinger equation and the metric inner product.

use alloc::vec::Vec;

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

#[allow(unused_imports)]
use num_traits::Float;

use crate::algebra::{flow_matrix, generator, Coord, FlowFactor, QuadraticOperator};
use crate::dynamic_map::{
    dyson_factors, hermitian_params, hermitian_rates, ode_rhs, reassemble_hermitian, HermitianOscParams,
    HermitianOscRates, MapCoefficients, TimeWindow,
};
use crate::error::{Error, Result};
use crate::linalg::{expmv, SparseMatrix};
use crate::model::ModelParams;
use crate::ode::{solve, DenseSolution, OdeOptions};

/// Largest Hermite index evaluated by the upward recurrence.
pub const MAX_QUANTUM_NUMBER: u32 = 20;
/// Edge-to-peak amplitude ratio above which a grid state is rejected.
pub const BOUNDARY_TOL: f64 = 1e-10;
/// Tolerance for exponential-times-vector on grids.
pub const EXPMV_TOL: f64 = 1e-8;

/// h_{x,-} (x coordinate, −g{x,p}) or h_{y,+} (y coordinate, +g{y,p}).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Minus,
    Plus,
}

impl Component {
    /// Sign of the g{z,p} term.
    pub fn sign(self) -> f64 {
        match self {
            Component::Minus => -1.0,
            Component::Plus => 1.0,
        }
    }

    pub fn mass(self, hp: &HermitianOscParams) -> f64 {
        match self {
            Component::Minus => hp.m_minus,
            Component::Plus => hp.m_plus,
        }
    }

    pub fn omega_sq(self, hp: &HermitianOscParams) -> f64 {
        match self {
            Component::Minus => hp.omega_minus_sq,
            Component::Plus => hp.omega_plus_sq,
        }
    }

    pub fn mass_rate(self, r: &HermitianOscRates) -> f64 {
        match self {
            Component::Minus => r.m_minus,
            Component::Plus => r.m_plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Component::Minus => "minus",
            Component::Plus => "plus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErmakovState {
    pub component: Component,
    pub rho: f64,
    pub rho_dot: f64,
}

/// ω² ∓ 2ġ − 4g² ∓ 2gṀ/M, the upper sign for the minus component.
pub fn effective_omega_sq(c: Component, hp: &HermitianOscParams, r: &HermitianOscRates) -> f64 {
    let s = c.sign();
    let m = c.mass(hp);
    c.omega_sq(hp) - 4.0 * hp.g * hp.g - 2.0 * s * r.g - 2.0 * s * hp.g * c.mass_rate(r) / m
}

/// (ρ̇, ρ̈) with ρ̈ = −(Ṁ/M)ρ̇ − ω_eff²ρ + 1/(M²ρ³).
pub fn ermakov_rhs(s: &ErmakovState, hp: &HermitianOscParams, r: &HermitianOscRates) -> Result<(f64, f64)> {
    if !(s.rho > 0.0) {
        return Err(Error::NonPositiveRho { rho: s.rho });
    }
    let m = s.component.mass(hp);
    if m == 0.0 || !m.is_finite() {
        return Err(Error::SingularConfiguration("time-dependent mass vanishes"));
    }
    let w2 = effective_omega_sq(s.component, hp, r);
    let rho_ddot = -(s.component.mass_rate(r) / m) * s.rho_dot - w2 * s.rho + 1.0 / (m * m * s.rho.powi(3));
    Ok((s.rho_dot, rho_ddot))
}

/// ρ = (M ω_eff)^{-1/2}, ρ̇ = 0.
pub fn ermakov_fixed_point(c: Component, hp: &HermitianOscParams, r: &HermitianOscRates) -> Result<ErmakovState> {
    let w2 = effective_omega_sq(c, hp, r);
    let m = c.mass(hp);
    if !(w2 > 0.0 && m > 0.0) {
        return Err(Error::InvalidParams("fixed-point start needs positive mass and effective frequency"));
    }
    Ok(ErmakovState { component: c, rho: 1.0 / (m * w2.sqrt()).sqrt(), rho_dot: 0.0 })
}

/// One sample of an Ermakov solution driven by prescribed coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErmakovSample {
    pub t: f64,
    pub state: ErmakovState,
    /// ∫₀ᵗ ds/(Mρ²)
    pub phase_integral: f64,
}

/// Integrates (ρ, ρ̇, ∫ds/Mρ²) with coefficients supplied by `coeffs(t)`.
pub fn integrate_ermakov<F>(initial: ErmakovState, mut coeffs: F, window: &TimeWindow, tol: f64) -> Result<Vec<ErmakovSample>>
where
    F: FnMut(f64) -> Result<(HermitianOscParams, HermitianOscRates)>,
{
    if !(initial.rho > 0.0) {
        return Err(Error::NonPositiveRho { rho: initial.rho });
    }
    let comp = initial.component;
    let times = window.sample_times();
    let sol = solve(
        |t, y: &[f64; 3]| {
            let (hp, r) = coeffs(t)?;
            let s = ErmakovState { component: comp, rho: y[0], rho_dot: y[1] };
            let (d, dd) = ermakov_rhs(&s, &hp, &r)?;
            Ok([d, dd, 1.0 / (comp.mass(&hp) * y[0] * y[0])])
        },
        window.start,
        [initial.rho, initial.rho_dot, 0.0],
        window.end,
        &times,
        &OdeOptions::with_tol(tol),
        |t, y| positive(t, y[0]),
    )?;
    Ok(times
        .iter()
        .map(|&t| {
            let y = sol.eval(t).unwrap();
            ErmakovSample { t, state: ErmakovState { component: comp, rho: y[0], rho_dot: y[1] }, phase_integral: y[2] }
        })
        .collect())
}

fn positive(t: f64, rho: f64) -> Result<()> {
    if rho > 0.0 {
        Ok(())
    } else {
        Err(Error::StepFailure { t, reason: "Ermakov amplitude reached zero" })
    }
}

/// Map coefficients together with both Ermakov solutions and phase integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledState {
    pub coefficients: MapCoefficients,
    pub minus: ErmakovState,
    pub plus: ErmakovState,
    /// ∫ds/(M_-ρ_-²) and ∫ds/(M_+ρ_+²) from the window start.
    pub phase_integral: [f64; 2],
}

impl CoupledState {
    pub fn t(&self) -> f64 {
        self.coefficients.t
    }

    pub fn state(&self, c: Component) -> &ErmakovState {
        match c {
            Component::Minus => &self.minus,
            Component::Plus => &self.plus,
        }
    }

    pub fn phase_integral_of(&self, c: Component) -> f64 {
        match c {
            Component::Minus => self.phase_integral[0],
            Component::Plus => self.phase_integral[1],
        }
    }

    fn to_array(self) -> [f64; 10] {
        let c = self.coefficients.to_array();
        [
            c[0],
            c[1],
            c[2],
            c[3],
            self.minus.rho,
            self.minus.rho_dot,
            self.plus.rho,
            self.plus.rho_dot,
            self.phase_integral[0],
            self.phase_integral[1],
        ]
    }

    fn from_array(t: f64, y: &[f64; 10]) -> Self {
        CoupledState {
            coefficients: MapCoefficients::from_array(t, [y[0], y[1], y[2], y[3]]),
            minus: ErmakovState { component: Component::Minus, rho: y[4], rho_dot: y[5] },
            plus: ErmakovState { component: Component::Plus, rho: y[6], rho_dot: y[7] },
            phase_integral: [y[8], y[9]],
        }
    }
}

fn coupled_rhs(t: f64, y: &[f64; 10], p: &ModelParams) -> Result<[f64; 10]> {
    let s = CoupledState::from_array(t, y);
    let c = s.coefficients;
    let dc = ode_rhs(&c, p)?.to_array();
    let hp = hermitian_params(&c, p)?;
    let r = hermitian_rates(&c, p)?;
    let (dm, ddm) = ermakov_rhs(&s.minus, &hp, &r)?;
    let (dp, ddp) = ermakov_rhs(&s.plus, &hp, &r)?;
    Ok([
        dc[0],
        dc[1],
        dc[2],
        dc[3],
        dm,
        ddm,
        dp,
        ddp,
        1.0 / (hp.m_minus * s.minus.rho * s.minus.rho),
        1.0 / (hp.m_plus * s.plus.rho * s.plus.rho),
    ])
}

/// Coupled map + Ermakov evolution sampled on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub samples: Vec<CoupledState>,
    pub dense: DenseSolution<10>,
}

/// Both Ermakov components start at their instantaneous fixed points.
pub fn fixed_point_start(c: &MapCoefficients, p: &ModelParams) -> Result<CoupledState> {
    let hp = hermitian_params(c, p)?;
    let r = hermitian_rates(c, p)?;
    Ok(CoupledState {
        coefficients: *c,
        minus: ermakov_fixed_point(Component::Minus, &hp, &r)?,
        plus: ermakov_fixed_point(Component::Plus, &hp, &r)?,
        phase_integral: [0.0, 0.0],
    })
}

pub fn evolve(initial: &CoupledState, p: &ModelParams, window: &TimeWindow, tol: f64) -> Result<Evolution> {
    if initial.t() != window.start {
        return Err(Error::InvalidParams("initial state must sit at the window start"));
    }
    let times = window.sample_times();
    let dense = solve(
        |t, y: &[f64; 10]| coupled_rhs(t, y, p),
        window.start,
        initial.to_array(),
        window.end,
        &times,
        &OdeOptions::with_tol(tol),
        |t, y| positive(t, y[4]).and(positive(t, y[6])),
    )?;
    let samples = times.iter().map(|&t| CoupledState::from_array(t, &dense.eval(t).unwrap())).collect();
    Ok(Evolution { samples, dense })
}

/// Moves a coupled state by dt (either sign).
pub fn advance_coupled(s: &CoupledState, p: &ModelParams, dt: f64, tol: f64) -> Result<CoupledState> {
    if dt == 0.0 {
        return Ok(*s);
    }
    let sg = dt.signum();
    let t0 = s.t();
    let sol = solve(
        |tau, y: &[f64; 10]| coupled_rhs(t0 + sg * tau, y, p).map(|r| r.map(|v| sg * v)),
        0.0,
        s.to_array(),
        dt.abs(),
        &[],
        &OdeOptions::with_tol(tol),
        |_, _| Ok(()),
    )?;
    Ok(CoupledState::from_array(t0 + dt, sol.states().last().unwrap()))
}

/// max over both components of |ρ̈_fd − ρ̈_rhs| / max(1, |ρ̈_rhs|), with ρ̈_fd
/// the five-point derivative of ρ̇ re-integrated around the sample.
pub fn ermakov_residual(s: &CoupledState, p: &ModelParams, h: f64, tol: f64) -> Result<f64> {
    let at = |k: f64| advance_coupled(s, p, k * h, tol);
    let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
    let c = &s.coefficients;
    let hp = hermitian_params(c, p)?;
    let r = hermitian_rates(c, p)?;
    let mut worst = 0.0f64;
    for comp in [Component::Minus, Component::Plus] {
        let d = |x: &CoupledState| x.state(comp).rho_dot;
        let fd = (d(&m2) - 8.0 * d(&m1) + 8.0 * d(&p1) - d(&p2)) / (12.0 * h);
        let (_, dd) = ermakov_rhs(s.state(comp), &hp, &r)?;
        worst = worst.max((fd - dd).abs() / dd.abs().max(1.0));
    }
    Ok(worst)
}

/// Composite Simpson integral of uniformly spaced samples; a 3/8 panel
/// closes an even count.
pub fn simpson(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (f[0] + f[1]),
        3 => h / 3.0 * (f[0] + 4.0 * f[1] + f[2]),
        _ if n % 2 == 1 => {
            let mut s = f[0] + f[n - 1];
            for (k, v) in f.iter().enumerate().take(n - 1).skip(1) {
                s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            s * h / 3.0
        }
        _ => {
            let head = simpson(h, &f[..n - 3]);
            let t = &f[n - 4..];
            head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3])
        }
    }
}

/// α_n(t) = −(n + ½)∫₀ᵗ ds/(Mρ²) from uniformly sampled M and ρ that start
/// at 0 and end at t.
pub fn phase(n: u32, t: f64, mass: &[f64], rho: &[f64]) -> Result<f64> {
    if mass.len() != rho.len() || mass.len() < 2 {
        return Err(Error::GridMismatch);
    }
    let f: Vec<f64> = mass.iter().zip(rho).map(|(m, r)| 1.0 / (m * r * r)).collect();
    Ok(-(n as f64 + 0.5) * simpson(t / (f.len() - 1) as f64, &f))
}

/// Physicists' Hermite polynomial H_n(x).
pub fn hermite(n: u32, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, 2.0 * x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = 2.0 * x * b - 2.0 * k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// Quantum number, component and accumulated phase α_{n,±}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSpec {
    pub n: u32,
    pub component: Component,
    pub alpha: f64,
}

impl WaveSpec {
    pub fn new(n: u32, component: Component) -> Result<Self> {
        if n > MAX_QUANTUM_NUMBER {
            return Err(Error::InvalidParams("quantum number above the Hermite recurrence limit"));
        }
        Ok(WaveSpec { n, component, alpha: 0.0 })
    }

    /// This wave with α = −(n + ½)·`integral`.
    pub fn with_phase_integral(self, integral: f64) -> Self {
        WaveSpec { alpha: -(self.n as f64 + 0.5) * integral, ..self }
    }
}

/// e^{iα}/√ρ · H_n(z/ρ) · exp(iM(i/(Mρ²) + ρ̇/ρ ∓ 2g)z²/2), unnormalized.
pub fn eigenfunction(spec: &WaveSpec, es: &ErmakovState, hp: &HermitianOscParams, z: f64) -> C64 {
    let m = spec.component.mass(hp);
    let rho = es.rho;
    let k = C64::new(-1.0 / rho / rho, m * (es.rho_dot / rho - 2.0 * spec.component.sign() * hp.g));
    let pre = C64::from_polar(1.0 / rho.sqrt(), spec.alpha);
    pre * hermite(spec.n, z / rho) * (k * (z * z / 2.0)).exp()
}

/// Uniform grid with both ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
}

impl Grid1D {
    pub fn new(z_min: f64, z_max: f64, points: usize) -> Result<Self> {
        if points < 16 {
            return Err(Error::InvalidParams("grid needs at least 16 points"));
        }
        if !(z_max > z_min) || !z_min.is_finite() || !z_max.is_finite() {
            return Err(Error::InvalidParams("grid bounds must be finite with z_max > z_min"));
        }
        Ok(Grid1D { z_min, z_max, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.z_max - self.z_min) / (self.points - 1) as f64
    }

    pub fn coord(&self, k: usize) -> f64 {
        self.z_min + self.spacing() * k as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.coord(k)).collect()
    }

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    pub fn position(&self) -> SparseMatrix {
        let d: Vec<C64> = self.coords().into_iter().map(Self::c).collect();
        SparseMatrix::diagonal(&d)
    }

    /// −i times the central first difference, zero outside the grid.
    pub fn momentum(&self) -> SparseMatrix {
        let f = 1.0 / (2.0 * self.spacing());
        let mut t = Vec::new();
        for k in 0..self.points {
            if k + 1 < self.points {
                t.push((k, k + 1, C64::new(0.0, -f)));
            }
            if k > 0 {
                t.push((k, k - 1, C64::new(0.0, f)));
            }
        }
        SparseMatrix::from_triplets(self.points, t)
    }

    /// Three-point −d²/dz².
    pub fn momentum_sq(&self) -> SparseMatrix {
        let f = 1.0 / (self.spacing() * self.spacing());
        let mut t = Vec::new();
        for k in 0..self.points {
            t.push((k, k, Self::c(2.0 * f)));
            if k + 1 < self.points {
                t.push((k, k + 1, Self::c(-f)));
                t.push((k + 1, k, Self::c(-f)));
            }
        }
        SparseMatrix::from_triplets(self.points, t)
    }

    pub fn position_sq(&self) -> SparseMatrix {
        let d: Vec<C64> = self.coords().into_iter().map(|z| Self::c(z * z)).collect();
        SparseMatrix::diagonal(&d)
    }

    /// ½(ZP + PZ).
    pub fn dilation(&self) -> SparseMatrix {
        let (z, p) = (self.position(), self.momentum());
        z.matmul(&p).add(&p.matmul(&z)).scale(Self::c(0.5))
    }

    /// Grid image of the single-mode operator p²/2M + Mω²z²/2 + s·g{z,p}.
    pub fn oscillator(&self, mass: f64, omega_sq: f64, g_signed: f64) -> SparseMatrix {
        self.momentum_sq()
            .scale(Self::c(0.5 / mass))
            .add(&self.position_sq().scale(Self::c(0.5 * mass * omega_sq)))
            .add(&self.dilation().scale(Self::c(2.0 * g_signed)))
    }
}

/// Grid image of ½vᵀCv on the tensor grid, index i_x·n_y + i_y.
pub fn grid_operator(a: &QuadraticOperator, gx: &Grid1D, gy: &Grid1D) -> SparseMatrix {
    use Coord::*;
    let (ix, iy) = (SparseMatrix::identity(gx.points), SparseMatrix::identity(gy.points));
    let (x, px) = (gx.position(), gx.momentum());
    let (y, py) = (gy.position(), gy.momentum());
    let mut out = SparseMatrix::zero(gx.points * gy.points);
    let mut acc = |coef: C64, m: SparseMatrix| {
        if coef != C64::new(0.0, 0.0) {
            out = out.add(&m.scale(coef));
        }
    };
    let half = |i, j| a.get(i, j) * 0.5;
    acc(half(X, X), SparseMatrix::kron(&gx.position_sq(), &iy));
    acc(half(Y, Y), SparseMatrix::kron(&ix, &gy.position_sq()));
    acc(half(Px, Px), SparseMatrix::kron(&gx.momentum_sq(), &iy));
    acc(half(Py, Py), SparseMatrix::kron(&ix, &gy.momentum_sq()));
    acc(a.get(X, Y), SparseMatrix::kron(&x, &y));
    acc(a.get(X, Px), SparseMatrix::kron(&gx.dilation(), &iy));
    acc(a.get(X, Py), SparseMatrix::kron(&x, &py));
    acc(a.get(Y, Px), SparseMatrix::kron(&px, &y));
    acc(a.get(Y, Py), SparseMatrix::kron(&ix, &gy.dilation()));
    acc(a.get(Px, Py), SparseMatrix::kron(&px, &py));
    out
}

/// Complex amplitudes on the tensor grid gx × gy.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState2D {
    pub gx: Grid1D,
    pub gy: Grid1D,
    pub amp: Vec<C64>,
}

impl GridState2D {
    pub fn new(gx: Grid1D, gy: Grid1D, amp: Vec<C64>) -> Result<Self> {
        if amp.len() != gx.points * gy.points {
            return Err(Error::GridMismatch);
        }
        Ok(GridState2D { gx, gy, amp })
    }

    pub fn from_fn<F: FnMut(f64, f64) -> C64>(gx: Grid1D, gy: Grid1D, mut f: F) -> Self {
        let (xs, ys) = (gx.coords(), gy.coords());
        let mut amp = Vec::with_capacity(xs.len() * ys.len());
        for &x in &xs {
            for &y in &ys {
                amp.push(f(x, y));
            }
        }
        GridState2D { gx, gy, amp }
    }

    fn same_grid(&self, o: &GridState2D) -> Result<()> {
        if self.gx == o.gx && self.gy == o.gy {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn cell(&self) -> f64 {
        self.gx.spacing() * self.gy.spacing()
    }

    /// ⟨self|other⟩ by the rectangle rule.
    pub fn inner(&self, o: &GridState2D) -> Result<C64> {
        self.same_grid(o)?;
        Ok(self.amp.iter().zip(&o.amp).map(|(a, b)| a.conj() * b).sum::<C64>() * self.cell())
    }

    pub fn norm_sq(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.cell()
    }

    pub fn scaled(mut self, s: C64) -> Self {
        self.amp.iter_mut().for_each(|a| *a *= s);
        self
    }

    /// Largest edge amplitude over the largest amplitude.
    pub fn edge_ratio(&self) -> f64 {
        let (nx, ny) = (self.gx.points, self.gy.points);
        let mut edge = 0.0f64;
        let mut peak = 0.0f64;
        for i in 0..nx {
            for j in 0..ny {
                let a = self.amp[i * ny + j].norm();
                peak = peak.max(a);
                if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny {
                    edge = edge.max(a);
                }
            }
        }
        if peak == 0.0 {
            0.0
        } else {
            edge / peak
        }
    }

    pub fn check_boundary(&self, threshold: f64) -> Result<()> {
        let r = self.edge_ratio();
        if r > threshold || !r.is_finite() {
            Err(Error::BoundaryContamination { edge_ratio: r })
        } else {
            Ok(())
        }
    }
}

/// Normalized-at-construction product φ_{x,-}(x)φ_{y,+}(y) for a coupled state.
pub fn product_state(
    gx: Grid1D,
    gy: Grid1D,
    n_minus: u32,
    n_plus: u32,
    s: &CoupledState,
    p: &ModelParams,
) -> Result<GridState2D> {
    let hp = hermitian_params(&s.coefficients, p)?;
    product_state_with(gx, gy, n_minus, n_plus, s, &hp)
}

/// As [`product_state`] with explicit h(t) parameters.
pub fn product_state_with(
    gx: Grid1D,
    gy: Grid1D,
    n_minus: u32,
    n_plus: u32,
    s: &CoupledState,
    hp: &HermitianOscParams,
) -> Result<GridState2D> {
    let wm = WaveSpec::new(n_minus, Component::Minus)?.with_phase_integral(s.phase_integral[0]);
    let wp = WaveSpec::new(n_plus, Component::Plus)?.with_phase_integral(s.phase_integral[1]);
    let fx: Vec<C64> = gx.coords().iter().map(|&x| eigenfunction(&wm, &s.minus, hp, x)).collect();
    let fy: Vec<C64> = gy.coords().iter().map(|&y| eigenfunction(&wp, &s.plus, hp, y)).collect();
    let mut amp = Vec::with_capacity(fx.len() * fy.len());
    for a in &fx {
        for b in &fy {
            amp.push(a * b);
        }
    }
    GridState2D::new(gx, gy, amp)
}

/// ∫|φ_{z,±}|² dz on a 1D grid.
pub fn norm_1d(spec: &WaveSpec, es: &ErmakovState, hp: &HermitianOscParams, grid: &Grid1D) -> f64 {
    let v: Vec<f64> = grid.coords().iter().map(|&z| eigenfunction(spec, es, hp, z).norm_sqr()).collect();
    simpson(grid.spacing(), &v)
}

/// ‖i(φ₊ − φ₋)/2Δt − hφ₀‖ / ‖φ₀‖ on the grid.
pub fn tdse_residual(
    before: &GridState2D,
    at: &GridState2D,
    after: &GridState2D,
    dt: f64,
    hp: &HermitianOscParams,
) -> Result<f64> {
    at.same_grid(before)?;
    at.same_grid(after)?;
    for s in [before, at, after] {
        s.check_boundary(BOUNDARY_TOL)?;
    }
    let h = grid_operator(&reassemble_hermitian(hp), &at.gx, &at.gy);
    let hphi = h.mul_vec(&at.amp);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..at.amp.len() {
        let dphi = (after.amp[k] - before.amp[k]) / (2.0 * dt);
        num += (C64::new(0.0, 1.0) * dphi - hphi[k]).norm_sqr();
        den += at.amp[k].norm_sqr();
    }
    Ok((num / den).sqrt())
}

/// e^{fG} applied to a grid state.
pub fn apply_flow_grid(factor: FlowFactor, state: &GridState2D) -> Result<GridState2D> {
    if factor.coefficient == 0.0 {
        return Ok(state.clone());
    }
    let g = grid_operator(&generator(factor.generator), &state.gx, &state.gy);
    let amp = expmv(&g, C64::from(factor.coefficient), &state.amp, EXPMV_TOL)?;
    GridState2D::new(state.gx, state.gy, amp)
}

/// F_1 ⋯ F_k applied to a grid state, rightmost first.
pub fn apply_chain_grid(factors: &[FlowFactor], state: &GridState2D) -> Result<GridState2D> {
    factors.iter().rev().try_fold(state.clone(), |s, f| apply_flow_grid(*f, &s))
}

/// ψ = η^{-1}φ on the grid.
pub fn pull_back(c: &MapCoefficients, phi: &GridState2D) -> Result<GridState2D> {
    let inv: Vec<FlowFactor> = dyson_factors(c).iter().rev().map(|f| f.inverse()).collect();
    let psi = apply_chain_grid(&inv, phi)?;
    psi.check_boundary(BOUNDARY_TOL)?;
    Ok(psi)
}

/// ⟨ψ|ρψ⟩ with ρ given as a product of flows.
///
/// Fails with ConvergenceFailure if the result is not real to 1e-10 relative.
pub fn quasi_norm(state: &GridState2D, metric: &[FlowFactor]) -> Result<f64> {
    let rho_psi = apply_chain_grid(metric, state)?;
    let q = state.inner(&rho_psi)?;
    if q.im.abs() > 1e-10 * q.re.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::ConvergenceFailure("quasi-norm has an imaginary part"));
    }
    Ok(q.re)
}

/// Width matrix B of a Gaussian e^{i zᵀBz/2} after applying e^{fG}.
///
/// With e^{fG} vᵀ e^{-fG} = vᵀS the annihilator p − Bz is conjugated
/// into (S₂₂ᵀ − BS₂₁ᵀ)p − (BS₁₁ᵀ − S₁₂ᵀ)z.
pub fn gaussian_flow(b: &Matrix2<C64>, factor: FlowFactor) -> Result<Matrix2<C64>> {
    let s = flow_matrix(factor);
    let blk = |r: usize, c: usize| Matrix2::new(s[(r, c)], s[(r, c + 1)], s[(r + 1, c)], s[(r + 1, c + 1)]);
    let (s11, s12, s21, s22) = (blk(0, 0), blk(0, 2), blk(2, 0), blk(2, 2));
    let lhs = (s22.transpose() - b * s21.transpose())
        .try_inverse()
        .ok_or(Error::SingularConfiguration("Gaussian width degenerates under the flow"))?;
    Ok(lhs * (b * s11.transpose() - s12.transpose()))
}

/// Width matrix of the ground-state product φ_{0,0} at a coupled state.
pub fn ground_width(s: &CoupledState, hp: &HermitianOscParams) -> Matrix2<C64> {
    let w = |c: Component| {
        let e = s.state(c);
        C64::new(c.mass(hp) * (e.rho_dot / e.rho - 2.0 * c.sign() * hp.g), 1.0 / (e.rho * e.rho))
    };
    Matrix2::new(w(Component::Minus), C64::new(0.0, 0.0), C64::new(0.0, 0.0), w(Component::Plus))
}

/// Smallest eigenvalue of Im B for ψ = η^{-1}φ_{0,0}, computed exactly on
/// the width matrix. ψ is square integrable iff this is positive.
pub fn pulled_back_decay(s: &CoupledState, p: &ModelParams) -> Result<f64> {
    let hp = hermitian_params(&s.coefficients, p)?;
    let mut b = ground_width(s, &hp);
    for f in dyson_factors(&s.coefficients) {
        b = gaussian_flow(&b, f.inverse())?;
    }
    Ok(b.map(|z| z.im).symmetric_eigenvalues().min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::GeneratorId;

    fn stationary(m: f64, w: f64) -> (HermitianOscParams, HermitianOscRates) {
        (
            HermitianOscParams {
                m_plus: m,
                m_minus: m,
                omega_plus_sq: w * w,
                omega_minus_sq: w * w,
                g: 0.0,
                theta: 0.0,
                gamma_plus: 0.0,
                gamma_minus: 0.0,
            },
            HermitianOscRates { m_plus: 0.0, m_minus: 0.0, omega_plus_sq: 0.0, omega_minus_sq: 0.0, g: 0.0 },
        )
    }

    #[test]
    fn fixed_point_balances() {
        let (hp, r) = stationary(2.0, 1.5);
        let s = ErmakovState { component: Component::Plus, rho: 1.0 / 3f64.sqrt(), rho_dot: 0.0 };
        let (_, dd) = ermakov_rhs(&s, &hp, &r).unwrap();
        assert!(dd.abs() < 1e-14);
        assert_eq!(ermakov_fixed_point(Component::Plus, &hp, &r).unwrap().rho, s.rho);
        let bad = ErmakovState { rho: 0.0, ..s };
        assert!(matches!(ermakov_rhs(&bad, &hp, &r), Err(Error::NonPositiveRho { .. })));
    }

    #[test]
    fn constant_g_shifts_frequency() {
        let (mut hp, r) = stationary(1.0, 2.0);
        hp.g = 0.5;
        for c in [Component::Minus, Component::Plus] {
            assert_eq!(effective_omega_sq(c, &hp, &r), 4.0 - 1.0);
        }
    }

    #[test]
    fn fixed_point_stays_put() {
        let (hp, r) = stationary(1.0, 1.3);
        let s0 = ermakov_fixed_point(Component::Minus, &hp, &r).unwrap();
        let w = TimeWindow { start: 0.0, end: 5.0, samples: 11 };
        let out = integrate_ermakov(s0, |_| Ok((hp, r)), &w, 1e-12).unwrap();
        for s in &out {
            assert!((s.state.rho - s0.rho).abs() < 1e-10);
        }
        let last = out.last().unwrap();
        assert!((last.phase_integral - 5.0 / (s0.rho * s0.rho)).abs() < 1e-9);
    }

    #[test]
    fn phase_examples() {
        let m = [2.0; 9];
        let r = [0.5; 9];
        let a0 = phase(0, 4.0, &m, &r).unwrap();
        assert!((a0 + 0.5 * 4.0 / 0.5).abs() < 1e-14);
        assert!((phase(1, 4.0, &m, &r).unwrap() - 3.0 * a0).abs() < 1e-14);
        // Richardson: an even count exercises the 3/8 closing panel
        let f = |s: f64| 1.0 / (1.0 + 0.3 * s.sin());
        let fine: Vec<f64> = (0..=4000).map(|k| f(k as f64 * 0.001)).collect();
        let coarse: Vec<f64> = (0..=2000).map(|k| f(k as f64 * 0.002)).collect();
        let odd: Vec<f64> = (0..=3999).map(|k| f(k as f64 * 4.0 / 3999.0)).collect();
        let a = simpson(0.001, &fine);
        assert!((a - simpson(0.002, &coarse)).abs() < 1e-10);
        assert!((a - simpson(4.0 / 3999.0, &odd)).abs() < 1e-10);
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 0.3), 1.0);
        assert_eq!(hermite(3, 2.0), 8.0 * 8.0 - 12.0 * 2.0);
        assert!((hermite(4, 0.5) - (16.0 * 0.0625 - 48.0 * 0.25 + 12.0)).abs() < 1e-12);
    }

    #[test]
    fn ground_state_shape() {
        let (hp, _) = stationary(1.0, 1.0);
        let es = ErmakovState { component: Component::Minus, rho: 1.0, rho_dot: 0.0 };
        let spec = WaveSpec::new(0, Component::Minus).unwrap();
        for z in [0.0, 0.7, -2.0] {
            let v = eigenfunction(&spec, &es, &hp, z);
            assert!((v - C64::from((-z * z / 2.0f64).exp())).norm() < 1e-15);
        }
        assert!(WaveSpec::new(21, Component::Plus).is_err());
    }

    #[test]
    fn stationary_tdse_residual_is_small() {
        let (hp, _) = stationary(1.0, 1.0);
        let g = Grid1D::new(-8.0, 8.0, 161).unwrap();
        let state = |t: f64| {
            let s = CoupledState {
                coefficients: MapCoefficients::new(t, 0.0, 0.0, 0.0, 0.0),
                minus: ErmakovState { component: Component::Minus, rho: 1.0, rho_dot: 0.0 },
                plus: ErmakovState { component: Component::Plus, rho: 1.0, rho_dot: 0.0 },
                phase_integral: [t, t],
            };
            product_state_with(g, g, 1, 0, &s, &hp).unwrap()
        };
        let dt = 1e-3;
        let r = tdse_residual(&state(-dt), &state(0.0), &state(dt), dt, &hp).unwrap();
        assert!(r < 1e-2 && r > 0.0, "{r}");
    }

    #[test]
    fn grid_operators_are_hermitian() {
        let g = Grid1D::new(-3.0, 3.0, 17).unwrap();
        for id in GeneratorId::BASIS {
            let a = grid_operator(&generator(id), &g, &g).to_dense();
            assert!(crate::linalg::max_abs(&(a.adjoint() - &a)) < 1e-13, "{}", id.name());
        }
    }

    #[test]
    fn flow_inverts() {
        let g = Grid1D::new(-8.0, 8.0, 48).unwrap();
        let s = GridState2D::from_fn(g, g, |x, y| C64::from((-(x * x + y * y) / 2.0 + 0.3 * x).exp()));
        assert_eq!(apply_flow_grid(FlowFactor::new(GeneratorId::Jp, 0.0), &s).unwrap(), s);
        for id in [GeneratorId::Jp, GeneratorId::Jm, GeneratorId::Lp, GeneratorId::Lm] {
            let f = FlowFactor::new(id, 0.3);
            let back = apply_flow_grid(f.inverse(), &apply_flow_grid(f, &s).unwrap()).unwrap();
            let err = back.amp.iter().zip(&s.amp).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
            assert!(err < 1e-7, "{} {err}", id.name());
        }
        assert!((quasi_norm(&s, &[]).unwrap() - s.norm_sq()).abs() < 1e-14);
    }

    #[test]
    fn gaussian_flow_matches_grid() {
        let b0 = Matrix2::new(C64::new(0.2, 1.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-0.1, 1.5));
        let g = Grid1D::new(-8.0, 8.0, 161).unwrap();
        let phi = GridState2D::from_fn(g, g, |x, y| {
            (C64::new(0.0, 0.5) * (b0[(0, 0)] * x * x + b0[(1, 1)] * y * y)).exp()
        });
        let ny = g.points;
        let centre = 80 * ny + 80;
        for id in [GeneratorId::Jp, GeneratorId::Jm, GeneratorId::Lp, GeneratorId::Lm] {
            let f = FlowFactor::new(id, 0.2);
            let b = gaussian_flow(&b0, f).unwrap();
            assert!((b - b.transpose()).norm() < 1e-14);
            let back = gaussian_flow(&b, f.inverse()).unwrap();
            assert!((back - b0).norm() < 1e-12);
            let psi = apply_flow_grid(f, &phi).unwrap();
            for (i, j) in [(90, 80), (80, 95), (88, 72)] {
                let (x, y) = (g.coord(i), g.coord(j));
                let want = (C64::new(0.0, 0.5) * (b[(0, 0)] * x * x + 2.0 * b[(0, 1)] * x * y + b[(1, 1)] * y * y)).exp();
                let got = psi.amp[i * ny + j] / psi.amp[centre];
                assert!((got - want).norm() < 1e-2 * want.norm(), "{} {got} {want}", id.name());
            }
        }
    }

    #[test]
    fn boundary_guard() {
        let g = Grid1D::new(-2.0, 2.0, 16).unwrap();
        let s = GridState2D::from_fn(g, g, |_, _| C64::from(1.0));
        assert!(matches!(s.check_boundary(BOUNDARY_TOL), Err(Error::BoundaryContamination { .. })));
        assert!(Grid1D::new(0.0, 1.0, 15).is_err());
    }
}
