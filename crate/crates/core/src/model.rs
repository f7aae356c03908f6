//! The coupled oscillator H = (p_x² + p_y²)/2m + m(Ω_x²x² + Ω_y²y²)/2 + iλxy.

use num_complex::Complex64 as C64;

#[allow(unused_imports)]
use num_traits::Float;

use crate::algebra::{generator, Coord, GeneratorId, QuadraticOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    m: f64,
    omega_x: f64,
    omega_y: f64,
    lambda: f64,
}

impl ModelParams {
    pub fn new(m: f64, omega_x: f64, omega_y: f64, lambda: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidParams("mass must be positive and finite"));
        }
        if !(omega_x.is_finite() && omega_x > 0.0 && omega_y.is_finite() && omega_y > 0.0) {
            return Err(Error::InvalidParams("bare frequencies must be positive and finite"));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParams("coupling must be finite"));
        }
        Ok(ModelParams { m, omega_x, omega_y, lambda })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn omega_x(&self) -> f64 {
        self.omega_x
    }

    pub fn omega_y(&self) -> f64 {
        self.omega_y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Ω_+² = Ω_y² + Ω_x²
    pub fn omega_plus_sq(&self) -> f64 {
        self.omega_y * self.omega_y + self.omega_x * self.omega_x
    }

    /// Ω_-² = Ω_y² − Ω_x²
    pub fn omega_minus_sq(&self) -> f64 {
        self.omega_y * self.omega_y - self.omega_x * self.omega_x
    }

    /// Λ^z_± = (1 ± m²Ω_z²)/2m for z = x (`x_mode`) or y.
    pub fn big_lambda(&self, x_mode: bool, plus: bool) -> f64 {
        let w = if x_mode { self.omega_x } else { self.omega_y };
        let s = if plus { 1.0 } else { -1.0 };
        (1.0 + s * self.m * self.m * w * w) / (2.0 * self.m)
    }

    /// δ = Ω_-⁴ − 4λ²/m²
    pub fn delta(&self) -> f64 {
        let om = self.omega_minus_sq();
        om * om - 4.0 * self.lambda * self.lambda / (self.m * self.m)
    }

    /// Default absolute tolerance on δ for the exceptional classification.
    pub fn default_tolerance(&self) -> f64 {
        let op = self.omega_plus_sq();
        1e-12 * (op * op).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeKind {
    Unbroken,
    Broken,
    Exceptional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub kind: RegimeKind,
    pub delta: f64,
}

pub fn classify(p: &ModelParams, tol: f64) -> Regime {
    let delta = p.delta();
    let kind = if delta.abs() <= tol {
        RegimeKind::Exceptional
    } else if delta > 0.0 {
        RegimeKind::Unbroken
    } else {
        RegimeKind::Broken
    };
    Regime { kind, delta }
}

/// Effective frequencies of the two normal modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub omega_x: C64,
    pub omega_y: C64,
}

impl Spectrum {
    pub fn omega_x_sq(&self) -> C64 {
        self.omega_x * self.omega_x
    }

    pub fn omega_y_sq(&self) -> C64 {
        self.omega_y * self.omega_y
    }

    pub fn is_real(&self) -> bool {
        self.omega_x.im == 0.0 && self.omega_y.im == 0.0
    }
}

fn squared_roots(p: &ModelParams) -> (C64, C64) {
    let m = p.m;
    let om = p.omega_minus_sq();
    let inner = C64::from(m * m * om * om - 4.0 * p.lambda * p.lambda).sqrt();
    let base = C64::from(m * p.omega_plus_sq());
    ((base + inner) / (2.0 * m), (base - inner) / (2.0 * m))
}

/// ω² = (mΩ_+² ± √(m²Ω_-⁴ − 4λ²))/2m, with ω_x taking the + inner root.
pub fn eigenfrequencies(p: &ModelParams) -> Spectrum {
    let (plus, minus) = squared_roots(p);
    Spectrum { omega_x: plus.sqrt(), omega_y: minus.sqrt() }
}

/// Same roots, labelled by the coordinate each mode reduces to as λ → 0.
///
/// The x-mode carries the + root iff Ω_x ≥ Ω_y.
pub fn mode_frequencies(p: &ModelParams) -> Spectrum {
    let s = eigenfrequencies(p);
    if p.omega_x >= p.omega_y {
        s
    } else {
        Spectrum { omega_x: s.omega_y, omega_y: s.omega_x }
    }
}

/// E = (n1 + ½)ω_x + (n2 + ½)ω_y in the + root labelling.
pub fn energy(p: &ModelParams, n1: u32, n2: u32) -> C64 {
    let s = eigenfrequencies(p);
    s.omega_x * (n1 as f64 + 0.5) + s.omega_y * (n2 as f64 + 0.5)
}

/// Coordinate form of H.
pub fn build_hamiltonian(p: &ModelParams) -> QuadraticOperator {
    use Coord::*;
    let m = p.m;
    QuadraticOperator::zero()
        .with_re(Px, Px, 1.0 / m)
        .with_re(Py, Py, 1.0 / m)
        .with_re(X, X, m * p.omega_x * p.omega_x)
        .with_re(Y, Y, m * p.omega_y * p.omega_y)
        .with(X, Y, C64::new(0.0, p.lambda))
}

/// Σ Λ^z_σ K^z_σ + iλ(I_+ + I_-).
pub fn build_hamiltonian_algebraic(p: &ModelParams) -> QuadraticOperator {
    use GeneratorId::*;
    generator(KpX) * p.big_lambda(true, true)
        + generator(KmX) * p.big_lambda(true, false)
        + generator(KpY) * p.big_lambda(false, true)
        + generator(KmY) * p.big_lambda(false, false)
        + (generator(Ip) + generator(Im)) * C64::new(0.0, p.lambda)
}
