//! Time-independent Dyson map η = e^{2θ J_-} with tanh 2θ = 2λ/(mΩ_-²).
//!
//! θ keeps the conventional half-angle normalization, so the flow applied
//! to H is (J_-, 2θ) with J_- = ½(x p_y − y p_x).

#[allow(unused_imports)]
use num_traits::Float;

use crate::algebra::{adjoint_apply, anti_hermitian_residual, FlowFactor, GeneratorId, QuadraticOperator};
use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticSolution {
    pub theta: f64,
    pub omega_x_sq: f64,
    pub omega_y_sq: f64,
    pub mass: f64,
}

pub fn static_factor(theta: f64) -> FlowFactor {
    FlowFactor::new(GeneratorId::Jm, 2.0 * theta)
}

/// (ω_x², ω_y²) from the cosh/sinh combinations.
pub fn static_frequencies(p: &ModelParams, theta: f64) -> (f64, f64) {
    let (ch, sh) = (theta.cosh(), theta.sinh());
    let (wx2, wy2) = (p.omega_x() * p.omega_x(), p.omega_y() * p.omega_y());
    let c2 = (2.0 * theta).cosh();
    ((wx2 * ch * ch + wy2 * sh * sh) / c2, (wx2 * sh * sh + wy2 * ch * ch) / c2)
}

pub fn solve_static(p: &ModelParams) -> Result<StaticSolution> {
    let split = p.m() * p.omega_minus_sq();
    let theta = if p.lambda() == 0.0 {
        0.0
    } else {
        if split.abs() <= 2.0 * p.lambda().abs() {
            return Err(Error::NotInUnbrokenRegime { split: split.abs(), coupling: 2.0 * p.lambda().abs() });
        }
        0.5 * (2.0 * p.lambda() / split).atanh()
    };
    let (omega_x_sq, omega_y_sq) = static_frequencies(p, theta);
    Ok(StaticSolution { theta, omega_x_sq, omega_y_sq, mass: p.m() })
}

/// e^{2θJ_-} H e^{-2θJ_-}.
pub fn static_hermitian(p: &ModelParams, theta: f64) -> QuadraticOperator {
    adjoint_apply(static_factor(theta), &build_hamiltonian(p))
}

pub fn static_residual(p: &ModelParams, theta: f64) -> f64 {
    anti_hermitian_residual(&static_hermitian(p, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Coord;
    use crate::model::mode_frequencies;

    #[test]
    fn no_coupling_is_identity() {
        let p = ModelParams::new(1.0, 1.0, 2.0, 0.0).unwrap();
        let s = solve_static(&p).unwrap();
        assert_eq!(s.theta, 0.0);
        assert_eq!(static_hermitian(&p, 0.0), build_hamiltonian(&p));
        // degenerate bare frequencies are fine without coupling
        let q = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(solve_static(&q).unwrap().theta, 0.0);
    }

    #[test]
    fn setup_a_is_hermitian() {
        let p = ModelParams::new(1.0, 1.0, 2.0, 1.0).unwrap();
        let s = solve_static(&p).unwrap();
        assert!((s.theta - 0.5 * (2.0f64 / 3.0).atanh()).abs() < 1e-15);
        assert!((s.theta - 0.40235).abs() < 1e-5);
        assert!(((2.0 * s.theta).tanh() - 2.0 / 3.0).abs() < 1e-12);
        let h = static_hermitian(&p, s.theta);
        assert!(anti_hermitian_residual(&h) < 1e-10);
        assert!((h.get(Coord::X, Coord::X).re - s.omega_x_sq).abs() < 1e-10);
        assert!((h.get(Coord::Y, Coord::Y).re - s.omega_y_sq).abs() < 1e-10);
        assert!(h.get(Coord::X, Coord::Y).norm() < 1e-12);
        let modes = mode_frequencies(&p);
        assert!((modes.omega_x_sq().re - s.omega_x_sq).abs() < 1e-10);
        assert!((modes.omega_y_sq().re - s.omega_y_sq).abs() < 1e-10);
        assert!(static_residual(&p, s.theta / 2.0) > 1e-3);
    }

    #[test]
    fn broken_and_exceptional_rejected() {
        let b = ModelParams::new(1.0, 1.0, 1.0, 0.5).unwrap();
        assert!(matches!(solve_static(&b), Err(Error::NotInUnbrokenRegime { .. })));
        // |mΩ_-²| = 3 = 2|λ| exactly
        let edge = ModelParams::new(1.0, 1.0, 2.0, 1.5).unwrap();
        assert!(matches!(solve_static(&edge), Err(Error::NotInUnbrokenRegime { .. })));
    }
}
