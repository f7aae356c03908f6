//! Quadratic operators on two-dimensional phase space.
//!
//! An operator is stored as the complex symmetric matrix `C` of the
//! Weyl-ordered form ½ vᵀ C v with v = (x, y, p_x, p_y). Commutators,
//! similarity transforms by exponentials of generators and the gauge term of
//! a product of flows all reduce to 4×4 matrix algebra.

pub mod fock;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{expm, symmetric_norm, Mat4};

/// Ω_sp with [v_i, v_j] = i Ω_sp[i][j].
pub const SYMPLECTIC: [[i8; 4]; 4] = [[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]];

fn symplectic() -> Mat4 {
    Mat4::from_fn(|i, j| C64::from(SYMPLECTIC[i][j] as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coord {
    X = 0,
    Y = 1,
    Px = 2,
    Py = 3,
}

impl Coord {
    pub const ALL: [Coord; 4] = [Coord::X, Coord::Y, Coord::Px, Coord::Py];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// ½ Σ C_ij v_i v_j, Weyl ordered. Storage is always symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticOperator {
    c: Mat4,
}

impl QuadraticOperator {
    pub fn zero() -> Self {
        QuadraticOperator { c: Mat4::zeros() }
    }

    /// Symmetrizes the input: (M + Mᵀ)/2.
    pub fn from_matrix(m: Mat4) -> Self {
        QuadraticOperator { c: (m + m.transpose()) * C64::from(0.5) }
    }

    pub fn from_real(m: Matrix4<f64>) -> Self {
        Self::from_matrix(m.map(C64::from))
    }

    pub fn coeff(&self) -> &Mat4 {
        &self.c
    }

    pub fn get(&self, i: Coord, j: Coord) -> C64 {
        self.c[(i.index(), j.index())]
    }

    /// Sets C_ij and C_ji.
    pub fn with(mut self, i: Coord, j: Coord, v: C64) -> Self {
        self.c[(i.index(), j.index())] = v;
        self.c[(j.index(), i.index())] = v;
        self
    }

    pub fn with_re(self, i: Coord, j: Coord, v: f64) -> Self {
        self.with(i, j, C64::from(v))
    }

    pub fn real_part(&self) -> Matrix4<f64> {
        self.c.map(|z| z.re)
    }

    pub fn imag_part(&self) -> Matrix4<f64> {
        self.c.map(|z| z.im)
    }

    pub fn is_hermitian(&self) -> bool {
        self.c.iter().all(|z| z.im == 0.0)
    }

    pub fn scale(self, s: C64) -> Self {
        QuadraticOperator { c: self.c * s }
    }

    /// Largest absolute entry of C.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

impl Add for QuadraticOperator {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        QuadraticOperator { c: self.c + o.c }
    }
}

impl Sub for QuadraticOperator {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        QuadraticOperator { c: self.c - o.c }
    }
}

impl Neg for QuadraticOperator {
    type Output = Self;
    fn neg(self) -> Self {
        QuadraticOperator { c: -self.c }
    }
}

impl Mul<f64> for QuadraticOperator {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(C64::from(s))
    }
}

impl Mul<C64> for QuadraticOperator {
    type Output = Self;
    fn mul(self, s: C64) -> Self {
        self.scale(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorId {
    KpX,
    KmX,
    K0X,
    KpY,
    KmY,
    K0Y,
    Jp,
    Jm,
    Ip,
    Im,
    Lp,
    Lm,
}

impl GeneratorId {
    /// The ten independent generators.
    pub const BASIS: [GeneratorId; 10] = [
        GeneratorId::KpX,
        GeneratorId::KmX,
        GeneratorId::K0X,
        GeneratorId::KpY,
        GeneratorId::KmY,
        GeneratorId::K0Y,
        GeneratorId::Jp,
        GeneratorId::Jm,
        GeneratorId::Ip,
        GeneratorId::Im,
    ];

    pub const ALL: [GeneratorId; 12] = [
        GeneratorId::KpX,
        GeneratorId::KmX,
        GeneratorId::K0X,
        GeneratorId::KpY,
        GeneratorId::KmY,
        GeneratorId::K0Y,
        GeneratorId::Jp,
        GeneratorId::Jm,
        GeneratorId::Ip,
        GeneratorId::Im,
        GeneratorId::Lp,
        GeneratorId::Lm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorId::KpX => "K+x",
            GeneratorId::KmX => "K-x",
            GeneratorId::K0X => "K0x",
            GeneratorId::KpY => "K+y",
            GeneratorId::KmY => "K-y",
            GeneratorId::K0Y => "K0y",
            GeneratorId::Jp => "J+",
            GeneratorId::Jm => "J-",
            GeneratorId::Ip => "I+",
            GeneratorId::Im => "I-",
            GeneratorId::Lp => "L+",
            GeneratorId::Lm => "L-",
        }
    }
}

/// Real symmetric C of a generator.
///
/// K±ᶻ = ½(p_z² ± z²), K0ᶻ = ½{z, p_z}, J± = ½(x p_y ± y p_x),
/// I± = ½(xy ± p_x p_y), L+ = ½xy, L- = ½p_x p_y.
pub fn generator(id: GeneratorId) -> QuadraticOperator {
    use Coord::*;
    let z = QuadraticOperator::zero();
    match id {
        GeneratorId::KpX => z.with_re(X, X, 1.0).with_re(Px, Px, 1.0),
        GeneratorId::KmX => z.with_re(X, X, -1.0).with_re(Px, Px, 1.0),
        GeneratorId::K0X => z.with_re(X, Px, 1.0),
        GeneratorId::KpY => z.with_re(Y, Y, 1.0).with_re(Py, Py, 1.0),
        GeneratorId::KmY => z.with_re(Y, Y, -1.0).with_re(Py, Py, 1.0),
        GeneratorId::K0Y => z.with_re(Y, Py, 1.0),
        GeneratorId::Jp => z.with_re(X, Py, 0.5).with_re(Y, Px, 0.5),
        GeneratorId::Jm => z.with_re(X, Py, 0.5).with_re(Y, Px, -0.5),
        GeneratorId::Ip => z.with_re(X, Y, 0.5).with_re(Px, Py, 0.5),
        GeneratorId::Im => z.with_re(X, Y, 0.5).with_re(Px, Py, -0.5),
        GeneratorId::Lp => z.with_re(X, Y, 0.5),
        GeneratorId::Lm => z.with_re(Px, Py, 0.5),
    }
}

/// Ĉ with [Â, B̂] = iĈ, namely C_A Ω C_B − C_B Ω C_A.
pub fn bracket(a: &QuadraticOperator, b: &QuadraticOperator) -> QuadraticOperator {
    let w = symplectic();
    let m = a.c * w * b.c - b.c * w * a.c;
    // exact symmetry is guaranteed algebraically; re-symmetrize for rounding
    QuadraticOperator::from_matrix(m)
}

/// One factor e^{f G} of a product of flows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowFactor {
    pub generator: GeneratorId,
    pub coefficient: f64,
}

impl FlowFactor {
    pub fn new(generator: GeneratorId, coefficient: f64) -> Self {
        FlowFactor { generator, coefficient }
    }

    pub fn inverse(self) -> Self {
        FlowFactor { coefficient: -self.coefficient, ..self }
    }
}

/// S with e^{fG} vᵀ e^{-fG} = vᵀ S, i.e. exp(i f C_G Ω).
pub fn flow_matrix(factor: FlowFactor) -> Mat4 {
    let g = generator(factor.generator);
    let arg = g.c * symplectic() * C64::new(0.0, factor.coefficient);
    expm(&arg)
}

/// e^{fG} Â e^{-fG}.
pub fn adjoint_apply(factor: FlowFactor, a: &QuadraticOperator) -> QuadraticOperator {
    let s = flow_matrix(factor);
    QuadraticOperator::from_matrix(s * a.c * s.transpose())
}

/// F_1 ⋯ F_n Â (F_1 ⋯ F_n)^{-1}.
pub fn adjoint_chain(factors: &[FlowFactor], a: &QuadraticOperator) -> QuadraticOperator {
    let s = factors.iter().fold(Mat4::identity(), |acc, f| acc * flow_matrix(*f));
    QuadraticOperator::from_matrix(s * a.c * s.transpose())
}

/// i(∂_t η)η^{-1} for η = F_1 ⋯ F_n with coefficient rates ḟ_k.
pub fn gauge_term(factors: &[FlowFactor], rates: &[f64]) -> Result<QuadraticOperator> {
    if factors.len() != rates.len() {
        return Err(Error::LengthMismatch { factors: factors.len(), rates: rates.len() });
    }
    let mut out = QuadraticOperator::zero();
    let mut s = Mat4::identity();
    for (f, &r) in factors.iter().zip(rates) {
        if r != 0.0 {
            let g = generator(f.generator).c * C64::new(0.0, r);
            out = out + QuadraticOperator::from_matrix(s * g * s.transpose());
        }
        s *= flow_matrix(*f);
    }
    Ok(out)
}

/// (Hermitian part, anti-Hermitian part): C_H = Re C, C_A = i Im C.
pub fn hermitian_split(a: &QuadraticOperator) -> (QuadraticOperator, QuadraticOperator) {
    let h = QuadraticOperator { c: a.c.map(|z| C64::new(z.re, 0.0)) };
    let ah = QuadraticOperator { c: a.c.map(|z| C64::new(0.0, z.im)) };
    (h, ah)
}

fn spectral(m: &Matrix4<f64>) -> f64 {
    let flat: Vec<f64> = (0..16).map(|k| m[(k / 4, k % 4)]).collect();
    symmetric_norm(4, &flat)
}

/// ‖Im C‖₂ / ‖Re C‖₂ (absolute ‖Im C‖₂ when Re C vanishes).
pub fn anti_hermitian_residual(a: &QuadraticOperator) -> f64 {
    let im = spectral(&a.imag_part());
    let re = spectral(&a.real_part());
    if re > 0.0 {
        im / re
    } else {
        im
    }
}

/// One row of the commutator table: [lhs.0, lhs.1] = i Σ c_k G_k.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutationRelation {
    pub name: String,
    pub lhs: (GeneratorId, GeneratorId),
    pub rhs: Vec<(f64, GeneratorId)>,
}

impl CommutationRelation {
    pub fn expected(&self) -> QuadraticOperator {
        self.rhs
            .iter()
            .fold(QuadraticOperator::zero(), |acc, &(c, g)| acc + generator(g) * c)
    }

    /// Largest entry deviation of bracket(lhs) from the tabulated value.
    pub fn deviation(&self) -> f64 {
        (bracket(&generator(self.lhs.0), &generator(self.lhs.1)) - self.expected()).max_abs()
    }
}

/// Largest entry of [A,[B,C]] + [B,[C,A]] + [C,[A,B]] in bracket form.
pub fn jacobi_defect(a: &QuadraticOperator, b: &QuadraticOperator, c: &QuadraticOperator) -> f64 {
    (bracket(a, &bracket(b, c)) + bracket(b, &bracket(c, a)) + bracket(c, &bracket(a, b))).max_abs()
}

/// The full table with every ± and z expanded: 45 relations.
pub fn commutation_table() -> Vec<CommutationRelation> {
    use GeneratorId::*;
    let mut rows = Vec::new();
    let mut push = |a: GeneratorId, b: GeneratorId, rhs: &[(f64, GeneratorId)]| {
        rows.push(CommutationRelation {
            name: format!("[{},{}]", a.name(), b.name()),
            lhs: (a, b),
            rhs: rhs.to_vec(),
        });
    };
    // per mode: (K+, K-, K0)
    for (kp, km, k0) in [(KpX, KmX, K0X), (KpY, KmY, K0Y)] {
        push(k0, kp, &[(2.0, km)]);
        push(k0, km, &[(2.0, kp)]);
        push(kp, km, &[(2.0, k0)]);
    }
    for a in [KpX, KmX, K0X] {
        for b in [KpY, KmY, K0Y] {
            push(a, b, &[]);
        }
    }
    push(K0X, Jp, &[(-1.0, Jm)]);
    push(K0X, Jm, &[(-1.0, Jp)]);
    push(K0Y, Jp, &[(1.0, Jm)]);
    push(K0Y, Jm, &[(1.0, Jp)]);
    for k0 in [K0X, K0Y] {
        push(k0, Ip, &[(-1.0, Im)]);
        push(k0, Im, &[(-1.0, Ip)]);
    }
    push(KpX, Jp, &[(1.0, Im)]);
    push(KmX, Jp, &[(-1.0, Ip)]);
    push(KpY, Jp, &[(1.0, Im)]);
    push(KmY, Jp, &[(-1.0, Ip)]);
    push(KpX, Jm, &[(-1.0, Ip)]);
    push(KmX, Jm, &[(1.0, Im)]);
    push(KpY, Jm, &[(1.0, Ip)]);
    push(KmY, Jm, &[(-1.0, Im)]);
    push(KpX, Ip, &[(1.0, Jm)]);
    push(KmX, Ip, &[(-1.0, Jp)]);
    push(KpY, Ip, &[(-1.0, Jm)]);
    push(KmY, Ip, &[(-1.0, Jp)]);
    push(KpX, Im, &[(-1.0, Jp)]);
    push(KmX, Im, &[(1.0, Jm)]);
    push(KpY, Im, &[(-1.0, Jp)]);
    push(KmY, Im, &[(-1.0, Jm)]);
    push(Jp, Jm, &[(0.5, K0X), (-0.5, K0Y)]);
    push(Ip, Im, &[(-0.5, K0X), (-0.5, K0Y)]);
    push(Jp, Ip, &[(0.5, KmX), (0.5, KmY)]);
    push(Jp, Im, &[(-0.5, KpX), (-0.5, KpY)]);
    push(Jm, Ip, &[(-0.5, KpX), (0.5, KpY)]);
    push(Jm, Im, &[(0.5, KmX), (-0.5, KmY)]);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use GeneratorId::*;

    #[test]
    fn symplectic_convention() {
        let w = symplectic();
        assert_eq!(w + w.transpose(), Mat4::zeros());
        assert_eq!(w * w, -Mat4::identity());
        // [x, p_x] = i
        assert_eq!(SYMPLECTIC[Coord::X.index()][Coord::Px.index()], 1);
    }

    #[test]
    fn generator_entries() {
        let kp = generator(KpX);
        assert_eq!(kp.get(Coord::X, Coord::X), C64::from(1.0));
        assert_eq!(kp.get(Coord::Px, Coord::Px), C64::from(1.0));
        let km = generator(KmX);
        assert_eq!(km.get(Coord::X, Coord::X), C64::from(-1.0));
        assert_eq!(km.get(Coord::Px, Coord::Px), C64::from(1.0));
        assert_eq!(generator(Lp) * 2.0, generator(Ip) + generator(Im));
        assert_eq!(generator(Lm) * 2.0, generator(Ip) - generator(Im));
    }

    #[test]
    fn basis_is_independent() {
        // the ten upper triangles span the 10-dimensional space of symmetric 4x4
        let mut rows = [[0.0f64; 10]; 10];
        for (r, g) in GeneratorId::BASIS.iter().enumerate() {
            let c = generator(*g).real_part();
            let mut k = 0;
            for i in 0..4 {
                for j in i..4 {
                    rows[r][k] = c[(i, j)];
                    k += 1;
                }
            }
        }
        let m = nalgebra::SMatrix::<f64, 10, 10>::from_fn(|i, j| rows[i][j]);
        assert!(m.determinant().abs() > 1e-6);
    }

    #[test]
    fn spec_bracket_examples() {
        assert_eq!(bracket(&generator(K0X), &generator(KpX)), generator(KmX) * 2.0);
        assert_eq!(bracket(&generator(KpX), &generator(KmY)), QuadraticOperator::zero());
        let want = (generator(K0X) - generator(K0Y)) * 0.5;
        assert!((bracket(&generator(Jp), &generator(Jm)) - want).max_abs() < 1e-15);
    }

    #[test]
    fn full_table_holds() {
        let table = commutation_table();
        assert_eq!(table.len(), 45);
        for row in &table {
            assert!(row.deviation() < 1e-12, "{} off by {}", row.name, row.deviation());
        }
    }

    #[test]
    fn zero_flow_is_identity() {
        let a = generator(Jp) + generator(KmY) * 0.3;
        assert_eq!(adjoint_apply(FlowFactor::new(Lp, 0.0), &a), a);
    }

    #[test]
    fn self_flow_gauge() {
        let g = gauge_term(&[FlowFactor::new(Jm, 0.7)], &[0.25]).unwrap();
        assert!((g - generator(Jm) * C64::new(0.0, 0.25)).max_abs() < 1e-15);
        assert_eq!(
            gauge_term(&[FlowFactor::new(Jm, 0.7)], &[]),
            Err(Error::LengthMismatch { factors: 1, rates: 0 })
        );
        let z = gauge_term(&[FlowFactor::new(Jm, 0.7), FlowFactor::new(Lp, 1.0)], &[0.0, 0.0]).unwrap();
        assert_eq!(z, QuadraticOperator::zero());
    }

    #[test]
    fn split_real_and_imaginary() {
        let a = generator(KpX) * 1.5;
        assert_eq!(hermitian_split(&a), (a, QuadraticOperator::zero()));
        let b = generator(Ip) * C64::new(0.0, 2.0);
        assert_eq!(hermitian_split(&b), (QuadraticOperator::zero(), b));
    }

    #[test]
    fn flow_inverse_undoes_flow() {
        let a = generator(K0X) + generator(Im) * C64::new(0.2, 0.1);
        let f = FlowFactor::new(Jp, 0.8);
        let back = adjoint_apply(f.inverse(), &adjoint_apply(f, &a));
        assert!((back - a).max_abs() < 1e-13);
    }
}
