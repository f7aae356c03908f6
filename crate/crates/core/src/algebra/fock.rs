//! Truncated two-mode number basis (unit mass and frequency ladders).
//!
//! Basis index is n_x·N + n_y with n_x, n_y < N. Single-mode quadratic
//! monomials are filled from exact matrix elements, so the only truncation
//! error sits in the last two rows and columns of each mode.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use num_traits::Float;

use super::{generator, CommutationRelation, Coord, FlowFactor, QuadraticOperator};
use crate::error::Result;
use crate::linalg::{complex_eigenvalues, expm, expmv, real_eigenvalues, SparseMatrix};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn ladder_pair(n: usize, below: C64, above: C64) -> SparseMatrix {
    let mut t = Vec::new();
    for k in 0..n.saturating_sub(1) {
        let s = ((k + 1) as f64).sqrt() / core::f64::consts::SQRT_2;
        t.push((k + 1, k, below * s));
        t.push((k, k + 1, above * s));
    }
    SparseMatrix::from_triplets(n, t)
}

fn position(n: usize) -> SparseMatrix {
    ladder_pair(n, c(1.0, 0.0), c(1.0, 0.0))
}

fn momentum(n: usize) -> SparseMatrix {
    ladder_pair(n, c(0.0, 1.0), c(0.0, -1.0))
}

// z², p² and ½(zp + pz) with all kept entries exact.
fn square_like(n: usize, diag: f64, below: C64, above: C64) -> SparseMatrix {
    let mut t = Vec::new();
    for k in 0..n {
        if diag != 0.0 {
            t.push((k, k, c(diag * (k as f64 + 0.5), 0.0)));
        }
        if k + 2 < n {
            let s = (((k + 1) * (k + 2)) as f64).sqrt() / 2.0;
            t.push((k + 2, k, below * s));
            t.push((k, k + 2, above * s));
        }
    }
    SparseMatrix::from_triplets(n, t)
}

fn position_sq(n: usize) -> SparseMatrix {
    square_like(n, 1.0, c(1.0, 0.0), c(1.0, 0.0))
}

fn momentum_sq(n: usize) -> SparseMatrix {
    square_like(n, 1.0, c(-1.0, 0.0), c(-1.0, 0.0))
}

fn dilation(n: usize) -> SparseMatrix {
    square_like(n, 0.0, c(0.0, 1.0), c(0.0, -1.0))
}

/// Number-basis image of a quadratic operator, dimension N².
pub fn fock_sparse(a: &QuadraticOperator, n: usize) -> SparseMatrix {
    assert!(n >= 2, "truncation must be at least 2");
    use Coord::*;
    let id = SparseMatrix::identity(n);
    let (z, p) = (position(n), momentum(n));
    let mut out = SparseMatrix::zero(n * n);
    let mut acc = |coef: C64, m: SparseMatrix| {
        if coef != c(0.0, 0.0) {
            out = out.add(&m.scale(coef));
        }
    };
    let half = |i, j| a.get(i, j) * 0.5;
    acc(half(X, X), SparseMatrix::kron(&position_sq(n), &id));
    acc(half(Y, Y), SparseMatrix::kron(&id, &position_sq(n)));
    acc(half(Px, Px), SparseMatrix::kron(&momentum_sq(n), &id));
    acc(half(Py, Py), SparseMatrix::kron(&id, &momentum_sq(n)));
    acc(a.get(X, Y), SparseMatrix::kron(&z, &z));
    acc(a.get(X, Px), SparseMatrix::kron(&dilation(n), &id));
    acc(a.get(X, Py), SparseMatrix::kron(&z, &p));
    acc(a.get(Y, Px), SparseMatrix::kron(&p, &z));
    acc(a.get(Y, Py), SparseMatrix::kron(&id, &dilation(n)));
    acc(a.get(Px, Py), SparseMatrix::kron(&p, &p));
    out
}

pub fn fock_matrix(a: &QuadraticOperator, n: usize) -> DMatrix<C64> {
    fock_sparse(a, n).to_dense()
}

/// Basis indices with both occupation numbers below N − margin.
pub fn interior_indices(n: usize, margin: usize) -> Vec<usize> {
    let keep = n.saturating_sub(margin);
    (0..n * n).filter(|&k| k / n < keep && k % n < keep).collect()
}

pub fn interior_block(m: &DMatrix<C64>, n: usize, margin: usize) -> DMatrix<C64> {
    let idx = interior_indices(n, margin);
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Interior-block deviation of the truncated commutator from i × the
/// tabulated right-hand side.
pub fn fock_relation_deviation(rel: &CommutationRelation, n: usize, margin: usize) -> f64 {
    let a = fock_matrix(&generator(rel.lhs.0), n);
    let b = fock_matrix(&generator(rel.lhs.1), n);
    let want = fock_matrix(&rel.expected(), n) * c(0.0, 1.0);
    let diff = &a * &b - &b * &a - want;
    interior_block(&diff, n, margin).iter().fold(0.0, |m: f64, z| m.max(z.norm()))
}

/// exp(f·G) of the truncated generator.
pub fn fock_flow(factor: FlowFactor, n: usize) -> DMatrix<C64> {
    let g = fock_matrix(&generator(factor.generator), n) * C64::from(factor.coefficient);
    expm(&g)
}

/// F_1 F_2 ⋯ F_k in the truncated basis, built column by column.
pub fn fock_product(factors: &[FlowFactor], n: usize) -> Result<DMatrix<C64>> {
    let dim = n * n;
    let gens: Vec<SparseMatrix> = factors.iter().map(|f| fock_sparse(&generator(f.generator), n)).collect();
    let mut out = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut v = alloc::vec![c(0.0, 0.0); dim];
        v[j] = c(1.0, 0.0);
        for (f, g) in factors.iter().zip(&gens).rev() {
            v = expmv(g, C64::from(f.coefficient), &v, 1e-13)?;
        }
        out.set_column(j, &nalgebra::DVector::from_vec(v));
    }
    Ok(out)
}

/// Eigenvalues of the truncated image of `a`, sorted by real part.
///
/// Quadratic operators preserve the parity of n_x + n_y, so the two
/// parity blocks are diagonalized separately. When the phase change
/// |n⟩ → i^{n_y}|n⟩ makes the matrix real, the real QR path is used.
pub fn fock_spectrum(a: &QuadraticOperator, n: usize) -> Result<Vec<C64>> {
    let sp = fock_sparse(a, n);
    let phase = |k: usize| match (k % n) % 4 {
        0 => c(1.0, 0.0),
        1 => c(0.0, 1.0),
        2 => c(-1.0, 0.0),
        _ => c(0.0, -1.0),
    };
    let scale = sp.triplets().fold(0.0, |m, (_, _, v)| m.max(v.norm()));
    let rotated: Vec<(usize, usize, C64)> = sp
        .triplets()
        .map(|(i, j, v)| (i, j, phase(i).conj() * v * phase(j)))
        .collect();
    let realifiable = rotated.iter().all(|(_, _, v)| v.im.abs() <= 1e-14 * scale);
    let mut eig = Vec::with_capacity(n * n);
    for parity in 0..2 {
        let idx: Vec<usize> = (0..n * n).filter(|k| (k / n + k % n) % 2 == parity).collect();
        let mut pos = alloc::vec![usize::MAX; n * n];
        for (o, &k) in idx.iter().enumerate() {
            pos[k] = o;
        }
        let d = idx.len();
        if realifiable {
            let mut block = alloc::vec![0.0; d * d];
            for &(i, j, v) in &rotated {
                if pos[i] != usize::MAX {
                    block[pos[i] * d + pos[j]] = v.re;
                }
            }
            eig.extend(real_eigenvalues(d, block)?);
        } else {
            let mut block = DMatrix::zeros(d, d);
            for (i, j, v) in sp.triplets() {
                if pos[i] != usize::MAX {
                    block[(pos[i], pos[j])] = v;
                }
            }
            eig.extend(complex_eigenvalues(&block)?);
        }
    }
    eig.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap_or(core::cmp::Ordering::Equal));
    Ok(eig)
}
