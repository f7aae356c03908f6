//! Dense and sparse kernels used across the engine: matrix exponential,
//! eigenvalues of general real and complex matrices, small symmetric Jacobi,
//! CSR storage and exponential-times-vector.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::allocator::Allocator;
use nalgebra::{DMatrix, DefaultAllocator, Dim, OMatrix};
use num_complex::Complex64 as C64;
use num_traits::Float;

use crate::error::{Error, Result};

pub type Mat4 = nalgebra::Matrix4<C64>;

fn norm1<D: Dim>(a: &OMatrix<C64, D, D>) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// exp(A) by scaling and squaring around a Taylor core.
///
/// Works for defective inputs (nilpotent generators) where an eigen
/// decomposition would not.
pub fn expm<D: Dim>(a: &OMatrix<C64, D, D>) -> OMatrix<C64, D, D>
where
    DefaultAllocator: Allocator<D, D>,
{
    let (r, c) = a.shape_generic();
    let ident = OMatrix::<C64, D, D>::identity_generic(r, c);
    let nrm = norm1(a);
    if nrm == 0.0 {
        return ident;
    }
    let squarings = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a * C64::from(2f64.powi(-squarings));
    let mut result = ident.clone();
    let mut term = ident;
    for k in 1..=30 {
        term = &term * &b * C64::from(1.0 / k as f64);
        result += &term;
        if norm1(&term) <= f64::EPSILON * norm1(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
/// `a` is row-major n×n and is destroyed.
pub fn jacobi_eigenvalues(n: usize, a: &mut [f64]) -> Vec<f64> {
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[idx(i, j)] * a[idx(i, j)];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[idx(i, i)]).collect()
}

/// Spectral norm of a real symmetric matrix.
pub fn symmetric_norm(n: usize, a: &[f64]) -> f64 {
    let mut work = a.to_vec();
    jacobi_eigenvalues(n, &mut work)
        .into_iter()
        .fold(0.0, |m, l| m.max(l.abs()))
}

/// Eigenvalues of a general real matrix (row-major, n×n).
///
/// Balancing, elimination to Hessenberg form, then Francis double-shift QR.
pub fn real_eigenvalues(n: usize, mut a: Vec<f64>) -> Result<Vec<C64>> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok(Vec::new());
    }
    balance(n, &mut a);
    hessenberg(n, &mut a);
    hqr(n, &mut a)
}

fn balance(n: usize, a: &mut [f64]) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j * n + i].abs();
                    r += a[i * n + j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[i * n + j] *= g;
                    }
                    for j in 0..n {
                        a[j * n + i] *= f;
                    }
                }
            }
        }
    }
}

// Gaussian elimination with pivoting; similarity transform, so the
// spectrum is preserved.
fn hessenberg(n: usize, a: &mut [f64]) {
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0;
        let mut piv = m;
        for j in m..n {
            if a[j * n + m - 1].abs() > x.abs() {
                x = a[j * n + m - 1];
                piv = j;
            }
        }
        if piv != m {
            for j in (m - 1)..n {
                a.swap(piv * n + j, m * n + j);
            }
            for j in 0..n {
                a.swap(j * n + piv, j * n + m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[i * n + m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i * n + m - 1] = y;
                    for j in m..n {
                        a[i * n + j] -= y * a[m * n + j];
                    }
                    for j in 0..n {
                        a[j * n + m] += y * a[j * n + i];
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            a[i * n + j] = 0.0;
        }
    }
}

fn hqr(n: usize, a: &mut [f64]) -> Result<Vec<C64>> {
    let ni = n as isize;
    let at = |a: &[f64], i: isize, j: isize| a[(i * ni + j) as usize];
    let idx = |i: isize, j: isize| (i * ni + j) as usize;
    let mut wr = vec![C64::new(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..ni {
        for j in (i - 1).max(0)..ni {
            anorm += at(a, i, j).abs();
        }
    }
    let mut nn = ni - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= f64::EPSILON * s {
                    a[idx(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nn, nn);
            if l == nn {
                wr[nn as usize] = C64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = at(a, nn - 1, nn - 1);
            let mut w = at(a, nn, nn - 1) * at(a, nn - 1, nn);
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nn as usize - 1] = C64::new(x + z, 0.0);
                    wr[nn as usize] = C64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                } else {
                    wr[nn as usize] = C64::new(x + p, -z);
                    wr[nn as usize - 1] = C64::new(x + p, z);
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return Err(Error::ConvergenceFailure("Hessenberg QR iteration"));
            }
            if its % 10 == 0 && its > 0 {
                t += x;
                for i in 0..=nn {
                    a[idx(i, i)] -= x;
                }
                let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            let mut z;
            loop {
                z = at(a, m, m);
                r = x - z;
                let s = y - z;
                p = (r * s - w) / at(a, m + 1, m) + at(a, m, m + 1);
                q = at(a, m + 1, m + 1) - z - r - s;
                r = at(a, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in m..(nn - 1) {
                a[idx(i + 2, i)] = 0.0;
                if i != m {
                    a[idx(i + 2, i - 1)] = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = at(a, k, k - 1);
                    q = at(a, k + 1, k - 1);
                    r = 0.0;
                    if k + 1 != nn {
                        r = at(a, k + 2, k - 1);
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[idx(k, k - 1)] = -at(a, k, k - 1);
                        }
                    } else {
                        a[idx(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        let mut pp = at(a, k, j) + q * at(a, k + 1, j);
                        if k + 1 != nn {
                            pp += r * at(a, k + 2, j);
                            a[idx(k + 2, j)] -= pp * z;
                        }
                        a[idx(k + 1, j)] -= pp * y;
                        a[idx(k, j)] -= pp * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * at(a, i, k) + y * at(a, i, k + 1);
                        if k + 1 != nn {
                            pp += z * at(a, i, k + 2);
                            a[idx(i, k + 2)] -= pp * r;
                        }
                        a[idx(i, k + 1)] -= pp * q;
                        a[idx(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr)
}

/// Eigenvalues of a general complex matrix: Householder reduction to
/// Hessenberg form followed by single-shift QR with Wilkinson shifts.
pub fn complex_eigenvalues(a: &DMatrix<C64>) -> Result<Vec<C64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut h = a.clone();
    for k in 0..n.saturating_sub(2) {
        let alpha_norm: f64 = (k + 1..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { C64::new(1.0, 0.0) } else { x0 / x0.norm() };
        let mut v: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        v[0] += phase * alpha_norm;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // H <- (I - 2vv*/v*v) H (I - 2vv*/v*v)
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for (o, vi) in v.iter().enumerate() {
                s += vi.conj() * h[(k + 1 + o, j)];
            }
            s *= 2.0 / vnorm2;
            for (o, vi) in v.iter().enumerate() {
                h[(k + 1 + o, j)] -= vi * s;
            }
        }
        for i in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for (o, vi) in v.iter().enumerate() {
                s += h[(i, k + 1 + o)] * vi;
            }
            s *= 2.0 / vnorm2;
            for (o, vi) in v.iter().enumerate() {
                h[(i, k + 1 + o)] -= s * vi.conj();
            }
        }
        for i in (k + 2)..n {
            h[(i, k)] = C64::new(0.0, 0.0);
        }
    }

    let mut eig = vec![C64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(eig);
    }
    let mut hi = n - 1;
    let mut its = 0usize;
    let mut rot: Vec<(f64, C64)> = Vec::with_capacity(n);
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        let mut l = hi;
        while l > 0 {
            let s = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            if h[(l, l - 1)].norm() <= f64::EPSILON * s.max(f64::MIN_POSITIVE) {
                h[(l, l - 1)] = C64::new(0.0, 0.0);
                break;
            }
            l -= 1;
        }
        if l == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            its = 0;
            continue;
        }
        its += 1;
        if its > 100 {
            return Err(Error::ConvergenceFailure("complex QR iteration"));
        }
        let (a11, a12, a21, a22) = (h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)]);
        let mu = if its % 11 == 0 {
            a22 + C64::new(a21.norm(), 0.0)
        } else {
            let half = (a11 - a22) * 0.5;
            let disc = (half * half + a12 * a21).sqrt();
            let r1 = a22 - a12 * a21 / (half + disc);
            let r2 = a22 - a12 * a21 / (half - disc);
            let pick = |r: C64| if r.is_finite() { r } else { a22 };
            let (r1, r2) = (pick(r1), pick(r2));
            if (r1 - a22).norm() <= (r2 - a22).norm() { r1 } else { r2 }
        };
        for i in l..=hi {
            h[(i, i)] -= mu;
        }
        rot.clear();
        for k in l..hi {
            let (x, y) = (h[(k, k)], h[(k + 1, k)]);
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (1.0, C64::new(0.0, 0.0))
            } else if x.norm() == 0.0 {
                (0.0, (y / r).conj())
            } else {
                let c = x.norm() / r;
                (c, (x / x.norm()) * y.conj() / r)
            };
            // [c, s; -s*, c] applied to rows k, k+1
            for j in k..=hi {
                let (u, w) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = u * c + s * w;
                h[(k + 1, j)] = -s.conj() * u + w * c;
            }
            rot.push((c, s));
        }
        for (o, &(c, s)) in rot.iter().enumerate() {
            let k = l + o;
            let top = (k + 2).min(hi);
            for i in l..=top {
                let (u, w) = (h[(i, k)], h[(i, k + 1)]);
                h[(i, k)] = u * c + w * s.conj();
                h[(i, k + 1)] = -u * s + w * c;
            }
        }
        for i in l..=hi {
            h[(i, i)] += mu;
        }
    }
    Ok(eig)
}

/// Compressed sparse row matrix over complex numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseMatrix {
    /// Duplicates are summed and exact zeros dropped.
    pub fn from_triplets(dim: usize, mut trip: Vec<(usize, usize, C64)>) -> Self {
        trip.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<C64> = Vec::with_capacity(trip.len());
        let mut rows = Vec::with_capacity(trip.len());
        for (i, j, v) in trip {
            assert!(i < dim && j < dim, "triplet out of range");
            if let (Some(&li), Some(&lj)) = (rows.last(), cols.last()) {
                if li == i && lj == j {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((i, j), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != C64::new(0.0, 0.0) {
                row_ptr[i + 1] += 1;
                keep_cols.push(j);
                keep_vals.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { dim, row_ptr, cols: keep_cols, vals: keep_vals }
    }

    pub fn zero(dim: usize) -> Self {
        SparseMatrix { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); dim])
    }

    pub fn diagonal(d: &[C64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// out = self · x
    pub fn mul_vec_into(&self, x: &[C64], out: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *o = s;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(self.dim, self.triplets().chain(other.triplets()).collect())
    }

    pub fn matmul(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut trip = Vec::new();
        for (i, k, a) in self.triplets() {
            for kk in other.row_ptr[k]..other.row_ptr[k + 1] {
                trip.push((i, other.cols[kk], a * other.vals[kk]));
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect())
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.dim];
        for (_, j, v) in self.triplets() {
            col[j] += v.norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// A ⊗ B with row index i_a·dim(B) + i_b.
    pub fn kron(a: &SparseMatrix, b: &SparseMatrix) -> Self {
        let nb = b.dim;
        let mut trip = Vec::with_capacity(a.nnz() * b.nnz());
        for (ia, ja, va) in a.triplets() {
            for (ib, jb, vb) in b.triplets() {
                trip.push((ia * nb + ib, ja * nb + jb, va * vb));
            }
        }
        Self::from_triplets(a.dim * nb, trip)
    }
}

fn inf_norm(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// exp(s·A)·v by Taylor series on substeps of 1-norm at most 4.
pub fn expmv(a: &SparseMatrix, s: C64, v: &[C64], tol: f64) -> Result<Vec<C64>> {
    let total = a.norm1() * s.norm();
    let mut out = v.to_vec();
    if total == 0.0 || inf_norm(v) == 0.0 {
        return Ok(out);
    }
    let steps = ((total / 4.0).ceil() as usize).max(1);
    let h = s / steps as f64;
    let mut term = vec![C64::new(0.0, 0.0); v.len()];
    let mut next = vec![C64::new(0.0, 0.0); v.len()];
    for _ in 0..steps {
        term.copy_from_slice(&out);
        let mut prev_small = false;
        let mut converged = false;
        for k in 1..=80 {
            a.mul_vec_into(&term, &mut next);
            let f = h / k as f64;
            for (t, n) in term.iter_mut().zip(&next) {
                *t = n * f;
            }
            for (o, t) in out.iter_mut().zip(&term) {
                *o += t;
            }
            let small = inf_norm(&term) <= tol * 1e-3 * inf_norm(&out);
            if small && prev_small {
                converged = true;
                break;
            }
            prev_small = small;
        }
        if !converged {
            return Err(Error::ConvergenceFailure("Taylor exponential-times-vector"));
        }
        if out.iter().any(|z| !z.is_finite()) {
            return Err(Error::ConvergenceFailure("exponential-times-vector overflow"));
        }
    }
    Ok(out)
}
