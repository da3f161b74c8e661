//! Dense complex linear algebra helpers on top of `faer`.
//!
//! Density matrices are vectorized by column stacking, `vec(ρ)[i + n·j] = ρ[i, j]`,
//! so that `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Col, Mat, Scale, Side};

use crate::error::{Error, Result};

pub use faer::c64;

pub type CMat = Mat<c64>;
pub type CCol = Col<c64>;

pub const I: c64 = c64 { re: 0.0, im: 1.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> c64 {
    c64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize, m: usize) -> CMat {
    CMat::zeros(n, m)
}

pub fn diag(d: &[c64]) -> CMat {
    let n = d.len();
    CMat::from_fn(n, n, |i, j| if i == j { d[i] } else { ZERO })
}

pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    CMat::from_fn(n, n, |i, j| if i == j { r(d[i]) } else { ZERO })
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn transpose(a: &CMat) -> CMat {
    a.transpose().to_owned()
}

pub fn conj(a: &CMat) -> CMat {
    a.conjugate().to_owned()
}

pub fn scale(s: c64, a: &CMat) -> CMat {
    Scale(s) * a
}

pub fn trace(a: &CMat) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> c64 {
    let mut s = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Frobenius norm.
pub fn norm_fro(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn norm_max(a: &CMat) -> f64 {
    a.norm_max()
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm_one(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn norm_op(a: &CMat) -> Result<f64> {
    let s = a
        .singular_values()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    CMat::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn vec(rho: &CMat) -> CCol {
    let n = rho.nrows();
    CCol::from_fn(n * rho.ncols(), |k| rho[(k % n, k / n)])
}

pub fn unvec(v: &CCol, n: usize) -> CMat {
    CMat::from_fn(n, v.nrows() / n, |i, j| v[i + n * j])
}

/// Superoperator of `ρ ↦ A ρ B`.
pub fn sandwich(a: &CMat, b: &CMat) -> CMat {
    kron(&transpose(b), a)
}

/// Superoperator of `ρ ↦ A ρ A†`.
pub fn conjugation(a: &CMat) -> CMat {
    kron(&conj(a), a)
}

/// Superoperator of `ρ ↦ -i[H, ρ]`.
pub fn hamiltonian_super(h: &CMat) -> CMat {
    let n = h.nrows();
    let id = identity(n);
    let s = kron(&id, h) - kron(&transpose(h), &id);
    scale(-I, &s)
}

/// Superoperator of `D[L]ρ = LρL† − ½{L†L, ρ}`.
pub fn dissipator(l: &CMat) -> CMat {
    let n = l.nrows();
    let id = identity(n);
    let ldl = dagger(l) * l;
    let mut s = conjugation(l);
    s -= scale(r(0.5), &kron(&id, &ldl));
    s -= scale(r(0.5), &kron(&transpose(&ldl), &id));
    s
}

pub fn apply_super(s: &CMat, rho: &CMat) -> CMat {
    let v = vec(rho);
    let out = s * &v;
    unvec(&out, rho.nrows())
}

/// `(A + A†)/2`.
pub fn hermitize(a: &CMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let h = hermitize(a);
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..h.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Applies a real function to a Hermitian matrix through its eigendecomposition.
pub fn hermitian_fn(a: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (vals, u) = eigh(a)?;
    let fd: Vec<c64> = vals.iter().map(|&x| r(f(x))).collect();
    Ok(&u * diag(&fd) * u.adjoint())
}

/// Square root of a positive semidefinite matrix. Eigenvalues above `-1e-12` are
/// clipped to zero; anything more negative is reported.
pub fn sqrtm_psd(a: &CMat) -> Result<CMat> {
    let (vals, u) = eigh(a)?;
    if let Some(v) = vals.iter().find(|&&v| v < -1e-12 * (1.0 + vals.iter().fold(0.0f64, |m, x| m.max(x.abs())))) {
        if *v < -1e-8 {
            return Err(Error::Numerical(format!(
                "matrix square root of non-positive matrix (eigenvalue {v:.3e})"
            )));
        }
    }
    let fd: Vec<c64> = vals.iter().map(|&x| r(x.max(0.0).sqrt())).collect();
    Ok(&u * diag(&fd) * u.adjoint())
}

/// Square root of a positive semidefinite matrix with eigenvalues below `rel`
/// times the largest set to zero.
pub fn sqrtm_psd_clipped(a: &CMat, rel: f64) -> Result<CMat> {
    let (vals, u) = eigh(a)?;
    let top = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(v) = vals.iter().find(|&&v| v < -1e-8 * top.max(1.0)) {
        return Err(Error::Numerical(format!(
            "matrix square root of non-positive matrix (eigenvalue {v:.3e})"
        )));
    }
    let fd: Vec<c64> = vals
        .iter()
        .map(|&x| if x > rel * top { r(x.sqrt()) } else { ZERO })
        .collect();
    Ok(&u * diag(&fd) * u.adjoint())
}

/// General (non-Hermitian) eigendecomposition; returns eigenvalues and right eigenvectors.
pub fn eig(a: &CMat) -> Result<(Vec<c64>, CMat)> {
    let evd = a.eigen().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn eigvals(a: &CMat) -> Result<Vec<c64>> {
    a.eigenvalues()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Solves `A X = B`.
pub fn solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

/// Orthonormal basis of the (numerical) null space: right singular vectors whose
/// singular values are below `tol` times the largest one.
pub fn null_space(a: &CMat, tol: f64) -> Result<CMat> {
    let svd = a.svd().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = svd.S();
    let v = svd.V();
    let n = a.ncols();
    let k = a.nrows().min(n);
    let smax = if k > 0 { s[0].re } else { 0.0 };
    let mut cols = Vec::new();
    for j in 0..n {
        let sj = if j < k { s[j].re } else { 0.0 };
        if sj <= tol * smax.max(1e-300) {
            cols.push(j);
        }
    }
    Ok(CMat::from_fn(n, cols.len(), |i, j| v[(i, cols[j])]))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = norm_one(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = scale(r(0.5f64.powi(s)), a);
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| r(PADE13[k]);

    let mut u_in = scale(b(13), &a6) + scale(b(11), &a4) + scale(b(9), &a2);
    u_in = &a6 * &u_in;
    u_in += scale(b(7), &a6) + scale(b(5), &a4) + scale(b(3), &a2) + scale(b(1), &id);
    let u = &a * &u_in;

    let mut v = scale(b(12), &a6) + scale(b(10), &a4) + scale(b(8), &a2);
    v = &a6 * &v;
    v += scale(b(6), &a6) + scale(b(4), &a4) + scale(b(2), &a2) + scale(b(0), &id);

    let p = &v + &u;
    let q = &v - &u;
    let mut x = solve(&q, &p);
    for _ in 0..s {
        x = &x * &x;
    }
    x
}

/// Integer power of a square matrix by repeated squaring.
pub fn matpow(a: &CMat, mut k: u64) -> CMat {
    let mut result = identity(a.nrows());
    let mut base = a.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

pub fn col_from(v: &[c64]) -> CCol {
    CCol::from_fn(v.len(), |i| v[i])
}

pub fn col_norm(v: &CCol) -> f64 {
    v.norm_l2()
}

pub fn inner(a: &CCol, b: &CCol) -> c64 {
    (0..a.nrows()).map(|i| a[i].conj() * b[i]).sum()
}

/// `|a⟩⟨b|`.
pub fn outer(a: &CCol, b: &CCol) -> CMat {
    CMat::from_fn(a.nrows(), b.nrows(), |i, j| a[i] * b[j].conj())
}
