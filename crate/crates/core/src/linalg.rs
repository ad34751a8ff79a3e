//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;

/// Eigenvalues of a real square matrix (empty for a 0x0 matrix).
///
/// Uses faer's Hessenberg QR, which carries exceptional shifts; nalgebra's
/// Schur iteration can stall on the block-structured closed-loop Jacobians.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<C64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let f = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    f.eigenvalues()
        .unwrap_or_else(|e| panic!("eigenvalue iteration failed for a {n}x{n} matrix: {e:?}"))
        .into_iter()
        .map(|z| C64::new(z.re, z.im))
        .collect()
}

/// Largest real part of the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let scale = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol * scale).count()
}

pub fn complex_rank(m: &DMatrix<C64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let scale = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol * scale).count()
}

/// `[D; DS; ...; DS^{q-1}]`
pub fn observability_matrix(s: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let q = s.nrows();
    let p = d.nrows();
    let mut out = DMatrix::zeros(p * q, q);
    let mut block = d.clone();
    for k in 0..q {
        out.view_mut((k * p, 0), (p, q)).copy_from(&block);
        block = &block * s;
    }
    out
}

/// Real coefficients `[a_0, ..., a_{m-1}]` of the monic polynomial
/// `s^m + a_{m-1}s^{m-1} + ... + a_0` with the given roots. The roots must be
/// closed under conjugation for the result to be real.
pub fn monic_from_roots(roots: &[C64]) -> Vec<f64> {
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, &c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        coeffs = next;
    }
    coeffs.pop();
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Roots of `s^m + a_{m-1}s^{m-1} + ... + a_0` via the companion matrix.
pub fn monic_roots(lower: &[f64]) -> Vec<C64> {
    let m = lower.len();
    let mut comp = DMatrix::zeros(m, m);
    for k in 1..m {
        comp[(k, k - 1)] = 1.0;
    }
    for k in 0..m {
        comp[(k, m - 1)] = -lower[k];
    }
    eigenvalues(&comp)
}

/// Evaluates `p(A) = A^m + a_{m-1}A^{m-1} + ... + a_0 I` by Horner's rule.
pub fn eval_monic_at(lower: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let q = a.nrows();
    let mut acc = DMatrix::identity(q, q);
    for &c in lower.iter().rev() {
        acc = &acc * a + DMatrix::identity(q, q) * c;
    }
    acc
}

pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    m.exp()
}
