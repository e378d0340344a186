//! Dense complex linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(r: usize, cols: usize) -> CMat {
    CMat::zeros(r, cols)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Uniform entries on the square [-1,1] x [-1,1].
pub fn random_cmat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        c(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    hermitian_part(&random_cmat(rng, n, n))
}

/// Random unitary from the QR factor of a random matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    if n == 0 {
        return zeros(0, 0);
    }
    random_cmat(rng, n, n).qr().q()
}

/// Singular values sorted in decreasing order, with the full left/right factors.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

/// Thin SVD `m = u diag(s) v*`; `s` is sorted descending.
pub fn svd(m: &CMat) -> Svd {
    let (r, cols) = m.shape();
    if r == 0 || cols == 0 {
        return Svd {
            u: zeros(r, 0),
            s: vec![],
            v: zeros(cols, 0),
        };
    }
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("u requested");
    let v = dec.v_t.expect("v requested").adjoint();
    Svd {
        u,
        s: dec.singular_values.iter().copied().collect(),
        v,
    }
}

/// Numerical rank of a descending singular value list with relative threshold `tol`.
/// Values in the ambiguity band `(0.1 tol, 10 tol) * s_max` raise an error when `strict` is set.
pub fn numerical_rank(s: &[f64], tol: f64, strict: bool) -> Result<usize, Error> {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= f64::MIN_POSITIVE {
        return Ok(0);
    }
    let mut rank = 0;
    for &v in s {
        let rel = v / smax;
        if strict && rel > 0.1 * tol && rel < 10.0 * tol {
            return Err(Error::NumericalRankAmbiguity {
                value: rel,
                tol,
            });
        }
        if rel > tol {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Orthonormal basis of the column space, threshold `tol` relative to the largest singular value.
pub fn orth(m: &CMat, tol: f64) -> CMat {
    let d = svd(m);
    let r = numerical_rank(&d.s, tol, false).unwrap_or(0);
    d.u.columns(0, r).into_owned()
}

/// Like [`orth`] but with an absolute floor: singular values below `abs_floor` never count.
pub fn orth_abs(m: &CMat, tol: f64, abs_floor: f64) -> CMat {
    let d = svd(m);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let thr = (tol * smax).max(abs_floor);
    let r = d.s.iter().filter(|&&v| v > thr).count();
    d.u.columns(0, r).into_owned()
}

/// Orthonormal basis of the right null space, threshold relative to the largest singular value
/// (or to `scale` when that is larger).
pub fn null_space(m: &CMat, tol: f64, scale: f64) -> CMat {
    let (r, n) = m.shape();
    if n == 0 {
        return zeros(0, 0);
    }
    // Pad with zero rows so that the SVD returns a full right factor.
    let mut padded = zeros(r.max(n), n);
    padded.view_mut((0, 0), (r, n)).copy_from(m);
    let d = svd(&padded);
    let smax = d.s.first().copied().unwrap_or(0.0).max(scale);
    let thr = tol * smax;
    let keep: Vec<usize> = (0..n).filter(|&k| d.s[k] <= thr).collect();
    let mut out = zeros(n, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        out.set_column(j, &d.v.column(k));
    }
    out
}

/// Orthogonal complement of the column space of an orthonormal `q` (n x k) in C^n.
pub fn complement(q: &CMat, n: usize) -> CMat {
    if q.ncols() == 0 {
        return eye(n);
    }
    null_space(&q.adjoint(), 1e-10, 1.0)
}

/// Eigen-decomposition of a hermitian matrix, eigenvalues ascending.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], zeros(0, 0));
    }
    let h = hermitian_part(m);
    let e = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = zeros(n, n);
    for (j, &i) in idx.iter().enumerate() {
        vecs.set_column(j, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eig(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    herm_eig(m).0[0]
}

pub fn real_sym_eig(m: &RMat) -> (Vec<f64>, RMat) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], RMat::zeros(0, 0));
    }
    let h = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = RMat::zeros(n, n);
    for (j, &i) in idx.iter().enumerate() {
        vecs.set_column(j, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Apply `f` to the eigenvalues of a hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = herm_eig(m);
    let d = CMat::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| c(f(v), 0.0)),
    ));
    &vecs * d * vecs.adjoint()
}

/// Complex eigenvalues of a square matrix.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    if m.nrows() == 0 {
        return vec![];
    }
    let s = Schur::new(m.clone());
    let (_, t) = s.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub fn min_singular(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let s = svd(m).s;
    if m.nrows() < m.ncols() {
        // rank-deficient rows: the smallest singular value over the domain is zero
        return 0.0;
    }
    *s.last().unwrap()
}

pub fn cond(m: &CMat) -> f64 {
    let s = svd(m).s;
    match (s.first(), s.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        _ => f64::INFINITY,
    }
}

pub fn det(m: &CMat) -> C64 {
    if m.nrows() == 0 {
        return c(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Solve `m x = b` in the least-squares sense via the pseudo-inverse.
pub fn lstsq(m: &CMat, b: &CMat, tol: f64) -> CMat {
    let d = svd(m);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let mut out = zeros(m.ncols(), b.ncols());
    for (k, &s) in d.s.iter().enumerate() {
        if s > tol * smax && s > 0.0 {
            let coeff = d.u.column(k).adjoint() * b / c(s, 0.0);
            out += d.v.column(k) * coeff;
        }
    }
    out
}

pub fn block_diag(blocks: &[&CMat]) -> CMat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(r, cols);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Column-major vectorisation.
pub fn vec_of(m: &CMat) -> DVector<C64> {
    DVector::from_iterator(m.len(), m.iter().copied())
}

pub fn unvec(v: &[C64], rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v)
}

pub fn to_real(m: &CMat) -> RMat {
    m.map(|z| z.re)
}
