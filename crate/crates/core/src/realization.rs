//! Fornasini-Marchesini realizations `r = D + c* L^{-1} b(z)`, `L = I - sum_k A_k z_k`,
//! over the joint alphabet `z = (x_1..x_g, x_1*..x_g*)`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, JsonMatrix};
use crate::linalg::{self, c, eye, kron, max_abs, orth_abs, random_cmat, zeros, CMat};
use crate::ncpoly::{Letter, MatrixTuple, NcPoly, Word};
use crate::parser::{ExprKind, RationalExpr};
use crate::pencil::LinearPencil;

/// Relative rank threshold of the Kalman reduction.
pub const KALMAN_TOL: f64 = 1e-8;

/// State-space data. `d0` is the value at the origin (the identity for normalized
/// realizations); `c` is d x rows and each `b_k` is d x cols.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub delta: usize,
    pub g: usize,
    pub d: usize,
    pub a: Vec<CMat>,
    pub b: Vec<CMat>,
    pub c: CMat,
    pub d0: CMat,
}

pub type SeriesTable = BTreeMap<Word, CMat>;

impl Realization {
    /// The constant function `m` (state size 0).
    pub fn constant(m: CMat, g: usize) -> Self {
        let (r, cols) = m.shape();
        Realization {
            delta: r,
            g,
            d: 0,
            a: vec![zeros(0, 0); 2 * g],
            b: vec![zeros(0, cols); 2 * g],
            c: zeros(0, r),
            d0: m,
        }
    }

    pub fn identity(delta: usize, g: usize) -> Self {
        Realization::constant(eye(delta), g)
    }

    pub fn rows(&self) -> usize {
        self.d0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.d0.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.d0.nrows() == self.d0.ncols() && max_abs(&(&self.d0 - eye(self.d0.nrows()))) <= 1e-12
    }

    /// Single letter `z_k` (scalar).
    pub fn letter(k: usize, g: usize) -> Self {
        let mut b = vec![zeros(1, 1); 2 * g];
        b[k] = eye(1);
        Realization {
            delta: 1,
            g,
            d: 1,
            a: vec![zeros(1, 1); 2 * g],
            b,
            c: eye(1),
            d0: zeros(1, 1),
        }
    }

    /// Direct construction from polynomial coefficients: one delta-block state per
    /// nonempty suffix of a word in the support.
    pub fn from_polynomial(p: &NcPoly) -> Realization {
        let g = p.g;
        let delta = p.delta;
        let mut suffixes: Vec<Word> = Vec::new();
        for w in p.terms.keys() {
            for s in 0..w.len() {
                suffixes.push(Word(w.0[s..].to_vec()));
            }
        }
        suffixes.sort();
        suffixes.dedup();
        let index: BTreeMap<&Word, usize> = suffixes.iter().enumerate().map(|(i, w)| (w, i)).collect();
        let d = suffixes.len() * delta;
        let mut a = vec![zeros(d, d); 2 * g];
        let mut b = vec![zeros(d, delta); 2 * g];
        let mut cm = zeros(d, delta);
        for (i, s) in suffixes.iter().enumerate() {
            if s.len() == 1 {
                let k = s.0[0].slot(g);
                b[k].view_mut((i * delta, 0), (delta, delta)).copy_from(&eye(delta));
            }
            for k in 0..2 * g {
                let mut w = vec![Letter::from_slot(k, g)];
                w.extend_from_slice(&s.0);
                if let Some(&j) = index.get(&Word(w)) {
                    a[k].view_mut((j * delta, i * delta), (delta, delta)).copy_from(&eye(delta));
                }
            }
            if let Some(coeff) = p.terms.get(s) {
                cm.view_mut((i * delta, 0), (delta, delta)).copy_from(&coeff.adjoint());
            }
        }
        Realization { delta, g, d, a, b, c: cm, d0: p.constant_term() }
    }

    /// The monic pencil `I - sum A_k z_k` of the state space.
    pub fn pencil(&self) -> LinearPencil {
        let g = self.g;
        LinearPencil::monic_sized(self.d, self.a[..g].to_vec(), self.a[g..].to_vec())
            .expect("state matrices are d x d")
    }

    fn check(&self, other: &Realization) -> Result<()> {
        if self.g != other.g {
            return Err(Error::VariableCount { expected: self.g, got: other.g });
        }
        Ok(())
    }

    /// `M r N` for constant matrices.
    pub fn sandwich(&self, m: &CMat, n: &CMat) -> Result<Realization> {
        if m.ncols() != self.rows() || n.nrows() != self.cols() {
            return Err(Error::DimensionMismatch("sandwich factor sizes".into()));
        }
        let out = Realization {
            delta: m.nrows(),
            g: self.g,
            d: self.d,
            a: self.a.clone(),
            b: self.b.iter().map(|bk| bk * n).collect(),
            c: &self.c * m.adjoint(),
            d0: m * &self.d0 * n,
        };
        Ok(out)
    }

    /// Pointwise sum (no minimization).
    pub fn sum_raw(&self, other: &Realization) -> Result<Realization> {
        self.check(other)?;
        if self.d0.shape() != other.d0.shape() {
            return Err(Error::DimensionMismatch("sum of differently shaped functions".into()));
        }
        let d = self.d + other.d;
        let a = self.a.iter().zip(&other.a).map(|(x, y)| linalg::block_diag(&[x, y])).collect();
        let stack = |x: &CMat, y: &CMat| {
            let mut m = zeros(x.nrows() + y.nrows(), x.ncols());
            m.view_mut((0, 0), x.shape()).copy_from(x);
            m.view_mut((x.nrows(), 0), y.shape()).copy_from(y);
            m
        };
        let b = self.b.iter().zip(&other.b).map(|(x, y)| stack(x, y)).collect();
        Ok(Realization {
            delta: self.delta,
            g: self.g,
            d,
            a,
            b,
            c: stack(&self.c, &other.c),
            d0: &self.d0 + &other.d0,
        })
    }

    /// Pointwise product `self * other` (no minimization).
    pub fn prod_raw(&self, other: &Realization) -> Result<Realization> {
        self.check(other)?;
        if self.cols() != other.rows() {
            return Err(Error::DimensionMismatch("product of incompatible shapes".into()));
        }
        let (d1, d2) = (self.d, other.d);
        let d = d1 + d2;
        let mut a = Vec::with_capacity(2 * self.g);
        let mut b = Vec::with_capacity(2 * self.g);
        for k in 0..2 * self.g {
            let mut ak = zeros(d, d);
            ak.view_mut((0, 0), (d1, d1)).copy_from(&self.a[k]);
            ak.view_mut((0, d1), (d1, d2)).copy_from(&(&self.b[k] * other.c.adjoint()));
            ak.view_mut((d1, d1), (d2, d2)).copy_from(&other.a[k]);
            a.push(ak);
            let mut bk = zeros(d, other.cols());
            bk.view_mut((0, 0), (d1, other.cols())).copy_from(&(&self.b[k] * &other.d0));
            bk.view_mut((d1, 0), (d2, other.cols())).copy_from(&other.b[k]);
            b.push(bk);
        }
        let mut cm = zeros(d, self.rows());
        cm.view_mut((0, 0), (d1, self.rows())).copy_from(&self.c);
        cm.view_mut((d1, 0), (d2, self.rows())).copy_from(&(&other.c * self.d0.adjoint()));
        Ok(Realization { delta: self.rows(), g: self.g, d, a, b, c: cm, d0: &self.d0 * &other.d0 })
    }

    /// Pointwise inverse: `A_k - b_k c'*` with `c' = c D^{-*}`; same state size.
    pub fn inverse(&self) -> Result<Realization> {
        let dinv = invert_at_origin(&self.d0)?;
        let cp = &self.c * dinv.adjoint();
        let a = self.a.iter().zip(&self.b).map(|(ak, bk)| ak - bk * cp.adjoint()).collect();
        Ok(Realization {
            delta: self.delta,
            g: self.g,
            d: self.d,
            a,
            b: self.b.iter().map(|bk| bk * &dinv).collect(),
            c: -cp,
            d0: dinv,
        })
    }

    /// Pointwise adjoint `r*` (state size grows by the output size before minimization).
    pub fn adjoint_raw(&self) -> Realization {
        let g = self.g;
        let (p, d) = (self.rows(), self.d);
        let flip = |k: usize| if k < g { k + g } else { k - g };
        // r* = D* + B~(z) (I - A~ z)^{-1} c with B~_k = b_{flip k}*, A~_k = A_{flip k}*,
        // turned into right-linear form with states (C^p, C^d).
        let n = p + d;
        let mut a = Vec::with_capacity(2 * g);
        let mut b = Vec::with_capacity(2 * g);
        for k in 0..2 * g {
            let bt = self.b[flip(k)].adjoint();
            let at = self.a[flip(k)].adjoint();
            let mut ak = zeros(n, n);
            ak.view_mut((0, p), (bt.nrows(), d)).copy_from(&bt);
            ak.view_mut((p, p), (d, d)).copy_from(&at);
            a.push(ak);
            let mut bk = zeros(n, self.rows());
            bk.view_mut((0, 0), (bt.nrows(), p)).copy_from(&(&bt * &self.c));
            bk.view_mut((p, 0), (d, p)).copy_from(&(&at * &self.c));
            b.push(bk);
        }
        let mut cm = zeros(n, self.cols());
        cm.view_mut((0, 0), (self.cols(), self.cols())).copy_from(&eye(self.cols()));
        Realization { delta: self.cols(), g, d: n, a, b, c: cm, d0: self.d0.adjoint() }
    }

    /// Place `self` at block `(i, j)` of an `n x n` grid of `m x m` blocks.
    pub fn embed(&self, i: usize, j: usize, n: usize, m: usize) -> Result<Realization> {
        let mut ei = zeros(n * m, m);
        ei.view_mut((i * m, 0), (m, m)).copy_from(&eye(m));
        let mut ej = zeros(m, n * m);
        ej.view_mut((0, j * m), (m, m)).copy_from(&eye(m));
        self.sandwich(&ei, &ej)
    }

    /// Orthonormal basis of the reachable space span{A^w b_k u}.
    pub fn controllable_basis(&self, tol: f64) -> CMat {
        krylov(&self.a, &self.b, self.d, tol, false)
    }

    /// Orthonormal basis of span{(A*)^w c u}.
    pub fn observable_basis(&self, tol: f64) -> CMat {
        krylov(&self.a, &[self.c.clone()], self.d, tol, true)
    }

    fn compress(&self, v: &CMat) -> Realization {
        let vs = v.adjoint();
        Realization {
            delta: self.delta,
            g: self.g,
            d: v.ncols(),
            a: self.a.iter().map(|ak| &vs * ak * v).collect(),
            b: self.b.iter().map(|bk| &vs * bk).collect(),
            c: &vs * &self.c,
            d0: self.d0.clone(),
        }
    }

    /// Kalman reduction: restrict to the controllable, then the observable subspace.
    pub fn minimize(&self) -> Realization {
        self.minimize_tol(KALMAN_TOL)
    }

    pub fn minimize_tol(&self, tol: f64) -> Realization {
        if self.d == 0 {
            return self.clone();
        }
        // one pass can leave a borderline direction that only shows up after the other compression
        let mut cur = self.clone();
        loop {
            let r1 = cur.compress(&cur.controllable_basis(tol));
            if r1.d == 0 {
                return r1;
            }
            let r2 = r1.compress(&r1.observable_basis(tol));
            if r2.d == cur.d || r2.d == 0 {
                return r2;
            }
            cur = r2;
        }
    }

    pub fn is_minimal(&self, tol: f64) -> bool {
        self.controllable_basis(tol).ncols() == self.d && self.observable_basis(tol).ncols() == self.d
    }

    /// Truncated Taylor table up to words of length `order` (enumerates all words).
    pub fn series(&self, order: usize) -> SeriesTable {
        let mut out = SeriesTable::new();
        out.insert(Word::empty(), self.d0.clone());
        // frontier: (word, A_{k1}..A_{k_{m-1}} b_{k_m})
        let mut frontier: Vec<(Vec<Letter>, CMat)> = Vec::new();
        if order >= 1 {
            for k in 0..2 * self.g {
                frontier.push((vec![Letter::from_slot(k, self.g)], self.b[k].clone()));
            }
        }
        let cs = self.c.adjoint();
        for m in 1..=order {
            let mut next = Vec::new();
            for (w, v) in &frontier {
                out.insert(Word(w.clone()), &cs * v);
                if m < order {
                    for k in 0..2 * self.g {
                        let mut w2 = vec![Letter::from_slot(k, self.g)];
                        w2.extend_from_slice(w);
                        next.push((w2, &self.a[k] * v));
                    }
                }
            }
            frontier = next;
        }
        out
    }

    /// Value at a matrix point, `None` when the state pencil is singular there.
    pub fn evaluate(&self, x: &MatrixTuple) -> Result<Option<CMat>> {
        if x.g() != self.g {
            return Err(Error::VariableCount { expected: self.g, got: x.g() });
        }
        let n = x.n;
        let base = kron(&self.d0, &eye(n));
        if self.d == 0 {
            return Ok(Some(base));
        }
        let mut l = eye(self.d * n);
        let mut rhs = zeros(self.d * n, self.cols() * n);
        for k in 0..2 * self.g {
            let z = x.z(k);
            l -= kron(&self.a[k], &z);
            rhs += kron(&self.b[k], &z);
        }
        let lu = l.lu();
        match lu.solve(&rhs) {
            Some(y) if y.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => {
                Ok(Some(base + kron(&self.c.adjoint(), &eye(n)) * y))
            }
            _ => Ok(None),
        }
    }

    /// Random normalized realization with state size `d`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, delta: usize, g: usize, d: usize, scale: f64) -> Self {
        Realization {
            delta,
            g,
            d,
            a: (0..2 * g).map(|_| random_cmat(rng, d, d).scale(scale)).collect(),
            b: (0..2 * g).map(|_| random_cmat(rng, d, delta)).collect(),
            c: random_cmat(rng, d, delta),
            d0: eye(delta),
        }
    }

    /// Change of state basis `x' = S x`.
    pub fn similarity(&self, s: &CMat) -> Result<Realization> {
        let si = s.clone().try_inverse().ok_or_else(|| Error::Invalid("singular similarity".into()))?;
        Ok(Realization {
            a: self.a.iter().map(|ak| s * ak * &si).collect(),
            b: self.b.iter().map(|bk| s * bk).collect(),
            c: si.adjoint() * &self.c,
            ..self.clone()
        })
    }
}

fn invert_at_origin(d0: &CMat) -> Result<CMat> {
    if d0.nrows() != d0.ncols() {
        return Err(Error::SingularAtOrigin);
    }
    if d0.nrows() == 0 {
        return Ok(d0.clone());
    }
    let s = linalg::svd(d0).s;
    let (smax, smin) = (s[0], *s.last().unwrap());
    if smin <= 1e-12 * smax.max(1.0) {
        return Err(Error::SingularAtOrigin);
    }
    d0.clone().try_inverse().ok_or(Error::SingularAtOrigin)
}

/// Smallest subspace containing the columns of `starts` and invariant under all `mats`
/// (or their adjoints).
fn krylov(mats: &[CMat], starts: &[CMat], d: usize, tol: f64, adjoint: bool) -> CMat {
    if d == 0 {
        return zeros(0, 0);
    }
    let cols: usize = starts.iter().map(|m| m.ncols()).sum();
    let mut init = zeros(d, cols);
    let mut off = 0;
    for s in starts {
        init.view_mut((0, off), (d, s.ncols())).copy_from(s);
        off += s.ncols();
    }
    let scale = max_abs(&init).max(mats.iter().map(max_abs).fold(0.0, f64::max)).max(1e-300);
    let floor = 1e-14 * scale;
    let mut basis = orth_abs(&init, tol, floor);
    loop {
        if basis.ncols() == 0 {
            return basis;
        }
        let k = basis.ncols();
        let mut big = zeros(d, k * (mats.len() + 1));
        big.view_mut((0, 0), (d, k)).copy_from(&basis);
        for (i, m) in mats.iter().enumerate() {
            let img = if adjoint { m.adjoint() * &basis } else { m * &basis };
            big.view_mut((0, (i + 1) * k), (d, k)).copy_from(&img);
        }
        let next = orth_abs(&big, tol, floor);
        if next.ncols() <= k {
            return basis;
        }
        basis = next;
    }
}

/// Upper bound on the entrywise series discrepancy of `r` and `s` over words of length
/// at most `order`: the largest per-length Frobenius norm of the coefficient differences.
pub fn series_gap(r: &Realization, s: &Realization, order: usize) -> Result<f64> {
    let minus = s.sandwich(&(-eye(s.rows())), &eye(s.cols()))?;
    let diff = r.sum_raw(&minus)?;
    let mut worst = max_abs(&diff.d0);
    if diff.d == 0 {
        return Ok(worst);
    }
    let cs = diff.c.adjoint();
    // Factor F_m with sum_{|w|=m} v_w v_w* = F_m F_m*, where v_w = A.. b.
    let mut f = {
        let cols: usize = diff.b.iter().map(|m| m.ncols()).sum();
        let mut m = zeros(diff.d, cols);
        let mut off = 0;
        for bk in &diff.b {
            m.view_mut((0, off), bk.shape()).copy_from(bk);
            off += bk.ncols();
        }
        m
    };
    for m in 1..=order {
        let e = (&cs * &f).norm();
        worst = worst.max(e);
        if m == order {
            break;
        }
        let k = f.ncols();
        let mut next = zeros(diff.d, k * diff.a.len());
        for (i, ak) in diff.a.iter().enumerate() {
            next.view_mut((0, i * k), (diff.d, k)).copy_from(&(ak * &f));
        }
        f = compress_factor(&next);
        if f.ncols() == 0 {
            break;
        }
    }
    Ok(worst)
}

/// Replace a wide factor `F` by `U S` with at most `rows` columns, preserving `F F*`.
fn compress_factor(f: &CMat) -> CMat {
    if f.ncols() <= f.nrows() {
        return f.clone();
    }
    let d = linalg::svd(f);
    let r = d.s.iter().filter(|&&s| s > 0.0).count();
    let mut out = zeros(f.nrows(), r);
    for k in 0..r {
        out.set_column(k, &(d.u.column(k) * c(d.s[k], 0.0)));
    }
    out
}

pub fn realize_sum(r: &Realization, s: &Realization) -> Result<Realization> {
    Ok(r.sum_raw(s)?.minimize())
}

pub fn realize_prod(r: &Realization, s: &Realization) -> Result<Realization> {
    Ok(r.prod_raw(s)?.minimize())
}

pub fn realize_inverse(r: &Realization) -> Result<Realization> {
    r.inverse()
}

pub fn minimize(r: &Realization) -> Realization {
    r.minimize()
}

pub fn series(r: &Realization, order: usize) -> SeriesTable {
    r.series(order)
}

/// Minimal realization of a polynomial normalized to value I at the origin.
pub fn realize_polynomial(p: &NcPoly) -> Result<Realization> {
    let r = Realization::from_polynomial(p);
    normalize(&r.minimize())
}

/// `e(0)^{-1} e`.
pub fn normalize(r: &Realization) -> Result<Realization> {
    let dinv = invert_at_origin(&r.d0)?;
    let mut out = r.sandwich(&dinv, &eye(r.cols()))?;
    out.d0 = eye(r.rows());
    Ok(out)
}

/// Fold the expression tree bottom-up with minimization after every combination.
pub fn realize_raw(e: &RationalExpr, g: usize) -> Result<Realization> {
    if !e.has_inverse() {
        let p = crate::parser::to_polynomial_with_vars(e, g)?;
        return Ok(Realization::from_polynomial(&p).minimize());
    }
    let r = match &e.kind {
        ExprKind::Const(z) => Realization::constant(CMat::from_element(1, 1, *z), g),
        ExprKind::Var(j) => Realization::letter(j - 1, g),
        ExprKind::Adjoint(inner) => realize_raw(inner, g)?.adjoint_raw(),
        ExprKind::Neg(inner) => {
            let r = realize_raw(inner, g)?;
            r.sandwich(&(-eye(r.rows())), &eye(r.cols()))?
        }
        ExprKind::Add(items) => {
            let mut acc = realize_raw(&items[0], g)?;
            for it in &items[1..] {
                let (x, y) = unify(acc, realize_raw(it, g)?)?;
                acc = x.sum_raw(&y)?.minimize();
            }
            acc
        }
        ExprKind::Mul(items) => {
            let mut acc = realize_raw(&items[0], g)?;
            for it in &items[1..] {
                let (x, y) = unify(acc, realize_raw(it, g)?)?;
                acc = x.prod_raw(&y)?.minimize();
            }
            acc
        }
        ExprKind::Inverse(inner) => realize_raw(inner, g)?.inverse()?,
        ExprKind::Matrix(rows) => {
            let n = rows.len();
            let entries = rows
                .iter()
                .flatten()
                .map(|it| realize_raw(it, g))
                .collect::<Result<Vec<_>>>()?;
            let m = entries.iter().map(|r| r.rows()).max().unwrap_or(1);
            let mut acc = Realization::constant(zeros(n * m, n * m), g);
            for (idx, r) in entries.into_iter().enumerate() {
                let r = broadcast(r, m)?;
                acc = acc.sum_raw(&r.embed(idx / n, idx % n, n, m)?)?;
            }
            acc.minimize()
        }
    };
    Ok(r.minimize())
}

fn broadcast(r: Realization, m: usize) -> Result<Realization> {
    if r.rows() == m {
        return Ok(r);
    }
    if r.rows() != 1 {
        return Err(Error::DimensionMismatch(format!("cannot broadcast {}x{} to {m}x{m}", r.rows(), r.rows())));
    }
    // r (x) I_m: kron every state matrix with I_m.
    let im = eye(m);
    Ok(Realization {
        delta: m,
        g: r.g,
        d: r.d * m,
        a: r.a.iter().map(|ak| kron(ak, &im)).collect(),
        b: r.b.iter().map(|bk| kron(bk, &im)).collect(),
        c: kron(&r.c, &im),
        d0: kron(&r.d0, &im),
    })
}

fn unify(x: Realization, y: Realization) -> Result<(Realization, Realization)> {
    let m = x.rows().max(y.rows());
    Ok((broadcast(x, m)?, broadcast(y, m)?))
}

/// Minimal realization of `e(0)^{-1} e`.
pub fn realize_expression(e: &RationalExpr) -> Result<Realization> {
    realize_expression_with_vars(e, e.inferred_vars())
}

pub fn realize_expression_with_vars(e: &RationalExpr, g: usize) -> Result<Realization> {
    let r = realize_raw(e, g)?;
    normalize(&r.minimize())
}

/// Minimal realization of `r (+) r^{-1}` for the normalized expression.
pub fn realize_with_inverse(e: &RationalExpr) -> Result<Realization> {
    realize_with_inverse_vars(e, e.inferred_vars())
}

pub fn realize_with_inverse_vars(e: &RationalExpr, g: usize) -> Result<Realization> {
    let r = realize_expression_with_vars(e, g)?;
    direct_sum_with_inverse(&r)
}

pub fn direct_sum_with_inverse(r: &Realization) -> Result<Realization> {
    let ri = r.inverse()?;
    let m = r.rows();
    let top = r.embed(0, 0, 2, m)?;
    let bottom = ri.embed(1, 1, 2, m)?;
    let mut s = top.sum_raw(&bottom)?.minimize();
    s.d0 = eye(2 * m);
    Ok(s)
}

/// Solve `S A_k = A'_k S`, `S b_k = b'_k`, `c* = c'* S` for an invertible `S`.
pub fn equivalent(r: &Realization, s: &Realization) -> Result<bool> {
    equivalent_transform(r, s).map(|t| t.is_some())
}

pub fn equivalent_transform(r: &Realization, s: &Realization) -> Result<Option<CMat>> {
    if !r.is_minimal(KALMAN_TOL) || !s.is_minimal(KALMAN_TOL) {
        return Err(Error::NotMinimal);
    }
    if r.g != s.g || r.d0.shape() != s.d0.shape() || r.d != s.d {
        return Ok(None);
    }
    let scale = r.a.iter().chain(&s.a).chain(&r.b).chain(&s.b).map(max_abs).fold(max_abs(&r.c).max(max_abs(&s.c)), f64::max).max(1.0);
    if max_abs(&(&r.d0 - &s.d0)) > 1e-8 * scale {
        return Ok(None);
    }
    let d = r.d;
    if d == 0 {
        return Ok(Some(zeros(0, 0)));
    }
    let n = d * d;
    let id = eye(d);
    let mut blocks: Vec<CMat> = Vec::new();
    let mut rhs: Vec<CMat> = Vec::new();
    for k in 0..2 * r.g {
        blocks.push(kron(&r.a[k].transpose(), &id) - kron(&id, &s.a[k]));
        rhs.push(zeros(n, 1));
        blocks.push(kron(&r.b[k].transpose(), &id));
        rhs.push(as_col(&s.b[k]));
    }
    blocks.push(kron(&id, &s.c.adjoint()));
    rhs.push(as_col(&r.c.adjoint()));
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = zeros(rows, n);
    let mut v = zeros(rows, 1);
    let mut off = 0;
    for (b, y) in blocks.iter().zip(&rhs) {
        m.view_mut((off, 0), b.shape()).copy_from(b);
        v.view_mut((off, 0), y.shape()).copy_from(y);
        off += b.nrows();
    }
    let x = linalg::lstsq(&m, &v, 1e-12);
    let resid = max_abs(&(&m * &x - &v));
    if resid > 1e-7 * scale {
        return Ok(None);
    }
    let smat = linalg::unvec(x.as_slice(), d, d);
    let sv = linalg::svd(&smat).s;
    if sv.last().copied().unwrap_or(0.0) <= 1e-10 * sv[0].max(1e-300) {
        return Ok(None);
    }
    Ok(Some(smat))
}

fn as_col(m: &CMat) -> CMat {
    CMat::from_column_slice(m.len(), 1, linalg::vec_of(m).as_slice())
}

#[derive(Serialize, Deserialize)]
struct RealizationJson {
    delta: usize,
    g: usize,
    d: usize,
    #[serde(rename = "A")]
    a: Vec<JsonMatrix>,
    b: Vec<JsonMatrix>,
    c: JsonMatrix,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    constant: Option<JsonMatrix>,
}

impl Serialize for Realization {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RealizationJson {
            delta: self.delta,
            g: self.g,
            d: self.d,
            a: self.a.iter().map(json::to_json).collect(),
            b: self.b.iter().map(json::to_json).collect(),
            c: json::to_json(&self.c),
            constant: if self.is_normalized() { None } else { Some(json::to_json(&self.d0)) },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Realization {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = RealizationJson::deserialize(de)?;
        let read = |m: &JsonMatrix, rows: usize, cols: usize| -> std::result::Result<CMat, D::Error> {
            let out = json::from_json(m, cols).map_err(D::Error::custom)?;
            if out.nrows() == 0 && rows == 0 {
                return Ok(zeros(0, cols));
            }
            if out.shape() != (rows, cols) {
                return Err(D::Error::custom(format!("expected a {rows}x{cols} matrix")));
            }
            Ok(out)
        };
        if r.a.len() != 2 * r.g || r.b.len() != 2 * r.g {
            return Err(D::Error::custom("A and b must hold 2g matrices"));
        }
        Ok(Realization {
            delta: r.delta,
            g: r.g,
            d: r.d,
            a: r.a.iter().map(|m| read(m, r.d, r.d)).collect::<std::result::Result<_, _>>()?,
            b: r.b.iter().map(|m| read(m, r.d, r.delta)).collect::<std::result::Result<_, _>>()?,
            c: read(&r.c, r.d, r.delta)?,
            d0: match &r.constant {
                Some(m) => read(m, r.delta, r.delta)?,
                None => eye(r.delta),
            },
        })
    }
}

/// Realize a scalar polynomial's inverse minimally (requires `p(0) = 1`).
pub fn inverse_realization(p: &NcPoly) -> Result<Realization> {
    Ok(realize_polynomial(p)?.inverse()?.minimize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse, to_polynomial};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poly(s: &str) -> NcPoly {
        to_polynomial(&parse(s).unwrap()).unwrap()
    }

    fn table_of(p: &NcPoly) -> Realization {
        Realization::from_polynomial(p)
    }

    #[test]
    fn constant_has_size_zero() {
        let r = realize_expression(&parse("1").unwrap()).unwrap();
        assert_eq!(r.d, 0);
        let s = series(&r, 0);
        assert_eq!(s[&Word::empty()], eye(1));
    }

    #[test]
    fn geometric_series() {
        let r = realize_expression(&parse("inv(1 - x1)").unwrap()).unwrap();
        assert_eq!(r.d, 1);
        let s = r.series(8);
        for m in 1..=8 {
            let w = Word(vec![Letter::x(1); m]);
            assert!((s[&w][(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
            let ws = Word(vec![Letter::xs(1); m]);
            assert!(s[&ws][(0, 0)].norm() < 1e-12);
        }
        // A_1 = [1] up to the (trivial) choice of basis phase.
        assert!((r.a[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn product_of_affine_polynomials() {
        let r = realize_expression_with_vars(&parse("1 + x1").unwrap(), 2).unwrap();
        let s = realize_expression(&parse("1 + x2").unwrap()).unwrap();
        let p = realize_prod(&r, &s).unwrap();
        let oracle = table_of(&poly("1 + x1 + x2 + x1*x2"));
        assert!(series_gap(&p, &oracle, 3).unwrap() < 1e-12);
    }

    #[test]
    fn inverse_is_an_involution_on_state_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = Realization::random(&mut rng, 2, 2, 3, 0.5);
        let rr = realize_inverse(&realize_inverse(&r).unwrap()).unwrap();
        for k in 0..4 {
            assert!(max_abs(&(&rr.a[k] - &r.a[k])) < 1e-12);
        }
        assert!(max_abs(&(&rr.c - &r.c)) < 1e-12);
    }

    #[test]
    fn inverse_of_1_plus_x1x2_has_size_two() {
        let p = poly("1 + x1*x2");
        let r = inverse_realization(&p).unwrap();
        assert_eq!(r.d, 2);
        // geometric oracle: sum_k (-x1 x2)^k
        let s = r.series(8);
        for (w, m) in &s {
            let expect = if w.len() % 2 == 0
                && w.0.chunks(2).all(|ch| ch == [Letter::x(1), Letter::x(2)])
            {
                if (w.len() / 2) % 2 == 0 { 1.0 } else { -1.0 }
            } else {
                0.0
            };
            assert!((m[(0, 0)] - c(expect, 0.0)).norm() < 1e-10, "{w}");
        }
    }

    #[test]
    fn padded_realization_minimizes_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = Realization::random(&mut rng, 1, 1, 3, 0.5).minimize();
        assert_eq!(r.d, 3);
        let mut padded = r.clone();
        padded.d = 5;
        padded.a = r
            .a
            .iter()
            .map(|ak| linalg::block_diag(&[ak, &random_cmat(&mut rng, 2, 2)]))
            .collect();
        padded.b = r
            .b
            .iter()
            .map(|bk| {
                let mut m = zeros(5, 1);
                m.view_mut((0, 0), (3, 1)).copy_from(bk);
                m
            })
            .collect();
        let mut cpad = zeros(5, 1);
        cpad.view_mut((0, 0), (3, 1)).copy_from(&r.c);
        cpad[(4, 0)] = c(1.0, 0.0);
        padded.c = cpad;
        let m = padded.minimize();
        assert_eq!(m.d, 3);
        assert!(series_gap(&m, &r, 7).unwrap() < 1e-10);
    }

    #[test]
    fn equivalence_under_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = Realization::random(&mut rng, 1, 1, 3, 0.5).minimize();
        let s = random_cmat(&mut rng, 3, 3) + eye(3).scale(2.0);
        let r2 = r.similarity(&s).unwrap();
        assert!(equivalent(&r, &r2).unwrap());
        let other = Realization::random(&mut rng, 1, 1, 3, 0.5).minimize();
        assert!(!equivalent(&r, &other).unwrap());
        let mut padded = r.clone();
        padded.d = 4;
        padded.a = r.a.iter().map(|ak| linalg::block_diag(&[ak, &eye(1)])).collect();
        padded.b = r.b.iter().map(|bk| {
            let mut m = zeros(4, 1);
            m.view_mut((0, 0), (3, 1)).copy_from(bk);
            m
        }).collect();
        let mut cp = zeros(4, 1);
        cp.view_mut((0, 0), (3, 1)).copy_from(&r.c);
        padded.c = cp;
        assert!(matches!(equivalent(&r, &padded), Err(Error::NotMinimal)));
    }

    #[test]
    fn adjoint_realization_matches_polynomial_adjoint() {
        let e = parse("inv(1 - x1*x2' + 0.5*i*x1)'").unwrap();
        let r = realize_expression(&e).unwrap();
        let e2 = parse("inv((1 - x1*x2' + 0.5*i*x1)')").unwrap();
        let r2 = realize_expression(&e2).unwrap();
        assert!(series_gap(&r, &r2, 2 * r.d + 1).unwrap() < 1e-9);
        assert_eq!(r.d, r2.d);
    }

    #[test]
    fn with_inverse_of_constant_is_empty() {
        let r = realize_with_inverse(&parse("1").unwrap()).unwrap();
        assert_eq!(r.d, 0);
    }
}
