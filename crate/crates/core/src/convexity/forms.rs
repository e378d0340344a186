//! Scalar structure results: atom test, the degree-two bordered form, flip-poly
//! pencils and the determinant identity between a polynomial and its pencil.

use rand::Rng;
use serde::Serialize;

use super::{analyze_pencil, AnalysisConfig, Verdict};
use crate::algebra::is_irreducible;
use crate::error::{Error, Result};
use crate::json;
use crate::linalg::{self, c, eye, herm_eig, max_abs, zeros, CMat, C64};
use crate::ncpoly::{Letter, MatrixTuple, NcPoly, Word};
use crate::pencil::LinearPencil;
use crate::realization::inverse_realization;

fn check_scalar_normalized(f: &NcPoly) -> Result<()> {
    if f.delta != 1 {
        return Err(Error::Invalid("expected a scalar polynomial".into()));
    }
    if (f.constant_term()[(0, 0)] - c(1.0, 0.0)).norm() > 1e-12 {
        return Err(Error::Invalid("expected f(0) = 1".into()));
    }
    Ok(())
}

/// True iff the pencil of the minimal realization of `f^{-1}` is irreducible.
pub fn is_atom_scalar(f: &NcPoly) -> Result<bool> {
    check_scalar_normalized(f)?;
    let r = inverse_realization(f)?;
    Ok(r.d > 0 && is_irreducible(&r.pencil()))
}

#[derive(Clone, Debug, Serialize)]
pub struct SchurForm {
    /// `alpha_j`, the negated coefficient of `x_j`.
    #[serde(serialize_with = "ser_cvec")]
    pub alpha: Vec<C64>,
    /// `u_j` as columns of a `k x g` matrix.
    #[serde(with = "json::cmat")]
    pub u: CMat,
    #[serde(with = "json::cmat")]
    pub v: CMat,
    /// `[[1 - a.x - conj(a).x*, (ux + vx*)*], [ux + vx*, I]]`.
    pub pencil: LinearPencil,
}

fn ser_cvec<S: serde::Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize as _;
    v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
}

/// `f = 1 - (a.x + conj(a).x*) - (ux + vx*)*(ux + vx*)` for a convex scalar atom.
pub fn schur_form(f: &NcPoly, cfg: &AnalysisConfig) -> Result<SchurForm> {
    check_scalar_normalized(f)?;
    if !f.is_hermitian() {
        return Err(Error::Invalid("schur form needs a hermitian polynomial".into()));
    }
    if !is_atom_scalar(f)? {
        return Err(Error::NotAtom);
    }
    let g = f.g;
    if f.degree() > 2 {
        let r = inverse_realization(f)?;
        let rep = analyze_pencil(&r.pencil(), true, cfg)?;
        return Err(match rep.verdict {
            Verdict::NotConvex => Error::NotConvex,
            Verdict::Convex => Error::StructureMismatch("convex atom of degree above two".into()),
        });
    }
    let coeff = |w: Vec<Letter>| f.coeff(&Word(w))[(0, 0)];
    let alpha: Vec<C64> = (1..=g).map(|j| -coeff(vec![Letter::x(j)])).collect();
    // Gram matrix of (u_1..u_g, v_1..v_g)
    let letter = |a: usize, star: bool| if star { Letter::xs(a + 1) } else { Letter::x(a + 1) };
    let gram = CMat::from_fn(2 * g, 2 * g, |a, b| {
        let (ia, sa) = (a % g, a < g);
        let (ib, sb) = (b % g, b >= g);
        -coeff(vec![letter(ia, sa), letter(ib, sb)])
    });
    let gram = linalg::hermitian_part(&gram);
    let (ev, vecs) = herm_eig(&gram);
    let scale = max_abs(&gram).max(1.0);
    if ev.first().is_some_and(|&e| e < -cfg.tol.sqrt() * scale) {
        return Err(Error::NotConvex);
    }
    let keep: Vec<usize> = (0..ev.len()).filter(|&i| ev[i] > cfg.tol * scale).collect();
    let k = keep.len();
    let w = CMat::from_fn(k, 2 * g, |r, col| vecs[(col, keep[r])].conj() * ev[keep[r]].sqrt());
    let u = w.columns(0, g).into_owned();
    let v = w.columns(g, g).into_owned();
    let a: Vec<CMat> = (0..g)
        .map(|j| {
            let mut m = zeros(k + 1, k + 1);
            m[(0, 0)] = alpha[j];
            for r in 0..k {
                m[(0, r + 1)] = -v[(r, j)].conj();
                m[(r + 1, 0)] = -u[(r, j)];
            }
            m
        })
        .collect();
    let pencil = LinearPencil::hermitian(a)?;
    let elim: Vec<usize> = (1..=k).collect();
    let back = pencil.schur_complement(&[0], &elim)?;
    if back.distance(f) > 1e-8 {
        return Err(Error::StructureMismatch(format!(
            "bordered form reproduces f only to {:.3e}",
            back.distance(f)
        )));
    }
    Ok(SchurForm { alpha, u, v, pencil })
}

/// Ingredients of a flip-poly pencil `I - A.x - A*.x*` with `A_j = N_j + v_j u*`.
#[derive(Clone, Debug)]
pub struct FlipPoly {
    pub u: Vec<C64>,
    pub v: Vec<Vec<C64>>,
    pub vtilde: Vec<Vec<C64>>,
    /// Strictly upper triangular parts.
    pub n: Vec<CMat>,
    pub ntilde: Vec<CMat>,
    pub pencil: LinearPencil,
}

fn col(v: &[C64]) -> CMat {
    CMat::from_column_slice(v.len(), 1, v)
}

/// Build the flip-poly pencil; `vtilde[j][k]` must be given exactly where `u[k] = 0`.
pub fn flip_poly(u: &[C64], v: &[Vec<C64>], vtilde: &[Vec<Option<C64>>]) -> Result<FlipPoly> {
    let d = u.len();
    let g = v.len();
    if d == 0 || u.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::Invalid("u must be nonzero".into()));
    }
    if v.iter().any(|vj| vj.len() != d) {
        return Err(Error::DimensionMismatch("each v_j must have the length of u".into()));
    }
    if !vtilde.is_empty() && (vtilde.len() != g || vtilde.iter().any(|t| t.len() != d)) {
        return Err(Error::DimensionMismatch("overrides must be g vectors of length d".into()));
    }
    let mut vt = vec![vec![c(0.0, 0.0); d]; g];
    for j in 0..g {
        for k in 0..d {
            let over = vtilde.get(j).and_then(|t| t[k]);
            vt[j][k] = match (u[k].norm() == 0.0, over) {
                (true, Some(z)) => z,
                (true, None) => return Err(Error::MissingOverride { index: k, var: j + 1 }),
                (false, Some(_)) => {
                    return Err(Error::Invalid(format!("override given at nonzero entry {k} of u")))
                }
                (false, None) => u[k] * v[j][k].conj() / u[k].conj(),
            };
        }
    }
    let uc = col(u);
    let mut a = Vec::with_capacity(g);
    let mut ns = Vec::with_capacity(g);
    let mut nts = Vec::with_capacity(g);
    for j in 0..g {
        let vj = col(&v[j]);
        let vtj = col(&vt[j]);
        let s = &uc * vtj.adjoint() - &vj * uc.adjoint();
        let n = strict_upper(&s);
        let aj = &n + &vj * uc.adjoint();
        nts.push(aj.adjoint() - &vtj * uc.adjoint());
        ns.push(n);
        a.push(aj);
    }
    let pencil = LinearPencil::hermitian(a)?;
    Ok(FlipPoly { u: u.to_vec(), v: v.to_vec(), vtilde: vt, n: ns, ntilde: nts, pencil })
}

pub fn make_flip_poly(u: &[C64], v: &[Vec<C64>], vtilde: &[Vec<Option<C64>>]) -> Result<LinearPencil> {
    flip_poly(u, v, vtilde).map(|f| f.pencil)
}

fn strict_upper(m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| if i < j { m[(i, j)] } else { c(0.0, 0.0) })
}

impl FlipPoly {
    /// `1 - u* (I - N.x - Ntilde.x*)^{-1} (v.x + vtilde.x*)`, whose determinant matches the pencil's.
    pub fn polynomial(&self) -> Result<NcPoly> {
        let d = self.u.len();
        let g = self.v.len();
        let uc = col(&self.u);
        let slot = |k: usize| if k < g { &self.n[k] } else { &self.ntilde[k - g] };
        let wcol = |k: usize| if k < g { col(&self.v[k]) } else { col(&self.vtilde[k - g]) };
        let mut terms = vec![(Word::empty(), eye(1))];
        // rows u* M_{a1}...M_{am} for all prefixes up to the nilpotency index
        let mut layer: Vec<(Vec<Letter>, CMat)> = vec![(Vec::new(), uc.adjoint())];
        for _ in 0..d {
            let mut next = Vec::new();
            for (w, row) in &layer {
                for b in 0..2 * g {
                    let val = row * wcol(b);
                    let mut word = w.clone();
                    word.push(Letter::from_slot(b, g));
                    if val[(0, 0)].norm() > 0.0 {
                        terms.push((Word(word), -val));
                    }
                }
                for a in 0..2 * g {
                    let r = row * slot(a);
                    if max_abs(&r) > 0.0 {
                        let mut word = w.clone();
                        word.push(Letter::from_slot(a, g));
                        next.push((word, r));
                    }
                }
            }
            layer = next;
        }
        NcPoly::from_terms(1, g, terms)
    }
}

/// Worst relative gap between `det f(X)` and `det L(X)` over seeded random tuples.
pub fn det_identity_check<R: Rng + ?Sized>(
    f: &NcPoly,
    l: &LinearPencil,
    trials: usize,
    levels: usize,
    rng: &mut R,
) -> Result<f64> {
    if f.g != l.g {
        return Err(Error::VariableCount { expected: f.g, got: l.g });
    }
    let mut worst: f64 = 0.0;
    for n in 1..=levels {
        for _ in 0..trials {
            let x = MatrixTuple::random(rng, n, f.g).scaled(1.0 / (n as f64).sqrt());
            let df = linalg::det(&f.evaluate(&x)?);
            let dl = if l.size() == 0 { c(1.0, 0.0) } else { linalg::det(&l.evaluate(&x)?) };
            let denom = df.norm().max(dl.norm());
            if denom > 0.0 {
                worst = worst.max((df - dl).norm() / denom);
            }
        }
    }
    Ok(worst)
}
