//! Affine linear matrix pencils `L = C + sum_j A_j x_j + sum_j B_j x_j*`.
//!
//! Coefficients are stored with the sign they carry in `L`; for a monic pencil
//! `I - A.x - B.x*` the stored `coeff_x[j]` is `-A_j`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, JsonMatrix};
use crate::linalg::{block_diag, eye, kron, max_abs, min_eig, random_cmat, zeros, CMat};
use crate::ncpoly::{Letter, MatrixTuple, NcPoly, Word};

/// Tolerance used for the structural flags.
pub const FLAG_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearPencil {
    pub rows: usize,
    pub cols: usize,
    pub g: usize,
    pub constant: CMat,
    pub coeff_x: Vec<CMat>,
    pub coeff_xstar: Vec<CMat>,
}

impl LinearPencil {
    pub fn new(constant: CMat, coeff_x: Vec<CMat>, coeff_xstar: Vec<CMat>) -> Result<Self> {
        let (rows, cols) = constant.shape();
        let g = coeff_x.len();
        if coeff_xstar.len() != g {
            return Err(Error::DimensionMismatch("coeff_x and coeff_xstar lengths differ".into()));
        }
        if coeff_x.iter().chain(&coeff_xstar).any(|m| m.shape() != (rows, cols)) {
            return Err(Error::DimensionMismatch(format!("pencil coefficients must be {rows}x{cols}")));
        }
        Ok(LinearPencil { rows, cols, g, constant, coeff_x, coeff_xstar })
    }

    /// `I - sum A_j x_j - sum B_j x_j*`.
    pub fn monic(a: Vec<CMat>, b: Vec<CMat>) -> Result<Self> {
        let d = a.first().map(|m| m.nrows()).unwrap_or(0);
        Self::monic_sized(d, a, b)
    }

    pub fn monic_sized(d: usize, a: Vec<CMat>, b: Vec<CMat>) -> Result<Self> {
        LinearPencil::new(
            eye(d),
            a.iter().map(|m| -m).collect(),
            b.iter().map(|m| -m).collect(),
        )
    }

    /// `I - sum A_j x_j - sum A_j* x_j*`.
    pub fn hermitian(a: Vec<CMat>) -> Result<Self> {
        let b = a.iter().map(|m| m.adjoint()).collect();
        Self::monic(a, b)
    }

    /// The size-0 pencil, whose spectrahedron is everything.
    pub fn empty(g: usize) -> Self {
        LinearPencil {
            rows: 0,
            cols: 0,
            g,
            constant: zeros(0, 0),
            coeff_x: vec![zeros(0, 0); g],
            coeff_xstar: vec![zeros(0, 0); g],
        }
    }

    /// Random hermitian monic pencil with coefficient entries scaled by `scale`.
    pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize, g: usize, scale: f64) -> Self {
        let a = (0..g).map(|_| random_cmat(rng, d, d).scale(scale)).collect();
        LinearPencil::hermitian(a).expect("consistent sizes")
    }

    pub fn size(&self) -> usize {
        self.rows
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    fn scale(&self) -> f64 {
        self.coeff_x.iter().chain(&self.coeff_xstar).map(max_abs).fold(1.0, f64::max)
    }

    pub fn is_monic(&self) -> bool {
        self.is_square() && max_abs(&(&self.constant - eye(self.rows))) <= FLAG_TOL
    }

    pub fn is_hermitian_monic(&self) -> bool {
        self.is_monic()
            && self
                .coeff_x
                .iter()
                .zip(&self.coeff_xstar)
                .all(|(a, b)| max_abs(&(a.adjoint() - b)) <= FLAG_TOL * self.scale())
    }

    /// `A_j` in the monic convention `I - A.x - B.x*`.
    pub fn a(&self, j: usize) -> CMat {
        -&self.coeff_x[j]
    }

    pub fn b(&self, j: usize) -> CMat {
        -&self.coeff_xstar[j]
    }

    /// `A_1..A_g, B_1..B_g` (monic convention), the generators of the coefficient algebra.
    pub fn generators(&self) -> Vec<CMat> {
        (0..self.g).map(|j| self.a(j)).chain((0..self.g).map(|j| self.b(j))).collect()
    }

    /// Coefficient of slot `k` of the joint alphabet as stored.
    pub fn slot(&self, k: usize) -> &CMat {
        if k < self.g {
            &self.coeff_x[k]
        } else {
            &self.coeff_xstar[k - self.g]
        }
    }

    pub fn evaluate(&self, x: &MatrixTuple) -> Result<CMat> {
        if x.g() != self.g {
            return Err(Error::VariableCount { expected: self.g, got: x.g() });
        }
        let mut out = kron(&self.constant, &eye(x.n));
        for j in 0..self.g {
            out += kron(&self.coeff_x[j], &x.xs[j]);
            out += kron(&self.coeff_xstar[j], &x.xs[j].adjoint());
        }
        Ok(out)
    }

    /// Smallest eigenvalue of the (hermitian) evaluation.
    pub fn min_eig_at(&self, x: &MatrixTuple) -> Result<f64> {
        Ok(min_eig(&self.evaluate(x)?))
    }

    pub fn adjoint(&self) -> LinearPencil {
        LinearPencil {
            rows: self.cols,
            cols: self.rows,
            g: self.g,
            constant: self.constant.adjoint(),
            coeff_x: self.coeff_xstar.iter().map(|m| m.adjoint()).collect(),
            coeff_xstar: self.coeff_x.iter().map(|m| m.adjoint()).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> Result<LinearPencil> {
        LinearPencil::new(
            f(&self.constant),
            self.coeff_x.iter().map(&f).collect(),
            self.coeff_xstar.iter().map(&f).collect(),
        )
    }

    /// `S L T`.
    pub fn transform(&self, s: &CMat, t: &CMat) -> Result<LinearPencil> {
        if s.ncols() != self.rows || t.nrows() != self.cols {
            return Err(Error::DimensionMismatch("transform sizes".into()));
        }
        self.map(|m| s * m * t)
    }

    /// Keep rows `r0..r0+nr` and columns `c0..c0+nc`.
    pub fn sub_block(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> LinearPencil {
        self.map(|m| m.view((r0, c0), (nr, nc)).into_owned()).expect("consistent sizes")
    }

    pub fn direct_sum(&self, other: &LinearPencil) -> Result<LinearPencil> {
        if self.g != other.g {
            return Err(Error::VariableCount { expected: self.g, got: other.g });
        }
        let bd = |a: &CMat, b: &CMat| block_diag(&[a, b]);
        LinearPencil::new(
            bd(&self.constant, &other.constant),
            self.coeff_x.iter().zip(&other.coeff_x).map(|(a, b)| bd(a, b)).collect(),
            self.coeff_xstar.iter().zip(&other.coeff_xstar).map(|(a, b)| bd(a, b)).collect(),
        )
    }

    pub fn direct_sum_all(g: usize, parts: &[LinearPencil]) -> Result<LinearPencil> {
        let mut acc = LinearPencil::empty(g);
        for p in parts {
            acc = acc.direct_sum(p)?;
        }
        Ok(acc)
    }

    /// The pencil as a square matrix polynomial.
    pub fn to_ncpoly(&self) -> Result<NcPoly> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("only square pencils are polynomials here".into()));
        }
        let mut terms = vec![(Word::empty(), self.constant.clone())];
        for j in 0..self.g {
            terms.push((Word(vec![Letter::x(j + 1)]), self.coeff_x[j].clone()));
            terms.push((Word(vec![Letter::xs(j + 1)]), self.coeff_xstar[j].clone()));
        }
        NcPoly::from_terms(self.rows, self.g, terms)
    }

    /// Read a square affine linear polynomial back into a pencil.
    pub fn from_ncpoly(p: &NcPoly) -> Result<LinearPencil> {
        if p.degree() > 1 {
            return Err(Error::Invalid("polynomial is not affine linear".into()));
        }
        LinearPencil::new(
            p.constant_term(),
            (1..=p.g).map(|j| p.coeff(&Word(vec![Letter::x(j)]))).collect(),
            (1..=p.g).map(|j| p.coeff(&Word(vec![Letter::xs(j)]))).collect(),
        )
    }

    /// Schur complement `L_kk - L_ke L_ee^{-1} L_ek` for a constant invertible `L_ee`.
    pub fn schur_complement(&self, keep: &[usize], elim: &[usize]) -> Result<NcPoly> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("schur complement needs a square pencil".into()));
        }
        let pick = |m: &CMat, r: &[usize], cidx: &[usize]| CMat::from_fn(r.len(), cidx.len(), |i, j| m[(r[i], cidx[j])]);
        let slots: Vec<(Word, &CMat)> = std::iter::once((Word::empty(), &self.constant))
            .chain((0..self.g).map(|j| (Word(vec![Letter::x(j + 1)]), &self.coeff_x[j])))
            .chain((0..self.g).map(|j| (Word(vec![Letter::xs(j + 1)]), &self.coeff_xstar[j])))
            .collect();
        for (w, m) in &slots[1..] {
            if max_abs(&pick(m, elim, elim)) > FLAG_TOL {
                return Err(Error::Invalid(format!("eliminated block depends on {w}")));
            }
        }
        let e = pick(&self.constant, elim, elim)
            .try_inverse()
            .ok_or_else(|| Error::Invalid("eliminated block is singular".into()))?;
        let mut terms = Vec::new();
        for (w, m) in &slots {
            terms.push((w.clone(), pick(m, keep, keep)));
        }
        for (w1, m1) in &slots {
            for (w2, m2) in &slots {
                let prod = pick(m1, keep, elim) * &e * pick(m2, elim, keep);
                terms.push((w1.concat(w2), -prod));
            }
        }
        NcPoly::from_terms(keep.len(), self.g, terms)
    }
}

#[derive(Serialize, Deserialize)]
struct PencilJson {
    rows: usize,
    cols: usize,
    g: usize,
    constant: JsonMatrix,
    coeff_x: Vec<JsonMatrix>,
    coeff_xstar: Vec<JsonMatrix>,
    monic: bool,
    hermitian: bool,
}

impl Serialize for LinearPencil {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PencilJson {
            rows: self.rows,
            cols: self.cols,
            g: self.g,
            constant: json::to_json(&self.constant),
            coeff_x: self.coeff_x.iter().map(json::to_json).collect(),
            coeff_xstar: self.coeff_xstar.iter().map(json::to_json).collect(),
            monic: self.is_monic(),
            hermitian: self.is_hermitian_monic(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearPencil {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let p = PencilJson::deserialize(d)?;
        let read = |m: &JsonMatrix| -> std::result::Result<CMat, D::Error> {
            let out = json::from_json(m, p.cols).map_err(D::Error::custom)?;
            if out.nrows() == 0 {
                return Ok(zeros(p.rows, p.cols));
            }
            if out.shape() != (p.rows, p.cols) {
                return Err(D::Error::custom(format!("pencil matrix must be {}x{}", p.rows, p.cols)));
            }
            Ok(out)
        };
        if p.coeff_x.len() != p.g || p.coeff_xstar.len() != p.g {
            return Err(D::Error::custom("coefficient lists must have g entries"));
        }
        let pencil = LinearPencil::new(
            read(&p.constant)?,
            p.coeff_x.iter().map(read).collect::<std::result::Result<_, _>>()?,
            p.coeff_xstar.iter().map(read).collect::<std::result::Result<_, _>>()?,
        )
        .map_err(D::Error::custom)?;
        if p.monic && !pencil.is_monic() {
            return Err(D::Error::custom("pencil flagged monic but constant term is not I"));
        }
        if p.hermitian && !pencil.is_hermitian_monic() {
            return Err(D::Error::custom("pencil flagged hermitian but coeff_xstar != coeff_x*"));
        }
        Ok(pencil)
    }
}
