//! The unital algebra generated by pencil coefficients: irreducibility, radical,
//! block upper-triangularization and similarity of blocks.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, eye, kron, max_abs, zeros, CMat, C64};
pub use crate::pencil::LinearPencil;

/// Default relative tolerance for rank decisions.
pub const DEFAULT_TOL: f64 = 1e-8;
const SPLIT_RETRIES: usize = 20;
const SIMILAR_RETRIES: usize = 5;

/// Frobenius-orthonormal spanning set of a unital matrix algebra.
#[derive(Clone, Debug)]
pub struct AlgebraBasis {
    pub d: usize,
    pub basis: Vec<CMat>,
}

impl AlgebraBasis {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.d * self.d
    }

    /// Random element with complex Gaussian-free uniform weights.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> CMat {
        let mut out = zeros(self.d, self.d);
        for b in &self.basis {
            out += b * c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        out
    }

    /// Largest residual of `b_i b_j` outside the span.
    pub fn closure_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in &self.basis {
            for y in &self.basis {
                let mut p = x * y;
                for b in &self.basis {
                    let coef = b.dotc(&p);
                    p -= b * coef;
                }
                worst = worst.max(p.norm());
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Irreducible,
    Identity,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockInfo {
    pub offset: usize,
    pub size: usize,
    pub kind: BlockKind,
}

/// `pencil = S L S^{-1}`, block upper triangular with the listed diagonal blocks.
#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    pub s: CMat,
    pub s_inv: CMat,
    pub blocks: Vec<BlockInfo>,
    pub pencil: LinearPencil,
    /// Largest below-diagonal-block entry over all coefficients.
    pub residual: f64,
}

impl BlockDecomposition {
    pub fn block(&self, i: usize) -> LinearPencil {
        let b = &self.blocks[i];
        self.pencil.sub_block(b.offset, b.size, b.offset, b.size)
    }

    pub fn block_pencils(&self) -> Vec<LinearPencil> {
        (0..self.blocks.len()).map(|i| self.block(i)).collect()
    }
}

/// Span closure of `{I} ∪ mats` under products.
pub fn generated_algebra(mats: &[CMat]) -> AlgebraBasis {
    generated_algebra_tol(mats, DEFAULT_TOL).unwrap_or_else(|_| closure(mats, DEFAULT_TOL, false).expect("unchecked"))
}

/// As [`generated_algebra`], reporting residuals inside the ambiguity band.
pub fn generated_algebra_tol(mats: &[CMat], tol: f64) -> Result<AlgebraBasis> {
    closure(mats, tol, true)
}

/// Minimum ratio between the smallest accepted residual and a rejected one.
const AMBIGUITY_GAP: f64 = 1e3;

fn closure(mats: &[CMat], tol: f64, strict: bool) -> Result<AlgebraBasis> {
    let d = mats.first().map(|m| m.nrows()).unwrap_or(0);
    if d == 0 {
        return Ok(AlgebraBasis { d, basis: Vec::new() });
    }
    let gens: Vec<CMat> = mats
        .iter()
        .filter(|m| m.norm() > 0.0)
        .map(|m| m / c(m.norm(), 0.0))
        .collect();
    let mut basis: Vec<CMat> = vec![eye(d) / c((d as f64).sqrt(), 0.0)];
    // products are extended from the words themselves, not from the orthonormalized residuals,
    // so roundoff is not amplified by small accepted residuals
    let mut words: Vec<CMat> = basis.clone();
    // products rejected inside the ambiguity band; a later product may still supply them
    let mut doubtful: Vec<CMat> = Vec::new();
    let mut min_accepted = f64::INFINITY;
    let mut next = 0;
    while next < basis.len() && basis.len() < d * d {
        let cur = words[next].clone();
        next += 1;
        for g in &gens {
            let prod = g * &cur;
            let p = project_out(&basis, prod.clone());
            let r = p.norm();
            if r > tol {
                min_accepted = min_accepted.min(r);
                basis.push(p / c(r, 0.0));
                let pn = prod.norm();
                words.push(prod / c(pn, 0.0));
                if basis.len() == d * d {
                    break;
                }
            } else if strict && r > 0.1 * tol {
                doubtful.push(prod);
            }
        }
    }
    if basis.len() < d * d {
        for prod in doubtful {
            let r = project_out(&basis, prod).norm();
            // directions accepted with small residuals raise the roundoff floor of later products,
            // so a band value only counts when it is not clearly separated from the accepted ones
            if r > 0.1 * tol && r < 10.0 * tol && min_accepted < AMBIGUITY_GAP * r {
                return Err(Error::NumericalRankAmbiguity { value: r, tol });
            }
        }
    }
    Ok(AlgebraBasis { d, basis })
}

fn project_out(basis: &[CMat], mut p: CMat) -> CMat {
    for _ in 0..2 {
        for b in basis {
            let coef = b.dotc(&p);
            p -= b * coef;
        }
    }
    p
}

/// Generators of the coefficient algebra of a square pencil (monic convention).
fn coefficient_mats(l: &LinearPencil) -> Vec<CMat> {
    l.generators()
}

pub fn is_irreducible(l: &LinearPencil) -> bool {
    if l.size() == 0 {
        return false;
    }
    generated_algebra(&coefficient_mats(l)).is_full()
}

/// Jacobson radical by the trace form: `a ∈ rad` iff `tr(ab) = 0` for every `b`.
pub fn radical(alg: &AlgebraBasis, tol: f64) -> Result<Vec<CMat>> {
    radical_with(alg, tol, true)
}

fn radical_with(alg: &AlgebraBasis, tol: f64, strict: bool) -> Result<Vec<CMat>> {
    let k = alg.dim();
    if k == 0 {
        return Ok(Vec::new());
    }
    let t = CMat::from_fn(k, k, |i, j| (&alg.basis[i] * &alg.basis[j]).trace());
    let sv = linalg::svd(&t);
    let rank = linalg::numerical_rank(&sv.s, tol, strict)?;
    let mut out = Vec::new();
    for col in rank..k {
        let x = sv.v.column(col);
        let mut m = zeros(alg.d, alg.d);
        for (i, b) in alg.basis.iter().enumerate() {
            m += b * x[i];
        }
        out.push(m);
    }
    Ok(out)
}

fn radical_hint(alg: &AlgebraBasis, tol: f64) -> Vec<CMat> {
    radical_with(alg, tol, false).unwrap_or_default()
}

/// A proper nonzero invariant subspace of the algebra's action, as an orthonormal basis.
fn invariant_subspace<R: Rng + ?Sized>(alg: &AlgebraBasis, tol: f64, rng: &mut R) -> Result<CMat> {
    let d = alg.d;
    // trace-form rank is only a hint here; the candidate is verified below
    let rad = radical_hint(alg, tol.sqrt());
    if !rad.is_empty() {
        let mut stacked = zeros(d, d * rad.len());
        for (i, j) in rad.iter().enumerate() {
            stacked.view_mut((0, i * d), (d, d)).copy_from(j);
        }
        let w = linalg::orth(&stacked, tol.sqrt());
        if w.ncols() > 0 && w.ncols() < d && invariance_defect(alg, &w) <= 1e3 * tol.sqrt() {
            return Ok(w);
        }
    }
    for _ in 0..SPLIT_RETRIES {
        let a = alg.random_element(rng);
        let eig = linalg::eigenvalues(&a);
        let lambda = eig[rng.gen_range(0..eig.len())];
        let shifted = &a - eye(d) * lambda;
        let sv = linalg::svd(&shifted);
        let v = sv.v.column(d - 1).into_owned();
        let mut orbit = zeros(d, alg.dim());
        for (i, b) in alg.basis.iter().enumerate() {
            orbit.set_column(i, &(b * &v));
        }
        let w = linalg::orth(&orbit, tol.sqrt());
        if w.ncols() > 0 && w.ncols() < d && invariance_defect(alg, &w) <= 1e3 * tol.sqrt() {
            return Ok(w);
        }
    }
    Err(Error::NumericalRankAmbiguity { value: f64::NAN, tol })
}

fn invariance_defect(alg: &AlgebraBasis, w: &CMat) -> f64 {
    let proj = w * w.adjoint();
    let comp = eye(alg.d) - proj;
    alg.basis.iter().map(|b| max_abs(&(&comp * b * w))).fold(0.0, f64::max)
}

/// Unitary `U` such that `U* A U` is block upper triangular for every generator,
/// with the diagonal block sizes and kinds.
fn flag<R: Rng + ?Sized>(gens: &[CMat], d: usize, tol: f64, rng: &mut R) -> Result<(CMat, Vec<(usize, BlockKind)>)> {
    if d == 0 {
        return Ok((zeros(0, 0), Vec::new()));
    }
    let scale = gens.iter().map(max_abs).fold(0.0, f64::max);
    if d == 1 {
        let kind = if scale <= tol { BlockKind::Identity } else { BlockKind::Irreducible };
        return Ok((eye(1), vec![(1, kind)]));
    }
    let alg = generated_algebra_tol(gens, tol)?;
    if alg.is_full() {
        return Ok((eye(d), vec![(d, BlockKind::Irreducible)]));
    }
    let w = invariant_subspace(&alg, tol, rng)?;
    let u = {
        let comp = linalg::complement(&w, d);
        let mut u = zeros(d, d);
        u.view_mut((0, 0), w.shape()).copy_from(&w);
        u.view_mut((0, w.ncols()), comp.shape()).copy_from(&comp);
        u
    };
    let k = w.ncols();
    let transformed: Vec<CMat> = gens.iter().map(|g| u.adjoint() * g * &u).collect();
    let top: Vec<CMat> = transformed.iter().map(|m| m.view((0, 0), (k, k)).into_owned()).collect();
    let bot: Vec<CMat> = transformed.iter().map(|m| m.view((k, k), (d - k, d - k)).into_owned()).collect();
    let (u1, b1) = flag(&top, k, tol, rng)?;
    let (u2, b2) = flag(&bot, d - k, tol, rng)?;
    let full = u * linalg::block_diag(&[&u1, &u2]);
    let mut blocks = b1;
    blocks.extend(b2);
    Ok((full, blocks))
}

/// Simultaneous block upper-triangularization of a monic pencil's coefficients.
pub fn burnside_decompose<R: Rng + ?Sized>(l: &LinearPencil, tol: f64, rng: &mut R) -> Result<BlockDecomposition> {
    if !l.is_monic() {
        return Err(Error::Invalid("burnside decomposition needs a monic pencil".into()));
    }
    let d = l.size();
    let gens = coefficient_mats(l);
    let (u, sizes) = flag(&gens, d, tol, rng)?;
    let s = u.adjoint();
    let s_inv = u.clone();
    let pencil = l.transform(&s, &s_inv)?;
    let mut blocks = Vec::new();
    let mut off = 0;
    for (size, kind) in sizes {
        blocks.push(BlockInfo { offset: off, size, kind });
        off += size;
    }
    let residual = below_diagonal(&pencil, &blocks);
    let out = BlockDecomposition { s, s_inv, blocks, pencil, residual };
    Ok(out)
}

fn below_diagonal(p: &LinearPencil, blocks: &[BlockInfo]) -> f64 {
    let mut worst: f64 = 0.0;
    for m in p.coeff_x.iter().chain(&p.coeff_xstar) {
        for (i, bi) in blocks.iter().enumerate() {
            for bj in &blocks[..i] {
                let v = m.view((bi.offset, bj.offset), (bi.size, bj.size));
                worst = worst.max(v.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
    }
    worst
}

/// An invertible `P` with `P L1 = L2 P`, if one exists.
pub fn similar<R: Rng + ?Sized>(l1: &LinearPencil, l2: &LinearPencil, rng: &mut R) -> Option<CMat> {
    similar_tol(l1, l2, DEFAULT_TOL, rng)
}

pub fn similar_tol<R: Rng + ?Sized>(l1: &LinearPencil, l2: &LinearPencil, tol: f64, rng: &mut R) -> Option<CMat> {
    if l1.size() != l2.size() || l1.g != l2.g || !l1.is_square() || !l2.is_square() {
        return None;
    }
    let d = l1.size();
    if d == 0 {
        return Some(zeros(0, 0));
    }
    let id = eye(d);
    let g1 = coefficient_mats(l1);
    let g2 = coefficient_mats(l2);
    let rows = d * d * g1.len();
    let mut sys = zeros(rows.max(1), d * d);
    for (k, (a, b)) in g1.iter().zip(&g2).enumerate() {
        let blk = kron(&a.transpose(), &id) - kron(&id, b);
        sys.view_mut((k * d * d, 0), (d * d, d * d)).copy_from(&blk);
    }
    let scale = g1.iter().chain(&g2).map(max_abs).fold(1.0, f64::max);
    let ns = linalg::null_space(&sys, tol, scale);
    if ns.ncols() == 0 {
        return None;
    }
    for _ in 0..SIMILAR_RETRIES {
        let mut v = zeros(d * d, 1);
        for j in 0..ns.ncols() {
            let w = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            v += ns.column(j) * w;
        }
        let p = linalg::unvec(v.as_slice(), d, d);
        let sv = linalg::svd(&p).s;
        if sv[d - 1] > 1e-6 * sv[0] {
            return Some(p);
        }
    }
    None
}

#[derive(Clone, Debug, Serialize)]
pub struct SimilarityClass {
    pub representative: usize,
    pub members: Vec<usize>,
}

impl SimilarityClass {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }
}

/// Partition blocks into similarity classes; the first member represents its class.
pub fn similarity_classes<R: Rng + ?Sized>(blocks: &[LinearPencil], tol: f64, rng: &mut R) -> Vec<SimilarityClass> {
    let mut classes: Vec<SimilarityClass> = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let hit = classes
            .iter_mut()
            .find(|cl| similar_tol(&blocks[cl.representative], b, tol, rng).is_some());
        match hit {
            Some(cl) => cl.members.push(i),
            None => classes.push(SimilarityClass { representative: i, members: vec![i] }),
        }
    }
    classes
}

/// `det L(X)` relative to the product of diagonal block determinants.
pub fn block_det_product(dec: &BlockDecomposition, x: &crate::ncpoly::MatrixTuple) -> Result<C64> {
    let mut prod = c(1.0, 0.0);
    for b in dec.block_pencils() {
        prod *= linalg::det(&b.evaluate(x)?);
    }
    Ok(prod)
}
