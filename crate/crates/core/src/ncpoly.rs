//! Noncommutative matrix polynomials in `x_1..x_g` and their adjoints.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, JsonMatrix};
use crate::linalg::{c, eye, kron, max_abs, random_cmat, zeros, CMat, C64};

/// Coefficients whose largest entry is below this magnitude are dropped.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// `x_index` or its adjoint; `index` is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub index: usize,
    pub starred: bool,
}

impl Letter {
    pub fn x(index: usize) -> Self {
        Letter { index, starred: false }
    }

    pub fn xs(index: usize) -> Self {
        Letter { index, starred: true }
    }

    pub fn flip(self) -> Self {
        Letter { index: self.index, starred: !self.starred }
    }

    /// Position in the joint alphabet `z = (x_1..x_g, x_1*..x_g*)`, 0-based.
    pub fn slot(self, g: usize) -> usize {
        self.index - 1 + if self.starred { g } else { 0 }
    }

    pub fn from_slot(k: usize, g: usize) -> Self {
        if k < g {
            Letter::x(k + 1)
        } else {
            Letter::xs(k - g + 1)
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}{}", self.index, if self.starred { "'" } else { "" })
    }
}

/// A word in the letters; the empty word is the identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Word(vec![])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn adjoint(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.flip()).collect())
    }

    /// Starred letters all precede unstarred ones.
    pub fn is_hereditary(&self) -> bool {
        let first_plain = self.0.iter().position(|l| !l.starred).unwrap_or(self.0.len());
        self.0[first_plain..].iter().all(|l| !l.starred)
    }

    pub fn max_index(&self) -> usize {
        self.0.iter().map(|l| l.index).max().unwrap_or(0)
    }

    /// `w(X, X*)` for an n x n tuple.
    pub fn eval(&self, x: &MatrixTuple) -> CMat {
        let mut acc = eye(x.n);
        for l in &self.0 {
            let m = &x.xs[l.index - 1];
            acc = if l.starred { acc * m.adjoint() } else { acc * m };
        }
        acc
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// A g-tuple of n x n matrices; adjoints are taken at evaluation time.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixTuple {
    pub n: usize,
    pub xs: Vec<CMat>,
}

impl MatrixTuple {
    pub fn new(xs: Vec<CMat>) -> Result<Self> {
        let n = xs.first().map(|m| m.nrows()).unwrap_or(0);
        if xs.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::DimensionMismatch("tuple matrices must be square of equal size".into()));
        }
        Ok(MatrixTuple { n, xs })
    }

    pub fn zero(n: usize, g: usize) -> Self {
        MatrixTuple { n, xs: vec![zeros(n, n); g] }
    }

    pub fn scalar(vals: &[C64]) -> Self {
        MatrixTuple {
            n: 1,
            xs: vals.iter().map(|&v| CMat::from_element(1, 1, v)).collect(),
        }
    }

    /// Pseudorandom generic tuple: entries uniform on [-1,1]^2.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, g: usize) -> Self {
        MatrixTuple {
            n,
            xs: (0..g).map(|_| random_cmat(rng, n, n)).collect(),
        }
    }

    pub fn g(&self) -> usize {
        self.xs.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        MatrixTuple {
            n: self.n,
            xs: self.xs.iter().map(|m| m.scale(s)).collect(),
        }
    }

    pub fn direct_sum(&self, other: &MatrixTuple) -> Result<Self> {
        if self.g() != other.g() {
            return Err(Error::VariableCount { expected: self.g(), got: other.g() });
        }
        let xs = self
            .xs
            .iter()
            .zip(&other.xs)
            .map(|(a, b)| crate::linalg::block_diag(&[a, b]))
            .collect();
        Ok(MatrixTuple { n: self.n + other.n, xs })
    }

    /// Slot `k` of the joint alphabet: `X_{k+1}` or an adjoint.
    pub fn z(&self, k: usize) -> CMat {
        let g = self.g();
        if k < g {
            self.xs[k].clone()
        } else {
            self.xs[k - g].adjoint()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PointJson {
    n: usize,
    #[serde(rename = "X")]
    x: Vec<JsonMatrix>,
}

impl Serialize for MatrixTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PointJson { n: self.n, x: self.xs.iter().map(json::to_json).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MatrixTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = PointJson::deserialize(d)?;
        let xs = p
            .x
            .iter()
            .map(|m| json::from_json(m, p.n))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        if xs.iter().any(|m| m.nrows() != p.n || m.ncols() != p.n) {
            return Err(serde::de::Error::custom("point matrices must be n x n"));
        }
        Ok(MatrixTuple { n: p.n, xs })
    }
}

/// `f = sum_w f_w w` with delta x delta complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct NcPoly {
    pub delta: usize,
    pub g: usize,
    pub terms: BTreeMap<Word, CMat>,
}

impl NcPoly {
    pub fn zero(delta: usize, g: usize) -> Self {
        NcPoly { delta, g, terms: BTreeMap::new() }
    }

    pub fn constant(m: CMat, g: usize) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch("coefficient must be square".into()));
        }
        let mut p = NcPoly::zero(m.nrows(), g);
        p.terms.insert(Word::empty(), m);
        p.canonicalize();
        Ok(p)
    }

    pub fn scalar(z: C64, g: usize) -> Self {
        NcPoly::constant(CMat::from_element(1, 1, z), g).expect("1x1 is square")
    }

    pub fn identity(delta: usize, g: usize) -> Self {
        NcPoly::constant(eye(delta), g).expect("identity is square")
    }

    /// Scalar monomial `coeff * w`.
    pub fn monomial(w: Word, coeff: C64, g: usize) -> Result<Self> {
        NcPoly::from_terms(1, g, vec![(w, CMat::from_element(1, 1, coeff))])
    }

    pub fn letter(l: Letter, g: usize) -> Result<Self> {
        NcPoly::monomial(Word(vec![l]), c(1.0, 0.0), g)
    }

    pub fn from_terms(delta: usize, g: usize, terms: Vec<(Word, CMat)>) -> Result<Self> {
        let mut p = NcPoly::zero(delta, g);
        for (w, m) in terms {
            if m.nrows() != delta || m.ncols() != delta {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient of {w} is {}x{}, expected {delta}x{delta}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if w.max_index() > g || w.0.iter().any(|l| l.index == 0) {
                return Err(Error::Invalid(format!("word {w} uses a variable outside 1..{g}")));
            }
            *p.terms.entry(w).or_insert_with(|| zeros(delta, delta)) += m;
        }
        p.canonicalize();
        Ok(p)
    }

    /// Drop negligible coefficients.
    pub fn canonicalize(&mut self) {
        self.terms.retain(|_, m| max_abs(m) >= ZERO_THRESHOLD);
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|w| w.len()).max().unwrap_or(0)
    }

    pub fn coeff(&self, w: &Word) -> CMat {
        self.terms.get(w).cloned().unwrap_or_else(|| zeros(self.delta, self.delta))
    }

    pub fn constant_term(&self) -> CMat {
        self.coeff(&Word::empty())
    }

    /// Reinterpret with a larger variable count.
    pub fn with_vars(&self, g: usize) -> Result<Self> {
        let used = self.terms.keys().map(|w| w.max_index()).max().unwrap_or(0);
        if used > g {
            return Err(Error::VariableCount { expected: g, got: used });
        }
        Ok(NcPoly { g, ..self.clone() })
    }

    fn check_compatible(&self, other: &NcPoly) -> Result<()> {
        if self.delta != other.delta {
            return Err(Error::DimensionMismatch(format!(
                "delta {} vs {}",
                self.delta, other.delta
            )));
        }
        if self.g != other.g {
            return Err(Error::VariableCount { expected: self.g, got: other.g });
        }
        Ok(())
    }

    pub fn add(&self, other: &NcPoly) -> Result<NcPoly> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (w, m) in &other.terms {
            *out.terms.entry(w.clone()).or_insert_with(|| zeros(self.delta, self.delta)) += m;
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn sub(&self, other: &NcPoly) -> Result<NcPoly> {
        self.add(&other.scale(c(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &NcPoly) -> Result<NcPoly> {
        self.check_compatible(other)?;
        let mut out = NcPoly::zero(self.delta, self.g);
        for (w1, m1) in &self.terms {
            for (w2, m2) in &other.terms {
                let w = w1.concat(w2);
                *out.terms.entry(w).or_insert_with(|| zeros(self.delta, self.delta)) += m1 * m2;
            }
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn scale(&self, a: C64) -> NcPoly {
        let mut out = self.clone();
        for m in out.terms.values_mut() {
            *m *= a;
        }
        out.canonicalize();
        out
    }

    /// `M p` for a constant matrix `M`.
    pub fn left_mul(&self, m: &CMat) -> Result<NcPoly> {
        if m.ncols() != self.delta || m.nrows() != self.delta {
            return Err(Error::DimensionMismatch("left factor size".into()));
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v = m * &*v;
        }
        out.canonicalize();
        Ok(out)
    }

    /// Replace every scalar coefficient `a` by `a * I_delta`, or embed a 1x1 polynomial.
    pub fn broadcast(&self, delta: usize) -> Result<NcPoly> {
        if self.delta == delta {
            return Ok(self.clone());
        }
        if self.delta != 1 {
            return Err(Error::DimensionMismatch(format!(
                "cannot broadcast {}x{} to {delta}x{delta}",
                self.delta, self.delta
            )));
        }
        let terms = self
            .terms
            .iter()
            .map(|(w, m)| (w.clone(), eye(delta) * m[(0, 0)]))
            .collect();
        Ok(NcPoly { delta, g: self.g, terms })
    }

    pub fn adjoint(&self) -> NcPoly {
        let mut out = NcPoly::zero(self.delta, self.g);
        for (w, m) in &self.terms {
            out.terms.insert(w.adjoint(), m.adjoint());
        }
        out
    }

    /// Largest coefficient-wise discrepancy.
    pub fn distance(&self, other: &NcPoly) -> f64 {
        let mut worst: f64 = 0.0;
        for (w, m) in &self.terms {
            worst = worst.max(max_abs(&(m - other.coeff(w))));
        }
        for (w, m) in &other.terms {
            if !self.terms.contains_key(w) {
                worst = worst.max(max_abs(m));
            }
        }
        worst
    }

    /// Coefficient-wise self-adjointness up to `1e-10` relative to the coefficient scale.
    pub fn is_hermitian(&self) -> bool {
        let scale = self.terms.values().map(max_abs).fold(1.0, f64::max);
        self.distance(&self.adjoint()) <= 1e-10 * scale
    }

    pub fn is_hereditary(&self) -> bool {
        self.terms.keys().all(|w| w.is_hereditary())
    }

    /// `f(X, X*) = sum_w f_w (x) w(X, X*)`, an (n delta) x (n delta) matrix.
    pub fn evaluate(&self, x: &MatrixTuple) -> Result<CMat> {
        if x.g() != self.g {
            return Err(Error::VariableCount { expected: self.g, got: x.g() });
        }
        let size = self.delta * x.n;
        let mut out = zeros(size, size);
        let mut cache: BTreeMap<Word, CMat> = BTreeMap::new();
        for (w, m) in &self.terms {
            // Words arrive in length order, so the prefix is usually cached.
            let wm = if w.is_empty() {
                eye(x.n)
            } else {
                let prefix = Word(w.0[..w.len() - 1].to_vec());
                let base = cache.get(&prefix).cloned().unwrap_or_else(|| prefix.eval(x));
                let l = w.0[w.len() - 1];
                let last = &x.xs[l.index - 1];
                if l.starred {
                    base * last.adjoint()
                } else {
                    base * last
                }
            };
            out += kron(m, &wm);
            cache.insert(w.clone(), wm);
        }
        Ok(out)
    }

    /// Random polynomial with up to `terms` words of length at most `degree`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        delta: usize,
        g: usize,
        degree: usize,
        terms: usize,
    ) -> NcPoly {
        let mut p = NcPoly::zero(delta, g);
        for _ in 0..terms {
            let len = rng.gen_range(0..=degree);
            let w = Word(
                (0..len)
                    .map(|_| Letter { index: rng.gen_range(1..=g), starred: rng.gen_bool(0.5) })
                    .collect(),
            );
            let m = random_cmat(rng, delta, delta);
            *p.terms.entry(w).or_insert_with(|| zeros(delta, delta)) += m;
        }
        p.canonicalize();
        p
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    word: Vec<(usize, bool)>,
    coeff: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
struct NcPolyJson {
    delta: usize,
    g: usize,
    terms: Vec<TermJson>,
}

impl Serialize for NcPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NcPolyJson {
            delta: self.delta,
            g: self.g,
            terms: self
                .terms
                .iter()
                .map(|(w, m)| TermJson {
                    word: w.0.iter().map(|l| (l.index, l.starred)).collect(),
                    coeff: json::to_json(m),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NcPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = NcPolyJson::deserialize(d)?;
        let mut terms = Vec::new();
        for t in &raw.terms {
            let w = Word(t.word.iter().map(|&(index, starred)| Letter { index, starred }).collect());
            let m = json::from_json(&t.coeff, raw.delta).map_err(serde::de::Error::custom)?;
            terms.push((w, m));
        }
        NcPoly::from_terms(raw.delta, raw.g, terms).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x(j: usize, g: usize) -> NcPoly {
        NcPoly::letter(Letter::x(j), g).unwrap()
    }

    fn xs(j: usize, g: usize) -> NcPoly {
        NcPoly::letter(Letter::xs(j), g).unwrap()
    }

    #[test]
    fn single_word_product() {
        let p = x(1, 1).mul(&xs(1, 1)).unwrap();
        assert_eq!(p.terms.len(), 1);
        let w = Word(vec![Letter::x(1), Letter::xs(1)]);
        assert_eq!(p.coeff(&w)[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn additive_inverse_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = NcPoly::random(&mut rng, 2, 2, 3, 6);
        assert!(p.add(&p.scale(c(-1.0, 0.0))).unwrap().is_zero());
    }

    #[test]
    fn hand_convolution() {
        let one = NcPoly::identity(1, 2);
        let x1x2 = x(1, 2).mul(&x(2, 2)).unwrap();
        let lhs = one.add(&x1x2).unwrap().mul(&one.sub(&x1x2).unwrap()).unwrap();
        let rhs = one.sub(&x1x2.mul(&x1x2).unwrap()).unwrap();
        assert_eq!(lhs.distance(&rhs), 0.0);
        assert_eq!(lhs.terms.len(), 2);
    }

    #[test]
    fn adjoint_reverses_words() {
        let p = x(1, 2).mul(&x(2, 2)).unwrap().adjoint();
        let w = Word(vec![Letter::xs(2), Letter::xs(1)]);
        assert!(p.terms.contains_key(&w));
    }

    #[test]
    fn nilpotent_jordan_evaluation() {
        let mut j = zeros(2, 2);
        j[(0, 1)] = c(1.0, 0.0);
        let t = MatrixTuple::new(vec![j]).unwrap();
        let v = x(1, 1).mul(&xs(1, 1)).unwrap().evaluate(&t).unwrap();
        let expect = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        assert_eq!(v, expect);
    }

    #[test]
    fn hereditary_and_hermitian() {
        let p = xs(1, 2).mul(&x(2, 2)).unwrap();
        assert!(p.is_hereditary());
        let q = x(2, 2).mul(&xs(1, 2)).unwrap();
        assert!(!q.is_hereditary());
        let h = NcPoly::identity(1, 1).add(&x(1, 1)).unwrap().add(&xs(1, 1)).unwrap();
        assert!(h.is_hermitian());
        assert!(!x(1, 1).is_hermitian());
    }

    #[test]
    fn degree_of_constant() {
        assert_eq!(NcPoly::identity(1, 1).degree(), 0);
        assert_eq!(NcPoly::zero(1, 1).degree(), 0);
    }

    #[test]
    fn word_order_is_length_then_lex() {
        let a = Word(vec![Letter::xs(2)]);
        let b = Word(vec![Letter::x(1), Letter::x(1)]);
        let e = Word::empty();
        assert!(e < a && a < b);
        assert!(Word(vec![Letter::x(1)]) < Word(vec![Letter::xs(1)]));
        assert!(Word(vec![Letter::xs(1)]) < Word(vec![Letter::x(2)]));
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = NcPoly::random(&mut rng, 2, 2, 2, 5);
        let s = serde_json::to_string(&p).unwrap();
        let q: NcPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
