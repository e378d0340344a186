//! Full-rank test of a pencil on the interior of a free spectrahedron, by repeated
//! certificate solves with column restriction, plus singularity witnesses.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::json;
use crate::linalg::{self, eye, herm_fn, hermitian_part, kron, max_abs, min_eig, CMat};
use crate::ncpoly::MatrixTuple;
use crate::pencil::LinearPencil;
use crate::sdp::{rank_certificate, RankCertificate, RankDual};
use crate::sdp::SdpConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankResult {
    FullRank,
    RankDeficient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessSource {
    Gns,
    Scan,
}

/// One solve of the certificate problem.
#[derive(Clone, Debug, Serialize)]
pub struct ChainLevel {
    pub level: usize,
    pub rows: usize,
    pub cols: usize,
    /// `certificate` or `infeasible`.
    pub status: String,
    #[serde(with = "json::opt_cmat")]
    pub d: Option<CMat>,
    pub p0_kernel_dim: Option<usize>,
    pub v_dim: Option<usize>,
    pub dual_slack: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub point: MatrixTuple,
    pub source: WitnessSource,
    /// Smallest singular value of `Ltilde` at the point.
    pub sigma_min: f64,
    /// Smallest eigenvalue of the domain pencil at the point.
    pub domain_min_eig: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankCheckOutcome {
    pub result: RankResult,
    /// True when the recursion ran on the adjoint (input had fewer rows than columns).
    pub adjoint: bool,
    pub chain: Vec<ChainLevel>,
    pub witness: Option<Witness>,
}

impl RankCheckOutcome {
    pub fn depth(&self) -> usize {
        self.chain.len()
    }
}

#[derive(Clone, Debug)]
pub struct RankCheckConfig {
    pub sdp: SdpConfig,
    pub no_gns: bool,
    pub scan_samples: usize,
}

impl Default for RankCheckConfig {
    fn default() -> Self {
        RankCheckConfig { sdp: SdpConfig::default(), no_gns: false, scan_samples: 1000 }
    }
}

impl RankCheckConfig {
    pub fn with_tol(tol: f64) -> Self {
        RankCheckConfig { sdp: SdpConfig::with_tol(tol), ..Default::default() }
    }
}

/// Decide whether `Ltilde(X)` has full column rank for every `X` with `L(X) ≻ 0`.
pub fn full_rank_on_interior<R: Rng + ?Sized>(
    ltilde: &LinearPencil,
    l: &LinearPencil,
    cfg: &RankCheckConfig,
    rng: &mut R,
) -> Result<RankCheckOutcome> {
    if ltilde.g != l.g {
        return Err(Error::VariableCount { expected: l.g, got: ltilde.g });
    }
    if l.size() > 0 && !l.is_hermitian_monic() {
        return Err(Error::Invalid("domain pencil must be hermitian monic".into()));
    }
    let adjoint = ltilde.rows < ltilde.cols;
    let top = if adjoint { ltilde.adjoint() } else { ltilde.clone() };
    let mut cur = top.clone();
    let mut chain = Vec::new();
    if cur.cols == 0 {
        return Ok(RankCheckOutcome { result: RankResult::FullRank, adjoint, chain, witness: None });
    }
    for level in 1..=top.cols + 1 {
        match rank_certificate(&cur, l, &cfg.sdp)? {
            RankCertificate::Marginal { .. } => return Err(Error::MarginalSdp { level }),
            RankCertificate::Infeasible(dual) => {
                chain.push(ChainLevel {
                    level,
                    rows: cur.rows,
                    cols: cur.cols,
                    status: "infeasible".into(),
                    d: None,
                    p0_kernel_dim: None,
                    v_dim: None,
                    dual_slack: Some(dual.dual_slack).filter(|s| s.is_finite()),
                });
                let tol = cfg.sdp.tol;
                let mut witness = if cfg.no_gns {
                    None
                } else {
                    extract_witness(&dual, l, &cur, tol).and_then(|x| check_witness(x, l, &cur, tol, WitnessSource::Gns))
                };
                if witness.is_none() {
                    witness = scan_witness(l, &cur, tol, cfg.scan_samples, rng);
                }
                // a kernel vector of the restriction is a kernel vector of the original
                let witness = witness.map(|w| reverify(w, &top));
                return Ok(RankCheckOutcome { result: RankResult::RankDeficient, adjoint, chain, witness });
            }
            RankCertificate::Certificate { d, v, p0_kernel_dim, .. } => {
                let vdim = v.ncols();
                chain.push(ChainLevel {
                    level,
                    rows: cur.rows,
                    cols: cur.cols,
                    status: "certificate".into(),
                    d: Some(d),
                    p0_kernel_dim: Some(p0_kernel_dim),
                    v_dim: Some(vdim),
                    dual_slack: None,
                });
                if vdim == 0 {
                    return Ok(RankCheckOutcome { result: RankResult::FullRank, adjoint, chain, witness: None });
                }
                if vdim >= cur.cols {
                    return Err(Error::NumericalBreakdown("certificate kernel did not shrink".into()));
                }
                cur = cur.transform(&eye(cur.rows), &v)?;
            }
        }
    }
    Err(Error::NumericalBreakdown("rank recursion exceeded column count".into()))
}

fn reverify(w: Witness, top: &LinearPencil) -> Witness {
    let sigma_min = top.evaluate(&w.point).map(|m| smallest_sv(&m)).unwrap_or(f64::INFINITY);
    Witness { sigma_min, ..w }
}

/// Smallest of the `min(rows, cols)` singular values.
fn smallest_sv(m: &CMat) -> f64 {
    linalg::svd(m).s.iter().copied().fold(f64::INFINITY, f64::min)
}

fn domain_min_eig(l: &LinearPencil, x: &MatrixTuple) -> f64 {
    if l.size() == 0 {
        return f64::INFINITY;
    }
    l.min_eig_at(x).unwrap_or(f64::NEG_INFINITY)
}

fn check_witness(x: MatrixTuple, l: &LinearPencil, ltilde: &LinearPencil, tol: f64, source: WitnessSource) -> Option<Witness> {
    let m = ltilde.evaluate(&x).ok()?;
    let scale = max_abs(&m).max(1.0);
    let sigma_min = smallest_sv(&m);
    let lmin = domain_min_eig(l, &x);
    if lmin > tol && sigma_min < tol.sqrt() * scale {
        Some(Witness { point: x, source, sigma_min, domain_min_eig: lmin })
    } else {
        None
    }
}

/// Point evaluation recovered from the dual functional.
///
/// The functional reads `q -> Re tr(P q_0) + sum_j Re tr(Lam_j* q_j)` on the affine
/// part, which is evaluation at `X_j = P^{-1/2} Lam_j P^{-1/2}` against the vector
/// `P^{1/2}`. The verification step guards the identification.
pub fn extract_witness(dual: &RankDual, l: &LinearPencil, ltilde: &LinearPencil, tol: f64) -> Option<MatrixTuple> {
    let eps = dual.gamma0.nrows();
    if eps == 0 || dual.gamma.len() != l.g {
        return None;
    }
    let p = hermitian_part(&(hermitian_part(&dual.gamma0) + eye(eps).scale(dual.lambda_norm)).transpose());
    if min_eig(&p) <= tol * max_abs(&p).max(1.0) {
        return None;
    }
    let pis = herm_fn(&p, |t| 1.0 / t.sqrt());
    let xs = dual.gamma.iter().map(|gj| &pis * gj.map(|z| z.conj()).scale(0.5) * &pis).collect();
    let x = MatrixTuple::new(xs).ok()?;
    check_witness(x.clone(), l, ltilde, tol, WitnessSource::Gns).map(|_| x)
}

/// Seeded random rays `s H` inside the domain, minimizing the smallest singular value
/// of `Ltilde` along each ray.
pub fn scan_witness<R: Rng + ?Sized>(
    l: &LinearPencil,
    ltilde: &LinearPencil,
    tol: f64,
    samples: usize,
    rng: &mut R,
) -> Option<Witness> {
    let n = l.size().max(ltilde.cols).max(1);
    let g = l.g;
    let mut best: Option<(f64, MatrixTuple)> = None;
    for _ in 0..samples {
        let h = MatrixTuple::random(rng, n, g);
        let smax = ray_limit(l, &h).min(10.0) * (1.0 - 1e-3);
        let sig = |s: f64| {
            ltilde
                .evaluate(&h.scaled(s))
                .map(|m| smallest_sv(&m) / max_abs(&m).max(1.0))
                .unwrap_or(f64::INFINITY)
        };
        let grid = 48;
        let (mut bi, mut bv) = (0usize, f64::INFINITY);
        for i in 0..=grid {
            let v = sig(smax * i as f64 / grid as f64);
            if v < bv {
                bi = i;
                bv = v;
            }
        }
        let lo = smax * bi.saturating_sub(1) as f64 / grid as f64;
        let hi = smax * (bi + 1).min(grid) as f64 / grid as f64;
        let s = golden_min(&sig, lo, hi, 80);
        let v = sig(s);
        if best.as_ref().map_or(true, |b| v < b.0) {
            best = Some((v, h.scaled(s)));
        }
        if v < tol {
            break;
        }
    }
    let (_, x) = best?;
    let w = check_witness(x, l, ltilde, tol, WitnessSource::Scan)?;
    Some(w)
}

/// Largest `s` with `L(sH) ≻ 0`, infinite if the ray never leaves.
fn ray_limit(l: &LinearPencil, h: &MatrixTuple) -> f64 {
    if l.size() == 0 {
        return f64::INFINITY;
    }
    let mut t = linalg::zeros(l.size() * h.n, l.size() * h.n);
    for j in 0..l.g {
        t += kron(&l.a(j), &h.xs[j]) + kron(&l.b(j), &h.xs[j].adjoint());
    }
    let t = hermitian_part(&t);
    let lmax = -min_eig(&(-t));
    if lmax <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / lmax
    }
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        x1
    } else {
        x2
    }
}
