//! Complex hermitian SDP feasibility: problem builder, realification, phase-I solve
//! with verified primal points or dual separating functionals.

mod builders;
mod ipm;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::json;
use crate::linalg::{self, c, eye, zeros, CMat, RMat, C64};

pub use builders::{
    hermitian_similarity, inclusion, inclusion_solve, moment_contraction_coeff, rank_certificate, MomentBlock, RankCertificate,
    RankDual, KERNEL_TOL,
};

/// Default cap on the number of real parameters of a problem.
pub const DEFAULT_CAP: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRef {
    Psd(usize),
    Free(usize),
}

/// Hermitian variable `H = X + shift I` with `X ⪰ 0`.
#[derive(Clone, Debug, Serialize)]
pub struct PsdBlock {
    pub size: usize,
    pub shift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeBlock {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Term {
    pub var: VarRef,
    #[serde(with = "json::cmat")]
    pub coeff: CMat,
}

/// `sum_t Re tr(coeff_t* V_t) = rhs`.
#[derive(Clone, Debug, Serialize)]
pub struct Constraint {
    pub terms: Vec<Term>,
    pub rhs: f64,
}

/// A complex-linear (or conjugate-linear) scalar form `tr(E* V)`.
#[derive(Clone, Debug)]
pub struct LinTerm {
    pub var: VarRef,
    pub e: CMat,
    pub conj: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SdpProblem {
    pub label: String,
    pub psd: Vec<PsdBlock>,
    pub free: Vec<FreeBlock>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    Marginal,
}

#[derive(Clone, Debug, Serialize)]
pub struct SdpResult {
    pub status: SdpStatus,
    /// Optimal phase-I value (largest common eigenvalue margin); `None` when the affine
    /// constraints alone are inconsistent.
    pub phase_value: Option<f64>,
    #[serde(with = "json::cmat_vec")]
    pub psd: Vec<CMat>,
    #[serde(with = "json::cmat_vec")]
    pub free: Vec<CMat>,
    /// One multiplier per real constraint, normalized so that `rhs . dual = 1` when infeasible.
    pub dual: Vec<f64>,
    pub residual: f64,
    pub min_eig: f64,
    /// For infeasible results: the dual functional is `⪯ dual_slack I` on every cone block.
    pub dual_slack: f64,
    pub iterations: usize,
    /// Final relative duality gap of the interior-point run.
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct SdpConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub cap: usize,
    pub dump_dir: Option<PathBuf>,
}

impl Default for SdpConfig {
    fn default() -> Self {
        SdpConfig { tol: 1e-8, max_iter: 150, cap: DEFAULT_CAP, dump_dir: None }
    }
}

impl SdpConfig {
    pub fn with_tol(tol: f64) -> Self {
        SdpConfig { tol, ..Default::default() }
    }
}

impl SdpProblem {
    pub fn new(label: &str) -> Self {
        SdpProblem { label: label.to_string(), ..Default::default() }
    }

    pub fn add_psd(&mut self, size: usize, shift: f64) -> VarRef {
        self.psd.push(PsdBlock { size, shift });
        VarRef::Psd(self.psd.len() - 1)
    }

    pub fn add_free(&mut self, rows: usize, cols: usize) -> VarRef {
        self.free.push(FreeBlock { rows, cols });
        VarRef::Free(self.free.len() - 1)
    }

    pub fn var_shape(&self, v: VarRef) -> (usize, usize) {
        match v {
            VarRef::Psd(i) => (self.psd[i].size, self.psd[i].size),
            VarRef::Free(i) => (self.free[i].rows, self.free[i].cols),
        }
    }

    pub fn add_real(&mut self, terms: Vec<Term>, rhs: f64) -> usize {
        for t in &terms {
            assert_eq!(t.coeff.shape(), self.var_shape(t.var), "coefficient shape");
        }
        self.constraints.push(Constraint { terms, rhs });
        self.constraints.len() - 1
    }

    /// Real and imaginary parts of `sum tr(E* V) (or its conjugate) = rhs`; returns both row indices.
    pub fn add_complex(&mut self, terms: &[LinTerm], rhs: C64) -> (usize, usize) {
        let re = terms.iter().map(|t| Term { var: t.var, coeff: t.e.clone() }).collect();
        let im = terms
            .iter()
            .map(|t| {
                let f = if t.conj { c(0.0, -1.0) } else { c(0.0, 1.0) };
                Term { var: t.var, coeff: &t.e * f }
            })
            .collect();
        let a = self.add_real(re, rhs.re);
        let b = self.add_real(im, rhs.im);
        (a, b)
    }

    /// Real parameters after realification.
    pub fn real_params(&self) -> usize {
        self.psd.iter().map(|b| b.size * (2 * b.size + 1)).sum::<usize>()
            + self.free.iter().map(|f| 2 * f.rows * f.cols).sum::<usize>()
    }

    fn free_offsets(&self) -> Vec<usize> {
        let mut off = Vec::new();
        let mut acc = 0;
        for f in &self.free {
            off.push(acc);
            acc += 2 * f.rows * f.cols;
        }
        off
    }

    /// Value of constraint `i` at complex variable values.
    pub fn row_value(&self, i: usize, psd: &[CMat], free: &[CMat]) -> f64 {
        self.constraints[i]
            .terms
            .iter()
            .map(|t| {
                let v = match t.var {
                    VarRef::Psd(k) => &psd[k],
                    VarRef::Free(k) => &free[k],
                };
                t.coeff.dotc(v).re
            })
            .sum()
    }
}

/// `Re tr(G* H)` for hermitian `H` equals `<K, Y>` on the realification
/// `Y = [[Re H, -Im H], [Im H, Re H]]`, with `K = 1/2 [[P, -Q], [Q, P]]` for `herm(G) = P + iQ`.
fn realify_coeff(g: &CMat) -> RMat {
    let h = linalg::hermitian_part(g);
    let n = h.nrows();
    let mut k = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let (p, q) = (h[(i, j)].re * 0.5, h[(i, j)].im * 0.5);
            k[(i, j)] = p;
            k[(i + n, j + n)] = p;
            k[(i, j + n)] = -q;
            k[(i + n, j)] = q;
        }
    }
    k
}

/// Hermitian matrix represented by a symmetric `2n x 2n` real matrix.
fn unrealify(y: &RMat) -> CMat {
    let n = y.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        c(
            0.5 * (y[(i, j)] + y[(i + n, j + n)]),
            0.5 * (y[(i + n, j)] - y[(i, j + n)]),
        )
    })
}

struct Realified {
    /// p x N, blocks first (full 2n x 2n column-major), then free parameters.
    a: DMatrix<f64>,
    b: DVector<f64>,
    block_sizes: Vec<usize>,
    block_offsets: Vec<usize>,
    free_start: usize,
    nfree: usize,
}

fn realify(p: &SdpProblem) -> Realified {
    let block_sizes: Vec<usize> = p.psd.iter().map(|b| 2 * b.size).collect();
    let mut block_offsets = Vec::new();
    let mut acc = 0;
    for &n in &block_sizes {
        block_offsets.push(acc);
        acc += n * n;
    }
    let free_start = acc;
    let free_off = p.free_offsets();
    let nfree: usize = p.free.iter().map(|f| 2 * f.rows * f.cols).sum();
    let ncols = free_start + nfree;
    let mut a = DMatrix::zeros(p.constraints.len(), ncols);
    let mut b = DVector::zeros(p.constraints.len());
    for (i, con) in p.constraints.iter().enumerate() {
        let mut rhs = con.rhs;
        for t in &con.terms {
            match t.var {
                VarRef::Psd(k) => {
                    let kmat = realify_coeff(&t.coeff);
                    let off = block_offsets[k];
                    for (idx, v) in kmat.iter().enumerate() {
                        a[(i, off + idx)] += v;
                    }
                    rhs -= p.psd[k].shift * t.coeff.trace().re;
                }
                VarRef::Free(k) => {
                    let off = free_start + free_off[k];
                    let len = t.coeff.len();
                    for (idx, z) in t.coeff.iter().enumerate() {
                        a[(i, off + idx)] += z.re;
                        a[(i, off + len + idx)] += z.im;
                    }
                }
            }
        }
        b[i] = rhs;
    }
    Realified { a, b, block_sizes, block_offsets, free_start, nfree }
}

static DUMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn dump(cfg: &SdpConfig, p: &SdpProblem, r: &SdpResult) {
    if let Some(dir) = &cfg.dump_dir {
        let k = DUMP_COUNTER.fetch_add(1, Ordering::SeqCst);
        let path = dir.join(format!("sdp-{k:04}-{}.json", p.label));
        let body = serde_json::json!({ "problem": p, "result": r });
        let _ = std::fs::create_dir_all(dir);
        let _ = std::fs::write(path, serde_json::to_string_pretty(&body).unwrap_or_default());
    }
}

/// Decide feasibility of `p` through the phase-I problem
/// `max t  s.t.  constraints,  Y_b - t I ⪰ 0`, with a cap `t ≤ 1` and a trace bound.
pub fn solve(p: &SdpProblem, cfg: &SdpConfig) -> Result<SdpResult> {
    let size = p.real_params();
    if size > cfg.cap {
        return Err(Error::ProblemTooLarge { size, cap: cfg.cap });
    }
    let r = solve_inner(p, cfg)?;
    dump(cfg, p, &r);
    Ok(r)
}

fn solve_inner(p: &SdpProblem, cfg: &SdpConfig) -> Result<SdpResult> {
    let tol = cfg.tol;
    let rp = realify(p);
    let nrows = p.constraints.len();
    let ncols = rp.a.ncols();
    let total_dim: usize = rp.block_sizes.iter().sum();

    // Orthonormalize the constraint rows.
    let (u, s, vt) = if nrows > 0 && ncols > 0 {
        let svd = rp.a.clone().svd(true, true);
        (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap())
    } else {
        (DMatrix::zeros(nrows, 0), DVector::zeros(0), DMatrix::zeros(0, ncols))
    };
    let smax = s.iter().cloned().fold(0.0, f64::max);
    // roundoff-level rows (e.g. A - B* for an already hermitian block) must not be amplified
    let rank = s.iter().filter(|&&v| v > 1e-10 * smax.max(1.0)).count();
    let ur = u.columns(0, rank).into_owned();
    let utb = ur.transpose() * &rp.b;
    let b_perp = &rp.b - &ur * &utb;
    let bnorm = rp.b.norm();
    if b_perp.norm() > tol.max(1e-10) * (1.0 + bnorm) {
        // Affine constraints are inconsistent: b_perp is a left null vector with b.b_perp > 0.
        let scale = rp.b.dot(&b_perp);
        let dual: Vec<f64> = b_perp.iter().map(|v| v / scale).collect();
        return Ok(SdpResult {
            status: SdpStatus::Infeasible,
            phase_value: None,
            psd: p.psd.iter().map(|b| zeros(b.size, b.size)).collect(),
            free: p.free.iter().map(|f| zeros(f.rows, f.cols)).collect(),
            dual,
            residual: b_perp.norm(),
            min_eig: f64::NAN,
            dual_slack: 0.0,
            iterations: 0,
            gap: 0.0,
        });
    }
    let sinv: Vec<f64> = (0..rank).map(|k| 1.0 / s[k]).collect();
    let bt = DVector::from_iterator(rank, (0..rank).map(|k| utb[k] * sinv[k]));
    let at = vt.rows(0, rank).into_owned();
    let tau_full = {
        let mut tau = DVector::zeros(nrows);
        for (k, &n) in rp.block_sizes.iter().enumerate() {
            let off = rp.block_offsets[k];
            for d in 0..n {
                let col = off + d * n + d;
                tau += rp.a.column(col);
            }
        }
        tau
    };
    let tt = DVector::from_iterator(rank, (0..rank).map(|k| ur.column(k).dot(&tau_full) * sinv[k]));

    let nb = rp.block_sizes.len();
    let mut r_bound = 100.0 * (total_dim as f64 + (total_dim as f64).sqrt() * bt.norm()).max(1.0);
    let mut attempt = 0;
    loop {
        let mut sizes = rp.block_sizes.clone();
        sizes.push(1); // cap slack
        sizes.push(1); // trace slack
        let nfree = rp.nfree + 1;
        let mut rows = Vec::with_capacity(rank + 2);
        for i in 0..rank {
            let mut blocks = Vec::with_capacity(nb + 2);
            for (k, &n) in rp.block_sizes.iter().enumerate() {
                let off = rp.block_offsets[k];
                let m = RMat::from_fn(n, n, |r, cc| at[(i, off + cc * n + r)]);
                blocks.push(Some((&m + m.transpose()) * 0.5));
            }
            blocks.push(None);
            blocks.push(None);
            let mut free = DVector::zeros(nfree);
            for j in 0..rp.nfree {
                free[j] = at[(i, rp.free_start + j)];
            }
            free[rp.nfree] = tt[i];
            rows.push(ipm::RealRow { blocks, free });
        }
        {
            let mut blocks: Vec<Option<RMat>> = vec![None; nb];
            blocks.push(Some(RMat::identity(1, 1)));
            blocks.push(None);
            let mut free = DVector::zeros(nfree);
            free[rp.nfree] = 1.0;
            rows.push(ipm::RealRow { blocks, free });
        }
        {
            let mut blocks: Vec<Option<RMat>> = rp.block_sizes.iter().map(|&n| Some(RMat::identity(n, n))).collect();
            blocks.push(None);
            blocks.push(Some(RMat::identity(1, 1)));
            rows.push(ipm::RealRow { blocks, free: DVector::zeros(nfree) });
        }
        let mut bvec = DVector::zeros(rank + 2);
        bvec.rows_mut(0, rank).copy_from(&bt);
        bvec[rank] = 1.0;
        bvec[rank + 1] = r_bound;
        let mut cvec = DVector::zeros(nfree);
        cvec[rp.nfree] = -1.0;
        let real = ipm::RealProblem { sizes, nfree, rows, b: bvec, c: cvec };
        let x0 = (r_bound / (2.0 * (total_dim as f64 + 1.0))).max(1.0);
        let sol = ipm::solve_real(&real, &ipm::IpmSettings { max_iter: cfg.max_iter, eps: 1e-12, x0 })?;
        if sol.pinf > 1e-4 && sol.dinf > 1e-4 {
            return Err(Error::IterationLimit(sol.iterations));
        }
        let t = sol.y[rp.nfree];
        let w = sol.x[nb + 1][(0, 0)];
        if t < -tol && w < 1e-3 * r_bound && attempt < 2 {
            attempt += 1;
            r_bound *= 100.0;
            continue;
        }
        return Ok(finish(p, cfg, &rp, &sol, t, r_bound, &ur, &sinv));
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &SdpProblem,
    cfg: &SdpConfig,
    rp: &Realified,
    sol: &ipm::RealSolution,
    t: f64,
    r_bound: f64,
    ur: &DMatrix<f64>,
    sinv: &[f64],
) -> SdpResult {
    let tol = cfg.tol;
    let nb = rp.block_sizes.len();
    let psd: Vec<CMat> = (0..nb)
        .map(|k| {
            let n = rp.block_sizes[k];
            let y = &sol.x[k] + RMat::identity(n, n) * t;
            unrealify(&y) + eye(n / 2) * c(p.psd[k].shift, 0.0)
        })
        .collect();
    let free_off = p.free_offsets();
    let free: Vec<CMat> = p
        .free
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let off = free_off[k];
            let len = f.rows * f.cols;
            let re: Vec<f64> = (0..len).map(|i| sol.y[off + i]).collect();
            let im: Vec<f64> = (0..len).map(|i| sol.y[off + len + i]).collect();
            CMat::from_fn(f.rows, f.cols, |i, j| c(re[i + f.rows * j], im[i + f.rows * j]))
        })
        .collect();
    let scale = p
        .constraints
        .iter()
        .flat_map(|con| con.terms.iter().map(|t| linalg::max_abs(&t.coeff)))
        .fold(1.0, f64::max);
    let residual = (0..p.constraints.len())
        .map(|i| (p.row_value(i, &psd, &free) - p.constraints[i].rhs).abs())
        .fold(0.0, f64::max);
    let min_eig = psd
        .iter()
        .zip(&p.psd)
        .map(|(h, b)| linalg::min_eig(&(h - eye(b.size) * c(b.shift, 0.0))))
        .fold(f64::INFINITY, f64::min);
    let min_eig = if min_eig.is_finite() { min_eig } else { 0.0 };

    // Dual multipliers on the original rows: lambda = U_r S_r^{-1} lambda~.
    let rank = sinv.len();
    let mut lam = DVector::zeros(p.constraints.len());
    for k in 0..rank {
        lam += ur.column(k) * (sol.lambda[k] * sinv[k]);
    }
    let rhs_dot = rp.b.dot(&lam);
    let (dual, slack, dual_ok) = if rhs_dot > 0.0 {
        let lam = lam / rhs_dot;
        let at_lam = rp.a.transpose() * &lam;
        let mut slack: f64 = 0.0;
        for (k, &n) in rp.block_sizes.iter().enumerate() {
            let off = rp.block_offsets[k];
            let m = RMat::from_fn(n, n, |r, cc| at_lam[off + cc * n + r]);
            let (ev, _) = linalg::real_sym_eig(&((&m + m.transpose()) * 0.5));
            slack = slack.max(ev.last().copied().unwrap_or(0.0));
        }
        let free_norm = at_lam.rows(rp.free_start, rp.nfree).norm();
        let ok = free_norm <= 1e-6 && slack * r_bound <= 0.5;
        (lam.iter().cloned().collect::<Vec<_>>(), slack, ok)
    } else {
        (lam.iter().cloned().collect(), f64::INFINITY, false)
    };

    // equality residuals use the same 10x allowance as external certificate verification;
    // boundary solutions (t near 0) land there after the shift back
    let feasible = t >= -tol && residual <= 10.0 * tol * scale.max(1.0) && min_eig >= -tol;
    let status = if feasible {
        SdpStatus::Feasible
    } else if t < -tol && dual_ok {
        SdpStatus::Infeasible
    } else {
        SdpStatus::Marginal
    };
    SdpResult {
        status,
        phase_value: Some(t),
        psd,
        free,
        dual,
        residual,
        min_eig,
        dual_slack: slack,
        iterations: sol.iterations,
        gap: sol.gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unconstrained_shifted_block_is_feasible() {
        let mut p = SdpProblem::new("q");
        p.add_psd(2, 1.0);
        let r = solve(&p, &SdpConfig::default()).unwrap();
        assert_eq!(r.status, SdpStatus::Feasible);
        assert!(linalg::min_eig(&r.psd[0]) >= 1.0 - 1e-8);
    }

    #[test]
    fn forced_zero_is_infeasible() {
        // q >= 1 and 2q = q
        let mut p = SdpProblem::new("q");
        let q = p.add_psd(1, 1.0);
        p.add_real(vec![Term { var: q, coeff: eye(1) }], 0.0);
        let r = solve(&p, &SdpConfig::default()).unwrap();
        assert_eq!(r.status, SdpStatus::Infeasible);
        assert!(r.phase_value.unwrap() < -0.5);
    }

    #[test]
    fn inconsistent_equalities() {
        let mut p = SdpProblem::new("lin");
        let y = p.add_free(1, 1);
        p.add_real(vec![Term { var: y, coeff: eye(1) }], 1.0);
        p.add_real(vec![Term { var: y, coeff: eye(1) }], 2.0);
        let r = solve(&p, &SdpConfig::default()).unwrap();
        assert_eq!(r.status, SdpStatus::Infeasible);
        assert!(r.phase_value.is_none());
    }

    #[test]
    fn random_feasible_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let n = rng.gen_range(1..4);
            let mut p = SdpProblem::new("rand");
            let x = p.add_psd(n, 0.0);
            let y = p.add_free(1, 2);
            let x0 = {
                let a = linalg::random_cmat(&mut rng, n, n);
                &a * a.adjoint() + eye(n)
            };
            let y0 = linalg::random_cmat(&mut rng, 1, 2);
            for _ in 0..3 {
                let e = linalg::random_cmat(&mut rng, n, n);
                let f = linalg::random_cmat(&mut rng, 1, 2);
                let terms = vec![Term { var: x, coeff: e.clone() }, Term { var: y, coeff: f.clone() }];
                let rhs = e.dotc(&x0).re + f.dotc(&y0).re;
                p.add_real(terms, rhs);
            }
            let r = solve(&p, &SdpConfig::default()).unwrap();
            assert_eq!(r.status, SdpStatus::Feasible);
            assert!(r.residual <= 1e-7);
        }
    }
}
