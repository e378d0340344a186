//! Problem builders: hermitian similarity, spectrahedral inclusion via a Choi matrix,
//! and the rank certificate `Re(D L~) = P0 + sum_k C_k* L C_k` in moment form.

use serde::Serialize;

use super::{solve, LinTerm, SdpConfig, SdpProblem, SdpResult, SdpStatus, Term};
use crate::error::{Error, Result};
use crate::json;
use crate::linalg::{self, c, eye, max_abs, zeros, CMat};
use crate::pencil::LinearPencil;

/// `M = sum_k vec(C_k) vec(C_k)*` for `d x eps` matrices `C_k` (column-major vec).
#[derive(Clone, Debug, Serialize)]
pub struct MomentBlock {
    pub d: usize,
    pub eps: usize,
    #[serde(with = "json::cmat")]
    pub m: CMat,
}

impl MomentBlock {
    pub fn from_factors(d: usize, eps: usize, cs: &[CMat]) -> Self {
        let mut m = zeros(d * eps, d * eps);
        for ck in cs {
            let v = CMat::from_column_slice(d * eps, 1, ck.as_slice());
            m += &v * v.adjoint();
        }
        MomentBlock { d, eps, m }
    }

    /// `Phi_G(M) = sum_k C_k* G C_k`, entry `(a, b)` being `sum_ij G_ij M[(j,b),(i,a)]`.
    pub fn contract(&self, g: &CMat) -> CMat {
        let d = self.d;
        CMat::from_fn(self.eps, self.eps, |a, b| {
            let mut acc = c(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    acc += g[(i, j)] * self.m[(j + d * b, i + d * a)];
                }
            }
            acc
        })
    }
}

/// `E` with `tr(E* M) = Phi_G(M)_{ab}`.
pub fn moment_contraction_coeff(g: &CMat, d: usize, eps: usize, a: usize, b: usize) -> CMat {
    let mut e = zeros(d * eps, d * eps);
    for i in 0..d {
        for j in 0..d {
            e[(j + d * b, i + d * a)] = g[(i, j)].conj();
        }
    }
    e
}

/// `E` with `tr(E* V) = (L V R)_{rs}`.
fn entry_coeff(l: &CMat, r: &CMat, row: usize, col: usize) -> CMat {
    let lc = l.adjoint();
    let rc = r.adjoint();
    lc.column(row) * rc.row(col)
}

fn unit(n: usize, m: usize, r: usize, s: usize) -> CMat {
    let mut e = zeros(n, m);
    e[(r, s)] = c(1.0, 0.0);
    e
}

fn marginal(r: &SdpResult) -> Error {
    let _ = r;
    Error::MarginalSdp { level: 0 }
}

/// Hermitian `Q ⪰ I` with `Q L* = L Q`, and the hermitian monic pencil `Q^{-1/2} L Q^{1/2}`.
pub fn hermitian_similarity(l: &LinearPencil, cfg: &SdpConfig) -> Result<Option<(CMat, LinearPencil)>> {
    if !l.is_monic() {
        return Err(Error::Invalid("hermitian similarity needs a monic pencil".into()));
    }
    let d = l.size();
    if d == 0 {
        return Ok(Some((zeros(0, 0), l.clone())));
    }
    let mut p = SdpProblem::new("hermitian-similarity");
    let q = p.add_psd(d, 1.0);
    let id = eye(d);
    for j in 0..l.g {
        let (a, b) = (l.a(j), l.b(j));
        for (lhs_r, rhs_l) in [(b.adjoint(), a.clone()), (a.adjoint(), b.clone())] {
            // Q lhs_r - rhs_l Q = 0
            for r in 0..d {
                for s in 0..d {
                    let t1 = LinTerm { var: q, e: entry_coeff(&id, &lhs_r, r, s), conj: false };
                    let t2 = LinTerm { var: q, e: -entry_coeff(&rhs_l, &id, r, s), conj: false };
                    p.add_complex(&[t1, t2], c(0.0, 0.0));
                }
            }
        }
    }
    let res = solve(&p, cfg)?;
    match res.status {
        SdpStatus::Infeasible => Ok(None),
        SdpStatus::Marginal => Err(marginal(&res)),
        SdpStatus::Feasible => {
            let qm = linalg::hermitian_part(&res.psd[0]);
            let floor = 1.0 - 10.0 * cfg.tol;
            let q_half = linalg::herm_fn(&qm, |v| v.max(floor).sqrt());
            let q_mhalf = linalg::herm_fn(&qm, |v| 1.0 / v.max(floor).sqrt());
            let t = l.transform(&q_mhalf, &q_half)?;
            let a: Vec<CMat> = (0..l.g).map(|j| (t.a(j) + t.b(j).adjoint()) * c(0.5, 0.0)).collect();
            Ok(Some((qm, LinearPencil::hermitian(a)?)))
        }
    }
}

/// Sufficient test for `D_{LA} ⊆ D_{LB}`: a unital completely positive map sending the
/// coefficients of `LA` to those of `LB`, encoded by its Choi-type moment block.
pub fn inclusion(la: &LinearPencil, lb: &LinearPencil, cfg: &SdpConfig) -> Result<bool> {
    match inclusion_solve(la, lb, cfg)? {
        Err(trivial) => Ok(trivial),
        Ok(res) => match res.status {
            SdpStatus::Feasible => Ok(true),
            SdpStatus::Infeasible => Ok(false),
            SdpStatus::Marginal => Err(marginal(&res)),
        },
    }
}

/// The inclusion SDP and its result; `Err(verdict)` when a size-0 pencil decides it directly.
pub fn inclusion_solve(
    la: &LinearPencil,
    lb: &LinearPencil,
    cfg: &SdpConfig,
) -> Result<std::result::Result<SdpResult, bool>> {
    if !la.is_hermitian_monic() || !lb.is_hermitian_monic() {
        return Err(Error::Invalid("inclusion needs hermitian monic pencils".into()));
    }
    if la.g != lb.g {
        return Err(Error::VariableCount { expected: la.g, got: lb.g });
    }
    let (da, db) = (la.size(), lb.size());
    if db == 0 {
        return Ok(Err(true));
    }
    if da == 0 {
        let scale = lb.generators().iter().map(max_abs).fold(0.0, f64::max);
        return Ok(Err(scale <= cfg.tol));
    }
    let mut p = SdpProblem::new("inclusion");
    let m = p.add_psd(da * db, 0.0);
    let mut targets = vec![(eye(da), eye(db))];
    for j in 0..la.g {
        targets.push((la.a(j), lb.a(j)));
    }
    for (g, rhs) in &targets {
        for a in 0..db {
            for b in 0..db {
                let t = LinTerm { var: m, e: moment_contraction_coeff(g, da, db, a, b), conj: false };
                p.add_complex(&[t], rhs[(a, b)]);
            }
        }
    }
    Ok(Ok(solve(&p, cfg)?))
}

/// Dual functional of an infeasible rank certificate problem: multipliers `Gamma_0`
/// (constant equations), `Gamma_j` (x_j equations) and the normalization multiplier.
#[derive(Clone, Debug, Serialize)]
pub struct RankDual {
    #[serde(with = "json::cmat")]
    pub gamma0: CMat,
    #[serde(with = "json::cmat_vec")]
    pub gamma: Vec<CMat>,
    pub lambda_norm: f64,
    pub dual_slack: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RankCertificate {
    Certificate {
        #[serde(with = "json::cmat")]
        d: CMat,
        #[serde(with = "json::cmat")]
        p0: CMat,
        moment: MomentBlock,
        /// Orthonormal basis of `ker P0 ∩ ker Phi_I(M)`.
        #[serde(with = "json::cmat")]
        v: CMat,
        p0_kernel_dim: usize,
    },
    Infeasible(RankDual),
    Marginal { phase_value: Option<f64> },
}

/// Relative threshold for the numerical kernels defining `V`.
pub const KERNEL_TOL: f64 = 1e-5;

/// Build and solve the certificate SDP for `Ltilde` (rows ≥ cols) over `D_L`.
pub fn rank_certificate(ltilde: &LinearPencil, l: &LinearPencil, cfg: &SdpConfig) -> Result<RankCertificate> {
    if ltilde.rows < ltilde.cols {
        return Err(Error::DimensionMismatch("rank certificate expects rows >= cols; pass the adjoint".into()));
    }
    if !l.is_hermitian_monic() && l.size() > 0 {
        return Err(Error::Invalid("domain pencil must be hermitian monic".into()));
    }
    if ltilde.g != l.g {
        return Err(Error::VariableCount { expected: l.g, got: ltilde.g });
    }
    let (delta, eps, d, g) = (ltilde.rows, ltilde.cols, l.size(), l.g);
    let mut p = SdpProblem::new("rank-certificate");
    let dv = p.add_free(eps, delta);
    let p0 = p.add_psd(eps, 0.0);
    let mv = if d > 0 { Some(p.add_psd(d * eps, 0.0)) } else { None };
    let id_eps = eye(eps);
    let half = c(0.5, 0.0);

    let mut const_rows = vec![vec![(0usize, 0usize); eps]; eps];
    let mut x_rows = vec![vec![vec![(0usize, 0usize); eps]; eps]; g];
    let l0 = &ltilde.constant;
    for r in 0..eps {
        for s in 0..eps {
            let mut terms = vec![
                LinTerm { var: dv, e: entry_coeff(&id_eps, l0, r, s) * half, conj: false },
                LinTerm { var: dv, e: entry_coeff(&id_eps, l0, s, r) * half, conj: true },
                LinTerm { var: p0, e: -unit(eps, eps, r, s), conj: false },
            ];
            if let Some(m) = mv {
                terms.push(LinTerm { var: m, e: -moment_contraction_coeff(&eye(d), d, eps, r, s), conj: false });
            }
            const_rows[r][s] = p.add_complex(&terms, c(0.0, 0.0));
        }
    }
    for j in 0..g {
        let lj = &ltilde.coeff_x[j];
        let ljs = &ltilde.coeff_xstar[j];
        let aj = l.a(j);
        for r in 0..eps {
            for s in 0..eps {
                let mut terms = vec![
                    LinTerm { var: dv, e: entry_coeff(&id_eps, lj, r, s) * half, conj: false },
                    LinTerm { var: dv, e: entry_coeff(&id_eps, ljs, s, r) * half, conj: true },
                ];
                if let Some(m) = mv {
                    terms.push(LinTerm { var: m, e: moment_contraction_coeff(&aj, d, eps, r, s), conj: false });
                }
                x_rows[j][r][s] = p.add_complex(&terms, c(0.0, 0.0));
            }
        }
    }
    let norm_row = p.add_real(vec![Term { var: dv, coeff: l0.adjoint() }], 1.0);

    let res = solve(&p, cfg)?;
    match res.status {
        SdpStatus::Marginal => Ok(RankCertificate::Marginal { phase_value: res.phase_value }),
        SdpStatus::Infeasible => {
            let gam = |rows: &Vec<Vec<(usize, usize)>>| {
                CMat::from_fn(eps, eps, |r, s| c(res.dual[rows[r][s].0], res.dual[rows[r][s].1]))
            };
            Ok(RankCertificate::Infeasible(RankDual {
                gamma0: gam(&const_rows),
                gamma: x_rows.iter().map(gam).collect(),
                lambda_norm: res.dual[norm_row],
                dual_slack: res.dual_slack,
            }))
        }
        SdpStatus::Feasible => {
            let dmat = res.free[0].clone();
            let p0m = linalg::hermitian_part(&res.psd[0]);
            let moment = match mv {
                Some(_) => MomentBlock { d, eps, m: linalg::hermitian_part(&res.psd[1]) },
                None => MomentBlock { d: 0, eps, m: zeros(0, 0) },
            };
            let phi = if d > 0 { moment.contract(&eye(d)) } else { zeros(eps, eps) };
            let scale = max_abs(&p0m).max(max_abs(&phi)).max(1.0);
            let ker_p0 = linalg::null_space(&p0m, KERNEL_TOL, scale);
            let mut stacked = zeros(2 * eps, eps);
            stacked.view_mut((0, 0), (eps, eps)).copy_from(&p0m);
            stacked.view_mut((eps, 0), (eps, eps)).copy_from(&phi);
            let v = linalg::null_space(&stacked, KERNEL_TOL, scale);
            Ok(RankCertificate::Certificate { d: dmat, p0: p0m, moment, v, p0_kernel_dim: ker_p0.ncols() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_cmat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moment_contraction_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (d, eps) = (3, 2);
        let cs: Vec<CMat> = (0..4).map(|_| random_cmat(&mut rng, d, eps)).collect();
        let mb = MomentBlock::from_factors(d, eps, &cs);
        let g = random_cmat(&mut rng, d, d);
        let expect = cs.iter().fold(zeros(eps, eps), |acc, ck| acc + ck.adjoint() * &g * ck);
        assert!(max_abs(&(mb.contract(&g) - &expect)) < 1e-12);
        for a in 0..eps {
            for b in 0..eps {
                let e = moment_contraction_coeff(&g, d, eps, a, b);
                assert!((e.dotc(&mb.m) - expect[(a, b)]).norm() < 1e-12);
            }
        }
    }

    fn ball() -> LinearPencil {
        let mut a = zeros(2, 2);
        a[(0, 1)] = c(-1.0, 0.0);
        LinearPencil::hermitian(vec![a]).unwrap()
    }

    #[test]
    fn hermitian_similarity_cases() {
        let cfg = SdpConfig::default();
        let l = ball();
        let (q, h) = hermitian_similarity(&l, &cfg).unwrap().unwrap();
        assert!(linalg::min_eig(&q) >= 1.0 - 1e-7);
        assert!(h.is_hermitian_monic());
        let bad = LinearPencil::monic(vec![eye(1)], vec![eye(1).scale(2.0)]).unwrap();
        assert!(hermitian_similarity(&bad, &cfg).unwrap().is_none());
    }

    #[test]
    fn hermitian_similarity_recovers_conjugated_pencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = LinearPencil::random_hermitian(&mut rng, 3, 2, 1.0);
        let s = random_cmat(&mut rng, 3, 3) + eye(3).scale(2.0);
        let si = s.clone().try_inverse().unwrap();
        let l2 = l.transform(&s, &si).unwrap();
        let (_, h) = hermitian_similarity(&l2, &SdpConfig::default()).unwrap().unwrap();
        assert!(h.is_hermitian_monic());
        assert!(crate::algebra::similar(&l2, &h, &mut rng).is_some());
    }

    #[test]
    fn inclusion_cases() {
        let cfg = SdpConfig::default();
        let l = ball();
        assert!(inclusion(&l, &l, &cfg).unwrap());
        let mut half = zeros(2, 2);
        half[(0, 1)] = c(-2.0, 0.0);
        let small = LinearPencil::hermitian(vec![half]).unwrap();
        assert!(!inclusion(&l, &small, &cfg).unwrap());
        assert!(inclusion(&small, &l, &cfg).unwrap());
        let sum = l.direct_sum(&small).unwrap();
        assert!(inclusion(&sum, &l, &cfg).unwrap());
    }

    #[test]
    fn rank_certificate_cases() {
        let cfg = SdpConfig::default();
        let l = ball();
        match rank_certificate(&l, &l, &cfg).unwrap() {
            RankCertificate::Certificate { v, .. } => assert_eq!(v.ncols(), 0),
            other => panic!("{other:?}"),
        }
        let lt = LinearPencil::new(eye(1), vec![eye(1)], vec![-eye(1)]).unwrap();
        match rank_certificate(&lt, &l, &cfg).unwrap() {
            RankCertificate::Certificate { v, .. } => assert_eq!(v.ncols(), 0),
            other => panic!("{other:?}"),
        }
        let sing = LinearPencil::new(eye(1), vec![eye(1).scale(-2.0)], vec![eye(1).scale(-2.0)]).unwrap();
        match rank_certificate(&sing, &l, &cfg).unwrap() {
            RankCertificate::Infeasible(dual) => assert!(dual.lambda_norm > 0.0),
            other => panic!("{other:?}"),
        }
    }
}
