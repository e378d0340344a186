//! Dense infeasible primal-dual interior-point method for real block SDPs
//! in the form `min c'y  s.t.  sum_b <A_ib, X_b> + F_i y = b_i,  X_b ⪰ 0`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{real_sym_eig, RMat};

pub(crate) struct RealRow {
    pub blocks: Vec<Option<RMat>>,
    pub free: DVector<f64>,
}

pub(crate) struct RealProblem {
    pub sizes: Vec<usize>,
    pub nfree: usize,
    pub rows: Vec<RealRow>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct RealSolution {
    pub x: Vec<RMat>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
    pub iterations: usize,
    pub pinf: f64,
    pub dinf: f64,
    pub gap: f64,
}

pub(crate) struct IpmSettings {
    pub max_iter: usize,
    pub eps: f64,
    pub x0: f64,
}

fn sym(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

fn inner(a: &RMat, b: &RMat) -> f64 {
    a.dot(b)
}

/// Largest `alpha` with `x + alpha dx ⪰ 0`, capped at `cap`.
fn max_step(x: &RMat, dx: &RMat, cap: f64) -> Result<f64> {
    let n = x.nrows();
    let ch = Cholesky::new(x.clone()).ok_or_else(|| Error::NumericalBreakdown("iterate left the cone".into()))?;
    let l = ch.l();
    let li = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NumericalBreakdown("triangular solve".into()))?;
    let m = sym(&(&li * dx * li.transpose()));
    let (ev, _) = real_sym_eig(&m);
    let lo = ev.first().copied().unwrap_or(0.0);
    Ok(if lo >= 0.0 { cap } else { (-1.0 / lo).min(cap) })
}

impl RealProblem {
    fn apply(&self, x: &[RMat], y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| {
                let mut v = r.free.dot(y);
                for (blk, xb) in r.blocks.iter().zip(x) {
                    if let Some(a) = blk {
                        v += inner(a, xb);
                    }
                }
                v
            }),
        )
    }

    fn adjoint_blocks(&self, lam: &DVector<f64>) -> Vec<RMat> {
        let mut out: Vec<RMat> = self.sizes.iter().map(|&n| RMat::zeros(n, n)).collect();
        for (r, &l) in self.rows.iter().zip(lam.iter()) {
            if l == 0.0 {
                continue;
            }
            for (blk, o) in r.blocks.iter().zip(out.iter_mut()) {
                if let Some(a) = blk {
                    *o += a * l;
                }
            }
        }
        out
    }

    fn adjoint_free(&self, lam: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nfree);
        for (r, &l) in self.rows.iter().zip(lam.iter()) {
            out += &r.free * l;
        }
        out
    }

    fn free_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.nfree, |i, j| self.rows[i].free[j])
    }
}

/// Reparametrize free variables through the row space of `F` so the KKT system is regular.
fn reduce_free(p: &RealProblem) -> (DMatrix<f64>, RealProblem) {
    let f = p.free_matrix();
    if p.nfree == 0 {
        return (DMatrix::zeros(0, 0), clone_with_free(p, &f, DMatrix::zeros(0, 0)));
    }
    let svd = f.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-12 * smax.max(1e-300))
        .collect();
    let v = DMatrix::from_fn(p.nfree, keep.len(), |i, j| vt[(keep[j], i)]);
    let reduced = clone_with_free(p, &f, v.clone());
    (v, reduced)
}

fn clone_with_free(p: &RealProblem, f: &DMatrix<f64>, v: DMatrix<f64>) -> RealProblem {
    let fv = if v.ncols() > 0 { f * &v } else { DMatrix::zeros(p.rows.len(), 0) };
    let rows = p
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| RealRow { blocks: r.blocks.clone(), free: fv.row(i).transpose() })
        .collect();
    let c = if v.ncols() > 0 { v.transpose() * &p.c } else { DVector::zeros(0) };
    RealProblem { sizes: p.sizes.clone(), nfree: v.ncols(), rows, b: p.b.clone(), c }
}

pub(crate) fn solve_real(orig: &RealProblem, s: &IpmSettings) -> Result<RealSolution> {
    let (v, p) = reduce_free(orig);
    let nrows = p.rows.len();
    let ntot: usize = p.sizes.iter().sum();
    let mut x: Vec<RMat> = p.sizes.iter().map(|&n| RMat::identity(n, n) * s.x0).collect();
    let mut z: Vec<RMat> = p.sizes.iter().map(|&n| RMat::identity(n, n)).collect();
    let mut y = DVector::zeros(p.nfree);
    let mut lam = DVector::zeros(nrows);
    let fmat = p.free_matrix();
    let bnorm = p.b.norm();
    let cnorm = p.c.norm();
    let mut best: Option<(f64, RealSolution)> = None;
    let mut iterations = 0;

    for it in 0..s.max_iter {
        iterations = it + 1;
        let ax = p.apply(&x, &y);
        let rp = &p.b - ax;
        let at = p.adjoint_blocks(&lam);
        let rd: Vec<RMat> = (0..x.len()).map(|k| -&at[k] - &z[k]).collect();
        let rf = &p.c - p.adjoint_free(&lam);
        let mu_sum: f64 = x.iter().zip(&z).map(|(a, b)| inner(a, b)).sum();
        let mu = mu_sum / ntot.max(1) as f64;
        let pobj = p.c.dot(&y);
        let dobj = p.b.dot(&lam);
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = (rd.iter().map(|m| m.norm_squared()).sum::<f64>() + rf.norm_squared()).sqrt() / (1.0 + cnorm);
        let gap = mu_sum / (1.0 + pobj.abs() + dobj.abs());
        let merit = pinf.max(dinf).max(gap);
        let snapshot = RealSolution {
            x: x.clone(),
            y: if v.ncols() > 0 { &v * &y } else { DVector::zeros(orig.nfree) },
            lambda: lam.clone(),
            iterations,
            pinf,
            dinf,
            gap,
        };
        if best.as_ref().map_or(true, |(m, _)| merit <= *m) {
            best = Some((merit, snapshot));
        }
        if pinf < s.eps && dinf < s.eps && gap < s.eps {
            break;
        }

        // roundoff can push a late iterate off the cone; keep the best one seen
        let zinv: Vec<RMat> = match z.iter().map(|zb| Cholesky::new(zb.clone()).map(|c| c.inverse())).collect() {
            Some(v) => v,
            None => break,
        };

        // Schur complement M_ij = sum_b <A_jb, X_b A_ib Z_b^{-1}>.
        let w: Vec<Vec<Option<RMat>>> = p
            .rows
            .iter()
            .map(|r| {
                r.blocks
                    .iter()
                    .enumerate()
                    .map(|(k, blk)| blk.as_ref().map(|a| &x[k] * a * &zinv[k]))
                    .collect()
            })
            .collect();
        let mut m = DMatrix::zeros(nrows, nrows);
        for i in 0..nrows {
            for j in i..nrows {
                let mut acc = 0.0;
                for (k, wk) in w[i].iter().enumerate() {
                    if let (Some(wik), Some(ajk)) = (wk, &p.rows[j].blocks[k]) {
                        acc += inner(ajk, wik);
                    }
                }
                m[(i, j)] = acc;
                m[(j, i)] = acc;
            }
        }
        let nf = p.nfree;
        let mut kkt = DMatrix::zeros(nrows + nf, nrows + nf);
        kkt.view_mut((0, 0), (nrows, nrows)).copy_from(&m);
        if nf > 0 {
            kkt.view_mut((0, nrows), (nrows, nf)).copy_from(&fmat);
            kkt.view_mut((nrows, 0), (nf, nrows)).copy_from(&fmat.transpose());
        }
        let lu = kkt.lu();

        let direction = |sigma: f64, corr: Option<&[RMat]>| -> Result<(Vec<RMat>, DVector<f64>, DVector<f64>, Vec<RMat>)> {
            let psi: Vec<RMat> = (0..x.len())
                .map(|k| {
                    let n = p.sizes[k];
                    let mut t = RMat::identity(n, n) * (sigma * mu) - &x[k] * &rd[k];
                    if let Some(cr) = corr {
                        t -= &cr[k];
                    }
                    sym(&(t * &zinv[k])) - &x[k]
                })
                .collect();
            let h = &rp - p.apply(&psi, &DVector::zeros(nf));
            let mut rhs = DVector::zeros(nrows + nf);
            rhs.rows_mut(0, nrows).copy_from(&h);
            if nf > 0 {
                rhs.rows_mut(nrows, nf).copy_from(&rf);
            }
            let sol = lu.solve(&rhs).ok_or_else(|| Error::NumericalBreakdown("singular Schur complement".into()))?;
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBreakdown("non-finite search direction".into()));
            }
            let dlam = sol.rows(0, nrows).into_owned();
            let dy = sol.rows(nrows, nf).into_owned();
            let atd = p.adjoint_blocks(&dlam);
            let dz: Vec<RMat> = (0..x.len()).map(|k| &rd[k] - &atd[k]).collect();
            let dx: Vec<RMat> = (0..x.len()).map(|k| &psi[k] + sym(&(&x[k] * &atd[k] * &zinv[k]))).collect();
            Ok((dx, dy, dlam, dz))
        };

        let steps = |dx: &[RMat], dz: &[RMat], cap: f64| -> Result<(f64, f64)> {
            let mut ap = cap;
            let mut ad = cap;
            for k in 0..x.len() {
                ap = ap.min(max_step(&x[k], &dx[k], cap)?);
                ad = ad.min(max_step(&z[k], &dz[k], cap)?);
            }
            Ok((ap, ad))
        };

        let (dxa, _, _, dza) = match direction(0.0, None) {
            Ok(d) => d,
            Err(_) => break,
        };
        let Ok((apa, ada)) = steps(&dxa, &dza, 1.0) else { break };
        let mu_aff: f64 = (0..x.len())
            .map(|k| inner(&(&x[k] + &dxa[k] * apa), &(&z[k] + &dza[k] * ada)))
            .sum::<f64>()
            / ntot.max(1) as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let corr: Vec<RMat> = (0..x.len()).map(|k| &dxa[k] * &dza[k]).collect();
        let (dx, dy, dlam, dz) = match direction(sigma, Some(&corr)) {
            Ok(d) => d,
            Err(_) => break,
        };
        let Ok((ap, ad)) = steps(&dx, &dz, 1e6) else { break };
        let gamma = 0.95;
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
        for k in 0..x.len() {
            x[k] += &dx[k] * ap;
            z[k] += &dz[k] * ad;
            x[k] = sym(&x[k]);
            z[k] = sym(&z[k]);
        }
        y += dy * ap;
        lam += dlam * ad;
    }
    let (_, mut sol) = best.expect("at least one iterate");
    sol.iterations = iterations;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_lp() {
        // min -y  s.t.  X - y... : X + y = 1, X >= 0  -> y = 1
        let p = RealProblem {
            sizes: vec![1],
            nfree: 1,
            rows: vec![RealRow { blocks: vec![Some(RMat::identity(1, 1))], free: DVector::from_element(1, 1.0) }],
            b: DVector::from_element(1, 1.0),
            c: DVector::from_element(1, -1.0),
        };
        let s = solve_real(&p, &IpmSettings { max_iter: 100, eps: 1e-10, x0: 1.0 }).unwrap();
        assert!((s.y[0] - 1.0).abs() < 1e-7, "{}", s.y[0]);
    }

    #[test]
    fn min_eigenvalue_sdp() {
        // max t s.t. X = S + t I, tr(X W) = 1 with W = diag(1, 3)... expressed as S + t*I with fixed X.
        // Fix X = [[2,1],[1,2]] through three equations; t* = 1.
        let e = |i: usize, j: usize| {
            let mut m = RMat::zeros(2, 2);
            m[(i, j)] += 0.5;
            m[(j, i)] += 0.5;
            m
        };
        let rows = vec![
            RealRow { blocks: vec![Some(e(0, 0))], free: DVector::from_element(1, 1.0) },
            RealRow { blocks: vec![Some(e(1, 1))], free: DVector::from_element(1, 1.0) },
            RealRow { blocks: vec![Some(e(0, 1))], free: DVector::from_element(1, 0.0) },
        ];
        let p = RealProblem {
            sizes: vec![2],
            nfree: 1,
            rows,
            b: DVector::from_vec(vec![2.0, 2.0, 1.0]),
            c: DVector::from_element(1, -1.0),
        };
        let s = solve_real(&p, &IpmSettings { max_iter: 100, eps: 1e-10, x0: 1.0 }).unwrap();
        assert!((s.y[0] - 1.0).abs() < 1e-7, "{}", s.y[0]);
    }
}
