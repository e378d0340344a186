//! Randomized invariants of the polynomial, parser, realization, algebra and SDP layers.

mod common;

use common::*;
use freeconvex::algebra::{burnside_decompose, block_det_product, similar, BlockKind};
use freeconvex::linalg::{self, c, eye, max_abs, random_cmat, random_hermitian, zeros, CMat};
use freeconvex::ncpoly::{MatrixTuple, NcPoly};
use freeconvex::parser::{format, parse, to_polynomial_with_vars};
use freeconvex::pencil::LinearPencil;
use freeconvex::realization::{
    inverse_realization, realize_prod, realize_sum, series_gap, Realization, KALMAN_TOL,
};
use freeconvex::sdp::{inclusion, solve, SdpConfig, SdpProblem, SdpStatus, Term};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel_err(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a - b)) / max_abs(a).max(max_abs(b)).max(1.0)
}

fn normalized(rng: &mut ChaCha8Rng, delta: usize, g: usize, deg: usize) -> NcPoly {
    let p = NcPoly::random(rng, delta, g, deg, 4);
    let p = p.add(&NcPoly::identity(delta, g).scale(c(3.0, 0.0))).unwrap();
    let c0 = p.constant_term();
    p.left_mul(&c0.try_inverse().unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluation_is_a_ring_map(seed in any::<u64>(), n in 1usize..=4, g in 1usize..=3, delta in 1usize..=2) {
        let mut r = rng(seed);
        let p = NcPoly::random(&mut r, delta, g, 3, 4);
        let q = NcPoly::random(&mut r, delta, g, 3, 4);
        let x = MatrixTuple::random(&mut r, n, g);
        let (px, qx) = (p.evaluate(&x).unwrap(), q.evaluate(&x).unwrap());
        prop_assert!(rel_err(&p.add(&q).unwrap().evaluate(&x).unwrap(), &(&px + &qx)) < 1e-10);
        prop_assert!(rel_err(&p.mul(&q).unwrap().evaluate(&x).unwrap(), &(&px * &qx)) < 1e-10);
        prop_assert!(rel_err(&p.adjoint().evaluate(&x).unwrap(), &px.adjoint()) < 1e-10);
    }

    #[test]
    fn evaluation_respects_direct_sums(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let mut r = rng(seed);
        let g = 2;
        let p = NcPoly::random(&mut r, 1, g, 3, 5);
        let x = MatrixTuple::random(&mut r, n, g);
        let y = MatrixTuple::random(&mut r, m, g);
        let joint = p.evaluate(&x.direct_sum(&y).unwrap()).unwrap();
        let want = linalg::block_diag(&[&p.evaluate(&x).unwrap(), &p.evaluate(&y).unwrap()]);
        prop_assert!(rel_err(&joint, &want) < 1e-10);
    }

    #[test]
    fn hermitian_polynomials_give_hermitian_values(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let p = NcPoly::random(&mut r, 2, 2, 3, 4);
        let h = p.add(&p.adjoint()).unwrap();
        prop_assert!(h.is_hermitian());
        let v = h.evaluate(&MatrixTuple::random(&mut r, n, 2)).unwrap();
        prop_assert!(rel_err(&v, &v.adjoint()) < 1e-10);
    }

    #[test]
    fn format_then_parse_is_the_identity(seed in any::<u64>(), g in 1usize..=3, deg in 0usize..=4) {
        let mut r = rng(seed);
        let p = NcPoly::random(&mut r, 1, g, deg, 5);
        let back = to_polynomial_with_vars(&parse(&format(&p)).unwrap(), g).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn parse_errors_point_inside_the_input(s in "[x1-3'*+()\\[\\], inv.-]{0,16}") {
        if let Err(freeconvex::Error::Parse { span, .. }) = parse(&s) {
            prop_assert!(span.start <= span.end && span.end <= s.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sums_and_products_match_polynomial_arithmetic(seed in any::<u64>(), g in 1usize..=2) {
        let mut r = rng(seed);
        let p = normalized(&mut r, 1, g, 2);
        let q = normalized(&mut r, 1, g, 2);
        let (rp, rq) = (Realization::from_polynomial(&p), Realization::from_polynomial(&q));
        let sum = realize_sum(&rp, &rq).unwrap();
        let prod = realize_prod(&rp, &rq).unwrap();
        for (real, poly) in [(sum, p.add(&q).unwrap()), (prod, p.mul(&q).unwrap())] {
            prop_assert!(real.is_minimal(KALMAN_TOL));
            let oracle = Realization::from_polynomial(&poly);
            prop_assert!(series_gap(&real, &oracle, 2 * real.d.max(oracle.d) + 1).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn inverse_realizations_have_trivial_joint_kernels(seed in any::<u64>(), g in 1usize..=3) {
        let mut r = rng(seed);
        let f = normalized(&mut r, 1, g, 3);
        let inv = inverse_realization(&f).unwrap();
        prop_assume!(inv.d > 0);
        let d = inv.d;
        let mut stacked = zeros(2 * g * d, d);
        let mut stacked_adj = zeros(2 * g * d, d);
        for (k, a) in inv.a.iter().enumerate() {
            stacked.view_mut((k * d, 0), (d, d)).copy_from(a);
            stacked_adj.view_mut((k * d, 0), (d, d)).copy_from(&a.adjoint());
        }
        prop_assert!(linalg::min_singular(&stacked) > 1e-8);
        prop_assert!(linalg::min_singular(&stacked_adj) > 1e-8);
    }

    #[test]
    fn determinants_multiply_over_diagonal_blocks(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let g = 2;
        let a = LinearPencil::monic(
            (0..g).map(|_| random_cmat(&mut r, 2, 2)).collect(),
            (0..g).map(|_| random_cmat(&mut r, 2, 2)).collect(),
        ).unwrap();
        let b = LinearPencil::monic(
            (0..g).map(|_| random_cmat(&mut r, 3, 3)).collect(),
            (0..g).map(|_| random_cmat(&mut r, 3, 3)).collect(),
        ).unwrap();
        let mut l = a.direct_sum(&b).unwrap();
        for m in l.coeff_x.iter_mut() {
            let blk = random_cmat(&mut r, 2, 3);
            m.view_mut((0, 2), (2, 3)).copy_from(&blk);
        }
        let s = random_cmat(&mut r, 5, 5) + eye(5) * c(3.0, 0.0);
        let l = l.transform(&s, &s.clone().try_inverse().unwrap()).unwrap();
        let dec = burnside_decompose(&l, 1e-8, &mut r).unwrap();
        prop_assert!(dec.residual <= 1e-7 * l.generators().iter().map(max_abs).fold(1.0, f64::max));
        for (i, blk) in dec.blocks.iter().enumerate() {
            if blk.kind == BlockKind::Irreducible {
                prop_assert!(freeconvex::algebra::is_irreducible(&dec.block(i)));
            }
        }
        let x = MatrixTuple::random(&mut r, n, g).scaled(0.5);
        let whole = linalg::det(&l.evaluate(&x).unwrap());
        let parts = block_det_product(&dec, &x).unwrap();
        prop_assert!((whole - parts).norm() <= 1e-6 * whole.norm().max(parts.norm()).max(1e-300));
    }

    #[test]
    fn similarity_is_an_equivalence(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = r.gen_range(1..=3);
        let l = LinearPencil::monic(vec![random_cmat(&mut r, d, d)], vec![random_cmat(&mut r, d, d)]).unwrap();
        let conj = |r: &mut ChaCha8Rng, p: &LinearPencil| {
            let s = random_cmat(r, d, d) + eye(d) * c(2.0, 0.0);
            p.transform(&s, &s.clone().try_inverse().unwrap()).unwrap()
        };
        let m = conj(&mut r, &l);
        let k = conj(&mut r, &m);
        prop_assert!(similar(&l, &l, &mut r).is_some());
        let p = similar(&l, &m, &mut r);
        prop_assert!(p.is_some());
        prop_assert!(similar(&m, &l, &mut r).is_some());
        prop_assert!(similar(&l, &k, &mut r).is_some());
        // the returned transform conjugates one into the other
        let p = p.unwrap();
        let back = l.transform(&p, &p.clone().try_inverse().unwrap()).unwrap();
        let other = m.transform(&p.clone().try_inverse().unwrap(), &p).unwrap();
        prop_assert!(pencil_gap(&back, &m) < 1e-6 || pencil_gap(&other, &l) < 1e-6);
    }
}

fn pencil_gap(a: &LinearPencil, b: &LinearPencil) -> f64 {
    a.generators().iter().zip(b.generators()).map(|(x, y)| max_abs(&(x - y))).fold(0.0, f64::max)
}

fn random_hermitian_pencil(r: &mut ChaCha8Rng, d: usize, g: usize) -> LinearPencil {
    LinearPencil::random_hermitian(r, d, g, 0.7)
}

#[test]
fn inclusion_is_reflexive_and_transitive() {
    let mut r = rng(41);
    let cfg = SdpConfig::default();
    for _ in 0..10 {
        // the ball summand keeps D_a bounded, where the completely positive test is exact
        let a = random_hermitian_pencil(&mut r, 2, 1).direct_sum(&ball()).unwrap();
        let b = random_hermitian_pencil(&mut r, 2, 1);
        assert!(inclusion(&a, &a, &cfg).unwrap(), "inclusion not reflexive");
        // D_{a ⊕ b} ⊆ D_a ⊆ D_{a scaled down}
        let ab = a.direct_sum(&b).unwrap();
        let half = a.map(|m| m * c(0.5, 0.0)).unwrap();
        let half = LinearPencil::new(a.constant.clone(), half.coeff_x, half.coeff_xstar).unwrap();
        assert!(inclusion(&ab, &a, &cfg).unwrap());
        assert!(inclusion(&a, &half, &cfg).unwrap());
        assert!(inclusion(&ab, &half, &cfg).unwrap(), "inclusion not transitive");
    }
}

/// The complex problem `Re tr(G_i* H) = b_i, H ⪰ 0` against its doubled real form
/// `K = [[A, -B], [B, A]]` built with the public builder.
#[test]
fn realified_double_has_the_same_status() {
    let mut r = rng(17);
    let cfg = SdpConfig::default();
    let mut compared = 0;
    for _ in 0..50 {
        let n = r.gen_range(1..=3);
        let m = r.gen_range(1..=n * n);
        let h0 = random_hermitian(&mut r, n) + eye(n) * c(r.gen_range(-1.5..1.5), 0.0);
        let gs: Vec<CMat> = (0..m).map(|_| random_cmat(&mut r, n, n)).collect();
        let rhs: Vec<f64> = gs.iter().map(|g| (g.adjoint() * &h0).trace().re).collect();

        let mut p = SdpProblem::new("complex");
        let h = p.add_psd(n, 0.0);
        for (g, b) in gs.iter().zip(&rhs) {
            p.add_real(vec![Term { var: h, coeff: g.clone() }], *b);
        }

        let mut q = SdpProblem::new("double");
        let k = q.add_psd(2 * n, 0.0);
        for (g, b) in gs.iter().zip(&rhs) {
            let (re, im) = (g.map(|z| c(z.re, 0.0)), g.map(|z| c(z.im, 0.0)));
            let mut gg = zeros(2 * n, 2 * n);
            gg.view_mut((0, 0), (n, n)).copy_from(&re);
            gg.view_mut((n, n), (n, n)).copy_from(&re);
            gg.view_mut((0, n), (n, n)).copy_from(&(-&im));
            gg.view_mut((n, 0), (n, n)).copy_from(&im);
            q.add_real(vec![Term { var: k, coeff: gg * c(0.5, 0.0) }], *b);
        }
        let unit = |i: usize, j: usize| {
            let mut e = zeros(2 * n, 2 * n);
            e[(i, j)] = c(1.0, 0.0);
            e
        };
        for i in 0..n {
            for j in i..n {
                // K11 = K22 and K12 antisymmetric on the real part
                q.add_real(vec![Term { var: k, coeff: unit(i, j) - unit(n + i, n + j) }], 0.0);
                q.add_real(vec![Term { var: k, coeff: unit(i, n + j) + unit(j, n + i) }], 0.0);
            }
        }
        let (a, b) = (solve(&p, &cfg).unwrap().status, solve(&q, &cfg).unwrap().status);
        if a == SdpStatus::Marginal || b == SdpStatus::Marginal {
            continue;
        }
        assert_eq!(a, b, "complex and doubled problems disagree");
        compared += 1;
    }
    assert!(compared >= 40, "only {compared} non-marginal comparisons");
}

#[test]
fn deg4_example_realization_identities() {
    let f = poly(F1_DEG4);
    let inv = inverse_realization(&f).unwrap();
    let mut r = rng(5);
    let err = freeconvex::convexity::det_identity_check(&f, &inv.pencil(), 20, 4, &mut r).unwrap();
    assert!(err <= 1e-7, "det identity {err:e}");
}
