//! Convexity decision, LMI representations, rank checks and pencil generators.

pub mod forms;
pub mod rank;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{burnside_decompose, similar_tol, similarity_classes, BlockKind};
use crate::error::{Error, Result};
use crate::linalg::{cond, eye, max_abs};
use crate::ncpoly::MatrixTuple;
use crate::parser::{to_polynomial_with_vars, RationalExpr};
use crate::pencil::LinearPencil;
use crate::realization::{inverse_realization, realize_with_inverse_vars, Realization, KALMAN_TOL};
use crate::sdp::{hermitian_similarity, inclusion, SdpConfig, KERNEL_TOL};

pub use forms::{det_identity_check, flip_poly, is_atom_scalar, make_flip_poly, schur_form, FlipPoly, SchurForm};
pub use rank::{
    extract_witness, full_rank_on_interior, scan_witness, ChainLevel, RankCheckConfig, RankCheckOutcome, RankResult,
    Witness, WitnessSource,
};

/// Named RNG sub-streams derived from a single seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Decomposition = 1,
    DetCheck = 2,
    WitnessScan = 3,
}

pub fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub tol: f64,
    pub seed: u64,
    pub vars: Option<usize>,
    pub no_gns: bool,
    pub dump_dir: Option<PathBuf>,
    /// Random tuples per level for the determinant identity check.
    pub trials: usize,
    pub max_level: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { tol: 1e-8, seed: 0, vars: None, no_gns: false, dump_dir: None, trials: 20, max_level: 4 }
    }
}

impl AnalysisConfig {
    pub fn sdp(&self) -> SdpConfig {
        SdpConfig { dump_dir: self.dump_dir.clone(), ..SdpConfig::with_tol(self.tol) }
    }

    pub fn rank(&self) -> RankCheckConfig {
        RankCheckConfig { sdp: self.sdp(), no_gns: self.no_gns, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convex,
    NotConvex,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockLog {
    pub offset: usize,
    pub size: usize,
    pub irreducible: bool,
    /// Similarity class among the irreducible blocks.
    pub class: Option<usize>,
    pub representative: bool,
    pub hermitian_similar: Option<bool>,
    /// Condition number of the hermitian similarity `Q`.
    pub q_cond: Option<f64>,
    /// Whether the hermitianized class survives irredundancy pruning.
    pub in_minimal: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tolerances {
    pub tol: f64,
    pub kalman: f64,
    pub kernel: f64,
}

/// Worst relative gap between `det f` and `det` of the realization pencil on random tuples.
#[derive(Clone, Debug, Serialize)]
pub struct DetCheck {
    pub trials: usize,
    pub max_level: usize,
    pub rel_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub verdict: Verdict,
    pub g: usize,
    pub realization_size: usize,
    #[serde(rename = "Lhat")]
    pub lhat: LinearPencil,
    #[serde(rename = "Lcheck")]
    pub lcheck: LinearPencil,
    pub minimal_pencil: Option<LinearPencil>,
    pub blocks: Vec<BlockLog>,
    pub rank_trace: Vec<ChainLevel>,
    pub witness: Option<MatrixTuple>,
    pub warnings: Vec<String>,
    pub tolerances: Tolerances,
    pub seed: u64,
    /// Only for polynomial inputs with `f(0) = I`.
    pub det_check: Option<DetCheck>,
}

/// The realization whose state pencil carries the free locus of the input.
pub fn realize_for_analysis(e: &RationalExpr, vars: Option<usize>) -> Result<Realization> {
    let g = vars.unwrap_or_else(|| e.inferred_vars());
    if g < e.inferred_vars() {
        return Err(Error::VariableCount { expected: e.inferred_vars(), got: g });
    }
    if e.has_inverse() {
        realize_with_inverse_vars(e, g)
    } else {
        inverse_realization(&to_polynomial_with_vars(e, g)?)
    }
}

pub fn is_convex(e: &RationalExpr, cfg: &AnalysisConfig) -> Result<ConvexityReport> {
    let r = realize_for_analysis(e, cfg.vars)?;
    let poly = if e.has_inverse() { None } else { Some(to_polynomial_with_vars(e, r.g)?) };
    let hermitian_input = poly.as_ref().is_some_and(|f| f.is_hermitian());
    let mut rep = analyze_pencil(&r.pencil(), hermitian_input, cfg)?;
    if let Some(f) = poly.filter(|f| cfg.trials > 0 && max_abs(&(f.constant_term() - eye(f.delta))) < 1e-12) {
        let mut rng = stream(cfg.seed, Stream::DetCheck);
        let rel_gap = det_identity_check(&f, &r.pencil(), cfg.trials, cfg.max_level, &mut rng)?;
        rep.det_check = Some(DetCheck { trials: cfg.trials, max_level: cfg.max_level, rel_gap });
    }
    Ok(rep)
}

/// Core of the decision for the monic state pencil `l` of a minimal realization.
pub fn analyze_pencil(l: &LinearPencil, hermitian_input: bool, cfg: &AnalysisConfig) -> Result<ConvexityReport> {
    let g = l.g;
    let tol = cfg.tol;
    let sdp = cfg.sdp();
    let mut rng = stream(cfg.seed, Stream::Decomposition);
    let dec = burnside_decompose(l, tol, &mut rng)?;
    let pencils = dec.block_pencils();
    let irr: Vec<usize> = (0..pencils.len()).filter(|&i| dec.blocks[i].kind == BlockKind::Irreducible).collect();
    let irr_pencils: Vec<LinearPencil> = irr.iter().map(|&i| pencils[i].clone()).collect();
    let classes = similarity_classes(&irr_pencils, tol, &mut rng);

    let mut blocks: Vec<BlockLog> = dec
        .blocks
        .iter()
        .map(|b| BlockLog {
            offset: b.offset,
            size: b.size,
            irreducible: b.kind == BlockKind::Irreducible,
            class: None,
            representative: false,
            hermitian_similar: None,
            q_cond: None,
            in_minimal: None,
        })
        .collect();

    let mut hat_parts: Vec<(usize, LinearPencil)> = Vec::new();
    let mut check_parts: Vec<LinearPencil> = Vec::new();
    for (ci, cl) in classes.iter().enumerate() {
        let rep = &irr_pencils[cl.representative];
        let hs = hermitian_similarity(rep, &sdp)?;
        for &m in &cl.members {
            let b = &mut blocks[irr[m]];
            b.class = Some(ci);
            b.representative = m == cl.representative;
            b.hermitian_similar = Some(hs.is_some());
            b.q_cond = hs.as_ref().map(|(q, _)| cond(q));
        }
        match hs {
            Some((_, h)) => hat_parts.push((ci, h)),
            None => check_parts.push(rep.clone()),
        }
    }

    let mut warnings = Vec::new();
    if hermitian_input {
        for (i, p) in check_parts.iter().enumerate() {
            let flipped = p.adjoint();
            if !check_parts.iter().any(|q| similar_tol(&flipped, q, tol, &mut rng).is_some()) {
                warnings.push(format!("non-hermitian block class {i} has no adjoint partner"));
            }
        }
    }

    let lhat = LinearPencil::direct_sum_all(g, &hat_parts.iter().map(|(_, h)| h.clone()).collect::<Vec<_>>())?;
    let lcheck = LinearPencil::direct_sum_all(g, &check_parts)?;
    let (verdict, rank_trace, witness) = if lcheck.size() == 0 {
        (Verdict::Convex, Vec::new(), None)
    } else {
        let mut scan = stream(cfg.seed, Stream::WitnessScan);
        let out = full_rank_on_interior(&lcheck, &lhat, &cfg.rank(), &mut scan)?;
        let v = match out.result {
            RankResult::FullRank => Verdict::Convex,
            RankResult::RankDeficient => Verdict::NotConvex,
        };
        (v, out.chain, out.witness.map(|w| w.point))
    };

    let minimal_pencil = if verdict == Verdict::Convex {
        let kept = prune(&hat_parts, g, &sdp)?;
        for b in blocks.iter_mut() {
            if let Some(ci) = b.class {
                if hat_parts.iter().any(|(c, _)| *c == ci) {
                    b.in_minimal = Some(kept.iter().any(|(c, _)| *c == ci));
                }
            }
        }
        Some(LinearPencil::direct_sum_all(g, &kept.into_iter().map(|(_, h)| h).collect::<Vec<_>>())?)
    } else {
        None
    };

    Ok(ConvexityReport {
        verdict,
        g,
        realization_size: l.size(),
        lhat,
        lcheck,
        minimal_pencil,
        blocks,
        rank_trace,
        witness,
        warnings,
        tolerances: Tolerances { tol, kalman: KALMAN_TOL, kernel: KERNEL_TOL },
        seed: cfg.seed,
        det_check: None,
    })
}

/// Drop hermitian blocks whose spectrahedron contains the intersection of the others,
/// largest first. A marginal inclusion solve keeps the block.
pub fn prune(parts: &[(usize, LinearPencil)], g: usize, sdp: &SdpConfig) -> Result<Vec<(usize, LinearPencil)>> {
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(parts[i].1.size()));
    let mut alive = vec![true; parts.len()];
    for &i in &order {
        let others: Vec<LinearPencil> =
            (0..parts.len()).filter(|&j| j != i && alive[j]).map(|j| parts[j].1.clone()).collect();
        let rest = LinearPencil::direct_sum_all(g, &others)?;
        match inclusion(&rest, &parts[i].1, sdp) {
            Ok(true) => alive[i] = false,
            Ok(false) | Err(Error::MarginalSdp { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(parts.iter().zip(alive).filter(|(_, a)| *a).map(|(p, _)| p.clone()).collect())
}

/// Minimal hermitian monic pencil `L` with `K_f = D_L`.
pub fn lmi_representation(e: &RationalExpr, cfg: &AnalysisConfig) -> Result<LinearPencil> {
    let rep = is_convex(e, cfg)?;
    match rep.minimal_pencil {
        Some(p) if rep.verdict == Verdict::Convex => Ok(p),
        _ => Err(Error::NotConvex),
    }
}

/// Irredundant hermitian pencil equivalent to a direct sum of hermitian monic pencils
/// given as a single polynomial; used for inputs that are already linear.
pub fn minimize_pencil(l: &LinearPencil, cfg: &AnalysisConfig) -> Result<LinearPencil> {
    let rep = analyze_pencil(l, false, cfg)?;
    rep.minimal_pencil.ok_or(Error::NotConvex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, zeros};
    use crate::parser::parse;

    fn report(s: &str) -> ConvexityReport {
        is_convex(&parse(s).unwrap(), &AnalysisConfig::default()).unwrap()
    }

    #[test]
    fn constant_is_convex_with_empty_pencil() {
        let r = report("1");
        assert_eq!(r.verdict, Verdict::Convex);
        assert_eq!(r.minimal_pencil.unwrap().size(), 0);
    }

    #[test]
    fn ball_polynomial() {
        let r = report("1 - x1*x1'");
        assert_eq!(r.verdict, Verdict::Convex);
        let m = r.minimal_pencil.unwrap();
        assert_eq!(m.size(), 2);
        assert!(m.is_hermitian_monic());
    }

    #[test]
    fn nonconvex_quadratic() {
        let r = report("1 - x1*x1 - x1'*x1'");
        assert_eq!(r.verdict, Verdict::NotConvex);
        assert!(r.minimal_pencil.is_none());
        assert!(!r.rank_trace.is_empty());
    }

    #[test]
    fn duplicated_block_is_pruned() {
        let mut a = zeros(2, 2);
        a[(0, 1)] = c(-1.0, 0.0);
        let ball = LinearPencil::hermitian(vec![a]).unwrap();
        let twice = ball.direct_sum(&ball).unwrap();
        let m = minimize_pencil(&twice, &AnalysisConfig::default()).unwrap();
        assert_eq!(m.size(), 2);
    }

    #[test]
    fn streams_differ() {
        use rand::Rng;
        let a: u64 = stream(7, Stream::Decomposition).gen();
        let b: u64 = stream(7, Stream::WitnessScan).gen();
        assert_ne!(a, b);
        let a2: u64 = stream(7, Stream::Decomposition).gen();
        assert_eq!(a, a2);
    }
}
