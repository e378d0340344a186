//! Command-line front end.
//!
//! Exit codes: 0 convex / full rank / success, 1 usage or input error, 2 numeric failure,
//! 3 not convex / rank deficient, 4 marginal or indeterminate.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::convexity::{
    analyze_pencil, flip_poly, full_rank_on_interior, is_convex, minimize_pencil, stream, AnalysisConfig,
    ConvexityReport, RankCheckOutcome, RankResult, Stream, Verdict,
};
use crate::error::Error;
use crate::json::{self, JsonMatrix};
use crate::linalg::{c, CMat, C64};
use crate::ncpoly::MatrixTuple;
use crate::parser::{self, parse, to_polynomial_with_vars, RationalExpr};
use crate::pencil::LinearPencil;
use crate::realization::{realize_expression_with_vars, Realization};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_NEGATIVE: i32 = 3;
pub const EXIT_MARGINAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "freeconvex", version, about = "Convexity and LMI representations of free invertibility sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Number of variables g (default: largest index in the input).
    #[arg(long, global = true)]
    pub vars: Option<usize>,
    /// Relative tolerance for every rank and feasibility decision.
    #[arg(long, global = true, default_value_t = 1e-8, value_parser = parse_tol)]
    pub tol: f64,
    /// Base seed for every random stream.
    #[arg(long, global = true, env = "FREECONVEX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Random tuples per level in determinant identity checks.
    #[arg(long, global = true, default_value_t = 20)]
    pub trials: usize,
    /// Largest matrix level used by determinant identity checks.
    #[arg(long, global = true, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_level: u64,
    /// JSON output (default).
    #[arg(long, global = true, conflicts_with = "text")]
    pub json: bool,
    /// Human-readable summary instead of JSON.
    #[arg(long, global = true)]
    pub text: bool,
    /// Write every SDP problem and result as JSON into this directory.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "sdp-dump", value_name = "DIR")]
    pub dump_sdp: Option<PathBuf>,
    /// Skip GNS witness extraction and go straight to the random scan.
    #[arg(long, global = true)]
    pub no_gns: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// Expression text in the polynomial / rational grammar.
    Expr,
    /// Pencil JSON.
    Pencil,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide whether K_f is convex and report the LMI representation.
    Analyze {
        /// Expression, or a path to a file holding one.
        input: String,
        #[arg(long, value_enum, default_value_t = InputFormat::Expr)]
        format: InputFormat,
    },
    /// Minimal hermitian monic pencil L with K_f = D_L.
    Lmi {
        input: String,
        #[arg(long, value_enum, default_value_t = InputFormat::Expr)]
        format: InputFormat,
    },
    /// Decide whether Ltilde(X) has full rank for every X with L(X) > 0.
    Rankcheck {
        /// Pencil JSON (file path or inline) for Ltilde.
        #[arg(long)]
        pencil: String,
        /// Hermitian monic pencil JSON (file path or inline) for the domain L.
        #[arg(long)]
        domain: String,
    },
    /// Minimal realization of an expression.
    Realize { input: String },
    /// Hermitian flip-poly pencil from u and v_1..v_g.
    Genflip {
        /// JSON array of d entries, each a number or [re, im].
        #[arg(long)]
        u: String,
        /// JSON array of g arrays of length d.
        #[arg(long)]
        v: String,
        /// JSON array of g arrays of length d; give entries exactly where u vanishes, null elsewhere.
        #[arg(long)]
        vtilde: Option<String>,
    },
    /// Evaluate an expression at a matrix point.
    Eval {
        input: String,
        /// Point JSON {"n": .., "X": [..]} (file path or inline).
        #[arg(long)]
        point: String,
    },
}

fn parse_tol(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if t > 0.0 && t <= 1e-2 {
        Ok(t)
    } else {
        Err(format!("tolerance must lie in (0, 1e-2], got {t}"))
    }
}

impl Common {
    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            tol: self.tol,
            seed: self.seed,
            vars: self.vars,
            no_gns: self.no_gns,
            dump_dir: self.dump_sdp.clone(),
            trials: self.trials,
            max_level: self.max_level as usize,
        }
    }

    fn text(&self) -> bool {
        self.text && !self.json
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConvex => EXIT_NEGATIVE,
        Error::MarginalSdp { .. } | Error::NumericalRankAmbiguity { .. } => EXIT_MARGINAL,
        Error::IterationLimit(_)
        | Error::NumericalBreakdown(_)
        | Error::ProblemTooLarge { .. }
        | Error::StructureMismatch(_) => EXIT_NUMERIC,
        Error::DimensionMismatch(_)
        | Error::VariableCount { .. }
        | Error::Parse { .. }
        | Error::RationalNotPolynomial
        | Error::SingularAtOrigin
        | Error::NotMinimal
        | Error::NotAtom
        | Error::MissingOverride { .. }
        | Error::Invalid(_)
        | Error::Json(_)
        | Error::Io(_) => EXIT_USAGE,
    }
}

/// Matrix value on the wire.
#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixValue {
    pub rows: usize,
    pub cols: usize,
    pub value: JsonMatrix,
}

/// Successful command output: exit code and the rendered body.
struct Output {
    code: i32,
    body: String,
}

/// Parse `args` (including the program name), run, and write to the given streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(rendered.as_bytes()) } else { out.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match execute(&cli) {
        Ok(o) => {
            let _ = out.write_all(o.body.as_bytes());
            if !o.body.ends_with('\n') {
                let _ = out.write_all(b"\n");
            }
            o.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// A file's contents when `arg` names an existing file, otherwise `arg` itself.
fn resolve(arg: &str) -> Result<String, Error> {
    let p = Path::new(arg);
    if p.is_file() {
        Ok(std::fs::read_to_string(p)?)
    } else {
        Ok(arg.to_string())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(arg: &str) -> Result<T, Error> {
    Ok(serde_json::from_str(&resolve(arg)?)?)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Error> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn execute(cli: &Cli) -> Result<Output, Error> {
    let common = &cli.common;
    let cfg = common.analysis();
    match &cli.command {
        Command::Analyze { input, format } => {
            let rep = match format {
                InputFormat::Expr => is_convex(&parse(&resolve(input)?)?, &cfg)?,
                InputFormat::Pencil => {
                    let l: LinearPencil = read_json(input)?;
                    check_vars(l.g, common.vars)?;
                    analyze_pencil(&l, l.is_hermitian_monic(), &cfg)?
                }
            };
            let code = match rep.verdict {
                Verdict::Convex => EXIT_OK,
                Verdict::NotConvex => EXIT_NEGATIVE,
            };
            let body = if common.text() { report_text(&rep) } else { to_json(&rep)? };
            Ok(Output { code, body })
        }
        Command::Lmi { input, format } => {
            let l = match format {
                InputFormat::Expr => crate::convexity::lmi_representation(&parse(&resolve(input)?)?, &cfg)?,
                InputFormat::Pencil => {
                    let l: LinearPencil = read_json(input)?;
                    check_vars(l.g, common.vars)?;
                    minimize_pencil(&l, &cfg)?
                }
            };
            let body = if common.text() { pencil_text(&l)? } else { to_json(&l)? };
            Ok(Output { code: EXIT_OK, body })
        }
        Command::Rankcheck { pencil, domain } => {
            let lt: LinearPencil = read_json(pencil)?;
            let l: LinearPencil = read_json(domain)?;
            check_vars(l.g, common.vars)?;
            let mut rng = stream(common.seed, Stream::WitnessScan);
            let out = full_rank_on_interior(&lt, &l, &cfg.rank(), &mut rng)?;
            let code = match out.result {
                RankResult::FullRank => EXIT_OK,
                RankResult::RankDeficient => EXIT_NEGATIVE,
            };
            let body = if common.text() { rank_text(&out) } else { to_json(&out)? };
            Ok(Output { code, body })
        }
        Command::Realize { input } => {
            let e = parse(&resolve(input)?)?;
            let r = realize_expression_with_vars(&e, vars_for(&e, common.vars)?)?;
            let body = if common.text() { realization_text(&r) } else { to_json(&r)? };
            Ok(Output { code: EXIT_OK, body })
        }
        Command::Genflip { u, v, vtilde } => {
            let u: Vec<CNum> = read_json(u)?;
            let v: Vec<Vec<CNum>> = read_json(v)?;
            let vt: Vec<Vec<Option<CNum>>> = match vtilde {
                Some(s) => read_json(s)?,
                None => Vec::new(),
            };
            let u: Vec<C64> = u.into_iter().map(C64::from).collect();
            let v: Vec<Vec<C64>> = v.into_iter().map(|r| r.into_iter().map(C64::from).collect()).collect();
            let vt: Vec<Vec<Option<C64>>> =
                vt.into_iter().map(|r| r.into_iter().map(|z| z.map(C64::from)).collect()).collect();
            check_vars(v.len(), common.vars)?;
            let fp = flip_poly(&u, &v, &vt)?;
            let body = if common.text() {
                format!("{}\nf = {}", pencil_text(&fp.pencil)?, parser::format(&fp.polynomial()?))
            } else {
                to_json(&fp.pencil)?
            };
            Ok(Output { code: EXIT_OK, body })
        }
        Command::Eval { input, point } => {
            let e = parse(&resolve(input)?)?;
            let x: MatrixTuple = read_json(point)?;
            let g = vars_for(&e, common.vars.or(Some(x.g())))?;
            let value = evaluate(&e, g, &x)?;
            let body = if common.text() {
                matrix_text(&value)
            } else {
                to_json(&MatrixValue { rows: value.nrows(), cols: value.ncols(), value: json::to_json(&value) })?
            };
            Ok(Output { code: EXIT_OK, body })
        }
    }
}

fn vars_for(e: &RationalExpr, vars: Option<usize>) -> Result<usize, Error> {
    let need = e.inferred_vars();
    match vars {
        Some(g) if g < need => Err(Error::VariableCount { expected: need, got: g }),
        Some(g) => Ok(g),
        None => Ok(need),
    }
}

fn check_vars(g: usize, vars: Option<usize>) -> Result<(), Error> {
    match vars {
        Some(v) if v != g => Err(Error::VariableCount { expected: g, got: v }),
        _ => Ok(()),
    }
}

fn evaluate(e: &RationalExpr, g: usize, x: &MatrixTuple) -> Result<CMat, Error> {
    if x.g() != g {
        return Err(Error::VariableCount { expected: g, got: x.g() });
    }
    if !e.has_inverse() {
        return to_polynomial_with_vars(e, g)?.evaluate(x);
    }
    realize_expression_with_vars(e, g)?
        .evaluate(x)?
        .ok_or_else(|| Error::NumericalBreakdown("expression is singular at the point".into()))
}

/// Complex number on the wire: a bare real or an `[re, im]` pair.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
enum CNum {
    Real(f64),
    Pair([f64; 2]),
}

impl From<CNum> for C64 {
    fn from(z: CNum) -> C64 {
        match z {
            CNum::Real(r) => c(r, 0.0),
            CNum::Pair([re, im]) => c(re, im),
        }
    }
}

fn fmt_c(z: C64) -> String {
    // adding zero turns -0.0 into 0.0
    let z = z + c(0.0, 0.0);
    if z.im == 0.0 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6}{:+.6}i", z.re, z.im)
    }
}

fn matrix_text(m: &CMat) -> String {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| fmt_c(m[(i, j)])).collect::<Vec<_>>().join("  "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn pencil_text(l: &LinearPencil) -> Result<String, Error> {
    if l.size() == 0 {
        return Ok("size 0 pencil (no constraint)".into());
    }
    let mut s = format!("size {} pencil, g = {}\n", l.size(), l.g);
    for j in 0..l.g {
        s += &format!("A_{}:\n{}\n", j + 1, matrix_text(&l.a(j)));
    }
    Ok(s.trim_end().to_string())
}

fn report_text(r: &ConvexityReport) -> String {
    let verdict = match r.verdict {
        Verdict::Convex => "convex",
        Verdict::NotConvex => "not convex",
    };
    let mut s = format!("verdict: {verdict}\nrealization size: {}\n", r.realization_size);
    s += &format!("Lhat size: {}, Lcheck size: {}\n", r.lhat.size(), r.lcheck.size());
    for b in &r.blocks {
        s += &format!(
            "block at {} size {}: {}{}\n",
            b.offset,
            b.size,
            if b.irreducible { "irreducible" } else { "identity" },
            match b.hermitian_similar {
                Some(true) => ", hermitian similar",
                Some(false) => ", not hermitian similar",
                None => "",
            }
        );
    }
    if !r.rank_trace.is_empty() {
        s += &format!("rank recursion depth: {}\n", r.rank_trace.len());
    }
    if let Some(m) = &r.minimal_pencil {
        s += &format!("minimal pencil size: {}\n", m.size());
    }
    if let Some(w) = &r.witness {
        s += &format!("witness at level {}\n", w.n);
    }
    if let Some(d) = &r.det_check {
        s += &format!("det identity gap: {:.2e}\n", d.rel_gap);
    }
    for w in &r.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

fn rank_text(o: &RankCheckOutcome) -> String {
    let mut s = format!(
        "result: {}\ndepth: {}\n",
        match o.result {
            RankResult::FullRank => "full rank",
            RankResult::RankDeficient => "rank deficient",
        },
        o.depth()
    );
    if let Some(w) = &o.witness {
        s += &format!(
            "witness at level {}: sigma_min {:.2e}, domain min eig {:.3e}\n",
            w.point.n, w.sigma_min, w.domain_min_eig
        );
    }
    s
}

fn realization_text(r: &Realization) -> String {
    format!("state size d = {}, delta = {}, g = {}", r.d, r.delta, r.g)
}
