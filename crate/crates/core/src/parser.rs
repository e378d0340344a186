//! Expression language for noncommutative polynomial and rational expressions.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := ('-' | '+') unary | postfix
//! postfix := primary "'"*
//! primary := number | 'i' | 'x'<index> | 'inv' '(' expr ')' | '(' expr ')'
//!          | '[' row (',' row)* ']'
//! row     := '[' expr (',' expr)* ']'
//! ```

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, zeros, C64};
use crate::ncpoly::{Letter, NcPoly, Word};

/// Byte offsets `[start, end)` into the source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        SourceSpan { start, end: end.max(start) }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Const(C64),
    Var(usize),
    Adjoint(Box<RationalExpr>),
    Neg(Box<RationalExpr>),
    Add(Vec<RationalExpr>),
    Mul(Vec<RationalExpr>),
    Inverse(Box<RationalExpr>),
    Matrix(Vec<Vec<RationalExpr>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RationalExpr {
    pub kind: ExprKind,
    pub span: SourceSpan,
}

impl RationalExpr {
    fn new(kind: ExprKind, span: SourceSpan) -> Self {
        RationalExpr { kind, span }
    }

    fn children(&self) -> Vec<&RationalExpr> {
        match &self.kind {
            ExprKind::Const(_) | ExprKind::Var(_) => vec![],
            ExprKind::Adjoint(e) | ExprKind::Neg(e) | ExprKind::Inverse(e) => vec![e],
            ExprKind::Add(v) | ExprKind::Mul(v) => v.iter().collect(),
            ExprKind::Matrix(rows) => rows.iter().flatten().collect(),
        }
    }

    pub fn max_var(&self) -> usize {
        match &self.kind {
            ExprKind::Var(j) => *j,
            _ => self.children().iter().map(|e| e.max_var()).max().unwrap_or(0),
        }
    }

    /// Inferred variable count: the largest index used, at least 1.
    pub fn inferred_vars(&self) -> usize {
        self.max_var().max(1)
    }

    pub fn has_inverse(&self) -> bool {
        matches!(self.kind, ExprKind::Inverse(_)) || self.children().iter().any(|e| e.has_inverse())
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

fn err<T>(message: impl Into<String>, start: usize, end: usize) -> Result<T> {
    Err(Error::Parse { message: message.into(), span: SourceSpan::new(start, end) })
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<usize> {
        match self.peek() {
            Some(b) if b == ch => {
                self.pos += 1;
                Ok(self.pos - 1)
            }
            Some(_) => {
                let found = self.src[self.pos..].chars().next().unwrap();
                let end = self.pos + found.len_utf8();
                err(format!("expected '{}', found '{found}'", ch as char), self.pos, end)
            }
            None => err(format!("expected '{}', found end of input", ch as char), self.pos, self.pos),
        }
    }

    fn expr(&mut self) -> Result<RationalExpr> {
        let first = self.term()?;
        let start = first.span.start;
        let mut items = vec![first];
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            let op_pos = self.pos;
            self.pos += 1;
            let t = self.term()?;
            let span = SourceSpan::new(op_pos, t.span.end);
            items.push(if op == b'-' { RationalExpr::new(ExprKind::Neg(Box::new(t)), span) } else { t });
        }
        if items.len() == 1 {
            return Ok(items.pop().unwrap());
        }
        let end = items.last().unwrap().span.end;
        Ok(RationalExpr::new(ExprKind::Add(items), SourceSpan::new(start, end)))
    }

    fn term(&mut self) -> Result<RationalExpr> {
        let first = self.unary()?;
        let start = first.span.start;
        let mut items = vec![first];
        while self.peek() == Some(b'*') {
            self.pos += 1;
            items.push(self.unary()?);
        }
        if items.len() == 1 {
            return Ok(items.pop().unwrap());
        }
        let end = items.last().unwrap().span.end;
        Ok(RationalExpr::new(ExprKind::Mul(items), SourceSpan::new(start, end)))
    }

    fn unary(&mut self) -> Result<RationalExpr> {
        match self.peek() {
            Some(b'-') => {
                let start = self.pos;
                self.pos += 1;
                let inner = self.unary()?;
                let end = inner.span.end;
                Ok(RationalExpr::new(ExprKind::Neg(Box::new(inner)), SourceSpan::new(start, end)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<RationalExpr> {
        let mut e = self.primary()?;
        while self.peek() == Some(b'\'') {
            self.pos += 1;
            let span = SourceSpan::new(e.span.start, self.pos);
            e = adjoint_node(e, span);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<RationalExpr> {
        let start = self.pos;
        match self.peek() {
            None => err("unexpected end of input", self.pos, self.pos),
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number(),
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => self.identifier(),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(RationalExpr::new(inner.kind, SourceSpan::new(self.pos_before_ws(start), self.pos)))
            }
            Some(b'[') => self.matrix(),
            Some(_) => {
                let s = self.pos;
                let ch = self.src[s..].chars().next().unwrap();
                err(format!("unexpected character '{ch}'"), s, s + ch.len_utf8())
            }
        }
    }

    fn pos_before_ws(&self, start: usize) -> usize {
        let mut s = start;
        while s < self.bytes.len() && self.bytes[s].is_ascii_whitespace() {
            s += 1;
        }
        s
    }

    fn number(&mut self) -> Result<RationalExpr> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        let text = &self.src[start..self.pos];
        if text == "." {
            return err("malformed number", start, self.pos);
        }
        if self.pos < self.bytes.len() && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'.') {
            let mut end = self.pos;
            while end < self.bytes.len() && (self.bytes[end].is_ascii_alphanumeric() || self.bytes[end] == b'.') {
                end += 1;
            }
            return err(
                "malformed number (juxtaposition needs an explicit '*'; scientific notation is not supported)",
                start,
                end,
            );
        }
        let v: f64 = text.parse().map_err(|_| Error::Parse {
            message: "malformed number".into(),
            span: SourceSpan::new(start, self.pos),
        })?;
        Ok(RationalExpr::new(ExprKind::Const(c(v, 0.0)), SourceSpan::new(start, self.pos)))
    }

    fn identifier(&mut self) -> Result<RationalExpr> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let span = SourceSpan::new(start, self.pos);
        if name == "i" {
            return Ok(RationalExpr::new(ExprKind::Const(c(0.0, 1.0)), span));
        }
        if name == "inv" {
            if self.peek() != Some(b'(') {
                return err("'inv' must be followed by '('", start, self.pos);
            }
            self.pos += 1;
            let inner = self.expr()?;
            self.expect(b')')?;
            return Ok(RationalExpr::new(ExprKind::Inverse(Box::new(inner)), SourceSpan::new(start, self.pos)));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && !digits.starts_with('0') {
                if let Ok(j) = digits.parse::<usize>() {
                    return Ok(RationalExpr::new(ExprKind::Var(j), span));
                }
            }
        }
        err(format!("unknown identifier '{name}'"), start, self.pos)
    }

    fn matrix(&mut self) -> Result<RationalExpr> {
        let start = self.expect(b'[')?;
        let mut rows = Vec::new();
        loop {
            let row_start = self.expect(b'[')?;
            let mut row = vec![self.expr()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                row.push(self.expr()?);
            }
            self.expect(b']')?;
            rows.push((row, SourceSpan::new(row_start, self.pos)));
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                }
                _ => break,
            }
        }
        self.expect(b']')?;
        let span = SourceSpan::new(start, self.pos);
        let n = rows.len();
        for (row, rspan) in &rows {
            if row.len() != n {
                return Err(Error::Parse {
                    message: format!("non-square matrix literal: {n} rows but a row has {} entries", row.len()),
                    span: *rspan,
                });
            }
        }
        Ok(RationalExpr::new(ExprKind::Matrix(rows.into_iter().map(|(r, _)| r).collect()), span))
    }
}

/// Postfix adjoint; on a matrix literal the grid is transposed and entries adjointed.
fn adjoint_node(e: RationalExpr, span: SourceSpan) -> RationalExpr {
    match e.kind {
        ExprKind::Matrix(rows) => {
            let n = rows.len();
            let mut grid: Vec<Vec<Option<RationalExpr>>> =
                rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
            let mut out = Vec::with_capacity(n);
            for j in 0..n {
                let mut row = Vec::with_capacity(n);
                for g in grid.iter_mut() {
                    let entry = g[j].take().unwrap();
                    let sp = entry.span;
                    row.push(adjoint_node(entry, sp));
                }
                out.push(row);
            }
            RationalExpr::new(ExprKind::Matrix(out), span)
        }
        kind => RationalExpr::new(ExprKind::Adjoint(Box::new(RationalExpr { kind, span: e.span })), span),
    }
}

pub fn parse(text: &str) -> Result<RationalExpr> {
    let mut p = Parser { src: text, bytes: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < text.len() {
        let ch = text[p.pos..].chars().next().unwrap();
        let msg = if ch == '(' || ch.is_ascii_alphanumeric() || ch == '[' {
            format!("unexpected '{ch}' (products need an explicit '*')")
        } else {
            format!("unexpected '{ch}'")
        };
        return err(msg, p.pos, p.pos + ch.len_utf8());
    }
    Ok(e)
}

/// Lower an inverse-free expression with the inferred variable count.
pub fn to_polynomial(e: &RationalExpr) -> Result<NcPoly> {
    to_polynomial_with_vars(e, e.inferred_vars())
}

pub fn to_polynomial_with_vars(e: &RationalExpr, g: usize) -> Result<NcPoly> {
    if e.has_inverse() {
        return Err(Error::RationalNotPolynomial);
    }
    if e.max_var() > g {
        return Err(Error::VariableCount { expected: g, got: e.max_var() });
    }
    lower(e, g)
}

/// Bring two polynomials to a common coefficient size, broadcasting scalars.
pub(crate) fn unify(a: NcPoly, b: NcPoly) -> Result<(NcPoly, NcPoly)> {
    let d = a.delta.max(b.delta);
    Ok((a.broadcast(d)?, b.broadcast(d)?))
}

fn lower(e: &RationalExpr, g: usize) -> Result<NcPoly> {
    Ok(match &e.kind {
        ExprKind::Const(z) => NcPoly::scalar(*z, g),
        ExprKind::Var(j) => NcPoly::letter(Letter::x(*j), g)?,
        ExprKind::Adjoint(inner) => lower(inner, g)?.adjoint(),
        ExprKind::Neg(inner) => lower(inner, g)?.scale(c(-1.0, 0.0)),
        ExprKind::Add(items) => {
            let mut acc = lower(&items[0], g)?;
            for it in &items[1..] {
                let (a, b) = unify(acc, lower(it, g)?)?;
                acc = a.add(&b)?;
            }
            acc
        }
        ExprKind::Mul(items) => {
            let mut acc = lower(&items[0], g)?;
            for it in &items[1..] {
                let (a, b) = unify(acc, lower(it, g)?)?;
                acc = a.mul(&b)?;
            }
            acc
        }
        ExprKind::Inverse(_) => return Err(Error::RationalNotPolynomial),
        ExprKind::Matrix(rows) => {
            let n = rows.len();
            let mut entries = Vec::with_capacity(n * n);
            for row in rows {
                for it in row {
                    entries.push(lower(it, g)?);
                }
            }
            let m = entries.iter().map(|p| p.delta).max().unwrap_or(1);
            let entries = entries.into_iter().map(|p| p.broadcast(m)).collect::<Result<Vec<_>>>()?;
            assemble_grid(&entries, n, m, g)?
        }
    })
}

/// Place an n x n grid of m x m polynomials into one (nm) x (nm) polynomial.
pub(crate) fn assemble_grid(entries: &[NcPoly], n: usize, m: usize, g: usize) -> Result<NcPoly> {
    let delta = n * m;
    let mut terms = Vec::new();
    for (idx, p) in entries.iter().enumerate() {
        let (i, j) = (idx / n, idx % n);
        for (w, coeff) in &p.terms {
            let mut big = zeros(delta, delta);
            big.view_mut((i * m, j * m), (m, m)).copy_from(coeff);
            terms.push((w.clone(), big));
        }
    }
    let mut out = NcPoly::from_terms(delta, g, terms)?;
    out.delta = delta;
    Ok(out)
}

fn fmt_real(v: f64) -> String {
    // Display for f64 is the shortest round-tripping decimal and never uses exponents.
    format!("{v}")
}

/// A complex number as a self-delimiting expression (may carry a leading '-').
fn fmt_complex(z: C64) -> String {
    if z.im == 0.0 {
        fmt_real(z.re)
    } else if z.re == 0.0 {
        if z.im < 0.0 {
            format!("-{}*i", fmt_real(-z.im))
        } else {
            format!("{}*i", fmt_real(z.im))
        }
    } else if z.im < 0.0 {
        format!("({} - {}*i)", fmt_real(z.re), fmt_real(-z.im))
    } else {
        format!("({} + {}*i)", fmt_real(z.re), fmt_real(z.im))
    }
}

fn fmt_word(w: &Word) -> String {
    w.0.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("*")
}

/// Canonical text; `to_polynomial(parse(format(p)))` reproduces `p` exactly.
pub fn format(p: &NcPoly) -> String {
    if p.delta != 1 {
        return format_matrix(p);
    }
    if p.is_zero() {
        return "0".into();
    }
    let mut out = String::new();
    for (k, (w, m)) in p.terms.iter().enumerate() {
        let z = m[(0, 0)];
        let (neg, body) = if z.im == 0.0 {
            let mag = z.re.abs();
            let body = if w.is_empty() {
                fmt_real(mag)
            } else if mag == 1.0 {
                fmt_word(w)
            } else {
                format!("{}*{}", fmt_real(mag), fmt_word(w))
            };
            (z.re < 0.0, body)
        } else if z.re == 0.0 {
            let mag = z.im.abs();
            let body = if w.is_empty() {
                format!("{}*i", fmt_real(mag))
            } else {
                format!("{}*i*{}", fmt_real(mag), fmt_word(w))
            };
            (z.im < 0.0, body)
        } else {
            let coeff = fmt_complex(z);
            let body = if w.is_empty() { coeff } else { format!("{coeff}*{}", fmt_word(w)) };
            (false, body)
        };
        match (k, neg) {
            (0, false) => out.push_str(&body),
            (0, true) => {
                out.push('-');
                out.push_str(&body);
            }
            (_, false) => {
                out.push_str(" + ");
                out.push_str(&body);
            }
            (_, true) => {
                out.push_str(" - ");
                out.push_str(&body);
            }
        }
    }
    out
}

fn format_matrix(p: &NcPoly) -> String {
    let lit = |m: &crate::linalg::CMat| {
        let rows: Vec<String> = (0..m.nrows())
            .map(|i| {
                let entries: Vec<String> = (0..m.ncols()).map(|j| fmt_complex(m[(i, j)])).collect();
                format!("[{}]", entries.join(", "))
            })
            .collect();
        format!("[{}]", rows.join(", "))
    };
    if p.is_zero() {
        return lit(&zeros(p.delta, p.delta));
    }
    p.terms
        .iter()
        .map(|(w, m)| if w.is_empty() { lit(m) } else { format!("{}*{}", lit(m), fmt_word(w)) })
        .collect::<Vec<_>>()
        .join(" + ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_of_inverse_and_matrix() {
        let e = parse("inv(1 - x1*x2)").unwrap();
        assert!(matches!(e.kind, ExprKind::Inverse(_)));
        let m = parse("[[1, x1],[x1', 1]]").unwrap();
        match m.kind {
            ExprKind::Matrix(rows) => assert_eq!(rows.len(), 2),
            _ => panic!("expected matrix"),
        }
    }

    #[test]
    fn commutator_has_two_terms() {
        let p = to_polynomial(&parse("x1*x1' - x1'*x1").unwrap()).unwrap();
        assert_eq!(p.terms.len(), 2);
    }

    #[test]
    fn inverse_is_not_polynomial() {
        let e = parse("inv(1-x1)").unwrap();
        assert!(matches!(to_polynomial(&e), Err(Error::RationalNotPolynomial)));
    }

    #[test]
    fn format_zero_and_affine() {
        assert_eq!(format(&NcPoly::zero(1, 1)), "0");
        let s = to_polynomial(&parse("1 + 0.5*(x1 + x1')").unwrap()).unwrap();
        assert_eq!(format(&s), "1 + 0.5*x1 + 0.5*x1'");
    }

    #[test]
    fn errors_carry_spans() {
        for bad in ["x1 x2", "2x1", "y + 1", "x0", "[[1, 2]]", "1 +", "inv x1", "(1", "1e-3", "x1 ^ 2"] {
            match parse(bad) {
                Err(Error::Parse { span, .. }) => assert!(span.start <= span.end && span.end <= bad.len(), "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn matrix_adjoint_transposes() {
        let a = to_polynomial(&parse("[[1, x1],[0, 1]]'").unwrap()).unwrap();
        let b = to_polynomial(&parse("[[1, 0],[x1', 1]]").unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn complex_coefficients_round_trip() {
        let p = to_polynomial(&parse("(0.25 - 3*i)*x1*x2' - 0.5*i + x2'*x2").unwrap()).unwrap();
        let q = to_polynomial_with_vars(&parse(&format(&p)).unwrap(), p.g).unwrap();
        assert_eq!(p, q);
    }
}
