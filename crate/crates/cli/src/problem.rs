//! Problem files: the parsed form, its canonical rendering, and resolution
//! into core descriptions.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Signed, ToPrimitive, Zero};
use vna_core::{
    classify_series, AlgebraDesc, AtomicSubalgebra, DBlock, EmbeddingSpec, ExtScalar, FamilyLimits, IndexExpr,
    Rational, SeriesClass, Size, Summand, SummandKind, Truncation,
};

use crate::error::CliError;

/// Source position, 1-based. Ignored by equality so that a rendered and
/// re-parsed file compares equal to the original.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Inf,
    Expr(IndexExpr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SummandTemplate {
    Matrix {
        size: Value,
        trace: Value,
    },
    Diffuse {
        trace: Value,
    },
    Free {
        s: Value,
        t: Value,
    },
    /// `C(t)`, a one-dimensional block.
    Block {
        trace: Value,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub label: Option<String>,
    pub summand: SummandTemplate,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bound {
    Int(i64),
    /// The truncation length `N`.
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repeat<T> {
    pub var: String,
    pub lo: i64,
    pub hi: Bound,
    pub body: Vec<T>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item<T> {
    Single(T),
    Repeat(Repeat<T>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgebraDef {
    pub name: String,
    pub items: Vec<Item<Term>>,
    pub span: Span,
}

/// One sparse embedding entry, 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub row: IndexExpr,
    pub col: IndexExpr,
    pub value: IndexExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedBody {
    Dense(Vec<Vec<IndexExpr>>),
    Sparse(Vec<Item<Cell>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedDef {
    pub sub: String,
    pub target: String,
    pub body: EmbedBody,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Options {
    pub depth: Option<u32>,
    pub truncate: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProblemFile {
    pub algebras: Vec<AlgebraDef>,
    pub subalg: Option<AlgebraDef>,
    pub embeds: Vec<EmbedDef>,
    pub options: Options,
}

/// A problem file with every template expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub algebras: Vec<(String, AlgebraDesc)>,
    pub d: Option<(String, AtomicSubalgebra)>,
    pub embeddings: Vec<(String, EmbeddingSpec)>,
    pub depth: Option<u32>,
}

/// The five inputs of a product.
pub struct ProductInputs<'a> {
    pub a: &'a AlgebraDesc,
    pub b: &'a AlgebraDesc,
    pub d: &'a AtomicSubalgebra,
    pub ea: &'a EmbeddingSpec,
    pub eb: &'a EmbeddingSpec,
}

impl Problem {
    pub fn algebra(&self, name: &str) -> Option<&AlgebraDesc> {
        self.algebras.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    /// `A` and `B` are the targets of the first and second `embed` lines.
    pub fn product_inputs(&self) -> Result<ProductInputs<'_>, CliError> {
        let (_, d) = self.d.as_ref().ok_or_else(|| CliError::Usage("no `subalg` is defined".into()))?;
        let [(na, ea), (nb, eb)] = self.embeddings.as_slice() else {
            return Err(CliError::Usage(format!(
                "a product needs exactly two `embed` lines, found {}",
                self.embeddings.len()
            )));
        };
        let a = self.algebra(na).expect("checked at parse time");
        let b = self.algebra(nb).expect("checked at parse time");
        Ok(ProductInputs { a, b, d, ea, eb })
    }
}

fn resolve_err(span: Span, message: impl Into<String>) -> CliError {
    CliError::Resolve { line: span.line, col: span.col, message: message.into() }
}

fn eval(e: &IndexExpr, i: i64, span: Span) -> Result<Rational, CliError> {
    e.eval(i).map_err(|err| resolve_err(span, err.to_string()))
}

fn eval_trace(v: &Value, i: i64, span: Span) -> Result<ExtScalar, CliError> {
    match v {
        Value::Inf => Ok(ExtScalar::Infinity),
        Value::Expr(e) => {
            let r = eval(e, i, span)?;
            ExtScalar::new(r.clone()).map_err(|_| resolve_err(span, format!("trace {r} is negative")))
        }
    }
}

fn eval_size(v: &Value, i: i64, span: Span) -> Result<Size, CliError> {
    match v {
        Value::Inf => Ok(Size::Infinite),
        Value::Expr(e) => {
            let r = eval(e, i, span)?;
            match (r.is_integer() && r.is_positive()).then(|| r.to_integer().to_u64()).flatten() {
                Some(n) => Ok(Size::Finite(n)),
                None => Err(resolve_err(span, format!("size must be positive or inf, got {r}"))),
            }
        }
    }
}

fn expand_term(t: &Term, i: i64) -> Result<SummandKind, CliError> {
    Ok(match &t.summand {
        SummandTemplate::Matrix { size, trace } => {
            SummandKind::Matrix { size: eval_size(size, i, t.span)?, minimal_trace: eval_trace(trace, i, t.span)? }
        }
        SummandTemplate::Block { trace } => {
            SummandKind::Matrix { size: Size::Finite(1), minimal_trace: eval_trace(trace, i, t.span)? }
        }
        SummandTemplate::Diffuse { trace } => {
            SummandKind::DiffuseHyperfinite { total_trace: eval_trace(trace, i, t.span)? }
        }
        SummandTemplate::Free { s, t: tr } => {
            SummandKind::FreeFactor { s: eval_trace(s, i, t.span)?, t: eval_trace(tr, i, t.span)? }
        }
    })
}

fn mul(a: IndexExpr, b: IndexExpr) -> IndexExpr {
    IndexExpr::Mul(Box::new(a), Box::new(b))
}

fn series_of(v: &Value, lo: i64) -> SeriesClass {
    match v {
        Value::Inf => SeriesClass::Diverges,
        Value::Expr(e) => classify_series(e, lo),
    }
}

fn squared(v: &Value) -> Value {
    match v {
        Value::Inf => Value::Inf,
        Value::Expr(e) => Value::Expr(mul(e.clone(), e.clone())),
    }
}

/// Series of (total trace, positive rdim, negative rdim) over one template.
fn term_series(t: &SummandTemplate, lo: i64) -> [SeriesClass; 3] {
    match t {
        SummandTemplate::Matrix { size, trace } => {
            let total = match (size, trace) {
                (Value::Expr(n), Value::Expr(u)) => Value::Expr(mul(n.clone(), u.clone())),
                _ => Value::Inf,
            };
            [series_of(&total, lo), SeriesClass::zero(), series_of(&squared(trace), lo)]
        }
        SummandTemplate::Block { trace } => [series_of(trace, lo), SeriesClass::zero(), series_of(&squared(trace), lo)],
        SummandTemplate::Diffuse { trace } => [series_of(trace, lo), SeriesClass::zero(), SeriesClass::zero()],
        SummandTemplate::Free { s, t } => [series_of(t, lo), series_of(s, lo), SeriesClass::zero()],
    }
}

fn finite_series(x: &ExtScalar) -> SeriesClass {
    match x {
        ExtScalar::Finite(r) => SeriesClass::Converges { limit: Some(r.clone()) },
        ExtScalar::Infinity => SeriesClass::Diverges,
    }
}

fn bound(b: &Bound, truncate: Option<u64>, span: Span) -> Result<i64, CliError> {
    match b {
        Bound::Int(n) => Ok(*n),
        Bound::Truncate => truncate.and_then(|n| i64::try_from(n).ok()).ok_or_else(|| {
            resolve_err(span, "the truncation length N is not set (use `option truncate = k` or --truncate)")
        }),
    }
}

/// Expands a definition. Returns the summands and, when a `repeat` is
/// present, the declared-family metadata.
fn expand_def(def: &AlgebraDef, truncate: Option<u64>) -> Result<(Vec<Summand>, Option<Truncation>), CliError> {
    let mut out = Vec::new();
    let mut terms = 0u64;
    let mut has_repeat = false;
    let mut series: [Vec<SeriesClass>; 3] = Default::default();
    for item in &def.items {
        match item {
            Item::Single(t) => {
                let kind = expand_term(t, 0)?;
                let pos = match &kind {
                    SummandKind::FreeFactor { s, .. } => finite_series(s),
                    _ => SeriesClass::zero(),
                };
                let neg = match &kind {
                    SummandKind::Matrix { minimal_trace, .. } => finite_series(&minimal_trace.square()),
                    _ => SeriesClass::zero(),
                };
                series[0].push(finite_series(&kind.total_trace()));
                series[1].push(pos);
                series[2].push(neg);
                let label = t.label.clone().unwrap_or_else(|| format!("{}{}", def.name, out.len() + 1));
                out.push(Summand::new(kind, label));
            }
            Item::Repeat(r) => {
                has_repeat = true;
                let hi = bound(&r.hi, truncate, r.span)?;
                if hi < r.lo {
                    return Err(resolve_err(r.span, format!("empty range {}..{hi}", r.lo)));
                }
                for i in r.lo..=hi {
                    for t in &r.body {
                        let kind = expand_term(t, i)?;
                        out.push(Summand::new(kind, format!("{}{}", def.name, out.len() + 1)));
                    }
                }
                terms += (hi - r.lo + 1) as u64;
                for t in &r.body {
                    let parts = match r.hi {
                        Bound::Truncate => term_series(&t.summand, r.lo),
                        // a finite range is summed exactly
                        Bound::Int(_) => {
                            let mut acc = [ExtScalar::zero(), ExtScalar::zero(), ExtScalar::zero()];
                            for i in r.lo..=hi {
                                let kind = expand_term(t, i)?;
                                acc[0] = acc[0].clone() + kind.total_trace();
                                if let SummandKind::FreeFactor { s, .. } = &kind {
                                    acc[1] = acc[1].clone() + s.clone();
                                }
                                if let SummandKind::Matrix { minimal_trace, .. } = &kind {
                                    acc[2] = acc[2].clone() + minimal_trace.square();
                                }
                            }
                            acc.map(|x| finite_series(&x))
                        }
                    };
                    for (k, p) in parts.into_iter().enumerate() {
                        series[k].push(p);
                    }
                }
            }
        }
    }
    let truncation = has_repeat.then(|| {
        let [trace, pos, neg] = series.map(SeriesClass::sum);
        Truncation { terms, limits: FamilyLimits { trace, rdim_positive: pos, rdim_negative: neg } }
    });
    Ok((out, truncation))
}

fn int_index(e: &IndexExpr, i: i64, span: Span, what: &str, max: usize) -> Result<usize, CliError> {
    let r = eval(e, i, span)?;
    match r.is_integer().then(|| r.to_integer().to_usize()).flatten() {
        Some(k) if (1..=max).contains(&k) => Ok(k - 1),
        _ => Err(resolve_err(span, format!("{what} index {r} is outside 1..{max}"))),
    }
}

fn expand_embedding(e: &EmbedDef, rows: usize, cols: usize, truncate: Option<u64>) -> Result<EmbeddingSpec, CliError> {
    let nonneg = |r: Rational, span: Span| {
        if r.is_negative() {
            Err(resolve_err(span, format!("allocation {r} is negative")))
        } else {
            Ok(r)
        }
    };
    match &e.body {
        EmbedBody::Dense(m) => {
            if m.len() != rows || m.iter().any(|r| r.len() != cols) {
                let shape = m.iter().map(|r| r.len().to_string()).collect::<Vec<_>>().join(", ");
                return Err(resolve_err(
                    e.span,
                    format!(
                        "`{}` has {rows} blocks and `{}` has {cols} summands, but the matrix has row lengths [{shape}]",
                        e.sub, e.target
                    ),
                ));
            }
            let alloc = m
                .iter()
                .map(|r| r.iter().map(|x| nonneg(eval(x, 0, e.span)?, e.span)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            Ok(EmbeddingSpec::new(alloc))
        }
        EmbedBody::Sparse(items) => {
            let mut cells: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
            let mut put = |c: &Cell, i: i64| -> Result<(), CliError> {
                let r = int_index(&c.row, i, c.span, "row", rows)?;
                let k = int_index(&c.col, i, c.span, "column", cols)?;
                let v = nonneg(eval(&c.value, i, c.span)?, c.span)?;
                if cells.insert((r, k), v).is_some() {
                    return Err(resolve_err(c.span, format!("entry ({}, {}) is given twice", r + 1, k + 1)));
                }
                Ok(())
            };
            for item in items {
                match item {
                    Item::Single(c) => put(c, 0)?,
                    Item::Repeat(rep) => {
                        let hi = bound(&rep.hi, truncate, rep.span)?;
                        for i in rep.lo..=hi {
                            for c in &rep.body {
                                put(c, i)?;
                            }
                        }
                    }
                }
            }
            let alloc = (0..rows)
                .map(|r| (0..cols).map(|k| cells.get(&(r, k)).cloned().unwrap_or_else(Rational::zero)).collect())
                .collect();
            Ok(EmbeddingSpec::new(alloc))
        }
    }
}

impl ProblemFile {
    /// Expands every template. `truncate` overrides `option truncate`.
    pub fn resolve(&self, truncate: Option<u64>) -> Result<Problem, CliError> {
        let n = truncate.or(self.options.truncate);
        let mut algebras = Vec::new();
        for def in &self.algebras {
            let (summands, truncation) = expand_def(def, n)?;
            algebras.push((def.name.clone(), AlgebraDesc { summands, truncation }));
        }
        let d = match &self.subalg {
            Some(def) => {
                let (summands, truncation) = expand_def(def, n)?;
                let blocks = summands
                    .into_iter()
                    .map(|s| match s.kind {
                        SummandKind::Matrix { size, minimal_trace: ExtScalar::Finite(u) } => {
                            Ok(DBlock { size, minimal_trace: u })
                        }
                        _ => Err(resolve_err(def.span, "subalgebra blocks must be C(t) or M(n; t) with finite t")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let mut d = AtomicSubalgebra::new(blocks);
                d.truncation = truncation;
                Some((def.name.clone(), d))
            }
            None => None,
        };
        let mut embeddings = Vec::new();
        for e in &self.embeds {
            let rows = d.as_ref().map_or(0, |(_, d)| d.len());
            let cols = algebras.iter().find(|(name, _)| *name == e.target).map_or(0, |(_, a)| a.len());
            embeddings.push((e.target.clone(), expand_embedding(e, rows, cols, n)?));
        }
        Ok(Problem { algebras, d, embeddings, depth: self.options.depth })
    }
}

/// Prints an expression with `var` as the index variable, in a form the
/// parser reads back to the same tree.
pub struct ExprDisplay<'a> {
    pub expr: &'a IndexExpr,
    pub var: &'a str,
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use IndexExpr::*;
        let sub = |e| ExprDisplay { expr: e, var: self.var };
        match self.expr {
            Num(r) if r.is_negative() => write!(f, "(-{})", -r),
            Num(r) if r.is_integer() => write!(f, "{r}"),
            Num(r) => write!(f, "({r})"),
            Var => f.write_str(self.var),
            Add(a, b) => write!(f, "({} + {})", sub(a), sub(b)),
            Sub(a, b) => write!(f, "({} - {})", sub(a), sub(b)),
            Mul(a, b) => write!(f, "({} * {})", sub(a), sub(b)),
            Div(a, b) => write!(f, "({} / {})", sub(a), sub(b)),
            Neg(a) => write!(f, "(-{})", sub(a)),
            Pow(a, b) => write!(f, "({}^{})", sub(a), sub(b)),
        }
    }
}

/// Top-level numbers are printed without the protective parentheses.
fn top(e: &IndexExpr, var: &str) -> String {
    match e {
        IndexExpr::Num(r) => r.to_string(),
        _ => {
            let s = ExprDisplay { expr: e, var }.to_string();
            s.strip_prefix('(').and_then(|s| s.strip_suffix(')')).map(str::to_string).unwrap_or(s)
        }
    }
}

fn value(v: &Value, var: &str) -> String {
    match v {
        Value::Inf => "inf".into(),
        Value::Expr(e) => top(e, var),
    }
}

fn term(t: &Term, var: &str) -> String {
    let body = match &t.summand {
        SummandTemplate::Matrix { size, trace } => format!("M({}; {})", value(size, var), value(trace, var)),
        SummandTemplate::Diffuse { trace } => format!("H({})", value(trace, var)),
        SummandTemplate::Free { s, t } => format!("FG({}; {})", value(s, var), value(t, var)),
        SummandTemplate::Block { trace } => format!("C({})", value(trace, var)),
    };
    match &t.label {
        Some(l) => format!("{l}: {body}"),
        None => body,
    }
}

fn bound_str(b: &Bound) -> String {
    match b {
        Bound::Int(n) => n.to_string(),
        Bound::Truncate => "N".into(),
    }
}

fn items<T>(xs: &[Item<T>], sep: &str, show: impl Fn(&T, &str) -> String) -> String {
    xs.iter()
        .map(|x| match x {
            Item::Single(t) => show(t, "i"),
            Item::Repeat(r) => {
                let body = r.body.iter().map(|t| show(t, &r.var)).collect::<Vec<_>>().join(sep);
                format!("repeat {}={}..{}: {body}", r.var, r.lo, bound_str(&r.hi))
            }
        })
        .collect::<Vec<_>>()
        .join(sep)
}

impl fmt::Display for ProblemFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = self.options.depth {
            writeln!(f, "option depth = {d}")?;
        }
        if let Some(n) = self.options.truncate {
            writeln!(f, "option truncate = {n}")?;
        }
        for a in &self.algebras {
            writeln!(f, "algebra {} = {}", a.name, items(&a.items, " (+) ", term))?;
        }
        if let Some(d) = &self.subalg {
            writeln!(f, "subalg {} = {}", d.name, items(&d.items, ", ", term))?;
        }
        for e in &self.embeds {
            let body = match &e.body {
                EmbedBody::Dense(m) => {
                    let rows: Vec<String> = m
                        .iter()
                        .map(|r| format!("[{}]", r.iter().map(|x| top(x, "i")).collect::<Vec<_>>().join(", ")))
                        .collect();
                    format!("[{}]", rows.join(", "))
                }
                EmbedBody::Sparse(cells) => {
                    let show =
                        |c: &Cell, v: &str| format!("({}, {}) = {}", top(&c.row, v), top(&c.col, v), top(&c.value, v));
                    format!("{{{}}}", items(cells, ", ", show))
                }
            };
            writeln!(f, "embed {} -> {} : {body}", e.sub, e.target)?;
        }
        Ok(())
    }
}
