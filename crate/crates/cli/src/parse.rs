//! Recursive-descent parser for problem files.
//!
//! ```text
//! algebra A = M(2; 1/4) (+) f: FG(1/32; 3/4)
//! subalg D = C(1/2), C(1/2)
//! embed D -> A : [[1/4, 1/4], [1/4, 1/4]]
//! subalg E = repeat i=1..N: C(1/2^i)
//! embed E -> B : {(1, 1) = 1, repeat i=2..N: (i, i) = 1/2^i}
//! option depth = 6
//! ```
//!
//! A `repeat` consumes the rest of its list. Statements end at a newline
//! unless a bracket is still open.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use vna_core::{IndexExpr, Rational};

use crate::error::CliError;
use crate::problem::{
    AlgebraDef, Bound, Cell, EmbedBody, EmbedDef, Item, Options, ProblemFile, Repeat, Span, SummandTemplate, Term,
    Value,
};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    /// `(+)`
    Oplus,
    Sym(char),
    Arrow,
    DotDot,
    Newline,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn err(span: Span, message: impl Into<String>) -> CliError {
    CliError::Parse { line: span.line, col: span.col, message: message.into() }
}

fn lex(src: &str) -> Result<Vec<Token>, CliError> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    for (ln, line) in src.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let span = Span { line: ln + 1, col: i + 1 };
            let rest: String = chars[i..].iter().take(3).collect();
            let mut push = |tok, len| {
                out.push(Token { tok, span });
                len
            };
            i += if c == '#' {
                break;
            } else if c.is_whitespace() {
                1
            } else if rest == "(+)" {
                push(Tok::Oplus, 3)
            } else if rest.starts_with("->") {
                push(Tok::Arrow, 2)
            } else if rest.starts_with("..") {
                push(Tok::DotDot, 2)
            } else if c.is_ascii_digit() {
                let len = chars[i..].iter().take_while(|c| c.is_ascii_digit()).count();
                let digits: String = chars[i..i + len].iter().collect();
                if chars.get(i + len) == Some(&'.') && chars.get(i + len + 1).is_some_and(char::is_ascii_digit) {
                    let tail = chars[i + len + 1..].iter().take_while(|c| c.is_ascii_digit()).count();
                    let text: String = chars[i..i + len + 1 + tail].iter().collect();
                    return Err(err(span, format!("malformed rational `{text}`: write it as p/q")));
                }
                push(Tok::Int(digits.parse().expect("ascii digits")), len)
            } else if c.is_alphabetic() || c == '_' {
                let len = chars[i..].iter().take_while(|c| c.is_alphanumeric() || **c == '_').count();
                push(Tok::Ident(chars[i..i + len].iter().collect()), len)
            } else if "()[]{};,=:+-*/^".contains(c) {
                match c {
                    '(' | '[' | '{' => depth += 1,
                    ')' | ']' | '}' => depth -= 1,
                    _ => {}
                }
                push(Tok::Sym(c), 1)
            } else {
                return Err(err(span, format!("unexpected character `{c}`")));
            };
        }
        if depth <= 0 {
            out.push(Token { tok: Tok::Newline, span: Span { line: ln + 1, col: chars.len() + 1 } });
        }
    }
    let end = Span { line: src.lines().count() + 1, col: 1 };
    out.push(Token { tok: Tok::End, span: end });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// The index variable of the enclosing `repeat`, if any.
    var: Option<String>,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Oplus => "`(+)`".into(),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::Arrow => "`->`".into(),
        Tok::DotDot => "`..`".into(),
        Tok::Newline => "end of line".into(),
        Tok::End => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), CliError> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(err(self.span(), format!("expected {}, found {}", describe(&t), describe(self.peek()))))
        }
    }

    fn sym(&mut self, c: char) -> Result<(), CliError> {
        self.expect(Tok::Sym(c))
    }

    fn ident(&mut self) -> Result<(String, Span), CliError> {
        let span = self.span();
        match self.bump().tok {
            Tok::Ident(s) => Ok((s, span)),
            other => Err(err(span, format!("expected a name, found {}", describe(&other)))),
        }
    }

    fn integer(&mut self) -> Result<i64, CliError> {
        let span = self.span();
        let neg = self.eat(&Tok::Sym('-'));
        match self.bump().tok {
            Tok::Int(n) => {
                let n = if neg { -n } else { n };
                n.to_i64().ok_or_else(|| err(span, "integer out of range"))
            }
            other => Err(err(span, format!("expected an integer, found {}", describe(&other)))),
        }
    }

    // expr := product (('+' | '-') product)*
    fn expr(&mut self) -> Result<IndexExpr, CliError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => IndexExpr::Add as fn(_, _) -> _,
                Tok::Sym('-') => IndexExpr::Sub,
                _ => return Ok(lhs),
            };
            let span = self.span();
            self.bump();
            let rhs = self.product()?;
            lhs = fold(op(Box::new(lhs), Box::new(rhs)), span)?;
        }
    }

    fn product(&mut self) -> Result<IndexExpr, CliError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => IndexExpr::Mul as fn(_, _) -> _,
                Tok::Sym('/') => IndexExpr::Div,
                _ => return Ok(lhs),
            };
            let span = self.span();
            self.bump();
            let rhs = self.unary()?;
            lhs = fold(op(Box::new(lhs), Box::new(rhs)), span)?;
        }
    }

    fn unary(&mut self) -> Result<IndexExpr, CliError> {
        let span = self.span();
        if self.eat(&Tok::Sym('-')) {
            let inner = self.unary()?;
            return fold(IndexExpr::Neg(Box::new(inner)), span);
        }
        self.power()
    }

    fn power(&mut self) -> Result<IndexExpr, CliError> {
        let base = self.atom()?;
        let span = self.span();
        if self.eat(&Tok::Sym('^')) {
            let exp = self.unary()?;
            return fold(IndexExpr::Pow(Box::new(base), Box::new(exp)), span);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<IndexExpr, CliError> {
        let span = self.span();
        match self.bump().tok {
            Tok::Int(n) => Ok(IndexExpr::Num(Rational::from_integer(n))),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.sym(')')?;
                Ok(e)
            }
            Tok::Ident(s) if Some(&s) == self.var.as_ref() => Ok(IndexExpr::Var),
            Tok::Ident(s) if s == "inf" => Err(err(span, "`inf` is not allowed inside an expression")),
            Tok::Ident(s) => Err(err(span, format!("unknown variable `{s}`"))),
            other => Err(err(span, format!("expected a number, found {}", describe(&other)))),
        }
    }

    fn value(&mut self) -> Result<(Value, Span), CliError> {
        let span = self.span();
        if matches!(self.peek(), Tok::Ident(s) if s == "inf") {
            self.bump();
            return Ok((Value::Inf, span));
        }
        Ok((Value::Expr(self.expr()?), span))
    }

    fn trace(&mut self) -> Result<Value, CliError> {
        let (v, span) = self.value()?;
        if let Value::Expr(IndexExpr::Num(r)) = &v {
            if r.is_negative() {
                return Err(err(span, format!("trace must be nonnegative, got {r}")));
            }
        }
        Ok(v)
    }

    fn size(&mut self) -> Result<Value, CliError> {
        let (v, span) = self.value()?;
        if let Value::Expr(IndexExpr::Num(r)) = &v {
            if !r.is_integer() || !r.is_positive() {
                return Err(err(span, "size must be positive or inf"));
            }
        }
        Ok(v)
    }

    fn term(&mut self, subalg: bool) -> Result<Term, CliError> {
        let span = self.span();
        let mut label = None;
        if let (Tok::Ident(l), Tok::Sym(':')) = (self.peek(), &self.toks[self.pos + 1].tok) {
            if self.var.is_some() {
                return Err(err(span, "summands inside `repeat` are labelled automatically"));
            }
            label = Some(l.clone());
            self.bump();
            self.bump();
        }
        let (head, hspan) = self.ident()?;
        self.sym('(')?;
        let summand = match head.as_str() {
            "M" => {
                let size = self.size()?;
                self.sym(';')?;
                SummandTemplate::Matrix { size, trace: self.trace()? }
            }
            "C" => SummandTemplate::Block { trace: self.trace()? },
            "H" if !subalg => SummandTemplate::Diffuse { trace: self.trace()? },
            "FG" if !subalg => {
                let s = self.trace()?;
                self.sym(';')?;
                SummandTemplate::Free { s, t: self.trace()? }
            }
            _ if subalg => return Err(err(hspan, format!("expected `C` or `M` in a subalgebra, found `{head}`"))),
            _ => return Err(err(hspan, format!("expected `M`, `C`, `H` or `FG`, found `{head}`"))),
        };
        self.sym(')')?;
        Ok(Term { label, summand, span })
    }

    /// `repeat i=lo..hi:` header; returns the repeat with an empty body.
    fn repeat_header<T>(&mut self) -> Result<Option<Repeat<T>>, CliError> {
        if !matches!(self.peek(), Tok::Ident(s) if s == "repeat") {
            return Ok(None);
        }
        let span = self.span();
        self.bump();
        if self.var.is_some() {
            return Err(err(span, "`repeat` cannot be nested"));
        }
        let (var, vspan) = self.ident()?;
        if var == "N" || var == "inf" {
            return Err(err(vspan, format!("`{var}` is reserved")));
        }
        self.sym('=')?;
        let lo = self.integer()?;
        self.expect(Tok::DotDot)?;
        let hi = match self.peek() {
            Tok::Ident(s) if s == "N" => {
                self.bump();
                Bound::Truncate
            }
            _ => Bound::Int(self.integer()?),
        };
        self.sym(':')?;
        Ok(Some(Repeat { var, lo, hi, body: Vec::new(), span }))
    }

    /// A separated list whose last element may be a `repeat`.
    fn list<T>(
        &mut self,
        sep: &Tok,
        done: impl Fn(&Tok) -> bool,
        mut one: impl FnMut(&mut Self) -> Result<T, CliError>,
    ) -> Result<Vec<Item<T>>, CliError> {
        let mut items = Vec::new();
        loop {
            if let Some(mut rep) = self.repeat_header()? {
                self.var = Some(rep.var.clone());
                loop {
                    rep.body.push(one(self)?);
                    if !self.eat(sep) {
                        break;
                    }
                }
                self.var = None;
                items.push(Item::Repeat(rep));
                return Ok(items);
            }
            items.push(Item::Single(one(self)?));
            if done(self.peek()) || !self.eat(sep) {
                return Ok(items);
            }
        }
    }

    fn end_of_statement(&mut self) -> Result<(), CliError> {
        match self.peek() {
            Tok::Newline | Tok::End => {
                self.bump();
                Ok(())
            }
            other => Err(err(self.span(), format!("expected end of line, found {}", describe(other)))),
        }
    }

    fn matrix(&mut self) -> Result<EmbedBody, CliError> {
        self.sym('[')?;
        let mut rows = Vec::new();
        while self.eat(&Tok::Sym('[')) {
            let mut row = Vec::new();
            if !self.eat(&Tok::Sym(']')) {
                loop {
                    row.push(self.expr()?);
                    if self.eat(&Tok::Sym(']')) {
                        break;
                    }
                    self.sym(',')?;
                }
            }
            rows.push(row);
            if !self.eat(&Tok::Sym(',')) {
                break;
            }
        }
        self.sym(']')?;
        Ok(EmbedBody::Dense(rows))
    }

    fn cells(&mut self) -> Result<EmbedBody, CliError> {
        self.sym('{')?;
        if self.eat(&Tok::Sym('}')) {
            return Ok(EmbedBody::Sparse(Vec::new()));
        }
        let cells = self.list(
            &Tok::Sym(','),
            |t| *t == Tok::Sym('}'),
            |p| {
                let span = p.span();
                p.sym('(')?;
                let row = p.expr()?;
                p.sym(',')?;
                let col = p.expr()?;
                p.sym(')')?;
                p.sym('=')?;
                Ok(Cell { row, col, value: p.expr()?, span })
            },
        )?;
        self.sym('}')?;
        Ok(EmbedBody::Sparse(cells))
    }
}

/// Folds constant subtrees to a single number.
fn fold(e: IndexExpr, span: Span) -> Result<IndexExpr, CliError> {
    use IndexExpr::*;
    let constant = |x: &IndexExpr| matches!(x, Num(_));
    let all_const = match &e {
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => constant(a) && constant(b),
        Neg(a) => constant(a),
        Num(_) | Var => false,
    };
    if !all_const {
        return Ok(e);
    }
    if let Div(_, b) = &e {
        if matches!(b.as_ref(), Num(r) if r.is_zero()) {
            return Err(err(span, "malformed rational: division by zero"));
        }
    }
    e.eval(0).map(Num).map_err(|x| err(span, format!("malformed rational: {x}")))
}

pub fn parse_problem(src: &str) -> Result<ProblemFile, CliError> {
    let mut p = Parser { toks: lex(src)?, pos: 0, var: None };
    let mut file = ProblemFile::default();
    let mut options = Options::default();
    loop {
        let span = p.span();
        match p.peek().clone() {
            Tok::End => break,
            Tok::Newline => {
                p.bump();
                continue;
            }
            Tok::Ident(kw) if kw == "algebra" || kw == "subalg" => {
                p.bump();
                let (name, nspan) = p.ident()?;
                if file.algebras.iter().any(|a| a.name == name) || file.subalg.as_ref().is_some_and(|d| d.name == name)
                {
                    return Err(err(nspan, format!("`{name}` is already defined")));
                }
                p.sym('=')?;
                let subalg = kw == "subalg";
                let sep = if subalg { Tok::Sym(',') } else { Tok::Oplus };
                let items = p.list(&sep, |t| matches!(t, Tok::Newline | Tok::End), |p| p.term(subalg))?;
                let def = AlgebraDef { name, items, span };
                if subalg {
                    if file.subalg.is_some() {
                        return Err(err(span, "only one `subalg` may be defined"));
                    }
                    file.subalg = Some(def);
                } else {
                    file.algebras.push(def);
                }
            }
            Tok::Ident(kw) if kw == "embed" => {
                p.bump();
                let (sub, sspan) = p.ident()?;
                if file.subalg.as_ref().map(|d| &d.name) != Some(&sub) {
                    return Err(err(sspan, format!("undefined subalgebra `{sub}`")));
                }
                p.expect(Tok::Arrow)?;
                let (target, tspan) = p.ident()?;
                if !file.algebras.iter().any(|a| a.name == target) {
                    return Err(err(tspan, format!("undefined algebra `{target}`")));
                }
                p.sym(':')?;
                let body = match p.peek() {
                    Tok::Sym('{') => p.cells()?,
                    _ => p.matrix()?,
                };
                file.embeds.push(EmbedDef { sub, target, body, span });
            }
            Tok::Ident(kw) if kw == "option" => {
                p.bump();
                let (key, kspan) = p.ident()?;
                p.sym('=')?;
                let vspan = p.span();
                let v = p.integer()?;
                let v = u32::try_from(v).map_err(|_| err(vspan, "option values must be nonnegative"))?;
                match key.as_str() {
                    "depth" => options.depth = Some(v),
                    "truncate" => options.truncate = Some(v.into()),
                    _ => return Err(err(kspan, format!("unknown option `{key}`"))),
                }
            }
            other => {
                return Err(err(
                    span,
                    format!("expected `algebra`, `subalg`, `embed` or `option`, found {}", describe(&other)),
                ))
            }
        }
        p.end_of_statement()?;
    }
    file.options = options;
    Ok(file)
}
