//! Self-contained worked examples. Each one builds a problem file, runs it,
//! and checks the answer against an independently computed value.

use std::fmt::Write as _;

use serde_json::json;
use vna_core::{
    partial_sum, product, product_general, rat, ConvergenceStatus, DimValue, ExtScalar, IndexExpr, LimitDim,
    ProductOptions, ProductResult, Rational, SummandKind,
};

use crate::error::CliError;
use crate::parse::parse_problem;
use crate::problem::Problem;
use crate::report::{describe_kind, product_json, product_text, rdim_with_limit, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DemoName {
    /// Harmonic chain of diffuse summands; s climbs towards pi^2/6.
    Pi26,
    /// Paired halves over unit blocks; the family has undefined rdim.
    UndefRdim,
    /// Two diffuse factors over two half-trace blocks.
    Rr,
    /// Free group factors against each other and against a diffuse factor.
    Ff,
    /// Infinitely many free group factor summands against one.
    Finf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Check {
        let (expected, actual) = (expected.to_string(), actual.to_string());
        Check { name: name.into(), pass: expected == actual, expected, actual }
    }
}

pub struct DemoOutcome {
    pub name: &'static str,
    pub input: String,
    pub lines: Vec<String>,
    pub checks: Vec<Check>,
    pub result: Option<ProductResult>,
}

impl DemoOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn report(&self) -> Report {
        let mut text = format!("demo {}\n\ninput:\n", self.name);
        for l in self.input.lines() {
            writeln!(text, "  {l}").unwrap();
        }
        if let Some(r) = &self.result {
            text.push('\n');
            text.push_str(&product_text(r));
        }
        text.push('\n');
        for l in &self.lines {
            writeln!(text, "{l}").unwrap();
        }
        for c in &self.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            writeln!(text, "[{mark}] {}: expected {}, got {}", c.name, c.expected, c.actual).unwrap();
        }
        let checks: Vec<_> = self
            .checks
            .iter()
            .map(|c| json!({"name": c.name, "expected": c.expected, "actual": c.actual, "pass": c.pass}))
            .collect();
        let mut j = json!({"demo": self.name, "input": self.input, "notes": self.lines, "checks": checks, "pass": self.passed()});
        if let Some(r) = &self.result {
            j.as_object_mut().unwrap().extend(product_json(r).as_object().unwrap().clone());
        }
        Report { text, json: j, exit: if self.passed() { 0 } else { 1 } }
    }
}

pub fn load(src: &str, truncate: Option<u64>) -> Problem {
    parse_problem(src).and_then(|f| f.resolve(truncate)).expect("demo inputs are well formed")
}

fn run_product(p: &Problem, opts: &ProductOptions) -> Result<ProductResult, CliError> {
    let x = p.product_inputs()?;
    Ok(product(x.a, x.b, x.d, x.ea, x.eb, opts)?)
}

fn sum_text(ks: &[usize]) -> String {
    ks.iter().map(|k| format!("1/{k}")).collect::<Vec<_>>().join(" + ")
}

fn grouped_lines(name: &str, groups: &[Vec<usize>]) -> (String, String) {
    let algebra = groups.iter().map(|g| format!("H({})", sum_text(g))).collect::<Vec<_>>().join(" (+) ");
    let cells = groups
        .iter()
        .enumerate()
        .flat_map(|(j, g)| g.iter().map(move |k| format!("({k}, {}) = 1/{k}", j + 1)))
        .collect::<Vec<_>>()
        .join(", ");
    (format!("algebra {name} = {algebra}"), format!("embed D -> {name} : {{{cells}}}"))
}

/// `D = C(1) + C(1/2) + ... + C(1/n)`. `A` is diffuse over the blocks
/// `{1,2}, {3,4}, ...` and `B` over `{1}, {2,3}, {4,5}, ...`, so the product
/// is connected.
pub fn pi26_problem(n: usize) -> String {
    let a: Vec<Vec<usize>> = (1..=n).step_by(2).map(|k| (k..=(k + 1).min(n)).collect()).collect();
    let mut b = vec![vec![1]];
    b.extend((2..=n).step_by(2).map(|k| (k..=(k + 1).min(n)).collect::<Vec<_>>()));
    let (la, ea) = grouped_lines("A", &a);
    let (lb, eb) = grouped_lines("B", &b);
    format!("option truncate = {n}\nsubalg D = repeat i=1..N: C(1/i)\n{la}\n{lb}\n{ea}\n{eb}\n")
}

/// `n` unit blocks, each split into two halves on both sides.
pub fn undef_problem(n: usize) -> String {
    let halves = "repeat i=1..N: M(1; 1/2) (+) M(1; 1/2)";
    let cells = "{repeat i=1..N: (i, 2*i - 1) = 1/2, (i, 2*i) = 1/2}";
    format!(
        "option truncate = {n}\nsubalg D = repeat i=1..N: C(1)\nalgebra A = {halves}\nalgebra B = {halves}\n\
         embed D -> A : {cells}\nembed D -> B : {cells}\n"
    )
}

pub const RR_PROBLEM: &str = "subalg D = C(1/2), C(1/2)\nalgebra A = H(1)\nalgebra B = H(1)\n\
                              embed D -> A : [[1/2], [1/2]]\nembed D -> B : [[1/2], [1/2]]\n";

pub const FF_PROBLEM: &str = "subalg D = C(1)\nalgebra A = FG(1; 1)\nalgebra B = FG(2; 1)\n\
                              embed D -> A : [[1]]\nembed D -> B : [[1]]\n";

pub const FH_PROBLEM: &str = "subalg D = C(1)\nalgebra A = FG(1; 1)\nalgebra B = H(1)\n\
                              embed D -> A : [[1]]\nembed D -> B : [[1]]\n";

/// `A = FG(2^n; 2^(1-n)) + FG(2^i; 2^-i)` for `i < n`, against `B = FG(2; 1)`
/// over the scalars. The first summand carries the tail of the family's trace.
pub fn finf_problem(n: usize) -> String {
    let k = n.max(2) - 1;
    format!(
        "option truncate = {k}\nsubalg D = C(1)\nalgebra A = FG(2^{n}; 1/2^{k}) (+) repeat i=1..N: FG(2^i; 1/2^i)\n\
         algebra B = FG(2; 1)\nembed D -> A : {{(1, 1) = 1/2^{k}, repeat i=1..N: (1, i + 1) = 1/2^i}}\n\
         embed D -> B : [[1]]\n"
    )
}

fn one_factor(r: &ProductResult) -> Option<(ExtScalar, ExtScalar)> {
    match r.algebra.summands.as_slice() {
        [x] => match &x.kind {
            SummandKind::FreeFactor { s, t } => Some((s.clone(), t.clone())),
            _ => None,
        },
        _ => None,
    }
}

fn shape_str(r: &ProductResult) -> String {
    r.algebra.to_string()
}

fn inv_square() -> IndexExpr {
    let i = || Box::new(IndexExpr::Var);
    IndexExpr::Div(Box::new(IndexExpr::Num(rat(1, 1))), Box::new(IndexExpr::Mul(i(), i())))
}

fn pi26(n: usize, opts: &ProductOptions) -> Result<DemoOutcome, CliError> {
    let n = n.max(1);
    let input = pi26_problem(n);
    let mut checks = Vec::new();
    let mut lines = Vec::new();
    let mut sizes: Vec<usize> = vec![n.div_ceil(3), (2 * n).div_ceil(3), n];
    sizes.dedup();
    let mut previous: Option<Rational> = None;
    let mut result = None;
    for m in sizes {
        let r = run_product(&load(&pi26_problem(m), None), opts)?;
        let want_s = partial_sum(&inv_square(), 1, m as i64).expect("no zero index");
        let want_t: Rational = (1..=m as i64).map(|i| rat(1, i)).sum();
        let want = SummandKind::FreeFactor { s: want_s.clone().into(), t: want_t.into() };
        checks.push(Check::new(format!("N = {m}: one factor with s = sum of 1/i^2"), &want, shape_str(&r)));
        if let (Some(p), Some((ExtScalar::Finite(s), _))) = (&previous, one_factor(&r)) {
            checks.push(Check::new(format!("N = {m}: s increases"), "true", (&s > p).to_string()));
        }
        lines.push(format!("N = {m}: s = {want_s} (monotone \u{2191} \u{3c0}\u{b2}/6)"));
        previous = Some(want_s);
        result = Some(r);
    }
    let r = result.expect("at least one truncation");
    checks.push(Check::new("additivity", "match", crate::report::json_string(&r.additivity_check)));
    lines.push(
        "the full family gives FG(pi^2/6; inf): s is an irrational limit, reported through its partial sums".into(),
    );
    Ok(DemoOutcome { name: "pi26", input, lines, checks, result: Some(r) })
}

fn undef(n: usize, opts: &ProductOptions) -> Result<DemoOutcome, CliError> {
    let n = n.max(1);
    let input = undef_problem(n);
    let r = run_product(&load(&input, None), opts)?;
    let want = vec!["H(1)"; n].join(" (+) ");
    let limit = r.convergence.family_limit.clone();
    let checks = vec![
        Check::new(format!("{n} diffuse summands of trace 1"), want, shape_str(&r)),
        Check::new("rdim structural", "0", &r.rdim_structural),
        Check::new("declared family rdim", "undef", limit.as_ref().map_or("none".into(), |l| l.to_string())),
        Check::new("additivity at the truncation", "match", crate::report::json_string(&r.additivity_check)),
    ];
    let lines = vec![format!("rdim: {}", rdim_with_limit(&r.rdim_structural, limit.as_ref()))];
    Ok(DemoOutcome { name: "undef-rdim", input, lines, checks, result: Some(r) })
}

fn rr(opts: &ProductOptions) -> Result<DemoOutcome, CliError> {
    let p = load(RR_PROBLEM, None);
    let closed = run_product(&p, opts)?;
    let x = p.product_inputs()?;
    let chains = product_general(x.a, x.b, x.d, x.ea, x.eb, &ProductOptions { closed_forms: false, ..opts.clone() })?;
    let want = SummandKind::FreeFactor { s: ExtScalar::from_ratio(1, 2), t: ExtScalar::one() };
    let mut checks = vec![
        Check::new("closed form", &want, shape_str(&closed)),
        Check::new("dyadic chains", &want, shape_str(&chains)),
        Check::new(
            "chains settle by depth 4",
            "true",
            (chains.convergence.status == ConvergenceStatus::Stable && chains.convergence.depth <= 4).to_string(),
        ),
    ];
    checks.push(Check::new("additivity", "match", crate::report::json_string(&closed.additivity_check)));
    let mut lines = vec![format!(
        "{} matches the diffuse-diffuse closed form: 1 + (1/2)^2 + (1/2)^2 = 3/2 generators",
        describe_kind(&want)
    )];
    lines.push(format!("chain approximation settled at depth {}", chains.convergence.depth));
    Ok(DemoOutcome { name: "rr", input: RR_PROBLEM.into(), lines, checks, result: Some(closed) })
}

fn ff(opts: &ProductOptions) -> Result<DemoOutcome, CliError> {
    let r = run_product(&load(FF_PROBLEM, None), opts)?;
    let p = load(FF_PROBLEM, None);
    let x = p.product_inputs()?;
    let general = product_general(x.a, x.b, x.d, x.ea, x.eb, &ProductOptions { closed_forms: false, ..opts.clone() })?;
    let fh = run_product(&load(FH_PROBLEM, None), opts)?;
    let want = SummandKind::FreeFactor { s: ExtScalar::from_ratio(4, 1), t: ExtScalar::one() };
    let want_fh = SummandKind::FreeFactor { s: ExtScalar::from_ratio(2, 1), t: ExtScalar::one() };
    let checks = vec![
        Check::new("L(F_2) * L(F_3)", &want, shape_str(&r)),
        Check::new("general engine agrees", &want, shape_str(&general)),
        Check::new("L(F_2) * R", &want_fh, shape_str(&fh)),
    ];
    let lines = vec![
        format!("{} matches the free-free closed form", describe_kind(&want)),
        format!("{} matches the free-hyperfinite closed form", describe_kind(&want_fh)),
    ];
    Ok(DemoOutcome {
        name: "ff",
        input: format!("{FF_PROBLEM}\n# second product\n{FH_PROBLEM}"),
        lines,
        checks,
        result: Some(r),
    })
}

fn finf(n: usize, opts: &ProductOptions) -> Result<DemoOutcome, CliError> {
    let n = n.max(2);
    let input = finf_problem(n);
    let r = run_product(&load(&input, None), opts)?;
    let s = num_traits::pow(rat(2, 1), n + 1) + rat(1, 1);
    let want = SummandKind::FreeFactor { s: s.into(), t: ExtScalar::one() };
    let limit = r.convergence.family_limit.clone();
    let checks = vec![
        Check::new(format!("{n} summands: s = 2^{} + 1", n + 1), &want, shape_str(&r)),
        Check::new(
            "declared family rdim",
            LimitDim::Exact(DimValue::PosInf),
            limit.as_ref().map_or("none".into(), |l| l.to_string()),
        ),
        Check::new("additivity", "match", crate::report::json_string(&r.additivity_check)),
    ];
    let lines = vec!["s grows without bound along the family, so the full product is FG(inf; 1)".into()];
    Ok(DemoOutcome { name: "finf", input, lines, checks, result: Some(r) })
}

/// Runs a demo. `truncate` sets the family length for the demos that have one.
pub fn run_demo(which: DemoName, truncate: Option<u64>, opts: &ProductOptions) -> Result<DemoOutcome, CliError> {
    let n = |default: usize| truncate.map_or(default, |t| t as usize);
    match which {
        DemoName::Pi26 => pi26(n(9), opts),
        DemoName::UndefRdim => undef(n(3), opts),
        DemoName::Rr => rr(opts),
        DemoName::Ff => ff(opts),
        DemoName::Finf => finf(n(4), opts),
    }
}
