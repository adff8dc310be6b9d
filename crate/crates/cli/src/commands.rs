//! Command-line interface and dispatch.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;
use vna_core::{
    check_compression_consistency, compress, fdim, product, rdim, rdim_limit, validate_algebra, validate_embedding,
    AlgebraDesc, ExtScalar, LimitDim, ProductOptions, ProjectionSpec,
};

use crate::demo::{run_demo, DemoName};
use crate::error::CliError;
use crate::parse::parse_problem;
use crate::problem::Problem;
use crate::report::{product_json, product_text, rdim_with_limit, summand_records, Format, Report};

#[derive(Debug, Parser)]
#[command(name = "vna", version, about = "Exact amalgamated free products of hyperfinite von Neumann algebras")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Problem file.
    #[arg(long, global = true)]
    pub file: Option<PathBuf>,
    /// Chain depth budget.
    #[arg(long, global = true)]
    pub depth: Option<u32>,
    /// Length `N` of declared countable families.
    #[arg(long, global = true)]
    pub truncate: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every algebra, the subalgebra and the embeddings.
    Validate,
    /// Free dimension of a normalized algebra.
    Fdim { name: String },
    /// Regulated dimension, with the declared-family limit when truncated.
    Rdim { name: String },
    /// The product of the two embedded algebras.
    Product,
    /// Compress an algebra by a projection given as one trace per summand.
    Compress { name: String, allocation: String },
    /// Compare two computations of the corner at one summand of `A`.
    Consistency { label: String },
    /// Run a worked example.
    Demo {
        #[arg(value_enum)]
        which: DemoName,
    },
}

fn load(cli: &Cli) -> Result<Problem, CliError> {
    let path = cli.file.as_ref().ok_or_else(|| CliError::Usage("this command needs --file".into()))?;
    let src =
        std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    parse_problem(&src)?.resolve(cli.truncate)
}

fn options(cli: &Cli, p: Option<&Problem>) -> ProductOptions {
    let mut o = ProductOptions::default();
    if let Some(d) = cli.depth.or(p.and_then(|p| p.depth)) {
        o.depth_budget = d;
    }
    o
}

/// Looks up an algebra, or the subalgebra viewed as an algebra.
fn named(p: &Problem, name: &str) -> Result<(AlgebraDesc, Option<LimitDim>), CliError> {
    if let Some(a) = p.algebra(name) {
        return Ok((a.clone(), a.truncation.as_ref().map(|_| rdim_limit(a))));
    }
    match &p.d {
        Some((n, d)) if n == name => {
            let mut a = d.as_algebra(name);
            a.truncation = d.truncation.clone();
            let limit = a.truncation.as_ref().map(|_| rdim_limit(&a));
            Ok((a, limit))
        }
        _ => Err(CliError::Usage(format!("no algebra named `{name}`"))),
    }
}

fn validate(p: &Problem) -> Report {
    let mut text = String::new();
    let mut issues: Vec<String> = Vec::new();
    let mut algebras = Vec::new();
    for (name, a) in &p.algebras {
        let ok = match validate_algebra(a) {
            Ok(()) => true,
            Err(xs) => {
                issues.extend(xs.iter().map(|x| format!("{name}: {x}")));
                false
            }
        };
        let note = a
            .truncation
            .as_ref()
            .map(|t| format!(", first {} terms of a declared family", t.terms))
            .unwrap_or_default();
        writeln!(text, "algebra {name}: {} summands, total trace {}, rdim {}{note}", a.len(), a.total_trace(), rdim(a))
            .unwrap();
        algebras.push(
            json!({"name": name, "summands": a.len(), "total_trace": a.total_trace(), "rdim": rdim(a), "valid": ok}),
        );
    }
    if let Some((name, d)) = &p.d {
        writeln!(text, "subalg {name}: {} blocks, total trace {}, rdim {}", d.len(), d.total_trace(), d.rdim())
            .unwrap();
        for (target, e) in &p.embeddings {
            let a = p.algebra(target).expect("checked at parse time");
            if let Err(xs) = validate_embedding(d, a, e) {
                issues.extend(xs.iter().map(|x| format!("{name} -> {target}: {x}")));
            }
        }
    }
    for i in &issues {
        writeln!(text, "error: {i}").unwrap();
    }
    if issues.is_empty() {
        text.push_str("ok\n");
    }
    let json = json!({"valid": issues.is_empty(), "algebras": algebras, "issues": issues});
    Report { text, json, exit: if issues.is_empty() { 0 } else { 1 } }
}

fn parse_allocation(s: &str, n: usize) -> Result<ProjectionSpec, CliError> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    let alloc = inner
        .split(',')
        .map(|x| x.parse::<ExtScalar>().map_err(|e| CliError::Usage(format!("allocation entry `{}`: {e}", x.trim()))))
        .collect::<Result<Vec<_>, _>>()?;
    if alloc.len() != n {
        return Err(CliError::Usage(format!(
            "allocation has {} entries but the algebra has {n} summands",
            alloc.len()
        )));
    }
    Ok(ProjectionSpec::new(alloc))
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    if let Command::Demo { which } = &cli.command {
        let opts = options(cli, None);
        return Ok(run_demo(*which, cli.truncate, &opts)?.report());
    }
    let p = load(cli)?;
    let opts = options(cli, Some(&p));
    Ok(match &cli.command {
        Command::Validate => validate(&p),
        Command::Fdim { name } => {
            let (a, _) = named(&p, name)?;
            let v = fdim(&a)?;
            Report { text: format!("{v}\n"), json: json!({"name": name, "fdim": v}), exit: 0 }
        }
        Command::Rdim { name } => {
            let (a, limit) = named(&p, name)?;
            let v = rdim(&a);
            let text = format!("{}\n", rdim_with_limit(&v, limit.as_ref()));
            Report { text, json: json!({"name": name, "rdim": v, "family_limit": limit}), exit: 0 }
        }
        Command::Product => {
            let x = p.product_inputs()?;
            let r = product(x.a, x.b, x.d, x.ea, x.eb, &opts)?;
            let exit = if r.is_bounds_only() { 2 } else { 0 };
            Report { text: product_text(&r), json: product_json(&r), exit }
        }
        Command::Compress { name, allocation } => {
            let (a, _) = named(&p, name)?;
            let spec = parse_allocation(allocation, a.len())?;
            let c = compress(&a, &spec).map_err(|e| CliError::Invalid(e.to_string()))?;
            let text = format!("{c}\nrdim: {}\n", rdim(&c));
            Report { text, json: json!({"algebra": summand_records(&c), "rdim": rdim(&c)}), exit: 0 }
        }
        Command::Consistency { label } => {
            let x = p.product_inputs()?;
            let c = check_compression_consistency(x.a, x.b, x.d, x.ea, x.eb, label, &opts)?;
            let verdict = if c.matches { "match" } else { "mismatch" };
            let text = format!("direct:     {}\nvia corner: {}\n{verdict}\n", c.direct, c.via_corner);
            let json = json!({"label": label, "direct": summand_records(&c.direct), "via_corner": summand_records(&c.via_corner), "result": verdict});
            Report { text, json, exit: if c.matches { 0 } else { 1 } }
        }
        Command::Demo { .. } => unreachable!("handled above"),
    })
}

/// Parses arguments and runs one command. Returns the rendered output and
/// the process exit code.
pub fn run<I, T>(args: I) -> (String, i32)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            return (e.to_string(), code);
        }
    };
    match execute(&cli) {
        Ok(r) => (r.render(cli.format), r.exit),
        Err(e) => {
            let out = match cli.format {
                Format::Text => format!("error: {e}\n"),
                Format::Json => {
                    serde_json::to_string_pretty(&json!({"error": e.to_string(), "exit": e.exit_code()}))
                        .expect("serializes")
                        + "\n"
                }
            };
            (out, e.exit_code())
        }
    }
}
