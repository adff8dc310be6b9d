//! Text and JSON renderings of command results.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value as Json};
use vna_core::product::LineageSummary;
use vna_core::{AlgebraDesc, ConvergenceStatus, DimValue, ProductResult, Size, SummandKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Rendered output of one command.
#[derive(Debug, Clone)]
pub struct Report {
    pub text: String,
    pub json: Json,
    pub exit: i32,
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.text.clone(),
            Format::Json => serde_json::to_string_pretty(&self.json).expect("reports serialize") + "\n",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummandRecord {
    pub label: String,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimal_trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<String>,
    pub trace: String,
}

pub fn summand_records(a: &AlgebraDesc) -> Vec<SummandRecord> {
    a.summands
        .iter()
        .map(|x| {
            let mut r = SummandRecord {
                label: x.label.clone(),
                kind: "",
                size: None,
                minimal_trace: None,
                s: None,
                t: None,
                trace: x.total_trace().to_string(),
            };
            match &x.kind {
                SummandKind::Matrix { size, minimal_trace } => {
                    r.kind = "matrix";
                    r.size = Some(size.to_string());
                    r.minimal_trace = Some(minimal_trace.to_string());
                }
                SummandKind::DiffuseHyperfinite { .. } => r.kind = "diffuse_hyperfinite",
                SummandKind::FreeFactor { s, t } => {
                    r.kind = "free_factor";
                    r.s = Some(s.to_string());
                    r.t = Some(t.to_string());
                }
            }
            r
        })
        .collect()
}

/// `L(F_r)` for a finite-trace free group factor, else the `FG(s; t)` form.
pub fn describe_kind(k: &SummandKind) -> String {
    match (k, k.free_group_parameter()) {
        (SummandKind::FreeFactor { .. }, Some(r)) => format!("{k} = L(F_{r}) amplified to trace {}", k.total_trace()),
        (SummandKind::Matrix { size: Size::Infinite, .. }, _) => format!("{k} = B(H)"),
        _ => k.to_string(),
    }
}

fn lineage_note(l: &LineageSummary) -> String {
    if l.rewrites == 0 {
        return "unchanged".into();
    }
    let rules: Vec<String> = l
        .rules
        .iter()
        .map(|(r, n)| {
            format!(
                "{} {n}",
                serde_json::to_value(r).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
            )
        })
        .collect();
    let mut s = format!("{} rewrites ({})", l.rewrites, rules.join(", "));
    if l.substandard {
        s.push_str(", substandard");
    }
    s
}

pub fn product_json(r: &ProductResult) -> Json {
    json!({
        "algebra": summand_records(&r.algebra),
        "rdim_structural": r.rdim_structural,
        "rdim_formula": r.rdim_formula,
        "additivity_check": r.additivity_check,
        "lineage": r.lineage,
        "convergence": r.convergence,
        "method": r.method,
    })
}

pub fn product_text(r: &ProductResult) -> String {
    let mut out = String::new();
    writeln!(out, "A *_D B = {}", r.algebra).unwrap();
    let width = r.algebra.summands.iter().map(|s| s.kind.to_string().len()).max().unwrap_or(0);
    for (s, l) in r.algebra.summands.iter().zip(&r.lineage) {
        writeln!(out, "  {:<6} {:<width$}  {}", s.label, s.kind.to_string(), lineage_note(l)).unwrap();
    }
    writeln!(out, "rdim structural:  {}", r.rdim_structural).unwrap();
    writeln!(out, "rdim formula:     {}", r.rdim_formula).unwrap();
    writeln!(out, "additivity:       {}", json_string(&r.additivity_check)).unwrap();
    let c = &r.convergence;
    let status = match c.status {
        ConvergenceStatus::Exact => "exact".to_string(),
        ConvergenceStatus::Stable => format!("stable at chain depth {}", c.depth),
        ConvergenceStatus::BoundsOnly => format!("bounds only (depth budget {} exhausted)", c.depth),
    };
    write!(out, "convergence:      {status}").unwrap();
    if let Some(l) = &c.family_limit {
        write!(out, "; declared family rdim in the limit: {l}").unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "method:           {}", method_str(r)).unwrap();
    out
}

/// A serialized value as bare text, without quotes for strings.
pub fn json_string<T: Serialize>(x: &T) -> String {
    match serde_json::to_value(x) {
        Ok(Json::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}

pub fn method_str(r: &ProductResult) -> String {
    match r.method {
        vna_core::Method::General => "general".into(),
        vna_core::Method::ClosedForm(rule) => format!("closed form ({})", json_string(&rule).replace('_', "-")),
    }
}

/// `rdim` with the declared-family limit, as `0 (declared family: undef in limit)`.
pub fn rdim_with_limit(value: &DimValue, limit: Option<&vna_core::LimitDim>) -> String {
    match limit {
        Some(l) => format!("{value} (declared family: {l} in limit)"),
        None => value.to_string(),
    }
}
