use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use vna_cli::{parse_problem, run};

fn write_problem(src: &str) -> PathBuf {
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let path = std::env::temp_dir().join(format!(
        "vna-cli-{}-{}.vna",
        std::process::id(),
        NEXT.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&path, src).unwrap();
    path
}

fn vna(args: &[&str]) -> (String, i32) {
    run(std::iter::once("vna").chain(args.iter().copied()))
}

fn with_file(src: &str, args: &[&str]) -> (String, i32) {
    let path = write_problem(src);
    let p = path.to_str().unwrap();
    let out = vna(&[args, &["--file", p]].concat());
    std::fs::remove_file(&path).ok();
    out
}

const RR: &str = "# two diffuse factors over two half blocks\n\
                  subalg D = C(1/2), C(1/2)\n\
                  algebra A = H(1)\n\
                  algebra B = H(1)\n\
                  embed D -> A : [[1/2], [1/2]]\n\
                  embed D -> B : [[1/2], [1/2]]\n";

const FROZEN: &str = "subalg D = C(1/2), C(1/2)\n\
                      algebra A = H(1/2) (+) FG(1/4; 1/2)\n\
                      algebra B = FG(1; 1)\n\
                      embed D -> A : [[1/2, 0], [0, 1/2]]\n\
                      embed D -> B : [[1/2], [1/2]]\n";

#[test]
fn every_demo_passes() {
    for name in ["pi26", "undef-rdim", "rr", "ff", "finf"] {
        let (out, code) = vna(&["demo", name]);
        assert_eq!(code, 0, "demo {name}:\n{out}");
        assert!(!out.contains("FAIL"), "demo {name}:\n{out}");
    }
}

#[test]
fn pi26_prints_exact_partial_sum_and_monotone_note() {
    let (out, code) = vna(&["demo", "pi26", "--truncate", "9"]);
    assert_eq!(code, 0);
    assert!(out.contains("FG(9778141/6350400; 7129/2520)"), "{out}");
    assert!(out.contains("monotone ↑ π²/6"), "{out}");
}

#[test]
fn rr_demo_names_the_closed_form() {
    let (out, _) = vna(&["demo", "rr"]);
    assert!(out.contains("FG(1/2; 1)"), "{out}");
    assert!(out.contains("matches the diffuse-diffuse closed form"), "{out}");
}

#[test]
fn undefined_family_rdim_is_flagged() {
    let (out, code) = vna(&["demo", "undef-rdim"]);
    assert_eq!(code, 0);
    assert!(out.contains("0 (declared family: undef in limit)"), "{out}");
}

#[test]
fn product_json_has_the_documented_fields() {
    let (out, code) = with_file(RR, &["product", "--format", "json"]);
    assert_eq!(code, 0, "{out}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for field in ["algebra", "rdim_structural", "rdim_formula", "additivity_check", "lineage", "convergence"] {
        assert!(v.get(field).is_some(), "missing {field} in {out}");
    }
    assert_eq!(v["algebra"][0]["kind"], "free_factor");
    assert_eq!(v["algebra"][0]["s"], "1/2");
    assert_eq!(v["algebra"][0]["t"], "1");
    assert_eq!(v["additivity_check"], "match");
}

#[test]
fn json_reports_are_byte_identical() {
    for args in [
        &["product", "--format", "json"][..],
        &["validate", "--format", "json"],
        &["consistency", "A2", "--format", "json"],
    ] {
        let first = with_file(FROZEN, args);
        let second = with_file(FROZEN, args);
        assert_eq!(first, second);
    }
    assert_eq!(vna(&["demo", "pi26", "--format", "json"]), vna(&["demo", "pi26", "--format", "json"]));
}

#[test]
fn frozen_factor_product_and_consistency() {
    let (out, code) = with_file(FROZEN, &["product"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("A *_D B = FG(7/4; 1)"), "{out}");
    let (out, code) = with_file(FROZEN, &["consistency", "A2"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.ends_with("match\n"), "{out}");
}

#[test]
fn dimension_commands() {
    let src = "algebra A = M(2; 1/8) (+) FG(1/32; 3/4)\nalgebra S = M(2; 1/4) (+) H(1)\n";
    assert_eq!(with_file(src, &["rdim", "A"]), ("1/64\n".into(), 0));
    assert_eq!(with_file(src, &["fdim", "A"]), ("65/64\n".into(), 0));
    let (out, code) = with_file(src, &["fdim", "S"]);
    assert_eq!(code, 1, "{out}");
    let (out, code) = with_file(src, &["compress", "A", "[1/8, 3/8]"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("M(1; 1/8) (+) FG(1/32; 3/8)"), "{out}");
}

#[test]
fn validate_reports_bad_embeddings() {
    let good = "subalg D = C(1)\nalgebra A = M(2; 1/2)\nembed D -> A : [[1]]\n";
    assert_eq!(with_file(good, &["validate"]).1, 0);
    let bad = "subalg D = C(1)\nalgebra A = M(2; 1/2)\nembed D -> A : [[3/4]]\n";
    let (out, code) = with_file(bad, &["validate"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("error:"), "{out}");
}

#[test]
fn parse_errors_carry_positions_and_exit_one() {
    let (out, code) = with_file("algebra X = M(0; 1)\n", &["validate"]);
    assert_eq!(code, 1);
    assert!(out.contains("1:15") && out.contains("size must be positive or inf"), "{out}");
    let (out, code) = with_file("subalg D = C(1)\nembed D -> Q : [[1]]\n", &["validate"]);
    assert_eq!(code, 1);
    assert!(out.contains("2:"), "{out}");
}

#[test]
fn missing_file_and_unknown_names_are_errors() {
    assert_eq!(vna(&["product"]).1, 1);
    assert_eq!(vna(&["product", "--file", "/nonexistent/problem.vna"]).1, 1);
    assert_eq!(with_file(RR, &["rdim", "Z"]).1, 1);
    assert_eq!(vna(&["demo", "nope"]).1, 1);
}

#[test]
fn exhausted_depth_budget_exits_two() {
    let src = "subalg D = C(1/2), C(1/2)\nalgebra A = H(1)\nalgebra B = M(2; 1/2)\n\
               embed D -> A : [[1/2], [1/2]]\nembed D -> B : [[1/2], [1/2]]\n";
    let (out, code) = with_file(src, &["product", "--depth", "1"]);
    assert_eq!(code, 2, "{out}");
    assert!(out.contains("bounds only"), "{out}");
}

fn term() -> impl Strategy<Value = String> {
    let r = (0i64..9, 1i64..9).prop_map(|(a, b)| format!("{a}/{b}"));
    prop_oneof![
        (1u32..5, r.clone()).prop_map(|(n, t)| format!("M({n}; {t})")),
        Just("M(inf; 1/2)".to_string()),
        r.clone().prop_map(|t| format!("H({t})")),
        (r.clone(), r.clone()).prop_map(|(s, t)| format!("FG({s}; {t})")),
        Just("H(inf)".to_string()),
    ]
}

/// A summand list; a `repeat` may only close it.
fn terms() -> impl Strategy<Value = String> {
    (prop::collection::vec(term(), 1..4), prop::option::of(1i64..4)).prop_map(|(ts, k)| {
        let mut ts = ts;
        if let Some(k) = k {
            ts.push(format!("repeat i=1..{k}: FG(i/{}; 1/2^i)", k + 1));
        }
        ts.join(" (+) ")
    })
}

fn problem_text() -> impl Strategy<Value = String> {
    (prop::collection::vec(terms(), 1..3), prop::collection::vec((1i64..5, 2i64..9), 1..4), prop::option::of(1u32..9))
        .prop_map(|(algebras, d, depth)| {
            let mut src = String::new();
            if let Some(k) = depth {
                src.push_str(&format!("option depth = {k}\n"));
            }
            let blocks: Vec<String> = d.iter().map(|(a, b)| format!("C({a}/{b})")).collect();
            src.push_str(&format!("subalg D = {}\n", blocks.join(", ")));
            for (i, terms) in algebras.iter().enumerate() {
                src.push_str(&format!("algebra A{i} = {terms}\n"));
            }
            let rows: Vec<String> = d
                .iter()
                .map(|_| format!("[{}]", vec!["0"; algebras[0].matches("(+)").count() + 1].join(", ")))
                .collect();
            src.push_str(&format!("embed D -> A0 : [{}]\n", rows.join(", ")));
            src
        })
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(src in problem_text()) {
        let parsed = parse_problem(&src).unwrap();
        let again = parse_problem(&parsed.to_string()).unwrap();
        prop_assert_eq!(&again, &parsed);
        prop_assert_eq!(again.to_string(), parsed.to_string());
    }
}
