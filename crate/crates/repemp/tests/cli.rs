use std::path::{Path, PathBuf};

use repemp::cli::{main_with, EXIT_CAP, EXIT_OK, EXIT_TASK, EXIT_VALIDATION};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped(name: &str) -> String {
    scenarios().join(name).display().to_string()
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_with(std::iter::once("repemp").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const BASE: &str = r#"
[scenario]
name = "base"

[programs]
source = """
up(n: pitch, steps: steps) = step(up, n, steps)
down(n: pitch, steps: steps) = step(down, n, steps)
repeat(pattern: pattern, times: count) = loop(times, pattern)
staccato(m: pattern) = stretch(m, 1, 2)
style() = [C4]
"""

[libraries]
Z = ["up", "down"]

[probes]
pitch = ["C4"]
steps = [1, 2]
pattern = ["[C4]"]
count = [2]
direction = ["up", "down"]

[[operations.variants.up]]
crossover = "staccato"

[[operations.variants.up]]
set = "steps"
value = 1

[[operations.variants.down]]
set = "steps"
value = 1

[[operations.variants.down]]
crossover = "staccato"

[[operations.variants.repeat]]
outcomes = [{ program = "style", p = 1.0 }]

[[operations.abstractions]]
a = "up"
b = "down"
name = "move"

[[tasks]]
name = "t"
target = "[C4, D4]"
candidates = ["repeat"]

[run]
initial = "Z"
"#;

fn write(dir: &tempfile::TempDir, text: &str) -> String {
    let p = dir.path().join("s.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn validate(text: &str) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, text);
    let (code, _, err) = cli(&["validate", "--scenario", &path]);
    (code, err)
}

#[test]
fn base_scenario_validates() {
    let (code, err) = validate(BASE);
    assert_eq!(code, EXIT_OK, "{err}");
}

#[test]
fn every_dangling_reference_class_exits_2() {
    let cases: &[(&str, &str, &str)] = &[
        ("library member", r#"Z = ["up", "down"]"#, r#"Z = ["up", "sideways"]"#),
        ("crossover partner", r#"crossover = "staccato""#, r#"crossover = "legato""#),
        ("variant owner", "[[operations.variants.up]]", "[[operations.variants.left]]"),
        ("set parameter", r#"set = "steps""#, r#"set = "stride""#),
        ("outcome program", r#"program = "style""#, r#"program = "ghost""#),
        ("abstraction program", r#"b = "down""#, r#"b = "sideways""#),
        ("task candidate", r#"candidates = ["repeat"]"#, r#"candidates = ["ghost"]"#),
        ("initial library", r#"initial = "Z""#, r#"initial = "Y""#),
        ("callee in body", "loop(times, pattern)", "cycle(times, pattern)"),
        ("probe type", "count = [2]", "count = [2]\ntempo = [1]"),
        ("probe coverage", "count = [2]\n", ""),
        ("derived program coverage", "direction = [\"up\", \"down\"]\n", ""),
        ("chord name", "count = [2]", "count = [2]\nchord = [\"lydian\"]"),
    ];
    for (class, from, to) in cases {
        assert!(BASE.contains(from), "{class}: fixture text missing");
        let (code, err) = validate(&BASE.replacen(from, to, 1));
        assert_eq!(code, EXIT_VALIDATION, "{class}: {err}");
        assert!(err.contains("problem"), "{class}: {err}");
    }
}

#[test]
fn all_problems_listed_together() {
    let bad = BASE.replace(r#"Z = ["up", "down"]"#, r#"Z = ["nope"]"#).replace(r#"initial = "Z""#, r#"initial = "Y""#);
    let (code, err) = validate(&bad);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(err.contains("2 problem(s)") && err.contains("nope") && err.contains("`Y`"), "{err}");
}

#[test]
fn bad_probabilities_and_budgets() {
    let (code, err) = validate(&BASE.replace("p = 1.0", "p = 0.4"));
    assert_eq!(code, EXIT_VALIDATION);
    assert!(err.contains("sum to 0.4"), "{err}");
    let (code, _) = validate(&BASE.replace("candidates = [\"repeat\"]", "cycles = 0"));
    assert_eq!(code, EXIT_VALIDATION);
    let (code, _) = validate(&BASE.replace("name = \"base\"", "name = \"base\"\nestimator = \"exact\""));
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn malformed_toml_exits_2() {
    let (code, _) = validate("[scenario\nname=1");
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn eval_golden_numbers() {
    let s33 = shipped("s33.toml");
    let (code, out, _) = cli(&["eval", "--scenario", &s33, "--library", "Z_B"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().nth(1).unwrap().ends_with("18      4.170        0.000   4.170"), "{out}");
    let (_, out, _) = cli(&["eval", "--scenario", &s33, "--library", "Z_C", "--format", "csv"]);
    assert_eq!(out.lines().nth(1).unwrap(), "Z_C,neural_gen repeat,21,4.392,0.750,3.642");
    let (_, out, _) = cli(&["eval", "--scenario", &s33, "--library", "Z_A", "--bits-precision", "5", "--format", "csv"]);
    assert_eq!(out.lines().nth(1).unwrap(), "Z_A,up down,6,2.58496,0.00000,2.58496");
}

#[test]
fn eval_json_keeps_full_precision() {
    let (_, out, _) = cli(&["eval", "--scenario", &shipped("s33.toml"), "--library", "Z_C", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["report"]["uncertainty_bits"], 0.75);
    assert_eq!(v["report"]["diversity_bits"].as_f64().unwrap(), 21f64.log2());
    assert_eq!(v["library"], "Z_C");
}

#[test]
fn eval_empty_library_is_zero() {
    let (code, out, _) = cli(&["eval", "--scenario", &shipped("s33.toml"), "--library", "empty", "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().nth(1).unwrap(), "empty,,0,0.000,0.000,0.000");
}

#[test]
fn eval_unknown_library_exits_2() {
    let (code, _, err) = cli(&["eval", "--scenario", &shipped("s33.toml"), "--library", "Z_Q"]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(err.contains("Z_Q"));
}

#[test]
fn cap_exceeded_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(shipped("s33.toml")).unwrap().replace("seed = 0", "seed = 0\nenumeration_cap = 10");
    let path = write(&dir, &text);
    let (code, _, err) = cli(&["eval", "--scenario", &path, "--library", "Z_B"]);
    assert_eq!(code, EXIT_CAP, "{err}");
    let (code, _, _) = cli(&["eval", "--scenario", &shipped("s33.toml"), "--library", "Z_B", "--horizon", "9"]);
    assert_eq!(code, EXIT_CAP);
}

#[test]
fn compare_ranks_and_breaks_ties() {
    let s33 = shipped("s33.toml");
    let (code, out, _) = cli(&["compare", "--scenario", &s33, "--library", "Z_A", "Z_C", "Z_B"]);
    assert_eq!(code, EXIT_OK);
    let order: Vec<&str> = out.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(order, ["Z_B", "Z_C", "Z_A"]);

    let (_, out, _) = cli(&["compare", "--scenario", &s33, "--library", "Z_A", "--library", "Z_A"]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);

    let (code, _, _) = cli(&["compare", "--scenario", &s33, "--library", "Z_A"]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn compare_with_capacity_emits_both_tables() {
    let (code, out, _) = cli(&["compare", "--scenario", &shipped("s33.toml"), "--library", "Z_A", "Z_B", "Z_C", "--estimator", "capacity"]);
    assert_eq!(code, EXIT_OK);
    let sections: Vec<&str> = out.split("# estimator: ").skip(1).collect();
    assert_eq!(sections.len(), 2);
    assert!(sections[0].starts_with("uniform"));
    assert!(sections[1].starts_with("capacity"));
    // Z_C's capacity ties Z_B's log2(18); the tie goes to the lexically first id
    let cap: Vec<&str> = sections[1].lines().skip(2).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(cap, ["Z_B", "Z_C", "Z_A"]);
    assert!(sections[1].contains("4.170        0.000   4.170"));
}

#[test]
fn run_curriculum_keeps_move_and_arpeggio() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("run.json");
    let (code, out, err) = cli(&["run", "--scenario", &shipped("curriculum.toml"), "--out", out_path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.lines().count(), 2);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let names: Vec<&str> = v["final_library"]["programs"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["move", "arpeggio"]);
    assert_eq!(v["steps"][0]["action_label"], "integrate {repeat}; abstract(up, down); prune {up, down}");
    assert_eq!(v["final_library"]["provenance"]["arpeggio"], 2);
}

#[test]
fn run_without_candidates_never_changes_library() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("candidates = [\"repeat\"]", "candidates = []").replace("[[tasks]]", "[curator]\nrelevance_threshold = 0.5\n\n[[tasks]]");
    let path = write(&dir, &text);
    let (code, out, err) = cli(&["run", "--scenario", &path]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["final_library"], v["initial_library"]);
    assert_eq!(v["steps"][0]["action_kind"], "no-op");
}

#[test]
fn task_failures_are_recorded_and_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("[run]", "[[tasks]]\nname = \"u\"\ntarget = \"[E4]\"\n\n[run]").replace("name = \"base\"", "name = \"base\"\nenumeration_cap = 2");
    let path = write(&dir, &text);
    let (code, out, _) = cli(&["run", "--scenario", &path]);
    assert_eq!(code, EXIT_TASK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["steps"].as_array().unwrap().len(), 2, "the run continues past the failure");
    assert!(v["steps"][0]["error"].as_str().unwrap().contains("cap"));
}

#[test]
fn run_needs_tasks() {
    let (code, _, _) = cli(&["run", "--scenario", &shipped("s33.toml")]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn seed_override_is_recorded() {
    let (_, out, _) = cli(&["run", "--scenario", &shipped("run8.toml"), "--seed", "42"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["seed"], 42);
}

#[test]
fn grid_reports_start_cell() {
    let (code, out, _) = cli(&["grid", "--scenario", &shipped("grids/open5.grid")]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().nth(1).unwrap().split_whitespace().collect::<Vec<_>>(), ["2", "2", "5", "2.322"]);
    let (code, _, _) = cli(&["grid", "--scenario", &shipped("grids/open5.grid"), "--horizon", "9"]);
    assert_eq!(code, EXIT_CAP);
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(cli(&["frobnicate"]).0, EXIT_VALIDATION);
    assert_eq!(cli(&["eval", "--scenario", "x.toml", "--library", "Z", "--estimator", "exact"]).0, EXIT_VALIDATION);
}
