//! Cross-checks the heuristic detector against a second implementation of
//! its scoring formula written with Python's own `ast` module.

mod common;

use std::io::Write;
use std::process::{Command, Stdio};

use common::*;
use typegate::detect::{Detector, HeuristicDetector};

const ORACLE: &str = r#"
import ast, json, sys

def score(src):
    fn = ast.parse(src).body[-1]
    occ = []  # (line, col, name, kind)
    for a in fn.args.args:
        occ.append((a.lineno, a.col_offset, a.arg, "bind"))
    for stmt in fn.body:
        for node in ast.walk(stmt):
            if isinstance(node, ast.Name):
                kind = "load" if isinstance(node.ctx, ast.Load) else "bind"
                occ.append((node.lineno, node.col_offset, node.id, kind))
    span = max(1, fn.end_lineno - fn.lineno)
    uses, binds = {}, {}
    for line, col, name, kind in occ:
        uses[name] = uses.get(name, 0) + 1
        if kind == "bind":
            binds.setdefault(name, []).append(line)
    best = None
    for line, col, name, kind in sorted(occ):
        if kind != "load":
            continue
        gap = min((abs(line - b) for b in binds[name]), default=span) if name in binds else span
        s = (1.0 / uses[name] + min(gap / span, 1.0)) / 2.0
        if best is None or s > best[0]:
            best = (s, line, col)
    return best

print(json.dumps([score(src) for src in json.load(sys.stdin)]))
"#;

#[test]
fn heuristic_matches_python_reimplementation() {
    let functions: Vec<&str> = CLEAN.iter().take(10).copied().collect();
    let child = Command::new("python3")
        .args(["-c", ORACLE])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn();
    let Ok(mut child) = child else {
        eprintln!("python3 not available; skipping");
        return;
    };
    child.stdin.take().unwrap().write_all(serde_json::to_string(&functions).unwrap().as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let expected: Vec<Option<(f64, u32, u32)>> = serde_json::from_slice(&out.stdout).unwrap();
    for (src, exp) in functions.iter().zip(expected) {
        let (score, line, col) = exp.unwrap();
        let o = HeuristicDetector { threshold: 0.0 }.detect(&sample("h", src)).unwrap();
        let loc = o.location.unwrap();
        assert!((o.score.unwrap() - score).abs() < 1e-12, "{src}");
        assert_eq!((loc.line, loc.column), (line, Some(col)), "{src}");
        let fires = HeuristicDetector { threshold: 0.5 }.detect(&sample("h", src)).unwrap().has_bug;
        assert_eq!(fires, score >= 0.5);
    }
}
