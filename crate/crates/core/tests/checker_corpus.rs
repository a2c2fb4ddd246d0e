mod common;

use common::*;
use typegate::source::parse_source;
use typegate::typecheck::{check, CheckConfig, StubSet};

fn diagnostics(src: &str, annotations: bool) -> Vec<String> {
    let p = parse_source(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    check(&p.tree, &CheckConfig::with_annotations(annotations))
        .into_iter()
        .map(|d| format!("{}:{}: {} {}", d.span.line, d.span.column, d.category, d.message))
        .collect()
}

#[test]
fn clean_pool_is_silent_in_both_modes() {
    for src in CLEAN.iter().chain(ANNOTATED) {
        for annotations in [false, true] {
            assert_eq!(diagnostics(src, annotations), Vec::<String>::new(), "annotations={annotations}\n{src}");
        }
    }
}

#[test]
fn module_users_report_only_undefined_modules() {
    for src in USES_MODULES {
        let d = diagnostics(src, false);
        assert!(!d.is_empty());
        assert!(d.iter().all(|m| m.contains("name-error")), "{d:?}");
    }
}

#[test]
fn taxonomy_cases() {
    for case in taxonomy() {
        let p = parse_source(&case.source).unwrap();
        let mut config = CheckConfig::with_annotations(case.annotations);
        config.stubs = case.stubs.map(|s| StubSet::parse(s).unwrap());
        let got: Vec<_> = check(&p.tree, &config).into_iter().map(|d| (d.category, d.span.line)).collect();
        assert_eq!(got, case.expected, "{}", case.name);
    }
}

#[test]
fn every_pool_function_has_injection_sites() {
    for src in CLEAN.iter().chain(ANNOTATED).chain(USES_MODULES).chain([&LISTING_CORRECT]) {
        let p = parse_source(src).unwrap();
        assert!(!typegate::mutate::injection_sites(&p).is_empty(), "{src}");
    }
}
