use super::*;
use crate::source::parse_source;

fn run(src: &str, annotations: bool) -> Vec<(Category, u32)> {
    let p = parse_source(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    check(&p.tree, &CheckConfig::with_annotations(annotations))
        .into_iter()
        .map(|d| (d.category, d.span.line))
        .collect()
}

fn diags(src: &str) -> Vec<(Category, u32)> {
    run(src, false)
}

const LISTING_BUGGY: &str = "def take_last_assignment(source):
    first=True
    last=None
    for assn in source:
        if first:
            last=assn
            first=False
        if (assn[1]!=first[1]):
            (yield last)
        last=assn
    if (last is not None):
        (yield last)
";

#[test]
fn never_bound_name() {
    assert_eq!(diags("def f():\n    return y\n"), vec![(Category::NameError, 2)]);
}

#[test]
fn listing_misuse_is_unsupported_operand_on_line_8() {
    assert_eq!(diags(LISTING_BUGGY), vec![(Category::UnsupportedOperand, 8)]);
    let fixed = LISTING_BUGGY.replace("first[1]", "last[1]");
    assert_eq!(diags(&fixed), vec![]);
}

#[test]
fn tuple_item_assignment_is_not_writable() {
    assert_eq!(diags("def f():\n    x = (1,2)\n    x[0] = 3\n"), vec![(Category::NotWritable, 3)]);
}

#[test]
fn len_of_int() {
    assert_eq!(diags("def f():\n    n = 5\n    len(n)\n"), vec![(Category::WrongArgTypes, 3)]);
}

#[test]
fn attribute_of_int() {
    assert_eq!(diags("def f():\n    n = 1\n    n.append(2)\n"), vec![(Category::AttributeError, 3)]);
}

#[test]
fn int_plus_str() {
    assert_eq!(diags("def f():\n    s = 'a'\n    t = 1 + s\n"), vec![(Category::UnsupportedOperand, 3)]);
}

#[test]
fn bad_return_type_only_with_annotations() {
    let src = "def f() -> int:\n    return 'a'\n";
    assert_eq!(run(src, true), vec![(Category::BadReturnType, 2)]);
    assert_eq!(run(src, false), vec![]);
}

#[test]
fn parallel_branches_name_error() {
    let src = "def f(c):\n    if c:\n        y = 1\n    else:\n        z = y\n    return c\n";
    assert_eq!(diags(src), vec![(Category::NameError, 5)]);
}

#[test]
fn maybe_bound_after_if_is_a_name_error() {
    let src = "def f(c):\n    if c:\n        y = 1\n    return y\n";
    assert_eq!(diags(src), vec![(Category::NameError, 4)]);
}

#[test]
fn loop_body_bindings() {
    // Bound before the loop stays bound after it.
    assert_eq!(diags("def f(xs):\n    z = 0\n    for x in xs:\n        z = x\n    return z\n"), vec![]);
    // Assigned earlier in the same body: bound.
    assert_eq!(diags("def f(xs):\n    for x in xs:\n        w = x\n        print(w)\n"), vec![]);
    // Only assigned in the body: maybe-bound after the loop.
    assert_eq!(
        diags("def f(xs):\n    for x in xs:\n        w = x\n    return w\n"),
        vec![(Category::NameError, 4)]
    );
}

#[test]
fn while_true_exits_only_through_break() {
    let src = "def f(it):\n    while True:\n        v = next(it)\n        if v:\n            break\n    return v\n";
    assert_eq!(diags(src), vec![]);
}

#[test]
fn build_scopes_reports_definedness() {
    let src = "def f(x, c):\n    z = 1\n    if c:\n        y = x\n    else:\n        w = y\n    for i in x:\n        pass\n    return z + x\n";
    let p = parse_source(src).unwrap();
    let scopes = build_scopes(&p.tree);
    let find = |line: u32, name: &str| {
        let t = p.tokens.iter().find(|t| t.span.line == line && t.text == name).unwrap();
        scopes.definedness_at_load(t.span.token_index)
    };
    assert_eq!(find(4, "x"), Some(Definedness::Bound));
    assert_eq!(find(6, "y"), Some(Definedness::Unbound));
    assert_eq!(find(9, "z"), Some(Definedness::Bound));
    assert!(scopes.locals.contains("w"));
    assert!(scopes.locals.contains("i"));
}

#[test]
fn unions_need_every_member_to_fail() {
    // x is int or str: `x + 1` is valid for int.
    let src = "def f(c):\n    x = 1\n    if c:\n        x = 'a'\n    return x + 1\n";
    assert_eq!(diags(src), vec![]);
    // x is int or None: `x[0]` fails for both.
    let src = "def f(c):\n    x = 1\n    if c:\n        x = None\n    return x[0]\n";
    assert_eq!(diags(src), vec![(Category::UnsupportedOperand, 5)]);
}

#[test]
fn none_narrowing() {
    let src = "def f(c):\n    x = None\n    if c:\n        x = 'a'\n    if x is not None:\n        return x.upper()\n    return ''\n";
    assert_eq!(diags(src), vec![]);
    let src = "def f(c):\n    x = None\n    if c:\n        x = [1]\n    return x and x.append(2)\n";
    assert_eq!(diags(src), vec![]);
}

#[test]
fn quiet_on_unknown() {
    let srcs = [
        "def f(a, b):\n    return a + b\n",
        "def f(a):\n    return a.anything(1)[2].more\n",
        "def f(a):\n    a[0] = 1\n    a.x = 2\n    return len(a)\n",
        "def f(a):\n    return unknown_call(a) + 1\n",
    ];
    let expected = [vec![], vec![], vec![], vec![(Category::NameError, 2)]];
    for (src, exp) in srcs.iter().zip(expected) {
        assert_eq!(diags(src), exp, "{src}");
    }
}

#[test]
fn expr_types() {
    let env = TypeEnv::default();
    let ty = |src: &str| {
        let p = parse_source(&format!("def f():\n    return {src}\n")).unwrap();
        let crate::source::ast::StmtKind::Return(Some(e)) = &p.tree.function.body[0].kind else { panic!() };
        expr_type(&env, e)
    };
    assert_eq!(ty("True"), TypeTerm::Bool);
    assert_eq!(ty("1"), TypeTerm::Int);
    assert_eq!(ty("1.0"), TypeTerm::Float);
    assert_eq!(ty("'s'"), TypeTerm::Str);
    assert_eq!(ty("b''"), TypeTerm::Bytes);
    assert_eq!(ty("None"), TypeTerm::NoneT);
    assert_eq!(ty("(1, 'a')"), TypeTerm::Tuple(vec![TypeTerm::Int, TypeTerm::Str]));
    assert_eq!(ty("[1, 2]"), TypeTerm::list(TypeTerm::Int));
    assert_eq!(ty("{'k': 1.0}"), TypeTerm::dict(TypeTerm::Str, TypeTerm::Float));
    assert_eq!(ty("1 + 1.0"), TypeTerm::Float);
    assert_eq!(ty("mystery(3)"), TypeTerm::Unknown);
    assert_eq!(ty("len('abc')"), TypeTerm::Int);
    assert_eq!(ty("'a'.split()"), TypeTerm::list(TypeTerm::Str));
}

#[test]
fn stubs_type_calls_and_attributes() {
    let src = "class Point:\n    x: int\n    def norm(self) -> float: ...\n\ndef make(x: int) -> Point: ...\n\ndef f():\n    p = make(1)\n    p.y\n    make('a')\n    q = p.norm() + 1\n    return p.x.upper()\n";
    assert_eq!(
        diags(src),
        vec![(Category::AttributeError, 9), (Category::WrongArgTypes, 10), (Category::AttributeError, 12)]
    );
}

#[test]
fn external_stub_set() {
    let p = parse_source("def f():\n    return helper(1, 2)\n").unwrap();
    let stubs = StubSet::parse("def helper(a: int) -> str: ...\n").unwrap();
    let config = CheckConfig { stubs: Some(stubs), ..Default::default() };
    let d = check(&p.tree, &config);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].category, Category::WrongArgTypes);
}

#[test]
fn star_import_is_an_import_error_and_silences_globals() {
    let d = diags("from os.path import *\n\ndef f():\n    return join('a', 'b')\n");
    assert_eq!(d, vec![(Category::ImportError, 1)]);
}

#[test]
fn duplicate_stubs_become_internal_error() {
    let p = parse_source("def g(): ...\n\ndef f():\n    return g()\n").unwrap();
    let config = CheckConfig { stubs: Some(StubSet::parse("def g(): ...\n").unwrap()), ..Default::default() };
    let d = check(&p.tree, &config);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].category, Category::InternalError);
}

#[test]
fn categories_round_trip() {
    for c in Category::ALL {
        assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
    }
}

#[test]
fn iterating_a_scalar() {
    assert_eq!(diags("def f():\n    n = 3\n    for i in n:\n        pass\n"), vec![(Category::AttributeError, 3)]);
}

#[test]
fn comprehension_scope() {
    assert_eq!(diags("def f(xs):\n    ys = [x * 2 for x in xs if x]\n    return ys\n"), vec![]);
    assert_eq!(diags("def f(xs):\n    ys = [x for x in xs]\n    return x\n"), vec![(Category::NameError, 3)]);
}

#[test]
fn try_except_bindings() {
    let src = "def f(p):\n    try:\n        fh = open(p)\n    except IOError as e:\n        print(e)\n        return None\n    return fh.read()\n";
    assert_eq!(diags(src), vec![]);
}

#[test]
fn deterministic() {
    let p = parse_source(LISTING_BUGGY).unwrap();
    let c = CheckConfig::default();
    assert_eq!(check(&p.tree, &c), check(&p.tree, &c));
}
