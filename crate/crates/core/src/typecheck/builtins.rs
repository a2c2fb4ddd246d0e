//! Closed tables: operand typing, attribute tables of builtin types, and
//! signatures of the builtin functions the checker knows about.
//!
//! Every function here receives concrete (non-union, non-`Unknown`) types;
//! the interpreter lifts them over unions. `None` means "invalid for this
//! operand".

use super::types::{Signature, TypeTerm};
use crate::source::ast::{BinOp, CmpOp, UnaryOp};

use TypeTerm::*;

fn promote(l: &TypeTerm, r: &TypeTerm) -> TypeTerm {
    if *l == Float || *r == Float {
        Float
    } else {
        Int
    }
}

fn int_like(t: &TypeTerm) -> bool {
    matches!(t, Bool | Int)
}

fn is_sequence(t: &TypeTerm) -> bool {
    matches!(t, Str | Bytes | List(_) | Tuple(_) | TupleOf(_))
}

fn tuple_elem(t: &TypeTerm) -> TypeTerm {
    match t {
        Tuple(es) => TypeTerm::union_of(es.iter().cloned()),
        TupleOf(e) => (**e).clone(),
        _ => Unknown,
    }
}

fn seq_repeat(t: &TypeTerm) -> TypeTerm {
    match t {
        Tuple(_) => TypeTerm::tuple_of(tuple_elem(t)),
        other => other.clone(),
    }
}

pub fn binop(op: BinOp, l: &TypeTerm, r: &TypeTerm) -> Option<TypeTerm> {
    if matches!(l, Class(_)) || matches!(r, Class(_)) {
        return Some(Unknown);
    }
    let numeric = l.is_numeric() && r.is_numeric();
    match op {
        BinOp::Add => match (l, r) {
            _ if numeric => Some(promote(l, r)),
            (Str, Str) => Some(Str),
            (Bytes, Bytes) => Some(Bytes),
            (List(a), List(b)) => Some(TypeTerm::list(a.join(b))),
            (Tuple(a), Tuple(b)) => Some(Tuple(a.iter().chain(b).cloned().collect())),
            (Tuple(_) | TupleOf(_), Tuple(_) | TupleOf(_)) => {
                Some(TypeTerm::tuple_of(tuple_elem(l).join(&tuple_elem(r))))
            }
            _ => None,
        },
        BinOp::Sub => match (l, r) {
            _ if numeric => Some(promote(l, r)),
            (Set(a), Set(_)) => Some(Set(a.clone())),
            _ => None,
        },
        BinOp::Mul => match (l, r) {
            _ if numeric => Some(promote(l, r)),
            (s, n) | (n, s) if is_sequence(s) && int_like(n) => Some(seq_repeat(s)),
            _ => None,
        },
        BinOp::Div => numeric.then_some(Float),
        BinOp::FloorDiv | BinOp::Pow => numeric.then(|| promote(l, r)),
        BinOp::Mod => match l {
            _ if numeric => Some(promote(l, r)),
            Str => Some(Str),
            Bytes => Some(Bytes),
            _ => None,
        },
        BinOp::MatMul => None,
        BinOp::LShift | BinOp::RShift => (int_like(l) && int_like(r)).then_some(Int),
        BinOp::BitAnd | BinOp::BitOr | BinOp::BitXor => match (l, r) {
            (Bool, Bool) => Some(Bool),
            _ if int_like(l) && int_like(r) => Some(Int),
            (Set(a), Set(b)) => Some(TypeTerm::set(a.join(b))),
            (Dict(ak, av), Dict(bk, bv)) if op == BinOp::BitOr => {
                Some(TypeTerm::dict(ak.join(bk), av.join(bv)))
            }
            _ => None,
        },
    }
}

/// In-place variant used by augmented assignment: `list += iterable` is
/// valid even when `list + iterable` is not.
pub fn inplace_binop(op: BinOp, l: &TypeTerm, r: &TypeTerm) -> Option<TypeTerm> {
    if op == BinOp::Add {
        if let List(a) = l {
            if let Some(e) = iter_elem(r) {
                return Some(TypeTerm::list(a.join(&e)));
            }
        }
    }
    binop(op, l, r)
}

pub fn compare(op: CmpOp, l: &TypeTerm, r: &TypeTerm) -> bool {
    if matches!(l, Class(_)) || matches!(r, Class(_)) {
        return true;
    }
    match op {
        CmpOp::Eq | CmpOp::NotEq | CmpOp::Is | CmpOp::IsNot => true,
        CmpOp::Lt | CmpOp::LtE | CmpOp::Gt | CmpOp::GtE => matches!(
            (l, r),
            (Bool | Int | Float, Bool | Int | Float)
                | (Str, Str)
                | (Bytes, Bytes)
                | (List(_), List(_))
                | (Tuple(_) | TupleOf(_), Tuple(_) | TupleOf(_))
                | (Set(_), Set(_))
        ),
        CmpOp::In | CmpOp::NotIn => match r {
            Str => *l == Str,
            Bytes => matches!(l, Bytes | Int | Bool),
            List(_) | Tuple(_) | TupleOf(_) | Set(_) | Dict(..) => true,
            _ => false,
        },
    }
}

pub fn unary(op: UnaryOp, t: &TypeTerm) -> Option<TypeTerm> {
    match (op, t) {
        (UnaryOp::Not, _) => Some(Bool),
        (_, Class(_)) => Some(Unknown),
        (UnaryOp::Neg | UnaryOp::Pos, Bool | Int) => Some(Int),
        (UnaryOp::Neg | UnaryOp::Pos, Float) => Some(Float),
        (UnaryOp::Invert, Bool | Int) => Some(Int),
        _ => None,
    }
}

/// Subscript index: a slice or a typed expression.
#[derive(Debug, Clone)]
pub enum Index {
    Slice,
    /// Integer literal index (possibly negative), when statically known.
    Literal(i64),
    Value(TypeTerm),
}

pub fn subscript(value: &TypeTerm, index: &Index) -> Option<TypeTerm> {
    let int_index = match index {
        Index::Slice => None,
        Index::Literal(_) => Some(true),
        Index::Value(t) => Some(t.is_unknown() || int_like(t) || matches!(t, Class(_))),
    };
    match value {
        Class(_) => Some(Unknown),
        Dict(_, v) => match index {
            Index::Slice => None,
            _ => Some((**v).clone()),
        },
        Str | Bytes | List(_) | Tuple(_) | TupleOf(_) => match int_index {
            None => Some(seq_repeat(value)),
            Some(false) => None,
            Some(true) => Some(match value {
                Str => Str,
                Bytes => Int,
                List(e) | TupleOf(e) => (**e).clone(),
                Tuple(es) => match index {
                    Index::Literal(i) => {
                        let n = es.len() as i64;
                        let k = if *i < 0 { n + i } else { *i };
                        if (0..n).contains(&k) {
                            es[k as usize].clone()
                        } else {
                            tuple_elem(value)
                        }
                    }
                    _ => tuple_elem(value),
                },
                _ => unreachable!(),
            }),
        },
        _ => None,
    }
}

/// Outcome of storing into `value[index]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemStore {
    Ok,
    NotWritable,
    Unsupported,
}

pub fn item_store(value: &TypeTerm, index: &Index) -> ItemStore {
    match value {
        Class(_) | Dict(..) => ItemStore::Ok,
        List(_) => match index {
            Index::Value(t) if !(t.is_unknown() || int_like(t) || matches!(t, Class(_))) => {
                ItemStore::Unsupported
            }
            _ => ItemStore::Ok,
        },
        Tuple(_) | TupleOf(_) | Str | Bytes => ItemStore::NotWritable,
        _ => ItemStore::Unsupported,
    }
}

pub fn iter_elem(t: &TypeTerm) -> Option<TypeTerm> {
    match t {
        Unknown | Class(_) => Some(Unknown),
        Str => Some(Str),
        Bytes => Some(Int),
        List(e) | Set(e) | TupleOf(e) => Some((**e).clone()),
        Tuple(_) => Some(tuple_elem(t)),
        Dict(k, _) => Some((**k).clone()),
        _ => None,
    }
}

fn method(name: &str, ret: TypeTerm) -> Option<TypeTerm> {
    Some(Function(Signature::opaque(name, ret)))
}

const STR_TO_STR: &[&str] = &[
    "capitalize", "casefold", "center", "expandtabs", "format", "format_map", "join", "ljust",
    "lower", "lstrip", "removeprefix", "removesuffix", "replace", "rjust", "rstrip", "strip",
    "swapcase", "title", "translate", "upper", "zfill",
];
const STR_TO_BOOL: &[&str] = &[
    "endswith", "isalnum", "isalpha", "isascii", "isdecimal", "isdigit", "isidentifier",
    "islower", "isnumeric", "isprintable", "isspace", "istitle", "isupper", "startswith",
];
const STR_TO_INT: &[&str] = &["count", "find", "index", "rfind", "rindex"];
const STR_TO_LIST: &[&str] = &["rsplit", "split", "splitlines"];
const STR_TO_TUPLE: &[&str] = &["partition", "rpartition"];
const STR_OTHER: &[&str] = &["maketrans"];

const BYTES_TO_BYTES: &[&str] = &[
    "capitalize", "center", "expandtabs", "join", "ljust", "lower", "lstrip", "removeprefix",
    "removesuffix", "replace", "rjust", "rstrip", "strip", "swapcase", "title", "translate",
    "upper", "zfill", "hex",
];
const BYTES_OTHER: &[&str] = &[
    "count", "decode", "endswith", "find", "fromhex", "index", "isalnum", "isalpha", "isascii",
    "isdigit", "islower", "isspace", "istitle", "isupper", "maketrans", "partition", "rfind",
    "rindex", "rpartition", "rsplit", "split", "splitlines", "startswith",
];

const LIST_METHODS: &[&str] = &[
    "append", "clear", "copy", "count", "extend", "index", "insert", "pop", "remove", "reverse",
    "sort",
];
const DICT_METHODS: &[&str] = &[
    "clear", "copy", "fromkeys", "get", "items", "keys", "pop", "popitem", "setdefault",
    "update", "values",
];
const SET_METHODS: &[&str] = &[
    "add", "clear", "copy", "difference", "difference_update", "discard", "intersection",
    "intersection_update", "isdisjoint", "issubset", "issuperset", "pop", "remove",
    "symmetric_difference", "symmetric_difference_update", "union", "update",
];
const TUPLE_METHODS: &[&str] = &["count", "index"];

/// Attribute lookup on a builtin type. `None` means the attribute does not
/// exist; classes and `Unknown` are handled by the caller.
pub fn attribute(t: &TypeTerm, name: &str) -> Option<TypeTerm> {
    if name.starts_with("__") && name.ends_with("__") {
        return Some(Unknown);
    }
    match t {
        Str => {
            if STR_TO_STR.contains(&name) {
                method(name, Str)
            } else if STR_TO_BOOL.contains(&name) {
                method(name, Bool)
            } else if STR_TO_INT.contains(&name) {
                method(name, Int)
            } else if STR_TO_LIST.contains(&name) {
                method(name, TypeTerm::list(Str))
            } else if STR_TO_TUPLE.contains(&name) {
                method(name, Tuple(vec![Str, Str, Str]))
            } else if name == "encode" {
                method(name, Bytes)
            } else if STR_OTHER.contains(&name) {
                method(name, Unknown)
            } else {
                None
            }
        }
        Bytes => {
            if BYTES_TO_BYTES.contains(&name) {
                method(name, if name == "hex" { Str } else { Bytes })
            } else if BYTES_OTHER.contains(&name) {
                method(name, if name == "decode" { Str } else { Unknown })
            } else {
                None
            }
        }
        List(e) => LIST_METHODS.contains(&name).then(|| {
            let ret = match name {
                "pop" => (**e).clone(),
                "count" | "index" => Int,
                "copy" => t.clone(),
                _ => NoneT,
            };
            Function(Signature::opaque(name, ret))
        }),
        Dict(k, v) => DICT_METHODS.contains(&name).then(|| {
            let ret = match name {
                "keys" => TypeTerm::list((**k).clone()),
                "values" => TypeTerm::list((**v).clone()),
                "items" => TypeTerm::list(Tuple(vec![(**k).clone(), (**v).clone()])),
                "copy" => t.clone(),
                "clear" | "update" => NoneT,
                _ => Unknown,
            };
            Function(Signature::opaque(name, ret))
        }),
        Set(_) => SET_METHODS.contains(&name).then(|| {
            let ret = match name {
                "isdisjoint" | "issubset" | "issuperset" => Bool,
                "add" | "clear" | "discard" | "remove" | "update" => NoneT,
                "pop" => Unknown,
                _ => t.clone(),
            };
            Function(Signature::opaque(name, ret))
        }),
        Tuple(_) | TupleOf(_) => {
            TUPLE_METHODS.contains(&name).then(|| Function(Signature::opaque(name, Int)))
        }
        Function(_) => Some(Unknown),
        Unknown | Class(_) => Some(Unknown),
        Bool | Int | Float | NoneT => None,
        Union(_) => Some(Unknown),
    }
}

/// Names resolvable without any binding in the analyzed source. Legacy
/// Python 2 names are included so such code is not flagged wholesale.
pub const BUILTIN_NAMES: &[&str] = &[
    "ArithmeticError", "AssertionError", "AttributeError", "BaseException", "BlockingIOError",
    "BrokenPipeError", "BufferError", "BytesWarning", "ChildProcessError", "ConnectionAbortedError",
    "ConnectionError", "ConnectionRefusedError", "ConnectionResetError",
    "DeprecationWarning", "EOFError", "Ellipsis", "EnvironmentError", "Exception",
    "FileExistsError", "FileNotFoundError", "FloatingPointError", "FutureWarning",
    "GeneratorExit", "IOError", "ImportError", "ImportWarning", "IndentationError",
    "IndexError", "InterruptedError", "IsADirectoryError", "KeyError", "KeyboardInterrupt",
    "LookupError", "MemoryError", "ModuleNotFoundError", "NameError", "NotADirectoryError",
    "NotImplemented", "NotImplementedError", "OSError", "OverflowError",
    "PendingDeprecationWarning", "PermissionError", "ProcessLookupError", "RecursionError",
    "ReferenceError", "ResourceWarning", "RuntimeError", "RuntimeWarning", "StandardError",
    "StopAsyncIteration", "StopIteration", "SyntaxError", "SyntaxWarning", "SystemError",
    "SystemExit", "TabError", "TimeoutError", "TypeError", "UnboundLocalError",
    "UnicodeDecodeError", "UnicodeEncodeError", "UnicodeError", "UnicodeTranslateError",
    "UnicodeWarning", "UserWarning", "ValueError", "Warning", "ZeroDivisionError",
    "__builtins__", "__debug__", "__doc__", "__file__", "__import__", "__name__",
    "__package__", "abs", "all", "any", "ascii", "basestring", "bin", "bool", "breakpoint",
    "bytearray", "bytes", "callable", "chr", "classmethod", "cmp", "compile", "complex",
    "copyright", "credits", "delattr", "dict", "dir", "divmod", "enumerate", "eval", "exec",
    "execfile", "exit", "file", "filter", "float", "format", "frozenset", "getattr", "globals",
    "hasattr", "hash", "help", "hex", "id", "input", "int", "isinstance", "issubclass", "iter",
    "len", "license", "list", "locals", "long", "map", "max", "memoryview", "min", "next",
    "object", "oct", "open", "ord", "pow", "print", "property", "quit", "range", "raw_input",
    "reduce", "reload", "repr", "reversed", "round", "set", "setattr", "slice", "sorted",
    "staticmethod", "str", "sum", "super", "tuple", "type", "unichr", "unicode", "vars",
    "xrange", "zip",
];

pub fn is_builtin_name(name: &str) -> bool {
    BUILTIN_NAMES.binary_search(&name).is_ok()
}

/// Argument constraint of a builtin parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgRule {
    Sized,
    Numeric,
    IntLike,
    Iterable,
    /// `int(x)` / `float(x)`: numbers or text.
    NumberOrText,
    Text,
    Any,
}

impl ArgRule {
    pub fn describe(self) -> &'static str {
        match self {
            ArgRule::Sized => "Sized",
            ArgRule::Numeric => "int | float",
            ArgRule::IntLike => "int",
            ArgRule::Iterable => "Iterable",
            ArgRule::NumberOrText => "int | float | str | bytes",
            ArgRule::Text => "str | bytes",
            ArgRule::Any => "Any",
        }
    }

    /// Whether a concrete type satisfies the rule.
    pub fn accepts(self, t: &TypeTerm) -> bool {
        if matches!(t, Unknown | Class(_)) {
            return true;
        }
        match self {
            ArgRule::Any => true,
            ArgRule::Sized => matches!(t, Str | Bytes | Tuple(_) | TupleOf(_) | List(_) | Dict(..) | Set(_)),
            ArgRule::Numeric => t.is_numeric(),
            ArgRule::IntLike => int_like(t),
            ArgRule::Iterable => iter_elem(t).is_some(),
            ArgRule::NumberOrText => t.is_numeric() || matches!(t, Str | Bytes),
            ArgRule::Text => matches!(t, Str | Bytes),
        }
    }
}

/// Positional signature of a known builtin: rules per position, arity range,
/// and a return-type function over the positional argument types.
pub struct BuiltinSig {
    pub rules: &'static [ArgRule],
    pub min: usize,
    pub max: usize,
    pub ret: fn(&[TypeTerm]) -> TypeTerm,
}

fn ret_int(_: &[TypeTerm]) -> TypeTerm {
    Int
}
fn ret_str(_: &[TypeTerm]) -> TypeTerm {
    Str
}
fn ret_float(_: &[TypeTerm]) -> TypeTerm {
    Float
}
fn ret_bool(_: &[TypeTerm]) -> TypeTerm {
    Bool
}
fn ret_unknown(_: &[TypeTerm]) -> TypeTerm {
    Unknown
}
fn ret_none(_: &[TypeTerm]) -> TypeTerm {
    NoneT
}
fn first_elem(args: &[TypeTerm]) -> TypeTerm {
    args.first().map(elem_of).unwrap_or(Unknown)
}
fn elem_of(t: &TypeTerm) -> TypeTerm {
    TypeTerm::union_of(t.members().iter().map(|m| iter_elem(m).unwrap_or(Unknown)))
}
fn ret_abs(args: &[TypeTerm]) -> TypeTerm {
    match args.first() {
        Some(Float) => Float,
        Some(Bool | Int) => Int,
        _ => Unknown,
    }
}
fn ret_range(_: &[TypeTerm]) -> TypeTerm {
    TypeTerm::list(Int)
}
fn ret_sorted(args: &[TypeTerm]) -> TypeTerm {
    TypeTerm::list(first_elem(args))
}
fn ret_list(args: &[TypeTerm]) -> TypeTerm {
    TypeTerm::list(if args.is_empty() { Unknown } else { first_elem(args) })
}
fn ret_tuple(args: &[TypeTerm]) -> TypeTerm {
    TypeTerm::tuple_of(if args.is_empty() { Unknown } else { first_elem(args) })
}
fn ret_set(args: &[TypeTerm]) -> TypeTerm {
    TypeTerm::set(if args.is_empty() { Unknown } else { first_elem(args) })
}

pub fn builtin_signature(name: &str) -> Option<BuiltinSig> {
    use ArgRule::*;
    let sig = |rules: &'static [ArgRule], min, max, ret| BuiltinSig { rules, min, max, ret };
    Some(match name {
        "len" => sig(&[Sized], 1, 1, ret_int),
        "abs" => sig(&[Numeric], 1, 1, ret_abs),
        "range" | "xrange" => sig(&[IntLike, IntLike, IntLike], 1, 3, ret_range),
        "sorted" => sig(&[Iterable], 1, 1, ret_sorted),
        "iter" => sig(&[Iterable, Any], 1, 2, ret_unknown),
        "str" => sig(&[Any, Any, Any], 0, 3, ret_str),
        "repr" | "ascii" => sig(&[Any], 1, 1, ret_str),
        "int" => sig(&[NumberOrText, IntLike], 0, 2, ret_int),
        "float" => sig(&[NumberOrText], 0, 1, ret_float),
        "bool" => sig(&[Any], 0, 1, ret_bool),
        "list" => sig(&[Iterable], 0, 1, ret_list),
        "tuple" => sig(&[Iterable], 0, 1, ret_tuple),
        "set" | "frozenset" => sig(&[Iterable], 0, 1, ret_set),
        "sum" => sig(&[Iterable, Any], 1, 2, ret_unknown),
        "enumerate" => sig(&[Iterable, IntLike], 1, 2, ret_unknown),
        "reversed" => sig(&[Sized], 1, 1, ret_unknown),
        "all" | "any" => sig(&[Iterable], 1, 1, ret_bool),
        "chr" | "unichr" => sig(&[IntLike], 1, 1, ret_str),
        "ord" => sig(&[Text], 1, 1, ret_int),
        "hex" | "oct" | "bin" => sig(&[IntLike], 1, 1, ret_str),
        "isinstance" | "issubclass" | "hasattr" | "callable" => sig(&[Any, Any], 1, 2, ret_bool),
        "print" => sig(&[], 0, usize::MAX, ret_none),
        "id" | "hash" => sig(&[Any], 1, 1, ret_int),
        _ => return None,
    })
}

/// Builtins that accept keyword arguments beyond the positional rules; calls
/// to these with keywords skip arity checking.
pub fn accepts_keywords(name: &str) -> bool {
    matches!(name, "sorted" | "print" | "sum" | "enumerate" | "int" | "str" | "iter")
}
