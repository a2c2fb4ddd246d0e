//! The type lattice: `Unknown` on top, builtin scalars and containers,
//! callables, declared classes and flat unions.

use std::fmt;

/// Unions wider than this collapse to `Unknown`.
const MAX_UNION: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeTerm {
    Unknown,
    Bool,
    Int,
    Float,
    Str,
    Bytes,
    NoneT,
    /// Fixed-length tuple with known element types.
    Tuple(Vec<TypeTerm>),
    /// Homogeneous tuple of unknown length (`Tuple[T, ...]`).
    TupleOf(Box<TypeTerm>),
    List(Box<TypeTerm>),
    Dict(Box<TypeTerm>, Box<TypeTerm>),
    Set(Box<TypeTerm>),
    Function(Signature),
    /// Instance of a class declared in the stubs.
    Class(String),
    /// Flat, sorted, deduplicated, at least two members, never `Unknown`.
    Union(Vec<TypeTerm>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamSig {
    pub name: String,
    pub ty: TypeTerm,
    pub has_default: bool,
    pub variadic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub name: String,
    /// `None` when arity is unknown.
    pub params: Option<Vec<ParamSig>>,
    pub ret: Box<TypeTerm>,
}

impl Signature {
    pub fn opaque(name: impl Into<String>, ret: TypeTerm) -> Self {
        Signature { name: name.into(), params: None, ret: Box::new(ret) }
    }
}

impl TypeTerm {
    pub fn list(elem: TypeTerm) -> Self {
        TypeTerm::List(Box::new(elem))
    }

    pub fn set(elem: TypeTerm) -> Self {
        TypeTerm::Set(Box::new(elem))
    }

    pub fn dict(k: TypeTerm, v: TypeTerm) -> Self {
        TypeTerm::Dict(Box::new(k), Box::new(v))
    }

    pub fn tuple_of(elem: TypeTerm) -> Self {
        TypeTerm::TupleOf(Box::new(elem))
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, TypeTerm::Unknown)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, TypeTerm::Bool | TypeTerm::Int | TypeTerm::Float)
    }

    /// Union members, or the type itself.
    pub fn members(&self) -> &[TypeTerm] {
        match self {
            TypeTerm::Union(ms) => ms,
            other => std::slice::from_ref(other),
        }
    }

    /// Join of any number of types.
    pub fn union_of(items: impl IntoIterator<Item = TypeTerm>) -> TypeTerm {
        let mut flat = Vec::new();
        for t in items {
            match t {
                TypeTerm::Unknown => return TypeTerm::Unknown,
                TypeTerm::Union(ms) => flat.extend(ms),
                other => flat.push(other),
            }
        }
        flat.sort();
        flat.dedup();
        match flat.len() {
            0 => TypeTerm::Unknown,
            1 => flat.pop().expect("one member"),
            n if n > MAX_UNION => TypeTerm::Unknown,
            _ => TypeTerm::Union(flat),
        }
    }

    pub fn join(&self, other: &TypeTerm) -> TypeTerm {
        if self == other {
            return self.clone();
        }
        TypeTerm::union_of([self.clone(), other.clone()])
    }

    /// Removes `NoneT` from a union; leaves other types alone.
    pub fn without_none(&self) -> TypeTerm {
        match self {
            TypeTerm::Union(ms) => {
                TypeTerm::union_of(ms.iter().filter(|m| **m != TypeTerm::NoneT).cloned())
            }
            other => other.clone(),
        }
    }

    /// Short name as used in messages.
    pub fn kind_name(&self) -> String {
        match self {
            TypeTerm::Unknown => "Any".into(),
            TypeTerm::Bool => "bool".into(),
            TypeTerm::Int => "int".into(),
            TypeTerm::Float => "float".into(),
            TypeTerm::Str => "str".into(),
            TypeTerm::Bytes => "bytes".into(),
            TypeTerm::NoneT => "None".into(),
            TypeTerm::Tuple(_) | TypeTerm::TupleOf(_) => "tuple".into(),
            TypeTerm::List(_) => "list".into(),
            TypeTerm::Dict(..) => "dict".into(),
            TypeTerm::Set(_) => "set".into(),
            TypeTerm::Function(_) => "Callable".into(),
            TypeTerm::Class(n) => n.clone(),
            TypeTerm::Union(_) => self.to_string(),
        }
    }
}

impl fmt::Display for TypeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTerm::Tuple(es) => {
                write!(f, "tuple[")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "]")
            }
            TypeTerm::TupleOf(e) => write!(f, "tuple[{e}, ...]"),
            TypeTerm::List(e) => write!(f, "list[{e}]"),
            TypeTerm::Set(e) => write!(f, "set[{e}]"),
            TypeTerm::Dict(k, v) => write!(f, "dict[{k}, {v}]"),
            TypeTerm::Function(sig) => write!(f, "Callable[..., {}]", sig.ret),
            TypeTerm::Union(ms) => {
                for (i, m) in ms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " | ")?;
                    }
                    write!(f, "{m}")?;
                }
                Ok(())
            }
            other => write!(f, "{}", other.kind_name()),
        }
    }
}

/// `actual` may be used where `expected` is required. `Unknown` on either
/// side is compatible; a union argument is compatible when any member is;
/// `Bool ≤ Int ≤ Float`.
pub fn compatible(actual: &TypeTerm, expected: &TypeTerm) -> bool {
    use TypeTerm::*;
    match (actual, expected) {
        (Unknown, _) | (_, Unknown) => true,
        (Union(ms), _) => ms.iter().any(|m| compatible(m, expected)),
        (_, Union(ms)) => ms.iter().any(|m| compatible(actual, m)),
        (Bool, Bool | Int | Float) => true,
        (Int, Int | Float) => true,
        (Float, Float) => true,
        (Str, Str) | (Bytes, Bytes) | (NoneT, NoneT) => true,
        (List(a), List(b)) | (Set(a), Set(b)) | (TupleOf(a), TupleOf(b)) => compatible(a, b),
        (Tuple(es), TupleOf(b)) => es.iter().all(|e| compatible(e, b)),
        (TupleOf(a), Tuple(bs)) => bs.iter().all(|b| compatible(a, b)),
        (Tuple(a), Tuple(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| compatible(x, y)),
        (Dict(ak, av), Dict(bk, bv)) => compatible(ak, bk) && compatible(av, bv),
        (Function(_), Function(_)) => true,
        (Class(a), Class(b)) => a == b,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::TypeTerm::*;
    use super::*;

    #[test]
    fn unions_are_flat_sorted_and_deduplicated() {
        let u = TypeTerm::union_of([Str, Int, TypeTerm::union_of([Int, NoneT]), Str]);
        assert_eq!(u, Union(vec![Int, Str, NoneT]));
        assert_eq!(TypeTerm::union_of([Int, Int]), Int);
        assert_eq!(TypeTerm::union_of([Int, Unknown]), Unknown);
        assert_eq!(Int.join(&Str), Str.join(&Int));
    }

    #[test]
    fn wide_unions_widen_to_unknown() {
        let many = [
            Int,
            Str,
            Bytes,
            Float,
            NoneT,
            Bool,
            TypeTerm::list(Int),
            TypeTerm::set(Int),
            TypeTerm::tuple_of(Int),
        ];
        assert_eq!(TypeTerm::union_of(many), Unknown);
    }

    #[test]
    fn numeric_tower() {
        assert!(compatible(&Bool, &Int));
        assert!(compatible(&Int, &Float));
        assert!(compatible(&Bool, &Float));
        assert!(!compatible(&Float, &Int));
        assert!(!compatible(&Str, &Int));
    }

    #[test]
    fn unknown_and_unions() {
        assert!(compatible(&Unknown, &Int));
        assert!(compatible(&Str, &Unknown));
        let u = TypeTerm::union_of([Str, Int]);
        assert!(compatible(&u, &Int));
        assert!(compatible(&Int, &u));
        assert!(!compatible(&TypeTerm::union_of([Str, NoneT]), &Int));
    }

    #[test]
    fn display() {
        assert_eq!(TypeTerm::dict(Str, TypeTerm::list(Int)).to_string(), "dict[str, list[int]]");
        assert_eq!(TypeTerm::union_of([Int, NoneT]).to_string(), "int | None");
    }
}
