//! Runtime values, types and protocol states.
//!
//! Domain elements are opaque: the only operations on them are equality and
//! membership. Functions are total finite maps, so a function update is a
//! pure map update.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Interned identifier used throughout the AST and value model.
pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeExpr {
    Bool,
    Int,
    /// Element of the opaque set bound to the named `Domain` parameter.
    Domain(Name),
    Set(Box<TypeExpr>),
    Func(Box<TypeExpr>, Box<TypeExpr>),
}

impl TypeExpr {
    pub fn set_of(t: TypeExpr) -> TypeExpr {
        TypeExpr::Set(Box::new(t))
    }

    pub fn func(k: TypeExpr, v: TypeExpr) -> TypeExpr {
        TypeExpr::Func(Box::new(k), Box::new(v))
    }

    pub fn elem(&self) -> Option<&TypeExpr> {
        match self {
            TypeExpr::Set(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Bool => write!(f, "Bool"),
            TypeExpr::Int => write!(f, "Int"),
            TypeExpr::Domain(d) => write!(f, "{d}"),
            TypeExpr::Set(t) => write!(f, "Set({t})"),
            TypeExpr::Func(k, v) => write!(f, "Func({k}, {v})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Elem { domain: Name, id: Name },
    Set(BTreeSet<Value>),
    Func(BTreeMap<Value, Value>),
}

impl Value {
    pub fn elem(domain: &str, id: &str) -> Value {
        Value::Elem {
            domain: name(domain),
            id: name(id),
        }
    }

    pub fn empty_set() -> Value {
        Value::Set(BTreeSet::new())
    }

    pub fn set<I: IntoIterator<Item = Value>>(items: I) -> Value {
        Value::Set(items.into_iter().collect())
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_set(&self) -> Option<&BTreeSet<Value>> {
        match self {
            Value::Set(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(true) => write!(f, "TRUE"),
            Value::Bool(false) => write!(f, "FALSE"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Elem { id, .. } => write!(f, "{id}"),
            Value::Set(s) => {
                write!(f, "{{")?;
                for (i, v) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "}}")
            }
            Value::Func(m) => {
                write!(f, "(")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, " @@ ")?;
                    }
                    write!(f, "{k} :> {v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("type {0} has no finite universe without integer bounds")]
    UnboundedType(TypeExpr),
    #[error("domain `{0}` is not bound in this instance")]
    UnknownDomain(Name),
    #[error("universe of {0} is too large to enumerate")]
    TooLarge(TypeExpr),
}

/// A concrete assignment to a protocol's parameters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InstanceBinding {
    pub consts: BTreeMap<Name, Value>,
    pub domains: BTreeMap<Name, Vec<Name>>,
    /// Inclusive range used when an `Int` universe has to be enumerated.
    pub int_bounds: Option<(i64, i64)>,
}

impl InstanceBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_domain(mut self, domain: &str, ids: &[&str]) -> Self {
        self.domains
            .insert(name(domain), ids.iter().map(|s| name(s)).collect());
        self
    }

    pub fn with_const(mut self, param: &str, v: Value) -> Self {
        self.consts.insert(name(param), v);
        self
    }

    pub fn domain_elems(&self, domain: &str) -> Option<Vec<Value>> {
        let (d, ids) = self.domains.get_key_value(domain)?;
        Some(
            ids.iter()
                .map(|id| Value::Elem {
                    domain: d.clone(),
                    id: id.clone(),
                })
                .collect(),
        )
    }

    /// Value of a parameter reference: a domain denotes the set of its elements.
    pub fn param_value(&self, param: &str) -> Option<Value> {
        if let Some(v) = self.consts.get(param) {
            return Some(v.clone());
        }
        self.domain_elems(param).map(Value::set)
    }

    pub fn domain_size(&self, domain: &str) -> usize {
        self.domains.get(domain).map_or(0, Vec::len)
    }
}

const UNIVERSE_LIMIT: usize = 1 << 20;

/// All inhabitants of `t`, in a fixed order: `false < true`, domain elements
/// in declaration order, integers ascending, sets by subset bitmask over the
/// element universe, functions in odometer order over the key universe.
pub fn universe(t: &TypeExpr, inst: &InstanceBinding) -> Result<Vec<Value>, ValueError> {
    match t {
        TypeExpr::Bool => Ok(vec![Value::Bool(false), Value::Bool(true)]),
        TypeExpr::Int => match inst.int_bounds {
            Some((lo, hi)) => Ok((lo..=hi).map(Value::Int).collect()),
            None => Err(ValueError::UnboundedType(t.clone())),
        },
        TypeExpr::Domain(d) => inst
            .domain_elems(d)
            .ok_or_else(|| ValueError::UnknownDomain(d.clone())),
        TypeExpr::Set(elem) => {
            let base = universe(elem, inst)?;
            if base.len() >= 20 {
                return Err(ValueError::TooLarge(t.clone()));
            }
            let mut out = Vec::with_capacity(1 << base.len());
            for mask in 0u32..(1u32 << base.len()) {
                let s = base
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, v)| v.clone())
                    .collect();
                out.push(Value::Set(s));
            }
            Ok(out)
        }
        TypeExpr::Func(k, v) => {
            let keys = universe(k, inst)?;
            let vals = universe(v, inst)?;
            let total = (vals.len() as f64).powi(keys.len() as i32);
            if total > UNIVERSE_LIMIT as f64 {
                return Err(ValueError::TooLarge(t.clone()));
            }
            let mut out = Vec::new();
            let mut idx = vec![0usize; keys.len()];
            if vals.is_empty() && !keys.is_empty() {
                return Ok(out);
            }
            loop {
                out.push(Value::Func(
                    keys.iter()
                        .cloned()
                        .zip(idx.iter().map(|&i| vals[i].clone()))
                        .collect(),
                ));
                // odometer, last key varies fastest
                let mut pos = keys.len();
                loop {
                    if pos == 0 {
                        return Ok(out);
                    }
                    pos -= 1;
                    idx[pos] += 1;
                    if idx[pos] < vals.len() {
                        break;
                    }
                    idx[pos] = 0;
                }
            }
        }
    }
}

/// True iff `v` inhabits `t` under `inst`.
pub fn type_check(v: &Value, t: &TypeExpr, inst: &InstanceBinding) -> bool {
    match (v, t) {
        (Value::Bool(_), TypeExpr::Bool) => true,
        (Value::Int(_), TypeExpr::Int) => true,
        (Value::Elem { domain, id }, TypeExpr::Domain(d)) => {
            domain == d && inst.domains.get(d).is_some_and(|ids| ids.contains(id))
        }
        (Value::Set(s), TypeExpr::Set(elem)) => s.iter().all(|x| type_check(x, elem, inst)),
        (Value::Func(m), TypeExpr::Func(k, val)) => {
            if !m
                .iter()
                .all(|(a, b)| type_check(a, k, inst) && type_check(b, val, inst))
            {
                return false;
            }
            // total over the key universe when it is enumerable
            match universe(k, inst) {
                Ok(keys) => keys.len() == m.len() && keys.iter().all(|key| m.contains_key(key)),
                Err(_) => true,
            }
        }
        _ => false,
    }
}

/// Variable assignment in declaration order of the protocol's variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub Vec<Value>);

impl State {
    pub fn get(&self, idx: usize) -> &Value {
        &self.0[idx]
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }
}
