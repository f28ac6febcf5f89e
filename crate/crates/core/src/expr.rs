//! Expression AST shared by protocols, grammars and synthesized completions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::values::{InstanceBinding, Name, TypeExpr, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    And,
    Or,
    Implies,
    Eq,
    Neq,
    Lt,
    Le,
    Add,
    Sub,
    Union,
    Inter,
    Diff,
    Member,
    Subset,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "/\\",
            BinOp::Or => "\\/",
            BinOp::Implies => "=>",
            BinOp::Eq => "=",
            BinOp::Neq => "/=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Union => "\\cup",
            BinOp::Inter => "\\cap",
            BinOp::Diff => "\\setminus",
            BinOp::Member => "\\in",
            BinOp::Subset => "\\subseteq",
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::And
                | BinOp::Or
                | BinOp::Eq
                | BinOp::Neq
                | BinOp::Add
                | BinOp::Union
                | BinOp::Inter
        )
    }

    pub fn is_idempotent(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Union | BinOp::Inter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantifier {
    Forall,
    Exists,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    /// State variable.
    Var(Name),
    /// Protocol parameter; a `Domain` parameter denotes the set of its elements.
    Param(Name),
    /// Action argument, hole argument or quantifier-bound variable.
    Arg(Name),
    Bool(bool),
    Int(i64),
    EmptySet,
    Singleton(Box<Expr>),
    SetLit(Vec<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Apply(Box<Expr>, Box<Expr>),
    /// `[f EXCEPT ![k] = v]`
    Update(Box<Expr>, Box<Expr>, Box<Expr>),
    /// Quantifier over the elements of a `Domain` parameter.
    Quant(Quantifier, Name, Name, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    HoleCall(Name, Vec<Expr>),
    /// Grammar nonterminal; only appears in production templates.
    Placeholder(Name),
}

impl Expr {
    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn var(n: &str) -> Expr {
        Expr::Var(n.into())
    }

    pub fn arg(n: &str) -> Expr {
        Expr::Arg(n.into())
    }

    pub fn param(n: &str) -> Expr {
        Expr::Param(n.into())
    }

    pub fn singleton(e: Expr) -> Expr {
        Expr::Singleton(Box::new(e))
    }

    /// Number of AST nodes. A quantifier counts its node and its bound-domain
    /// leaf; placeholders count zero so that a template's size is its
    /// operator overhead.
    pub fn size(&self) -> usize {
        match self {
            Expr::Var(_)
            | Expr::Param(_)
            | Expr::Arg(_)
            | Expr::Bool(_)
            | Expr::Int(_)
            | Expr::EmptySet => 1,
            Expr::Placeholder(_) => 0,
            Expr::Singleton(e) | Expr::Not(e) => 1 + e.size(),
            Expr::SetLit(es) => 1 + es.iter().map(Expr::size).sum::<usize>(),
            Expr::HoleCall(_, es) => 1 + es.iter().map(Expr::size).sum::<usize>(),
            Expr::Bin(_, a, b) | Expr::Apply(a, b) => 1 + a.size() + b.size(),
            Expr::Update(a, b, c) | Expr::Ite(a, b, c) => 1 + a.size() + b.size() + c.size(),
            Expr::Quant(_, _, _, body) => 2 + body.size(),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var(_)
            | Expr::Param(_)
            | Expr::Arg(_)
            | Expr::Bool(_)
            | Expr::Int(_)
            | Expr::EmptySet
            | Expr::Placeholder(_) => vec![],
            Expr::Singleton(e) | Expr::Not(e) | Expr::Quant(_, _, _, e) => vec![e],
            Expr::SetLit(es) | Expr::HoleCall(_, es) => es.iter().collect(),
            Expr::Bin(_, a, b) | Expr::Apply(a, b) => vec![a, b],
            Expr::Update(a, b, c) | Expr::Ite(a, b, c) => vec![a, b, c],
        }
    }

    /// Rebuilds this node with each direct child passed through `f`.
    pub fn map_children<E>(&self, f: &mut impl FnMut(&Expr) -> Result<Expr, E>) -> Result<Expr, E> {
        let b = |e: Expr| Box::new(e);
        Ok(match self {
            Expr::Var(_)
            | Expr::Param(_)
            | Expr::Arg(_)
            | Expr::Bool(_)
            | Expr::Int(_)
            | Expr::EmptySet
            | Expr::Placeholder(_) => self.clone(),
            Expr::Singleton(e) => Expr::Singleton(b(f(e)?)),
            Expr::Not(e) => Expr::Not(b(f(e)?)),
            Expr::Quant(q, x, d, e) => Expr::Quant(*q, x.clone(), d.clone(), b(f(e)?)),
            Expr::SetLit(es) => Expr::SetLit(es.iter().map(&mut *f).collect::<Result<_, _>>()?),
            Expr::HoleCall(h, es) => {
                Expr::HoleCall(h.clone(), es.iter().map(&mut *f).collect::<Result<_, _>>()?)
            }
            Expr::Bin(op, l, r) => Expr::Bin(*op, b(f(l)?), b(f(r)?)),
            Expr::Apply(l, r) => Expr::Apply(b(f(l)?), b(f(r)?)),
            Expr::Update(x, y, z) => Expr::Update(b(f(x)?), b(f(y)?), b(f(z)?)),
            Expr::Ite(x, y, z) => Expr::Ite(b(f(x)?), b(f(y)?), b(f(z)?)),
        })
    }

    pub fn any(&self, pred: &impl Fn(&Expr) -> bool) -> bool {
        pred(self) || self.children().into_iter().any(|c| c.any(pred))
    }

    pub fn has_holes(&self) -> bool {
        self.any(&|e| matches!(e, Expr::HoleCall(..)))
    }

    pub fn has_placeholders(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Placeholder(_)))
    }

    /// Free `Arg` references (quantifier-bound names excluded).
    pub fn free_args(&self) -> BTreeSet<Name> {
        fn go(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
            match e {
                Expr::Arg(n) => {
                    if !bound.contains(n) {
                        out.insert(n.clone());
                    }
                }
                Expr::Quant(_, x, _, body) => {
                    bound.push(x.clone());
                    go(body, bound, out);
                    bound.pop();
                }
                _ => e.children().into_iter().for_each(|c| go(c, bound, out)),
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn state_vars(&self) -> BTreeSet<Name> {
        fn go(e: &Expr, out: &mut BTreeSet<Name>) {
            if let Expr::Var(n) = e {
                out.insert(n.clone());
            }
            e.children().into_iter().for_each(|c| go(c, out));
        }
        let mut out = BTreeSet::new();
        go(self, &mut out);
        out
    }

    /// Replaces free `Arg(x)` by `binding[x]`, respecting quantifier shadowing.
    pub fn replace_args(&self, binding: &BTreeMap<Name, Expr>) -> Expr {
        match self {
            Expr::Arg(n) => binding.get(n).cloned().unwrap_or_else(|| self.clone()),
            Expr::Quant(q, x, d, body) if binding.contains_key(x) => {
                let mut inner = binding.clone();
                inner.remove(x);
                Expr::Quant(
                    *q,
                    x.clone(),
                    d.clone(),
                    Box::new(body.replace_args(&inner)),
                )
            }
            _ => self
                .map_children(&mut |c| Ok::<_, ()>(c.replace_args(binding)))
                .expect("infallible"),
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, es: &[Expr]) -> fmt::Result {
    for (i, e) in es.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

/// Canonical, fully parenthesized serialization; parses back to the same AST
/// in the same declaration context.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(n) | Expr::Param(n) | Expr::Arg(n) | Expr::Placeholder(n) => write!(f, "{n}"),
            Expr::Bool(true) => write!(f, "TRUE"),
            Expr::Bool(false) => write!(f, "FALSE"),
            Expr::Int(n) => write!(f, "{n}"),
            Expr::EmptySet => write!(f, "{{}}"),
            Expr::Singleton(e) => write!(f, "{{{e}}}"),
            Expr::SetLit(es) => {
                write!(f, "{{")?;
                write_list(f, es)?;
                write!(f, "}}")
            }
            Expr::Not(e) => write!(f, "(~{e})"),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Apply(g, k) => write!(f, "{g}[{k}]"),
            Expr::Update(g, k, v) => write!(f, "[{g} EXCEPT ![{k}] = {v}]"),
            Expr::Quant(q, x, d, body) => {
                let sym = match q {
                    Quantifier::Forall => "\\A",
                    Quantifier::Exists => "\\E",
                };
                write!(f, "({sym} {x} \\in {d} : {body})")
            }
            Expr::Ite(c, a, b) => write!(f, "(IF {c} THEN {a} ELSE {b})"),
            Expr::HoleCall(h, es) => {
                write!(f, "?{h}(")?;
                write_list(f, es)?;
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound name `{0}`")]
    Unbound(Name),
    #[error("type mismatch evaluating `{0}`")]
    TypeMismatch(String),
    #[error("key {key} outside the domain of function in `{expr}`")]
    KeyOutOfDomain { key: Value, expr: String },
    #[error("integer overflow in `{0}`")]
    Overflow(String),
    #[error("hole `{0}` cannot be evaluated")]
    Hole(Name),
    #[error("nonterminal `{0}` cannot be evaluated")]
    Placeholder(Name),
    #[error("unknown domain `{0}`")]
    UnknownDomain(Name),
}

/// Evaluation environment: an instance, an optional state and argument bindings.
#[derive(Clone, Debug)]
pub struct Env<'a> {
    pub inst: &'a InstanceBinding,
    pub vars: &'a [Name],
    pub state: &'a [Value],
    pub args: Vec<(Name, Value)>,
}

impl<'a> Env<'a> {
    pub fn new(inst: &'a InstanceBinding, vars: &'a [Name], state: &'a [Value]) -> Self {
        Env {
            inst,
            vars,
            state,
            args: Vec::new(),
        }
    }

    /// Environment with no state; only arguments and parameters resolve.
    pub fn args_only(inst: &'a InstanceBinding, args: Vec<(Name, Value)>) -> Self {
        Env {
            inst,
            vars: &[],
            state: &[],
            args,
        }
    }

    pub fn with_args(mut self, args: impl IntoIterator<Item = (Name, Value)>) -> Self {
        self.args.extend(args);
        self
    }

    fn arg(&self, n: &str) -> Option<&Value> {
        self.args
            .iter()
            .rev()
            .find(|(k, _)| &**k == n)
            .map(|(_, v)| v)
    }
}

fn mismatch(e: &Expr) -> EvalError {
    EvalError::TypeMismatch(e.to_string())
}

fn eval_bool(e: &Expr, env: &mut Env<'_>) -> Result<bool, EvalError> {
    eval(e, env)?.as_bool().ok_or_else(|| mismatch(e))
}

fn eval_int(e: &Expr, env: &mut Env<'_>) -> Result<i64, EvalError> {
    eval(e, env)?.as_int().ok_or_else(|| mismatch(e))
}

fn eval_set(e: &Expr, env: &mut Env<'_>) -> Result<BTreeSet<Value>, EvalError> {
    match eval(e, env)? {
        Value::Set(s) => Ok(s),
        _ => Err(mismatch(e)),
    }
}

/// Evaluates a hole-free expression. `And`, `Or`, `Implies` and `Ite`
/// short-circuit left to right.
pub fn eval(e: &Expr, env: &mut Env<'_>) -> Result<Value, EvalError> {
    match e {
        Expr::Var(n) => env
            .vars
            .iter()
            .position(|v| v == n)
            .and_then(|i| env.state.get(i))
            .cloned()
            .or_else(|| env.arg(n).cloned())
            .ok_or_else(|| EvalError::Unbound(n.clone())),
        Expr::Param(n) => env
            .inst
            .param_value(n)
            .or_else(|| env.arg(n).cloned())
            .ok_or_else(|| EvalError::Unbound(n.clone())),
        Expr::Arg(n) => env
            .arg(n)
            .cloned()
            .ok_or_else(|| EvalError::Unbound(n.clone())),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Int(n) => Ok(Value::Int(*n)),
        Expr::EmptySet => Ok(Value::empty_set()),
        Expr::Singleton(x) => Ok(Value::set([eval(x, env)?])),
        Expr::SetLit(xs) => {
            let mut s = BTreeSet::new();
            for x in xs {
                s.insert(eval(x, env)?);
            }
            Ok(Value::Set(s))
        }
        Expr::Not(x) => Ok(Value::Bool(!eval_bool(x, env)?)),
        Expr::Bin(op, l, r) => eval_bin(e, *op, l, r, env),
        Expr::Apply(g, k) => {
            let key = eval(k, env)?;
            match eval(g, env)? {
                Value::Func(mut m) => m.remove(&key).ok_or_else(|| EvalError::KeyOutOfDomain {
                    key,
                    expr: e.to_string(),
                }),
                _ => Err(mismatch(e)),
            }
        }
        Expr::Update(g, k, v) => {
            let key = eval(k, env)?;
            let val = eval(v, env)?;
            match eval(g, env)? {
                Value::Func(mut m) => match m.get_mut(&key) {
                    Some(slot) => {
                        *slot = val;
                        Ok(Value::Func(m))
                    }
                    None => Err(EvalError::KeyOutOfDomain {
                        key,
                        expr: e.to_string(),
                    }),
                },
                _ => Err(mismatch(e)),
            }
        }
        Expr::Quant(q, x, d, body) => {
            let elems = env
                .inst
                .domain_elems(d)
                .ok_or_else(|| EvalError::UnknownDomain(d.clone()))?;
            let want = matches!(q, Quantifier::Exists);
            for v in elems {
                env.args.push((x.clone(), v));
                let r = eval_bool(body, env);
                env.args.pop();
                if r? == want {
                    return Ok(Value::Bool(want));
                }
            }
            Ok(Value::Bool(!want))
        }
        Expr::Ite(c, a, b) => {
            if eval_bool(c, env)? {
                eval(a, env)
            } else {
                eval(b, env)
            }
        }
        Expr::HoleCall(h, _) => Err(EvalError::Hole(h.clone())),
        Expr::Placeholder(n) => Err(EvalError::Placeholder(n.clone())),
    }
}

fn eval_bin(
    e: &Expr,
    op: BinOp,
    l: &Expr,
    r: &Expr,
    env: &mut Env<'_>,
) -> Result<Value, EvalError> {
    let overflow = || EvalError::Overflow(e.to_string());
    Ok(match op {
        BinOp::And => Value::Bool(eval_bool(l, env)? && eval_bool(r, env)?),
        BinOp::Or => Value::Bool(eval_bool(l, env)? || eval_bool(r, env)?),
        BinOp::Implies => Value::Bool(!eval_bool(l, env)? || eval_bool(r, env)?),
        BinOp::Eq => Value::Bool(eval(l, env)? == eval(r, env)?),
        BinOp::Neq => Value::Bool(eval(l, env)? != eval(r, env)?),
        BinOp::Lt => Value::Bool(eval_int(l, env)? < eval_int(r, env)?),
        BinOp::Le => Value::Bool(eval_int(l, env)? <= eval_int(r, env)?),
        BinOp::Add => Value::Int(
            eval_int(l, env)?
                .checked_add(eval_int(r, env)?)
                .ok_or_else(overflow)?,
        ),
        BinOp::Sub => Value::Int(
            eval_int(l, env)?
                .checked_sub(eval_int(r, env)?)
                .ok_or_else(overflow)?,
        ),
        BinOp::Union => {
            let mut a = eval_set(l, env)?;
            a.extend(eval_set(r, env)?);
            Value::Set(a)
        }
        BinOp::Inter => {
            let a = eval_set(l, env)?;
            let b = eval_set(r, env)?;
            Value::Set(a.intersection(&b).cloned().collect())
        }
        BinOp::Diff => {
            let a = eval_set(l, env)?;
            let b = eval_set(r, env)?;
            Value::Set(a.difference(&b).cloned().collect())
        }
        BinOp::Member => {
            let x = eval(l, env)?;
            Value::Bool(eval_set(r, env)?.contains(&x))
        }
        BinOp::Subset => {
            let a = eval_set(l, env)?;
            Value::Bool(a.is_subset(&eval_set(r, env)?))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubstError {
    #[error("no expression supplied for hole `{0}`")]
    MissingHole(Name),
    #[error("hole `{hole}` takes {expected} arguments but was called with {got}")]
    ArityMismatch {
        hole: Name,
        expected: usize,
        got: usize,
    },
}

/// A hole's formal arguments and body, by hole name.
pub type HoleLookup<'a> = dyn Fn(&str) -> Option<(&'a [Name], &'a Expr)> + 'a;

/// Replaces every `HoleCall(h, actuals)` by `h`'s body with its formal
/// arguments bound to `actuals`. `lookup` yields a hole's formals and body.
pub fn substitute_holes<'a>(e: &Expr, lookup: &HoleLookup<'a>) -> Result<Expr, SubstError> {
    match e {
        Expr::HoleCall(h, actuals) => {
            let (formals, body) = lookup(h).ok_or_else(|| SubstError::MissingHole(h.clone()))?;
            if formals.len() != actuals.len() {
                return Err(SubstError::ArityMismatch {
                    hole: h.clone(),
                    expected: formals.len(),
                    got: actuals.len(),
                });
            }
            let actuals = actuals
                .iter()
                .map(|a| substitute_holes(a, lookup))
                .collect::<Result<Vec<_>, _>>()?;
            let binding = formals.iter().cloned().zip(actuals).collect();
            Ok(body.replace_args(&binding))
        }
        _ => e.map_children(&mut |c| substitute_holes(c, lookup)),
    }
}

// ---------------------------------------------------------------------------
// Typing

/// Declarations visible to the type checker.
pub trait TypeScope {
    fn var_type(&self, n: &str) -> Option<TypeExpr>;
    fn param_type(&self, n: &str) -> Option<TypeExpr>;
    fn arg_type(&self, n: &str) -> Option<TypeExpr>;
    fn is_domain(&self, n: &str) -> bool;
    fn hole_type(&self, _n: &str) -> Option<TypeExpr> {
        None
    }
    fn placeholder_type(&self, _n: &str) -> Option<TypeExpr> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct TypeError(pub String);

pub struct Typer<'s> {
    scope: &'s dyn TypeScope,
    bound: Vec<(Name, TypeExpr)>,
}

impl<'s> Typer<'s> {
    pub fn new(scope: &'s dyn TypeScope) -> Self {
        Typer {
            scope,
            bound: Vec::new(),
        }
    }

    pub fn check(&mut self, e: &Expr, want: &TypeExpr) -> Result<(), TypeError> {
        self.infer(e, Some(want)).map(|_| ())
    }

    pub fn infer(&mut self, e: &Expr, expected: Option<&TypeExpr>) -> Result<TypeExpr, TypeError> {
        let t = self.infer_inner(e, expected)?;
        if let Some(want) = expected {
            if &t != want {
                return Err(TypeError(format!("`{e}` has type {t}, expected {want}")));
            }
        }
        Ok(t)
    }

    fn pair(
        &mut self,
        l: &Expr,
        r: &Expr,
        expected: Option<&TypeExpr>,
    ) -> Result<TypeExpr, TypeError> {
        if matches!(l, Expr::EmptySet) {
            let t = self.infer(r, expected)?;
            self.infer(l, Some(&t))?;
            Ok(t)
        } else {
            let t = self.infer(l, expected)?;
            self.infer(r, Some(&t))?;
            Ok(t)
        }
    }

    fn infer_inner(
        &mut self,
        e: &Expr,
        expected: Option<&TypeExpr>,
    ) -> Result<TypeExpr, TypeError> {
        let err = |m: String| Err(TypeError(m));
        match e {
            Expr::Var(n) => self
                .scope
                .var_type(n)
                .ok_or_else(|| TypeError(format!("unknown variable `{n}`"))),
            Expr::Param(n) => self
                .scope
                .param_type(n)
                .ok_or_else(|| TypeError(format!("unknown parameter `{n}`"))),
            Expr::Arg(n) => self
                .bound
                .iter()
                .rev()
                .find(|(k, _)| k == n)
                .map(|(_, t)| t.clone())
                .or_else(|| self.scope.arg_type(n))
                .ok_or_else(|| TypeError(format!("unknown argument `{n}`"))),
            Expr::Bool(_) => Ok(TypeExpr::Bool),
            Expr::Int(_) => Ok(TypeExpr::Int),
            Expr::EmptySet => match expected {
                Some(t @ TypeExpr::Set(_)) => Ok(t.clone()),
                Some(t) => err(format!("`{{}}` used where {t} is expected")),
                None => err("cannot infer the element type of `{}`".into()),
            },
            Expr::Singleton(x) => {
                let t = self.infer(x, expected.and_then(TypeExpr::elem))?;
                Ok(TypeExpr::set_of(t))
            }
            Expr::SetLit(xs) => {
                let mut elem = expected.and_then(TypeExpr::elem).cloned();
                for x in xs {
                    let t = self.infer(x, elem.as_ref())?;
                    elem = Some(t);
                }
                elem.map(TypeExpr::set_of)
                    .ok_or_else(|| TypeError("empty set literal".into()))
            }
            Expr::Not(x) => {
                self.check(x, &TypeExpr::Bool)?;
                Ok(TypeExpr::Bool)
            }
            Expr::Bin(op, l, r) => match op {
                BinOp::And | BinOp::Or | BinOp::Implies => {
                    self.check(l, &TypeExpr::Bool)?;
                    self.check(r, &TypeExpr::Bool)?;
                    Ok(TypeExpr::Bool)
                }
                BinOp::Eq | BinOp::Neq => {
                    self.pair(l, r, None)?;
                    Ok(TypeExpr::Bool)
                }
                BinOp::Lt | BinOp::Le => {
                    self.check(l, &TypeExpr::Int)?;
                    self.check(r, &TypeExpr::Int)?;
                    Ok(TypeExpr::Bool)
                }
                BinOp::Add | BinOp::Sub => {
                    self.check(l, &TypeExpr::Int)?;
                    self.check(r, &TypeExpr::Int)?;
                    Ok(TypeExpr::Int)
                }
                BinOp::Union | BinOp::Inter | BinOp::Diff => {
                    let t = self.pair(l, r, expected)?;
                    if !matches!(t, TypeExpr::Set(_)) {
                        return err(format!("`{e}` applies a set operator to {t}"));
                    }
                    Ok(t)
                }
                BinOp::Subset => {
                    let t = self.pair(l, r, None)?;
                    if !matches!(t, TypeExpr::Set(_)) {
                        return err(format!("`{e}` applies \\subseteq to {t}"));
                    }
                    Ok(TypeExpr::Bool)
                }
                BinOp::Member => {
                    let x = self.infer(l, None)?;
                    self.check(r, &TypeExpr::set_of(x))?;
                    Ok(TypeExpr::Bool)
                }
            },
            Expr::Apply(g, k) => match self.infer(g, None)? {
                TypeExpr::Func(kt, vt) => {
                    self.check(k, &kt)?;
                    Ok(*vt)
                }
                t => err(format!("`{g}` has type {t}, which is not a function")),
            },
            Expr::Update(g, k, v) => match self.infer(g, expected)? {
                TypeExpr::Func(kt, vt) => {
                    self.check(k, &kt)?;
                    self.check(v, &vt)?;
                    Ok(TypeExpr::Func(kt, vt))
                }
                t => err(format!("`{g}` has type {t}, which is not a function")),
            },
            Expr::Quant(_, x, d, body) => {
                if !self.scope.is_domain(d) {
                    return err(format!("quantifier domain `{d}` is not a Domain parameter"));
                }
                self.bound.push((x.clone(), TypeExpr::Domain(d.clone())));
                let r = self.check(body, &TypeExpr::Bool);
                self.bound.pop();
                r?;
                Ok(TypeExpr::Bool)
            }
            Expr::Ite(c, a, b) => {
                self.check(c, &TypeExpr::Bool)?;
                self.pair(a, b, expected)
            }
            Expr::HoleCall(h, args) => {
                for a in args {
                    self.infer(a, None)?;
                }
                self.scope
                    .hole_type(h)
                    .ok_or_else(|| TypeError(format!("unknown hole `{h}`")))
            }
            Expr::Placeholder(n) => self
                .scope
                .placeholder_type(n)
                .ok_or_else(|| TypeError(format!("unknown nonterminal `{n}`"))),
        }
    }
}
