//! Protocols and protocol sketches: data model, DSL parser, validation,
//! completion and serialization.
//!
//! ```text
//! const Node : Domain
//! var vote_yes : Set(Node)
//! init vote_yes = {}
//! fair action VoteYes(n: Node) {
//!   update vote_yes := ?h(vote_yes, n)
//! }
//! invariant Safe : go_commit /= {} => vote_yes = Node
//! liveness Live : TRUE ~> go_commit = Node
//! option deadlock_check : false
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::expr::{substitute_holes, Expr, TypeScope, Typer};
use crate::parser::{resolve, Parser, Pos, RefKind, SyntaxError, Tok};
use crate::values::{Name, TypeExpr};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Domain,
    Const(TypeExpr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: Name,
    pub kind: ParamKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostClause {
    pub var: Name,
    pub rhs: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub name: Name,
    /// `(argument, domain)` pairs; the action's domain is their product.
    pub args: Vec<(Name, Name)>,
    pub pre: Vec<Expr>,
    pub post: Vec<PostClause>,
    /// Strongly fair: must be taken if enabled infinitely often.
    pub fair: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HoleKind {
    Pre,
    Post,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hole {
    pub name: Name,
    /// Formal arguments, named after the parameter, variable or action
    /// argument passed at the call site.
    pub args: Vec<(Name, TypeExpr)>,
    pub output_type: TypeExpr,
    pub kind: HoleKind,
    pub action: Name,
    /// For post-holes, the updated variable.
    pub target: Option<Name>,
}

impl Hole {
    pub fn formals(&self) -> Vec<Name> {
        self.args.iter().map(|(n, _)| n.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Property {
    Invariant {
        name: Name,
        pred: Expr,
    },
    /// `p ~> q`; `TRUE ~> q` expresses eventually-q.
    LeadsTo {
        name: Name,
        p: Expr,
        q: Expr,
    },
}

impl Property {
    pub fn name(&self) -> &Name {
        match self {
            Property::Invariant { name, .. } | Property::LeadsTo { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sketch {
    pub params: Vec<Param>,
    pub vars: Vec<(Name, TypeExpr)>,
    pub holes: Vec<Hole>,
    pub init: Vec<Expr>,
    pub actions: Vec<Action>,
    pub properties: Vec<Property>,
    pub check_deadlock: bool,
}

/// A hole-free sketch.
pub type Protocol = Sketch;

/// One expression per hole; free `Arg`s refer to the hole's formals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Completion(pub BTreeMap<Name, Expr>);

impl Completion {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, hole: &str, e: Expr) -> Self {
        self.0.insert(hole.into(), e);
        self
    }

    pub fn get(&self, hole: &str) -> Option<&Expr> {
        self.0.get(hole)
    }

    pub fn size(&self) -> usize {
        self.0.values().map(Expr::size).sum()
    }
}

impl fmt::Display for Completion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (h, e) in &self.0 {
            writeln!(f, "{h} = {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SketchError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("type error at {pos}: {msg}")]
    Type { pos: Pos, msg: String },
    #[error("unresolved name at {pos}: {msg}")]
    Unresolved { pos: Pos, msg: String },
    #[error("hole misuse at {pos}: {msg}")]
    HoleMisuse { pos: Pos, msg: String },
    #[error("invalid sketch: {0}")]
    Validation(String),
    #[error("no expression supplied for hole `{0}`")]
    MissingHole(Name),
    #[error("completion for `{hole}` is ill-typed: {msg}")]
    CompletionType { hole: Name, msg: String },
    #[error("completion for `{hole}` mentions `{arg}`, which is not an argument of the hole")]
    FreeArg { hole: Name, arg: Name },
}

impl Sketch {
    pub fn var_names(&self) -> Vec<Name> {
        self.vars.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn var_index(&self, v: &str) -> Option<usize> {
        self.vars.iter().position(|(n, _)| &**n == v)
    }

    pub fn var_type(&self, v: &str) -> Option<&TypeExpr> {
        self.vars.iter().find(|(n, _)| &**n == v).map(|(_, t)| t)
    }

    pub fn param(&self, p: &str) -> Option<&Param> {
        self.params.iter().find(|x| &*x.name == p)
    }

    pub fn is_domain(&self, p: &str) -> bool {
        matches!(
            self.param(p),
            Some(Param {
                kind: ParamKind::Domain,
                ..
            })
        )
    }

    pub fn param_type(&self, p: &str) -> Option<TypeExpr> {
        self.param(p).map(|x| match &x.kind {
            ParamKind::Domain => TypeExpr::set_of(TypeExpr::Domain(x.name.clone())),
            ParamKind::Const(t) => t.clone(),
        })
    }

    pub fn action(&self, a: &str) -> Option<&Action> {
        self.actions.iter().find(|x| &*x.name == a)
    }

    pub fn hole(&self, h: &str) -> Option<&Hole> {
        self.holes.iter().find(|x| &*x.name == h)
    }

    pub fn holes_of<'a>(&'a self, action: &'a str) -> impl Iterator<Item = &'a Hole> + 'a {
        self.holes.iter().filter(move |h| &*h.action == action)
    }

    pub fn is_complete(&self) -> bool {
        self.holes.is_empty()
    }

    pub fn invariants(&self) -> impl Iterator<Item = (&Name, &Expr)> {
        self.properties.iter().filter_map(|p| match p {
            Property::Invariant { name, pred } => Some((name, pred)),
            _ => None,
        })
    }

    pub fn leads_to(&self) -> impl Iterator<Item = (&Name, &Expr, &Expr)> {
        self.properties.iter().filter_map(|p| match p {
            Property::LeadsTo { name, p, q } => Some((name, p, q)),
            _ => None,
        })
    }

    /// Replaces every hole by its completion expression.
    pub fn apply_completion(&self, c: &Completion) -> Result<Protocol, SketchError> {
        for hole in &self.holes {
            let body = c
                .get(&hole.name)
                .ok_or_else(|| SketchError::MissingHole(hole.name.clone()))?;
            self.check_completion_expr(hole, body)?;
        }
        let formals: BTreeMap<Name, Vec<Name>> = self
            .holes
            .iter()
            .map(|h| (h.name.clone(), h.formals()))
            .collect();
        let lookup =
            |h: &str| -> Option<(&[Name], &Expr)> { Some((formals.get(h)?.as_slice(), c.get(h)?)) };
        let subst = |e: &Expr| {
            substitute_holes(e, &lookup).map_err(|err| match err {
                crate::expr::SubstError::MissingHole(h) => SketchError::MissingHole(h),
                other => SketchError::Validation(other.to_string()),
            })
        };
        let mut out = self.clone();
        out.holes.clear();
        for a in &mut out.actions {
            for p in &mut a.pre {
                *p = subst(p)?;
            }
            for clause in &mut a.post {
                clause.rhs = subst(&clause.rhs)?;
            }
        }
        Ok(out)
    }

    /// Checks that `body` is a well-typed expression over the hole's formals.
    pub fn check_completion_expr(&self, hole: &Hole, body: &Expr) -> Result<(), SketchError> {
        let formals: BTreeSet<Name> = hole.formals().into_iter().collect();
        if let Some(arg) = body.free_args().into_iter().find(|a| !formals.contains(a)) {
            return Err(SketchError::FreeArg {
                hole: hole.name.clone(),
                arg,
            });
        }
        if body.has_holes() || body.has_placeholders() || !body.state_vars().is_empty() {
            return Err(SketchError::CompletionType {
                hole: hole.name.clone(),
                msg: format!("`{body}` may only refer to the hole's arguments"),
            });
        }
        let scope = HoleScope { sketch: self, hole };
        Typer::new(&scope)
            .check(body, &hole.output_type)
            .map_err(|e| SketchError::CompletionType {
                hole: hole.name.clone(),
                msg: e.0,
            })
    }

    /// Parses `hole = expr` lines against this sketch's holes.
    pub fn parse_completion(&self, text: &str) -> Result<Completion, SketchError> {
        let mut p = Parser::new(text)?;
        let mut c = Completion::new();
        while !p.at_eof() {
            let pos = p.pos();
            let h = p.ident()?;
            let hole = self.hole(&h).ok_or_else(|| SketchError::Unresolved {
                pos,
                msg: format!("unknown hole `{h}`"),
            })?;
            p.expect_sym("=")?;
            let raw = p.parse_expr()?;
            let e = resolve(&raw, &|n| self.classify_for_hole(hole, n))
                .map_err(|msg| SketchError::Unresolved { pos, msg })?;
            self.check_completion_expr(hole, &e)?;
            c.0.insert(h, e);
        }
        Ok(c)
    }

    pub(crate) fn classify_for_hole(&self, hole: &Hole, n: &str) -> Option<RefKind> {
        if hole.args.iter().any(|(a, _)| &**a == n) {
            Some(RefKind::Arg)
        } else if self.param(n).is_some() {
            Some(RefKind::Param)
        } else {
            None
        }
    }

    /// Parseable DSL text for this sketch or protocol.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for p in &self.params {
            match &p.kind {
                ParamKind::Domain => writeln!(out, "const {} : Domain", p.name),
                ParamKind::Const(t) => writeln!(out, "const {} : {t}", p.name),
            }
            .unwrap();
        }
        for (v, t) in &self.vars {
            writeln!(out, "var {v} : {t}").unwrap();
        }
        for e in &self.init {
            writeln!(out, "init {e}").unwrap();
        }
        for a in &self.actions {
            let args: Vec<String> = a.args.iter().map(|(x, d)| format!("{x}: {d}")).collect();
            let fair = if a.fair { "fair " } else { "" };
            writeln!(out, "{fair}action {}({}) {{", a.name, args.join(", ")).unwrap();
            for p in &a.pre {
                writeln!(out, "  require {p}").unwrap();
            }
            for c in &a.post {
                writeln!(out, "  update {} := {}", c.var, c.rhs).unwrap();
            }
            writeln!(out, "}}").unwrap();
        }
        for p in &self.properties {
            match p {
                Property::Invariant { name, pred } => writeln!(out, "invariant {name} : {pred}"),
                Property::LeadsTo { name, p, q } => writeln!(out, "liveness {name} : {p} ~> {q}"),
            }
            .unwrap();
        }
        writeln!(out, "option deadlock_check : {}", self.check_deadlock).unwrap();
        out
    }
}

/// Convenience alias matching the protocol output step.
pub fn serialize_protocol(p: &Protocol) -> String {
    p.serialize()
}

struct SketchScope<'a> {
    sketch: &'a Sketch,
    args: &'a [(Name, Name)],
}

impl TypeScope for SketchScope<'_> {
    fn var_type(&self, n: &str) -> Option<TypeExpr> {
        self.sketch.var_type(n).cloned()
    }
    fn param_type(&self, n: &str) -> Option<TypeExpr> {
        self.sketch.param_type(n)
    }
    fn arg_type(&self, n: &str) -> Option<TypeExpr> {
        self.args
            .iter()
            .find(|(a, _)| &**a == n)
            .map(|(_, d)| TypeExpr::Domain(d.clone()))
    }
    fn is_domain(&self, n: &str) -> bool {
        self.sketch.is_domain(n)
    }
    fn hole_type(&self, n: &str) -> Option<TypeExpr> {
        self.sketch.hole(n).map(|h| h.output_type.clone())
    }
}

/// Typing scope for expressions over a hole's formal arguments.
pub struct HoleScope<'a> {
    pub sketch: &'a Sketch,
    pub hole: &'a Hole,
}

impl TypeScope for HoleScope<'_> {
    fn var_type(&self, _: &str) -> Option<TypeExpr> {
        None
    }
    fn param_type(&self, n: &str) -> Option<TypeExpr> {
        self.sketch.param_type(n)
    }
    fn arg_type(&self, n: &str) -> Option<TypeExpr> {
        self.hole
            .args
            .iter()
            .find(|(a, _)| &**a == n)
            .map(|(_, t)| t.clone())
    }
    fn is_domain(&self, n: &str) -> bool {
        self.sketch.is_domain(n)
    }
}

// ---------------------------------------------------------------------------
// Parsing

struct Builder {
    sk: Sketch,
    option_seen: bool,
}

pub fn parse_sketch(text: &str) -> Result<Sketch, SketchError> {
    let mut p = Parser::new(text)?;
    let mut b = Builder {
        sk: Sketch {
            params: vec![],
            vars: vec![],
            holes: vec![],
            init: vec![],
            actions: vec![],
            properties: vec![],
            check_deadlock: false,
        },
        option_seen: false,
    };
    // Declarations first so that later blocks can refer to any of them.
    let mut deferred: Vec<(Pos, Block)> = Vec::new();
    while !p.at_eof() {
        let pos = p.pos();
        let kw = match p.peek() {
            Tok::Ident(w) => w.clone(),
            t => {
                return p
                    .error(format!("expected a declaration, found {t}"))
                    .map_err(Into::into)
            }
        };
        match kw.as_str() {
            "const" => {
                p.bump();
                let n = p.ident()?;
                p.expect_sym(":")?;
                let kind = if p.eat_word("Domain") {
                    ParamKind::Domain
                } else {
                    ParamKind::Const(p.parse_type()?)
                };
                b.declare(pos, &n)?;
                b.sk.params.push(Param { name: n, kind });
            }
            "var" => {
                p.bump();
                let n = p.ident()?;
                p.expect_sym(":")?;
                let t = p.parse_type()?;
                b.declare(pos, &n)?;
                b.sk.vars.push((n, t));
            }
            "init" => {
                p.bump();
                deferred.push((pos, Block::Init(p.parse_expr()?)));
            }
            "fair" | "action" => {
                let fair = p.eat_word("fair");
                p.expect_word("action")?;
                let n = p.ident()?;
                let mut args = Vec::new();
                if p.eat_sym("(") {
                    if !p.is_sym(")") {
                        loop {
                            let x = p.ident()?;
                            p.expect_sym(":")?;
                            let d = p.ident()?;
                            args.push((x, d));
                            if !p.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    p.expect_sym(")")?;
                }
                p.expect_sym("{")?;
                let mut lines = Vec::new();
                while !p.eat_sym("}") {
                    let lpos = p.pos();
                    if p.eat_word("require") {
                        lines.push((lpos, Line::Require(p.parse_expr()?)));
                    } else if p.eat_word("update") {
                        let v = p.ident()?;
                        p.expect_sym(":=")?;
                        lines.push((lpos, Line::Update(v, p.parse_expr()?)));
                    } else {
                        return p
                            .error(format!(
                                "expected `require`, `update` or `}}`, found {}",
                                p.peek()
                            ))
                            .map_err(Into::into);
                    }
                }
                b.declare(pos, &n)?;
                deferred.push((
                    pos,
                    Block::Action {
                        name: n,
                        args,
                        fair,
                        lines,
                    },
                ));
            }
            "invariant" => {
                p.bump();
                let n = p.ident()?;
                p.expect_sym(":")?;
                deferred.push((pos, Block::Invariant(n, p.parse_expr()?)));
            }
            "liveness" => {
                p.bump();
                let n = p.ident()?;
                p.expect_sym(":")?;
                let lhs = p.parse_expr()?;
                p.expect_sym("~>")?;
                let rhs = p.parse_expr()?;
                deferred.push((pos, Block::Liveness(n, lhs, rhs)));
            }
            "option" => {
                p.bump();
                let key = p.ident()?;
                p.expect_sym(":")?;
                if &*key != "deadlock_check" {
                    return Err(SketchError::Validation(format!(
                        "unknown option `{key}` at {pos}"
                    )));
                }
                b.sk.check_deadlock = match p.bump() {
                    Tok::Ident(w) if w == "true" => true,
                    Tok::Ident(w) if w == "false" => false,
                    t => {
                        return Err(SyntaxError {
                            pos,
                            msg: format!("expected true or false, found {t}"),
                        }
                        .into())
                    }
                };
                b.option_seen = true;
            }
            other => {
                return p
                    .error(format!("unknown declaration `{other}`"))
                    .map_err(Into::into);
            }
        }
    }
    b.check_types()?;
    for (pos, block) in deferred {
        b.add_block(pos, block)?;
    }
    if b.sk.actions.is_empty() {
        return Err(SketchError::Validation(
            "a protocol needs at least one action".into(),
        ));
    }
    Ok(b.sk)
}

enum Line {
    Require(Expr),
    Update(Name, Expr),
}

enum Block {
    Init(Expr),
    Action {
        name: Name,
        args: Vec<(Name, Name)>,
        fair: bool,
        lines: Vec<(Pos, Line)>,
    },
    Invariant(Name, Expr),
    Liveness(Name, Expr, Expr),
}

fn misuse(pos: Pos, msg: impl Into<String>) -> SketchError {
    SketchError::HoleMisuse {
        pos,
        msg: msg.into(),
    }
}

impl Builder {
    fn declare(&self, pos: Pos, n: &str) -> Result<(), SketchError> {
        let taken = self.sk.params.iter().any(|p| &*p.name == n)
            || self.sk.vars.iter().any(|(v, _)| &**v == n)
            || self.sk.actions.iter().any(|a| &*a.name == n);
        if taken {
            return Err(SketchError::Validation(format!(
                "`{n}` declared twice (at {pos})"
            )));
        }
        Ok(())
    }

    fn check_types(&self) -> Result<(), SketchError> {
        fn ok(sk: &Sketch, t: &TypeExpr) -> Result<(), String> {
            match t {
                TypeExpr::Bool | TypeExpr::Int => Ok(()),
                TypeExpr::Domain(d) if sk.is_domain(d) => Ok(()),
                TypeExpr::Domain(d) => Err(format!("`{d}` is not a Domain parameter")),
                TypeExpr::Set(e) => ok(sk, e),
                TypeExpr::Func(k, v) => {
                    if !matches!(**k, TypeExpr::Bool | TypeExpr::Int | TypeExpr::Domain(_)) {
                        return Err(format!("function key type {k} is not enumerable"));
                    }
                    ok(sk, k)?;
                    ok(sk, v)
                }
            }
        }
        let consts = self.sk.params.iter().filter_map(|p| match &p.kind {
            ParamKind::Const(t) => Some(t),
            ParamKind::Domain => None,
        });
        for t in consts.chain(self.sk.vars.iter().map(|(_, t)| t)) {
            ok(&self.sk, t).map_err(|msg| SketchError::Type {
                pos: Pos::default(),
                msg,
            })?;
        }
        Ok(())
    }

    fn classify(&self, n: &str, args: &[(Name, Name)]) -> Option<RefKind> {
        if args.iter().any(|(a, _)| &**a == n) {
            Some(RefKind::Arg)
        } else if self.sk.var_index(n).is_some() {
            Some(RefKind::Var)
        } else if self.sk.param(n).is_some() {
            Some(RefKind::Param)
        } else {
            None
        }
    }

    fn resolve(&self, pos: Pos, e: &Expr, args: &[(Name, Name)]) -> Result<Expr, SketchError> {
        resolve(e, &|n| self.classify(n, args)).map_err(|msg| SketchError::Unresolved { pos, msg })
    }

    fn typecheck(
        &self,
        pos: Pos,
        e: &Expr,
        want: &TypeExpr,
        args: &[(Name, Name)],
    ) -> Result<(), SketchError> {
        let scope = SketchScope {
            sketch: &self.sk,
            args,
        };
        Typer::new(&scope)
            .check(e, want)
            .map_err(|err| SketchError::Type { pos, msg: err.0 })
    }

    fn state_pred(&self, pos: Pos, raw: &Expr, what: &str) -> Result<Expr, SketchError> {
        let e = self.resolve(pos, raw, &[])?;
        if e.has_holes() {
            return Err(misuse(pos, format!("holes are not allowed in {what}")));
        }
        self.typecheck(pos, &e, &TypeExpr::Bool, &[])?;
        Ok(e)
    }

    fn add_block(&mut self, pos: Pos, block: Block) -> Result<(), SketchError> {
        match block {
            Block::Init(raw) => {
                let e = self.state_pred(pos, &raw, "init")?;
                self.sk.init.push(e);
            }
            Block::Invariant(n, raw) => {
                let pred = self.state_pred(pos, &raw, "properties")?;
                self.sk
                    .properties
                    .push(Property::Invariant { name: n, pred });
            }
            Block::Liveness(n, p, q) => {
                let p = self.state_pred(pos, &p, "properties")?;
                let q = self.state_pred(pos, &q, "properties")?;
                self.sk.properties.push(Property::LeadsTo { name: n, p, q });
            }
            Block::Action {
                name,
                args,
                fair,
                lines,
            } => self.add_action(pos, name, args, fair, lines)?,
        }
        Ok(())
    }

    fn add_action(
        &mut self,
        pos: Pos,
        name: Name,
        args: Vec<(Name, Name)>,
        fair: bool,
        lines: Vec<(Pos, Line)>,
    ) -> Result<(), SketchError> {
        let mut seen = BTreeSet::new();
        for (x, d) in &args {
            if !self.sk.is_domain(d) {
                return Err(SketchError::Type {
                    pos,
                    msg: format!(
                        "argument `{x}` ranges over `{d}`, which is not a Domain parameter"
                    ),
                });
            }
            if !seen.insert(x.clone())
                || self.sk.var_index(x).is_some()
                || self.sk.param(x).is_some()
            {
                return Err(SketchError::Validation(format!(
                    "argument `{x}` of `{name}` clashes with another name"
                )));
            }
        }
        let mut action = Action {
            name: name.clone(),
            args: args.clone(),
            pre: vec![],
            post: vec![],
            fair,
        };
        for (lpos, line) in lines {
            match line {
                Line::Require(raw) => {
                    let e = self.resolve(lpos, &raw, &args)?;
                    if let Expr::HoleCall(h, call_args) = &e {
                        self.add_hole(lpos, &action, h, call_args, HoleKind::Pre, None)?;
                    } else if e.has_holes() {
                        return Err(misuse(
                            lpos,
                            "a pre-hole must be a whole `require` condition",
                        ));
                    } else {
                        self.typecheck(lpos, &e, &TypeExpr::Bool, &args)?;
                    }
                    action.pre.push(e);
                }
                Line::Update(v, raw) => {
                    let Some(vt) = self.sk.var_type(&v).cloned() else {
                        return Err(SketchError::Unresolved {
                            pos: lpos,
                            msg: format!("`{v}` is not a variable"),
                        });
                    };
                    if action.post.iter().any(|c| c.var == v) {
                        return Err(SketchError::Validation(format!(
                            "`{v}` updated twice in `{name}`"
                        )));
                    }
                    let e = self.resolve(lpos, &raw, &args)?;
                    if let Expr::HoleCall(h, call_args) = &e {
                        self.add_hole(
                            lpos,
                            &action,
                            h,
                            call_args,
                            HoleKind::Post,
                            Some((v.clone(), vt)),
                        )?;
                    } else if e.has_holes() {
                        return Err(misuse(
                            lpos,
                            "a post-hole must be the whole right-hand side of an update",
                        ));
                    } else {
                        self.typecheck(lpos, &e, &vt, &args)?;
                    }
                    action.post.push(PostClause { var: v, rhs: e });
                }
            }
        }
        self.sk.actions.push(action);
        Ok(())
    }

    fn add_hole(
        &mut self,
        pos: Pos,
        action: &Action,
        h: &Name,
        call_args: &[Expr],
        kind: HoleKind,
        target: Option<(Name, TypeExpr)>,
    ) -> Result<(), SketchError> {
        if self.sk.hole(h).is_some() {
            return Err(misuse(pos, format!("hole `{h}` appears more than once")));
        }
        let mut formals: Vec<(Name, TypeExpr)> = Vec::new();
        for a in call_args {
            let (n, t) = match a {
                Expr::Var(n) => (n.clone(), self.sk.var_type(n).cloned()),
                Expr::Param(n) => (n.clone(), self.sk.param_type(n)),
                Expr::Arg(n) => (
                    n.clone(),
                    action
                        .args
                        .iter()
                        .find(|(x, _)| x == n)
                        .map(|(_, d)| TypeExpr::Domain(d.clone())),
                ),
                other => {
                    return Err(misuse(
                        pos,
                        format!("hole arguments must be names, found `{other}`"),
                    ));
                }
            };
            if formals.iter().any(|(m, _)| *m == n) {
                return Err(misuse(pos, format!("`{n}` passed twice to hole `{h}`")));
            }
            let t = t.ok_or_else(|| SketchError::Unresolved {
                pos,
                msg: format!("unknown name `{n}`"),
            })?;
            formals.push((n, t));
        }
        let (output_type, target) = match (kind, target) {
            (HoleKind::Pre, _) => (TypeExpr::Bool, None),
            (HoleKind::Post, Some((v, t))) => (t, Some(v)),
            (HoleKind::Post, None) => unreachable!("post-holes always have a target"),
        };
        self.sk.holes.push(Hole {
            name: h.clone(),
            args: formals,
            output_type,
            kind,
            action: action.name.clone(),
            target,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::BinOp;

    pub(crate) const FIG1: &str = r"
const Node : Domain
var vote_yes : Set(Node)
var go_commit : Set(Node)
init vote_yes = {}
init go_commit = {}
fair action GoCommit {
  require vote_yes = Node
  update go_commit := Node
}
fair action VoteYes(n: Node) {
  update vote_yes := vote_yes \cup {n}
}
invariant Safe : go_commit /= {} => vote_yes = Node
liveness Commit : TRUE ~> go_commit = Node
";

    fn fig1_sketch() -> Sketch {
        parse_sketch(&FIG1.replace("vote_yes \\cup {n}", "?h(vote_yes, n)")).unwrap()
    }

    #[test]
    fn parses_fig1_protocol() {
        let sk = parse_sketch(FIG1).unwrap();
        assert_eq!(sk.actions.len(), 2);
        assert!(sk.holes.is_empty());
        assert!(sk.actions.iter().all(|a| a.fair));
        assert_eq!(sk.properties.len(), 2);
        assert_eq!(sk.actions[0].pre[0].to_string(), "(vote_yes = Node)");
    }

    #[test]
    fn parses_post_hole() {
        let sk = fig1_sketch();
        assert_eq!(sk.holes.len(), 1);
        let h = &sk.holes[0];
        assert_eq!(h.kind, HoleKind::Post);
        assert_eq!(
            h.output_type,
            TypeExpr::set_of(TypeExpr::Domain("Node".into()))
        );
        assert_eq!(&*h.action, "VoteYes");
        assert_eq!(h.formals(), vec![Name::from("vote_yes"), Name::from("n")]);
        assert_eq!(h.args[1].1, TypeExpr::Domain("Node".into()));
    }

    #[test]
    fn completion_restores_fig1() {
        let sk = fig1_sketch();
        let c = Completion::new().with(
            "h",
            Expr::bin(
                BinOp::Union,
                Expr::arg("vote_yes"),
                Expr::singleton(Expr::arg("n")),
            ),
        );
        let p = sk.apply_completion(&c).unwrap();
        assert_eq!(p, parse_sketch(FIG1).unwrap());
        let hole_free = parse_sketch(FIG1).unwrap();
        assert_eq!(
            hole_free.apply_completion(&Completion::new()).unwrap(),
            hole_free
        );
    }

    #[test]
    fn completion_errors() {
        let sk = fig1_sketch();
        assert_eq!(
            sk.apply_completion(&Completion::new()),
            Err(SketchError::MissingHole("h".into()))
        );
        let bad = Completion::new().with("h", Expr::arg("m"));
        assert!(matches!(
            sk.apply_completion(&bad),
            Err(SketchError::FreeArg { .. })
        ));
        let ill = Completion::new().with("h", Expr::Bool(true));
        assert!(matches!(
            sk.apply_completion(&ill),
            Err(SketchError::CompletionType { .. })
        ));
    }

    #[test]
    fn completion_file_parses() {
        let sk = fig1_sketch();
        let c = sk.parse_completion("h = vote_yes \\cup {n}\n").unwrap();
        assert_eq!(c.get("h").unwrap().to_string(), "(vote_yes \\cup {n})");
        assert!(sk.parse_completion("h = go_commit").is_err());
    }

    #[test]
    fn serialization_round_trips() {
        for sk in [parse_sketch(FIG1).unwrap(), fig1_sketch()] {
            let text = sk.serialize();
            let again = parse_sketch(&text).unwrap();
            assert_eq!(again, sk);
            assert_eq!(again.serialize(), text);
        }
        let q = FIG1.replace(
            "invariant Safe : go_commit /= {} => vote_yes = Node",
            "invariant Safe : \\A a \\in Node : \\E b \\in Node : a \\in go_commit => (b \\in vote_yes /\\ a = a)",
        );
        let sk = parse_sketch(&q).unwrap();
        assert_eq!(parse_sketch(&sk.serialize()).unwrap(), sk);
    }

    #[test]
    fn rejects_degenerate_and_misused_sketches() {
        let no_actions = "const Node : Domain\nvar x : Bool\ninit x = FALSE\n";
        assert!(matches!(
            parse_sketch(no_actions),
            Err(SketchError::Validation(_))
        ));

        let in_init = FIG1.replace("init go_commit = {}", "init ?g(go_commit)");
        assert!(matches!(
            parse_sketch(&in_init),
            Err(SketchError::HoleMisuse { .. })
        ));

        let twice = FIG1
            .replace("vote_yes \\cup {n}", "?h(vote_yes, n)")
            .replace("require vote_yes = Node", "require ?h(vote_yes)");
        assert!(matches!(
            parse_sketch(&twice),
            Err(SketchError::HoleMisuse { .. })
        ));

        let negated = FIG1.replace("require vote_yes = Node", "require ~?g(vote_yes)");
        assert!(matches!(
            parse_sketch(&negated),
            Err(SketchError::HoleMisuse { .. })
        ));

        let nested_post = FIG1.replace("vote_yes \\cup {n}", "vote_yes \\cup ?h(vote_yes, n)");
        assert!(matches!(
            parse_sketch(&nested_post),
            Err(SketchError::HoleMisuse { .. })
        ));

        let in_prop = FIG1.replace("TRUE ~>", "?p(go_commit) ~>");
        assert!(matches!(
            parse_sketch(&in_prop),
            Err(SketchError::HoleMisuse { .. })
        ));

        let complex_arg = FIG1.replace("vote_yes \\cup {n}", "?h(vote_yes \\cup {n})");
        assert!(matches!(
            parse_sketch(&complex_arg),
            Err(SketchError::HoleMisuse { .. })
        ));
    }

    #[test]
    fn reports_positions_and_types() {
        let bad_type = FIG1.replace("require vote_yes = Node", "require vote_yes");
        match parse_sketch(&bad_type) {
            Err(SketchError::Type { pos, .. }) => assert_eq!(pos.line, 8),
            other => panic!("{other:?}"),
        }
        let unresolved = FIG1.replace("require vote_yes = Node", "require votes = Node");
        assert!(matches!(
            parse_sketch(&unresolved),
            Err(SketchError::Unresolved { .. })
        ));
        let syntax = FIG1.replace("update go_commit := Node", "update go_commit = Node");
        assert!(matches!(parse_sketch(&syntax), Err(SketchError::Syntax(_))));
    }
}
