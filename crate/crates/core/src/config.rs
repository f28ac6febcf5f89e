//! The configuration file that accompanies a sketch.
//!
//! ```text
//! [instance]
//! Node = {n1, n2, n3}
//!
//! [extra_instance]
//! Node = {n1, n2, n3, n4}
//!
//! [holes]
//! h = Sets
//!
//! [grammar Sets]
//! E : Set(Node) ::= {} | {n} | @args
//!     | E \cup E | E \cap E | E \setminus E
//!
//! [options]
//! timeout = 300
//! ```
//!
//! A grammar is instantiated once per hole that uses it. `@args` stands for
//! every hole argument whose type is the nonterminal's type, `@args(T)` for
//! those of type `T`, and `use G` pulls in the rules of grammar `G` that are
//! not already defined.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::cegis::SynthesisConfig;
use crate::enumerate::{Grammar, GrammarError, Signature, Strategy};
use crate::expr::Expr;
use crate::parser::{resolve, Parser, Pos, RefKind, SyntaxError, Tok};
use crate::sketch::{Hole, Sketch};
use crate::values::{type_check, InstanceBinding, Name, TypeExpr, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    At { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("hole `{hole}`: {source}")]
    Grammar {
        hole: Name,
        #[source]
        source: GrammarError,
    },
}

impl From<SyntaxError> for ConfigError {
    fn from(e: SyntaxError) -> Self {
        ConfigError::At {
            line: e.pos.line,
            msg: e.msg,
        }
    }
}

fn at<T>(line: usize, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::At {
        line,
        msg: msg.into(),
    })
}

pub fn load_config(path: &Path, sk: &Sketch) -> Result<SynthesisConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, sk)
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Section {
    Instance,
    ExtraInstance,
    Holes,
    Grammar(Name),
    Options,
}

/// A section header and the text under it, padded with blank lines so that
/// token positions match the file.
struct Block {
    section: Section,
    line: usize,
    body: String,
}

fn split_sections(text: &str) -> Result<Vec<Block>, ConfigError> {
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if let Some(inner) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let words: Vec<&str> = inner.split_whitespace().collect();
            let section = match words.as_slice() {
                ["instance"] => Section::Instance,
                ["extra_instance"] => Section::ExtraInstance,
                ["holes"] => Section::Holes,
                ["options"] => Section::Options,
                ["grammar", g] => Section::Grammar((*g).into()),
                _ => return at(line, format!("unknown section `[{inner}]`")),
            };
            blocks.push(Block {
                section,
                line,
                body: "\n".repeat(line),
            });
            continue;
        }
        let body = if t.starts_with('#') { "" } else { raw };
        match blocks.last_mut() {
            Some(b) => {
                b.body.push_str(body);
                b.body.push('\n');
            }
            None if body.trim().is_empty() => {}
            None => return at(line, "entry outside of any section"),
        }
    }
    Ok(blocks)
}

/// `key = value` lines of a plain section.
fn entries(b: &Block) -> Vec<(usize, &str, &str)> {
    b.body
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (k, v) = l.split_once('=').unwrap_or((l, ""));
            (i + 1, k.trim(), v.trim())
        })
        .collect()
}

fn parse_value(p: &mut Parser, t: &TypeExpr, inst: &InstanceBinding) -> Result<Value, SyntaxError> {
    match (t, p.peek().clone()) {
        (TypeExpr::Bool, Tok::Ident(w)) if w == "TRUE" || w == "FALSE" => {
            p.bump();
            Ok(Value::Bool(w == "TRUE"))
        }
        (TypeExpr::Int, Tok::Int(n)) => {
            p.bump();
            Ok(Value::Int(n))
        }
        (TypeExpr::Domain(d), Tok::Ident(id)) => {
            let ok = inst
                .domains
                .get(d)
                .is_some_and(|ids| ids.iter().any(|x| **x == *id));
            if !ok {
                return p.error(format!("`{id}` is not an element of {d}"));
            }
            p.bump();
            Ok(Value::elem(d, &id))
        }
        (TypeExpr::Set(elem), Tok::Sym("{")) => {
            p.bump();
            let mut items = Vec::new();
            if !p.eat_sym("}") {
                loop {
                    items.push(parse_value(p, elem, inst)?);
                    if p.eat_sym("}") {
                        break;
                    }
                    p.expect_sym(",")?;
                }
            }
            Ok(Value::set(items))
        }
        (TypeExpr::Func(k, v), Tok::Sym("[")) => {
            p.bump();
            let mut map = BTreeMap::new();
            if !p.eat_sym("]") {
                loop {
                    let key = parse_value(p, k, inst)?;
                    p.expect_sym(":")?;
                    if map.insert(key, parse_value(p, v, inst)?).is_some() {
                        return p.error("key bound twice");
                    }
                    if p.eat_sym("]") {
                        break;
                    }
                    p.expect_sym(",")?;
                }
            }
            let f = Value::Func(map);
            if !type_check(&f, t, inst) {
                return p.error(format!("function must bind every element of {k}"));
            }
            Ok(f)
        }
        (_, tok) => p.error(format!("expected a value of type {t}, found {tok}")),
    }
}

fn parse_ids(p: &mut Parser) -> Result<Vec<Name>, SyntaxError> {
    p.expect_sym("{")?;
    let mut ids = Vec::new();
    if !p.eat_sym("}") {
        loop {
            ids.push(p.ident()?);
            if p.eat_sym("}") {
                break;
            }
            p.expect_sym(",")?;
        }
    }
    Ok(ids)
}

/// Binds the entries of an instance section on top of `base`.
fn parse_instance(
    b: &Block,
    sk: &Sketch,
    base: &InstanceBinding,
) -> Result<InstanceBinding, ConfigError> {
    let mut inst = base.clone();
    let mut consts = Vec::new();
    for (line, key, _) in entries(b) {
        bind_entry(b, sk, &mut inst, &mut consts, line, key)?;
    }
    // constants may name elements of domains bound anywhere in the section
    for (line, key) in consts {
        let t = sk.param_type(key).expect("constant has a type");
        let v = entry_parser(b, line)
            .and_then(|mut p| {
                let v = parse_value(&mut p, &t, &inst)?;
                if !p.at_eof() {
                    return p.error(format!("unexpected {} after value", p.peek()));
                }
                Ok(v)
            })
            .map_err(|e| ConfigError::At { line, msg: e.msg })?;
        inst.consts.insert(key.into(), v);
    }
    Ok(inst)
}

/// A parser positioned just after the key of an entry.
fn entry_parser(b: &Block, line: usize) -> Result<Parser, SyntaxError> {
    let mut p = Parser::new(
        &b.body
            .lines()
            .nth(line - 1)
            .unwrap_or_default()
            .replacen('=', " ", 1),
    )?;
    p.ident()?;
    Ok(p)
}

/// Binds a domain or the `Int` range; constants are deferred to `consts`.
fn bind_entry<'b>(
    b: &'b Block,
    sk: &Sketch,
    inst: &mut InstanceBinding,
    consts: &mut Vec<(usize, &'b str)>,
    line: usize,
    key: &'b str,
) -> Result<(), ConfigError> {
    let syn = |e: SyntaxError| ConfigError::At { line, msg: e.msg };
    let mut p = entry_parser(b, line).map_err(syn)?;
    if key == "Int" {
        let lo = int_tok(&mut p).map_err(syn)?;
        p.expect_sym("..").map_err(syn)?;
        inst.int_bounds = Some((lo, int_tok(&mut p).map_err(syn)?));
    } else if sk.is_domain(key) {
        let ids = parse_ids(&mut p).map_err(syn)?;
        if ids.is_empty() {
            return at(line, format!("domain `{key}` must not be empty"));
        }
        if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
            return at(line, format!("domain `{key}` lists an element twice"));
        }
        inst.domains.insert(key.into(), ids);
    } else if sk.param(key).is_some() {
        consts.push((line, key));
        return Ok(());
    } else {
        return at(line, format!("`{key}` is not a parameter of the sketch"));
    }
    if !p.at_eof() {
        return at(line, format!("unexpected {} after value", p.peek()));
    }
    Ok(())
}

fn int_tok(p: &mut Parser) -> Result<i64, SyntaxError> {
    match p.peek().clone() {
        Tok::Int(n) => {
            p.bump();
            Ok(n)
        }
        t => p.error(format!("expected an integer, found {t}")),
    }
}

fn check_bound(sk: &Sketch, inst: &InstanceBinding, what: &str) -> Result<(), ConfigError> {
    for prm in &sk.params {
        let n = &prm.name;
        let bound = if sk.is_domain(n) {
            inst.domains.contains_key(n)
        } else {
            inst.consts.contains_key(n)
        };
        if !bound {
            return Err(ConfigError::Invalid(format!("{what} does not bind `{n}`")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
enum Alt {
    Expr(Expr, Pos),
    Args(Option<TypeExpr>),
}

#[derive(Clone, Debug)]
struct Rule {
    nt: Name,
    ty: TypeExpr,
    alts: Vec<Alt>,
    line: usize,
}

#[derive(Clone, Debug, Default)]
struct RawGrammar {
    rules: Vec<Rule>,
    uses: Vec<(Name, usize)>,
}

fn parse_grammar(b: &Block) -> Result<RawGrammar, ConfigError> {
    let mut p = Parser::new(&b.body)?;
    let mut g = RawGrammar::default();
    while !p.at_eof() {
        let line = p.pos().line;
        if p.eat_word("use") {
            g.uses.push((p.ident()?, line));
            continue;
        }
        let nt = p.ident()?;
        p.expect_sym(":")?;
        let ty = p.parse_type()?;
        p.expect_sym("::=")?;
        let mut alts = Vec::new();
        loop {
            if p.eat_sym("@") {
                if p.ident()?.as_ref() != "args" {
                    return at(line, "the only template is `@args`");
                }
                let t = if p.eat_sym("(") {
                    let t = p.parse_type()?;
                    p.expect_sym(")")?;
                    Some(t)
                } else {
                    None
                };
                alts.push(Alt::Args(t));
            } else {
                let pos = p.pos();
                alts.push(Alt::Expr(p.parse_expr()?, pos));
            }
            if !p.eat_sym("|") {
                break;
            }
        }
        g.rules.push(Rule { nt, ty, alts, line });
    }
    if g.rules.is_empty() && g.uses.is_empty() {
        return at(b.line, "grammar has no rules");
    }
    Ok(g)
}

/// Own rules first, then those of used grammars, skipping redefinitions.
fn collect_rules(
    name: &str,
    lib: &BTreeMap<Name, RawGrammar>,
    out: &mut Vec<Rule>,
    visiting: &mut Vec<Name>,
) -> Result<(), ConfigError> {
    if visiting.iter().any(|v| &**v == name) {
        return Err(ConfigError::Invalid(format!(
            "grammar `{name}` uses itself"
        )));
    }
    let g = lib
        .get(name)
        .ok_or_else(|| ConfigError::Invalid(format!("unknown grammar `{name}`")))?;
    visiting.push(name.into());
    for r in &g.rules {
        if out.iter().any(|o| o.nt == r.nt) {
            if visiting.len() == 1 {
                return at(r.line, format!("nonterminal `{}` defined twice", r.nt));
            }
            continue;
        }
        out.push(r.clone());
    }
    for (u, line) in &g.uses {
        if !lib.contains_key(u) {
            return at(*line, format!("unknown grammar `{u}`"));
        }
        collect_rules(u, lib, out, visiting)?;
    }
    visiting.pop();
    Ok(())
}

/// Instantiates grammar `name` for `hole`.
fn instantiate(
    name: &str,
    lib: &BTreeMap<Name, RawGrammar>,
    sk: &Sketch,
    hole: &Hole,
) -> Result<Grammar, ConfigError> {
    let mut rules = Vec::new();
    collect_rules(name, lib, &mut rules, &mut Vec::new())?;
    let Some(start) = rules.first() else {
        return Err(ConfigError::Invalid(format!(
            "grammar `{name}` has no rules of its own"
        )));
    };
    let nts: Vec<(Name, TypeExpr)> = rules.iter().map(|r| (r.nt.clone(), r.ty.clone())).collect();
    let mut g = Grammar::new(name, &start.nt, nts.clone());
    let classify = |n: &str| {
        if nts.iter().any(|(nt, _)| &**nt == n) {
            Some(RefKind::Placeholder)
        } else {
            sk.classify_for_hole(hole, n)
        }
    };
    for r in &rules {
        for alt in &r.alts {
            match alt {
                Alt::Args(t) => {
                    let want = t.as_ref().unwrap_or(&r.ty);
                    for (a, _) in hole.args.iter().filter(|(_, at)| at == want) {
                        g = g.with_production(&r.nt, Expr::Arg(a.clone()));
                    }
                }
                Alt::Expr(e, pos) => {
                    let e = resolve(e, &classify).map_err(|msg| ConfigError::At {
                        line: pos.line,
                        msg: format!("{msg} (hole `{}` of grammar `{name}`)", hole.name),
                    })?;
                    g = g.with_production(&r.nt, e);
                }
            }
        }
    }
    g.validate(&Signature::for_hole(sk, hole))
        .map_err(|source| ConfigError::Grammar {
            hole: hole.name.clone(),
            source,
        })?;
    Ok(g)
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => at(line, format!("`{key}` expects true or false, found `{v}`")),
    }
}

fn parse_count(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse()
        .or_else(|_| at(line, format!("`{key}` expects a count, found `{v}`")))
}

fn apply_option(
    cfg: &mut SynthesisConfig,
    line: usize,
    key: &str,
    v: &str,
) -> Result<(), ConfigError> {
    match key {
        "reduce" => cfg.reduce = parse_bool(line, key, v)?,
        "shortcircuit" => cfg.shortcircuit = parse_bool(line, key, v)?,
        "extra_check" => cfg.extra_check = parse_bool(line, key, v)?,
        "strategy" => cfg.strategy = v.parse::<Strategy>().or_else(|e| at(line, e.to_string()))?,
        "timeout" => cfg.timeout = Duration::from_secs(parse_count(line, key, v)? as u64),
        "state_cap" => cfg.state_cap = parse_count(line, key, v)?,
        "max_size" => cfg.max_combined_size = Some(parse_count(line, key, v)?),
        _ => return at(line, format!("unknown option `{key}`")),
    }
    Ok(())
}

pub fn parse_config(text: &str, sk: &Sketch) -> Result<SynthesisConfig, ConfigError> {
    let blocks = split_sections(text)?;
    let mut lib: BTreeMap<Name, RawGrammar> = BTreeMap::new();
    for b in &blocks {
        if let Section::Grammar(g) = &b.section {
            if lib.insert(g.clone(), parse_grammar(b)?).is_some() {
                return at(b.line, format!("grammar `{g}` defined twice"));
            }
        }
    }

    let mut instance: Option<InstanceBinding> = None;
    for b in blocks.iter().filter(|b| b.section == Section::Instance) {
        if instance.is_some() {
            return at(b.line, "only one [instance] section is allowed");
        }
        instance = Some(parse_instance(b, sk, &InstanceBinding::new())?);
    }
    let instance =
        instance.ok_or_else(|| ConfigError::Invalid("missing [instance] section".into()))?;
    check_bound(sk, &instance, "[instance]")?;

    let mut cfg = SynthesisConfig::new(instance.clone());
    for b in &blocks {
        match &b.section {
            Section::ExtraInstance => {
                let extra = parse_instance(b, sk, &instance)?;
                for (d, ids) in &instance.domains {
                    if extra.domain_size(d) < ids.len() {
                        return at(b.line, format!("extra instance shrinks domain `{d}`"));
                    }
                }
                cfg.extra_instances.push(extra);
            }
            Section::Holes => {
                for (line, h, g) in entries(b) {
                    let Some(hole) = sk.hole(h) else {
                        return at(line, format!("`{h}` is not a hole of the sketch"));
                    };
                    if !lib.contains_key(g) {
                        return at(line, format!("unknown grammar `{g}`"));
                    }
                    if cfg
                        .grammars
                        .insert(h.into(), instantiate(g, &lib, sk, hole)?)
                        .is_some()
                    {
                        return at(line, format!("hole `{h}` assigned twice"));
                    }
                }
            }
            Section::Options => {
                for (line, k, v) in entries(b) {
                    apply_option(&mut cfg, line, k, v)?;
                }
            }
            Section::Instance | Section::Grammar(_) => {}
        }
    }
    if let Some(h) = sk
        .holes
        .iter()
        .find(|h| !cfg.grammars.contains_key(&h.name))
    {
        return Err(ConfigError::Invalid(format!(
            "hole `{}` has no grammar",
            h.name
        )));
    }
    Ok(cfg)
}
