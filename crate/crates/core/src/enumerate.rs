//! Typed tree grammars and size-ordered expression enumeration.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};

use thiserror::Error;

use crate::expr::{BinOp, Expr, TypeScope, Typer};
use crate::normal::{normalize_as, NormalForm};
use crate::sketch::{Completion, Hole, Sketch};
use crate::values::{Name, TypeExpr};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("grammar `{grammar}` has no nonterminal `{nt}`")]
    UnknownNonterminal { grammar: Name, nt: Name },
    #[error("grammar `{grammar}`: production `{production}` of `{nt}` is ill-typed: {msg}")]
    IllTyped {
        grammar: Name,
        nt: Name,
        production: String,
        msg: String,
    },
    #[error("grammar `{0}` has a cycle of unit productions")]
    UnitCycle(Name),
    #[error("grammar `{grammar}` produces {found} but hole `{hole}` expects {expected}")]
    StartType {
        grammar: Name,
        hole: Name,
        expected: TypeExpr,
        found: TypeExpr,
    },
    #[error("grammar `{grammar}` mentions `{name}`, which is not an argument of hole `{hole}`")]
    NotAnArgument {
        grammar: Name,
        hole: Name,
        name: Name,
    },
}

/// A production's right-hand side with its placeholders in left-to-right order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Production {
    pub template: Expr,
    pub slots: Vec<Name>,
    /// Size contributed by the template's own nodes.
    pub overhead: usize,
}

impl Production {
    pub fn new(template: Expr) -> Self {
        let mut slots = Vec::new();
        collect_slots(&template, &mut slots);
        let overhead = template.size();
        Production {
            template,
            slots,
            overhead,
        }
    }

    /// `Bin(op, X, X)` with `op` commutative: `(a op b)` and `(b op a)` coincide.
    fn symmetric_op(&self) -> Option<BinOp> {
        match &self.template {
            Expr::Bin(op, l, r) if op.is_commutative() => match (&**l, &**r) {
                (Expr::Placeholder(a), Expr::Placeholder(b)) if a == b => Some(*op),
                _ => None,
            },
            _ => None,
        }
    }

    /// Replaces the placeholders, in order, by `children`.
    pub fn fill(&self, children: &[&Expr]) -> Expr {
        let mut it = children.iter();
        fill_slots(&self.template, &mut it)
    }
}

fn collect_slots(e: &Expr, out: &mut Vec<Name>) {
    if let Expr::Placeholder(n) = e {
        out.push(n.clone());
    }
    for c in e.children() {
        collect_slots(c, out);
    }
}

fn fill_slots(e: &Expr, it: &mut std::slice::Iter<'_, &Expr>) -> Expr {
    match e {
        Expr::Placeholder(_) => (*it.next().expect("one child per placeholder")).clone(),
        _ => e
            .map_children::<()>(&mut |c| Ok(fill_slots(c, it)))
            .expect("infallible"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grammar {
    pub name: Name,
    pub start: Name,
    /// Nonterminals in declaration order.
    pub nonterminals: Vec<(Name, TypeExpr)>,
    pub productions: BTreeMap<Name, Vec<Production>>,
}

impl Grammar {
    pub fn new(name: &str, start: &str, nonterminals: Vec<(Name, TypeExpr)>) -> Self {
        Grammar {
            name: name.into(),
            start: start.into(),
            nonterminals,
            productions: BTreeMap::new(),
        }
    }

    pub fn with_production(mut self, nt: &str, template: Expr) -> Self {
        self.productions
            .entry(nt.into())
            .or_default()
            .push(Production::new(template));
        self
    }

    pub fn nt_type(&self, nt: &str) -> Option<&TypeExpr> {
        self.nonterminals
            .iter()
            .find(|(n, _)| &**n == nt)
            .map(|(_, t)| t)
    }

    pub fn start_type(&self) -> Option<&TypeExpr> {
        self.nt_type(&self.start)
    }

    pub fn productions_of(&self, nt: &str) -> &[Production] {
        self.productions.get(nt).map_or(&[], Vec::as_slice)
    }

    /// Checks nonterminal references, production types and the absence of
    /// unit-production cycles.
    pub fn validate(&self, sig: &Signature) -> Result<(), GrammarError> {
        let unknown = |nt: &Name| GrammarError::UnknownNonterminal {
            grammar: self.name.clone(),
            nt: nt.clone(),
        };
        if self.start_type().is_none() {
            return Err(unknown(&self.start));
        }
        let scope = sig.clone().with_nonterminals(self);
        for (nt, prods) in &self.productions {
            let ty = self.nt_type(nt).ok_or_else(|| unknown(nt))?;
            for p in prods {
                if let Some(s) = p.slots.iter().find(|s| self.nt_type(s).is_none()) {
                    return Err(unknown(s));
                }
                if let Some(a) = p
                    .template
                    .free_args()
                    .into_iter()
                    .find(|a| scope.arg_type(a).is_none())
                {
                    return Err(GrammarError::NotAnArgument {
                        grammar: self.name.clone(),
                        hole: sig.hole.clone().unwrap_or_else(|| self.name.clone()),
                        name: a,
                    });
                }
                Typer::new(&scope)
                    .check(&p.template, ty)
                    .map_err(|e| GrammarError::IllTyped {
                        grammar: self.name.clone(),
                        nt: nt.clone(),
                        production: p.template.to_string(),
                        msg: e.0,
                    })?;
            }
        }
        self.unit_order().map(|_| ())
    }

    /// Nonterminals ordered so that `A ::= B` puts `B` before `A`.
    fn unit_order(&self) -> Result<Vec<Name>, GrammarError> {
        let deps = |nt: &Name| -> Vec<Name> {
            self.productions_of(nt)
                .iter()
                .filter_map(|p| match &p.template {
                    Expr::Placeholder(b) => Some(b.clone()),
                    _ => None,
                })
                .collect()
        };
        let mut order = Vec::new();
        let mut state: BTreeMap<Name, u8> = BTreeMap::new();
        fn visit(
            nt: &Name,
            deps: &dyn Fn(&Name) -> Vec<Name>,
            state: &mut BTreeMap<Name, u8>,
            order: &mut Vec<Name>,
        ) -> bool {
            match state.get(nt) {
                Some(2) => return true,
                Some(1) => return false,
                _ => {}
            }
            state.insert(nt.clone(), 1);
            for d in deps(nt) {
                if !visit(&d, deps, state, order) {
                    return false;
                }
            }
            state.insert(nt.clone(), 2);
            order.push(nt.clone());
            true
        }
        for (nt, _) in &self.nonterminals {
            if !visit(nt, &deps, &mut state, &mut order) {
                return Err(GrammarError::UnitCycle(self.name.clone()));
            }
        }
        Ok(order)
    }
}

/// Names visible to grammar productions: a hole's formals, the protocol's
/// parameters and the grammar's nonterminals.
#[derive(Clone, Debug, Default)]
pub struct Signature {
    pub hole: Option<Name>,
    pub args: Vec<(Name, TypeExpr)>,
    pub consts: Vec<(Name, TypeExpr)>,
    pub domains: BTreeSet<Name>,
    pub nonterminals: Vec<(Name, TypeExpr)>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn for_hole(sk: &Sketch, h: &Hole) -> Self {
        let mut sig = Signature {
            hole: Some(h.name.clone()),
            args: h.args.clone(),
            ..Default::default()
        };
        for p in &sk.params {
            match &p.kind {
                crate::sketch::ParamKind::Domain => {
                    sig.domains.insert(p.name.clone());
                }
                crate::sketch::ParamKind::Const(t) => sig.consts.push((p.name.clone(), t.clone())),
            }
        }
        sig
    }

    pub fn with_arg(mut self, n: &str, t: TypeExpr) -> Self {
        self.args.push((n.into(), t));
        self
    }

    pub fn with_domain(mut self, d: &str) -> Self {
        self.domains.insert(d.into());
        self
    }

    pub fn with_nonterminals(mut self, g: &Grammar) -> Self {
        self.nonterminals = g.nonterminals.clone();
        self
    }
}

impl TypeScope for Signature {
    fn var_type(&self, _: &str) -> Option<TypeExpr> {
        None
    }
    fn param_type(&self, n: &str) -> Option<TypeExpr> {
        if self.domains.contains(n) {
            return Some(TypeExpr::set_of(TypeExpr::Domain(n.into())));
        }
        self.consts
            .iter()
            .find(|(c, _)| &**c == n)
            .map(|(_, t)| t.clone())
    }
    fn arg_type(&self, n: &str) -> Option<TypeExpr> {
        self.args
            .iter()
            .rev()
            .find(|(a, _)| &**a == n)
            .map(|(_, t)| t.clone())
    }
    fn is_domain(&self, n: &str) -> bool {
        self.domains.contains(n)
    }
    fn placeholder_type(&self, n: &str) -> Option<TypeExpr> {
        self.nonterminals
            .iter()
            .find(|(a, _)| &**a == n)
            .map(|(_, t)| t.clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EnumStats {
    /// Expressions built from productions, including rejected duplicates.
    pub built: u64,
    pub emitted: u64,
    /// Built expressions dropped for sharing a normal form.
    pub duplicates: u64,
    /// Child combinations visited for symmetric binary productions.
    pub symmetric_pairs: u64,
}

/// Compositions of `total` into `parts` positive parts, in lexicographic order.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn go(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 0 {
            if total == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        if total < parts {
            return;
        }
        for first in 1..=total - (parts - 1) {
            prefix.push(first);
            go(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(total, parts, &mut Vec::new(), &mut out);
    out
}

/// Position inside the fill of one size.
#[derive(Clone, Debug)]
struct Cursor {
    nt: usize,
    prod: usize,
    comps: Vec<Vec<usize>>,
    comp: usize,
    /// Indices into the cached lists for the current composition.
    idx: Option<Vec<usize>>,
    fresh: bool,
}

/// Bottom-up enumeration through a per-size cache: every expression of size
/// `n` is assembled from cached expressions whose sizes sum to `n` minus the
/// production's overhead. With `reduce`, an expression whose normal form is
/// already known for its nonterminal is neither emitted nor cached.
pub struct CachedEnumerator {
    g: Grammar,
    scope: Signature,
    reduce: bool,
    shortcircuit: bool,
    order: Vec<Name>,
    start: usize,
    /// `cache[nt][size]`
    cache: Vec<Vec<Vec<Expr>>>,
    seen: Vec<HashSet<NormalForm>>,
    size: usize,
    cursor: Option<Cursor>,
    max_cached: usize,
    exhausted: bool,
    pub stats: EnumStats,
}

impl CachedEnumerator {
    pub fn new(
        g: Grammar,
        sig: Signature,
        reduce: bool,
        shortcircuit: bool,
    ) -> Result<Self, GrammarError> {
        g.validate(&sig)?;
        let order = g.unit_order()?;
        let start = order
            .iter()
            .position(|n| *n == g.start)
            .expect("start is a nonterminal");
        let scope = sig.with_nonterminals(&g);
        let n = order.len();
        Ok(CachedEnumerator {
            g,
            scope,
            reduce,
            shortcircuit,
            order,
            start,
            cache: vec![vec![Vec::new()]; n],
            seen: vec![HashSet::new(); n],
            size: 0,
            cursor: None,
            max_cached: 0,
            exhausted: false,
            stats: EnumStats::default(),
        })
    }

    pub fn grammar(&self) -> &Grammar {
        &self.g
    }

    /// Size currently being filled.
    pub fn current_size(&self) -> usize {
        self.size
    }

    pub fn stats(&self) -> EnumStats {
        self.stats
    }

    /// Cached expressions of the start symbol with exactly `size` nodes, so far.
    pub fn cached(&self, size: usize) -> &[Expr] {
        self.cache[self.start].get(size).map_or(&[], Vec::as_slice)
    }

    fn nt_index(&self, n: &Name) -> usize {
        self.order
            .iter()
            .position(|x| x == n)
            .expect("validated nonterminal")
    }

    fn list(&self, nt: usize, size: usize) -> &[Expr] {
        self.cache[nt].get(size).map_or(&[], Vec::as_slice)
    }

    /// No production can reach beyond the cached sizes any more.
    fn finished(&self) -> bool {
        let bound = self
            .order
            .iter()
            .flat_map(|nt| self.g.productions_of(nt))
            .map(|p| p.overhead + p.slots.len() * self.max_cached)
            .max()
            .unwrap_or(0);
        self.size >= bound
    }

    fn begin_size(&mut self) {
        self.size += 1;
        for c in &mut self.cache {
            c.push(Vec::new());
        }
        self.cursor = Some(Cursor {
            nt: 0,
            prod: 0,
            comps: Vec::new(),
            comp: 0,
            idx: None,
            fresh: true,
        });
    }

    /// Next raw candidate of the current size, as `(nonterminal, expr)`.
    fn step(&mut self) -> Option<(usize, Expr)> {
        loop {
            let mut cur = self.cursor.take()?;
            if cur.nt >= self.order.len() {
                return None;
            }
            let nt_name = self.order[cur.nt].clone();
            let prods = self.g.productions_of(&nt_name);
            if cur.prod >= prods.len() {
                self.cursor = Some(Cursor {
                    nt: cur.nt + 1,
                    prod: 0,
                    comps: Vec::new(),
                    comp: 0,
                    idx: None,
                    fresh: true,
                });
                continue;
            }
            let prod = prods[cur.prod].clone();
            if cur.fresh {
                cur.fresh = false;
                cur.comps = if self.size < prod.overhead {
                    Vec::new()
                } else if prod.slots.is_empty() {
                    if self.size == prod.overhead {
                        vec![Vec::new()]
                    } else {
                        Vec::new()
                    }
                } else {
                    compositions(self.size - prod.overhead, prod.slots.len())
                };
                let symmetric = self.shortcircuit && prod.symmetric_op().is_some();
                if symmetric {
                    cur.comps.retain(|c| c[0] <= c[1]);
                }
                cur.comp = 0;
                cur.idx = None;
            }
            let slot_nts: Vec<usize> = prod.slots.iter().map(|s| self.nt_index(s)).collect();
            let symmetric = if self.shortcircuit {
                prod.symmetric_op()
            } else {
                None
            };
            let skip_same = symmetric.is_some_and(|op| self.reduce && op.is_idempotent());
            // advance to a valid index tuple
            let found = loop {
                if cur.comp >= cur.comps.len() {
                    break None;
                }
                let comp = cur.comps[cur.comp].clone();
                let lens: Vec<usize> = comp
                    .iter()
                    .zip(&slot_nts)
                    .map(|(&s, &nt)| self.list(nt, s).len())
                    .collect();
                if lens.contains(&0) {
                    cur.comp += 1;
                    cur.idx = None;
                    continue;
                }
                let same_size = symmetric.is_some() && comp[0] == comp[1];
                let idx = match &mut cur.idx {
                    None => cur.idx.insert(vec![0; comp.len()]),
                    Some(idx) => {
                        if !odometer(idx, &lens) {
                            cur.comp += 1;
                            cur.idx = None;
                            continue;
                        }
                        idx
                    }
                };
                // only pairs with i <= j; skip i == j when idempotent and reducing
                if same_size && (idx[1] < idx[0] || (skip_same && idx[1] == idx[0])) {
                    continue;
                }
                break Some(comp);
            };
            let Some(comp) = found else {
                self.cursor = Some(Cursor {
                    prod: cur.prod + 1,
                    fresh: true,
                    ..cur
                });
                continue;
            };
            if prod.symmetric_op().is_some() {
                self.stats.symmetric_pairs += 1;
            }
            let idx = cur.idx.as_ref().expect("positioned");
            let children: Vec<&Expr> = comp
                .iter()
                .zip(&slot_nts)
                .zip(idx)
                .map(|((&s, &nt), &i)| &self.cache[nt][s][i])
                .collect();
            let e = prod.fill(&children);
            let nt = cur.nt;
            self.cursor = Some(cur);
            return Some((nt, e));
        }
    }

    /// Next expression of the start symbol.
    pub fn next_expr(&mut self) -> Option<Expr> {
        loop {
            if self.exhausted {
                return None;
            }
            if self.cursor.is_none() {
                if self.size > 0 && self.finished() {
                    self.exhausted = true;
                    return None;
                }
                self.begin_size();
            }
            let Some((nt, e)) = self.step() else {
                self.cursor = None;
                continue;
            };
            self.stats.built += 1;
            if self.reduce {
                let ty = self.g.nt_type(&self.order[nt]).cloned();
                let nf = normalize_as(&e, ty.as_ref(), &self.scope);
                if !self.seen[nt].insert(nf) {
                    self.stats.duplicates += 1;
                    continue;
                }
            }
            self.max_cached = self.size;
            self.cache[nt][self.size].push(e.clone());
            if nt == self.start {
                self.stats.emitted += 1;
                return Some(e);
            }
        }
    }
}

/// Increments `idx` in odometer order, last position fastest. Returns false on wrap.
fn odometer(idx: &mut [usize], lens: &[usize]) -> bool {
    for p in (0..idx.len()).rev() {
        idx[p] += 1;
        if idx[p] < lens[p] {
            return true;
        }
        idx[p] = 0;
    }
    false
}

impl Iterator for CachedEnumerator {
    type Item = Expr;
    fn next(&mut self) -> Option<Expr> {
        self.next_expr()
    }
}

/// Top-down enumeration: a priority queue of partial expressions ordered by
/// size, counting each unexpanded nonterminal as one node.
pub struct NaiveEnumerator {
    g: Grammar,
    queue: BinaryHeap<Reverse<(usize, u64)>>,
    items: BTreeMap<u64, Expr>,
    counter: u64,
    pub stats: EnumStats,
}

/// Size with every placeholder counted as one node.
fn lower_bound(e: &Expr) -> usize {
    let mut slots = Vec::new();
    collect_slots(e, &mut slots);
    e.size() + slots.len()
}

/// Every partial expression obtained by replacing all placeholders of
/// `partial` at once, one production each.
pub fn expand(g: &Grammar, partial: &Expr) -> Vec<Expr> {
    let prod = Production::new(partial.clone());
    let options: Vec<&[Production]> = prod.slots.iter().map(|s| g.productions_of(s)).collect();
    if options.iter().any(|o| o.is_empty()) {
        return Vec::new();
    }
    let lens: Vec<usize> = options.iter().map(|o| o.len()).collect();
    let mut idx = vec![0; lens.len()];
    let mut out = Vec::new();
    loop {
        let children: Vec<&Expr> = idx
            .iter()
            .zip(&options)
            .map(|(&i, o)| &o[i].template)
            .collect();
        out.push(prod.fill(&children));
        if !odometer(&mut idx, &lens) {
            return out;
        }
    }
}

impl NaiveEnumerator {
    pub fn new(g: Grammar, sig: Signature) -> Result<Self, GrammarError> {
        g.validate(&sig)?;
        let mut en = NaiveEnumerator {
            g,
            queue: BinaryHeap::new(),
            items: BTreeMap::new(),
            counter: 0,
            stats: EnumStats::default(),
        };
        let start = Expr::Placeholder(en.g.start.clone());
        en.push(start);
        Ok(en)
    }

    fn push(&mut self, e: Expr) {
        self.queue.push(Reverse((lower_bound(&e), self.counter)));
        self.items.insert(self.counter, e);
        self.counter += 1;
    }

    pub fn next_expr(&mut self) -> Option<Expr> {
        while let Some(Reverse((_, id))) = self.queue.pop() {
            let e = self.items.remove(&id).expect("queued item");
            if !e.has_placeholders() {
                self.stats.emitted += 1;
                return Some(e);
            }
            for x in expand(&self.g, &e) {
                self.stats.built += 1;
                self.push(x);
            }
        }
        None
    }
}

impl Iterator for NaiveEnumerator {
    type Item = Expr;
    fn next(&mut self) -> Option<Expr> {
        self.next_expr()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Strategy {
    Naive,
    #[default]
    Cached,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(Strategy::Naive),
            "cached" => Ok(Strategy::Cached),
            _ => Err(format!("unknown strategy `{s}` (expected naive or cached)")),
        }
    }
}

enum Source {
    Naive(NaiveEnumerator),
    Cached(Box<CachedEnumerator>),
}

impl Source {
    fn next_expr(&mut self) -> Option<Expr> {
        match self {
            Source::Naive(n) => n.next_expr(),
            Source::Cached(c) => c.next_expr(),
        }
    }

    fn stats(&self) -> EnumStats {
        match self {
            Source::Naive(n) => n.stats,
            Source::Cached(c) => c.stats,
        }
    }
}

/// One hole's stream, materialized by size on demand.
struct SizedStream {
    src: Source,
    by_size: Vec<Vec<Expr>>,
    /// All sizes up to this one are complete.
    complete_to: usize,
    lookahead: Option<Expr>,
    done: bool,
}

impl SizedStream {
    fn ensure(&mut self, size: usize) {
        while !self.done && self.complete_to < size {
            let e = match self.lookahead.take() {
                Some(e) => e,
                None => match self.src.next_expr() {
                    Some(e) => e,
                    None => {
                        self.done = true;
                        break;
                    }
                },
            };
            let s = e.size();
            if s > size {
                self.complete_to = s - 1;
                self.lookahead = Some(e);
                break;
            }
            if self.by_size.len() <= s {
                self.by_size.resize(s + 1, Vec::new());
            }
            self.by_size[s].push(e);
            self.complete_to = self.complete_to.max(s - 1);
        }
        if self.done {
            self.complete_to = usize::MAX;
        }
    }

    fn at(&mut self, size: usize) -> &[Expr] {
        self.ensure(size);
        self.by_size.get(size).map_or(&[], Vec::as_slice)
    }

    fn max_size(&self) -> usize {
        self.by_size.len().saturating_sub(1)
    }
}

/// Completions of several holes in nondecreasing combined size: for each
/// combined size, size splits in lexicographic order, then the product of the
/// per-hole lists.
pub struct JointEnumerator {
    holes: Vec<Name>,
    streams: Vec<SizedStream>,
    total: usize,
    comps: Vec<Vec<usize>>,
    comp: usize,
    idx: Vec<usize>,
    max_total: Option<usize>,
    finished: bool,
}

impl JointEnumerator {
    /// `grammars` pairs each hole with its grammar and signature, in the order
    /// the holes should vary (last fastest).
    pub fn new(
        grammars: Vec<(Name, Grammar, Signature)>,
        strategy: Strategy,
        reduce: bool,
        shortcircuit: bool,
        max_total: Option<usize>,
    ) -> Result<Self, GrammarError> {
        let mut holes = Vec::new();
        let mut streams = Vec::new();
        for (h, g, sig) in grammars {
            let src = match strategy {
                Strategy::Naive => Source::Naive(NaiveEnumerator::new(g, sig)?),
                Strategy::Cached => Source::Cached(Box::new(CachedEnumerator::new(
                    g,
                    sig,
                    reduce,
                    shortcircuit,
                )?)),
            };
            holes.push(h);
            streams.push(SizedStream {
                src,
                by_size: vec![Vec::new()],
                complete_to: 0,
                lookahead: None,
                done: false,
            });
        }
        let total = holes.len().max(1) - 1;
        Ok(JointEnumerator {
            holes,
            streams,
            total,
            comps: Vec::new(),
            comp: 0,
            idx: Vec::new(),
            max_total,
            finished: false,
        })
    }

    pub fn holes(&self) -> &[Name] {
        &self.holes
    }

    /// Combined size currently being enumerated.
    pub fn current_size(&self) -> usize {
        self.total
    }

    pub fn stats(&self) -> EnumStats {
        let mut s = EnumStats::default();
        for st in &self.streams {
            let x = st.src.stats();
            s.built += x.built;
            s.emitted += x.emitted;
            s.duplicates += x.duplicates;
            s.symmetric_pairs += x.symmetric_pairs;
        }
        s
    }

    fn next_total(&mut self) -> bool {
        let m = self.holes.len();
        if m == 0 {
            return false;
        }
        // past every stream's last size: nothing left
        if self.streams.iter().all(|s| s.done) {
            let bound: usize = self.streams.iter().map(SizedStream::max_size).sum();
            if self.total >= bound {
                return false;
            }
        }
        self.total += 1;
        if self.max_total.is_some_and(|b| self.total > b) {
            return false;
        }
        self.comps = compositions(self.total, m);
        self.comp = 0;
        self.idx.clear();
        true
    }

    pub fn next_completion(&mut self) -> Option<Completion> {
        if self.finished {
            return None;
        }
        if self.holes.is_empty() {
            self.finished = true;
            return Some(Completion::new());
        }
        loop {
            if self.comp >= self.comps.len() {
                if !self.next_total() {
                    self.finished = true;
                    return None;
                }
                continue;
            }
            let comp = self.comps[self.comp].clone();
            let lens: Vec<usize> = comp
                .iter()
                .zip(self.streams.iter_mut())
                .map(|(&s, st)| st.at(s).len())
                .collect();
            if lens.contains(&0) {
                self.comp += 1;
                self.idx.clear();
                continue;
            }
            if self.idx.is_empty() {
                self.idx = vec![0; comp.len()];
            } else if !odometer(&mut self.idx, &lens) {
                self.comp += 1;
                self.idx.clear();
                continue;
            }
            let mut c = Completion::new();
            for ((h, st), (&s, &i)) in self
                .holes
                .iter()
                .zip(&self.streams)
                .zip(comp.iter().zip(&self.idx))
            {
                c.0.insert(h.clone(), st.by_size[s][i].clone());
            }
            return Some(c);
        }
    }
}

impl Iterator for JointEnumerator {
    type Item = Completion;
    fn next(&mut self) -> Option<Completion> {
        self.next_completion()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::values::name;

    fn ph(n: &str) -> Expr {
        Expr::Placeholder(name(n))
    }

    fn node_set() -> TypeExpr {
        TypeExpr::set_of(TypeExpr::Domain(name("Node")))
    }

    /// E ::= x | y | E ∪ E over two sets.
    fn union_grammar() -> (Grammar, Signature) {
        let g = Grammar::new("U", "E", vec![(name("E"), node_set())])
            .with_production("E", Expr::arg("x"))
            .with_production("E", Expr::arg("y"))
            .with_production("E", Expr::bin(BinOp::Union, ph("E"), ph("E")));
        let sig = Signature::new()
            .with_domain("Node")
            .with_arg("x", node_set())
            .with_arg("y", node_set());
        (g, sig)
    }

    /// B ::= x | y | ¬B | B ∧ B
    fn bool_grammar() -> (Grammar, Signature) {
        let g = Grammar::new("B", "B", vec![(name("B"), TypeExpr::Bool)])
            .with_production("B", Expr::arg("x"))
            .with_production("B", Expr::arg("y"))
            .with_production("B", Expr::not(ph("B")))
            .with_production("B", Expr::bin(BinOp::And, ph("B"), ph("B")));
        let sig = Signature::new()
            .with_arg("x", TypeExpr::Bool)
            .with_arg("y", TypeExpr::Bool);
        (g, sig)
    }

    fn strings(es: impl IntoIterator<Item = Expr>) -> Vec<String> {
        es.into_iter().map(|e| e.to_string()).collect()
    }

    #[test]
    fn compositions_are_lexicographic() {
        assert_eq!(compositions(4, 2), vec![vec![1, 3], vec![2, 2], vec![3, 1]]);
        assert_eq!(compositions(3, 3), vec![vec![1, 1, 1]]);
        assert!(compositions(2, 3).is_empty());
        assert_eq!(compositions(0, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn naive_starts_with_terminals() {
        let (g, sig) = union_grammar();
        let first: Vec<String> = strings(NaiveEnumerator::new(g, sig).unwrap().take(2));
        assert_eq!(first, ["x", "y"]);
    }

    #[test]
    fn naive_expansion_substitutes_every_placeholder() {
        let (g, _) = union_grammar();
        let d = Expr::bin(
            BinOp::Union,
            ph("E"),
            Expr::bin(BinOp::Union, Expr::arg("x"), ph("E")),
        );
        let out = expand(&g, &d);
        assert_eq!(out.len(), 9);
        assert!(out.iter().any(|e| e.to_string() == "(x \\cup (x \\cup y))"));
    }

    #[test]
    fn single_terminal_grammar() {
        let g = Grammar::new("T", "E", vec![(name("E"), TypeExpr::Bool)])
            .with_production("E", Expr::Bool(true));
        let sig = Signature::new();
        assert_eq!(
            NaiveEnumerator::new(g.clone(), sig.clone())
                .unwrap()
                .count(),
            1
        );
        assert_eq!(
            CachedEnumerator::new(g, sig, false, false).unwrap().count(),
            1
        );
    }

    #[test]
    fn reduced_union_language_has_three_classes() {
        let (g, sig) = union_grammar();
        let en = CachedEnumerator::new(g, sig, true, true).unwrap();
        assert_eq!(strings(en), ["x", "y", "(x \\cup y)"]);
    }

    #[test]
    fn reduced_boolean_language_has_sixteen_classes() {
        let (g, sig) = bool_grammar();
        let mut en = CachedEnumerator::new(g, sig, true, true).unwrap();
        let all: Vec<Expr> = en.by_ref().collect();
        assert_eq!(all.len(), 16);
        assert!(en.next_expr().is_none());
        let sizes: Vec<usize> = all.iter().map(Expr::size).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn unreduced_language_grows_exponentially() {
        let (g, sig) = bool_grammar();
        let mut counts = [0usize; 10];
        for e in CachedEnumerator::new(g, sig, false, false).unwrap() {
            if e.size() >= counts.len() {
                break;
            }
            counts[e.size()] += 1;
        }
        assert_eq!(&counts[1..6], &[2, 2, 6, 14, 42]);
        assert!(counts[2..].windows(2).all(|w| w[1] >= 2 * w[0]));
    }

    #[test]
    fn shortcircuit_halves_symmetric_pairs() {
        let (g, sig) = bool_grammar();
        let count = |sc: bool| {
            let mut en = CachedEnumerator::new(g.clone(), sig.clone(), true, sc).unwrap();
            let classes: BTreeSet<String> = en.by_ref().map(|e| e.to_string()).collect();
            (classes.len(), en.stats.symmetric_pairs)
        };
        let (with, pairs_with) = count(true);
        let (without, pairs_without) = count(false);
        assert_eq!(with, without);
        assert!(
            pairs_with * 2 <= pairs_without + 16,
            "{pairs_with} vs {pairs_without}"
        );
    }

    #[test]
    fn naive_and_cached_agree_without_reduction() {
        let (g, sig) = union_grammar();
        let naive: BTreeSet<String> = strings(
            NaiveEnumerator::new(g.clone(), sig.clone())
                .unwrap()
                .take_while(|e| e.size() <= 7),
        )
        .into_iter()
        .collect();
        let cached: BTreeSet<String> = strings(
            CachedEnumerator::new(g, sig, false, false)
                .unwrap()
                .take_while(|e| e.size() <= 7),
        )
        .into_iter()
        .collect();
        assert_eq!(naive, cached);
        // trees with 1 to 4 leaves: Catalan shapes times leaf labelings
        assert_eq!(naive.len(), 2 + 4 + 2 * 8 + 5 * 16);
    }

    #[test]
    fn joint_starts_with_smallest_pairs() {
        let g = |n: &str| {
            Grammar::new(n, "E", vec![(name("E"), TypeExpr::Bool)])
                .with_production("E", Expr::Bool(true))
                .with_production("E", Expr::Bool(false))
                .with_production("E", Expr::not(ph("E")))
        };
        let holes = vec![
            (name("h1"), g("A"), Signature::new()),
            (name("h2"), g("B"), Signature::new()),
        ];
        let mut en = JointEnumerator::new(holes, Strategy::Cached, false, false, None).unwrap();
        let first: Vec<String> = (0..4)
            .map(|_| en.next().unwrap().to_string().replace('\n', "; "))
            .collect();
        assert_eq!(
            first,
            [
                "h1 = TRUE; h2 = TRUE; ",
                "h1 = TRUE; h2 = FALSE; ",
                "h1 = FALSE; h2 = TRUE; ",
                "h1 = FALSE; h2 = FALSE; "
            ]
        );
        assert_eq!(en.next().unwrap().size(), 3);
    }

    #[test]
    fn joint_with_one_hole_matches_cached() {
        let (g, sig) = bool_grammar();
        let joint: Vec<String> = JointEnumerator::new(
            vec![(name("h"), g.clone(), sig.clone())],
            Strategy::Cached,
            true,
            true,
            None,
        )
        .unwrap()
        .map(|c| c.get("h").unwrap().to_string())
        .collect();
        assert_eq!(
            joint,
            strings(CachedEnumerator::new(g, sig, true, true).unwrap())
        );
    }

    #[test]
    fn joint_respects_size_bound() {
        let (g, sig) = union_grammar();
        let en = JointEnumerator::new(
            vec![(name("h"), g, sig)],
            Strategy::Naive,
            false,
            false,
            Some(3),
        )
        .unwrap();
        let sizes: Vec<usize> = en.map(|c| c.size()).collect();
        assert_eq!(sizes, [1, 1, 3, 3, 3, 3]);
    }

    #[test]
    fn grammar_validation() {
        let (g, sig) = union_grammar();
        let bad = g.clone().with_production("E", Expr::Bool(true));
        assert!(matches!(
            bad.validate(&sig),
            Err(GrammarError::IllTyped { .. })
        ));
        let unknown = g.clone().with_production("E", ph("F"));
        assert!(matches!(
            unknown.validate(&sig),
            Err(GrammarError::UnknownNonterminal { .. })
        ));
        let free = g.clone().with_production("E", Expr::arg("z"));
        assert!(matches!(
            free.validate(&sig),
            Err(GrammarError::NotAnArgument { .. })
        ));
        let cyc = Grammar::new(
            "C",
            "A",
            vec![(name("A"), TypeExpr::Bool), (name("B"), TypeExpr::Bool)],
        )
        .with_production("A", ph("B"))
        .with_production("B", ph("A"))
        .with_production("B", Expr::Bool(true));
        assert_eq!(cyc.validate(&sig), Err(GrammarError::UnitCycle(name("C"))));
    }

    #[test]
    fn unit_productions_follow_dependencies() {
        // S ::= C | S /\ S ; C ::= x | y
        let g = Grammar::new(
            "G",
            "S",
            vec![(name("S"), TypeExpr::Bool), (name("C"), TypeExpr::Bool)],
        )
        .with_production("S", ph("C"))
        .with_production("S", Expr::bin(BinOp::And, ph("S"), ph("S")))
        .with_production("C", Expr::arg("x"))
        .with_production("C", Expr::arg("y"));
        let sig = Signature::new()
            .with_arg("x", TypeExpr::Bool)
            .with_arg("y", TypeExpr::Bool);
        let out = strings(CachedEnumerator::new(g, sig, true, true).unwrap());
        assert_eq!(out, ["x", "y", "(x /\\ y)"]);
    }
}
