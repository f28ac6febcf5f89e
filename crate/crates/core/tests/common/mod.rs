//! Shared harness for the randomized tests: a generator of tiny sketches,
//! the languages of their holes, the pruning checks and an
//! explicit-state checker oracle written independently of `checker`.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use protoforge::cegis::SynthesisConfig;
use protoforge::checker::{replay, verify, CexKind, CheckOptions, Counterexample, Verdict};
use protoforge::config::parse_config;
use protoforge::enumerate::{CachedEnumerator, Signature};
use protoforge::prune::encode;
use protoforge::values::universe;
use protoforge::{
    eval, parse_sketch, Completion, Env, Expr, HoleKind, Protocol, Sketch, State, Value,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Joint completions tried per random sketch.
pub const LANGUAGE_CAP: usize = 200;
/// Failing completions with more reachable states are not encoded.
pub const PRUNING_STATE_CAP: usize = 200;

pub struct RandomSketch {
    pub text: String,
    pub sketch: Sketch,
    pub config: SynthesisConfig,
}

struct Gen {
    rng: ChaCha8Rng,
    bools: Vec<String>,
    sets: Vec<String>,
}

impl Gen {
    fn pick(&mut self, xs: &[String]) -> String {
        xs.choose(&mut self.rng).expect("nonempty").clone()
    }

    fn set_leaf(&mut self, arg: Option<&str>) -> String {
        match (self.rng.gen_range(0..6), arg) {
            (0, _) => "{}".into(),
            (1, _) => "Node".into(),
            (2, Some(a)) => format!("{{{a}}}"),
            _ => {
                let s = self.sets.clone();
                self.pick(&s)
            }
        }
    }

    fn set_expr(&mut self, depth: u32, arg: Option<&str>) -> String {
        if depth == 0 || self.rng.gen_bool(0.4) {
            return self.set_leaf(arg);
        }
        let op = ["\\cup", "\\setminus", "\\cap"][self.rng.gen_range(0..3)];
        let (l, r) = (self.set_expr(depth - 1, arg), self.set_expr(depth - 1, arg));
        format!("({l} {op} {r})")
    }

    fn bool_leaf(&mut self, arg: Option<&str>) -> String {
        match (self.rng.gen_range(0..6), arg) {
            (0, _) => {
                let s = self.sets.clone();
                format!("{} = {{}}", self.pick(&s))
            }
            (1, Some(a)) | (2, Some(a)) => {
                let s = self.set_leaf(None);
                format!("{a} \\in {s}")
            }
            (1, None) => {
                let s = self.set_leaf(None);
                format!("(\\E m \\in Node : m \\in {s})")
            }
            _ => {
                let b = self.bools.clone();
                self.pick(&b)
            }
        }
    }

    fn bool_expr(&mut self, depth: u32, arg: Option<&str>) -> String {
        if depth == 0 || self.rng.gen_bool(0.35) {
            return self.bool_leaf(arg);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..6) {
            0 => format!("~({})", self.bool_expr(d, arg)),
            1 => format!(
                "({} /\\ {})",
                self.bool_expr(d, arg),
                self.bool_expr(d, arg)
            ),
            2 => format!(
                "({} \\/ {})",
                self.bool_expr(d, arg),
                self.bool_expr(d, arg)
            ),
            3 => format!("({} => {})", self.bool_expr(d, arg), self.bool_expr(d, arg)),
            4 => {
                let s = self.sets.clone();
                format!("({} = {})", self.pick(&s), self.set_expr(d, arg))
            }
            _ => match arg {
                Some(a) => format!("{a} \\notin {}", self.set_expr(d, arg)),
                None => format!("~({})", self.bool_expr(d, arg)),
            },
        }
    }
}

enum Line {
    Require(String),
    Update(String, String),
}

struct ActionText {
    name: String,
    arg: bool,
    fair: bool,
    lines: Vec<Line>,
}

fn grammar_text(name: &str, out_set: bool, node_arg: bool) -> String {
    let n_alt = if node_arg { " | N \\in S" } else { "" };
    let single = if node_arg { " | {N}" } else { "" };
    let bools = format!("B : Bool ::= @args | TRUE | FALSE | ~B | B /\\ B | S = S{n_alt}\n");
    let sets = format!("S : Set(Node) ::= @args | {{}}{single} | S \\cup S | S \\setminus S\n");
    let nodes = if node_arg { "N : Node ::= @args\n" } else { "" };
    if out_set {
        format!("[grammar {name}]\n{sets}{nodes}\n")
    } else {
        format!("[grammar {name}]\n{bools}{sets}{nodes}\n")
    }
}

/// A random sketch over a 2 or 3 element `Node` domain with Boolean and
/// set-valued variables. With `holes`, one or two guards or updates become
/// holes over every variable and the action's argument.
pub fn random_sketch(seed: u64, holes: bool) -> RandomSketch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(1..=2);
    let ns = rng.gen_range(1..=2);
    let nodes = rng.gen_range(2..=3);
    let mut g = Gen {
        bools: (0..nb).map(|i| format!("b{i}")).collect(),
        sets: (0..ns).map(|i| format!("s{i}")).collect(),
        rng,
    };
    let vars: Vec<(String, bool)> = g
        .bools
        .iter()
        .map(|b| (b.clone(), false))
        .chain(g.sets.iter().map(|s| (s.clone(), true)))
        .collect();

    let mut text = String::from("const Node : Domain\n");
    for (v, is_set) in &vars {
        text += &format!("var {v} : {}\n", if *is_set { "Set(Node)" } else { "Bool" });
    }
    for (v, is_set) in &vars {
        if g.rng.gen_bool(0.15) {
            continue;
        }
        let init = match (is_set, g.rng.gen_range(0..3)) {
            (true, 0) => "Node",
            (true, _) => "{}",
            (false, 0) => "TRUE",
            (false, _) => "FALSE",
        };
        text += &format!("init {v} = {init}\n");
    }

    let mut actions = Vec::new();
    for i in 0..g.rng.gen_range(2..=3) {
        let arg = g.rng.gen_bool(0.6);
        let a = arg.then_some("n");
        let mut lines = Vec::new();
        for _ in 0..g.rng.gen_range(0..=2) {
            lines.push(Line::Require(g.bool_expr(1, a)));
        }
        for (v, is_set) in &vars {
            if g.rng.gen_bool(0.45) {
                let rhs = if *is_set {
                    g.set_expr(1, a)
                } else {
                    g.bool_expr(1, a)
                };
                lines.push(Line::Update(v.clone(), rhs));
            }
        }
        if !lines.iter().any(|l| matches!(l, Line::Update(..))) {
            let (v, is_set) = vars.choose(&mut g.rng).expect("vars").clone();
            let rhs = if is_set {
                g.set_expr(1, a)
            } else {
                format!("~{v}")
            };
            lines.push(Line::Update(v, rhs));
        }
        actions.push(ActionText {
            name: format!("A{i}"),
            arg,
            fair: g.rng.gen_bool(0.5),
            lines,
        });
    }

    let mut grammars = String::new();
    let mut hole_lines = String::new();
    if holes {
        // (action, line) slots; `None` adds a fresh guard
        let mut slots: Vec<(usize, Option<usize>)> = Vec::new();
        for (ai, a) in actions.iter().enumerate() {
            slots.push((ai, None));
            for (li, l) in a.lines.iter().enumerate() {
                if matches!(l, Line::Update(..)) {
                    slots.push((ai, Some(li)));
                }
            }
        }
        slots.shuffle(&mut g.rng);
        let count = g.rng.gen_range(1..=2).min(slots.len());
        for (k, (ai, slot)) in slots.into_iter().take(count).enumerate() {
            let a = &mut actions[ai];
            let mut args: Vec<String> = vars.iter().map(|(v, _)| v.clone()).collect();
            if a.arg {
                args.push("n".into());
            }
            let call = format!("?h{k}({})", args.join(", "));
            let out_set = match slot {
                None => {
                    a.lines.push(Line::Require(call));
                    false
                }
                Some(li) => {
                    let Line::Update(v, _) = &a.lines[li] else {
                        unreachable!()
                    };
                    let v = v.clone();
                    let out_set = vars.iter().any(|(x, s)| *x == v && *s);
                    a.lines[li] = Line::Update(v, call);
                    out_set
                }
            };
            hole_lines += &format!("h{k} = G{k}\n");
            grammars += &grammar_text(&format!("G{k}"), out_set, a.arg);
        }
    }

    for a in &actions {
        let fair = if a.fair { "fair " } else { "" };
        let arg = if a.arg { "(n: Node)" } else { "" };
        text += &format!("{fair}action {}{arg} {{\n", a.name);
        for l in &a.lines {
            if let Line::Require(e) = l {
                text += &format!("  require {e}\n");
            }
        }
        for l in &a.lines {
            if let Line::Update(v, e) = l {
                text += &format!("  update {v} := {e}\n");
            }
        }
        text += "}\n";
    }
    let mut props = 0;
    if g.rng.gen_bool(0.6) {
        let (l, r) = (g.bool_expr(2, None), g.bool_expr(1, None));
        text += &format!("invariant Inv : {l} \\/ {r}\n");
        props += 1;
    }
    if g.rng.gen_bool(0.7) || props == 0 {
        let p = if g.rng.gen_bool(0.4) {
            "TRUE".to_string()
        } else {
            g.bool_expr(1, None)
        };
        let q = g.bool_expr(1, None);
        text += &format!("liveness Live : {p} ~> {q}\n");
    }
    if g.rng.gen_bool(0.4) {
        text += "option deadlock_check : true\n";
    }

    let sketch = parse_sketch(&text)
        .unwrap_or_else(|e| panic!("generated sketch does not parse: {e}\n{text}"));
    let ids: Vec<String> = (1..=nodes).map(|i| format!("n{i}")).collect();
    let cfg_text = format!(
        "[instance]\nNode = {{{}}}\n\n[holes]\n{hole_lines}\n{grammars}",
        ids.join(", ")
    );
    let config = parse_config(&cfg_text, &sketch)
        .unwrap_or_else(|e| panic!("generated config does not parse: {e}\n{cfg_text}\n{text}"));
    RandomSketch {
        text,
        sketch,
        config,
    }
}

impl RandomSketch {
    /// Up to `LANGUAGE_CAP` joint completions drawn from the reduced
    /// languages of the holes.
    pub fn completions(&self) -> Vec<Completion> {
        let per_hole = match self.sketch.holes.len() {
            0 => return vec![Completion::new()],
            1 => LANGUAGE_CAP,
            n => (LANGUAGE_CAP as f64).powf(1.0 / n as f64) as usize,
        };
        let mut out = vec![Completion::new()];
        for h in &self.sketch.holes {
            let g = self.config.grammars[&h.name].clone();
            let lang: Vec<Expr> =
                CachedEnumerator::new(g, Signature::for_hole(&self.sketch, h), true, true)
                    .expect("valid grammar")
                    .take(per_hole)
                    .collect();
            out = out
                .into_iter()
                .flat_map(|c| lang.iter().map(move |e| c.clone().with(&h.name, e.clone())))
                .collect();
        }
        out
    }
}

pub fn kind_name(k: &CexKind) -> &'static str {
    match k {
        CexKind::Safety(_) => "safety",
        CexKind::Deadlock => "deadlock",
        CexKind::Liveness(_) => "liveness",
        CexKind::Stuttering(_) => "stuttering",
    }
}

#[derive(Debug, Default)]
pub struct PruningTally {
    pub sketches: usize,
    /// Counterexamples encoded, per kind.
    pub counterexamples: BTreeMap<&'static str, usize>,
    /// Completions compared against a constraint.
    pub comparisons: usize,
    pub violations: Vec<String>,
}

impl PruningTally {
    pub fn count(&self, kind: &str) -> usize {
        self.counterexamples.get(kind).copied().unwrap_or(0)
    }
}

/// Encodes the counterexamples of up to `per_kind` failing completions of
/// each kind for a random sketch and compares each constraint with replay over the
/// whole candidate language. For safety the constraint must reject exactly
/// the completions that still admit the run; for the other kinds every
/// rejected completion must still admit it.
pub fn pruning_trial(seed: u64, per_kind: usize, tally: &mut PruningTally) {
    let rs = random_sketch(seed, true);
    let inst = &rs.config.instance;
    let opts = CheckOptions {
        state_cap: PRUNING_STATE_CAP,
    };
    let mut comps = rs.completions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    comps.shuffle(&mut rng);
    let protocols: Vec<Protocol> = comps
        .iter()
        .map(|c| {
            rs.sketch
                .apply_completion(c)
                .expect("well-typed completion")
        })
        .collect();
    tally.sketches += 1;
    let mut found: BTreeMap<&str, usize> = BTreeMap::new();
    for (x0, p0) in comps.iter().zip(&protocols) {
        let Ok(rep) = verify(p0, inst, &opts) else {
            continue;
        };
        let Verdict::Fail(r) = rep.verdict else {
            continue;
        };
        let kind = kind_name(&r.kind);
        let n = found.entry(kind).or_default();
        if *n == per_kind {
            continue;
        }
        *n += 1;
        *tally.counterexamples.entry(kind).or_default() += 1;
        let ctx = || {
            format!(
                "seed {seed}, {kind} counterexample of\n{x0}\n{r}\n{}",
                rs.text
            )
        };
        let pi = match encode(&r, &rs.sketch, x0, inst) {
            Ok(pi) => pi,
            Err(e) => {
                tally
                    .violations
                    .push(format!("encoding failed: {e}; {}", ctx()));
                continue;
            }
        };
        if pi.satisfied_by(x0).unwrap_or(true) {
            tally.violations.push(format!(
                "failing completion satisfies its own constraint {pi}; {}",
                ctx()
            ));
        }
        for (x, p) in comps.iter().zip(&protocols) {
            tally.comparisons += 1;
            let sat = pi.satisfied_by(x).expect("constraint evaluates");
            let replays = replay(p, inst, &r).is_ok();
            let ok = match r.kind {
                CexKind::Safety(_) => sat != replays,
                _ => sat || replays,
            };
            if !ok {
                tally.violations.push(format!(
                    "constraint {pi} {} but the run {} under\n{x}\n{}",
                    if sat { "admits" } else { "rejects" },
                    if replays {
                        "replays"
                    } else {
                        "does not replay"
                    },
                    ctx()
                ));
            }
        }
    }
}

/// Result the oracle expects from `verify`, in its order of properties.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expected {
    Pass,
    /// Shortest violation depth over all invariants.
    Safety(usize),
    Deadlock,
    LeadsTo(String),
}

/// The reachable graph built with `eval` alone: initial states by
/// filtering every valuation, successors by evaluating each action instance.
pub struct Oracle<'p> {
    p: &'p Protocol,
    inst: &'p protoforge::InstanceBinding,
    vars: Vec<protoforge::Name>,
    /// `(action index, argument bindings)`.
    instances: Vec<(usize, Vec<(protoforge::Name, Value)>)>,
    pub states: Vec<State>,
    pub depth: Vec<usize>,
    /// Per state, the instances enabled there and their targets.
    pub edges: Vec<Vec<(usize, usize)>>,
}

fn cartesian(lists: &[Vec<Value>]) -> Vec<Vec<Value>> {
    lists.iter().fold(vec![Vec::new()], |acc, l| {
        acc.into_iter()
            .flat_map(|p| {
                l.iter().map(move |v| {
                    let mut p = p.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect()
    })
}

impl<'p> Oracle<'p> {
    /// `None` when more than `cap` states are reachable.
    pub fn build(
        p: &'p Protocol,
        inst: &'p protoforge::InstanceBinding,
        cap: usize,
    ) -> Option<Self> {
        let vars = p.var_names();
        let mut instances = Vec::new();
        for (ai, a) in p.actions.iter().enumerate() {
            let doms: Vec<Vec<Value>> = a
                .args
                .iter()
                .map(|(_, d)| inst.domain_elems(d).expect("domain"))
                .collect();
            for combo in cartesian(&doms) {
                instances.push((
                    ai,
                    a.args.iter().map(|(n, _)| n.clone()).zip(combo).collect(),
                ));
            }
        }
        let mut o = Oracle {
            p,
            inst,
            vars,
            instances,
            states: Vec::new(),
            depth: Vec::new(),
            edges: Vec::new(),
        };
        let unis: Vec<Vec<Value>> = p
            .vars
            .iter()
            .map(|(_, t)| universe(t, inst).expect("finite type"))
            .collect();
        let mut index: HashMap<State, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        for vals in cartesian(&unis) {
            let s = State(vals);
            if p.init.iter().all(|e| o.truth(e, &s, &[])) {
                index.insert(s.clone(), o.states.len());
                queue.push_back(o.states.len());
                o.states.push(s);
                o.depth.push(0);
            }
        }
        while let Some(u) = queue.pop_front() {
            let s = o.states[u].clone();
            let mut out = Vec::new();
            for i in 0..o.instances.len() {
                let Some(t) = o.step(i, &s) else { continue };
                let v = match index.get(&t) {
                    Some(&v) => v,
                    None => {
                        if o.states.len() == cap {
                            return None;
                        }
                        index.insert(t.clone(), o.states.len());
                        queue.push_back(o.states.len());
                        o.states.push(t);
                        o.depth.push(o.depth[u] + 1);
                        o.states.len() - 1
                    }
                };
                out.push((i, v));
            }
            o.edges.resize(o.states.len(), Vec::new());
            o.edges[u] = out;
        }
        o.edges.resize(o.states.len(), Vec::new());
        Some(o)
    }

    fn value(&self, e: &Expr, s: &State, args: &[(protoforge::Name, Value)]) -> Value {
        let mut env = Env::new(self.inst, &self.vars, &s.0).with_args(args.iter().cloned());
        eval(e, &mut env).unwrap_or_else(|err| panic!("oracle cannot evaluate {e}: {err}"))
    }

    fn truth(&self, e: &Expr, s: &State, args: &[(protoforge::Name, Value)]) -> bool {
        self.value(e, s, args).as_bool().expect("Boolean")
    }

    fn step(&self, i: usize, s: &State) -> Option<State> {
        let (ai, args) = &self.instances[i];
        let a = &self.p.actions[*ai];
        if !a.pre.iter().all(|e| self.truth(e, s, args)) {
            return None;
        }
        let mut t = s.clone();
        for c in &a.post {
            let j = self
                .vars
                .iter()
                .position(|v| *v == c.var)
                .expect("declared variable");
            t.0[j] = self.value(&c.rhs, s, args);
        }
        Some(t)
    }

    fn fair(&self, i: usize) -> bool {
        self.p.actions[self.instances[i].0].fair
    }

    /// Whether some fair behaviour reaches `p` and then avoids `q` forever.
    /// For every set F of fair instances it searches the SCCs of the pending
    /// region restricted to states whose enabled fair instances lie in F,
    /// with stuttering allowed everywhere, for one taking all of F inside.
    pub fn leads_to_fails(&self, pp: &Expr, q: &Expr) -> bool {
        let n = self.states.len();
        let notq: Vec<bool> = self.states.iter().map(|s| !self.truth(q, s, &[])).collect();
        let mut region = vec![false; n];
        let mut stack: Vec<usize> = (0..n)
            .filter(|&u| notq[u] && self.truth(pp, &self.states[u], &[]))
            .collect();
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut region[u], true) {
                continue;
            }
            stack.extend(
                self.edges[u]
                    .iter()
                    .map(|&(_, v)| v)
                    .filter(|&v| notq[v] && !region[v]),
            );
        }
        let mut fair_ids: Vec<usize> = (0..n)
            .filter(|&u| region[u])
            .flat_map(|u| self.edges[u].iter().map(|&(i, _)| i))
            .filter(|&i| self.fair(i))
            .collect();
        fair_ids.sort_unstable();
        fair_ids.dedup();
        assert!(
            fair_ids.len() <= 16,
            "too many fair instances for the oracle"
        );
        for mask in 0u32..(1 << fair_ids.len()) {
            let in_f = |i: usize| {
                fair_ids
                    .iter()
                    .position(|&x| x == i)
                    .is_some_and(|k| mask >> k & 1 == 1)
            };
            let allowed: Vec<bool> = (0..n)
                .map(|u| region[u] && self.edges[u].iter().all(|&(i, _)| !self.fair(i) || in_f(i)))
                .collect();
            let mut g = DiGraph::<usize, usize>::new();
            let nodes: Vec<_> = (0..n).map(|u| g.add_node(u)).collect();
            for u in (0..n).filter(|&u| allowed[u]) {
                for &(i, v) in &self.edges[u] {
                    if allowed[v] {
                        g.add_edge(nodes[u], nodes[v], i);
                    }
                }
            }
            for comp in tarjan_scc(&g) {
                let u0 = g[comp[0]];
                if !allowed[u0] {
                    continue;
                }
                let members: Vec<usize> = comp.iter().map(|&x| g[x]).collect();
                let mut taken = vec![false; self.instances.len()];
                for &u in &members {
                    for &(i, v) in &self.edges[u] {
                        if members.contains(&v) {
                            taken[i] = true;
                        }
                    }
                }
                if fair_ids
                    .iter()
                    .enumerate()
                    .all(|(k, &i)| mask >> k & 1 == 0 || taken[i])
                {
                    return true;
                }
            }
        }
        false
    }

    pub fn expected(&self) -> Expected {
        let invariants: Vec<&Expr> = self.p.invariants().map(|(_, e)| e).collect();
        let shortest = (0..self.states.len())
            .filter(|&u| {
                invariants
                    .iter()
                    .any(|e| !self.truth(e, &self.states[u], &[]))
            })
            .map(|u| self.depth[u])
            .min();
        if let Some(d) = shortest {
            return Expected::Safety(d);
        }
        if self.p.check_deadlock && self.edges.iter().any(Vec::is_empty) {
            return Expected::Deadlock;
        }
        for (name, pp, q) in self.p.leads_to() {
            if self.leads_to_fails(pp, q) {
                return Expected::LeadsTo(name.to_string());
            }
        }
        Expected::Pass
    }

    pub fn has_successors(&self, s: &State) -> bool {
        (0..self.instances.len()).any(|i| self.step(i, s).is_some())
    }
}

/// Compares `verify` with the oracle on one hole-free random protocol and
/// returns the kind of verdict. `Ok(None)` when the instance is larger than
/// `cap` states.
pub fn oracle_trial(seed: u64, cap: usize) -> Result<Option<&'static str>, String> {
    let rs = random_sketch(seed, false);
    let p = &rs.sketch;
    let inst = &rs.config.instance;
    let Some(o) = Oracle::build(p, inst, cap) else {
        return Ok(None);
    };
    let want = o.expected();
    let rep = verify(p, inst, &CheckOptions::default()).map_err(|e| format!("seed {seed}: {e}"))?;
    let ctx = |got: &str| {
        format!(
            "seed {seed}: oracle expects {want:?}, checker gives {got}\n{}",
            rs.text
        )
    };
    let cex: Option<&Counterexample> = rep.counterexample();
    let agree = match (&want, cex) {
        (Expected::Pass, None) => true,
        (Expected::Safety(d), Some(c)) => matches!(c.kind, CexKind::Safety(_)) && c.k() == *d,
        (Expected::Deadlock, Some(c)) => c.kind == CexKind::Deadlock && !o.has_successors(c.last()),
        (Expected::LeadsTo(n), Some(c)) => match &c.kind {
            CexKind::Liveness(m) | CexKind::Stuttering(m) => m.as_ref() == n.as_str(),
            _ => false,
        },
        _ => false,
    };
    if !agree {
        return Err(ctx(&cex.map_or("pass".into(), |c| c.to_string())));
    }
    if let Some(c) = cex {
        replay(p, inst, c).map_err(|e| ctx(&format!("a run that does not replay ({e}):\n{c}")))?;
    }
    Ok(Some(cex.map_or("pass", |c| kind_name(&c.kind))))
}

/// Whether any hole of the sketch is a guard.
pub fn has_pre_hole(sk: &Sketch) -> bool {
    sk.holes.iter().any(|h| h.kind == HoleKind::Pre)
}
