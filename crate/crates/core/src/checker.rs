//! Explicit-state model checking of invariants, deadlock freedom and
//! leads-to properties under strong fairness.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::expr::{eval, BinOp, Env, EvalError, Expr};
use crate::sketch::{Property, Protocol};
use crate::values::{universe, InstanceBinding, Name, State, Value, ValueError};

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

const INIT_CANDIDATE_LIMIT: usize = 1 << 24;

/// An action instance `A(v⃗)`; `args` follows the action's declared argument order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionLabel {
    pub action: Name,
    pub args: Vec<(Name, Value)>,
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.action)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, (_, v)) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CexKind {
    Safety(Name),
    Deadlock,
    Liveness(Name),
    Stuttering(Name),
}

/// An action-annotated run: `labels[i]` leads from `states[i]` to `states[i + 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Counterexample {
    pub kind: CexKind,
    pub vars: Vec<Name>,
    pub states: Vec<State>,
    pub labels: Vec<TransitionLabel>,
    /// Lasso entry; the last state equals `states[loop_index]`.
    pub loop_index: Option<usize>,
}

impl Counterexample {
    /// Index of the last state.
    pub fn k(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last(&self) -> &State {
        &self.states[self.k()]
    }

    /// Transitions as `(source, label, target)` triples.
    pub fn transitions(&self) -> impl Iterator<Item = (&State, &TransitionLabel, &State)> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| (&self.states[i], l, &self.states[i + 1]))
    }
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CexKind::Safety(n) => writeln!(f, "invariant `{n}` violated")?,
            CexKind::Deadlock => writeln!(f, "deadlock")?,
            CexKind::Liveness(n) => {
                writeln!(f, "liveness property `{n}` violated by a fair cycle")?
            }
            CexKind::Stuttering(n) => {
                writeln!(f, "liveness property `{n}` violated by stuttering")?
            }
        }
        for (i, s) in self.states.iter().enumerate() {
            if i > 0 {
                writeln!(f, "  --[ {} ]-->", self.labels[i - 1])?;
            }
            let marker = if self.loop_index == Some(i) {
                "LOOP> "
            } else {
                "      "
            };
            write!(f, "{marker}{i}: ")?;
            for (j, v) in s.values().iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                match self.vars.get(j) {
                    Some(n) => write!(f, "{n} = {v}")?,
                    None => write!(f, "{v}")?,
                }
            }
            writeln!(f)?;
        }
        match (&self.kind, self.loop_index) {
            (CexKind::Stuttering(_), _) => writeln!(f, "  --[ stutter ]--> {}", self.k()),
            (_, Some(l)) => writeln!(f, "  (state {} repeats state {l})", self.k()),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(Counterexample),
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub states_explored: usize,
    pub check_time: Duration,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass)
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match &self.verdict {
            Verdict::Pass => None,
            Verdict::Fail(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("state space exceeds the cap of {0} states")]
    StateSpaceLimitExceeded(usize),
    #[error("evaluating {context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("initial-state candidate space is too large to enumerate")]
    InitTooLarge,
    #[error("protocol still contains hole `{0}`")]
    Incomplete(Name),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    pub state_cap: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

/// Every instance of every action, in declaration order with arguments in
/// universe order.
pub fn action_instances(
    p: &Protocol,
    inst: &InstanceBinding,
) -> Result<Vec<TransitionLabel>, CheckError> {
    let mut out = Vec::new();
    for a in &p.actions {
        let mut doms = Vec::with_capacity(a.args.len());
        for (_, d) in &a.args {
            doms.push(
                inst.domain_elems(d)
                    .ok_or_else(|| ValueError::UnknownDomain(d.clone()))?,
            );
        }
        for combo in product(&doms) {
            let args = a.args.iter().map(|(n, _)| n.clone()).zip(combo).collect();
            out.push(TransitionLabel {
                action: a.name.clone(),
                args,
            });
        }
    }
    Ok(out)
}

/// Cartesian product in odometer order, last coordinate fastest.
fn product(lists: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for l in lists {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                l.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect();
    }
    out
}

/// A protocol bound to an instance, with its action instances enumerated.
pub struct Model<'p> {
    pub p: &'p Protocol,
    pub inst: &'p InstanceBinding,
    pub vars: Vec<Name>,
    pub instances: Vec<TransitionLabel>,
    action_of: Vec<usize>,
}

impl<'p> Model<'p> {
    pub fn new(p: &'p Protocol, inst: &'p InstanceBinding) -> Result<Self, CheckError> {
        if let Some(h) = p.holes.first() {
            return Err(CheckError::Incomplete(h.name.clone()));
        }
        let instances = action_instances(p, inst)?;
        let action_of = instances
            .iter()
            .map(|l| {
                p.actions
                    .iter()
                    .position(|a| a.name == l.action)
                    .expect("instance of a declared action")
            })
            .collect();
        Ok(Model {
            p,
            inst,
            vars: p.var_names(),
            instances,
            action_of,
        })
    }

    pub fn is_fair(&self, i: usize) -> bool {
        self.p.actions[self.action_of[i]].fair
    }

    fn eval_in(
        &self,
        e: &Expr,
        s: &State,
        args: &[(Name, Value)],
        ctx: impl Fn() -> String,
    ) -> Result<Value, CheckError> {
        let mut env = Env::new(self.inst, &self.vars, s.values()).with_args(args.iter().cloned());
        eval(e, &mut env).map_err(|source| CheckError::Eval {
            context: ctx(),
            source,
        })
    }

    pub fn holds(&self, e: &Expr, s: &State, what: &str) -> Result<bool, CheckError> {
        let v = self.eval_in(e, s, &[], || what.to_string())?;
        v.as_bool().ok_or_else(|| CheckError::Eval {
            context: what.to_string(),
            source: EvalError::TypeMismatch(e.to_string()),
        })
    }

    pub fn enabled(&self, i: usize, s: &State) -> Result<bool, CheckError> {
        let label = &self.instances[i];
        for pre in &self.p.actions[self.action_of[i]].pre {
            let v = self.eval_in(pre, s, &label.args, || format!("guard of {label}"))?;
            match v.as_bool() {
                Some(true) => {}
                Some(false) => return Ok(false),
                None => {
                    return Err(CheckError::Eval {
                        context: format!("guard of {label}"),
                        source: EvalError::TypeMismatch(pre.to_string()),
                    })
                }
            }
        }
        Ok(true)
    }

    /// Successor under instance `i`, assuming it is enabled. Right-hand sides
    /// are evaluated in the source state; unlisted variables keep their value.
    pub fn fire(&self, i: usize, s: &State) -> Result<State, CheckError> {
        let label = &self.instances[i];
        let action = &self.p.actions[self.action_of[i]];
        let mut next = s.clone();
        for clause in &action.post {
            let v = self.eval_in(&clause.rhs, s, &label.args, || {
                format!("update of `{}` in {label}", clause.var)
            })?;
            let idx = self
                .p
                .var_index(&clause.var)
                .expect("post-clause targets a declared variable");
            next.0[idx] = v;
        }
        Ok(next)
    }

    /// Enabled instances and their successors.
    pub fn successors(&self, s: &State) -> Result<Vec<(usize, State)>, CheckError> {
        let mut out = Vec::new();
        for i in 0..self.instances.len() {
            if self.enabled(i, s)? {
                out.push((i, self.fire(i, s)?));
            }
        }
        Ok(out)
    }

    /// States satisfying every `init` predicate. Variables pinned by a
    /// state-independent equality are not enumerated.
    pub fn initial_states(&self) -> Result<Vec<State>, CheckError> {
        let mut conjuncts = Vec::new();
        for e in &self.p.init {
            flatten_and(e, &mut conjuncts);
        }
        let mut candidates = Vec::with_capacity(self.vars.len());
        for (v, t) in &self.p.vars {
            let pinned = conjuncts.iter().find_map(|c| match c {
                Expr::Bin(BinOp::Eq, l, r) => match (&**l, &**r) {
                    (Expr::Var(x), e) | (e, Expr::Var(x)) if x == v && state_free(e) => Some(e),
                    _ => None,
                },
                _ => None,
            });
            let vals = match pinned {
                Some(e) => {
                    vec![self.eval_in(e, &State(vec![]), &[], || format!("initial value of `{v}`"))?]
                }
                None => universe(t, self.inst)?,
            };
            candidates.push(vals);
        }
        let total = candidates
            .iter()
            .try_fold(1usize, |acc, c| acc.checked_mul(c.len()));
        if total.is_none_or(|t| t > INIT_CANDIDATE_LIMIT) {
            return Err(CheckError::InitTooLarge);
        }
        let mut out = Vec::new();
        let mut odo = vec![0usize; candidates.len()];
        if candidates.iter().any(Vec::is_empty) {
            return Ok(out);
        }
        loop {
            let s = State(
                odo.iter()
                    .zip(&candidates)
                    .map(|(&i, c)| c[i].clone())
                    .collect(),
            );
            let mut ok = true;
            for c in &conjuncts {
                if !self.holds(c, &s, "init")? {
                    ok = false;
                    break;
                }
            }
            if ok {
                out.push(s);
            }
            let mut pos = odo.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                odo[pos] += 1;
                if odo[pos] < candidates[pos].len() {
                    break;
                }
                odo[pos] = 0;
            }
        }
    }
}

fn flatten_and<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e {
        Expr::Bin(BinOp::And, l, r) => {
            flatten_and(l, out);
            flatten_and(r, out);
        }
        _ => out.push(e),
    }
}

fn state_free(e: &Expr) -> bool {
    e.state_vars().is_empty() && e.free_args().is_empty()
}

/// Labeled successors of `s`.
pub fn successors(
    p: &Protocol,
    inst: &InstanceBinding,
    s: &State,
) -> Result<Vec<(TransitionLabel, State)>, CheckError> {
    let m = Model::new(p, inst)?;
    Ok(m.successors(s)?
        .into_iter()
        .map(|(i, t)| (m.instances[i].clone(), t))
        .collect())
}

/// The reachable state graph, indexed in breadth-first discovery order.
pub struct StateGraph {
    pub states: Vec<State>,
    index: HashMap<State, usize>,
    /// BFS tree: predecessor and instance; `None` for initial states.
    parent: Vec<Option<(usize, usize)>>,
    /// Outgoing `(instance, target)` edges, one per enabled instance.
    pub edges: Vec<Vec<(usize, usize)>>,
}

impl StateGraph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &State) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Shortest path from an initial state, as state indices and instances.
    fn bfs_path(&self, target: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut states, mut labels) = (vec![target], Vec::new());
        let mut cur = target;
        while let Some((pred, i)) = self.parent[cur] {
            states.push(pred);
            labels.push(i);
            cur = pred;
        }
        states.reverse();
        labels.reverse();
        (states, labels)
    }
}

enum Exploration {
    Graph(StateGraph, Option<usize>),
    Violation(Counterexample),
}

fn build_cex(
    m: &Model<'_>,
    g: &StateGraph,
    kind: CexKind,
    states: &[usize],
    labels: &[usize],
    loop_index: Option<usize>,
) -> Counterexample {
    Counterexample {
        kind,
        vars: m.vars.clone(),
        states: states.iter().map(|&i| g.states[i].clone()).collect(),
        labels: labels.iter().map(|&i| m.instances[i].clone()).collect(),
        loop_index,
    }
}

/// Breadth-first exploration. Invariants are checked as states are
/// discovered, so the first violation lies on a shortest path. Also reports
/// the first state without successors.
fn explore(
    m: &Model<'_>,
    invariants: &[(Name, Expr)],
    cap: usize,
) -> Result<Exploration, CheckError> {
    let mut g = StateGraph {
        states: Vec::new(),
        index: HashMap::new(),
        parent: Vec::new(),
        edges: Vec::new(),
    };
    let mut queue = VecDeque::new();
    let mut deadlock = None;

    let violated = |s: &State| -> Result<Option<Name>, CheckError> {
        for (n, e) in invariants {
            if !m.holds(e, s, &format!("invariant `{n}`"))? {
                return Ok(Some(n.clone()));
            }
        }
        Ok(None)
    };

    for s in m.initial_states()? {
        if g.index.contains_key(&s) {
            continue;
        }
        let idx = g.states.len();
        if idx >= cap {
            return Err(CheckError::StateSpaceLimitExceeded(cap));
        }
        g.index.insert(s.clone(), idx);
        g.states.push(s.clone());
        g.parent.push(None);
        g.edges.push(Vec::new());
        if let Some(n) = violated(&s)? {
            return Ok(Exploration::Violation(build_cex(
                m,
                &g,
                CexKind::Safety(n),
                &[idx],
                &[],
                None,
            )));
        }
        queue.push_back(idx);
    }

    while let Some(cur) = queue.pop_front() {
        let succ = m.successors(&g.states[cur])?;
        if succ.is_empty() && deadlock.is_none() {
            deadlock = Some(cur);
        }
        for (i, t) in succ {
            let tidx = match g.index.get(&t) {
                Some(&j) => j,
                None => {
                    let j = g.states.len();
                    if j >= cap {
                        return Err(CheckError::StateSpaceLimitExceeded(cap));
                    }
                    g.index.insert(t.clone(), j);
                    g.states.push(t.clone());
                    g.parent.push(Some((cur, i)));
                    g.edges.push(Vec::new());
                    if let Some(n) = violated(&t)? {
                        let (ss, ls) = g.bfs_path(j);
                        return Ok(Exploration::Violation(build_cex(
                            m,
                            &g,
                            CexKind::Safety(n),
                            &ss,
                            &ls,
                            None,
                        )));
                    }
                    queue.push_back(j);
                    j
                }
            };
            g.edges[cur].push((i, tidx));
        }
    }
    Ok(Exploration::Graph(g, deadlock))
}

/// States reachable through `¬Q` states from a `P ∧ ¬Q` state, discovered
/// breadth-first from those seeds in index order.
struct Region {
    member: Vec<bool>,
    order: Vec<usize>,
    parent: Vec<Option<(usize, usize)>>,
    dist: Vec<usize>,
}

fn pending_region(
    m: &Model<'_>,
    g: &StateGraph,
    name: &str,
    p: &Expr,
    q: &Expr,
) -> Result<Region, CheckError> {
    let n = g.len();
    let mut not_q = vec![false; n];
    let mut seed = vec![false; n];
    for (i, s) in g.states.iter().enumerate() {
        not_q[i] = !m.holds(q, s, &format!("consequent of `{name}`"))?;
        seed[i] = not_q[i] && m.holds(p, s, &format!("antecedent of `{name}`"))?;
    }
    let mut r = Region {
        member: vec![false; n],
        order: Vec::new(),
        parent: vec![None; n],
        dist: vec![usize::MAX; n],
    };
    let mut queue = VecDeque::new();
    for i in (0..n).filter(|&i| seed[i]) {
        r.member[i] = true;
        r.dist[i] = 0;
        queue.push_back(i);
    }
    while let Some(cur) = queue.pop_front() {
        r.order.push(cur);
        for &(i, t) in &g.edges[cur] {
            if not_q[t] && !r.member[t] {
                r.member[t] = true;
                r.parent[t] = Some((cur, i));
                r.dist[t] = r.dist[cur] + 1;
                queue.push_back(t);
            }
        }
    }
    Ok(r)
}

impl Region {
    /// Path from an initial state through the seed that discovered `target`.
    fn path_to(&self, g: &StateGraph, target: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut tail_s, mut tail_l) = (Vec::new(), Vec::new());
        let mut cur = target;
        while let Some((pred, i)) = self.parent[cur] {
            tail_s.push(cur);
            tail_l.push(i);
            cur = pred;
        }
        let (mut states, mut labels) = g.bfs_path(cur);
        states.extend(tail_s.into_iter().rev());
        labels.extend(tail_l.into_iter().rev());
        (states, labels)
    }
}

/// First pending state without a fair, enabled, state-changing instance.
fn find_stuttering(
    m: &Model<'_>,
    g: &StateGraph,
    name: &Name,
    r: &Region,
) -> Option<Counterexample> {
    let s = *r
        .order
        .iter()
        .find(|&&s| !g.edges[s].iter().any(|&(i, t)| t != s && m.is_fair(i)))?;
    let (states, labels) = r.path_to(g, s);
    let k = states.len() - 1;
    Some(build_cex(
        m,
        g,
        CexKind::Stuttering(name.clone()),
        &states,
        &labels,
        Some(k),
    ))
}

/// Strongly connected components of the subgraph induced by `member`,
/// visiting roots in the order given.
fn sccs(roots: &[usize], member: &[bool], edges: &[Vec<(usize, usize)>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = edges.len();
    let (mut index, mut low, mut on_stack) = (vec![UNSEEN; n], vec![0; n], vec![false; n]);
    let (mut stack, mut comps, mut counter) = (Vec::new(), Vec::new(), 0);
    for &root in roots {
        if index[root] != UNSEEN {
            continue;
        }
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        let mut call = vec![(root, 0usize)];
        while let Some(top) = call.last_mut() {
            let v = top.0;
            if top.1 < edges[v].len() {
                let w = edges[v][top.1].1;
                top.1 += 1;
                if !member[w] {
                    continue;
                }
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// A strongly connected set of pending states containing at least one edge,
/// in which every fair instance enabled somewhere in the set is also taken
/// inside it. Components that fail are shrunk by dropping the states where an
/// untaken fair instance is enabled, then re-split.
fn find_fair_scc(m: &Model<'_>, g: &StateGraph, region: &Region) -> Option<Vec<usize>> {
    let mut work = vec![region.order.clone()];
    while let Some(nodes) = work.pop() {
        let mut member = vec![false; g.len()];
        for &s in &nodes {
            member[s] = true;
        }
        let comps = sccs(&nodes, &member, &g.edges);
        let mut next = Vec::new();
        for comp in comps {
            let mut inside = vec![false; g.len()];
            for &s in &comp {
                inside[s] = true;
            }
            let internal = comp
                .iter()
                .any(|&s| g.edges[s].iter().any(|&(_, t)| inside[t]));
            if !internal {
                continue;
            }
            let mut enabled = BTreeSet::new();
            let mut taken = BTreeSet::new();
            for &s in &comp {
                for &(i, t) in &g.edges[s] {
                    if m.is_fair(i) {
                        enabled.insert(i);
                        if inside[t] {
                            taken.insert(i);
                        }
                    }
                }
            }
            let untaken: BTreeSet<usize> = enabled.difference(&taken).copied().collect();
            if untaken.is_empty() {
                return Some(comp);
            }
            let keep: Vec<usize> = comp
                .iter()
                .copied()
                .filter(|&s| !g.edges[s].iter().any(|(i, _)| untaken.contains(i)))
                .collect();
            if !keep.is_empty() {
                next.push(keep);
            }
        }
        // Preserve discovery order: process earlier components first.
        work.extend(next.into_iter().rev());
    }
    None
}

/// Shortest walk inside `inside` from `from` to a state satisfying `goal`.
fn walk_to(
    g: &StateGraph,
    inside: &[bool],
    from: usize,
    goal: impl Fn(usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    if goal(from) {
        return Some(Vec::new());
    }
    let mut parent: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = vec![false; g.len()];
    seen[from] = true;
    while let Some(cur) = queue.pop_front() {
        for &(i, t) in &g.edges[cur] {
            if !inside[t] || seen[t] {
                continue;
            }
            seen[t] = true;
            parent.insert(t, (cur, i));
            if goal(t) {
                let mut steps = Vec::new();
                let mut x = t;
                while x != from {
                    let (p, i) = parent[&x];
                    steps.push((i, x));
                    x = p;
                }
                steps.reverse();
                return Some(steps);
            }
            queue.push_back(t);
        }
    }
    None
}

/// A cycle from `entry` back to itself inside `comp` that takes every fair
/// instance enabled in `comp`, as `(instance, target)` steps.
fn witness_cycle(
    m: &Model<'_>,
    g: &StateGraph,
    comp: &[usize],
    entry: usize,
) -> Vec<(usize, usize)> {
    let mut inside = vec![false; g.len()];
    for &s in comp {
        inside[s] = true;
    }
    let required: BTreeSet<usize> = comp
        .iter()
        .flat_map(|&s| g.edges[s].iter().map(|&(i, _)| i))
        .filter(|&i| m.is_fair(i))
        .collect();
    let mut steps: Vec<(usize, usize)> = Vec::new();
    let mut cur = entry;
    let take = |cur: &mut usize, steps: &mut Vec<(usize, usize)>, want: Option<usize>| {
        let has = |s: usize| {
            g.edges[s]
                .iter()
                .any(|&(i, t)| inside[t] && want.is_none_or(|w| w == i))
        };
        let walk = walk_to(g, &inside, *cur, has).expect("component is strongly connected");
        steps.extend(walk);
        let at = steps.last().map_or(*cur, |&(_, t)| t);
        let &(i, t) = g.edges[at]
            .iter()
            .find(|&&(i, t)| inside[t] && want.is_none_or(|w| w == i))
            .expect("edge found by walk");
        steps.push((i, t));
        *cur = t;
    };
    if required.is_empty() {
        take(&mut cur, &mut steps, None);
    }
    for &f in &required {
        if !steps.iter().any(|&(i, _)| i == f) {
            take(&mut cur, &mut steps, Some(f));
        }
    }
    steps
        .extend(walk_to(g, &inside, cur, |s| s == entry).expect("component is strongly connected"));
    steps
}

fn find_fair_cycle(
    m: &Model<'_>,
    g: &StateGraph,
    name: &Name,
    r: &Region,
) -> Option<Counterexample> {
    let comp = find_fair_scc(m, g, r)?;
    let entry = *comp
        .iter()
        .min_by_key(|&&s| (r.dist[s], s))
        .expect("nonempty component");
    let (mut states, mut labels) = r.path_to(g, entry);
    let loop_index = states.len() - 1;
    for (i, t) in witness_cycle(m, g, &comp, entry) {
        labels.push(i);
        states.push(t);
    }
    Some(build_cex(
        m,
        g,
        CexKind::Liveness(name.clone()),
        &states,
        &labels,
        Some(loop_index),
    ))
}

fn invariants_of(p: &Protocol) -> Vec<(Name, Expr)> {
    p.invariants()
        .map(|(n, e)| (n.clone(), e.clone()))
        .collect()
}

fn report(verdict: Verdict, states: usize, start: Instant) -> CheckReport {
    CheckReport {
        verdict,
        states_explored: states,
        check_time: start.elapsed(),
    }
}

/// Invariants, then deadlock freedom if requested.
pub fn check_safety_and_deadlock(
    p: &Protocol,
    inst: &InstanceBinding,
    invariants: &[(Name, Expr)],
    deadlock_check: bool,
    opts: &CheckOptions,
) -> Result<CheckReport, CheckError> {
    let start = Instant::now();
    let m = Model::new(p, inst)?;
    match explore(&m, invariants, opts.state_cap)? {
        Exploration::Violation(c) => Ok(report(Verdict::Fail(c), 0, start)),
        Exploration::Graph(g, dead) => {
            let verdict = match dead {
                Some(d) if deadlock_check => {
                    let (ss, ls) = g.bfs_path(d);
                    Verdict::Fail(build_cex(&m, &g, CexKind::Deadlock, &ss, &ls, None))
                }
                _ => Verdict::Pass,
            };
            Ok(report(verdict, g.len(), start))
        }
    }
}

fn leads_to_parts(prop: &Property) -> Option<(&Name, &Expr, &Expr)> {
    match prop {
        Property::LeadsTo { name, p, q } => Some((name, p, q)),
        Property::Invariant { .. } => None,
    }
}

fn temporal_check(
    p: &Protocol,
    inst: &InstanceBinding,
    prop: &Property,
    opts: &CheckOptions,
    find: fn(&Model<'_>, &StateGraph, &Name, &Region) -> Option<Counterexample>,
) -> Result<CheckReport, CheckError> {
    let start = Instant::now();
    let m = Model::new(p, inst)?;
    let Exploration::Graph(g, _) = explore(&m, &[], opts.state_cap)? else {
        unreachable!("no invariants to violate")
    };
    let verdict = match leads_to_parts(prop) {
        Some((name, pp, q)) => {
            let r = pending_region(&m, &g, name, pp, q)?;
            find(&m, &g, name, &r).map_or(Verdict::Pass, Verdict::Fail)
        }
        None => Verdict::Pass,
    };
    Ok(report(verdict, g.len(), start))
}

/// Fair lasso search for a leads-to property. Invariant properties pass trivially.
pub fn check_liveness(
    p: &Protocol,
    inst: &InstanceBinding,
    prop: &Property,
    opts: &CheckOptions,
) -> Result<CheckReport, CheckError> {
    temporal_check(p, inst, prop, opts, find_fair_cycle)
}

/// Pending states where no fair action can make progress.
pub fn check_stuttering(
    p: &Protocol,
    inst: &InstanceBinding,
    prop: &Property,
    opts: &CheckOptions,
) -> Result<CheckReport, CheckError> {
    temporal_check(p, inst, prop, opts, find_stuttering)
}

/// All of the protocol's properties: invariants, deadlock freedom if the
/// protocol asks for it, then stuttering and fair cycles for each leads-to
/// property in declaration order. The first failure wins.
pub fn verify(
    p: &Protocol,
    inst: &InstanceBinding,
    opts: &CheckOptions,
) -> Result<CheckReport, CheckError> {
    let start = Instant::now();
    let m = Model::new(p, inst)?;
    let (g, dead) = match explore(&m, &invariants_of(p), opts.state_cap)? {
        Exploration::Violation(c) => return Ok(report(Verdict::Fail(c), 0, start)),
        Exploration::Graph(g, dead) => (g, dead),
    };
    if let (Some(d), true) = (dead, p.check_deadlock) {
        let (ss, ls) = g.bfs_path(d);
        return Ok(report(
            Verdict::Fail(build_cex(&m, &g, CexKind::Deadlock, &ss, &ls, None)),
            g.len(),
            start,
        ));
    }
    for (name, pp, q) in p.leads_to() {
        let r = pending_region(&m, &g, name, pp, q)?;
        if let Some(c) =
            find_stuttering(&m, &g, name, &r).or_else(|| find_fair_cycle(&m, &g, name, &r))
        {
            return Ok(report(Verdict::Fail(c), g.len(), start));
        }
    }
    Ok(report(Verdict::Pass, g.len(), start))
}

/// Reachable states of a protocol instance, ignoring properties.
pub fn reachable_graph(
    p: &Protocol,
    inst: &InstanceBinding,
    opts: &CheckOptions,
) -> Result<StateGraph, CheckError> {
    let m = Model::new(p, inst)?;
    match explore(&m, &[], opts.state_cap)? {
        Exploration::Graph(g, _) => Ok(g),
        Exploration::Violation(_) => unreachable!("no invariants to violate"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("counterexample does not replay at step {step}: {msg}")]
pub struct ReplayError {
    pub step: usize,
    pub msg: String,
}

/// Re-executes a counterexample against the protocol: the first state is
/// initial, every labeled step is enabled and produces the next state, and
/// the final state exhibits the claimed violation.
pub fn replay(
    p: &Protocol,
    inst: &InstanceBinding,
    cex: &Counterexample,
) -> Result<(), ReplayError> {
    let fail = |step: usize, msg: String| ReplayError { step, msg };
    let m = Model::new(p, inst).map_err(|e| fail(0, e.to_string()))?;
    if cex.states.is_empty() || cex.labels.len() + 1 != cex.states.len() {
        return Err(fail(0, "states and labels do not line up".into()));
    }
    let inits = m.initial_states().map_err(|e| fail(0, e.to_string()))?;
    if !inits.contains(&cex.states[0]) {
        return Err(fail(0, "first state is not initial".into()));
    }
    for (k, (s, l, t)) in cex.transitions().enumerate() {
        let i = m
            .instances
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| fail(k + 1, format!("no action instance {l}")))?;
        if !m.enabled(i, s).map_err(|e| fail(k + 1, e.to_string()))? {
            return Err(fail(k + 1, format!("{l} is not enabled")));
        }
        if &m.fire(i, s).map_err(|e| fail(k + 1, e.to_string()))? != t {
            return Err(fail(
                k + 1,
                format!("{l} does not produce the recorded state"),
            ));
        }
    }
    let k = cex.k();
    let last = cex.last();
    let holds = |e: &Expr| {
        m.holds(e, last, "property")
            .map_err(|e| fail(k, e.to_string()))
    };
    let prop = |n: &Name| {
        p.properties
            .iter()
            .find(|x| x.name() == n)
            .ok_or_else(|| fail(k, format!("no property `{n}`")))
    };
    match &cex.kind {
        CexKind::Safety(n) => {
            let Property::Invariant { pred, .. } = prop(n)? else {
                return Err(fail(k, format!("`{n}` is not an invariant")));
            };
            if holds(pred)? {
                return Err(fail(k, format!("final state satisfies `{n}`")));
            }
            if cex.loop_index.is_some() {
                return Err(fail(k, "safety counterexample has a loop".into()));
            }
        }
        CexKind::Deadlock => {
            if !m
                .successors(last)
                .map_err(|e| fail(k, e.to_string()))?
                .is_empty()
            {
                return Err(fail(k, "final state has successors".into()));
            }
        }
        CexKind::Liveness(n) | CexKind::Stuttering(n) => {
            let Some((_, pp, q)) = leads_to_parts(prop(n)?) else {
                return Err(fail(k, format!("`{n}` is not a leads-to property")));
            };
            let l = cex
                .loop_index
                .ok_or_else(|| fail(k, "missing loop index".into()))?;
            let stutter = matches!(cex.kind, CexKind::Stuttering(_));
            if stutter && l != k {
                return Err(fail(k, "stuttering loop must be at the last state".into()));
            }
            if !stutter && (l >= k || cex.states[l] != *last) {
                return Err(fail(k, "lasso does not close".into()));
            }
            // Some P-state after which Q never holds.
            let mut seen_p = false;
            for (j, s) in cex.states.iter().enumerate() {
                let hq = m
                    .holds(q, s, "consequent")
                    .map_err(|e| fail(j, e.to_string()))?;
                if hq {
                    seen_p = false;
                } else if !seen_p {
                    seen_p = m
                        .holds(pp, s, "antecedent")
                        .map_err(|e| fail(j, e.to_string()))?;
                }
            }
            if !seen_p {
                return Err(fail(k, "no pending obligation on the lasso".into()));
            }
            let cycle: Vec<&State> = cex.states[l..].iter().collect();
            let taken: BTreeSet<&TransitionLabel> = cex.labels[l..].iter().collect();
            for (i, lab) in m.instances.iter().enumerate() {
                if !m.is_fair(i) {
                    continue;
                }
                for s in &cycle {
                    if m.enabled(i, s).map_err(|e| fail(k, e.to_string()))? {
                        let progresses = m.fire(i, s).map_err(|e| fail(k, e.to_string()))? != **s;
                        if stutter && progresses {
                            return Err(fail(
                                k,
                                format!("fair {lab} can leave the stuttering state"),
                            ));
                        }
                        if !stutter && !taken.contains(lab) {
                            return Err(fail(
                                k,
                                format!("fair {lab} is enabled on the cycle but never taken"),
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}
