//! Pruning constraints: disjunctions over hole input/output pairs, built from
//! counterexamples and checked by plain evaluation.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::checker::{CexKind, CheckError, Counterexample, Model, TransitionLabel};
use crate::expr::{eval, Env, EvalError, Expr};
use crate::sketch::{Completion, Hole, HoleKind, Sketch, SketchError};
use crate::values::{InstanceBinding, Name, State, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PruneError {
    #[error("no expression for hole `{0}`")]
    MissingHole(Name),
    #[error("argument `{arg}` of hole `{hole}` has no value")]
    Unbound { hole: Name, arg: Name },
    #[error("evaluating hole `{hole}`: {source}")]
    Eval {
        hole: Name,
        #[source]
        source: EvalError,
    },
    #[error("counterexample mentions unknown action `{0}`")]
    UnknownAction(Name),
    #[error(transparent)]
    Instance(#[from] CheckError),
    #[error(transparent)]
    Completion(#[from] SketchError),
}

/// `(h, s★, y)`: hole `h` evaluated on the inputs `s★` gives `y`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    pub hole: Name,
    /// Values of the hole's formal arguments, in declaration order.
    pub input: Vec<(Name, Value)>,
    pub output: Value,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.hole)?;
        for (i, (n, v)) in self.input.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}={v}")?;
        }
        write!(f, ") != {}", self.output)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Origin {
    pub kind: CexKind,
    /// Sequence number of the counterexample within a synthesis run.
    pub run: usize,
}

/// Satisfied by a completion iff some term evaluates differently. The
/// empty disjunction is unsatisfiable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruningConstraint {
    pub terms: Vec<Term>,
    pub origin: Origin,
    /// Instance the counterexample came from; parameters in hole
    /// expressions evaluate against it.
    pub inst: Arc<InstanceBinding>,
}

impl PruningConstraint {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn push(&mut self, t: Term) {
        if !self.terms.contains(&t) {
            self.terms.push(t);
        }
    }

    pub fn satisfied_by(&self, x: &Completion) -> Result<bool, PruneError> {
        for t in &self.terms {
            if eval_hole(x, &t.hole, &t.input, &self.inst)? != t.output {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

impl fmt::Display for PruningConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "FALSE");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " \\/ ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub constraints: Vec<PruningConstraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, c: PruningConstraint) {
        self.constraints.push(c);
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// One constraint per line.
    pub fn dump(&self) -> String {
        self.constraints.iter().map(|c| format!("{c}\n")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pcc {
    Pass,
    /// Index of the first violated constraint.
    Pruned(usize),
}

pub fn pcc_check(x: &Completion, cs: &ConstraintSet) -> Result<Pcc, PruneError> {
    for (i, c) in cs.constraints.iter().enumerate() {
        if !c.satisfied_by(x)? {
            return Ok(Pcc::Pruned(i));
        }
    }
    Ok(Pcc::Pass)
}

fn eval_hole(
    x: &Completion,
    hole: &Name,
    input: &[(Name, Value)],
    inst: &InstanceBinding,
) -> Result<Value, PruneError> {
    let body = x
        .get(hole)
        .ok_or_else(|| PruneError::MissingHole(hole.clone()))?;
    let mut env = Env::args_only(inst, input.to_vec());
    eval(body, &mut env).map_err(|source| PruneError::Eval {
        hole: hole.clone(),
        source,
    })
}

/// Builds terms for the holes of one sketch and instance.
struct Encoder<'a> {
    sk: &'a Sketch,
    x: &'a Completion,
    inst: &'a InstanceBinding,
    vars: Vec<Name>,
}

impl Encoder<'_> {
    /// `s★`: the hole's arguments read from the state, the action's
    /// arguments and the parameters.
    fn restrict(
        &self,
        h: &Hole,
        s: &State,
        label: &TransitionLabel,
    ) -> Result<Vec<(Name, Value)>, PruneError> {
        h.formals()
            .into_iter()
            .map(|a| {
                let v = label
                    .args
                    .iter()
                    .find(|(n, _)| *n == a)
                    .map(|(_, v)| v.clone())
                    .or_else(|| {
                        self.vars
                            .iter()
                            .position(|v| *v == a)
                            .map(|i| s.get(i).clone())
                    })
                    .or_else(|| self.inst.param_value(&a))
                    .ok_or_else(|| PruneError::Unbound {
                        hole: h.name.clone(),
                        arg: a.clone(),
                    })?;
                Ok((a, v))
            })
            .collect()
    }

    fn term(&self, h: &Hole, s: &State, label: &TransitionLabel) -> Result<Term, PruneError> {
        let input = self.restrict(h, s, label)?;
        let output = eval_hole(self.x, &h.name, &input, self.inst)?;
        Ok(Term {
            hole: h.name.clone(),
            input,
            output,
        })
    }

    fn holes(&self, action: &Name) -> Result<Vec<&'_ Hole>, PruneError> {
        let action: &str = action;
        if self.sk.action(action).is_none() {
            return Err(PruneError::UnknownAction(action.into()));
        }
        Ok(self
            .sk
            .holes
            .iter()
            .filter(|h| &*h.action == action)
            .collect())
    }

    fn is_fair(&self, action: &Name) -> bool {
        self.sk.action(action).is_some_and(|a| a.fair)
    }

    /// τ-terms for every hole of every transition of the run.
    fn safety(&self, r: &Counterexample, c: &mut PruningConstraint) -> Result<(), PruneError> {
        for (s, label, _) in r.transitions() {
            for h in self.holes(&label.action)? {
                c.push(self.term(h, s, label)?);
            }
        }
        Ok(())
    }

    /// Whether every condition of instance `i` that is not a hole holds at `s`.
    fn fixed_guards_hold(&self, m: &Model<'_>, i: usize, s: &State) -> Result<bool, PruneError> {
        let label = &m.instances[i];
        let action = self
            .sk
            .action(&label.action)
            .ok_or_else(|| PruneError::UnknownAction(label.action.clone()))?;
        let mut env =
            Env::new(self.inst, &self.vars, s.values()).with_args(label.args.iter().cloned());
        for pre in action
            .pre
            .iter()
            .filter(|e| !matches!(e, Expr::HoleCall(..)))
        {
            let v = eval(pre, &mut env).map_err(|source| CheckError::Eval {
                context: format!("guard of {label}"),
                source,
            })?;
            if v != Value::Bool(true) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// ρ-terms `(h, s★, False)` for pre-holes that are false at `s`. Instances
    /// whose other conditions fail at `s`, or that `skip` lists, cannot be
    /// enabled by changing a hole and contribute nothing.
    fn disabled_guards(
        &self,
        m: &Model<'_>,
        s: &State,
        fair_only: bool,
        skip: &[&TransitionLabel],
        c: &mut PruningConstraint,
    ) -> Result<(), PruneError> {
        for (i, label) in m.instances.iter().enumerate() {
            if (fair_only && !self.is_fair(&label.action)) || skip.contains(&label) {
                continue;
            }
            if !self.fixed_guards_hold(m, i, s)? {
                continue;
            }
            for h in self
                .holes(&label.action)?
                .into_iter()
                .filter(|h| h.kind == HoleKind::Pre)
            {
                let t = self.term(h, s, label)?;
                if t.output == Value::Bool(false) {
                    c.push(t);
                }
            }
        }
        Ok(())
    }

    /// τ-terms at `s` for the post-holes of fair action instances enabled at
    /// `s`; disabled ones stay disabled unless a ρ-term flips.
    fn fair_updates(
        &self,
        m: &Model<'_>,
        s: &State,
        c: &mut PruningConstraint,
    ) -> Result<(), PruneError> {
        for (i, label) in m.instances.iter().enumerate() {
            if !m.is_fair(i) || !m.enabled(i, s)? {
                continue;
            }
            for h in self
                .holes(&label.action)?
                .into_iter()
                .filter(|h| h.kind == HoleKind::Post)
            {
                c.push(self.term(h, s, label)?);
            }
        }
        Ok(())
    }
}

fn start(r: &Counterexample, inst: &InstanceBinding) -> PruningConstraint {
    PruningConstraint {
        terms: Vec::new(),
        origin: Origin {
            kind: r.kind.clone(),
            run: 0,
        },
        inst: Arc::new(inst.clone()),
    }
}

fn encoder<'a>(sk: &'a Sketch, x: &'a Completion, inst: &'a InstanceBinding) -> Encoder<'a> {
    Encoder {
        sk,
        x,
        inst,
        vars: sk.var_names(),
    }
}

/// Excludes exactly the completions under which `r` is still a run.
pub fn encode_safety(
    r: &Counterexample,
    sk: &Sketch,
    x: &Completion,
    inst: &InstanceBinding,
) -> Result<PruningConstraint, PruneError> {
    let mut c = start(r, inst);
    encoder(sk, x, inst).safety(r, &mut c)?;
    Ok(c)
}

/// Also admits completions that enable some action at the deadlocked state.
pub fn encode_deadlock(
    r: &Counterexample,
    sk: &Sketch,
    x: &Completion,
    inst: &InstanceBinding,
) -> Result<PruningConstraint, PruneError> {
    let e = encoder(sk, x, inst);
    let mut c = start(r, inst);
    e.safety(r, &mut c)?;
    let p = sk.apply_completion(x)?;
    e.disabled_guards(&Model::new(&p, inst)?, r.last(), false, &[], &mut c)?;
    Ok(c)
}

/// Also admits completions that enable a fair action somewhere on the cycle.
pub fn encode_liveness(
    r: &Counterexample,
    sk: &Sketch,
    x: &Completion,
    inst: &InstanceBinding,
) -> Result<PruningConstraint, PruneError> {
    let e = encoder(sk, x, inst);
    let mut c = start(r, inst);
    e.safety(r, &mut c)?;
    let p = sk.apply_completion(x)?;
    let m = Model::new(&p, inst)?;
    let l = r.loop_index.unwrap_or(r.k());
    // instances taken on the cycle already satisfy fairness
    let taken: Vec<&TransitionLabel> = r.labels[l..].iter().collect();
    for s in &r.states[l..r.k()] {
        e.disabled_guards(&m, s, true, &taken, &mut c)?;
    }
    Ok(c)
}

/// Also admits completions under which a fair action leaves the final state.
pub fn encode_stuttering(
    r: &Counterexample,
    sk: &Sketch,
    x: &Completion,
    inst: &InstanceBinding,
) -> Result<PruningConstraint, PruneError> {
    let e = encoder(sk, x, inst);
    let mut c = start(r, inst);
    e.safety(r, &mut c)?;
    let p = sk.apply_completion(x)?;
    let m = Model::new(&p, inst)?;
    e.fair_updates(&m, r.last(), &mut c)?;
    e.disabled_guards(&m, r.last(), true, &[], &mut c)?;
    Ok(c)
}

/// Dispatches on the counterexample's kind.
pub fn encode(
    r: &Counterexample,
    sk: &Sketch,
    x: &Completion,
    inst: &InstanceBinding,
) -> Result<PruningConstraint, PruneError> {
    match r.kind {
        CexKind::Safety(_) => encode_safety(r, sk, x, inst),
        CexKind::Deadlock => encode_deadlock(r, sk, x, inst),
        CexKind::Liveness(_) => encode_liveness(r, sk, x, inst),
        CexKind::Stuttering(_) => encode_stuttering(r, sk, x, inst),
    }
}
