//! The synthesis loop: enumerate a candidate, filter it through the pruning
//! constraints, model check it, and turn each counterexample into a new
//! constraint.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::checker::{
    verify, CheckError, CheckOptions, Counterexample, Verdict, DEFAULT_STATE_CAP,
};
use crate::enumerate::{Grammar, GrammarError, JointEnumerator, Signature, Strategy};
use crate::prune::{encode, pcc_check, ConstraintSet, Pcc, PruneError};
use crate::sketch::{Completion, Protocol, Sketch, SketchError};
use crate::values::{InstanceBinding, Name};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3600);

#[derive(Clone, Debug)]
pub struct SynthesisConfig {
    pub instance: InstanceBinding,
    /// Larger instances a solution must also pass.
    pub extra_instances: Vec<InstanceBinding>,
    pub grammars: BTreeMap<Name, Grammar>,
    pub reduce: bool,
    pub shortcircuit: bool,
    pub strategy: Strategy,
    pub timeout: Duration,
    pub state_cap: usize,
    pub max_combined_size: Option<usize>,
    pub extra_check: bool,
}

impl SynthesisConfig {
    pub fn new(instance: InstanceBinding) -> Self {
        SynthesisConfig {
            instance,
            extra_instances: Vec::new(),
            grammars: BTreeMap::new(),
            reduce: true,
            shortcircuit: true,
            strategy: Strategy::Cached,
            timeout: DEFAULT_TIMEOUT,
            state_cap: DEFAULT_STATE_CAP,
            max_combined_size: None,
            extra_check: true,
        }
    }

    pub fn with_grammar(mut self, hole: &str, g: Grammar) -> Self {
        self.grammars.insert(hole.into(), g);
        self
    }

    fn check_options(&self) -> CheckOptions {
        CheckOptions {
            state_cap: self.state_cap,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynthesisStats {
    /// Candidates drawn from the enumerator.
    pub generated: u64,
    /// Candidates rejected by the pruning constraints.
    pub pruned: u64,
    /// Candidates sent to the model checker.
    pub model_checked: u64,
    /// Combined size of the solution, or the largest size reached.
    pub k_prime: Option<usize>,
    pub solved: bool,
    pub constraints: usize,
    /// Extra-instance checks that found a counterexample.
    pub extra_check_failures: u64,
    /// Counterexamples seen before; stays zero when pruning is sound.
    pub repeated_counterexamples: u64,
    pub total_time: Duration,
    pub check_time: Duration,
}

impl SynthesisStats {
    /// `k′`: exact when solved, otherwise a lower bound.
    pub fn k_prime_display(&self) -> String {
        match (self.k_prime, self.solved) {
            (None, _) => "≥0".into(),
            (Some(k), true) => k.to_string(),
            (Some(k), false) => format!("≥{k}"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum SynthesisResult {
    Solved {
        completion: Completion,
        protocol: Protocol,
        stats: SynthesisStats,
    },
    Exhausted(SynthesisStats),
    TimedOut(SynthesisStats),
    /// A counterexample that no completion can avoid.
    Unrealizable {
        run: Counterexample,
        stats: SynthesisStats,
    },
}

impl SynthesisResult {
    pub fn stats(&self) -> &SynthesisStats {
        match self {
            SynthesisResult::Solved { stats, .. }
            | SynthesisResult::Exhausted(stats)
            | SynthesisResult::TimedOut(stats)
            | SynthesisResult::Unrealizable { stats, .. } => stats,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SynthesisResult::Solved { .. } => "solved",
            SynthesisResult::Exhausted(_) => "exhausted",
            SynthesisResult::TimedOut(_) => "timed-out",
            SynthesisResult::Unrealizable { .. } => "unrealizable",
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("hole `{0}` has no grammar")]
    MissingGrammar(Name),
    #[error("grammar given for `{0}`, which is not a hole of the sketch")]
    UnknownHole(Name),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error("checking candidate\n{candidate}: {source}")]
    Check {
        candidate: Completion,
        #[source]
        source: CheckError,
    },
    #[error(transparent)]
    Prune(#[from] PruneError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtraCheck {
    Pass,
    /// Counterexample and index of the failing extra instance.
    Fail(Counterexample, usize),
}

/// Verifies `p` against each extra instance in order.
pub fn extra_check(p: &Protocol, cfg: &SynthesisConfig) -> Result<ExtraCheck, CheckError> {
    for (i, inst) in cfg.extra_instances.iter().enumerate() {
        if let Verdict::Fail(c) = verify(p, inst, &cfg.check_options())?.verdict {
            return Ok(ExtraCheck::Fail(c, i));
        }
    }
    Ok(ExtraCheck::Pass)
}

/// Holes paired with their grammars and signatures, in sketch order.
fn hole_grammars(
    sk: &Sketch,
    cfg: &SynthesisConfig,
) -> Result<Vec<(Name, Grammar, Signature)>, SynthesisError> {
    if let Some(h) = cfg.grammars.keys().find(|h| sk.hole(h).is_none()) {
        return Err(SynthesisError::UnknownHole(h.clone()));
    }
    sk.holes
        .iter()
        .map(|h| {
            let g = cfg
                .grammars
                .get(&h.name)
                .ok_or_else(|| SynthesisError::MissingGrammar(h.name.clone()))?;
            let found = g.start_type().cloned().unwrap_or(h.output_type.clone());
            if found != h.output_type {
                return Err(GrammarError::StartType {
                    grammar: g.name.clone(),
                    hole: h.name.clone(),
                    expected: h.output_type.clone(),
                    found,
                }
                .into());
            }
            Ok((h.name.clone(), g.clone(), Signature::for_hole(sk, h)))
        })
        .collect()
}

/// Searches the grammars for a completion whose protocol passes every
/// property on the primary instance and, if enabled, on the extra instances.
pub fn synthesize(sk: &Sketch, cfg: &SynthesisConfig) -> Result<SynthesisResult, SynthesisError> {
    let start = Instant::now();
    let mut stats = SynthesisStats::default();
    let mut joint = JointEnumerator::new(
        hole_grammars(sk, cfg)?,
        cfg.strategy,
        cfg.reduce,
        cfg.shortcircuit,
        cfg.max_combined_size,
    )?;
    let mut cs = ConstraintSet::new();
    let mut seen: HashSet<Counterexample> = HashSet::new();
    let opts = cfg.check_options();

    let finish = |mut stats: SynthesisStats, cs: &ConstraintSet| {
        stats.total_time = start.elapsed();
        stats.constraints = cs.len();
        stats
    };

    loop {
        if start.elapsed() >= cfg.timeout {
            return Ok(SynthesisResult::TimedOut(finish(stats, &cs)));
        }
        let Some(x) = joint.next_completion() else {
            return Ok(SynthesisResult::Exhausted(finish(stats, &cs)));
        };
        stats.generated += 1;
        stats.k_prime = Some(stats.k_prime.unwrap_or(0).max(x.size()));
        if let Pcc::Pruned(_) = pcc_check(&x, &cs)? {
            stats.pruned += 1;
            continue;
        }
        let p = sk.apply_completion(&x)?;
        stats.model_checked += 1;
        let t = Instant::now();
        let checked = verify(&p, &cfg.instance, &opts).map_err(|source| SynthesisError::Check {
            candidate: x.clone(),
            source,
        })?;
        let failure = match checked.verdict {
            Verdict::Fail(c) => Some((c, &cfg.instance)),
            Verdict::Pass if cfg.extra_check => {
                match extra_check(&p, cfg).map_err(|source| SynthesisError::Check {
                    candidate: x.clone(),
                    source,
                })? {
                    ExtraCheck::Pass => None,
                    ExtraCheck::Fail(c, i) => {
                        stats.extra_check_failures += 1;
                        Some((c, &cfg.extra_instances[i]))
                    }
                }
            }
            Verdict::Pass => None,
        };
        stats.check_time += t.elapsed();
        let Some((run, inst)) = failure else {
            stats.solved = true;
            stats.k_prime = Some(x.size());
            return Ok(SynthesisResult::Solved {
                completion: x,
                protocol: p,
                stats: finish(stats, &cs),
            });
        };
        if !seen.insert(run.clone()) {
            stats.repeated_counterexamples += 1;
        }
        let mut c = encode(&run, sk, &x, inst)?;
        c.origin.run = seen.len();
        if c.is_empty() {
            return Ok(SynthesisResult::Unrealizable {
                run,
                stats: finish(stats, &cs),
            });
        }
        debug_assert!(
            !c.satisfied_by(&x)?,
            "new constraint must exclude the failing candidate"
        );
        cs.push(c);
    }
}

/// `key=value` lines followed by a summary table.
pub fn report_stats(stats: &SynthesisStats) -> String {
    let mut out = String::new();
    let secs = |d: Duration| format!("{:.3}", d.as_secs_f64());
    let kv = [
        ("generated", stats.generated.to_string()),
        ("pruned", stats.pruned.to_string()),
        ("model_checked", stats.model_checked.to_string()),
        ("k_prime", stats.k_prime_display()),
        ("solved", stats.solved.to_string()),
        ("constraints", stats.constraints.to_string()),
        (
            "extra_check_failures",
            stats.extra_check_failures.to_string(),
        ),
        (
            "repeated_counterexamples",
            stats.repeated_counterexamples.to_string(),
        ),
        ("total_time_s", secs(stats.total_time)),
        ("check_time_s", secs(stats.check_time)),
    ];
    for (k, v) in &kv {
        writeln!(out, "{k}={v}").unwrap();
    }
    let rows = [
        (
            "generated / model checked",
            format!("{} / {}", stats.generated, stats.model_checked),
        ),
        ("pruned", stats.pruned.to_string()),
        ("k'", stats.k_prime_display()),
        (
            "total / check time (s)",
            format!("{} / {}", secs(stats.total_time), secs(stats.check_time)),
        ),
    ];
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let vw = rows
        .iter()
        .map(|(_, v)| v.chars().count())
        .max()
        .unwrap_or(0);
    let rule = format!("+-{}-+-{}-+", "-".repeat(w), "-".repeat(vw));
    writeln!(out, "{rule}").unwrap();
    for (k, v) in &rows {
        let pad = vw - v.chars().count();
        writeln!(out, "| {k:<w$} | {}{v} |", " ".repeat(pad)).unwrap();
    }
    writeln!(out, "{rule}").unwrap();
    out
}
