//! Synthesis of distributed protocols from sketches with pruning counterexamples.

pub mod cegis;
pub mod checker;
pub mod config;
pub mod corpus;
pub mod enumerate;
pub mod expr;
pub mod normal;
pub mod parser;
pub mod prune;
pub mod sketch;
pub mod values;

pub use cegis::{synthesize, SynthesisConfig, SynthesisResult, SynthesisStats};
pub use checker::{verify, CexKind, CheckOptions, Counterexample, Verdict};
pub use config::load_config;
pub use expr::{eval, BinOp, Env, EvalError, Expr, Quantifier};
pub use sketch::{
    parse_sketch, Action, Completion, Hole, HoleKind, Property, Protocol, Sketch, SketchError,
};
pub use values::{name, InstanceBinding, Name, State, TypeExpr, Value};
