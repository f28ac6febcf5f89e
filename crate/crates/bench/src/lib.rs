//! Fixtures shared by the benchmarks.

use protoforge::corpus::{default_root, load_cases, LoadedCase};
use protoforge::enumerate::{Grammar, Signature};
use protoforge::{name, BinOp, Expr, TypeExpr};

/// A case of the bundled corpus, by name.
pub fn corpus_case(case: &str) -> LoadedCase {
    load_cases(&default_root())
        .expect("corpus manifest")
        .into_iter()
        .find(|c| c.name == case)
        .unwrap_or_else(|| panic!("no corpus case {case}"))
        .load()
        .expect("corpus case loads")
}

/// S ::= {} | {n} | vote_yes | S ∪ S | S ∩ S | S \ S
pub fn set_grammar() -> (Grammar, Signature) {
    let node_set = TypeExpr::set_of(TypeExpr::Domain(name("Node")));
    let s = || Expr::Placeholder(name("S"));
    let mut g = Grammar::new("Sets", "S", vec![(name("S"), node_set.clone())])
        .with_production("S", Expr::EmptySet)
        .with_production("S", Expr::singleton(Expr::arg("n")))
        .with_production("S", Expr::arg("vote_yes"));
    for op in [BinOp::Union, BinOp::Inter, BinOp::Diff] {
        g = g.with_production("S", Expr::bin(op, s(), s()));
    }
    let sig = Signature::new()
        .with_domain("Node")
        .with_arg("vote_yes", node_set)
        .with_arg("n", TypeExpr::Domain(name("Node")));
    (g, sig)
}
