use std::collections::{BTreeMap, BTreeSet};

use protoforge::enumerate::{
    CachedEnumerator, Grammar, JointEnumerator, NaiveEnumerator, Signature, Strategy,
};
use protoforge::values::universe;
use protoforge::{eval, name, BinOp, Env, Expr, InstanceBinding, TypeExpr, Value};

fn ph(nt: &str) -> Expr {
    Expr::Placeholder(name(nt))
}

fn node_set() -> TypeExpr {
    TypeExpr::set_of(TypeExpr::Domain(name("Node")))
}

/// S ::= {} | {n} | x | y | S ∪ S | S ∩ S | S \ S
fn sets() -> (Grammar, Signature) {
    let mut g = Grammar::new("Sets", "S", vec![(name("S"), node_set())])
        .with_production("S", Expr::EmptySet)
        .with_production("S", Expr::singleton(Expr::arg("n")))
        .with_production("S", Expr::arg("x"))
        .with_production("S", Expr::arg("y"));
    for op in [BinOp::Union, BinOp::Inter, BinOp::Diff] {
        g = g.with_production("S", Expr::bin(op, ph("S"), ph("S")));
    }
    let sig = Signature::new()
        .with_domain("Node")
        .with_arg("x", node_set())
        .with_arg("y", node_set())
        .with_arg("n", TypeExpr::Domain(name("Node")));
    (g, sig)
}

/// B ::= p | q | r | ¬B | B ∧ B | B ∨ B
fn bools() -> (Grammar, Signature) {
    let g = Grammar::new("B", "B", vec![(name("B"), TypeExpr::Bool)])
        .with_production("B", Expr::arg("p"))
        .with_production("B", Expr::arg("q"))
        .with_production("B", Expr::arg("r"))
        .with_production("B", Expr::not(ph("B")))
        .with_production("B", Expr::bin(BinOp::And, ph("B"), ph("B")))
        .with_production("B", Expr::bin(BinOp::Or, ph("B"), ph("B")));
    let sig = ["p", "q", "r"]
        .iter()
        .fold(Signature::new(), |s, a| s.with_arg(a, TypeExpr::Bool));
    (g, sig)
}

fn set_table(e: &Expr) -> Vec<Value> {
    let inst = InstanceBinding::new().with_domain("Node", &["n1", "n2"]);
    let all = universe(&node_set(), &inst).unwrap();
    let mut out = Vec::new();
    for x in &all {
        for y in &all {
            for n in inst.domain_elems("Node").unwrap() {
                let args = vec![
                    (name("x"), x.clone()),
                    (name("y"), y.clone()),
                    (name("n"), n),
                ];
                out.push(eval(e, &mut Env::args_only(&inst, args)).unwrap());
            }
        }
    }
    out
}

fn bool_table(e: &Expr) -> Vec<Value> {
    let inst = InstanceBinding::new();
    (0..8)
        .map(|bits| {
            let args = ["p", "q", "r"]
                .iter()
                .enumerate()
                .map(|(i, a)| (name(a), Value::Bool(bits >> i & 1 == 1)));
            eval(e, &mut Env::args_only(&inst, args.collect())).unwrap()
        })
        .collect()
}

fn up_to(it: impl Iterator<Item = Expr>, size: usize) -> Vec<Expr> {
    it.take_while(|e| e.size() <= size).collect()
}

/// Smallest size at which each class first appears.
fn first_sizes(es: &[Expr], table: fn(&Expr) -> Vec<Value>) -> BTreeMap<Vec<Value>, usize> {
    let mut m = BTreeMap::new();
    for e in es {
        m.entry(table(e)).or_insert(e.size());
    }
    m
}

#[test]
fn reduction_keeps_one_smallest_member_of_every_class() {
    for ((g, sig), table, size) in [
        (sets(), set_table as fn(&Expr) -> Vec<Value>, 7),
        (bools(), bool_table, 7),
    ] {
        let all = up_to(
            CachedEnumerator::new(g.clone(), sig.clone(), false, false).unwrap(),
            size,
        );
        let reduced = up_to(CachedEnumerator::new(g, sig, true, true).unwrap(), size);
        let tables: BTreeSet<_> = reduced.iter().map(table).collect();
        assert_eq!(tables.len(), reduced.len(), "a class is emitted twice");
        let want = first_sizes(&all, table);
        assert_eq!(first_sizes(&reduced, table), want);
    }
}

#[test]
fn shortcircuit_emits_the_same_sequence() {
    for (g, sig) in [sets(), bools()] {
        let with = up_to(
            CachedEnumerator::new(g.clone(), sig.clone(), true, true).unwrap(),
            9,
        );
        let without = up_to(CachedEnumerator::new(g, sig, true, false).unwrap(), 9);
        let strs = |v: &[Expr]| v.iter().map(ToString::to_string).collect::<Vec<_>>();
        assert_eq!(strs(&with), strs(&without));
    }
}

#[test]
fn naive_and_cached_agree_without_reduction() {
    for (g, sig) in [sets(), bools()] {
        let naive: BTreeSet<String> =
            up_to(NaiveEnumerator::new(g.clone(), sig.clone()).unwrap(), 5)
                .iter()
                .map(ToString::to_string)
                .collect();
        let cached: BTreeSet<String> =
            up_to(CachedEnumerator::new(g, sig, false, false).unwrap(), 5)
                .iter()
                .map(ToString::to_string)
                .collect();
        assert_eq!(naive, cached);
    }
}

#[test]
fn enumeration_is_size_ordered() {
    for (g, sig) in [sets(), bools()] {
        let es = up_to(
            CachedEnumerator::new(g.clone(), sig.clone(), false, false).unwrap(),
            6,
        );
        assert!(es.windows(2).all(|w| w[0].size() <= w[1].size()));
        let es = up_to(NaiveEnumerator::new(g, sig).unwrap(), 6);
        assert!(es.windows(2).all(|w| w[0].size() <= w[1].size()));
    }
}

#[test]
fn joint_completions_cover_every_pair_up_to_the_bound() {
    let (g, sig) = bools();
    let singles = up_to(
        CachedEnumerator::new(g.clone(), sig.clone(), true, true).unwrap(),
        4,
    );
    let joint: Vec<_> = JointEnumerator::new(
        vec![(name("a"), g.clone(), sig.clone()), (name("b"), g, sig)],
        Strategy::Cached,
        true,
        true,
        Some(6),
    )
    .unwrap()
    .collect();
    assert!(joint.windows(2).all(|w| w[0].size() <= w[1].size()));
    let got: BTreeSet<(String, String)> = joint
        .iter()
        .map(|c| {
            (
                c.get("a").unwrap().to_string(),
                c.get("b").unwrap().to_string(),
            )
        })
        .collect();
    assert_eq!(got.len(), joint.len());
    for a in &singles {
        for b in &singles {
            if a.size() + b.size() <= 6 {
                assert!(
                    got.contains(&(a.to_string(), b.to_string())),
                    "missing ({a}, {b})"
                );
            }
        }
    }
}
