//! Canonical forms used to discard semantically equivalent candidates.
//!
//! Boolean and set expressions become boolean functions over opaque atoms.
//! A set expression is identified with the indicator function of membership,
//! so union, intersection and difference map to disjunction, conjunction and
//! conjunction with a negation. Equality of sets `A = B` is the statement that
//! the symmetric difference of `A` and `B` is empty. Atoms are treated as
//! independent variables, which can only miss equivalences, never invent them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::expr::{BinOp, Expr, TypeScope, Typer};
use crate::values::TypeExpr;

/// Truth tables are built over at most this many atoms.
pub const MAX_ATOMS: usize = 16;

/// A boolean function over named atoms. Only atoms the function depends on
/// are kept, sorted, so equal functions have equal representations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoolFn {
    pub atoms: Vec<String>,
    /// Bit `m` is the value under the assignment where atom `i` is `m >> i & 1`.
    pub table: Vec<u64>,
}

impl BoolFn {
    pub fn constant(b: bool) -> Self {
        BoolFn {
            atoms: Vec::new(),
            table: vec![u64::from(b)],
        }
    }

    pub fn value(&self, m: usize) -> bool {
        self.table[m / 64] >> (m % 64) & 1 == 1
    }

    pub fn as_constant(&self) -> Option<bool> {
        self.atoms.is_empty().then(|| self.value(0))
    }

    /// Prime implicants as sorted literal lists; `⊤` and `⊥` for constants.
    pub fn dnf(&self) -> String {
        match self.as_constant() {
            Some(true) => return "TRUE".into(),
            Some(false) => return "FALSE".into(),
            None => {}
        }
        let n = self.atoms.len();
        let mut terms: BTreeSet<(u32, u32)> = (0..1usize << n)
            .filter(|&m| self.value(m))
            .map(|m| (((1u32 << n) - 1), m as u32))
            .collect();
        let mut primes = BTreeSet::new();
        while !terms.is_empty() {
            let mut merged = BTreeSet::new();
            let mut used = BTreeSet::new();
            let list: Vec<_> = terms.iter().copied().collect();
            for (i, &(ca, va)) in list.iter().enumerate() {
                for &(cb, vb) in &list[i + 1..] {
                    let diff = va ^ vb;
                    if ca == cb && diff.count_ones() == 1 {
                        merged.insert((ca & !diff, va & !diff));
                        used.insert((ca, va));
                        used.insert((cb, vb));
                    }
                }
            }
            primes.extend(terms.difference(&used).copied());
            terms = merged;
        }
        let clauses: Vec<String> = primes
            .iter()
            .map(|&(care, val)| {
                let lits: Vec<String> = (0..n)
                    .filter(|i| care >> i & 1 == 1)
                    .map(|i| {
                        if val >> i & 1 == 1 {
                            self.atoms[i].clone()
                        } else {
                            format!("~{}", self.atoms[i])
                        }
                    })
                    .collect();
                lits.join(" /\\ ")
            })
            .collect();
        clauses.join(" \\/ ")
    }

    fn key(&self) -> String {
        let hex: Vec<String> = self.table.iter().map(|w| format!("{w:x}")).collect();
        format!("<{}|{}>", self.atoms.join(","), hex.join("."))
    }
}

/// `Σ coeff·atom + constant` with atoms sorted and zero coefficients dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Linear {
    pub terms: BTreeMap<String, i128>,
    pub constant: i128,
}

impl Linear {
    fn atom(s: String) -> Self {
        Linear {
            terms: BTreeMap::from([(s, 1)]),
            constant: 0,
        }
    }

    fn scaled_add(mut self, other: &Linear, k: i128) -> Self {
        for (a, c) in &other.terms {
            let e = self.terms.entry(a.clone()).or_insert(0);
            *e += k * c;
            if *e == 0 {
                self.terms.remove(a);
            }
        }
        self.constant += k * other.constant;
        self
    }

    fn negated(&self) -> Self {
        Linear::default().scaled_add(self, -1)
    }

    fn key(&self) -> String {
        let terms: Vec<String> = self.terms.iter().map(|(a, c)| format!("{c}*{a}")).collect();
        format!("{}+{}", terms.join("+"), self.constant)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NormalForm {
    Bool(BoolFn),
    /// Membership indicator of a set-valued expression.
    Set(BoolFn),
    Int(Linear),
    /// The expression's own serialization.
    Opaque(String),
}

impl fmt::Display for NormalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalForm::Bool(b) => write!(f, "bool {}", b.dnf()),
            NormalForm::Set(b) => write!(f, "set {}", b.dnf()),
            NormalForm::Int(l) => write!(f, "int {}", l.key()),
            NormalForm::Opaque(s) => write!(f, "opaque {s}"),
        }
    }
}

/// Boolean formula over string atoms, before tabulation.
#[derive(Clone, Debug)]
enum B {
    Const(bool),
    Atom(String),
    Not(Box<B>),
    And(Box<B>, Box<B>),
    Or(Box<B>, Box<B>),
}

impl B {
    fn not(b: B) -> B {
        match b {
            B::Const(v) => B::Const(!v),
            B::Not(x) => *x,
            x => B::Not(Box::new(x)),
        }
    }
    fn and(l: B, r: B) -> B {
        B::And(Box::new(l), Box::new(r))
    }
    fn or(l: B, r: B) -> B {
        B::Or(Box::new(l), Box::new(r))
    }
    fn xor(l: B, r: B) -> B {
        B::or(B::and(l.clone(), B::not(r.clone())), B::and(B::not(l), r))
    }

    fn atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            B::Const(_) => {}
            B::Atom(a) => {
                out.insert(a.clone());
            }
            B::Not(x) => x.atoms(out),
            B::And(l, r) | B::Or(l, r) => {
                l.atoms(out);
                r.atoms(out);
            }
        }
    }

    fn eval(&self, ids: &BTreeMap<&str, usize>, m: usize) -> bool {
        match self {
            B::Const(v) => *v,
            B::Atom(a) => m >> ids[a.as_str()] & 1 == 1,
            B::Not(x) => !x.eval(ids, m),
            B::And(l, r) => l.eval(ids, m) && r.eval(ids, m),
            B::Or(l, r) => l.eval(ids, m) || r.eval(ids, m),
        }
    }

    fn tabulate(&self) -> Option<BoolFn> {
        let mut set = BTreeSet::new();
        self.atoms(&mut set);
        if set.len() > MAX_ATOMS {
            return None;
        }
        let atoms: Vec<String> = set.into_iter().collect();
        let ids: BTreeMap<&str, usize> = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();
        let bits: Vec<bool> = (0..1usize << atoms.len())
            .map(|m| self.eval(&ids, m))
            .collect();
        Some(reduce(atoms, bits))
    }
}

/// Drops atoms the function does not depend on.
fn reduce(mut atoms: Vec<String>, mut bits: Vec<bool>) -> BoolFn {
    let mut i = 0;
    while i < atoms.len() {
        let relevant = (0..bits.len()).any(|m| bits[m] != bits[m ^ (1 << i)]);
        if relevant {
            i += 1;
            continue;
        }
        // project away bit i
        bits = (0..bits.len() / 2)
            .map(|m| {
                let low = m & ((1 << i) - 1);
                let high = (m >> i) << (i + 1);
                bits[high | low]
            })
            .collect();
        atoms.remove(i);
    }
    let mut table = vec![0u64; bits.len().div_ceil(64)];
    for (m, b) in bits.iter().enumerate() {
        if *b {
            table[m / 64] |= 1 << (m % 64);
        }
    }
    BoolFn { atoms, table }
}

struct Normalizer<'s> {
    scope: &'s dyn TypeScope,
}

impl Normalizer<'_> {
    fn type_of(&self, e: &Expr) -> Option<TypeExpr> {
        Typer::new(self.scope)
            .infer(e, None)
            .ok()
            .or_else(|| sort_of(e))
    }

    fn pair_type(&self, l: &Expr, r: &Expr) -> Option<TypeExpr> {
        self.type_of(l).or_else(|| self.type_of(r))
    }

    fn boolean(&self, e: &Expr) -> B {
        match e {
            Expr::Bool(b) => B::Const(*b),
            Expr::Not(x) => B::not(self.boolean(x)),
            Expr::Bin(op, l, r) => match op {
                BinOp::And => B::and(self.boolean(l), self.boolean(r)),
                BinOp::Or => B::or(self.boolean(l), self.boolean(r)),
                BinOp::Implies => B::or(B::not(self.boolean(l)), self.boolean(r)),
                BinOp::Eq => self.equality(l, r),
                BinOp::Neq => B::not(self.equality(l, r)),
                BinOp::Lt => B::not(self.int_le(r, l)),
                BinOp::Le => self.int_le(l, r),
                BinOp::Member => self.member(l, r),
                BinOp::Subset => self.set_empty(B::and(self.set(l), B::not(self.set(r)))),
                _ => B::Atom(e.to_string()),
            },
            _ => B::Atom(e.to_string()),
        }
    }

    fn equality(&self, l: &Expr, r: &Expr) -> B {
        match self.pair_type(l, r) {
            Some(TypeExpr::Bool) => B::not(B::xor(self.boolean(l), self.boolean(r))),
            Some(TypeExpr::Set(_)) => self.set_empty(B::xor(self.set(l), self.set(r))),
            Some(TypeExpr::Int) => {
                let d = self.linear(l).scaled_add(&self.linear(r), -1);
                if d.terms.is_empty() {
                    return B::Const(d.constant == 0);
                }
                // a = b and b = a share one atom
                let d = if d.terms.values().next().is_some_and(|c| *c < 0) {
                    d.negated()
                } else {
                    d
                };
                B::Atom(format!("EQ0[{}]", d.key()))
            }
            _ => {
                let (a, b) = (l.to_string(), r.to_string());
                if a == b {
                    B::Const(true)
                } else {
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    B::Atom(format!("EQ[{a},{b}]"))
                }
            }
        }
    }

    fn int_le(&self, l: &Expr, r: &Expr) -> B {
        let d = self.linear(l).scaled_add(&self.linear(r), -1);
        if d.terms.is_empty() {
            return B::Const(d.constant <= 0);
        }
        B::Atom(format!("LE0[{}]", d.key()))
    }

    /// Emptiness of the set whose membership indicator is `ind`.
    fn set_empty(&self, ind: B) -> B {
        match ind.tabulate() {
            Some(f) => match f.as_constant() {
                Some(c) => B::Const(!c),
                None => B::Atom(format!("EMPTY{}", f.key())),
            },
            None => B::Atom(format!("EMPTY[{ind:?}]")),
        }
    }

    fn member(&self, x: &Expr, s: &Expr) -> B {
        match s {
            Expr::EmptySet => B::Const(false),
            Expr::Singleton(y) => self.equality(x, y),
            Expr::SetLit(ys) => ys
                .iter()
                .fold(B::Const(false), |acc, y| B::or(acc, self.equality(x, y))),
            Expr::Bin(BinOp::Union, a, b) => B::or(self.member(x, a), self.member(x, b)),
            Expr::Bin(BinOp::Inter, a, b) => B::and(self.member(x, a), self.member(x, b)),
            Expr::Bin(BinOp::Diff, a, b) => B::and(self.member(x, a), B::not(self.member(x, b))),
            Expr::Param(p) if self.scope.is_domain(p) => B::Const(true),
            _ => B::Atom(format!("IN[{x},{s}]")),
        }
    }

    fn set(&self, e: &Expr) -> B {
        match e {
            Expr::EmptySet => B::Const(false),
            Expr::Bin(BinOp::Union, a, b) => B::or(self.set(a), self.set(b)),
            Expr::Bin(BinOp::Inter, a, b) => B::and(self.set(a), self.set(b)),
            Expr::Bin(BinOp::Diff, a, b) => B::and(self.set(a), B::not(self.set(b))),
            Expr::SetLit(ys) => ys.iter().fold(B::Const(false), |acc, y| {
                B::or(acc, self.set(&Expr::singleton(y.clone())))
            }),
            // every element of a domain belongs to the domain
            Expr::Param(p) if self.scope.is_domain(p) => B::Const(true),
            _ => B::Atom(e.to_string()),
        }
    }

    fn linear(&self, e: &Expr) -> Linear {
        match e {
            Expr::Int(n) => Linear {
                terms: BTreeMap::new(),
                constant: i128::from(*n),
            },
            Expr::Bin(BinOp::Add, l, r) => self.linear(l).scaled_add(&self.linear(r), 1),
            Expr::Bin(BinOp::Sub, l, r) => self.linear(l).scaled_add(&self.linear(r), -1),
            _ => Linear::atom(e.to_string()),
        }
    }
}

/// Sort of an expression whose type cannot be inferred in isolation, such
/// as `{} \cup {}`. The element type is irrelevant here.
fn sort_of(e: &Expr) -> Option<TypeExpr> {
    let any_set = || Some(TypeExpr::set_of(TypeExpr::Bool));
    match e {
        Expr::EmptySet | Expr::Singleton(_) | Expr::SetLit(_) => any_set(),
        Expr::Bool(_) | Expr::Not(_) | Expr::Quant(..) => Some(TypeExpr::Bool),
        Expr::Int(_) => Some(TypeExpr::Int),
        Expr::Bin(op, ..) => match op {
            BinOp::Union | BinOp::Inter | BinOp::Diff => any_set(),
            BinOp::Add | BinOp::Sub => Some(TypeExpr::Int),
            _ => Some(TypeExpr::Bool),
        },
        _ => None,
    }
}

/// Canonical form of a hole-free, well-typed expression. Subterms outside
/// boolean, set and linear integer reasoning are opaque atoms.
pub fn normalize(e: &Expr, scope: &dyn TypeScope) -> NormalForm {
    let n = Normalizer { scope };
    normalize_as(e, n.type_of(e).as_ref(), scope)
}

/// As [`normalize`], with the expression's type already known.
pub fn normalize_as(e: &Expr, ty: Option<&TypeExpr>, scope: &dyn TypeScope) -> NormalForm {
    let n = Normalizer { scope };
    let opaque = || NormalForm::Opaque(e.to_string());
    match ty {
        Some(TypeExpr::Bool) => n
            .boolean(e)
            .tabulate()
            .map_or_else(opaque, NormalForm::Bool),
        Some(TypeExpr::Set(_)) => n.set(e).tabulate().map_or_else(opaque, NormalForm::Set),
        Some(TypeExpr::Int) => NormalForm::Int(n.linear(e)),
        _ => opaque(),
    }
}
