//! Tokenizer and expression/type parser shared by the sketch and config formats.

use std::fmt;

use thiserror::Error;

use crate::expr::{BinOp, Expr, Quantifier};
use crate::values::{name, Name, TypeExpr};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {msg}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

// Longest match first.
const SYMBOLS: &[&str] = &[
    "\\subseteq",
    "\\setminus",
    "\\intersect",
    "\\union",
    "\\notin",
    "\\cup",
    "\\cap",
    "\\in",
    "\\A",
    "\\E",
    "::=",
    "/\\",
    "\\/",
    "=>",
    "/=",
    "!=",
    "<=",
    ">=",
    "~>",
    ":=",
    "..",
    "(",
    ")",
    "{",
    "}",
    "[",
    "]",
    ",",
    ":",
    "=",
    "#",
    "<",
    ">",
    "~",
    "+",
    "-",
    "?",
    "!",
    "|",
    "@",
];

fn canonical_symbol(s: &'static str) -> &'static str {
    match s {
        "\\union" => "\\cup",
        "\\intersect" => "\\cap",
        "#" | "!=" => "/=",
        _ => s,
    }
}

pub fn tokenize(src: &str) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let mut out: Vec<(Tok, Pos)> = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let prev_is_operand = matches!(
            out.last(),
            Some((Tok::Ident(_) | Tok::Int(_) | Tok::Sym(")" | "]" | "}"), _))
        );
        let negative =
            c == '-' && !prev_is_operand && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit());
        if c.is_ascii_digit() || negative {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n = text.parse::<i64>().map_err(|_| SyntaxError {
                pos,
                msg: format!("integer literal `{text}` out of range"),
            })?;
            col += i - start;
            out.push((Tok::Int(n), pos));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 12)].iter().collect();
        let sym = SYMBOLS.iter().find(|s| {
            rest.starts_with(**s)
                // `\in` must not swallow the prefix of an identifier such as `\inx`
                && !(s.starts_with('\\')
                    && s.len() > 2
                    && s[1..].chars().all(char::is_alphabetic)
                    && rest[s.len()..].chars().next().is_some_and(|n| n.is_alphanumeric()))
        });
        match sym {
            Some(s) => {
                i += s.chars().count();
                col += s.chars().count();
                out.push((Tok::Sym(canonical_symbol(s)), pos));
            }
            None => {
                return Err(SyntaxError {
                    pos,
                    msg: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// Words that can never be identifiers.
pub const KEYWORDS: &[&str] = &[
    "const",
    "var",
    "init",
    "action",
    "fair",
    "require",
    "update",
    "invariant",
    "liveness",
    "option",
    "TRUE",
    "FALSE",
    "IF",
    "THEN",
    "ELSE",
    "EXCEPT",
];

pub struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

pub type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    pub fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: tokenize(src)?,
            at: 0,
        })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].0
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(SyntaxError {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    pub fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    pub fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == w)
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", self.peek()))
        }
    }

    pub fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.error(format!("expected `{w}`, found {}", self.peek()))
        }
    }

    pub fn ident(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(name(&s))
            }
            t => self.error(format!("expected identifier, found {t}")),
        }
    }

    pub fn parse_type(&mut self) -> PResult<TypeExpr> {
        let id = self.ident()?;
        match &*id {
            "Bool" => Ok(TypeExpr::Bool),
            "Int" => Ok(TypeExpr::Int),
            "Set" => {
                self.expect_sym("(")?;
                let t = self.parse_type()?;
                self.expect_sym(")")?;
                Ok(TypeExpr::set_of(t))
            }
            "Func" => {
                self.expect_sym("(")?;
                let k = self.parse_type()?;
                self.expect_sym(",")?;
                let v = self.parse_type()?;
                self.expect_sym(")")?;
                Ok(TypeExpr::func(k, v))
            }
            _ => Ok(TypeExpr::Domain(id)),
        }
    }

    /// Parses an expression. Identifiers come back as unresolved `Expr::Var`;
    /// see [`resolve`].
    pub fn parse_expr(&mut self) -> PResult<Expr> {
        let lhs = self.parse_or()?;
        if self.eat_sym("=>") {
            let rhs = self.parse_expr()?;
            return Ok(Expr::bin(BinOp::Implies, lhs, rhs));
        }
        Ok(lhs)
    }

    fn parse_or(&mut self) -> PResult<Expr> {
        let mut e = self.parse_and()?;
        while self.eat_sym("\\/") {
            let r = self.parse_and()?;
            e = Expr::bin(BinOp::Or, e, r);
        }
        Ok(e)
    }

    fn parse_and(&mut self) -> PResult<Expr> {
        let mut e = self.parse_not()?;
        while self.eat_sym("/\\") {
            let r = self.parse_not()?;
            e = Expr::bin(BinOp::And, e, r);
        }
        Ok(e)
    }

    fn parse_not(&mut self) -> PResult<Expr> {
        if self.eat_sym("~") {
            return Ok(Expr::not(self.parse_not()?));
        }
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> PResult<Expr> {
        let l = self.parse_add()?;
        let op = match self.peek() {
            Tok::Sym(s) => *s,
            _ => return Ok(l),
        };
        let build: fn(Expr, Expr) -> Expr = match op {
            "=" => |l, r| Expr::bin(BinOp::Eq, l, r),
            "/=" => |l, r| Expr::bin(BinOp::Neq, l, r),
            "<" => |l, r| Expr::bin(BinOp::Lt, l, r),
            "<=" => |l, r| Expr::bin(BinOp::Le, l, r),
            ">" => |l, r| Expr::bin(BinOp::Lt, r, l),
            ">=" => |l, r| Expr::bin(BinOp::Le, r, l),
            "\\in" => |l, r| Expr::bin(BinOp::Member, l, r),
            "\\notin" => |l, r| Expr::not(Expr::bin(BinOp::Member, l, r)),
            "\\subseteq" => |l, r| Expr::bin(BinOp::Subset, l, r),
            _ => return Ok(l),
        };
        self.bump();
        let r = self.parse_add()?;
        Ok(build(l, r))
    }

    fn parse_add(&mut self) -> PResult<Expr> {
        let mut e = self.parse_mul()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                Tok::Sym("\\cup") => BinOp::Union,
                Tok::Sym("\\setminus") => BinOp::Diff,
                _ => return Ok(e),
            };
            self.bump();
            let r = self.parse_mul()?;
            e = Expr::bin(op, e, r);
        }
    }

    fn parse_mul(&mut self) -> PResult<Expr> {
        let mut e = self.parse_postfix()?;
        while self.eat_sym("\\cap") {
            let r = self.parse_postfix()?;
            e = Expr::bin(BinOp::Inter, e, r);
        }
        Ok(e)
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let mut e = self.parse_primary()?;
        while self.is_sym("[") {
            self.bump();
            let k = self.parse_expr()?;
            self.expect_sym("]")?;
            e = Expr::Apply(Box::new(e), Box::new(k));
        }
        Ok(e)
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Int(n))
            }
            Tok::Ident(w) if w == "TRUE" => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::Ident(w) if w == "FALSE" => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Ident(w) if w == "IF" => {
                self.bump();
                let c = self.parse_expr()?;
                self.expect_word("THEN")?;
                let a = self.parse_expr()?;
                self.expect_word("ELSE")?;
                let b = self.parse_expr()?;
                Ok(Expr::Ite(Box::new(c), Box::new(a), Box::new(b)))
            }
            Tok::Ident(_) => Ok(Expr::Var(self.ident()?)),
            Tok::Sym("(") => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("{") => {
                self.bump();
                if self.eat_sym("}") {
                    return Ok(Expr::EmptySet);
                }
                let mut items = vec![self.parse_expr()?];
                while self.eat_sym(",") {
                    items.push(self.parse_expr()?);
                }
                self.expect_sym("}")?;
                if items.len() == 1 {
                    Ok(Expr::Singleton(Box::new(items.pop().unwrap())))
                } else {
                    Ok(Expr::SetLit(items))
                }
            }
            Tok::Sym("?") => {
                self.bump();
                let h = self.ident()?;
                self.expect_sym("(")?;
                let mut args = Vec::new();
                if !self.is_sym(")") {
                    args.push(self.parse_expr()?);
                    while self.eat_sym(",") {
                        args.push(self.parse_expr()?);
                    }
                }
                self.expect_sym(")")?;
                Ok(Expr::HoleCall(h, args))
            }
            Tok::Sym("[") => {
                self.bump();
                let f = self.parse_expr()?;
                self.expect_word("EXCEPT")?;
                self.expect_sym("!")?;
                self.expect_sym("[")?;
                let k = self.parse_expr()?;
                self.expect_sym("]")?;
                self.expect_sym("=")?;
                let v = self.parse_expr()?;
                self.expect_sym("]")?;
                Ok(Expr::Update(Box::new(f), Box::new(k), Box::new(v)))
            }
            Tok::Sym(q @ ("\\A" | "\\E")) => {
                self.bump();
                let x = self.ident()?;
                self.expect_sym("\\in")?;
                let d = self.ident()?;
                self.expect_sym(":")?;
                let body = self.parse_expr()?;
                let q = if q == "\\A" {
                    Quantifier::Forall
                } else {
                    Quantifier::Exists
                };
                Ok(Expr::Quant(q, x, d, Box::new(body)))
            }
            t => self.error(format!("expected expression, found {t}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefKind {
    Var,
    Param,
    Arg,
    Placeholder,
}

/// Turns the parser's raw identifiers into `Var`/`Param`/`Arg`/`Placeholder`
/// nodes. Quantifier-bound names resolve to `Arg` and shadow `classify`.
pub fn resolve(e: &Expr, classify: &dyn Fn(&str) -> Option<RefKind>) -> Result<Expr, String> {
    fn go(
        e: &Expr,
        bound: &mut Vec<Name>,
        classify: &dyn Fn(&str) -> Option<RefKind>,
    ) -> Result<Expr, String> {
        match e {
            Expr::Var(n) => {
                if bound.contains(n) {
                    return Ok(Expr::Arg(n.clone()));
                }
                match classify(n) {
                    Some(RefKind::Var) => Ok(Expr::Var(n.clone())),
                    Some(RefKind::Param) => Ok(Expr::Param(n.clone())),
                    Some(RefKind::Arg) => Ok(Expr::Arg(n.clone())),
                    Some(RefKind::Placeholder) => Ok(Expr::Placeholder(n.clone())),
                    None => Err(format!("unresolved name `{n}`")),
                }
            }
            Expr::Quant(q, x, d, body) => {
                bound.push(x.clone());
                let b = go(body, bound, classify);
                bound.pop();
                Ok(Expr::Quant(*q, x.clone(), d.clone(), Box::new(b?)))
            }
            _ => e.map_children(&mut |c| go(c, bound, classify)),
        }
    }
    go(e, &mut Vec::new(), classify)
}

/// Parses a complete standalone expression and resolves its names.
pub fn parse_expr_str(
    src: &str,
    classify: &dyn Fn(&str) -> Option<RefKind>,
) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(src)?;
    let pos = p.pos();
    let e = p.parse_expr()?;
    if !p.at_eof() {
        return p.error(format!("unexpected {} after expression", p.peek()));
    }
    resolve(&e, classify).map_err(|msg| SyntaxError { pos, msg })
}
