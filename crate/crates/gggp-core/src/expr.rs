//! Arithmetic expression trees: construction from derivation trees, numeric
//! evaluation with protected division, partial simplification and the
//! canonical fully parenthesized text form used by model files and reports.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::genotype::DerivationTree;
use crate::grammar::{Grammar, Symbol};

/// Denominators smaller than this in magnitude trigger protected division.
pub const DIV_PROTECTION: f64 = 1e-9;
/// Every binary operation clamps its result into `[-EVAL_CLAMP, EVAL_CLAMP]`
/// so that deep products cannot push a fitness evaluation to infinity.
pub const EVAL_CLAMP: f64 = 1e30;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn from_token(token: &str) -> Option<BinOp> {
        match token {
            "+" => Some(BinOp::Add),
            "-" => Some(BinOp::Sub),
            "*" => Some(BinOp::Mul),
            "/" => Some(BinOp::Div),
            _ => None,
        }
    }

    /// Total arithmetic: division is protected at near-zero denominators and
    /// every result is clamped, so finite inputs always yield finite output.
    pub fn apply(self, lhs: f64, rhs: f64) -> f64 {
        let raw = match self {
            BinOp::Add => lhs + rhs,
            BinOp::Sub => lhs - rhs,
            BinOp::Mul => lhs * rhs,
            BinOp::Div => {
                if rhs.abs() < DIV_PROTECTION {
                    return 1.0;
                }
                lhs / rhs
            }
        };
        raw.clamp(-EVAL_CLAMP, EVAL_CLAMP)
    }
}

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("parse error at offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("unmatched parenthesis opened at offset {offset}")]
    UnclosedParen { offset: usize },
    #[error("unknown variable {name}")]
    UnknownVariable { name: String },
    #[error("token {token:?} is outside the arithmetic vocabulary")]
    BadToken { token: String },
    #[error("derivation does not reduce to an expression: {detail}")]
    BadShape { detail: String },
}

/// An arithmetic expression over named dataset columns and constants.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    BinOp {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Var(String),
    Const(f64),
}

impl Expr {
    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::BinOp {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    /// Builds the expression mirroring a derivation tree's structure. The
    /// operator nesting is the tree's nesting; parenthesis terminals are
    /// structural no-ops and never consulted.
    pub fn from_derivation(tree: &DerivationTree, g: &Grammar) -> Result<Expr, ExprError> {
        reduce_items(collect_items(tree, g)?)
    }

    /// Evaluates against a column resolver. Missing columns are an error.
    pub fn eval_with(&self, resolve: &impl Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        match self {
            Expr::Const(v) => Ok(*v),
            Expr::Var(name) => resolve(name).ok_or_else(|| ExprError::UnknownVariable {
                name: name.clone(),
            }),
            Expr::BinOp { op, lhs, rhs } => {
                Ok(op.apply(lhs.eval_with(resolve)?, rhs.eval_with(resolve)?))
            }
        }
    }

    /// Resolves every variable to a position in `columns` for fast repeated
    /// evaluation over rows laid out in that column order.
    pub fn compile(&self, columns: &[String]) -> Result<CompiledExpr, ExprError> {
        let node = compile_node(self, columns)?;
        Ok(CompiledExpr { node })
    }

    /// Fixed-point application of constant folding and the neutral/absorbing
    /// element identities. The result evaluates identically on every row,
    /// up to the protected-division edge inside eliminated subtrees.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::BinOp { op, lhs, rhs } => {
                let l = lhs.simplify();
                let r = rhs.simplify();
                simplify_node(*op, l, r)
            }
            other => other.clone(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::BinOp { lhs, rhs, .. } => 1 + lhs.node_count() + rhs.node_count(),
            _ => 1,
        }
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Var(name) => {
                out.insert(name.as_str());
            }
            Expr::BinOp { lhs, rhs, .. } => {
                lhs.collect_variables(out);
                rhs.collect_variables(out);
            }
            Expr::Const(_) => {}
        }
    }

    /// Canonical fully parenthesized text form, `to_text`'s inverse being
    /// [`Expr::parse`].
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    /// Parses canonical expression text. Redundant parentheses are accepted;
    /// precedence is not: every binary application must be parenthesized
    /// (except at top level), exactly as `to_text` emits it.
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        let tokens = lex(text)?;
        let mut parser = Parser { tokens, pos: 0 };
        let expr = parser.expr()?;
        match parser.peek() {
            None => Ok(expr),
            Some(tok) => Err(ExprError::Parse {
                offset: tok.offset,
                msg: format!("unexpected trailing input {:?}", tok.text()),
            }),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(name) => f.write_str(name),
            Expr::Const(v) => write!(f, "{}", v),
            Expr::BinOp { op, lhs, rhs } => write!(f, "({} {} {})", lhs, op.symbol(), rhs),
        }
    }
}

/// Parses a model file: one canonical expression, `#` comments allowed.
pub fn parse_model_file(text: &str) -> Result<Expr, ExprError> {
    let stripped: String = text
        .lines()
        .map(|line| match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n");
    Expr::parse(&stripped)
}

/// An expression with variables resolved to row indices; evaluation is total.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    node: CNode,
}

#[derive(Clone, Debug)]
enum CNode {
    BinOp {
        op: BinOp,
        lhs: Box<CNode>,
        rhs: Box<CNode>,
    },
    Var(usize),
    Const(f64),
}

impl CompiledExpr {
    pub fn eval(&self, row: &[f64]) -> f64 {
        eval_cnode(&self.node, row)
    }
}

fn eval_cnode(node: &CNode, row: &[f64]) -> f64 {
    match node {
        CNode::Const(v) => *v,
        CNode::Var(i) => row[*i],
        CNode::BinOp { op, lhs, rhs } => op.apply(eval_cnode(lhs, row), eval_cnode(rhs, row)),
    }
}

fn compile_node(expr: &Expr, columns: &[String]) -> Result<CNode, ExprError> {
    Ok(match expr {
        Expr::Const(v) => CNode::Const(*v),
        Expr::Var(name) => {
            let idx = columns.iter().position(|c| c == name).ok_or_else(|| {
                ExprError::UnknownVariable { name: name.clone() }
            })?;
            CNode::Var(idx)
        }
        Expr::BinOp { op, lhs, rhs } => CNode::BinOp {
            op: *op,
            lhs: Box::new(compile_node(lhs, columns)?),
            rhs: Box::new(compile_node(rhs, columns)?),
        },
    })
}

fn simplify_node(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
    let is_zero = |e: &Expr| matches!(e, Expr::Const(v) if *v == 0.0);
    let is_one = |e: &Expr| matches!(e, Expr::Const(v) if *v == 1.0);

    if let (Expr::Const(a), Expr::Const(b)) = (&lhs, &rhs) {
        return Expr::Const(op.apply(*a, *b));
    }
    match op {
        BinOp::Add => {
            if is_zero(&lhs) {
                return rhs;
            }
            if is_zero(&rhs) {
                return lhs;
            }
        }
        BinOp::Sub => {
            if is_zero(&rhs) {
                return lhs;
            }
            if lhs == rhs {
                return Expr::Const(0.0);
            }
        }
        BinOp::Mul => {
            if is_zero(&lhs) || is_zero(&rhs) {
                return Expr::Const(0.0);
            }
            if is_one(&lhs) {
                return rhs;
            }
            if is_one(&rhs) {
                return lhs;
            }
        }
        BinOp::Div => {
            if is_one(&rhs) {
                return lhs;
            }
            if lhs == rhs {
                return Expr::Const(1.0);
            }
        }
    }
    Expr::bin(op, lhs, rhs)
}

enum Item {
    Operand(Expr),
    Operator(BinOp),
}

fn collect_items(tree: &DerivationTree, g: &Grammar) -> Result<Vec<Item>, ExprError> {
    let mut items = Vec::new();
    walk_items(tree, g, &mut items)?;
    Ok(items)
}

fn walk_items(tree: &DerivationTree, g: &Grammar, items: &mut Vec<Item>) -> Result<(), ExprError> {
    let production = &g.alternatives(tree.nt())[tree.alt()];
    let mut child = 0usize;
    for symbol in production.symbols() {
        match symbol {
            Symbol::NonTerminal(_) => {
                items.push(reduce_or_op(&tree.children()[child], g)?);
                child += 1;
            }
            Symbol::Terminal(t) => {
                let token = g.terminal(*t);
                if token == "(" || token == ")" {
                    continue;
                }
                if let Some(op) = BinOp::from_token(token) {
                    items.push(Item::Operator(op));
                } else if let Ok(v) = token.parse::<f64>() {
                    items.push(Item::Operand(Expr::Const(v)));
                } else if crate::grammar::is_identifier(token) {
                    items.push(Item::Operand(Expr::Var(token.to_string())));
                } else {
                    return Err(ExprError::BadToken {
                        token: token.to_string(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// A child derivation either reduces to an operand expression or, for
/// operator non-terminals such as `<op>`, to a bare operator.
fn reduce_or_op(tree: &DerivationTree, g: &Grammar) -> Result<Item, ExprError> {
    let items = collect_items(tree, g)?;
    if items.len() == 1 && matches!(items[0], Item::Operator(_)) {
        return Ok(items.into_iter().next().unwrap());
    }
    Ok(Item::Operand(reduce_items(items)?))
}

/// Folds an `operand (operator operand)*` sequence left-associatively.
fn reduce_items(items: Vec<Item>) -> Result<Expr, ExprError> {
    let mut iter = items.into_iter();
    let mut acc = match iter.next() {
        Some(Item::Operand(e)) => e,
        Some(Item::Operator(op)) => {
            return Err(ExprError::BadShape {
                detail: format!("leading operator {}", op.symbol()),
            });
        }
        None => {
            return Err(ExprError::BadShape {
                detail: "empty production".to_string(),
            });
        }
    };
    loop {
        match iter.next() {
            None => return Ok(acc),
            Some(Item::Operator(op)) => match iter.next() {
                Some(Item::Operand(rhs)) => acc = Expr::bin(op, acc, rhs),
                _ => {
                    return Err(ExprError::BadShape {
                        detail: format!("operator {} lacks a right operand", op.symbol()),
                    });
                }
            },
            Some(Item::Operand(_)) => {
                return Err(ExprError::BadShape {
                    detail: "two adjacent operands".to_string(),
                });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Ident(String),
    Number(f64),
    Op(BinOp),
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    offset: usize,
    raw: String,
}

impl Tok {
    fn text(&self) -> &str {
        &self.raw
    }
}

fn lex(text: &str) -> Result<Vec<Tok>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            '(' => {
                i += 1;
                TokKind::LParen
            }
            ')' => {
                i += 1;
                TokKind::RParen
            }
            '+' | '-' | '*' | '/' => {
                i += 1;
                TokKind::Op(BinOp::from_token(&c.to_string()).unwrap())
            }
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric()
                        || bytes[i] == b'.'
                        || bytes[i] == b'+'
                            && i > start
                            && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E')
                        || bytes[i] == b'-'
                            && i > start
                            && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E'))
                {
                    i += 1;
                }
                let raw = &text[start..i];
                let value = raw.parse::<f64>().map_err(|_| ExprError::Parse {
                    offset: start,
                    msg: format!("bad numeric literal {:?}", raw),
                })?;
                TokKind::Number(value)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                TokKind::Ident(text[start..i].to_string())
            }
            other => {
                return Err(ExprError::Parse {
                    offset: i,
                    msg: format!("unexpected character {:?}", other),
                });
            }
        };
        tokens.push(Tok {
            kind,
            offset: start,
            raw: text[start..i].to_string(),
        });
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let first = self.primary()?;
        if let Some(Tok {
            kind: TokKind::Op(op),
            ..
        }) = self.peek()
        {
            let op = *op;
            self.pos += 1;
            let second = self.primary()?;
            return Ok(Expr::bin(op, first, second));
        }
        Ok(first)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let end = self.tokens.last().map(|t| t.offset + t.raw.len()).unwrap_or(0);
        let tok = self.next().ok_or(ExprError::Parse {
            offset: end,
            msg: "expected an expression".to_string(),
        })?;
        match tok.kind {
            TokKind::Number(v) => Ok(Expr::Const(v)),
            TokKind::Ident(name) => Ok(Expr::Var(name)),
            TokKind::Op(BinOp::Sub) => {
                // negative literal
                match self.next() {
                    Some(Tok {
                        kind: TokKind::Number(v),
                        ..
                    }) => Ok(Expr::Const(-v)),
                    other => Err(ExprError::Parse {
                        offset: other.map(|t| t.offset).unwrap_or(end),
                        msg: "expected a number after unary -".to_string(),
                    }),
                }
            }
            TokKind::LParen => {
                let open = tok.offset;
                let inner = self.expr()?;
                match self.next() {
                    Some(Tok {
                        kind: TokKind::RParen,
                        ..
                    }) => Ok(inner),
                    Some(other) => Err(ExprError::Parse {
                        offset: other.offset,
                        msg: format!("expected ) but found {:?}", other.text()),
                    }),
                    None => Err(ExprError::UnclosedParen { offset: open }),
                }
            }
            _ => Err(ExprError::Parse {
                offset: tok.offset,
                msg: format!("unexpected token {:?}", tok.text()),
            }),
        }
    }
}
