//! BNF grammar parsing and the structural queries the mappers depend on.
//!
//! The external format is plain BNF: `::=` separates a rule head from its
//! body, `|` separates alternatives, non-terminals are written in angle
//! brackets and everything else is a whitespace-separated terminal token.
//! Text from `#` to end of line is a comment. Alternatives are indexed in
//! source order and duplicates are kept as distinct indices, since repeating
//! an alternative is how a grammar file shapes selection probabilities.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Index of a non-terminal within its [`Grammar`], in definition order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NtId(pub(crate) u16);

impl NtId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Index of an interned terminal token within its [`Grammar`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct TermId(pub(crate) u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One symbol on the right-hand side of a production.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    NonTerminal(NtId),
    Terminal(TermId),
}

/// One alternative of a non-terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct Production {
    symbols: Vec<Symbol>,
    index: usize,
    min_depth: usize,
    recursive: bool,
}

impl Production {
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Zero-based position within the owning non-terminal's alternatives.
    pub fn index(&self) -> usize {
        self.index
    }

    /// Minimum depth of a complete derivation that starts with this
    /// alternative (the expanded node itself counts as one level).
    pub fn min_depth(&self) -> usize {
        self.min_depth
    }

    /// True when the body can reach a recursive non-terminal, i.e. choosing
    /// this alternative keeps unbounded growth possible.
    pub fn recursive(&self) -> bool {
        self.recursive
    }

    pub fn nonterminal_count(&self) -> usize {
        self.symbols
            .iter()
            .filter(|s| matches!(s, Symbol::NonTerminal(_)))
            .count()
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("undefined non-terminal <{name}> referenced at line {line}, column {col}")]
    Undefined { name: String, line: usize, col: usize },
    #[error("non-terminal <{name}> is defined more than once (line {line})")]
    DuplicateRule { name: String, line: usize },
    #[error("non-terminal <{name}> has no finite terminal derivation")]
    NoFiniteDerivation { name: String },
    #[error("grammar contains no rules")]
    Empty,
    #[error("cannot inject variables: non-terminal <{name}> is not defined")]
    NoSuchNonTerminal { name: String },
    #[error("invalid variable name {name:?}: expected an identifier")]
    BadVariableName { name: String },
}

/// An indexed context-free grammar with the per-symbol structural data
/// (minimum derivation depths, recursion flags) precomputed at parse time.
///
/// Immutable after construction and safe to share across threads.
#[derive(Clone, Debug)]
pub struct Grammar {
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    rules: Vec<Vec<Production>>,
    start: NtId,
    min_depth: Vec<usize>,
    recursive: Vec<bool>,
    nt_lookup: HashMap<String, NtId>,
    /// `feasible[nt][r]` lists the alternative indices whose minimum
    /// completion fits in `r` remaining levels below the current one;
    /// `r` saturates at the largest production min-depth.
    feasible: Vec<Vec<Vec<usize>>>,
    feasible_cap: usize,
}

impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.nonterminals == other.nonterminals
            && self.terminals == other.terminals
            && self.rules == other.rules
            && self.start == other.start
    }
}

impl Grammar {
    /// Parses BNF text into an indexed grammar. The first rule's head is the
    /// start symbol.
    pub fn parse(text: &str) -> Result<Grammar, GrammarError> {
        let tokens = tokenize(text)?;
        let raw_rules = group_rules(&tokens)?;
        if raw_rules.is_empty() {
            return Err(GrammarError::Empty);
        }

        let mut nonterminals: Vec<String> = Vec::new();
        let mut nt_lookup: HashMap<String, NtId> = HashMap::new();
        for rule in &raw_rules {
            if nt_lookup.contains_key(&rule.head) {
                return Err(GrammarError::DuplicateRule {
                    name: rule.head.clone(),
                    line: rule.line,
                });
            }
            let id = NtId(nonterminals.len() as u16);
            nt_lookup.insert(rule.head.clone(), id);
            nonterminals.push(rule.head.clone());
        }

        let mut terminals: Vec<String> = Vec::new();
        let mut term_lookup: HashMap<String, TermId> = HashMap::new();
        let mut rules: Vec<Vec<Production>> = Vec::with_capacity(raw_rules.len());
        for rule in &raw_rules {
            let mut alternatives = Vec::with_capacity(rule.alternatives.len());
            for (index, alt) in rule.alternatives.iter().enumerate() {
                let mut symbols = Vec::with_capacity(alt.len());
                for sym in alt {
                    match sym {
                        RawSymbol::NonTerminal { name, line, col } => {
                            let id = nt_lookup.get(name).copied().ok_or_else(|| {
                                GrammarError::Undefined {
                                    name: name.clone(),
                                    line: *line,
                                    col: *col,
                                }
                            })?;
                            symbols.push(Symbol::NonTerminal(id));
                        }
                        RawSymbol::Terminal { text } => {
                            let id = *term_lookup.entry(text.clone()).or_insert_with(|| {
                                let id = TermId(terminals.len() as u32);
                                terminals.push(text.clone());
                                id
                            });
                            symbols.push(Symbol::Terminal(id));
                        }
                    }
                }
                alternatives.push(Production {
                    symbols,
                    index,
                    min_depth: 0,
                    recursive: false,
                });
            }
            rules.push(alternatives);
        }

        let mut grammar = Grammar {
            nonterminals,
            terminals,
            rules,
            start: NtId(0),
            min_depth: Vec::new(),
            recursive: Vec::new(),
            nt_lookup,
            feasible: Vec::new(),
            feasible_cap: 0,
        };
        grammar.compute_min_depths()?;
        grammar.compute_recursion();
        grammar.compute_feasible();
        Ok(grammar)
    }

    fn compute_min_depths(&mut self) -> Result<(), GrammarError> {
        let n = self.nonterminals.len();
        let mut depth = vec![usize::MAX; n];
        loop {
            let mut changed = false;
            for nt in 0..n {
                for prod in &self.rules[nt] {
                    let mut worst = 0usize;
                    let mut complete = true;
                    for sym in &prod.symbols {
                        if let Symbol::NonTerminal(child) = sym {
                            let d = depth[child.index()];
                            if d == usize::MAX {
                                complete = false;
                                break;
                            }
                            worst = worst.max(d);
                        }
                    }
                    if complete {
                        let candidate = 1 + worst;
                        if candidate < depth[nt] {
                            depth[nt] = candidate;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if let Some(bad) = depth.iter().position(|&d| d == usize::MAX) {
            return Err(GrammarError::NoFiniteDerivation {
                name: self.nonterminals[bad].clone(),
            });
        }
        for nt in 0..n {
            for prod in &mut self.rules[nt] {
                let worst = prod
                    .symbols
                    .iter()
                    .filter_map(|s| match s {
                        Symbol::NonTerminal(c) => Some(depth[c.index()]),
                        Symbol::Terminal(_) => None,
                    })
                    .max()
                    .unwrap_or(0);
                prod.min_depth = 1 + worst;
            }
        }
        self.min_depth = depth;
        Ok(())
    }

    fn compute_recursion(&mut self) {
        let n = self.nonterminals.len();
        // reach[a][b]: b appears in some sentential form derivable from a
        let mut reach = vec![vec![false; n]; n];
        for (nt, alternatives) in self.rules.iter().enumerate() {
            for prod in alternatives {
                for sym in &prod.symbols {
                    if let Symbol::NonTerminal(c) = sym {
                        reach[nt][c.index()] = true;
                    }
                }
            }
        }
        for k in 0..n {
            let via = reach[k].clone();
            for row in reach.iter_mut() {
                if row[k] {
                    for (dst, &src) in row.iter_mut().zip(&via) {
                        *dst |= src;
                    }
                }
            }
        }
        self.recursive = (0..n).map(|nt| reach[nt][nt]).collect();
        let growable: Vec<bool> = (0..n)
            .map(|nt| self.recursive[nt] || (0..n).any(|m| reach[nt][m] && self.recursive[m]))
            .collect();
        for nt in 0..n {
            for prod in &mut self.rules[nt] {
                prod.recursive = prod.symbols.iter().any(|s| match s {
                    Symbol::NonTerminal(c) => growable[c.index()],
                    Symbol::Terminal(_) => false,
                });
            }
        }
    }

    fn compute_feasible(&mut self) {
        let cap = self
            .rules
            .iter()
            .flatten()
            .map(|p| p.min_depth)
            .max()
            .unwrap_or(1);
        self.feasible_cap = cap;
        self.feasible = self
            .rules
            .iter()
            .map(|alts| {
                (0..=cap)
                    .map(|remaining| {
                        alts.iter()
                            .filter(|p| p.min_depth - 1 <= remaining)
                            .map(|p| p.index)
                            .collect()
                    })
                    .collect()
            })
            .collect();
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn nonterminal_count(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.nonterminals.iter().map(String::as_str)
    }

    pub fn nt_ids(&self) -> impl Iterator<Item = NtId> {
        (0..self.nonterminals.len()).map(|i| NtId(i as u16))
    }

    pub fn name(&self, nt: NtId) -> &str {
        &self.nonterminals[nt.index()]
    }

    pub fn lookup(&self, name: &str) -> Option<NtId> {
        self.nt_lookup.get(name).copied()
    }

    pub fn alternatives(&self, nt: NtId) -> &[Production] {
        &self.rules[nt.index()]
    }

    pub fn terminal(&self, term: TermId) -> &str {
        &self.terminals[term.index()]
    }

    /// Minimum derivation-tree depth from `nt` to an all-terminal expansion.
    pub fn min_depth(&self, nt: NtId) -> usize {
        self.min_depth[nt.index()]
    }

    /// Fixed-point minimum depths for every non-terminal, in definition order.
    pub fn min_depths(&self) -> impl Iterator<Item = (&str, usize)> {
        self.nonterminals
            .iter()
            .map(String::as_str)
            .zip(self.min_depth.iter().copied())
    }

    pub fn is_recursive(&self, nt: NtId) -> bool {
        self.recursive[nt.index()]
    }

    /// Alternative indices of `nt` whose minimum completion fits when
    /// `remaining` more levels may be opened below the current node.
    pub fn feasible_alternatives(&self, nt: NtId, remaining: usize) -> &[usize] {
        &self.feasible[nt.index()][remaining.min(self.feasible_cap)]
    }

    /// Chart-parse membership test: is `tokens` derivable from the start
    /// symbol? Unknown tokens simply make the answer `false`.
    pub fn validate_phenotype(&self, tokens: &[&str]) -> bool {
        earley_accepts(self, tokens)
    }

    /// Returns a copy of the grammar in which `nt_name` is redefined to one
    /// single-terminal alternative per entry of `names`, preserving order.
    pub fn inject_variables(&self, nt_name: &str, names: &[String]) -> Result<Grammar, GrammarError> {
        if self.lookup(nt_name).is_none() {
            return Err(GrammarError::NoSuchNonTerminal {
                name: nt_name.to_string(),
            });
        }
        for name in names {
            if !is_identifier(name) {
                return Err(GrammarError::BadVariableName { name: name.clone() });
            }
        }
        let mut text = String::new();
        for (i, nt) in self.nonterminals.iter().enumerate() {
            if nt == nt_name {
                let alts: Vec<String> = names.to_vec();
                text.push_str(&format!("<{}> ::= {}\n", nt, alts.join(" | ")));
            } else {
                text.push_str(&self.rule_text(NtId(i as u16)));
                text.push('\n');
            }
        }
        Grammar::parse(&text)
    }

    fn rule_text(&self, nt: NtId) -> String {
        let body = self
            .alternatives(nt)
            .iter()
            .map(|p| {
                p.symbols
                    .iter()
                    .map(|s| match s {
                        Symbol::NonTerminal(c) => format!("<{}>", self.name(*c)),
                        Symbol::Terminal(t) => self.terminal(*t).to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join(" | ");
        format!("<{}> ::= {}", self.name(nt), body)
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.nonterminals.len() {
            writeln!(f, "{}", self.rule_text(NtId(i as u16)))?;
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Define,
    Pipe,
    NonTerminal(String),
    Terminal(String),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, GrammarError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1usize;
    let mut col = 1usize;

    macro_rules! bump {
        () => {{
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            bump!();
        } else if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump!();
            }
        } else if c == '<' {
            let (start_line, start_col) = (line, col);
            bump!();
            let mut name = String::new();
            loop {
                match chars.peek() {
                    Some('>') => {
                        bump!();
                        break;
                    }
                    Some(&c) if c.is_whitespace() || c == '<' => {
                        return Err(GrammarError::Syntax {
                            line: start_line,
                            col: start_col,
                            msg: format!("malformed non-terminal <{}...", name),
                        });
                    }
                    Some(_) => name.push(bump!()),
                    None => {
                        return Err(GrammarError::Syntax {
                            line: start_line,
                            col: start_col,
                            msg: "unterminated non-terminal".to_string(),
                        });
                    }
                }
            }
            if name.is_empty() {
                return Err(GrammarError::Syntax {
                    line: start_line,
                    col: start_col,
                    msg: "empty non-terminal name".to_string(),
                });
            }
            tokens.push(Token {
                kind: TokenKind::NonTerminal(name),
                line: start_line,
                col: start_col,
            });
        } else {
            let (start_line, start_col) = (line, col);
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() || c == '<' || c == '#' {
                    break;
                }
                word.push(bump!());
            }
            let kind = match word.as_str() {
                "::=" => TokenKind::Define,
                "|" => TokenKind::Pipe,
                _ => TokenKind::Terminal(word),
            };
            tokens.push(Token {
                kind,
                line: start_line,
                col: start_col,
            });
        }
    }
    Ok(tokens)
}

#[derive(Debug)]
enum RawSymbol {
    NonTerminal { name: String, line: usize, col: usize },
    Terminal { text: String },
}

#[derive(Debug)]
struct RawRule {
    head: String,
    line: usize,
    alternatives: Vec<Vec<RawSymbol>>,
}

fn group_rules(tokens: &[Token]) -> Result<Vec<RawRule>, GrammarError> {
    let mut rules: Vec<RawRule> = Vec::new();
    let mut i = 0usize;
    while i < tokens.len() {
        let head = match &tokens[i].kind {
            TokenKind::NonTerminal(name) => name.clone(),
            _ => {
                return Err(GrammarError::Syntax {
                    line: tokens[i].line,
                    col: tokens[i].col,
                    msg: "expected a <non-terminal> rule head".to_string(),
                });
            }
        };
        let head_line = tokens[i].line;
        i += 1;
        match tokens.get(i).map(|t| &t.kind) {
            Some(TokenKind::Define) => i += 1,
            _ => {
                return Err(GrammarError::Syntax {
                    line: head_line,
                    col: tokens[i - 1].col,
                    msg: format!("expected ::= after <{}>", head),
                });
            }
        }

        let mut alternatives: Vec<Vec<RawSymbol>> = Vec::new();
        let mut current: Vec<RawSymbol> = Vec::new();
        loop {
            // a rule ends at EOF or where the next rule head begins
            let next_is_rule_head = matches!(tokens.get(i).map(|t| &t.kind), Some(TokenKind::NonTerminal(_)))
                && matches!(tokens.get(i + 1).map(|t| &t.kind), Some(TokenKind::Define));
            if i >= tokens.len() || next_is_rule_head {
                break;
            }
            match &tokens[i].kind {
                TokenKind::Pipe => {
                    if current.is_empty() {
                        return Err(GrammarError::Syntax {
                            line: tokens[i].line,
                            col: tokens[i].col,
                            msg: format!("empty alternative in rule <{}>", head),
                        });
                    }
                    alternatives.push(std::mem::take(&mut current));
                }
                TokenKind::NonTerminal(name) => current.push(RawSymbol::NonTerminal {
                    name: name.clone(),
                    line: tokens[i].line,
                    col: tokens[i].col,
                }),
                TokenKind::Terminal(text) => current.push(RawSymbol::Terminal { text: text.clone() }),
                TokenKind::Define => {
                    return Err(GrammarError::Syntax {
                        line: tokens[i].line,
                        col: tokens[i].col,
                        msg: "unexpected ::= inside rule body".to_string(),
                    });
                }
            }
            i += 1;
        }
        if current.is_empty() {
            return Err(GrammarError::Syntax {
                line: head_line,
                col: 1,
                msg: format!("rule <{}> has an empty alternative", head),
            });
        }
        alternatives.push(current);
        rules.push(RawRule {
            head,
            line: head_line,
            alternatives,
        });
    }
    Ok(rules)
}

/// Earley recognizer. Every production here has a non-empty body and every
/// terminal is a non-empty token, so the grammar is epsilon-free and the
/// textbook algorithm is complete as-is.
fn earley_accepts(g: &Grammar, tokens: &[&str]) -> bool {
    #[derive(Copy, Clone, PartialEq, Eq, Hash)]
    struct State {
        nt: u16,
        alt: u16,
        dot: u16,
        origin: u32,
    }

    use std::collections::HashSet;

    let n = tokens.len();
    let mut chart: Vec<Vec<State>> = vec![Vec::new(); n + 1];
    let mut seen: Vec<HashSet<State>> = vec![HashSet::new(); n + 1];

    let push = |chart: &mut Vec<Vec<State>>, seen: &mut Vec<HashSet<State>>, pos: usize, st: State| {
        if seen[pos].insert(st) {
            chart[pos].push(st);
        }
    };

    let start = g.start();
    for alt in 0..g.alternatives(start).len() {
        push(
            &mut chart,
            &mut seen,
            0,
            State {
                nt: start.0,
                alt: alt as u16,
                dot: 0,
                origin: 0,
            },
        );
    }

    for pos in 0..=n {
        let mut idx = 0;
        while idx < chart[pos].len() {
            let st = chart[pos][idx];
            idx += 1;
            let prod = &g.alternatives(NtId(st.nt))[st.alt as usize];
            match prod.symbols().get(st.dot as usize) {
                Some(Symbol::NonTerminal(b)) => {
                    for alt in 0..g.alternatives(*b).len() {
                        push(
                            &mut chart,
                            &mut seen,
                            pos,
                            State {
                                nt: b.0,
                                alt: alt as u16,
                                dot: 0,
                                origin: pos as u32,
                            },
                        );
                    }
                }
                Some(Symbol::Terminal(t)) => {
                    if pos < n && tokens[pos] == g.terminal(*t) {
                        push(
                            &mut chart,
                            &mut seen,
                            pos + 1,
                            State {
                                dot: st.dot + 1,
                                ..st
                            },
                        );
                    }
                }
                None => {
                    // completed: advance every state waiting on this nt
                    let origin = st.origin as usize;
                    let waiting: Vec<State> = chart[origin]
                        .iter()
                        .filter(|w| {
                            let wp = &g.alternatives(NtId(w.nt))[w.alt as usize];
                            matches!(
                                wp.symbols().get(w.dot as usize),
                                Some(Symbol::NonTerminal(b)) if b.0 == st.nt
                            )
                        })
                        .copied()
                        .collect();
                    for w in waiting {
                        push(
                            &mut chart,
                            &mut seen,
                            pos,
                            State {
                                dot: w.dot + 1,
                                ..w
                            },
                        );
                    }
                }
            }
        }
    }

    chart[n].iter().any(|st| {
        st.nt == start.0
            && st.origin == 0
            && st.dot as usize == g.alternatives(NtId(st.nt))[st.alt as usize].symbols().len()
    })
}
