//! Derivation trees and the grammar-driven operators that manipulate them
//! directly: depth-bounded random generation (grow/full), same-non-terminal
//! subtree crossover and subtree regrowth mutation.

use rand::Rng;
use thiserror::Error;

use crate::grammar::{Grammar, NtId, Symbol};

#[derive(Debug, Error)]
pub enum GenotypeError {
    #[error("max depth {max_depth} is below the grammar's minimum derivation depth {min}")]
    DepthTooSmall { max_depth: usize, min: usize },
    #[error("genotype does not match grammar: {detail}")]
    Mismatch { detail: String },
}

/// A grammar derivation: every node records the expanded non-terminal and
/// the chosen alternative; children correspond, in order, to the
/// non-terminal symbols of that alternative's body. Terminal tokens are
/// implied by the grammar, so a tree is only meaningful next to it.
///
/// Depth counts non-terminal levels: the root is level 1 and a node whose
/// alternative is all-terminal contributes no further levels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationTree {
    nt: NtId,
    alt: usize,
    children: Vec<DerivationTree>,
}

impl DerivationTree {
    pub(crate) fn new(nt: NtId, alt: usize, children: Vec<DerivationTree>) -> Self {
        DerivationTree { nt, alt, children }
    }

    pub fn nt(&self) -> NtId {
        self.nt
    }

    pub fn alt(&self) -> usize {
        self.alt
    }

    pub fn children(&self) -> &[DerivationTree] {
        &self.children
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(DerivationTree::depth)
            .max()
            .unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(DerivationTree::node_count).sum::<usize>()
    }

    /// Terminal tokens of the phenotype, in derivation order.
    pub fn tokens<'g>(&self, g: &'g Grammar) -> Vec<&'g str> {
        let mut out = Vec::new();
        self.collect_tokens(g, &mut out);
        out
    }

    fn collect_tokens<'g>(&self, g: &'g Grammar, out: &mut Vec<&'g str>) {
        let prod = &g.alternatives(self.nt)[self.alt];
        let mut child = 0usize;
        for sym in prod.symbols() {
            match sym {
                Symbol::Terminal(t) => out.push(g.terminal(*t)),
                Symbol::NonTerminal(_) => {
                    self.children[child].collect_tokens(g, out);
                    child += 1;
                }
            }
        }
    }

    /// Phenotype as a single space-joined token string.
    pub fn phenotype_string(&self, g: &Grammar) -> String {
        self.tokens(g).join(" ")
    }

    /// Preorder visit with the level of each node (root = 1). Preorder is
    /// exactly the leftmost-derivation expansion order.
    pub fn for_each_preorder(&self, f: &mut impl FnMut(&DerivationTree, usize)) {
        self.preorder_at(1, f);
    }

    fn preorder_at(&self, level: usize, f: &mut impl FnMut(&DerivationTree, usize)) {
        f(self, level);
        for child in &self.children {
            child.preorder_at(level + 1, f);
        }
    }

    /// The preorder `(non-terminal, alternative)` choice sequence.
    pub fn choices(&self) -> Vec<(NtId, usize)> {
        let mut out = Vec::new();
        self.for_each_preorder(&mut |node, _| out.push((node.nt, node.alt)));
        out
    }

    /// Node (and its level) at a preorder index. Panics when out of range.
    pub fn node_at(&self, index: usize) -> (&DerivationTree, usize) {
        let mut counter = index;
        self.seek(&mut counter, 1)
            .expect("preorder index out of range")
    }

    fn seek(&self, counter: &mut usize, level: usize) -> Option<(&DerivationTree, usize)> {
        if *counter == 0 {
            return Some((self, level));
        }
        *counter -= 1;
        for child in &self.children {
            if let Some(found) = child.seek(counter, level + 1) {
                return Some(found);
            }
        }
        None
    }

    pub fn count_nodes_with(&self, nt: NtId) -> usize {
        let mut n = 0usize;
        self.for_each_preorder(&mut |node, _| {
            if node.nt == nt {
                n += 1;
            }
        });
        n
    }

    /// The `n`-th preorder node labeled `nt`, with its level.
    pub fn nth_node_with(&self, nt: NtId, n: usize) -> Option<(&DerivationTree, usize)> {
        let mut remaining = n;
        self.seek_with(nt, &mut remaining, 1)
    }

    fn seek_with(&self, nt: NtId, remaining: &mut usize, level: usize) -> Option<(&DerivationTree, usize)> {
        if self.nt == nt {
            if *remaining == 0 {
                return Some((self, level));
            }
            *remaining -= 1;
        }
        for child in &self.children {
            if let Some(found) = child.seek_with(nt, remaining, level + 1) {
                return Some(found);
            }
        }
        None
    }

    /// Replaces the subtree at a preorder index.
    pub fn replace_at(&mut self, index: usize, subtree: DerivationTree) {
        let mut counter = index;
        let mut payload = Some(subtree);
        assert!(
            self.replace_seek(&mut counter, &mut payload),
            "preorder index out of range"
        );
    }

    fn replace_seek(&mut self, counter: &mut usize, payload: &mut Option<DerivationTree>) -> bool {
        if *counter == 0 {
            *self = payload.take().expect("payload consumed once");
            return true;
        }
        *counter -= 1;
        for child in &mut self.children {
            if child.replace_seek(counter, payload) {
                return true;
            }
        }
        false
    }

    /// Structural validity against the grammar: alternative indices in
    /// range and child counts matching each body's non-terminal count.
    pub fn validate(&self, g: &Grammar) -> bool {
        let alts = g.alternatives(self.nt);
        if self.alt >= alts.len() {
            return false;
        }
        let prod = &alts[self.alt];
        if prod.nonterminal_count() != self.children.len() {
            return false;
        }
        let mut child = 0usize;
        for sym in prod.symbols() {
            if let Symbol::NonTerminal(expected) = sym {
                if self.children[child].nt != *expected || !self.children[child].validate(g) {
                    return false;
                }
                child += 1;
            }
        }
        true
    }
}

/// How random trees are grown.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum InitMethod {
    /// Uniform over the depth-feasible alternatives at every node.
    Grow,
    /// Prefer growth-capable alternatives until the depth budget forces
    /// termination.
    Full,
}

/// Per-expansion alternative selection. `feasible` holds the alternative
/// indices whose minimum completion fits the remaining depth budget.
pub(crate) trait ChoicePolicy {
    fn choose(&mut self, g: &Grammar, nt: NtId, feasible: &[usize]) -> Option<usize>;
}

pub(crate) fn derive_from(
    g: &Grammar,
    nt: NtId,
    max_depth: usize,
    policy: &mut impl ChoicePolicy,
) -> Option<DerivationTree> {
    expand(g, nt, 1, max_depth, policy)
}

fn expand(
    g: &Grammar,
    nt: NtId,
    level: usize,
    max_depth: usize,
    policy: &mut impl ChoicePolicy,
) -> Option<DerivationTree> {
    // feasibility of the parent's choice guarantees level <= max_depth
    debug_assert!(level <= max_depth);
    let remaining = max_depth - level;
    let feasible = g.feasible_alternatives(nt, remaining);
    let alt = policy.choose(g, nt, feasible)?;
    let prod = &g.alternatives(nt)[alt];
    let mut children = Vec::with_capacity(prod.nonterminal_count());
    for sym in prod.symbols() {
        if let Symbol::NonTerminal(child) = sym {
            children.push(expand(g, *child, level + 1, max_depth, policy)?);
        }
    }
    Some(DerivationTree::new(nt, alt, children))
}

struct RandomPolicy<'r, R: Rng> {
    rng: &'r mut R,
    method: InitMethod,
}

impl<R: Rng> ChoicePolicy for RandomPolicy<'_, R> {
    fn choose(&mut self, g: &Grammar, nt: NtId, feasible: &[usize]) -> Option<usize> {
        debug_assert!(!feasible.is_empty(), "budget violated for <{}>", g.name(nt));
        if self.method == InitMethod::Full {
            let alts = g.alternatives(nt);
            let growing: Vec<usize> = feasible
                .iter()
                .copied()
                .filter(|&a| alts[a].recursive())
                .collect();
            if !growing.is_empty() {
                return Some(growing[self.rng.random_range(0..growing.len())]);
            }
        }
        Some(feasible[self.rng.random_range(0..feasible.len())])
    }
}

/// Uniformly random depth-bounded derivation tree from the start symbol.
pub fn random_tree(
    g: &Grammar,
    max_depth: usize,
    method: InitMethod,
    rng: &mut impl Rng,
) -> Result<DerivationTree, GenotypeError> {
    let min = g.min_depth(g.start());
    if max_depth < min {
        return Err(GenotypeError::DepthTooSmall { max_depth, min });
    }
    let mut policy = RandomPolicy { rng, method };
    Ok(derive_from(g, g.start(), max_depth, &mut policy).expect("random derivation is total"))
}

/// Random subtree rooted at `nt` within `budget` levels. The caller must
/// guarantee `budget >= min_depth(nt)`.
pub(crate) fn random_subtree(
    g: &Grammar,
    nt: NtId,
    budget: usize,
    method: InitMethod,
    rng: &mut impl Rng,
) -> DerivationTree {
    debug_assert!(budget >= g.min_depth(nt));
    let mut policy = RandomPolicy { rng, method };
    derive_from(g, nt, budget, &mut policy).expect("random derivation is total")
}

/// Whigham-style crossover: swap subtrees rooted at a shared non-terminal.
/// Offspring deeper than `max_depth` are rejected and re-tried up to ten
/// times before falling back to clones. Clones are also returned when the
/// sampled node's non-terminal does not occur in the other parent.
pub fn cfg_crossover(
    a: &DerivationTree,
    b: &DerivationTree,
    max_depth: usize,
    rng: &mut impl Rng,
) -> (DerivationTree, DerivationTree) {
    for _ in 0..10 {
        let (node_a, _) = a.node_at(rng.random_range(0..a.node_count()));
        let nt = node_a.nt();
        let matches = b.count_nodes_with(nt);
        if matches == 0 {
            return (a.clone(), b.clone());
        }
        let pick_b = rng.random_range(0..matches);
        let (node_b, _) = b.nth_node_with(nt, pick_b).expect("counted above");

        let mut child_a = a.clone();
        replace_matching(&mut child_a, a, node_a, node_b.clone());
        let mut child_b = b.clone();
        replace_matching(&mut child_b, b, node_b, node_a.clone());
        if child_a.depth() <= max_depth && child_b.depth() <= max_depth {
            return (child_a, child_b);
        }
    }
    (a.clone(), b.clone())
}

/// Replaces, inside `target` (a clone of `original`), the node occupying the
/// same position as `node` (a reference into `original`) with `subtree`.
fn replace_matching(
    target: &mut DerivationTree,
    original: &DerivationTree,
    node: &DerivationTree,
    subtree: DerivationTree,
) {
    let mut index = 0usize;
    let mut found = None;
    original.for_each_preorder(&mut |n, _| {
        if std::ptr::eq(n, node) {
            found = Some(index);
        }
        index += 1;
    });
    let index = found.expect("node belongs to original tree");
    target.replace_at(index, subtree);
}

/// Regrows the subtree at a uniformly chosen node under the remaining depth
/// budget.
pub fn cfg_subtree_mutate(
    tree: &DerivationTree,
    g: &Grammar,
    max_depth: usize,
    rng: &mut impl Rng,
) -> DerivationTree {
    let index = rng.random_range(0..tree.node_count());
    cfg_subtree_mutate_at(tree, g, max_depth, index, rng)
}

pub(crate) fn cfg_subtree_mutate_at(
    tree: &DerivationTree,
    g: &Grammar,
    max_depth: usize,
    index: usize,
    rng: &mut impl Rng,
) -> DerivationTree {
    let (node, level) = tree.node_at(index);
    let budget = max_depth - level + 1;
    let replacement = random_subtree(g, node.nt(), budget, InitMethod::Grow, rng);
    let mut out = tree.clone();
    out.replace_at(index, replacement);
    out
}
