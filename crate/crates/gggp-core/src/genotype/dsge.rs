//! Dynamic structured grammatical evolution: one gene list per non-terminal,
//! no modulo redundancy across non-terminals, and dynamic repair of
//! underflowing genes during decoding.

use rand::Rng;

use crate::grammar::{Grammar, NtId, Symbol, TermId};

use super::tree::{derive_from, ChoicePolicy, DerivationTree, GenotypeError, InitMethod};

/// A DSGE genome: exactly one integer list per grammar non-terminal, in
/// definition order. Every integer is below its non-terminal's alternative
/// count; values recorded under a depth restriction index into the
/// depth-feasible subset instead, which the decoder reconstructs from the
/// same position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DsgeGenotype {
    genes: Vec<Vec<u32>>,
}

impl DsgeGenotype {
    /// One empty gene list per non-terminal.
    pub fn empty(g: &Grammar) -> DsgeGenotype {
        DsgeGenotype {
            genes: vec![Vec::new(); g.nonterminal_count()],
        }
    }

    pub fn from_genes(g: &Grammar, genes: Vec<Vec<u32>>) -> Result<DsgeGenotype, GenotypeError> {
        if genes.len() != g.nonterminal_count() {
            return Err(GenotypeError::Mismatch {
                detail: format!(
                    "expected {} gene lists, got {}",
                    g.nonterminal_count(),
                    genes.len()
                ),
            });
        }
        for (i, gene) in genes.iter().enumerate() {
            let nt = NtId(i as u16);
            let bound = g.alternatives(nt).len() as u32;
            if let Some(bad) = gene.iter().find(|&&v| v >= bound) {
                return Err(GenotypeError::Mismatch {
                    detail: format!(
                        "value {} out of range for <{}> with {} alternatives",
                        bad,
                        g.name(nt),
                        bound
                    ),
                });
            }
        }
        Ok(DsgeGenotype { genes })
    }

    /// Builds a genotype from `(non-terminal name, gene)` pairs; unnamed
    /// non-terminals get empty genes.
    pub fn from_named(g: &Grammar, named: &[(&str, Vec<u32>)]) -> Result<DsgeGenotype, GenotypeError> {
        let mut genes = vec![Vec::new(); g.nonterminal_count()];
        for (name, gene) in named {
            let nt = g.lookup(name).ok_or_else(|| GenotypeError::Mismatch {
                detail: format!("unknown non-terminal <{}>", name),
            })?;
            genes[nt.index()] = gene.clone();
        }
        DsgeGenotype::from_genes(g, genes)
    }

    pub fn genes(&self) -> &[Vec<u32>] {
        &self.genes
    }

    pub fn gene(&self, nt: NtId) -> &[u32] {
        &self.genes[nt.index()]
    }
}

struct DsgePolicy<'a, R: Rng> {
    genes: &'a mut Vec<Vec<u32>>,
    cursors: Vec<usize>,
    rng: &'a mut R,
}

impl<R: Rng> ChoicePolicy for DsgePolicy<'_, R> {
    fn choose(&mut self, g: &Grammar, nt: NtId, feasible: &[usize]) -> Option<usize> {
        Some(dsge_choose(
            g,
            nt,
            feasible,
            self.genes,
            &mut self.cursors,
            self.rng,
        ))
    }
}

/// One DSGE gene consumption: repair on underflow, then map the value into
/// the depth-feasible alternative subset.
fn dsge_choose(
    g: &Grammar,
    nt: NtId,
    feasible: &[usize],
    genes: &mut [Vec<u32>],
    cursors: &mut [usize],
    rng: &mut impl Rng,
) -> usize {
    debug_assert!(!feasible.is_empty(), "budget violated for <{}>", g.name(nt));
    let i = nt.index();
    if cursors[i] == genes[i].len() {
        genes[i].push(rng.random_range(0..feasible.len() as u32));
    }
    let value = genes[i][cursors[i]] as usize;
    cursors[i] += 1;
    feasible[value % feasible.len()]
}

/// Leftmost decode. Always yields a valid tree: underflowing genes are
/// extended in place with depth-respecting values and, at the depth
/// frontier, choices are clamped to the alternatives whose minimum
/// completion fits. Unconsumed trailing integers are truncated afterwards.
pub fn dsge_decode(
    g: &Grammar,
    geno: &mut DsgeGenotype,
    max_depth: usize,
    rng: &mut impl Rng,
) -> Result<DerivationTree, GenotypeError> {
    let min = g.min_depth(g.start());
    if max_depth < min {
        return Err(GenotypeError::DepthTooSmall { max_depth, min });
    }
    let mut policy = DsgePolicy {
        genes: &mut geno.genes,
        cursors: vec![0; g.nonterminal_count()],
        rng,
    };
    let tree = derive_from(g, g.start(), max_depth, &mut policy).expect("DSGE decode is total");
    let cursors = policy.cursors;
    for (gene, used) in geno.genes.iter_mut().zip(cursors) {
        gene.truncate(used);
    }
    Ok(tree)
}

/// One row of a decode trace: the sentential form after an expansion and
/// the integers each gene still holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub sentential_form: String,
    pub remaining: Vec<Vec<u32>>,
}

impl TraceStep {
    /// `form | {[..], [..], ..}`, one gene list per non-terminal in
    /// definition order.
    pub fn render(&self) -> String {
        let lists: Vec<String> = self
            .remaining
            .iter()
            .map(|g| format!("{:?}", g))
            .collect();
        format!("{} | {{{}}}", self.sentential_form, lists.join(", "))
    }
}

/// `dsge_decode` with a step-by-step record of the leftmost derivation:
/// the first step is the untouched start symbol, then one step per
/// expansion. Gene consumption order is identical to `dsge_decode`.
pub fn dsge_decode_traced(
    g: &Grammar,
    geno: &mut DsgeGenotype,
    max_depth: usize,
    rng: &mut impl Rng,
) -> Result<(DerivationTree, Vec<TraceStep>), GenotypeError> {
    let min = g.min_depth(g.start());
    if max_depth < min {
        return Err(GenotypeError::DepthTooSmall { max_depth, min });
    }

    enum Entry {
        Terminal(TermId),
        Open(usize),
    }
    struct Node {
        nt: NtId,
        level: usize,
        alt: usize,
        children: Vec<usize>,
    }

    let mut arena = vec![Node {
        nt: g.start(),
        level: 1,
        alt: usize::MAX,
        children: Vec::new(),
    }];
    let mut form = vec![Entry::Open(0)];
    let mut cursors = vec![0usize; g.nonterminal_count()];

    let snapshot = |form: &[Entry], arena: &[Node], geno: &DsgeGenotype, cursors: &[usize]| {
        let rendered: Vec<String> = form
            .iter()
            .map(|e| match e {
                Entry::Terminal(t) => g.terminal(*t).to_string(),
                Entry::Open(idx) => format!("<{}>", g.name(arena[*idx].nt)),
            })
            .collect();
        TraceStep {
            sentential_form: rendered.join(" "),
            remaining: geno
                .genes
                .iter()
                .zip(cursors)
                .map(|(gene, &used)| gene[used..].to_vec())
                .collect(),
        }
    };

    let mut steps = vec![snapshot(&form, &arena, geno, &cursors)];
    let mut scan_from = 0usize;
    while let Some(pos) = (scan_from..form.len()).find(|&i| matches!(form[i], Entry::Open(_))) {
        let Entry::Open(node_idx) = form[pos] else { unreachable!() };
        let (nt, level) = (arena[node_idx].nt, arena[node_idx].level);
        let remaining = max_depth - level;
        let feasible = g.feasible_alternatives(nt, remaining);
        let alt = dsge_choose(g, nt, feasible, &mut geno.genes, &mut cursors, rng);
        arena[node_idx].alt = alt;

        let mut rhs = Vec::new();
        for sym in g.alternatives(nt)[alt].symbols() {
            match sym {
                Symbol::Terminal(t) => rhs.push(Entry::Terminal(*t)),
                Symbol::NonTerminal(child_nt) => {
                    let child_idx = arena.len();
                    arena.push(Node {
                        nt: *child_nt,
                        level: level + 1,
                        alt: usize::MAX,
                        children: Vec::new(),
                    });
                    arena[node_idx].children.push(child_idx);
                    rhs.push(Entry::Open(child_idx));
                }
            }
        }
        form.splice(pos..=pos, rhs);
        steps.push(snapshot(&form, &arena, geno, &cursors));
        scan_from = pos;
    }

    for (gene, used) in geno.genes.iter_mut().zip(&cursors) {
        gene.truncate(*used);
    }

    fn reify(arena: &[Node], idx: usize) -> DerivationTree {
        DerivationTree::new(
            arena[idx].nt,
            arena[idx].alt,
            arena[idx].children.iter().map(|&c| reify(arena, c)).collect(),
        )
    }
    Ok((reify(&arena, 0), steps))
}

/// Reads back the gene lists that make `dsge_decode` reproduce `tree`
/// exactly under the same depth limit.
pub fn record_choices(
    tree: &DerivationTree,
    g: &Grammar,
    max_depth: usize,
) -> Result<DsgeGenotype, GenotypeError> {
    let mut genes = vec![Vec::new(); g.nonterminal_count()];
    let mut bad = None;
    tree.for_each_preorder(&mut |node, level| {
        if bad.is_some() {
            return;
        }
        let remaining = max_depth - level;
        let feasible = g.feasible_alternatives(node.nt(), remaining);
        match feasible.iter().position(|&a| a == node.alt()) {
            Some(pos) => genes[node.nt().index()].push(pos as u32),
            None => bad = Some(node.nt()),
        }
    });
    match bad {
        Some(nt) => Err(GenotypeError::Mismatch {
            detail: format!(
                "tree choice at <{}> does not fit within depth {}",
                g.name(nt),
                max_depth
            ),
        }),
        None => Ok(DsgeGenotype { genes }),
    }
}

/// Random valid genotype: grow a depth-bounded tree and record its choices,
/// so every initial individual decodes to exactly that tree.
pub fn dsge_init(
    g: &Grammar,
    max_depth: usize,
    rng: &mut impl Rng,
) -> Result<DsgeGenotype, GenotypeError> {
    let tree = super::tree::random_tree(g, max_depth, InitMethod::Grow, rng)?;
    record_choices(&tree, g, max_depth)
}

/// Gene-wise uniform crossover: each offspring takes every non-terminal's
/// whole gene list from the mask-selected parent.
pub fn dsge_crossover(
    a: &DsgeGenotype,
    b: &DsgeGenotype,
    rng: &mut impl Rng,
) -> (DsgeGenotype, DsgeGenotype) {
    let mask: Vec<bool> = (0..a.genes.len()).map(|_| rng.random::<bool>()).collect();
    dsge_crossover_masked(a, b, &mask)
}

pub(crate) fn dsge_crossover_masked(
    a: &DsgeGenotype,
    b: &DsgeGenotype,
    mask: &[bool],
) -> (DsgeGenotype, DsgeGenotype) {
    debug_assert_eq!(a.genes.len(), b.genes.len());
    let mut first = Vec::with_capacity(a.genes.len());
    let mut second = Vec::with_capacity(a.genes.len());
    for ((swap, x), y) in mask.iter().zip(&a.genes).zip(&b.genes) {
        if *swap {
            first.push(y.clone());
            second.push(x.clone());
        } else {
            first.push(x.clone());
            second.push(y.clone());
        }
    }
    (DsgeGenotype { genes: first }, DsgeGenotype { genes: second })
}

/// Re-randomizes each stored integer independently with probability `pm`,
/// drawing uniformly from the full alternative range of its non-terminal.
pub fn dsge_mutate(geno: &mut DsgeGenotype, g: &Grammar, pm: f64, rng: &mut impl Rng) {
    for (i, gene) in geno.genes.iter_mut().enumerate() {
        let bound = g.alternatives(NtId(i as u16)).len() as u32;
        for value in gene.iter_mut() {
            if rng.random::<f64>() < pm {
                *value = rng.random_range(0..bound);
            }
        }
    }
}
