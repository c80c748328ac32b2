//! Evolved individuals: a variant-specific genome plus the cached phenotype
//! and fitness the engine maintains.

use std::cmp::Ordering;

use crate::expr::Expr;
use crate::grammar::Grammar;

use super::dsge::DsgeGenotype;
use super::ge::GeGenotype;
use super::tree::DerivationTree;

/// Training RMSE, or the sentinel that orders after every finite value.
/// Invalid phenotypes always carry `Worst`.
#[derive(Copy, Clone, Debug)]
pub enum Fitness {
    Rmse(f64),
    Worst,
}

impl Fitness {
    pub fn rmse(&self) -> Option<f64> {
        match self {
            Fitness::Rmse(v) => Some(*v),
            Fitness::Worst => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Fitness::Rmse(_))
    }
}

impl PartialEq for Fitness {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Fitness {}

impl PartialOrd for Fitness {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fitness {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Fitness::Rmse(a), Fitness::Rmse(b)) => a.total_cmp(b),
            (Fitness::Rmse(_), Fitness::Worst) => Ordering::Less,
            (Fitness::Worst, Fitness::Rmse(_)) => Ordering::Greater,
            (Fitness::Worst, Fitness::Worst) => Ordering::Equal,
        }
    }
}

/// One of the three genotype representations.
#[derive(Clone, Debug)]
pub enum Genome {
    Ge(GeGenotype),
    Dsge(DsgeGenotype),
    Tree(DerivationTree),
}

impl Genome {
    pub fn variant_tag(&self) -> &'static str {
        match self {
            Genome::Ge(_) => "GE",
            Genome::Dsge(_) => "DSGE",
            Genome::Tree(_) => "CFG-GP",
        }
    }

    /// Genotype integers in a compact text form: codons for GE, per-gene
    /// lists for DSGE, preorder alternative choices for CFG-GP trees.
    pub fn integers_text(&self, g: &Grammar) -> String {
        let join = |values: &[u32]| {
            values
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            Genome::Ge(geno) => join(geno.codons()),
            Genome::Dsge(geno) => geno
                .genes()
                .iter()
                .zip(g.nonterminals())
                .map(|(gene, name)| format!("{}:[{}]", name, join(gene)))
                .collect::<Vec<_>>()
                .join(" "),
            Genome::Tree(tree) => {
                let alts: Vec<u32> = tree.choices().iter().map(|(_, a)| *a as u32).collect();
                join(&alts)
            }
        }
    }
}

/// A population member. `phenotype == None` means Invalid, which forces
/// `fitness == Worst`.
#[derive(Clone, Debug)]
pub struct Individual {
    pub genome: Genome,
    /// Seed of the private random stream used while decoding (DSGE repair);
    /// assigned at creation so evaluation stays pure and order-independent.
    pub decode_seed: u64,
    /// Creation counter within a run; the final tie-breaker.
    pub birth: u64,
    pub phenotype: Option<Expr>,
    pub fitness: Fitness,
    /// Phenotype node count; `usize::MAX` for Invalid individuals.
    pub nodes: usize,
}

impl Individual {
    pub fn new(genome: Genome, decode_seed: u64, birth: u64) -> Individual {
        Individual {
            genome,
            decode_seed,
            birth,
            phenotype: None,
            fitness: Fitness::Worst,
            nodes: usize::MAX,
        }
    }

    /// Lower RMSE wins; exact ties prefer fewer phenotype nodes, then the
    /// earlier-created individual.
    pub fn rank_key(&self) -> (Fitness, usize, u64) {
        (self.fitness, self.nodes, self.birth)
    }

    /// Line form for logs: variant, genotype integers, canonical phenotype,
    /// fitness.
    pub fn summary_line(&self, g: &Grammar) -> String {
        let phenotype = match &self.phenotype {
            Some(e) => e.to_text(),
            None => "invalid".to_string(),
        };
        let fitness = match self.fitness {
            Fitness::Rmse(v) => format!("{}", v),
            Fitness::Worst => "worst".to_string(),
        };
        format!(
            "{} | {} | {} | {}",
            self.genome.variant_tag(),
            self.genome.integers_text(g),
            phenotype,
            fitness
        )
    }
}
